import math

import numpy as np
import pandas as pd
import pytest

from cyclescore.design_space import sample_frame
from cyclescore.geometry_constraints import (
    FRAME_VALIDITY, GEOMETRIC_CHECKS, ConstraintValue, FrameClosureProxy, GeometryConfig,
    frame_points, frame_validity, geometric_checks, geometric_frame,
)


def _margins(design):
    return {c.name: c.value for c in geometric_checks(design)}


def test_road_bike_passes_every_check(road_bike):
    checks = geometric_checks(road_bike)
    assert [c.name for c in checks] == list(GEOMETRIC_CHECKS)
    assert all(c.satisfied for c in checks)
    assert frame_validity(road_bike, FrameClosureProxy()).satisfied


def test_frame_points_match_hand_geometry(road_bike):
    points = frame_points(pd.DataFrame([dict(road_bike)]))
    # rear axle sits behind the BB on the chain stay, raised by the BB drop
    assert points.rear_axle[0, 0] == pytest.approx(-math.sqrt(420.0 ** 2 - 70.0 ** 2))
    assert points.rear_axle[0, 1] == pytest.approx(70.0)
    assert points.ground_y[0] == pytest.approx(70.0 - 311.0)
    # both wheels touch the same ground line
    assert points.front_axle[0, 1] - 311.0 == pytest.approx(points.ground_y[0])
    # down tube really is DT Length long
    assert np.linalg.norm(points.down_tube_junction[0]) == pytest.approx(640.0)
    assert points.head_top[0, 1] == pytest.approx(565.0)


@pytest.mark.parametrize("changes, check", [
    ({"Seat tube length": 640.0, "Saddle height": 550.0}, "Saddle height too small"),
    ({"Seatpost LENGTH": 100.0}, "Seat post too short"),
    ({"Head tube lower extension2": 120.0, "Head tube length textfield": 130.0},
     "Head tube lower extension too great"),
    ({"FIRST color G_RGB": 300.0}, "RGB value should be less than 255"),
    ({"SBLADEW rear": -2.0}, "Certain parameters must be positive"),
    ({"DT Length": 500.0, "Stack": 700.0}, "Down tube must reach head tube"),
    ({"BB textfield": 100.0, "Wheel diameter rear": 400.0},
     "The crank shouldn't hit the ground when it is in its lower position"),
    ({"CS textfield": 360.0, "Wheel diameter rear": 760.0},
     "Chain stay should be greater than wheel radius"),
])
def test_single_changes_break_their_check(road_bike, changes, check):
    margins = _margins(road_bike.updated(changes))
    assert margins[check] > 0


def test_margins_are_in_source_units(road_bike):
    margins = _margins(road_bike.updated({"FIRST color R_RGB": 265.0}))
    assert margins["RGB value should be less than 255"] == pytest.approx(10.0)
    seat_top = 540.0 * math.sin(math.radians(73.5))
    assert _margins(road_bike)["Saddle height too small"] == pytest.approx(seat_top - 700.0)


def test_pedal_clearance_uses_toe_allowance(road_bike):
    frame = pd.DataFrame([dict(road_bike)])
    name = "The pedal shouldn't intersect the front wheel"
    base = geometric_frame(frame)[name].iloc[0]
    padded = geometric_frame(frame, GeometryConfig(toe_allowance_mm=25.0))[name].iloc[0]
    assert padded == pytest.approx(base + 25.0)


def test_batch_matches_single_design(schema):
    frame = sample_frame(schema, 40, seed=4)
    batch = geometric_frame(frame)
    row = frame.iloc[7].to_dict()
    single = [c.value for c in geometric_checks(row)]
    assert batch.iloc[7].to_numpy() == pytest.approx(np.array(single))


def test_constraint_value_non_finite_is_violated():
    value = ConstraintValue.of("x", float("nan"))
    assert value.value == float("inf")
    assert not value.satisfied
    assert ConstraintValue.of("x", 0.0).satisfied


def test_frame_closure_proxy(road_bike):
    proxy = FrameClosureProxy()
    assert proxy.substitute
    # head tube segment between the extensions is only 10 mm
    short = road_bike.updated({"Head tube length textfield": 80.0,
                               "Head tube upper extension2": 40.0,
                               "Head tube lower extension2": 30.0})
    assert frame_validity(short, proxy).value == pytest.approx(10.0)
    lengths = {"a": np.array([30.0, 5.0]), "b": np.array([50.0, 50.0])}
    assert FrameClosureProxy.margin_from_lengths(lengths, 20.0).tolist() == [-10.0, 15.0]


def test_failing_classifier_is_reported_violated(road_bike):
    class Broken:
        def classify(self, frame):
            raise RuntimeError("model file missing")

    value = frame_validity(road_bike, Broken())
    assert value.name == FRAME_VALIDITY
    assert value.value == float("inf")
    assert "model file missing" in value.diagnostic


def test_uniform_designs_exercise_every_check(schema):
    margins = geometric_frame(sample_frame(schema, 1000, seed=0))
    flagged = (margins > 0).sum()
    assert flagged.index.tolist() == list(GEOMETRIC_CHECKS)
    assert (flagged > 0).all(), flagged[flagged == 0].index.tolist()
