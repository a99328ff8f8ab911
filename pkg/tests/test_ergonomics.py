import math

import numpy as np
import pandas as pd
import pytest

from cyclescore.ergonomics import (
    ERROR_COLUMNS, ErgonomicsConfig, InterfacePoints, RiderProfile, TargetRanges, UseCase,
    ergonomic_errors, ergonomic_frame, interface_frame, interface_points, joint_angles,
)
from cyclescore.errors import DegenerateGeometryError

LEGS_450 = RiderProfile(450.0, 450.0, 620.0, 560.0, 260.0, 380.0)


def _points(saddle_height):
    return InterfacePoints(
        saddle=np.array([0.0, saddle_height]),
        grip=np.array([500.0, 900.0]),
        pedal_far=np.array([0.0, 0.0]),
        pedal_near=np.array([0.0, 300.0]),
    )


def test_straight_leg_is_180_degrees():
    angles = joint_angles(_points(900.0), LEGS_450)
    assert angles.knee == pytest.approx(180.0)
    assert not angles.incompatible


def test_law_of_cosines_right_angle():
    angles = joint_angles(_points(450.0 * math.sqrt(2)), LEGS_450)
    assert angles.knee == pytest.approx(90.0, abs=0.01)


def test_incompatible_rider_gets_penalty_on_every_joint():
    short_legs = RiderProfile(100.0, 100.0, 620.0, 560.0, 260.0, 380.0)
    angles = joint_angles(_points(900.0), short_legs)
    assert angles.incompatible
    assert angles.deficit_mm == pytest.approx(700.0)
    errors = ergonomic_errors(angles.as_tuple(), True, UseCase.ROAD, deficit_mm=angles.deficit_mm)
    assert all(e >= 100.0 for e in errors)

    batch = ergonomic_frame(_points(900.0), short_legs.to_array(), [UseCase.MOUNTAIN])
    assert (batch[list(ERROR_COLUMNS)].to_numpy() >= 100.0).all()


def test_errors_are_distance_to_target_range():
    assert ergonomic_errors((145.0, 60.0, 90.0), False, UseCase.ROAD) == (0.0, 0.0, 0.0)
    assert ergonomic_errors((130.0, 100.0, 70.0), False, UseCase.ROAD) == (10.0, 10.0, 10.0)
    # mountain ranges are wider than road ones
    assert ergonomic_errors((137.0, 60.0, 90.0), False, UseCase.MOUNTAIN)[0] == 0.0


def test_road_bike_fits_reference_rider(road_bike, rider):
    angles = joint_angles(interface_points(road_bike), rider)
    assert not angles.incompatible
    assert angles.knee == pytest.approx(143.59, abs=0.05)
    assert 0.0 < angles.hip < 180.0
    assert 0.0 < angles.arm < 180.0


def test_saddle_follows_seat_angle(road_bike):
    points = interface_points(road_bike)
    sa = math.radians(73.5)
    assert points.saddle[1] == pytest.approx(700.0)
    assert points.saddle[0] == pytest.approx(-700.0 / math.tan(sa))
    assert np.linalg.norm(points.pedal_far) == pytest.approx(172.5)
    assert points.pedal_near == pytest.approx(-points.pedal_far)


def test_grip_ignores_head_tube_upper_extension(road_bike):
    base = interface_points(road_bike)
    longer = interface_points({**dict(road_bike), "Head tube upper extension2": 60.0})
    assert longer.grip == pytest.approx(base.grip)
    taller = interface_points({**dict(road_bike), "Stack": 600.0})
    assert taller.grip[1] == pytest.approx(base.grip[1] + 35.0)


def test_degenerate_inputs_raise(road_bike):
    with pytest.raises(DegenerateGeometryError):
        interface_frame(pd.DataFrame({"Seat angle": [0.0], "Saddle height": [700.0]}))
    with pytest.raises(DegenerateGeometryError):
        interface_points(road_bike.updated({"Stem kind": "7"}))


def test_rider_profile_validation():
    with pytest.raises(ValueError):
        RiderProfile(-1.0, 450.0, 620.0, 560.0, 260.0, 380.0)
    assert RiderProfile.from_dict(LEGS_450.to_dict()) == LEGS_450
    with pytest.raises(ValueError):
        TargetRanges((150.0, 140.0), (45.0, 90.0), (80.0, 100.0))


def test_config_section_is_read(config):
    ergonomics = ErgonomicsConfig.from_config(config)
    assert ergonomics.targets[UseCase.ROAD].knee == (140.0, 150.0)
    assert ergonomics.incompatibility_penalty_deg == 100.0
    assert ergonomics.crank_length_mm == 172.5
    assert UseCase.COMMUTING.label == "Commuting"
