import sys
from pathlib import Path

import pytest

# Add project root to Python path for all tests
project_root = Path(__file__).parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run desk-scale benchmark reproductions")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def schema():
    from cyclescore.design_space import load_schema
    return load_schema()


@pytest.fixture(scope="session")
def config():
    from cyclescore.config import Settings
    return Settings.load_config()


@pytest.fixture(scope="session")
def bundle(schema, config):
    from cyclescore.evaluation import EvaluatorBundle
    return EvaluatorBundle.default(schema, config)


# A plausible steel road bike; every geometric check passes with margin.
ROAD_BIKE = {
    "CS textfield": 420.0, "BB textfield": 70.0, "Stack": 565.0, "Head angle": 73.0,
    "Head tube length textfield": 150.0, "Seat stay junction0": 40.0,
    "Seat tube length": 540.0, "Seat angle": 73.5, "DT Length": 640.0, "FORK0R": 45.0,
    "ttd": 32.0, "csd": 18.0, "ssd": 14.0, "dtd": 38.0,
    "Head tube upper extension2": 25.0, "Seat tube extension2": 30.0,
    "Head tube lower extension2": 30.0,
    "SEATSTAYbrdgdia1": 10.0, "CHAINSTAYbrdgdia1": 10.0,
    "SBLADEW front": 20.0, "SBLADEW rear": 20.0,
    "Wall thickness Top tube": 1.0, "Wall thickness Down tube": 1.0,
    "Wall thickness Seat tube": 1.0, "Wall thickness Head tube": 1.2,
    "Wall thickness Chain stay": 1.0, "Wall thickness Seat stay": 0.8,
    "Wall thickness Bottom Bracket": 2.0,
    "Wheel diameter front": 622.0, "Wheel diameter rear": 622.0,
    "Saddle height": 700.0, "Seatpost LENGTH": 300.0,
    "Down tube diameter": 38.0, "Seat tube diameter": 31.8, "Head tube diameter": 40.0,
    "FIRST color R_RGB": 200.0, "FIRST color G_RGB": 30.0, "FIRST color B_RGB": 30.0,
    "MATERIAL": "STEEL", "Handlebar style": "0", "Stem kind": "0",
    "Display AEROBARS": False, "Display RACK": False,
    "Front Fender include": False, "Rear Fender include": False,
}


@pytest.fixture
def road_bike(schema):
    from cyclescore.design_space import Design, sample_uniform
    values = dict(sample_uniform(schema, 0))
    values.update(ROAD_BIKE)
    return Design(values)


@pytest.fixture
def rider():
    from cyclescore.ergonomics import RiderProfile
    return RiderProfile(450.0, 500.0, 620.0, 560.0, 260.0, 380.0)


@pytest.fixture
def condition(schema, rider):
    from cyclescore.conditions import Condition
    from cyclescore.design_space import sample_frame
    from cyclescore.ergonomics import UseCase
    from cyclescore.performance_proxies import Embedding, LinearEmbedder
    target = LinearEmbedder(schema).embed_frame(sample_frame(schema, 1, 3))[0]
    return Condition(rider, UseCase.ROAD, Embedding(target), "A sleek red road bike")
