import json

import pytest

from vesselstate.errors import ConfigError
from vesselstate.scenario import (
    Scenario,
    default_scenario,
    dump_scenario,
    load_scenario,
    load_scenario_dict,
)
from vesselstate.sensors import SensorId


def test_default_loads():
    sc = default_scenario()
    assert sc.duration == 60.0 and sc.substeps == 10 and sc.n_ticks == 3000
    assert sc.sensor_ids() == [SensorId.GPS, SensorId.IMU, SensorId.UVDAR, SensorId.APRILTAG]
    assert sc.waves.layout().dim == 12 + 3 * 12


def test_packaged_file_is_canonical():
    from importlib import resources

    sc = default_scenario()
    text = resources.files("vesselstate").joinpath("data/default_scenario.json").read_text()
    assert dump_scenario(sc) == text
    # apart from the sea state and the comment, the packaged file spells out the model defaults
    assert sc.model_copy(update={"comment": "", "waves": Scenario().waves}) == Scenario()


def test_dump_round_trip(tmp_path):
    sc = default_scenario().with_updates(seed=17, link__drop_prob=0.25)
    path = tmp_path / "s.json"
    path.write_text(dump_scenario(sc))
    back = load_scenario(path)
    assert back == sc
    assert dump_scenario(back) == dump_scenario(sc)


def test_dump_sorted_keys():
    text = dump_scenario(default_scenario())
    keys = list(json.loads(text))
    assert keys == sorted(keys)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        load_scenario_dict({"duration": 10.0, "speed": 3})
    with pytest.raises(ConfigError):
        load_scenario_dict({"link": {"jitter": 0.1}})


@pytest.mark.parametrize("data", [
    {"truth_dt": 0.003, "filter_dt": 0.02},
    {"duration": 0.01},
    {"prediction": {"horizon": 0.001}},
    {"link": {"drop_prob": 1.0}},
    {"sensors_used": ["GPS", "SONAR"]},
    {"sensors": {"gps": {"rate": 5.0, "stds": [0.7, 0.7]}}},
    {"sensors": {"imu": {"rate": 20.0, "stds": [0.1, 0.1, 0.1, 0.1, 0.1, 0.0]}}},
    {"process_noise": {"twist_std": [0.1] * 5}},
    {"filter": {"linear_r_scale": {"SONAR": 2.0}}},
    {"seed": -1},
])
def test_invalid_rejected(data):
    with pytest.raises(ConfigError):
        load_scenario_dict(data)


def test_frozen():
    sc = default_scenario()
    with pytest.raises(Exception):
        sc.duration = 3.0


def test_with_updates():
    sc = default_scenario()
    new = sc.with_updates(duration=5.0, uav__offset_amp=0.0, sensors_used=["gps", "imu", "gps"])
    assert new.duration == 5.0 and new.uav.offset_amp == 0.0
    assert new.sensors_used == ["GPS", "IMU"]
    assert sc.duration == 60.0  # original untouched
    with pytest.raises(ConfigError):
        sc.with_updates(filter_dt=0.0)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_scenario(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_scenario(bad)


def test_specs_and_link():
    sc = default_scenario().with_updates(link__latency=0.5)
    specs = sc.sensors.specs()
    assert specs[SensorId.GPS].stds == (0.7, 0.7, 0.7)
    assert specs[SensorId.UVDAR].max_range == 15.0
    assert sc.link.to_spec().latency == 0.5


def test_vessel_overrides():
    p = default_scenario().with_updates(vessel__mass=30.0).vessel.to_params()
    assert p.mass == 30.0
