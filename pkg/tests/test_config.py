import json
import math

import pytest

from hlg.config import RunConfig, config_from_dict, load_config


def test_defaults():
    cfg = load_config(None)
    assert cfg == RunConfig()
    assert cfg.ori_threshold == pytest.approx(math.radians(15))


def test_nested_override_and_tuples(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 3, "refine": {"max_iters": 7}, "synth": {"n_floor": [2, 3]}}))
    cfg = load_config(path)
    assert cfg.seed == 3 and cfg.refine.max_iters == 7
    assert cfg.synth.n_floor == (2, 3)
    assert cfg.tlo == RunConfig().tlo


def test_round_trip_through_json():
    cfg = config_from_dict({"seed": 9, "ori_threshold_deg": 10.0})
    assert config_from_dict(json.loads(cfg.to_json())) == cfg


@pytest.mark.parametrize("data", [{"sed": 1}, {"refine": {"steps": 2}}, {"refine": 3}])
def test_rejects_unknown_or_malformed(data):
    with pytest.raises(ValueError):
        config_from_dict(data)
