"""Engine configuration loading and validation."""

import pytest
import yaml

from eventgraph.config import (
    EngineConfig,
    Thresholds,
    config_from_dict,
    default_profile_text,
    load_config,
)
from eventgraph.errors import ConfigError


class TestDefaults:
    def test_default_thresholds_match_documented_values(self):
        t = Thresholds()
        assert t.action_confidence_min == 0.75
        assert t.actions_per_frame_top_k == 2
        assert t.vote_window_halfwidth == 5
        assert t.vote_min_count == 5
        assert t.bridge_max_gap_frames == 10
        assert t.bridge_iou_min == 0.6
        assert t.reid_similarity_threshold == 0.3
        assert t.bins == (20, 10, 5)
        assert t.object_iou_min == 0.1
        assert t.depth_max_relative == 0.25
        assert t.event_unify_max_gap_fraction == 0.10
        assert t.object_presence_min_fraction == 0.10
        assert t.box_enlarge_fraction == 0.10
        assert t.spatial_ratio_threshold == 0.5
        assert t.spatial_frame_fraction == 0.75
        assert t.same_time_tolerance_fraction == 0.05
        assert t.next_max_gap_fraction == 0.10

    def test_checked_in_profile_equals_defaults(self):
        raw = yaml.safe_load(default_profile_text())
        config = config_from_dict(raw)
        assert config.thresholds == Thresholds()

    def test_no_file_gives_defaults(self):
        assert load_config(None) == EngineConfig()


class TestStrictness:
    def full_thresholds(self):
        return yaml.safe_load(default_profile_text())["thresholds"]

    def test_missing_key_named(self):
        raw = self.full_thresholds()
        raw.pop("vote_min_count")
        with pytest.raises(ConfigError) as err:
            config_from_dict({"thresholds": raw})
        assert err.value.key == "vote_min_count"

    def test_unknown_key_named(self):
        raw = self.full_thresholds()
        raw["votes_min_count"] = 5
        with pytest.raises(ConfigError) as err:
            config_from_dict({"thresholds": raw})
        assert err.value.key == "votes_min_count"

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"thresholds": self.full_thresholds(),
                              "extra": {}})

    def test_out_of_range_rejected(self):
        raw = self.full_thresholds()
        raw["action_confidence_min"] = 1.5
        with pytest.raises(ConfigError):
            config_from_dict({"thresholds": raw})

    def test_endpoints_parsed(self):
        config = config_from_dict({
            "thresholds": self.full_thresholds(),
            "refine_endpoint": {"base_url": "http://x", "model_name": "m"},
            "judge_endpoints": [
                {"base_url": "http://a", "model_name": "j1"},
                {"base_url": "http://b", "model_name": "j2"},
            ],
        })
        assert config.refine_endpoint.model_name == "m"
        assert [j.model_name for j in config.judge_endpoints] == ["j1", "j2"]
