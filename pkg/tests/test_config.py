import pytest

from orchsim.config import (ConfigError, config_from_env, load_config,
                            parse_config, resolve_preferences)
from orchsim.ranker import PreferenceList
from orchsim.resources import ResourceVector

FULL = """\
# engine configuration
w_sla = 2.0
w_avail = 1.0
w_lat = 0.5
w_data = 3.0

prefs.ada = [site-b, site-a]
prefs.research = [site-c]

half_life_s = 1800
backfill = false
weights.ada = 2.0
weights.ben = 0.5
quota.research = 8,16384,200

t_idle_s = 60
boot_delay_s = 10
min_nodes = 1
max_nodes = 4
policy_file = extra-permits.txt
"""


def test_parse_full_config():
    config = parse_config(FULL)
    assert config.ranker.w_sla == 2.0
    assert config.ranker.w_data == 3.0
    assert config.preferences["ada"] == PreferenceList(("site-b", "site-a"))
    assert config.preferences["research"] == PreferenceList(("site-c",))
    assert config.half_life_s == 1800
    assert config.backfill is False
    assert config.weights == {"ada": 2.0, "ben": 0.5}
    assert config.quotas == {"research": ResourceVector(8, 16384, 200)}
    assert config.elasticity.t_idle_s == 60
    assert config.elasticity.boot_delay_s == 10
    assert config.elasticity.min_nodes == 1
    assert config.elasticity.max_nodes == 4
    assert config.policy_file == "extra-permits.txt"


def test_defaults_when_empty():
    config = parse_config("")
    assert config.ranker.w_sla == 1.0
    assert config.backfill is True
    assert config.half_life_s == 3600.0
    assert config.quotas == {}
    assert config.policy_file is None


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config("w_price = 3.0\n")


def test_malformed_lines_rejected():
    with pytest.raises(ConfigError):
        parse_config("w_sla\n")
    with pytest.raises(ConfigError):
        parse_config("quota.g = 1,2\n")
    with pytest.raises(ConfigError):
        parse_config("backfill = maybe\n")
    with pytest.raises(ConfigError):
        parse_config("t_idle_s = soon\n")


def test_resolve_preferences_user_over_group():
    prefs = {
        "ada": PreferenceList(("a",)),
        "research": PreferenceList(("b",)),
        "astro": PreferenceList(("c",)),
    }
    assert resolve_preferences(prefs, "ada", ["research"]).providers == ("a",)
    assert resolve_preferences(prefs, "eve", ["research"]).providers == ("b",)
    # groups are tried in name order
    assert resolve_preferences(prefs, "eve", ["research", "astro"]).providers == ("c",)
    assert resolve_preferences(prefs, "eve", ["nobody"]) is None


def test_config_from_env(tmp_path, monkeypatch):
    path = tmp_path / "engine.cfg"
    path.write_text("w_sla = 5.0\n")
    monkeypatch.setenv("ORCH_CONFIG", str(path))
    assert config_from_env().ranker.w_sla == 5.0
    monkeypatch.delenv("ORCH_CONFIG")
    assert config_from_env().ranker.w_sla == 1.0
    explicit = tmp_path / "other.cfg"
    explicit.write_text("w_sla = 7.0\n")
    assert config_from_env(str(explicit)).ranker.w_sla == 7.0


def test_load_config_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/engine.cfg")
