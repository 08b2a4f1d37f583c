from pathlib import Path

import pytest

from ktas_cdss.backends import HttpBackend, ScriptedBackend
from ktas_cdss.config import ConfigError, RunConfig, load_config

from conftest import ROOT


def write_ini(tmp_path, body):
    p = tmp_path / "c.ini"
    p.write_text("[ktas_cdss]\n" + body)
    return p


def test_defaults():
    cfg = load_config(env={})
    assert cfg.backend is None and cfg.parallelism == 1 and cfg.tools_enabled
    assert cfg.temperature == 0 and cfg.max_tool_iterations == 3


def test_precedence_flags_over_env_over_file(tmp_path):
    ini = write_ini(tmp_path, "parallelism = 2\nmax_tokens = 100\ntemperature = 0.3\n")
    env = {"KTAS_CDSS_PARALLELISM": "3", "KTAS_CDSS_MAX_TOKENS": "200"}
    cfg = load_config(ini, {"parallelism": 4, "max_tokens": None}, env=env)
    assert cfg.parallelism == 4          # flag
    assert cfg.max_tokens == 200         # env
    assert cfg.temperature == 0.3        # file


def test_config_file_from_env(tmp_path):
    ini = write_ini(tmp_path, "tools_enabled = off\noutput_dir = out\n")
    cfg = load_config(env={"KTAS_CDSS_CONFIG": str(ini)})
    assert cfg.tools_enabled is False and cfg.output_dir == Path("out")


@pytest.mark.parametrize("body", ["parallelism = zero\n", "tools_enabled = maybe\n", "colour = red\n",
                                  "parallelism = 0\n", "backend = ftp:x\n", "backend = scripted:\n"])
def test_invalid_values(tmp_path, body):
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, body), env={})


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.ini", env={})


def test_backend_selection(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig().make_backend()
    assert isinstance(RunConfig(backend=f"scripted:{ROOT / 'fixtures/worked_case'}").make_backend(),
                      ScriptedBackend)
    http = RunConfig(backend="http:http://localhost:9/v1", model_id="m").make_backend()
    assert isinstance(http, HttpBackend) and http.base_url == "http://localhost:9/v1"


def test_tools_from_config():
    cfg = RunConfig(rxnorm_fixtures=ROOT / "fixtures/rxnorm",
                    interactions=str(ROOT / "fixtures/interactions.json"),
                    search_fixtures=ROOT / "fixtures/search")
    reg = cfg.make_tools()
    assert reg.names() == ("rxnorm_lookup", "rxnorm_interactions", "web_search")
    assert reg.call("rxnorm_lookup", {"name": "Morphine"})[0] == "ok"
    assert RunConfig().make_tools().names() == ("rxnorm_lookup", "rxnorm_interactions")


def test_example_config_parses():
    cfg = load_config(ROOT / "config/ktas_cdss.example.ini", env={})
    assert cfg.backend_kind == "http" and cfg.parallelism == 4
