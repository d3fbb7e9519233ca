import json
import os
import tempfile
from pathlib import Path
from unittest.mock import patch

import pytest

from core.config import (
    config_digest,
    default_log_level,
    default_output_root,
    load_config,
    parse_config,
    resolved_config,
)
from core.errors import ConfigError

MINIMAL = {"system": {"lifetime_ns": 0.58, "s": 0.1}}


def _write(content) -> str:
    with tempfile.NamedTemporaryFile(mode="w", suffix=".json", delete=False) as f:
        f.write(content if isinstance(content, str) else json.dumps(content))
        f.flush()
        return f.name


class TestLoadConfig:
    def test_minimal_config_fills_defaults(self):
        path = _write(MINIMAL)
        try:
            config = load_config(path)
            assert config.system.gamma == pytest.approx(1 / 0.58)
            assert config.system.s == pytest.approx(0.1)
            assert config.instrument is None
            assert config.output.seed == 20160101
            assert config.sweep.s_grid.num == 400
        finally:
            os.unlink(path)

    def test_power_alias(self):
        path = _write({"system": {"gamma": 1.0, "power": 0.36}})
        try:
            assert load_config(path).system.s == pytest.approx(0.36)
        finally:
            os.unlink(path)

    def test_missing_file_raises(self):
        with pytest.raises(ConfigError, match="Missing configuration file"):
            load_config("/nonexistent/path/config.json")

    def test_invalid_json_reports_line(self):
        path = _write('{\n  "system": {\n    "s": 0.1,\n  }\n}')
        try:
            with pytest.raises(ConfigError, match="line 4") as exc_info:
                load_config(path)
            assert exc_info.value.exit_code == 2
        finally:
            os.unlink(path)

    def test_top_level_must_be_object(self):
        path = _write([1, 2, 3])
        try:
            with pytest.raises(ConfigError, match="JSON object"):
                load_config(path)
        finally:
            os.unlink(path)


class TestParseConfig:
    def test_negative_power_names_the_field(self):
        with pytest.raises(ConfigError) as exc_info:
            parse_config({"system": {"s": -1}})
        assert any(p.startswith("system.s") for p in exc_info.value.problems)

    def test_unknown_key_suggests_spelling(self):
        with pytest.raises(ConfigError) as exc_info:
            parse_config({"system": {"powr": 0.1}})
        assert "did you mean 'power'?" in str(exc_info.value)

    def test_reports_every_problem(self):
        with pytest.raises(ConfigError) as exc_info:
            parse_config({"system": {"s": -1, "dephasing": -0.5}, "campaign": {"n_bins": 0}})
        assert len(exc_info.value.problems) == 3

    def test_missing_system_block(self):
        with pytest.raises(ConfigError, match="system"):
            parse_config({})

    def test_rabi_and_power_must_agree(self):
        with pytest.raises(ConfigError):
            parse_config({"system": {"gamma": 1.0, "s": 2.0, "rabi": 0.5}})


class TestResolvedConfig:
    def test_digest_is_stable(self):
        first = parse_config(MINIMAL)
        second = parse_config(json.loads(json.dumps(MINIMAL)))
        assert config_digest(first) == config_digest(second)
        assert len(config_digest(first)) == 64

    def test_digest_tracks_changes(self):
        changed = {"system": {"lifetime_ns": 0.58, "s": 0.2}}
        assert config_digest(parse_config(MINIMAL)) != config_digest(parse_config(changed))

    def test_resolved_config_is_json_ready(self):
        resolved = resolved_config(parse_config(MINIMAL))
        assert json.loads(json.dumps(resolved))["system"]["lifetime_ns"] == 0.58
        assert resolved["lo"]["fringe_visibility_target"] == 0.738


class TestEnvironmentDefaults:
    def test_output_root_default(self):
        with patch.dict(os.environ, {}, clear=True):
            assert default_output_root() == Path("results")

    def test_output_root_from_env(self):
        with patch.dict(os.environ, {"SQUEEZESIM_OUTPUT_ROOT": "/tmp/runs"}):
            assert default_output_root() == Path("/tmp/runs")

    def test_log_level_is_upper_cased(self):
        with patch.dict(os.environ, {"SQUEEZESIM_LOG_LEVEL": "debug"}):
            assert default_log_level() == "DEBUG"
