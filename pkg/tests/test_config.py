"""Tests for run configuration loading and validation."""

from fractions import Fraction

import pytest

from app.core.config import Settings, get_settings
from app.core.errors import ConfigError
from app.core.logging import format_params
from app.schemas.run_config import RunConfig, load_run_config, parse_overrides


def test_defaults():
    """Test the defaults without a file."""
    config = load_run_config()
    assert config.frequency == "golden"
    assert config.lam == 4.0
    assert config.scales == [8, 10]
    assert config.build_theta().completely_resonant
    assert config.build_frequency().q(8) == 34


def test_file_and_overrides(run_config_file):
    """Test that overrides win over the file."""
    path = run_config_file("frequency=quotients\nquotients=1,1,50\nlambda=6\nscales=10,8,8\n")
    config = load_run_config(path, ["lambda=3.5"])
    assert config.lam == 3.5
    assert config.quotients == [1, 1, 50]
    assert config.scales == [8, 10]
    assert config.build_frequency().q(3) == 101


def test_theta_forms():
    """Test exact and real phase settings."""
    exact = RunConfig(theta_m=3, theta_offset="1")
    assert exact.build_theta().m == 3
    assert exact.build_theta().offset == Fraction(1)

    half = RunConfig(theta_offset="1/2")
    assert not half.build_theta().completely_resonant

    real = RunConfig(theta="0.123")
    assert not real.build_theta().is_exact


def test_invalid_values_raise_config_error(run_config_file):
    """Test that bad values surface as ConfigError with the offending key."""
    with pytest.raises(ConfigError) as exc:
        load_run_config(None, ["lambda=abc"])
    assert "lambda" in exc.value.message

    with pytest.raises(ConfigError):
        load_run_config(None, ["no_such_key=1"])
    with pytest.raises(ConfigError):
        load_run_config(None, ["frequency=real"])
    with pytest.raises(ConfigError):
        load_run_config(None, ["frequency=quotients"])
    with pytest.raises(ConfigError):
        load_run_config(None, ["epsilon=0.2"])
    with pytest.raises(ConfigError):
        load_run_config(None, ["energy_min=1", "energy_max=0"])
    with pytest.raises(ConfigError):
        load_run_config(None, ["theta_offset=abc"])


def test_missing_file():
    """Test that a missing config file is a ConfigError with exit code 2."""
    with pytest.raises(ConfigError) as exc:
        load_run_config("/nonexistent/run.env")
    assert exc.value.exit_code == 2


def test_parse_overrides():
    """Test key=value parsing."""
    assert parse_overrides(["a=1", " b = x=y "]) == {"a": "1", "b": "x=y"}
    with pytest.raises(ConfigError):
        parse_overrides(["novalue"])


def test_config_hash_tracks_values():
    """Test that the hash is stable and changes with any value."""
    a = RunConfig()
    b = RunConfig()
    c = RunConfig(N=500)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 64


def test_energy_grid_and_workers():
    """Test derived values."""
    config = RunConfig(energy_min=-1, energy_max=1, energy_steps=5, workers=2)
    assert config.energies().tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert config.pool_size == 2
    assert RunConfig().pool_size == get_settings().workers


def test_settings_env_prefix(monkeypatch):
    """Test that lab settings read AMO_-prefixed variables."""
    monkeypatch.setenv("AMO_RATE_CAP", "25")
    assert Settings().rate_cap == 25.0


def test_format_params_for_log_lines():
    """Test that run-unit parameters render in key order."""
    assert format_params({"n": 8, "energy": 0.5}) == "energy=0.5, n=8"
