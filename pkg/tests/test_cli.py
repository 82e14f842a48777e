import json
import pytest
from dsmin.core.errors import ConfigError
from dsmin.main import EXIT_ERROR, EXIT_OK, apply_override, cmd_verify, load_config, main, parse_value
from dsmin.services.lovasz import BasePoint, greedy_subgradient


def write_config(tmp_path, **overrides):
    data = {
        "name": "cli",
        "instance": {"kind": "tiny_a"},
        "methods": ["dca"],
        "rho_grid": [1.0],
        "seeds": [42],
        "x0": [1.0, 0.5, 0.0],
    }
    data.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


def test_parse_value():
    """Test override value parsing"""
    assert parse_value("3") == 3
    assert parse_value("0.5") == 0.5
    assert parse_value("true") is True
    assert parse_value("dca,dcar") == ["dca", "dcar"]
    assert parse_value("0,1.5") == [0, 1.5]
    assert parse_value("speech") == "speech"


def test_apply_override():
    """Test dotted keys and list promotion"""
    data = {"methods": ["dca"], "solver": {"rho": 0.0}}
    apply_override(data, "solver.rho=2.5")
    apply_override(data, "methods=cdcar")
    apply_override(data, "instance.kind=tiny_c")
    
    assert data["solver"]["rho"] == 2.5
    assert data["methods"] == ["cdcar"]
    assert data["instance"] == {"kind": "tiny_c"}
    
    with pytest.raises(ConfigError):
        apply_override(data, "no-equals-sign")
    with pytest.raises(ConfigError):
        apply_override(data, "methods.name=x")


def test_load_config(tmp_path):
    """Test file parsing, overrides and validation errors"""
    path = write_config(tmp_path)
    cfg = load_config(str(path), ["solver.localmin_restart=true", "seeds=1,2"])
    
    assert cfg.name == "cli"
    assert cfg.solver.localmin_restart is True
    assert cfg.seeds == [1, 2]
    
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"), [])
    with pytest.raises(ConfigError):
        load_config(str(path), ["solver.rh0=1"])
    
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_config(str(bad), [])


def test_run_and_report(tmp_path, capsys):
    """Test run followed by report on the written traces"""
    path = write_config(tmp_path)
    out = tmp_path / "out"
    
    code = main(["run", "--config", str(path), "--set", "solver.localmin_restart=true", "--out", str(out)])
    assert code == EXIT_OK
    assert "dca@1" in capsys.readouterr().out
    
    summary_path = out / "cli" / "summary.json"
    before = summary_path.read_text()
    assert main(["report", str(out / "cli")]) == EXIT_OK
    assert summary_path.read_text() == before


def test_run_errors(tmp_path):
    """Test exit codes for bad invocations"""
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_ERROR
    assert main(["report", str(tmp_path)]) == EXIT_ERROR
    assert main(["no-such-command"]) == EXIT_ERROR
    assert main(["run", "--config", str(write_config(tmp_path)), "--set", "methods=newton",
                 "--out", str(tmp_path)]) == EXIT_ERROR


def test_verify_fast(capsys):
    """Test that the fast invariant suite passes"""
    assert main(["verify", "--level", "fast", "--seed", "3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out
    for name in ("descent", "rate_bound", "fw_gap_bound", "subsup_is_dca", "cdcar_strong_local_min",
                 "lipschitz", "value_bounds", "entropy_row_order"):
        assert f"ok   {name} (" in out


def test_verify_detects_faulty_greedy(capsys):
    """Test that a greedy rule leaving the base polytope is caught"""
    def faulty(F, sigma):
        return BasePoint(y=1.5 * greedy_subgradient(F, sigma).y, source=sigma)
    
    assert cmd_verify("fast", seed=0, greedy=faulty) == EXIT_ERROR
    out = capsys.readouterr().out
    assert "FAIL" in out
    assert "witness" in out


def test_log_level_option(tmp_path):
    """Test that an unknown log level is a usage error"""
    assert main(["--log-level", "chatty", "report", str(tmp_path)]) == EXIT_ERROR
    assert main(["--log-level", "debug", "verify", "--level", "fast"]) == EXIT_OK
