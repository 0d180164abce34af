import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pandas as pd
import pytest

from welfare_rank.cli import main
from welfare_rank.config import parse_config
from welfare_rank.errors import UsageError
from welfare_rank.pipeline import STAGES, run_pipeline

TINY = """\
seed: 5
market:
  n_seekers: 400
  n_vacancies: 150
  pool_size: 60
experiment:
  arms: [u_rec, vadore0, vadore2]
scorer:
  epochs: 3
estimation:
  bootstrap: 10
welfare:
  n_splits: 2
  bootstrap: 50
"""


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "tiny.yaml"
    p.write_text(TINY)
    return p


def _hashes(root: Path):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def full_run(tiny_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["all", "--config", str(tiny_config), "--out", str(out)]) == 0
    return out


def test_all_stages_write_their_artifacts(full_run):
    for rel in ("market/seekers.csv", "train/scorer.txt", "rank/scores.csv", "experiment/log.csv",
                "estimate/fits.json", "welfare/summary.csv", "report/report.json", "report/arm_comparison.csv",
                "figures/m_curves.csv", "figures/gamma_surface.csv", "config.resolved.yaml", "manifest.json"):
        assert (full_run / rel).exists(), rel
    manifest = json.loads((full_run / "manifest.json").read_text())["artifacts"]
    assert manifest["experiment/log.csv"]["stage"] == "experiment"
    summary = pd.read_csv(full_run / "welfare/summary.csv")
    assert {"u_rec", "vadore0", "vadore2", "gamma_opt"} <= set(summary["arm"])


def test_artifacts_pass_validation(full_run):
    for rel, schema in (("experiment/log.csv", "log"), ("experiment/pool.csv", "pool"), ("rank/scores.csv", "scores"),
                        ("experiment/assignment.csv", "assignment"), ("report/arm_comparison.csv", "arm-comparison"),
                        ("train/history.csv", "history")):
        assert main(["validate", str(full_run / rel), "--schema", schema]) == 0, rel


def test_rerun_is_byte_identical_across_threads(tiny_config, full_run, tmp_path):
    assert main(["all", "--config", str(tiny_config), "--out", str(tmp_path), "--threads", "3"]) == 0
    assert _hashes(full_run) == _hashes(tmp_path)


def test_stage_by_stage_equals_all(tiny_config, full_run, tmp_path):
    for stage in STAGES:
        assert main([stage, "--config", str(tiny_config), "--out", str(tmp_path)]) == 0
    assert _hashes(full_run) == _hashes(tmp_path)


def test_missing_upstream_artifact_exits_2(tiny_config, tmp_path, capsys):
    assert main(["welfare", "--config", str(tiny_config), "--out", str(tmp_path)]) == 2
    assert "missing artifact" in capsys.readouterr().err


def test_changed_config_is_detected(tiny_config, full_run, tmp_path):
    other = tmp_path / "other.yaml"
    other.write_text(TINY.replace("seed: 5", "seed: 6"))
    assert main(["experiment", "--config", str(other), "--out", str(full_run)]) == 3


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("market:\n  n_seekers: [1\n")
    assert main(["simulate", "--config", str(bad)]) == 3
    assert main(["simulate", "--config", str(tmp_path / "absent.yaml")]) == 2
    good = tmp_path / "good.yaml"
    good.write_text("seed: 1\n")
    assert main(["simulate", "--config", str(good), "--threads", "0"]) == 2
    with pytest.raises(SystemExit) as info:
        main(["nonsense", "--config", str(good)])
    assert info.value.code == 2
    corrupt = tmp_path / "log.csv"
    corrupt.write_text("seeker_id,arm\n1,a\n")
    assert main(["validate", str(corrupt), "--schema", "log"]) == 3
    assert "missing column" in capsys.readouterr().out


def test_unknown_stage_in_library_call(tmp_path):
    with pytest.raises(UsageError):
        run_pipeline(parse_config(TINY), "train-harder", tmp_path)


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "welfare_rank.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "validate" in res.stdout
