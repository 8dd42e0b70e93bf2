import json
import subprocess
import sys
from pathlib import Path

import pytest

from clusterconsensus import cli, config, graph_core, plotting
from clusterconsensus.config import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, name="cfg.json", **entries):
    d = {"schema_version": 1, "out_dir": str(tmp_path / "out")}
    d.update(entries)
    path = tmp_path / name
    path.write_text(json.dumps(d))
    return path


SMALL = {"sizes": [3, 4], "internal": "complete", "gateways": 1, "external": "ring"}


def test_generate_prints_counts(tmp_path, capsys):
    cfg = write_config(tmp_path, topology=SMALL)
    assert cli.main(["generate", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "N=7 M=10 M_internal=9 M_external=1 r=2" in out
    g = graph_core.read_graph(tmp_path / "out" / "graph.txt")
    assert g.cluster_sizes == (3, 4)


def test_analyze_reports_all_conventions(tmp_path, capsys):
    cfg = write_config(tmp_path, topology=SMALL, sigma2="aggregate")
    assert cli.main(["analyze", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    for name in ("full", "nonzero", "aggregate"):
        assert f"[{name}]" in out
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["convention"] == "aggregate"
    assert report["n_min"] == 3 and report["n_max"] == 4


def test_analyze_full_convention_warns_on_sparse_gateways(tmp_path, capsys):
    cfg = write_config(tmp_path, topology=SMALL)
    assert cli.main(["analyze", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "warning:" in out
    assert "rate = 0" in out


def test_analyze_singletons_note(capsys, tmp_path):
    assert cli.main(["analyze", "--config", str(CONFIGS / "singletons.json"), "--out", str(tmp_path)]) == 0
    assert "W = 0" in capsys.readouterr().out


def test_simulate_then_validate(tmp_path, capsys):
    cfg = write_config(tmp_path, topology=SMALL, sigma2="aggregate", t_end=4.0, dt=0.02, record_every=2)
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    out_dir = tmp_path / "out"
    for name in ("graph.txt", "report.json", "run.json", "trajectory.csv",
                 "states.svg", "fast.svg", "inter_area.svg"):
        assert (out_dir / name).exists(), name
    for name in ("states.svg", "fast.svg", "inter_area.svg"):
        assert plotting.is_well_formed_svg(out_dir / name)
    run = json.loads((out_dir / "run.json").read_text())
    assert run["samples"] == 101
    assert run["mean_drift"] <= 1e-9
    assert "out_dir" not in run["config"]
    capsys.readouterr()
    assert cli.main(["validate", "--out", str(out_dir)]) == 0
    assert "ok: 101 rows validated" in capsys.readouterr().out
    assert cli.main(["validate", "--config", str(cfg)]) == 0


def test_validate_flags_tampered_csv(tmp_path):
    cfg = write_config(tmp_path, topology=SMALL, t_end=1.0, dt=0.05)
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    csv = tmp_path / "out" / "trajectory.csv"
    lines = csv.read_text().splitlines()
    fields = lines[5].split(",")
    fields[1] = repr(float(fields[1]) + 0.01)
    lines[5] = ",".join(fields)
    csv.write_text("\n".join(lines) + "\n")
    assert cli.main(["validate", "--out", str(tmp_path / "out")]) == cli.EXIT_NUMERIC


def test_validate_flags_broken_svg(tmp_path):
    cfg = write_config(tmp_path, topology=SMALL, t_end=1.0, dt=0.05)
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    (tmp_path / "out" / "fast.svg").write_text("<svg")
    assert cli.validate_outputs(tmp_path / "out") == ["fast.svg is missing or malformed"]


def test_validate_missing_outputs_is_config_error(tmp_path):
    assert cli.main(["validate", "--out", str(tmp_path / "nothing")]) == cli.EXIT_CONFIG


def test_graph_file_config(tmp_path):
    g = graph_core.generate(graph_core.TopologySpec((2, 3)), 0)
    graph_core.write_graph(g, tmp_path / "g.txt")
    cfg = write_config(tmp_path, graph_file="g.txt", t_end=1.0, dt=0.05)
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "graph.txt").read_text() == (tmp_path / "g.txt").read_text()


def test_exit_code_config_errors(tmp_path):
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG
    bad = write_config(tmp_path, topology=SMALL, bogus=1)
    assert cli.main(["simulate", "--config", str(bad)]) == cli.EXIT_CONFIG
    both = write_config(tmp_path, "both.json", topology=SMALL, graph_file="g.txt")
    assert cli.main(["analyze", "--config", str(both)]) == cli.EXIT_CONFIG
    version = tmp_path / "v.json"
    version.write_text(json.dumps({"schema_version": 2, "topology": SMALL}))
    assert cli.main(["analyze", "--config", str(version)]) == cli.EXIT_CONFIG
    nofile = write_config(tmp_path, "nofile.json", graph_file="absent.txt")
    assert cli.main(["analyze", "--config", str(nofile)]) == cli.EXIT_CONFIG


def test_exit_code_graph_error_on_disconnected_cluster(tmp_path):
    (tmp_path / "g.txt").write_text(
        "clusters 2\nsizes 3 2\ninternal 0 0 1\ninternal 1 0 1\nexternal 0 3\n"
    )
    cfg = write_config(tmp_path, graph_file="g.txt")
    assert cli.main(["analyze", "--config", str(cfg)]) == cli.EXIT_GRAPH


def test_exit_code_graph_error_on_malformed_file(tmp_path):
    (tmp_path / "g.txt").write_text("clusters 2\nsizes 3\n")
    cfg = write_config(tmp_path, graph_file="g.txt")
    assert cli.main(["analyze", "--config", str(cfg)]) == cli.EXIT_GRAPH


def test_exit_code_numeric_on_step_guard(tmp_path):
    cfg = write_config(tmp_path, topology=SMALL, t_end=5.0, dt=1.0)
    assert cli.main(["simulate", "--config", str(cfg)]) == cli.EXIT_NUMERIC


def test_overrides(tmp_path):
    cfg = write_config(tmp_path, topology=SMALL)
    c = config.load(cfg).with_overrides(seed=9, out_dir=tmp_path / "x", sigma2="nonzero")
    assert (c.seed, c.out_dir, c.sigma2) == (9, str(tmp_path / "x"), "nonzero")
    assert cli.main(["analyze", "--config", str(cfg), "--sigma2", "nonzero", "--out", str(tmp_path / "x")]) == 0
    assert json.loads((tmp_path / "x" / "report.json").read_text())["convention"] == "nonzero"


def test_run_batch(tmp_path):
    base = config.load(write_config(tmp_path, topology=SMALL, t_end=1.0, dt=0.05))
    cfgs = [base.with_overrides(seed=s, out_dir=tmp_path / f"run{s}") for s in range(3)]
    runs = cli.run_batch("simulate", cfgs, max_workers=2)
    assert len(runs) == 3
    assert all(cli.validate_outputs(c.out_dir) == [] for c in cfgs)
    with pytest.raises(ConfigError):
        cli.run_batch("simulate", [cfgs[0], cfgs[0]])


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, topology=SMALL)
    proc = subprocess.run(
        [sys.executable, "-m", "clusterconsensus", "generate", "--config", str(cfg)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "N=7" in proc.stdout


@pytest.mark.parametrize("name", ["consensus", "k7", "singletons"])
def test_shipped_configs_run(tmp_path, name):
    out = tmp_path / name
    assert cli.main(["simulate", "--config", str(CONFIGS / f"{name}.json"), "--out", str(out)]) == 0
    assert cli.validate_outputs(out) == []
