"""Command line runner: ``clusterconsensus {generate,analyze,simulate,validate}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import dynamics, graph_core, plotting, spectral
from .config import ConfigError, ExperimentConfig
from .graph_core import ClusterGraph, GeneratorError, GraphError

log = logging.getLogger("clusterconsensus")

EXIT_OK, EXIT_CONFIG, EXIT_GRAPH, EXIT_NUMERIC = 0, 1, 2, 3

GRAPH_FILE = "graph.txt"
REPORT_FILE = "report.json"
RUN_FILE = "run.json"
CSV_FILE = "trajectory.csv"


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def initial_state(n_nodes: int, seed: int) -> np.ndarray:
    """Uniform random node values in [0, 10]."""
    return np.random.default_rng(seed).uniform(0.0, 10.0, n_nodes)


def load_graph(cfg: ExperimentConfig) -> ClusterGraph:
    if cfg.graph_path is not None:
        try:
            return graph_core.read_graph(cfg.graph_path)
        except OSError as exc:
            raise ConfigError(f"cannot read graph file: {exc}") from exc
    return graph_core.generate(cfg.topology, cfg.graph_seed)


def graph_summary(g: ClusterGraph) -> dict:
    return {
        "N": g.n_nodes,
        "M": g.m_total,
        "M_internal": g.m_internal,
        "M_external": g.m_external,
        "r": g.n_clusters,
        "sizes": list(g.cluster_sizes),
    }


def cmd_generate(cfg: ExperimentConfig) -> dict:
    if cfg.topology is None:
        raise ConfigError("generate needs a 'topology' entry")
    g = graph_core.generate(cfg.topology, cfg.graph_seed)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph_core.write_graph(g, out / GRAPH_FILE)
    summary = graph_summary(g)
    print(" ".join(f"{k}={v}" for k, v in summary.items() if k != "sizes"))
    return summary


def _analysis(cfg: ExperimentConfig, g: ClusterGraph) -> spectral.RateReport:
    return spectral.analyze(
        g, cfg.sigma2, sigma2_override=cfg.sigma2_value, connectivity_mode=cfg.connectivity
    )


def _print_report(report: spectral.RateReport, g: ClusterGraph) -> None:
    print(f"N={g.n_nodes} r={g.n_clusters} N_min={report.n_min} N_max={report.n_max}")
    for name, value in report.sigma2_conventions.items():
        print(f"sigma2(L_E) [{name}] = {value:.6g}")
    print(f"sigma2(L_E) used [{report.convention}] = {report.sigma2_external:.6g}")
    print(f"||L_E|| = {report.norm_external:.6g}")
    print(f"min sigma2(L_alpha) = {report.min_sigma2_internal:.6g}")
    print(
        f"cluster condition: {report.min_sigma2_internal:.6g} >= {report.assumption2_rhs:.6g} "
        f"-> {'holds' if report.assumption2_holds else 'fails'}"
    )
    print(f"epsilon = {report.epsilon:.6g}")
    print(f"rate = {report.rate:.6g}")
    if g.n_clusters == g.n_nodes:
        print("all clusters are singletons: W = 0, no fast dynamics; rate set by L_E alone")
    for w in report.warnings:
        print(f"warning: {w}")


def cmd_analyze(cfg: ExperimentConfig) -> spectral.RateReport:
    g = load_graph(cfg)
    report = _analysis(cfg, g)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_FILE).write_text(report.to_json())
    _print_report(report, g)
    return report


def cmd_simulate(cfg: ExperimentConfig) -> dict:
    g = load_graph(cfg)
    report = _analysis(cfg, g)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph_core.write_graph(g, out / GRAPH_FILE)
    (out / REPORT_FILE).write_text(report.to_json())

    x0 = np.array(cfg.x0) if cfg.x0 is not None else initial_state(g.n_nodes, cfg.seed)
    epsilon = report.epsilon if cfg.epsilon is None else cfg.epsilon
    traj = dynamics.integrate(
        g, x0, cfg.t_end, cfg.dt, epsilon, rate=report.rate, record_every=cfg.record_every
    )
    dynamics.write_csv(traj, out / CSV_FILE)
    plotting.write_all(traj, g.cluster_sizes, out)

    verdict = dynamics.verify_envelope(traj, report.rate)
    try:
        metrics = dynamics.timescale_metrics(traj).to_dict()
    except ValueError as exc:
        metrics = {"error": str(exc)}
    drift = float(np.max(np.abs(traj.states.mean(axis=1) - x0.mean())))
    run = {
        # out_dir omitted so reruns into another directory stay byte-identical
        "config": {k: v for k, v in cfg.to_dict().items() if k != "out_dir"},
        "epsilon": epsilon,
        "rate": report.rate,
        "certified": bool(report.rate_defined and report.assumption2_holds),
        "envelope": verdict.to_dict(),
        "timescales": metrics,
        "consensus_error": traj.consensus_error(),
        "mean_drift": drift,
        "samples": len(traj),
    }
    (out / RUN_FILE).write_text(_dump(run))

    _print_report(report, g)
    print(f"envelope holds={verdict.holds} worst_ratio={verdict.worst_ratio:.6g} monotone={verdict.monotone}")
    if verdict.first_violation_time is not None:
        print(f"first envelope violation at t={verdict.first_violation_time:.6g}")
    print("timescales " + " ".join(f"{k}={v}" for k, v in metrics.items()))
    print(f"consensus_error={run['consensus_error']:.3g} mean_drift={drift:.3g}")
    return run


def cmd_validate(cfg: ExperimentConfig) -> list[str]:
    return validate_outputs(cfg.out_dir)


def validate_outputs(out_dir: str | Path) -> list[str]:
    """Re-parse the outputs of ``simulate`` in ``out_dir`` and re-check them."""
    out = Path(out_dir)
    try:
        text = (out / GRAPH_FILE).read_text()
        run = json.loads((out / RUN_FILE).read_text())
        trace = dynamics.read_csv(out / CSV_FILE)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read simulation outputs in {out}: {exc}") from exc
    g = graph_core.parse_graph(text)
    problems = []
    if graph_core.format_graph(g) != text:
        problems.append("graph file does not round-trip")
    problems += dynamics.check_csv_trace(trace, g.cluster_sizes, run["epsilon"], run["rate"])
    for name in ("states.svg", "fast.svg", "inter_area.svg"):
        if not plotting.is_well_formed_svg(out / name):
            problems.append(f"{name} is missing or malformed")
    for p in problems:
        print(f"invalid: {p}")
    if not problems:
        print(f"ok: {len(trace.times)} rows validated")
    return problems


def _run_one(args):
    verb, cfg = args
    return COMMANDS[verb](cfg)


def run_batch(verb: str, configs: list[ExperimentConfig], max_workers: int | None = None) -> list:
    """Run one verb over many configs in parallel worker processes."""
    dirs = [Path(c.out_dir).resolve() for c in configs]
    if len(set(dirs)) != len(dirs):
        raise ConfigError("batch configs must use distinct output directories")
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_run_one, [(verb, c) for c in configs]))


COMMANDS = {
    "generate": cmd_generate,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clusterconsensus",
        description="Consensus on clustered networks: generate, analyze, simulate, validate.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in COMMANDS:
        p = sub.add_parser(verb)
        p.add_argument("--config", required=verb != "validate", help="experiment config (JSON)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed (overrides config)")
        p.add_argument("--sigma2", choices=spectral.SIGMA2_CONVENTIONS, help="sigma2(L_E) convention")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        if args.config is None:
            if args.out is None:
                raise ConfigError("validate needs --out or --config")
            result = validate_outputs(args.out)
        else:
            cfg = config_mod.load(args.config)
            cfg = cfg.with_overrides(seed=args.seed, out_dir=args.out, sigma2=args.sigma2)
            result = COMMANDS[args.verb](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GraphError, GeneratorError, spectral.SpectralError) as exc:
        print(f"graph error: {exc}", file=sys.stderr)
        return EXIT_GRAPH
    except (dynamics.IntegrationError, spectral.ConvergenceError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.verb == "validate" and result:
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
