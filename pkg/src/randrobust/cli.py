"""Command-line interface: ``randrobust {plan,analyze,verify,dist}``.

Exit codes: 0 success, 1 verification failure, 2 invalid configuration or
domain error, 3 sampling cap exceeded, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

import pydantic

from . import __version__, engine, orderstat, planner, systems, validation
from .config import OUTPUT_DIR_ENV, JointQuery, RunConfig, load_config_file
from .errors import BudgetExceededError, NumericalError, RandRobustError, SamplingCapExceeded
from .report import ReportWriter

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_CAP = 3
EXIT_NUMERICAL = 4

# Self-test shifts every prediction by this much so the suite must fail.
SELF_TEST_OFFSET = 0.25
RHO_PROBE_STREAM = 1 << 40

PLAN_COLUMNS = ("quantity", "value", "bound", "achieved_failure", "formula")
ANALYZE_COLUMNS = (
    "problem", "mode", "target", "epsilon", "delta", "planned_size", "raw_draws_consumed",
    "constrained_hits", "u_min_hat", "u_max_hat", "argmin_sample", "argmax_sample", "rho",
    "empirical_rho", "empirical_rho_se", "inconclusive", "confidence_min_side",
    "confidence_max_side", "confidence_range", "notes",
)
VERIFY_COLUMNS = (
    "group", "label", "kind", "statistic", "mode", "sample_size", "trials", "empirical_rate",
    "predicted_rate", "exact_rate", "standard_error", "band", "ks_statistic", "pvalue",
    "critical_value", "n_low", "n_high", "mean", "predicted", "runs", "pass", "notice",
)
DIST_COLUMNS = ("query", "inputs", "value")

CITATIONS = {
    "plan": [
        "N_c = ceil(ln(delta) / ln(1 - eps)) for one-sided extremes",
        "N_c = min{N : (1 - eps)^(N-1) (1 + (N-1) eps) <= delta} for the range",
        "N = ceil(ln(delta) / ln(1 - eps rho)) for one-sided extremes, direct sampling",
        "N = min{N : mu(N, eps rho) <= delta} for the range, direct sampling",
        "E[L] = N_c / rho",
    ],
    "analyze": [
        "Pr{F(u_(1)-) <= eps} >= 1 - (1 - eps)^N",
        "Pr{F(u_(N)) - F(u_(1)) >= 1 - eps} >= 1 - mu(N, eps)",
        "direct sampling replaces eps by eps * rho",
    ],
    "verify": [
        "coverage of extremes: 1 - (1 - eps)^N, range: 1 - mu(N, eps)",
        "tolerance interval [u_(m), u_(n)]: 1 - V(N, N + 1 - n + m, eps)",
        "bands: 3 * max(empirical SE, predicted SE)",
        "E[L] = N_c / rho; F(u_(1)) independent of L",
    ],
    "dist": [
        "V(N, i, eps) = sum_{j < i} C(N, j) eps^j (1 - eps)^(N - j)",
        "mu(n, e) = (1 - e)^(n - 1) (1 + (n - 1) e)",
        "joint uniform order-statistic CDF by occupancy-vector enumeration",
        "constrained CDF = joint uniform CDF at tau = sup{F(x) : F(x) < t}",
    ],
}


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage errors with the configuration exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON run configuration; flags override its keys")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help=f"report path; relative paths resolve against ${OUTPUT_DIR_ENV}")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.add_argument("--workers", type=int, default=1, help="threads for index evaluation (does not change results)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="randrobust", description="Sample-size planning and order-statistic estimation.")
    parser.add_argument("--version", action="version", version=f"randrobust {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="print the planned sample sizes")
    _common(p)
    p.add_argument("--rho", type=float, help="volume ratio of the constrained subset")

    p = sub.add_parser("analyze", help="estimate the extremes of an index over a constrained parameter set")
    _common(p)
    p.add_argument("--problem", help="model file path or bundled:<name>")
    p.add_argument("--mode", choices=("indirect", "direct"))
    p.add_argument("--rho", type=float)
    p.add_argument("--estimate-rho", type=int, metavar="N_PROBE", dest="estimate_rho")
    p.add_argument("--target", choices=("min", "max", "range"))
    p.add_argument("--draw-cap", type=int, dest="draw_cap")

    p = sub.add_parser("verify", help="run the Monte Carlo verification suite")
    _common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--self-test", action="store_true", default=None, dest="self_test",
                   help="perturb predictions so the suite must fail")

    p = sub.add_parser("dist", help="evaluate order-statistic distribution quantities")
    _common(p)
    p.add_argument("--v", nargs=3, metavar=("N", "I", "EPS"))
    p.add_argument("--mu", nargs=2, metavar=("N", "E"))
    p.add_argument("--joint", nargs=3, metavar=("N=..", "i=..", "t=.."))
    p.add_argument("--constrained", nargs=3, metavar=("N=..", "i=..", "t=.."))
    p.add_argument("--tau", type=float)
    p.add_argument("--term-budget", type=int, dest="term_budget",
                   help="maximum occupancy vectors visited by joint CDF queries")
    p.add_argument("--test-dist", dest="test_distribution",
                   help="preset name or inline JSON {segments, atoms}")
    return parser


def _parse_joint(tokens) -> dict:
    out = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep or key not in ("N", "i", "t"):
            raise ValueError(f"expected N=<int> i=<list> t=<list>, got {tok!r}")
        out[key] = val
    if set(out) != {"N", "i", "t"}:
        raise ValueError("joint queries need N=, i= and t=")
    return {
        "N": int(out["N"]),
        "i": [int(x) for x in out["i"].split(",")],
        "t": [float(x) for x in out["t"].split(",")],
    }


def _overrides(args) -> dict:
    skip = {"config", "workers", "command"}
    out = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    if "v" in out:
        n, i, e = out["v"]
        out["v"] = (int(n), int(i), float(e))
    if "mu" in out:
        n, e = out["mu"]
        out["mu"] = (int(n), float(e))
    for key in ("joint", "constrained"):
        if key in out:
            out[key] = _parse_joint(out[key])
    td = out.get("test_distribution")
    if isinstance(td, str) and td.lstrip().startswith("{"):
        out["test_distribution"] = json.loads(td)
    return out


def resolve_config(args) -> RunConfig:
    data = load_config_file(args.config) if args.config else {}
    data.update(_overrides(args))
    data["command"] = args.command
    return RunConfig.model_validate(data)


def _output_path(cfg: RunConfig) -> Optional[Path]:
    root = os.environ.get(OUTPUT_DIR_ENV)
    ext = "csv" if cfg.format == "csv" else "jsonl"
    if cfg.output is None:
        return Path(root) / f"{cfg.command}.{ext}" if root else None
    path = Path(cfg.output)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _config_record(cfg: RunConfig, seed) -> dict:
    # Where the report goes is not part of what was computed.
    rec = cfg.model_dump(mode="json", exclude_none=True, exclude={"output"})
    if seed is not None:
        rec["seed"] = seed
    return rec


def _writer(cfg: RunConfig, seed, columns) -> ReportWriter:
    return ReportWriter(
        cfg.command, _config_record(cfg, seed), seed, CITATIONS[cfg.command], columns,
        fmt=cfg.format, path=_output_path(cfg),
    )


def run_plan(cfg: RunConfig, workers: int) -> int:
    spec = planner.ReliabilitySpec(cfg.epsilon, cfg.delta)
    e, d = spec.epsilon, spec.delta
    rows = []
    n1 = planner.constrained_size_one_sided(spec)
    n2 = planner.constrained_size_two_sided(spec)
    rows.append(dict(quantity="constrained_size_one_sided", value=n1, bound=d,
                     achieved_failure=(1 - e) ** n1, formula="(1 - eps)^N <= delta"))
    rows.append(dict(quantity="constrained_size_two_sided", value=n2, bound=d,
                     achieved_failure=orderstat.mu(n2, e), formula="mu(N, eps) <= delta"))
    if cfg.rho is not None:
        rho = cfg.rho
        g1 = planner.global_size_one_sided(spec, rho)
        g2 = planner.global_size_two_sided(spec, rho)
        rows.append(dict(quantity="global_size_one_sided", value=g1, bound=d,
                         achieved_failure=(1 - e * rho) ** g1, formula="(1 - eps rho)^N <= delta"))
        rows.append(dict(quantity="global_size_two_sided", value=g2, bound=d,
                         achieved_failure=orderstat.mu(g2, e * rho), formula="mu(N, eps rho) <= delta"))
        rows.append(dict(quantity="expected_draws_one_sided", value=planner.expected_trials_indirect(n1, rho),
                         formula="E[L] = N_c / rho"))
        rows.append(dict(quantity="expected_draws_two_sided", value=planner.expected_trials_indirect(n2, rho),
                         formula="E[L] = N_c / rho"))
    with _writer(cfg, cfg.seed, PLAN_COLUMNS) as w:
        w.write_all(rows)
    return EXIT_OK


def run_analyze(cfg: RunConfig, workers: int) -> int:
    spec = planner.ReliabilitySpec(cfg.epsilon, cfg.delta)
    model = systems.load_model(cfg.problem)
    problem = systems.problem_from_model(model)
    seed = engine.resolve_seed(cfg.seed)
    rho, rho_est = cfg.rho, None
    if cfg.mode == "direct" and rho is None:
        # The probe uses its own stream so it is independent of the main run.
        probe_seed = validation.trial_seed(seed, RHO_PROBE_STREAM)
        rho_est = engine.estimate_rho(problem, cfg.estimate_rho, probe_seed, workers=workers)
        if rho_est.value <= 0.0:
            raise SamplingCapExceeded(
                f"no constrained hits in {rho_est.n_probe} probe draws; cannot estimate rho",
                draws=rho_est.n_probe, hits=0,
            )
        rho = rho_est.value
    report = engine.estimate_extrema(
        problem, spec, cfg.mode, rho, seed, target=cfg.target, draw_cap=cfg.draw_cap,
        workers=workers, empirical_rho=rho_est,
    )
    rec = report.to_record()
    rec.pop("seed")
    rec["problem"] = model.name if getattr(model, "name", None) else problem.name
    with _writer(cfg, seed, ANALYZE_COLUMNS) as w:
        w.write(rec)
    return EXIT_OK


def run_verify(cfg: RunConfig, workers: int) -> int:
    spec = planner.ReliabilitySpec(cfg.epsilon, cfg.delta)
    seed = engine.resolve_seed(cfg.seed)
    offset = SELF_TEST_OFFSET if cfg.self_test else 0.0
    ok = True
    with _writer(cfg, seed, VERIFY_COLUMNS) as w:
        for rec in validation.standard_suite(cfg.trials, seed, spec, predicted_offset=offset):
            if rec.get("pass") is False:
                ok = False
            w.write(rec)
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def _test_distribution(cfg: RunConfig) -> orderstat.TestDistribution:
    td = cfg.test_distribution
    if isinstance(td, dict):
        return orderstat.TestDistribution.from_dict(td)
    return validation.named_distribution(td, cfg.epsilon)


def _index(q: JointQuery) -> orderstat.IndexTuple:
    if len(q.i) != len(q.t):
        raise ValueError(f"i and t must have equal length, got {len(q.i)} and {len(q.t)}")
    return orderstat.IndexTuple(tuple(q.i), q.N)


def run_dist(cfg: RunConfig, workers: int) -> int:
    rows = []
    if cfg.v is not None:
        n, i, e = cfg.v
        rows.append(dict(query="v", inputs={"N": n, "i": i, "eps": e}, value=orderstat.confidence_v(n, i, e)))
    if cfg.mu is not None:
        n, e = cfg.mu
        rows.append(dict(query="mu", inputs={"N": n, "e": e}, value=orderstat.mu(n, e)))
    if cfg.joint is not None:
        q = cfg.joint
        rows.append(dict(query="joint", inputs=q.model_dump(),
                         value=orderstat.joint_uniform_cdf(_index(q), q.t, term_budget=cfg.term_budget)))
    if cfg.constrained is not None or cfg.tau is not None:
        dist = _test_distribution(cfg)
        if cfg.constrained is not None:
            q = cfg.constrained
            rows.append(dict(query="constrained", inputs={**q.model_dump(), "distribution": dist.name},
                             value=orderstat.exact_constrained_cdf(_index(q), q.t, dist, term_budget=cfg.term_budget)))
        if cfg.tau is not None:
            rows.append(dict(query="tau", inputs={"t": cfg.tau, "distribution": dist.name},
                             value=orderstat.generalized_inverse_tau(dist, cfg.tau)))
    with _writer(cfg, cfg.seed, DIST_COLUMNS) as w:
        w.write_all(rows)
    return EXIT_OK


_RUNNERS = {"plan": run_plan, "analyze": run_analyze, "verify": run_verify, "dist": run_dist}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.workers < 1:
            raise ValueError(f"--workers must be >= 1, got {args.workers}")
        cfg = resolve_config(args)
        return _RUNNERS[cfg.command](cfg, args.workers)
    except SamplingCapExceeded as exc:
        print(f"randrobust: sampling cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (NumericalError, BudgetExceededError) as exc:
        print(f"randrobust: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (pydantic.ValidationError, ValueError, RandRobustError) as exc:
        print(f"randrobust: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
