"""Command-line experiment runner.

Subcommands: ``targets validate``, ``schedules check``, ``paths heatmap``,
``run``, ``theory plan``, ``diagnostics compare`` and ``sweep``.  Experiments
are described by one TOML file each; results are written as full-precision
CSV (17 significant digits, no timestamps in the bodies) plus a versioned
``report.json`` in which every computed bound sits next to its independent
estimate with a pass/fail flag.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics as diag_mod
from . import targets as tg
from .config import (
    build_schedule,
    build_target,
    load_experiment,
    load_toml,
)
from .paths import DiffusionPath, GeometricPath
from .sampler import Perturbation, SamplerConfig, dalmc_run
from .schedules import schedule_constant
from .theory import PlannerInput, kl_rhs_gaussian, plan_gaussian, plan_heavy, plan_relaxed

REPORT_SCHEMA_VERSION = 1
_COMPARE_SEED_SALT = 104729


def _fmt(x):
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(c) if isinstance(c, (int, str)) else _fmt(c)
                              for c in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _dump_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# heatmap


def _heatmap_grids(cfg):
    d = cfg.diagnostics
    lambdas = d.get("heatmap_lambdas", [round(0.1 * k, 1) for k in range(1, 10)])
    hx = d.get("heatmap_x", {})
    m2 = cfg.target.second_moment()
    span = 1.5 * math.sqrt(m2) + 6.0
    lo = float(hx.get("min", -span))
    hi = float(hx.get("max", span))
    n = int(hx.get("points", 601))
    return list(lambdas), np.linspace(lo, hi, n)


def emit_heatmap(cfg, out_dir, threads=1):
    """Densities of the diffusion and geometric paths over (lambda, x)."""
    if cfg.target.dim != 1:
        raise ValueError("heatmap is a 1D artifact")
    lambdas, xs = _heatmap_grids(cfg)
    path = DiffusionPath(cfg.base, cfg.target, cfg.schedule)
    geo = GeometricPath(cfg.base, cfg.target, cfg.schedule)
    prominence = float(cfg.diagnostics.get("mode_prominence", 0.01))

    def diffusion_row(lam):
        return np.asarray(path.marginal_at_lambda(lam).density(xs[:, None]))

    def geometric_row(lam):
        return np.asarray(geo.density(lam, xs[:, None]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            drows = list(pool.map(diffusion_row, lambdas))
            grows = list(pool.map(geometric_row, lambdas))
    else:
        drows = [diffusion_row(l) for l in lambdas]
        grows = [geometric_row(l) for l in lambdas]

    rows, modes = [], []
    for name, per_lambda in (("diffusion", drows), ("geometric", grows)):
        for lam, dens in zip(lambdas, per_lambda):
            modes.append((name, _fmt(lam), diag_mod.mode_count(dens, prominence)))
            for xv, dv in zip(xs, dens):
                rows.append((name, _fmt(lam), _fmt(xv), _fmt(dv)))
    _write_csv(out_dir / "heatmap.csv", "path,lambda,x,density", rows)
    _write_csv(out_dir / "modes.csv", "path,lambda,mode_count", modes)
    return {(name, lam): count for name, lam, count in
            ((n, float(l), c) for n, l, c in modes)}


# ---------------------------------------------------------------------------
# experiment runner


def _exact_comparison_samples(cfg, n):
    seed = np.random.SeedSequence(entropy=cfg.sampler.seed,
                                  spawn_key=(_COMPARE_SEED_SALT,))
    return cfg.target.sample(n, np.random.default_rng(seed))


def _bound_checks(cfg, path, threads=1):
    d = cfg.diagnostics
    checks = []
    try:
        bound = path.action_bound()
        est = None
        try:
            grid = np.linspace(0.0, cfg.schedule.horizon,
                               int(d.get("action_grid", 201)))
            est = path.action_estimate(grid, n_samples=int(d.get("action_samples", 20000)),
                                       seed=cfg.sampler.seed)
        except ValueError:
            pass
        checks.append({
            "name": f"action[{bound.condition}]",
            "bound": bound.value,
            "estimate": est,
            "pass": None if est is None else est <= bound.value,
        })
    except ValueError as exc:
        checks.append({"name": "action", "bound": None, "estimate": None,
                       "pass": None, "note": str(exc)})

    n_times = int(d.get("lipschitz_times", 10))
    ts = np.linspace(0.0, cfg.schedule.horizon, n_times)

    def one_time(t):
        bound = path.lipschitz_bound(t)
        sup = diag_mod.hessian_sup_estimate(
            path, t, n_points=int(d.get("hessian_points", 400)),
            seed=cfg.sampler.seed)
        return {"name": f"lipschitz[t={t:.4g}]", "bound": bound,
                "estimate": sup, "pass": sup <= bound * (1 + 1e-12)}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            checks.extend(pool.map(one_time, ts))
    else:
        checks.extend(one_time(t) for t in ts)
    return checks


def run_experiment(config_path, out_override=None, seed_override=None, threads=1):
    """Full experiment: sampler run, metric battery, bound checks, artifacts."""
    cfg = load_experiment(config_path, seed_override=seed_override,
                          out_override=out_override)
    path = DiffusionPath(cfg.base, cfg.target, cfg.schedule)  # validates early
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    t_start = time.perf_counter()
    traj = dalmc_run(path, cfg.sampler)
    sampler_seconds = time.perf_counter() - t_start

    kept_idx = np.nonzero(~traj.flagged)[0]
    kept = traj.final[kept_idx]
    rows = [(int(i),) + tuple(x) for i, x in zip(kept_idx, kept)]
    header = "chain," + ",".join(f"x{k+1}" for k in range(path.dim))
    _write_csv(out_dir / "samples.csv", header, rows)

    metrics = []
    diag_enabled = cfg.diagnostics.get("enabled", True)
    if diag_enabled:
        exact = _exact_comparison_samples(cfg, kept.shape[0])
        if path.dim == 1:
            metrics.append(diag_mod.MetricReport(
                "w2_vs_exact", diag_mod.w2_1d(kept[:, 0], exact[:, 0]),
                0.0, (kept.shape[0],), "quantile-coupling").to_dict())
        if path.dim <= 2 and kept.shape[0] >= 1000:
            metrics.append(diag_mod.kl_estimate(cfg.target, kept).to_dict())
        metrics.append(diag_mod.moment_estimate(kept, 2).to_dict())

    checks = _bound_checks(cfg, path, threads=threads) if diag_enabled else []

    mode_counts = None
    if cfg.diagnostics.get("heatmap", False):
        mode_counts = emit_heatmap(cfg, out_dir, threads=threads)
        mode_counts = [{"path": k[0], "lambda": k[1], "modes": v}
                       for k, v in sorted(mode_counts.items())]

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": cfg.raw,
        "sampler_seconds": sampler_seconds,
        "flagged_chains": int(traj.flagged.sum()),
        "implied_eps_score": traj.implied_eps_score,
        "target_second_moment": cfg.target.second_moment(),
        "schedule_constants": {
            "A5-log": schedule_constant(cfg.schedule, "A5-log"),
            "A7-sqrt": schedule_constant(cfg.schedule, "A7-sqrt"),
        },
        "metrics": metrics,
        "bound_checks": checks,
    }
    if mode_counts is not None:
        report["mode_counts"] = mode_counts
    _dump_json(out_dir / "report.json", report)
    return report


# ---------------------------------------------------------------------------
# sweep


def sweep(config_path, axis, values, out_override=None, threads=1):
    if axis not in ("M", "eps_score", "kappa"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    values = [float(v) for v in values]
    if sorted(values) != values:
        raise ValueError("axis values must be sorted")
    cfg = load_experiment(config_path, out_override=out_override)
    path = DiffusionPath(cfg.base, cfg.target, cfg.schedule)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)

    exact = _exact_comparison_samples(cfg, cfg.sampler.chains)
    rows = []
    for value in values:
        sampler = cfg.sampler
        if axis == "M":
            sampler = SamplerConfig(kappa=sampler.kappa, n_steps=int(value),
                                    chains=sampler.chains, seed=sampler.seed,
                                    step_plan=sampler.step_plan,
                                    perturbation=sampler.perturbation)
        elif axis == "kappa":
            sampler = SamplerConfig(kappa=value, n_steps=sampler.n_steps,
                                    chains=sampler.chains, seed=sampler.seed,
                                    step_plan=sampler.step_plan,
                                    perturbation=sampler.perturbation)
        else:  # eps_score: additive bias of the given magnitude
            pert = Perturbation("additive-bias",
                                bias=(value,) + (0.0,) * (path.dim - 1)) \
                if value > 0 else Perturbation()
            sampler = SamplerConfig(kappa=sampler.kappa, n_steps=sampler.n_steps,
                                    chains=sampler.chains, seed=sampler.seed,
                                    step_plan=sampler.step_plan,
                                    perturbation=pert)
        traj = dalmc_run(path, sampler)
        kept = traj.kept
        w2 = (diag_mod.w2_1d(kept[:, 0], exact[:kept.shape[0], 0])
              if path.dim == 1 else float("nan"))
        kl = (diag_mod.kl_estimate(cfg.target, kept).value
              if path.dim <= 2 and kept.shape[0] >= 1000 else float("nan"))
        rows.append((axis, value, w2, kl))
    _write_csv(cfg.output_dir / "sweep.csv", "axis,value,w2,kl", rows)
    return rows


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser():
    p = argparse.ArgumentParser(prog="dalmc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    tv = sub.add_parser("targets", help="target utilities")
    tv_sub = tv.add_subparsers(dest="subcommand", required=True)
    val = tv_sub.add_parser("validate", help="validate a target config")
    val.add_argument("file")
    val.add_argument("--seed", type=int, default=0)

    sc = sub.add_parser("schedules", help="schedule utilities")
    sc_sub = sc.add_subparsers(dest="subcommand", required=True)
    chk = sc_sub.add_parser("check", help="print both assumption constants")
    chk.add_argument("file")

    ph = sub.add_parser("paths", help="path utilities")
    ph_sub = ph.add_subparsers(dest="subcommand", required=True)
    hm = ph_sub.add_parser("heatmap", help="emit the density heatmap CSV")
    hm.add_argument("config")
    hm.add_argument("--out", default=None)
    hm.add_argument("--threads", type=int, default=1)

    run = sub.add_parser("run", help="run a full experiment")
    run.add_argument("config")
    run.add_argument("--out", default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--threads", type=int, default=1)

    th = sub.add_parser("theory", help="complexity planners")
    th_sub = th.add_subparsers(dest="subcommand", required=True)
    plan = th_sub.add_parser("plan", help="print (kappa, M) and the KL bound")
    plan.add_argument("--planner", choices=("gaussian", "relaxed", "heavy"),
                      default="gaussian")
    plan.add_argument("--eps", type=float, required=True)
    plan.add_argument("--d", type=int, required=True)
    plan.add_argument("--m2", type=float, required=True)
    plan.add_argument("--l-max", type=float, default=None)
    plan.add_argument("--l-pi", type=float, default=None)
    plan.add_argument("--k-pi", type=float, default=None)
    plan.add_argument("--alpha", type=float, default=None)
    plan.add_argument("--eps-score", type=float, default=None)
    plan.add_argument("--horizon", type=float, default=1.0)

    dg = sub.add_parser("diagnostics", help="metric battery")
    dg_sub = dg.add_subparsers(dest="subcommand", required=True)
    cmp_ = dg_sub.add_parser("compare", help="compare samples against a target")
    cmp_.add_argument("samples")
    cmp_.add_argument("target_config")
    cmp_.add_argument("--seed", type=int, default=0)

    sw = sub.add_parser("sweep", help="one-axis sweep")
    sw.add_argument("config")
    sw.add_argument("--axis", choices=("M", "eps_score", "kappa"), required=True)
    sw.add_argument("--values", required=True,
                    help="comma-separated axis values, sorted")
    sw.add_argument("--out", default=None)
    sw.add_argument("--threads", type=int, default=1)
    return p


def _cmd_targets_validate(args):
    raw = load_toml(args.file)
    spec = raw.get("target", raw)
    target = build_target(spec)
    if isinstance(target, tg.GaussianMixture):
        report = tg.check_mixture_smoothness(target, seed=args.seed).to_dict()
    else:
        report = {"lipschitz_ok": None,
                  "note": "pairwise analysis applies to Gaussian mixtures"}
        if isinstance(target, tg.StudentT):
            report["lipschitz_ok"] = True
            report["L_pi"] = target.lipschitz_constant()
            report["C_pi"] = target.score_sup_squared()
    payload = {"kind": spec.get("kind"), "dim": target.dim,
               "second_moment": target.second_moment(), "report": report}
    print(json.dumps(_jsonable(payload), indent=2, sort_keys=True))
    return 0


def _cmd_schedules_check(args):
    raw = load_toml(args.file)
    sched = build_schedule(raw.get("schedule", raw))
    payload = {
        "family": sched.family,
        "horizon": sched.horizon,
        "phi": sched.phi,
        "C_lambda": {
            "A5-log": schedule_constant(sched, "A5-log"),
            "A7-sqrt": schedule_constant(sched, "A7-sqrt"),
        },
        "endpoints": dict(zip(("lambda_0", "lambda_T"), sched.endpoint_values())),
    }
    print(json.dumps(_jsonable(payload), indent=2, sort_keys=True))
    return 0


def _cmd_paths_heatmap(args):
    cfg = load_experiment(args.config, out_override=args.out)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    emit_heatmap(cfg, cfg.output_dir, threads=args.threads)
    print(f"wrote {cfg.output_dir / 'heatmap.csv'} and {cfg.output_dir / 'modes.csv'}")
    return 0


def _cmd_run(args):
    report = run_experiment(args.config, out_override=args.out,
                            seed_override=args.seed, threads=args.threads)
    ok = all(c["pass"] is not False for c in report["bound_checks"])
    print(json.dumps(_jsonable({
        "flagged_chains": report["flagged_chains"],
        "bound_checks_passed": ok,
        "metrics": report["metrics"],
    }), indent=2, sort_keys=True))
    return 0 if ok else 1


def _cmd_theory_plan(args):
    inp = PlannerInput(eps=args.eps, d=args.d, M2=args.m2, L_max=args.l_max,
                       L_pi=args.l_pi, K_pi=args.k_pi, alpha=args.alpha)
    planner = {"gaussian": plan_gaussian, "relaxed": plan_relaxed,
               "heavy": plan_heavy}[args.planner]
    plan = planner(inp)
    payload = {"planner": args.planner, "kappa": plan.kappa,
               "n_steps": plan.n_steps, "notes": plan.notes}
    if args.l_max is not None:
        eps_score = args.eps if args.eps_score is None else args.eps_score
        payload["kl_rhs"] = kl_rhs_gaussian(
            plan.kappa, plan.n_steps, args.l_max, args.m2, args.d,
            args.horizon * args.l_max ** 2, eps_score)
    print(json.dumps(_jsonable(payload), indent=2, sort_keys=True))
    return 0


def _cmd_diag_compare(args):
    data = np.genfromtxt(args.samples, delimiter=",", names=True)
    cols = [n for n in data.dtype.names if n != "chain"]
    samples = np.stack([data[c] for c in cols], axis=1)
    raw = load_toml(args.target_config)
    target = build_target(raw.get("target", raw))
    exact = target.sample(samples.shape[0], np.random.default_rng(args.seed))
    reports = []
    if target.dim == 1:
        reports.append(diag_mod.MetricReport(
            "w2_vs_exact", diag_mod.w2_1d(samples[:, 0], exact[:, 0]),
            0.0, (samples.shape[0],), "quantile-coupling").to_dict())
    if target.dim <= 2 and samples.shape[0] >= 1000:
        reports.append(diag_mod.kl_estimate(target, samples).to_dict())
    for p in (2, 4):
        reports.append(diag_mod.moment_estimate(samples, p).to_dict())
    print(json.dumps(_jsonable({"metrics": reports}), indent=2, sort_keys=True))
    return 0


def _cmd_sweep(args):
    values = [v for v in args.values.split(",") if v]
    rows = sweep(args.config, args.axis, values, out_override=args.out,
                 threads=args.threads)
    print(json.dumps(_jsonable({"rows": rows}), indent=2))
    return 0


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    dispatch = {
        ("targets", "validate"): _cmd_targets_validate,
        ("schedules", "check"): _cmd_schedules_check,
        ("paths", "heatmap"): _cmd_paths_heatmap,
        ("run", None): _cmd_run,
        ("theory", "plan"): _cmd_theory_plan,
        ("diagnostics", "compare"): _cmd_diag_compare,
        ("sweep", None): _cmd_sweep,
    }
    key = (args.command, getattr(args, "subcommand", None))
    try:
        return dispatch[key](args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
