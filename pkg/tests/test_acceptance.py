"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The suite exercises the shipped configuration files end to end at their
stated tolerances; nothing here is tuned at runtime.
"""

import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

from dalmc import diagnostics, targets
from dalmc.cli import run_experiment
from dalmc.config import load_experiment
from dalmc.paths import DiffusionPath, GeometricPath
from dalmc.sampler import (
    Perturbation,
    SamplerConfig,
    TabulatedScoreOracle,
    dalmc_run,
)
from dalmc.schedules import Schedule
from dalmc.theory import PlannerInput, kl_rhs_gaussian, plan_gaussian, plan_heavy, plan_relaxed
from conftest import fd_gradient, fd_jacobian, rel_err, remark_b6_mixture, target_zoo

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SHIPPED = ("gaussian_sanity", "gauss_n34", "mixture2d", "figure1", "heavy_tail")


def _record(num, name, ok, detail=""):
    state = "PASS" if ok else "FAIL"
    suffix = f"  [{detail}]" if detail else ""
    line = f"ACCEPTANCE {num:>2} {name}: {state}{suffix}"
    print(line, flush=True)  # visible with -s; kept in captured output otherwise
    return line


@pytest.fixture(scope="module")
def heavy_path():
    cfg = load_experiment(CONFIGS / "heavy_tail.toml")
    return DiffusionPath(cfg.base, cfg.target, cfg.schedule), cfg


@pytest.fixture(scope="module")
def heavy_oracle(heavy_path):
    path, _ = heavy_path
    return TabulatedScoreOracle.from_path(path)


# ---------------------------------------------------------------------------


def test_criterion_1_score_hessian_oracle_equivalence():
    worst_score, worst_hess = 0.0, 0.0
    for name, tgt in target_zoo().items():
        pts = tgt.sample(200, 20240817)
        for x in pts:
            s = tgt.score(x)
            worst_score = max(worst_score, rel_err(fd_gradient(tgt.log_density, x), s))
            h = tgt.hessian_log_density(x)
            worst_hess = max(worst_hess,
                             rel_err(fd_jacobian(tgt.score, x), h, floor=1e-6))
            assert np.allclose(h, h.T, atol=1e-12)
    ok = worst_score < 1e-5 and worst_hess < 1e-4
    _record(1, "score/Hessian finite-difference equivalence", ok,
            f"max rel err score {worst_score:.2e}, hessian {worst_hess:.2e}")
    assert ok


def test_criterion_2_figure1_unimodality():
    cfg = load_experiment(CONFIGS / "figure1.toml")
    path = DiffusionPath(cfg.base, cfg.target, cfg.schedule)
    geo = GeometricPath(cfg.base, cfg.target, cfg.schedule)
    lambdas = [round(0.1 * k, 1) for k in range(1, 10)]
    xs = np.linspace(-16.0, 26.0, 841)
    diff_modes, geo_modes = [], []
    for lam in lambdas:
        dens = np.asarray(path.marginal_at_lambda(lam).density(xs[:, None]))
        diff_modes.append(diagnostics.mode_count(dens, prominence=0.01))
        gdens = np.asarray(geo.density(lam, xs[:, None]))
        geo_modes.append(diagnostics.mode_count(gdens, prominence=0.01))
    ok = all(m == 1 for m in diff_modes) and any(m >= 2 for m in geo_modes)
    _record(2, "Figure-1 path unimodality comparison", ok,
            f"diffusion modes {diff_modes}, geometric modes {geo_modes}")
    assert ok


def test_criterion_3_lipschitz_bounds(heavy_path):
    cfg2 = load_experiment(CONFIGS / "mixture2d.toml")
    gauss_path = DiffusionPath(cfg2.base, cfg2.target, cfg2.schedule)
    hpath, _ = heavy_path
    violations = []
    margins = []
    for label, path in (("gaussian/equal-cov-2d", gauss_path),
                        ("heavy/student-t", hpath)):
        for t in np.linspace(0.0, path.schedule.horizon, 20):
            bound = path.lipschitz_bound(t)
            sup = diagnostics.hessian_sup_estimate(path, t, n_points=1000, seed=17)
            margins.append(sup / bound)
            if sup > bound * (1 + 1e-12):
                violations.append((label, float(t), sup, bound))
    ok = not violations
    _record(3, "Lipschitz bound dominates empirical Hessian sup", ok,
            f"max sup/bound ratio {max(margins):.3f}, violations {len(violations)}")
    assert ok, violations


def test_criterion_4_action_bounds():
    results = {}
    for name in SHIPPED:
        cfg = load_experiment(CONFIGS / f"{name}.toml")
        path = DiffusionPath(cfg.base, cfg.target, cfg.schedule)
        bound = path.action_bound()
        grid = np.linspace(0.0, cfg.schedule.horizon, 201)
        est = path.action_estimate(grid, n_samples=20000, seed=cfg.sampler.seed)
        results[name] = (est, bound.value)
        assert est <= bound.value, (name, est, bound.value)

    # all-Gaussian path: the estimate matches the analytic action within 5%
    cfg = load_experiment(CONFIGS / "gauss_n34.toml")
    sched = cfg.schedule

    def speed_sq(t):
        lam = sched.lambda_(t)
        dot = sched.lambda_dot(t)
        dm = 3.0 * dot / (2.0 * math.sqrt(lam)) if lam > 0 else 0.0
        ds = 3.0 * dot / (2.0 * math.sqrt(1.0 + 3.0 * lam))
        return dm ** 2 + ds ** 2

    analytic, _ = quad(speed_sq, 0.0, 1.0, limit=200)
    path = DiffusionPath(cfg.base, cfg.target, cfg.schedule)
    est = path.action_estimate(np.linspace(0, 1, 401))
    gauss_ok = abs(est / analytic - 1.0) < 0.05
    ok = gauss_ok
    detail = ", ".join(f"{k}: {e:.3g}<={b:.3g}" for k, (e, b) in results.items())
    _record(4, "action estimate below closed-form bound", ok,
            detail + f"; all-Gaussian match {est/analytic - 1.0:+.3%}")
    assert ok


def test_criterion_5_remark_b6_counterexample():
    mix = remark_b6_mixture()
    report = targets.check_mixture_smoothness(mix)
    flagged = (not report.lipschitz_ok) and bool(report.failed_pairs)

    xs = np.linspace(5.0, 50.0, 46)
    pts = np.stack([xs, np.zeros_like(xs)], axis=1)
    norms = np.linalg.norm(mix.hessian_log_density(pts), ord=2, axis=(1, 2))
    slope = float(np.polyfit((xs - 1.0) ** 2, norms, 1)[0])
    stated = math.sqrt(2.0) / (3.0 + math.sqrt(2.0))
    slope_ok = abs(slope / stated - 1.0) < 0.05
    derived = 3.0 * math.sqrt(2.0) - 4.0  # sqrt(2) / (3 + 2 sqrt(2))

    ok = flagged and slope_ok
    _record(5, "Remark-B.6 counterexample growth and flagging", ok,
            f"pair flagged {flagged}; fitted slope {slope:.5f} vs stated "
            f"{stated:.5f} (the displayed constant; the derivation gives "
            f"{derived:.5f}, which the fit matches to "
            f"{abs(slope / derived - 1.0):.2%})")
    assert flagged
    assert slope_ok, (
        "fitted quadratic coefficient matches the derivation's "
        "sqrt(2)/(3+2 sqrt(2)) = 0.24264, not the displayed sqrt(2)/(3+sqrt(2)); "
        "a(1-a) <= 1/4 rules the displayed value out for any posterior weights")


def test_criterion_6_sampler_stationarity():
    cfg = load_experiment(CONFIGS / "gaussian_sanity.toml")
    path = DiffusionPath(cfg.base, cfg.target, cfg.schedule)
    out = dalmc_run(path, cfg.sampler)
    xs = out.kept[:, 0]
    mean, var = float(xs.mean()), float(xs.var())
    ok = abs(mean) < 0.03 and abs(var - 1.0) < 0.05
    _record(6, "stationary sanity run (pi = nu = N(0,1))", ok,
            f"mean {mean:+.4f}, variance {var:.4f}")
    assert ok


def test_criterion_7_convergence_trends():
    cfg = load_experiment(CONFIGS / "gauss_n34.toml")
    path = DiffusionPath(cfg.base, cfg.target, cfg.schedule)
    chains, kappa, seeds = 10_000, 0.01, 20

    def run_w2(seed, n_steps, bias):
        pert = (Perturbation("additive-bias", bias=(bias,))
                if bias > 0 else Perturbation())
        sampler = SamplerConfig(kappa=kappa, n_steps=n_steps, chains=chains,
                                seed=seed, perturbation=pert)
        out = dalmc_run(path, sampler)
        exact = cfg.target.sample(chains, np.random.default_rng((seed, 12345)))
        return diagnostics.w2_1d(out.kept[:, 0], exact[:, 0])

    ms = (250, 500, 1000, 2000)
    m_curve = np.mean([[run_w2(s, m, 0.0) for m in ms]
                       for s in range(seeds)], axis=0)
    biases = (0.0, 0.1, 0.3, 1.0)
    b_curve = np.mean([[run_w2(s, 2000, b) for b in biases]
                       for s in range(seeds)], axis=0)
    m_ok = bool(np.all(np.diff(m_curve) <= 0))
    b_ok = bool(np.all(np.diff(b_curve) >= 0))
    ok = m_ok and b_ok
    _record(7, "W2 trends in step count and score bias", ok,
            f"vs M {np.round(m_curve, 4).tolist()} (non-increasing {m_ok}); "
            f"vs bias {np.round(b_curve, 4).tolist()} (non-decreasing {b_ok})")
    assert ok


def test_criterion_8_heavy_tailed_moments_and_snis(heavy_path, heavy_oracle):
    path, cfg = heavy_path
    out = dalmc_run(path, cfg.sampler, oracle=heavy_oracle)
    m2 = float(np.mean(out.kept[:, 0] ** 2))
    target_m2 = cfg.target.second_moment()  # sigma^2 d alpha/(alpha-2) = 2
    moment_ok = abs(m2 / target_m2 - 1.0) < 0.15

    worst = 0.0
    probes = [(t, x) for t in np.linspace(0.15, 0.9, 10)
              for x in (-3.0, -1.0, 0.5, 2.0, 4.0)]
    for t, xv in probes:
        ref = path.marginal(t).score(np.array([xv]))[0]
        est, ess, _ = path.snis_score(t, np.array([xv]),
                                      n_particles=400_000, seed=29)
        worst = max(worst, abs(est[0] - ref) / abs(ref))
    snis_ok = worst < 1e-3
    ok = moment_ok and snis_ok
    _record(8, "heavy-tailed moments and SNIS cross-check", ok,
            f"final m2 {m2:.3f} vs {target_m2:.1f} "
            f"({abs(m2/target_m2-1):.1%}); worst SNIS rel err {worst:.2e}")
    assert ok


def test_criterion_9_planner_self_consistency():
    # one global constant across eps and across the Gaussian-path examples
    C = 8.0
    examples = []
    for name in ("gaussian_sanity", "gauss_n34", "mixture2d", "figure1"):
        cfg = load_experiment(CONFIGS / f"{name}.toml")
        path = DiffusionPath(cfg.base, cfg.target, cfg.schedule)
        profile = path.lipschitz_profile(np.linspace(0, cfg.schedule.horizon, 33))
        examples.append((name, path.dim, cfg.target.second_moment(),
                         profile.l_max, cfg.schedule.horizon))
    rhs_ok = True
    worst = 0.0
    for eps in (1.0, 0.5, 0.25):
        for name, d, m2, l_max, horizon in examples:
            plan = plan_gaussian(PlannerInput(eps=eps, d=d, M2=m2, L_max=l_max))
            rhs = kl_rhs_gaussian(plan.kappa, plan.n_steps, l_max, m2, d,
                                  horizon * l_max ** 2, eps)
            worst = max(worst, rhs / eps ** 2)
            rhs_ok &= rhs <= C * eps ** 2

    inp = PlannerInput(eps=0.1, d=2, M2=2.0, L_max=4.0, alpha=4.0)
    heavy_ok = plan_heavy(inp).n_steps == plan_gaussian(inp).n_steps

    ratios = []
    for d in (2, 4, 8):
        p = plan_relaxed(PlannerInput(eps=1.0, d=d, M2=float(d),
                                      L_pi=math.sqrt(d), K_pi=float(d) ** 2))
        ratios.append(p.n_steps / (d ** 4 * math.sqrt(d)))
    relaxed_ok = all(abs(r / ratios[0] - 1.0) < 0.10 for r in ratios)

    ok = rhs_ok and heavy_ok and relaxed_ok
    _record(9, "planner self-consistency", ok,
            f"max RHS/eps^2 {worst:.2f} vs C={C}; heavy==gaussian {heavy_ok}; "
            f"relaxed d^4 L order {relaxed_ok}")
    assert ok


def test_criterion_10_figure1_determinism(tmp_path):
    run_experiment(CONFIGS / "figure1.toml", out_override=tmp_path / "a")
    run_experiment(CONFIGS / "figure1.toml", out_override=tmp_path / "b")
    same = (tmp_path / "a" / "samples.csv").read_bytes() == \
        (tmp_path / "b" / "samples.csv").read_bytes()
    heat_same = (tmp_path / "a" / "heatmap.csv").read_bytes() == \
        (tmp_path / "b" / "heatmap.csv").read_bytes()
    ok = same and heat_same
    _record(10, "figure1 rerun byte-identical", ok,
            f"samples identical {same}, heatmap identical {heat_same}")
    assert ok
