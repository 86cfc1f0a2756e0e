"""Interpolation paths between a base distribution and a target.

A :class:`DiffusionPath` carries the marginals of
``X_t = sqrt(lambda_t) X + sqrt(1 - lambda_t) Z`` with ``X`` from the target
and ``Z`` from the base (mean-zero isotropic Gaussian or Student t).  For a
Gaussian base with Gaussian-mixture-like targets the marginal is available in
closed form at every ``t``; otherwise the marginal density and score are
evaluated by 1D quadrature and by self-normalized importance sampling over the
smoothing posterior.

The module also evaluates the per-time score-Lipschitz bounds (with the
Poincare constants of the smoothing posterior where the target is strongly
convex outside a ball), the closed-form action bounds for both schedule
conditions, and a discrete metric-derivative estimate of the action itself.

:class:`GeometricPath` provides the annealing comparison: its score is the
convex combination of the endpoint scores and its density is the normalized
geometric mean.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import ndtri
from scipy.stats import t as student_t_dist

from .schedules import Schedule, schedule_constant
from .targets import (
    CompactPlusNoise,
    Gaussian,
    GaussianMixture,
    SmoothedUniformMixture,
    StudentT,
    Target,
    check_mixture_smoothness,
)

__all__ = [
    "DiffusionPath",
    "GeometricPath",
    "LipschitzProfile",
    "ActionBound",
    "TargetConstants",
    "target_constants",
]

_ENDPOINT_TOL = 1e-14


# ---------------------------------------------------------------------------
# target smoothness constants used by the bound formulas


@dataclass
class TargetConstants:
    """Constants of the target feeding the Lipschitz/action bound formulas."""

    l_pi: float | None = None          # score Lipschitz constant
    m_pi: float | None = None          # strong convexity outside radius r
    r: float | None = None
    c_pi: float | None = None          # sup ||score||^2 where finite
    hessian_decay: tuple | None = None  # (a1, a2, b1, b2, r) quadratic decay


def target_constants(target: Target) -> TargetConstants:
    """Best available closed-form or report-backed constants for a target."""
    if isinstance(target, Gaussian):
        eig = np.linalg.eigvalsh(target.precision)
        return TargetConstants(l_pi=float(eig.max()), m_pi=float(eig.min()), r=0.0)
    if isinstance(target, StudentT):
        a, d = target.dof, target.dim
        smin, smax = target._scale_eig_min, target._scale_eig_max
        decay = (a * smin ** 2 / (2 * (a + d) * smax),
                 smin ** 2 / (2 * (a + d) * smax ** 2),
                 a * smin / (a + d),
                 smin / ((a + d) * smax),
                 0.0)
        return TargetConstants(l_pi=target.lipschitz_constant(),
                               c_pi=target.score_sup_squared(),
                               hessian_decay=decay)
    if isinstance(target, GaussianMixture):
        report = check_mixture_smoothness(target)
        if not report.lipschitz_ok:
            return TargetConstants()
        out = TargetConstants(l_pi=report.L_pi)
        if report.strongly_convex_outside_ball:
            out.m_pi, out.r = report.M_pi, report.r
        return out
    if isinstance(target, SmoothedUniformMixture):
        return _smoothed_uniform_constants(target)
    if isinstance(target, CompactPlusNoise):
        noise = target.noise
        if isinstance(noise, StudentT):
            a, d = noise.dof, noise.dim
            smin = noise._scale_eig_min
            c_pi = (a + d) ** 2 / (2.0 * a * smin)
            l_pi = noise.lipschitz_constant() + c_pi
            return TargetConstants(l_pi=l_pi, c_pi=c_pi)
        # Gaussian noise: the posterior over atoms has bounded support
        tau2 = float(np.linalg.eigvalsh(noise.cov).min())
        spread = float(np.sum(
            (target.locations - target.locations.mean(axis=0)) ** 2, axis=1).max())
        l_pi = 1.0 / tau2 + spread / tau2 ** 2
        return TargetConstants(l_pi=l_pi)
    return TargetConstants()


def _smoothed_uniform_constants(target, n_grid=80_001):
    lo, hi = target.support
    # keep the scan inside the region where both parts stay representable
    margin = 30.0 * max(math.sqrt(target._gv), math.sqrt(target._sv))
    xs = np.linspace(min(lo, target._gm) - margin, max(hi, target._gm) + margin, n_grid)
    h = target.hessian_log_density(xs[:, None])[:, 0, 0]
    tail = max(1.0 / target._gv, 1.0 / target._sv)
    l_pi = max(float(np.abs(h).max()), tail) * (1.0 + 1e-9)
    m_pi = 0.5 * min(1.0 / target._gv, 1.0 / target._sv)
    neg_h = -h
    bad = np.nonzero(neg_h < m_pi)[0]
    r = float(np.abs(xs[bad]).max()) * (1.0 + 1e-9) if bad.size else 0.0
    return TargetConstants(l_pi=l_pi, m_pi=m_pi, r=r)


# ---------------------------------------------------------------------------
# diffusion path


@dataclass
class LipschitzProfile:
    """Per-time Lipschitz bounds L_t along the path."""

    t_grid: np.ndarray
    values: np.ndarray
    tags: list
    l_max: float
    poincare: list = field(default_factory=list)


@dataclass
class ActionBound:
    value: float
    condition: str      # which schedule condition produced the bound
    c_lambda: float


class DiffusionPath:
    """Marginals, bounds and sampling for a diffusion interpolation path."""

    def __init__(self, base, target: Target, schedule: Schedule,
                 constants: TargetConstants | None = None):
        if not isinstance(base, (Gaussian, StudentT)):
            raise ValueError("base must be Gaussian or StudentT")
        if np.any(np.asarray(base.mean()) != 0.0):
            raise ValueError("base must be centered")
        if base.dim != target.dim:
            raise ValueError("base and target dimensions differ")
        self.base = base
        self.target = target
        self.schedule = schedule
        self.dim = target.dim
        if isinstance(base, Gaussian):
            self.sigma = base.isotropic_sigma
            self.heavy_tailed = False
        else:
            if base.sigma is None:
                base_sigma = math.sqrt(base._scale_eig_min)
                if base._scale_eig_min != base._scale_eig_max:
                    raise ValueError("base scale must be isotropic")
                self.sigma = base_sigma
            else:
                self.sigma = base.sigma
            self.heavy_tailed = True
            self.alpha = base.dof
        self._constants = constants

    # -- plumbing ------------------------------------------------------------

    @property
    def constants(self) -> TargetConstants:
        if self._constants is None:
            self._constants = target_constants(self.target)
        return self._constants

    def lam(self, t):
        return self.schedule.lambda_(t)

    def base_score_lipschitz(self):
        """Exact score-Lipschitz constant of the base distribution."""
        if self.heavy_tailed:
            return (self.alpha + self.dim) / (self.alpha * self.sigma ** 2)
        return 1.0 / self.sigma ** 2

    def _noise_kernel(self, lam):
        scale2 = self.sigma ** 2 * (1.0 - lam)
        if self.heavy_tailed:
            return StudentT(np.zeros(self.dim), math.sqrt(scale2), self.alpha)
        return Gaussian(np.zeros(self.dim), scale2 * np.eye(self.dim))

    # -- marginals -----------------------------------------------------------

    def marginal(self, t):
        """Closed-form marginal at time t, or a quadrature-backed one (d = 1).

        Returns the base/target objects exactly at the endpoints.
        """
        return self.marginal_at_lambda(float(self.lam(t)))

    def marginal_at_lambda(self, lam):
        """Marginal indexed by the schedule value instead of time."""
        lam = float(lam)
        if lam <= _ENDPOINT_TOL:
            return self.base
        if lam >= 1.0 - _ENDPOINT_TOL:
            return self.target
        closed = self._closed_form_marginal(lam)
        if closed is not None:
            return closed
        if self.dim == 1:
            return QuadratureMarginal(self, lam)
        if self.dim == 2:
            return QuadratureMarginal2D(self, lam)
        raise ValueError("no closed-form marginal and quadrature needs d <= 2")

    def _closed_form_marginal(self, lam):
        if self.heavy_tailed:
            return None
        s2 = self.sigma ** 2 * (1.0 - lam)
        tgt = self.target
        if isinstance(tgt, Gaussian):
            return Gaussian(math.sqrt(lam) * tgt.mean(),
                            lam * tgt.cov + s2 * np.eye(self.dim))
        if isinstance(tgt, GaussianMixture):
            return GaussianMixture(tgt.weights, math.sqrt(lam) * tgt.means,
                                   lam * tgt.covs + s2 * np.eye(self.dim))
        if isinstance(tgt, CompactPlusNoise) and isinstance(tgt.noise, Gaussian):
            covs = np.broadcast_to(lam * tgt.noise.cov + s2 * np.eye(self.dim),
                                   (len(tgt.weights), self.dim, self.dim))
            return GaussianMixture(tgt.weights, math.sqrt(lam) * tgt.locations, covs)
        if isinstance(tgt, SmoothedUniformMixture):
            root = math.sqrt(lam)
            return SmoothedUniformMixture.with_parameters(
                w_gauss=tgt._wg,
                gauss_mean=root * tgt._gm,
                gauss_var=lam * tgt._gv + s2,
                lo=root * tgt._lo,
                hi=root * tgt._hi,
                smooth_var=lam * tgt._sv + s2,
            )
        return None

    def has_closed_form(self):
        return self._closed_form_marginal(0.5) is not None

    def marginal_density(self, t, x):
        m = self.marginal(t)
        if isinstance(m, QuadratureMarginal) and self.dim > 2:
            raise ValueError("quadrature marginals require d <= 2")
        return m.density(x)

    def marginal_score(self, t, x, method="auto", n_particles=10_000, seed=0,
                       ess_floor=50):
        """Score of the marginal at (t, x).

        ``method`` is one of "auto" (closed form, else quadrature for d = 1),
        "quadrature", or "snis".  SNIS returns only the score; use
        :meth:`snis_score` for the effective-sample-size report.
        """
        lam = float(self.lam(t))
        if method == "snis" and _ENDPOINT_TOL < lam < 1.0 - _ENDPOINT_TOL:
            return self.snis_score(t, x, n_particles=n_particles, seed=seed,
                                   ess_floor=ess_floor)[0]
        m = self.marginal(t)
        if method == "quadrature" and isinstance(m, (Gaussian, GaussianMixture,
                                                     SmoothedUniformMixture)):
            if self.dim != 1:
                raise ValueError("quadrature cross-checks need d = 1")
            m = QuadratureMarginal(self, lam)
        return m.score(x)

    def marginal_hessian(self, t, x):
        return self.marginal(t).hessian_log_density(x)

    def sample_marginal(self, t, n, rng):
        """Exact marginal draws through the interpolant representation."""
        rng = np.random.default_rng(rng)
        lam = float(self.lam(t))
        x = self.target.sample(n, rng)
        z = self.base.sample(n, rng)
        return math.sqrt(lam) * x + math.sqrt(1.0 - lam) * z

    # -- self-normalized importance sampling ----------------------------------

    def snis_score(self, t, x, n_particles=10_000, seed=0, ess_floor=50,
                   max_particles=1_000_000):
        """SNIS estimate of the marginal score at a single point x.

        The smoothing posterior rho_{t,x}(y) ~ target_lam(y) kernel(x - y) is
        integrated with a proposal centered at x whose scale matches the
        noising kernel (Student t proposal under the heavy-tailed base, so the
        importance weights stay bounded).  Returns (score, ess, n_used);
        raises if the ESS stays below the floor after doubling up to the cap.
        """
        x = np.asarray(x, dtype=float).reshape(self.dim)
        lam = float(self.lam(t))
        if lam <= _ENDPOINT_TOL or lam >= 1.0 - _ENDPOINT_TOL:
            raise ValueError("SNIS applies to interior times only")
        kernel = self._noise_kernel(lam)
        n = int(n_particles)
        attempt = 0
        while True:
            rng = np.random.default_rng((seed, attempt))
            y = self._snis_proposal_draws(x, lam, n, rng)
            log_w = (self._scaled_target_log_density(y, lam)
                     + kernel.log_density(x - y)
                     - self._snis_proposal_logpdf(y, x, lam))
            log_w -= log_w.max()
            w = np.exp(log_w)
            ess = float(w.sum() ** 2 / np.sum(w ** 2))
            if ess >= ess_floor:
                g = kernel.score(x - y)
                score = np.sum(w[:, None] * g, axis=0) / w.sum()
                return score, ess, n
            if 2 * n > max_particles:
                raise RuntimeError(
                    f"SNIS effective sample size {ess:.1f} below floor "
                    f"{ess_floor} at the particle cap")
            n *= 2
            attempt += 1

    def _scaled_target_log_density(self, y, lam):
        root = math.sqrt(lam)
        return (self.target.log_density(y / root)
                - self.dim * math.log(root))

    def _proposal_scale(self, lam):
        return self.sigma * math.sqrt(1.0 - lam) * (1.5 if self.heavy_tailed else 1.0)

    def _snis_proposal_draws(self, x, lam, n, rng):
        scale = self._proposal_scale(lam)
        if self.heavy_tailed:
            if self.dim == 1:
                u = (np.arange(n) + rng.random(n)) / n  # stratified in 1D
                z = student_t_dist.ppf(u, df=self.alpha)[:, None]
            else:
                z = (rng.standard_normal((n, self.dim))
                     * np.sqrt(self.alpha / rng.chisquare(self.alpha, n))[:, None])
            return x + scale * z
        if self.dim == 1:
            u = (np.arange(n) + rng.random(n)) / n
            return x + scale * ndtri(u)[:, None]
        return x + scale * rng.standard_normal((n, self.dim))

    def _snis_proposal_logpdf(self, y, x, lam):
        scale = self._proposal_scale(lam)
        if self.heavy_tailed:
            prop = StudentT(x, scale, self.alpha)
        else:
            prop = Gaussian(x, scale ** 2 * np.eye(self.dim))
        return prop.log_density(y)

    # -- Lipschitz bounds ------------------------------------------------------

    def lipschitz_bound(self, t):
        """Finite bound on the Lipschitz constant of the marginal score at t."""
        lam = float(self.lam(t))
        if lam <= _ENDPOINT_TOL:
            return self.base_score_lipschitz()
        c = self.constants
        if lam >= 1.0 - _ENDPOINT_TOL:
            if c.l_pi is None:
                raise ValueError("target smoothness constant L_pi unavailable")
            return c.l_pi
        if self.heavy_tailed:
            return self._heavy_lipschitz(lam, c)
        branches = []
        marg = self._closed_form_marginal(lam)
        if isinstance(marg, GaussianMixture) and marg.equal_covariances():
            branches.append(marg.analytic_lipschitz_constant())
        elif isinstance(marg, Gaussian):
            branches.append(marg.lipschitz_constant())
        elif isinstance(marg, SmoothedUniformMixture):
            branches.append(_grid_hessian_sup(marg))
        if c.l_pi is not None and c.m_pi is not None and c.m_pi > 0:
            branches.append(self._convex_outside_ball_lipschitz(lam, c))
        if c.l_pi is not None and c.hessian_decay is not None:
            branches.append(self._hessian_decay_lipschitz(lam, c))
        if not branches:
            raise ValueError("no Lipschitz bound branch available for this target")
        return float(min(branches))

    def _heavy_lipschitz(self, lam, c):
        if c.l_pi is None or c.c_pi is None:
            raise ValueError("heavy-tailed bound needs L_pi and C_pi")
        a, d, s2 = self.alpha, self.dim, self.sigma ** 2
        l_base = self.base_score_lipschitz()
        via_base = l_base / (1.0 - lam) + (a + d) ** 2 / (2.0 * a * s2 * (1.0 - lam))
        via_target = (c.l_pi + c.c_pi) / lam
        return float(min(via_base, via_target))

    def _posterior_poincare(self, lam, c):
        """Poincare constant of the smoothing posterior, independent of x."""
        s2 = self.sigma ** 2 * (1.0 - lam)
        l_pi = c.l_pi
        if c.m_pi is not None and c.m_pi > 0:
            exponent = 16.0 * (l_pi + lam / s2) * c.r ** 2
            hs = (2.0 / (c.m_pi / lam + 1.0 / s2) * math.exp(exponent)
                  if exponent < 700 else math.inf)
        else:
            a1, a2, b1, b2, r_decay = c.hessian_decay
            r_t2 = max(lam * r_decay ** 2, (2.0 * s2 - lam * a1) / a2)
            exponent = 16.0 * (l_pi / lam + 1.0 / s2) * max(r_t2, 0.0)
            hs = 4.0 * s2 * math.exp(exponent) if exponent < 700 else math.inf
        lam_tilde = self.sigma ** 2 * l_pi / (1.0 + self.sigma ** 2 * l_pi)
        if lam > lam_tilde:
            be = 1.0 / (1.0 / s2 - l_pi / lam)
            return min(hs, be)
        return hs

    def _ab_bound(self, lam, c, c_pi_rho):
        s2 = self.sigma ** 2 * (1.0 - lam)
        a_t = min(1.0 / s2, c.l_pi / lam)
        lower_gauss = (1.0 / s2) * (1.0 - c_pi_rho / s2) if math.isfinite(c_pi_rho) else -math.inf
        lower_target = -(c.l_pi / lam) * (1.0 + c_pi_rho * c.l_pi / lam) \
            if math.isfinite(c_pi_rho) else -math.inf
        b_t = max(lower_gauss, lower_target)
        if not math.isfinite(b_t):
            return math.inf
        return float(max(a_t, abs(b_t)))

    def _convex_outside_ball_lipschitz(self, lam, c):
        return self._ab_bound(lam, c, self._posterior_poincare(lam, c))

    def _hessian_decay_lipschitz(self, lam, c):
        return self._ab_bound(lam, c, self._posterior_poincare(lam, c))

    def lipschitz_profile(self, t_grid) -> LipschitzProfile:
        t_grid = np.asarray(t_grid, dtype=float)
        values, tags, poincare = [], [], []
        for t in t_grid:
            values.append(self.lipschitz_bound(t))
            lam = float(self.lam(t))
            if _ENDPOINT_TOL < lam < 1 - _ENDPOINT_TOL and not self.heavy_tailed \
                    and self.constants.l_pi is not None \
                    and (self.constants.m_pi or self.constants.hessian_decay):
                poincare.append(self._posterior_poincare(lam, self.constants))
            else:
                poincare.append(None)
            tags.append(self._bound_tag(lam))
        values = np.asarray(values)
        return LipschitzProfile(t_grid=t_grid, values=values, tags=tags,
                                l_max=float(values.max()), poincare=poincare)

    def _bound_tag(self, lam):
        if lam <= _ENDPOINT_TOL:
            return "base"
        if lam >= 1 - _ENDPOINT_TOL:
            return "target"
        if self.heavy_tailed:
            return "heavy-tail"
        marg = self._closed_form_marginal(lam)
        if isinstance(marg, (Gaussian, GaussianMixture, SmoothedUniformMixture)):
            return "marginal-closed-form"
        return "posterior-poincare"

    def integrated_squared_lipschitz(self, n_grid=257):
        ts = np.linspace(0.0, self.schedule.horizon, n_grid)
        vals = np.array([self.lipschitz_bound(t) for t in ts]) ** 2
        return float(np.trapezoid(vals, ts))

    # -- action ----------------------------------------------------------------

    def action_bound(self) -> ActionBound:
        """Closed-form action bound; picks the sharper admissible condition."""
        m2 = self.target.second_moment()
        d, s2 = self.dim, self.sigma ** 2
        candidates = []
        c7 = schedule_constant(self.schedule, "A7-sqrt")
        if self.heavy_tailed:
            if math.isfinite(c7):
                noise_m2 = s2 * d * self.alpha / (self.alpha - 2.0)
                candidates.append(
                    ActionBound(c7 * math.pi / 8.0 * (m2 + noise_m2), "A7-sqrt", c7))
        else:
            if math.isfinite(c7):
                candidates.append(
                    ActionBound(c7 * math.pi / 8.0 * (m2 + s2 * d), "A7-sqrt", c7))
            c5 = schedule_constant(self.schedule, "A5-log")
            if math.isfinite(c5):
                sigma_pi2 = max(s2, m2 / d)
                value = 0.5 * c5 * (2.0 * m2 + d * (3.0 * sigma_pi2 - s2))
                candidates.append(ActionBound(value, "A5-log", c5))
        if not candidates:
            raise ValueError("schedule constant is infinite for the required condition")
        return min(candidates, key=lambda b: b.value)

    def action_estimate(self, t_grid=None, n_samples=20_000, seed=0, l_max=None):
        """Riemann estimate of the action from discrete metric derivatives.

        Uses the exact Gaussian W2 formula when every marginal is Gaussian and
        a sorted-sample quantile coupling (common underlying draws) for d = 1.
        """
        if t_grid is None:
            t_grid = np.linspace(0.0, self.schedule.horizon, 201)
        t_grid = np.asarray(t_grid, dtype=float)
        if t_grid.size < 100:
            raise ValueError("action grid needs at least 100 points")
        delta = float(np.diff(t_grid).max())
        if l_max is not None and delta * l_max > 1.0:
            warnings.warn("action grid too coarse for the Lipschitz scale")

        gauss = (not self.heavy_tailed) and isinstance(self.target, Gaussian)
        if not gauss and (not self.heavy_tailed) \
                and isinstance(self.target, GaussianMixture) \
                and self.target.n_components == 1:
            gauss = True
        if gauss:
            w2 = self._gaussian_w2_fn()
        elif self.dim == 1:
            rng = np.random.default_rng(seed)
            x = self.target.sample(n_samples, rng)[:, 0]
            z = self.base.sample(n_samples, rng)[:, 0]

            def w2(t1, t2):
                l1, l2 = float(self.lam(t1)), float(self.lam(t2))
                a = math.sqrt(l1) * x + math.sqrt(1 - l1) * z
                b = math.sqrt(l2) * x + math.sqrt(1 - l2) * z
                return math.sqrt(float(np.mean((np.sort(a) - np.sort(b)) ** 2)))
        else:
            # assignment coupling on common draws; small n keeps it tractable
            from scipy.optimize import linear_sum_assignment
            rng = np.random.default_rng(seed)
            n = min(n_samples, 256)
            x = self.target.sample(n, rng)
            z = self.base.sample(n, rng)

            def w2(t1, t2):
                l1, l2 = float(self.lam(t1)), float(self.lam(t2))
                a = math.sqrt(l1) * x + math.sqrt(1 - l1) * z
                b = math.sqrt(l2) * x + math.sqrt(1 - l2) * z
                cost = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
                rows, cols = linear_sum_assignment(cost)
                return math.sqrt(float(cost[rows, cols].mean()))

        speeds = np.empty_like(t_grid)
        for i, t in enumerate(t_grid):
            if i == 0:
                dt = t_grid[1] - t_grid[0]
                speeds[i] = w2(t_grid[0], t_grid[1]) / dt
            elif i == t_grid.size - 1:
                dt = t_grid[-1] - t_grid[-2]
                speeds[i] = w2(t_grid[-2], t_grid[-1]) / dt
            else:
                dt = t_grid[i + 1] - t_grid[i - 1]
                speeds[i] = w2(t_grid[i - 1], t_grid[i + 1]) / dt
        return float(np.trapezoid(speeds ** 2, t_grid))

    def _gaussian_w2_fn(self):
        tgt = self.target
        if isinstance(tgt, GaussianMixture):
            mean, cov = tgt.means[0], tgt.covs[0]
        else:
            mean, cov = tgt.mean(), tgt.cov
        eig, _ = np.linalg.eigh(cov)
        s2 = self.sigma ** 2

        def w2(t1, t2):
            l1, l2 = float(self.lam(t1)), float(self.lam(t2))
            dm2 = (math.sqrt(l1) - math.sqrt(l2)) ** 2 * float(mean @ mean)
            r1 = np.sqrt(l1 * eig + (1 - l1) * s2)
            r2 = np.sqrt(l2 * eig + (1 - l2) * s2)
            return math.sqrt(dm2 + float(np.sum((r1 - r2) ** 2)))

        return w2


def _grid_hessian_sup(marginal_1d, n_grid=40_001):
    lo, hi = marginal_1d.support
    gm, gv = marginal_1d._gm, marginal_1d._gv
    width = 8.0 * math.sqrt(max(gv, marginal_1d._sv))
    xs = np.linspace(min(lo, gm) - width, max(hi, gm) + width, n_grid)
    h = marginal_1d.hessian_log_density(xs[:, None])[:, 0, 0]
    tails = max(1.0 / gv, 1.0 / marginal_1d._sv)
    return max(float(np.abs(h).max()), tails) * (1.0 + 1e-9)


def grid_marginal_moments(path, lam, xs, order=2):
    """Vectorized trapezoid moments of the smoothing posterior at many x.

    Returns (I0, I1, I2[:order]) with I0 the marginal density, I1 the score
    numerator and I2 the Hessian numerator.  The integration grid resolves
    both the target bulk and the noising-kernel peak near x / sqrt(lam).
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    bulk = 12.0 * math.sqrt(max(path.target.second_moment(), 1.0))
    kernel_width_u = path.sigma * math.sqrt(1.0 - lam) / math.sqrt(lam)
    du = min(kernel_width_u / 8.0, bulk / 150.0)
    reach = max(np.abs(xs).max() / math.sqrt(lam) + 25.0 * kernel_width_u, bulk)
    n_u = min(int(2 * reach / du) + 1, 200_001)
    u = np.linspace(-reach, reach, n_u)
    w = np.full(n_u, u[1] - u[0])
    w[0] = w[-1] = 0.5 * (u[1] - u[0])
    pdf_u = path.target.density(u[:, None]) * w
    kernel = path._noise_kernel(lam)
    root = math.sqrt(lam)

    i0 = np.empty(xs.size)
    i1 = np.empty(xs.size) if order >= 1 else None
    i2 = np.empty(xs.size) if order >= 2 else None
    chunk = max(1, int(4_000_000 // n_u))
    for a in range(0, xs.size, chunk):
        b = min(a + chunk, xs.size)
        z = xs[a:b, None] - root * u[None, :]
        flat = z.reshape(-1, 1)
        kd = kernel.density(flat).reshape(z.shape)
        wmat = kd * pdf_u[None, :]
        i0[a:b] = wmat.sum(axis=1)
        if order >= 1:
            ks = kernel.score(flat).reshape(z.shape)
            i1[a:b] = (wmat * ks).sum(axis=1)
        if order >= 2:
            kh = kernel.hessian_log_density(flat).reshape(z.shape)
            i2[a:b] = (wmat * (ks * ks + kh)).sum(axis=1)
    return i0, i1, i2


class QuadratureMarginal:
    """1D marginal density/score/Hessian via adaptive quadrature.

    Pointwise evaluations use panelled adaptive quadrature (oracle grade);
    batches of 16 points or more go through the vectorized grid moments.
    """

    def __init__(self, path: DiffusionPath, lam: float):
        self.path = path
        self.lam = lam
        self.dim = 1
        self._kernel = path._noise_kernel(lam)
        self._root = math.sqrt(lam)

    def _moments(self, x, order):
        """Integrals of target(u) * kernel(x - sqrt(lam) u) * g^k, k <= order."""
        tgt, kernel = self.path.target, self._kernel
        root = self._root
        x = float(x)

        def integrand(u, k):
            u_arr = np.array([u])
            z = np.array([x - root * u])
            w = tgt.density(u_arr) * kernel.density(z)
            if k == 0:
                return float(w)
            g = kernel.score(z)[0]
            if k == 1:
                return float(w * g)
            gp = kernel.hessian_log_density(z)[0, 0]
            return float(w * (g * g + gp))

        center = x / root  # kernel peak in the target variable
        width = max(self.path.sigma * math.sqrt(1.0 - self.lam) / root, 1e-6)
        bulk = 12.0 * math.sqrt(max(tgt.second_moment(), 1.0))
        lo = min(center, -bulk) - 250.0 * max(width, 1.0)
        hi = max(center, bulk) + 250.0 * max(width, 1.0)
        cuts = {lo, hi, -bulk, bulk}
        for mult in (5.0, 30.0):
            cuts.add(min(max(center - mult * width, lo), hi))
            cuts.add(min(max(center + mult * width, lo), hi))
        edges = sorted(cuts)
        out = []
        for k in range(order + 1):
            val = err = 0.0
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                for a, b in zip(edges[:-1], edges[1:]):
                    v, e = integrate.quad(integrand, a, b, args=(k,),
                                          limit=200, epsabs=1e-15, epsrel=1e-9)
                    val += v
                    err += e
            if not math.isfinite(val) or err > max(2e-4 * abs(val), 1e-12):
                raise RuntimeError(
                    f"marginal quadrature did not converge (err {err:.2e})")
            out.append(val)
        return out

    def density(self, x):
        xb = np.atleast_2d(np.asarray(x, dtype=float))
        if xb.shape[0] >= 16:
            vals = grid_marginal_moments(self.path, self.lam, xb[:, 0], order=0)[0]
        else:
            vals = np.array([self._moments(xi[0], 0)[0] for xi in xb])
        return vals[0] if np.asarray(x).ndim == 1 else vals

    def log_density(self, x):
        return np.log(self.density(x))

    def score(self, x):
        xb = np.atleast_2d(np.asarray(x, dtype=float))
        if xb.shape[0] >= 16:
            i0, i1, _ = grid_marginal_moments(self.path, self.lam, xb[:, 0], order=1)
            out = (i1 / i0)[:, None]
        else:
            out = np.empty((xb.shape[0], 1))
            for i, xi in enumerate(xb):
                i0, i1 = self._moments(xi[0], 1)
                out[i, 0] = i1 / i0
        return out[0] if np.asarray(x).ndim == 1 else out

    def hessian_log_density(self, x):
        xb = np.atleast_2d(np.asarray(x, dtype=float))
        if xb.shape[0] >= 16:
            i0, i1, i2 = grid_marginal_moments(self.path, self.lam, xb[:, 0], order=2)
            out = (i2 / i0 - (i1 / i0) ** 2)[:, None, None]
        else:
            out = np.empty((xb.shape[0], 1, 1))
            for i, xi in enumerate(xb):
                i0, i1, i2 = self._moments(xi[0], 2)
                out[i, 0, 0] = i2 / i0 - (i1 / i0) ** 2
        return out[0] if np.asarray(x).ndim == 1 else out


class QuadratureMarginal2D:
    """2D marginal density via nested quadrature; score comes from SNIS."""

    def __init__(self, path: DiffusionPath, lam: float):
        self.path = path
        self.lam = lam
        self.dim = 2
        self._kernel = path._noise_kernel(lam)
        self._root = math.sqrt(lam)

    def density(self, x):
        xb = np.atleast_2d(np.asarray(x, dtype=float))
        tgt, kernel, root = self.path.target, self._kernel, self._root
        out = np.empty(xb.shape[0])
        for i, xi in enumerate(xb):
            span = 60.0 * max(1.0, math.sqrt(tgt.second_moment()))

            def inner(u2, u1):
                u = np.array([u1, u2])
                return float(tgt.density(u) * kernel.density(xi - root * u))

            val, err = integrate.dblquad(inner, -span, span,
                                         lambda _: -span, lambda _: span,
                                         epsabs=1e-10)
            if not math.isfinite(val):
                raise RuntimeError(f"marginal quadrature did not converge (err {err:.2e})")
            out[i] = val
        return out[0] if np.asarray(x).ndim == 1 else out

    def log_density(self, x):
        return np.log(self.density(x))

    def score(self, x):
        raise ValueError("use snis_score for numeric 2D marginal scores")


# ---------------------------------------------------------------------------
# geometric path


@dataclass
class GeometricPath:
    """Annealing path with density proportional to base^(1-lam) target^lam."""

    base: Target
    target: Target
    schedule: Schedule

    def score(self, lam, x):
        return ((1.0 - lam) * np.asarray(self.base.score(x))
                + lam * np.asarray(self.target.score(x)))

    def log_density_unnormalized(self, lam, x):
        return ((1.0 - lam) * np.asarray(self.base.log_density(x))
                + lam * np.asarray(self.target.log_density(x)))

    def density(self, lam, x, lo=None, hi=None):
        """Normalized density on a 1D domain (quadrature normalizer)."""
        if self.base.dim != 1:
            raise ValueError("normalized geometric density implemented for d = 1")
        if lo is None or hi is None:
            m2 = max(self.base.second_moment(), self.target.second_moment())
            span = 12.0 * math.sqrt(m2)
            lo, hi = -span, span
        z, _ = integrate.quad(
            lambda u: math.exp(self.log_density_unnormalized(lam, np.array([u]))),
            lo, hi, limit=400)
        vals = np.exp(self.log_density_unnormalized(lam, x))
        return vals / z
