"""Analytic target distributions with exact density, score, Hessian and sampling.

Every target exposes the same surface: normalized ``density`` / ``log_density``,
``score`` (gradient of the log density), ``hessian_log_density``, exact
``sample``, and analytic low-order moments.  All evaluation methods accept a
single point of shape ``(d,)`` or a batch of shape ``(n, d)`` and are pure, so
they are safe to call concurrently.

The module also contains the static smoothness analysis for Gaussian mixtures
(pairwise covariance conditions deciding whether the score is globally
Lipschitz and whether the potential is strongly convex outside a ball),
the log-Sobolev constant bound built from those constants, and a Monte Carlo
estimator for the eighth moment of the score.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp, softmax
from scipy.stats import norm

__all__ = [
    "Gaussian",
    "GaussianMixture",
    "StudentT",
    "SmoothedUniformMixture",
    "CompactPlusNoise",
    "SmoothnessReport",
    "check_mixture_smoothness",
    "lsi_constant_bound",
    "estimate_K_pi",
    "student_t_hessian_decay_envelope",
]

_WEIGHT_TOL = 1e-12


def _as_batch(x, dim):
    """Coerce ``x`` to shape (n, dim); return (batch, was_single)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise ValueError(f"point has dimension {x.shape[0]}, expected {dim}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"batch has shape {x.shape}, expected (n, {dim})")
    return x, False


def _squeeze(values, single):
    return values[0] if single else values


class Target:
    """Common surface shared by all analytic targets."""

    dim: int

    def log_density(self, x):
        raise NotImplementedError

    def density(self, x):
        return np.exp(self.log_density(x))

    def score(self, x):
        raise NotImplementedError

    def hessian_log_density(self, x):
        raise NotImplementedError

    def sample(self, n, rng):
        raise NotImplementedError

    def mean(self):
        raise NotImplementedError

    def second_moment(self):
        """E ||X||^2, analytic."""
        raise NotImplementedError


def _mixture_moments(weights, means, covs):
    mean = np.einsum("i,ij->j", weights, means)
    m2 = float(np.sum(weights * (np.einsum("ij,ij->i", means, means)
                                 + np.trace(covs, axis1=1, axis2=2))))
    return mean, m2


def _posterior_mix(log_weights, comp_logpdf, comp_scores, comp_hessians=None):
    """Score (and optionally Hessian) of a mixture from per-component pieces.

    comp_logpdf: (M, n); comp_scores: (M, n, d); comp_hessians: (M, n, d, d).
    Uses the exact identities  s = sum_i g_i s_i  and
    H = sum_i g_i (H_i + s_i s_i^T) - s s^T  with posterior weights g_i.
    """
    shifted = log_weights[:, None] + comp_logpdf
    if np.any(np.all(~np.isfinite(shifted), axis=0)):
        raise ValueError("evaluation at a point of zero density")
    post = softmax(shifted, axis=0)  # (M, n)
    s = np.einsum("mn,mnd->nd", post, comp_scores)
    if comp_hessians is None:
        return s, None
    h = np.einsum("mn,mnde->nde", post, comp_hessians)
    h += np.einsum("mn,mnd,mne->nde", post, comp_scores, comp_scores)
    h -= np.einsum("nd,ne->nde", s, s)
    return s, h


class Gaussian(Target):
    """Multivariate normal N(mean, cov); ``cov`` may be a scalar variance."""

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.dim = mean.shape[0]
        self._mean = mean
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = float(cov) * np.eye(self.dim)
        if cov.shape != (self.dim, self.dim):
            raise ValueError("covariance shape does not match the mean")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        eig = np.linalg.eigvalsh(cov)
        if eig.min() <= 0:
            raise ValueError("covariance must be positive definite")
        self.cov = cov
        self.precision = np.linalg.inv(cov)
        self._chol = np.linalg.cholesky(cov)
        self._log_norm = -0.5 * (self.dim * math.log(2 * math.pi)
                                 + float(np.linalg.slogdet(cov)[1]))

    @property
    def isotropic_sigma(self):
        """Scale sigma when cov = sigma^2 I, else raise."""
        v = self.cov[0, 0]
        if not np.allclose(self.cov, v * np.eye(self.dim), atol=1e-12):
            raise ValueError("covariance is not isotropic")
        return math.sqrt(v)

    def log_density(self, x):
        xb, single = _as_batch(x, self.dim)
        diff = xb - self._mean
        quad = np.einsum("nd,de,ne->n", diff, self.precision, diff)
        return _squeeze(-0.5 * quad + self._log_norm, single)

    def score(self, x):
        xb, single = _as_batch(x, self.dim)
        return _squeeze(-(xb - self._mean) @ self.precision.T, single)

    def hessian_log_density(self, x):
        xb, single = _as_batch(x, self.dim)
        h = np.broadcast_to(-self.precision, (xb.shape[0],) + self.precision.shape).copy()
        return _squeeze(h, single)

    def sample(self, n, rng):
        rng = np.random.default_rng(rng)
        z = rng.standard_normal((n, self.dim))
        return self._mean + z @ self._chol.T

    def mean(self):
        return self._mean.copy()

    def second_moment(self):
        return float(self._mean @ self._mean + np.trace(self.cov))

    def lipschitz_constant(self):
        return float(np.linalg.eigvalsh(self.precision).max())


class GaussianMixture(Target):
    """Finite Gaussian mixture with full covariances.

    Weights must sum to one (tolerance 1e-12); components with weight below
    1e-12 are dropped with a warning.  Covariances must be symmetric positive
    definite and share the same dimension.
    """

    def __init__(self, weights, means, covs):
        weights = np.asarray(weights, dtype=float)
        means = np.asarray(means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        covs = np.asarray(covs, dtype=float)
        if covs.ndim == 1:  # per-component scalar variances
            covs = covs[:, None, None] * np.eye(means.shape[1])
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        keep = weights >= _WEIGHT_TOL
        if not np.all(keep):
            warnings.warn("dropping mixture components with weight < 1e-12")
            weights, means, covs = weights[keep], means[keep], covs[keep]
            weights = weights / weights.sum()
        self.weights = weights
        self.means = means
        self.covs = covs
        self.n_components, self.dim = means.shape
        if covs.shape != (self.n_components, self.dim, self.dim):
            raise ValueError("covariance stack shape mismatch")
        self.precisions = np.empty_like(covs)
        self._chols = np.empty_like(covs)
        self._log_norms = np.empty(self.n_components)
        for i, c in enumerate(covs):
            if not np.allclose(c, c.T, atol=1e-12):
                raise ValueError(f"covariance {i} is not symmetric")
            eig = np.linalg.eigvalsh(c)
            if eig.min() <= 0:
                raise ValueError(f"covariance {i} is not positive definite")
            self.precisions[i] = np.linalg.inv(c)
            self._chols[i] = np.linalg.cholesky(c)
            self._log_norms[i] = -0.5 * (self.dim * math.log(2 * math.pi)
                                         + float(np.linalg.slogdet(c)[1]))
        self._log_w = np.log(self.weights)

    def _component_logpdf(self, xb):
        diff = xb[None, :, :] - self.means[:, None, :]  # (M, n, d)
        quad = np.einsum("mnd,mde,mne->mn", diff, self.precisions, diff)
        return -0.5 * quad + self._log_norms[:, None]

    def log_density(self, x):
        xb, single = _as_batch(x, self.dim)
        lp = logsumexp(self._log_w[:, None] + self._component_logpdf(xb), axis=0)
        return _squeeze(lp, single)

    def _component_scores(self, xb):
        diff = xb[None, :, :] - self.means[:, None, :]
        return -np.einsum("mde,mne->mnd", self.precisions, diff)

    def score(self, x):
        xb, single = _as_batch(x, self.dim)
        s, _ = _posterior_mix(self._log_w, self._component_logpdf(xb),
                              self._component_scores(xb))
        return _squeeze(s, single)

    def hessian_log_density(self, x):
        xb, single = _as_batch(x, self.dim)
        n = xb.shape[0]
        hess = np.broadcast_to(-self.precisions[:, None, :, :],
                               (self.n_components, n, self.dim, self.dim))
        _, h = _posterior_mix(self._log_w, self._component_logpdf(xb),
                              self._component_scores(xb), hess)
        return _squeeze(h, single)

    def sample(self, n, rng):
        rng = np.random.default_rng(rng)
        idx = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[idx] + np.einsum("nde,ne->nd", self._chols[idx], z)

    def mean(self):
        return _mixture_moments(self.weights, self.means, self.covs)[0]

    def second_moment(self):
        return _mixture_moments(self.weights, self.means, self.covs)[1]

    def equal_covariances(self):
        return all(np.allclose(c, self.covs[0], atol=1e-12) for c in self.covs[1:])

    def analytic_lipschitz_constant(self):
        """Rigorous score-Lipschitz bound for equal-covariance mixtures.

        H = -P + Cov(posterior component scores) with the covariance bounded
        by half the largest squared score gap, which is x-independent here.
        """
        if not self.equal_covariances():
            raise ValueError("analytic bound only available for equal covariances")
        prec = self.precisions[0]
        eig = np.linalg.eigvalsh(prec)
        gap = 0.0
        for i in range(self.n_components):
            for j in range(i + 1, self.n_components):
                gap = max(gap, float(np.sum((prec @ (self.means[i] - self.means[j])) ** 2)))
        return float(max(eig.max(), 0.5 * gap - eig.min()))


class StudentT(Target):
    """Multivariate Student's t with location mu, scale matrix and dof alpha > 2.

    ``scale`` is either a scalar sigma (isotropic, scale matrix sigma^2 I) or a
    full SPD scale matrix.  The density is
    proportional to (1 + (x-mu)^T S^{-1} (x-mu) / alpha)^{-(alpha+d)/2}.
    """

    def __init__(self, loc, scale, dof, dim=None):
        loc = np.atleast_1d(np.asarray(loc, dtype=float))
        if dim is not None and loc.shape == (1,) and dim > 1:
            loc = np.full(dim, loc[0])
        self.dim = loc.shape[0]
        self.loc = loc
        if dof <= 2:
            raise ValueError("dof must exceed 2 (finite second moment required)")
        self.dof = float(dof)
        scale = np.asarray(scale, dtype=float)
        if scale.ndim == 0:
            self.sigma = float(scale)
            scale_matrix = self.sigma ** 2 * np.eye(self.dim)
        else:
            self.sigma = None
            scale_matrix = scale
        if not np.allclose(scale_matrix, scale_matrix.T, atol=1e-12):
            raise ValueError("scale matrix must be symmetric")
        eig = np.linalg.eigvalsh(scale_matrix)
        if eig.min() <= 0:
            raise ValueError("scale matrix must be positive definite")
        self.scale_matrix = scale_matrix
        self.precision = np.linalg.inv(scale_matrix)
        self._chol = np.linalg.cholesky(scale_matrix)
        self._scale_eig_min = float(eig.min())
        self._scale_eig_max = float(eig.max())
        a, d = self.dof, self.dim
        self._log_norm = (gammaln((a + d) / 2.0) - gammaln(a / 2.0)
                          - 0.5 * d * math.log(a * math.pi)
                          - 0.5 * float(np.linalg.slogdet(scale_matrix)[1]))

    def _mahalanobis(self, xb):
        diff = xb - self.loc
        return diff, np.einsum("nd,de,ne->n", diff, self.precision, diff)

    def log_density(self, x):
        xb, single = _as_batch(x, self.dim)
        _, m = self._mahalanobis(xb)
        lp = self._log_norm - 0.5 * (self.dof + self.dim) * np.log1p(m / self.dof)
        return _squeeze(lp, single)

    def score(self, x):
        xb, single = _as_batch(x, self.dim)
        diff, m = self._mahalanobis(xb)
        coef = -(self.dof + self.dim) / (self.dof + m)
        return _squeeze(coef[:, None] * (diff @ self.precision.T), single)

    def hessian_log_density(self, x):
        xb, single = _as_batch(x, self.dim)
        diff, m = self._mahalanobis(xb)
        q = self.dof + m
        pd = diff @ self.precision.T  # (n, d)
        h = (-(self.dof + self.dim) / q)[:, None, None] * self.precision
        h += (2 * (self.dof + self.dim) / q ** 2)[:, None, None] \
            * np.einsum("nd,ne->nde", pd, pd)
        return _squeeze(h, single)

    def sample(self, n, rng):
        rng = np.random.default_rng(rng)
        z = rng.standard_normal((n, self.dim)) @ self._chol.T
        chi2 = rng.chisquare(self.dof, size=n)
        return self.loc + z * np.sqrt(self.dof / chi2)[:, None]

    def mean(self):
        return self.loc.copy()

    def second_moment(self):
        a = self.dof
        return float(self.loc @ self.loc
                     + np.trace(self.scale_matrix) * a / (a - 2.0))

    def lipschitz_constant(self):
        """Exact sup of the Hessian spectral norm, attained at the location."""
        return (self.dof + self.dim) / (self.dof * self._scale_eig_min)

    def score_sup_squared(self):
        """Exact sup of ||score||^2 (the A9 constant C_pi)."""
        return (self.dof + self.dim) ** 2 / (4.0 * self.dof * self._scale_eig_min)


def student_t_hessian_decay_envelope(target: StudentT, x):
    """Eigenvalue envelope [lo, hi] for the potential Hessian of a Student t.

    Returns per-point bounds lo(x) <= eig(-hess log pi(x)) <= hi(x) built from
    the scale-matrix eigenvalue range; this is the executable form of the
    quadratic-decay condition the heavy-tailed analysis assumes.
    """
    xb, single = _as_batch(x, target.dim)
    r2 = np.sum((xb - target.loc) ** 2, axis=1)
    a, d = target.dof, target.dim
    smin, smax = target._scale_eig_min, target._scale_eig_max
    hi = (a + d) / smin / (a + r2 / smax)
    lo = -2.0 * (a + d) * smax / smin ** 2 / (a + r2 / smax)
    out = np.stack([lo, hi], axis=-1)
    return _squeeze(out, single)


class SmoothedUniformMixture(Target):
    """1D mixture of a unit Gaussian at m and a smoothed uniform on [-m, 2m].

    The Gaussian carries weight 1 - exp(-m^2/4); the remainder goes to a
    uniform on I_m = [-m, 2m] convolved with N(0, smoothing_width^2).  The
    smoothing kernel is a fixture choice (width 1 by default).
    """

    def __init__(self, m, smoothing_width=1.0):
        if smoothing_width <= 0:
            raise ValueError("smoothing width must be positive")
        self.m = float(m)
        self.smoothing_width = float(smoothing_width)
        self.gaussian_weight = 1.0 - math.exp(-self.m ** 2 / 4.0)
        self.support = (-self.m, 2.0 * self.m)
        self._init_general(
            w_gauss=self.gaussian_weight,
            gauss_mean=self.m,
            gauss_var=1.0,
            lo=-self.m,
            hi=2.0 * self.m,
            smooth_var=self.smoothing_width ** 2,
        )

    @classmethod
    def with_parameters(cls, w_gauss, gauss_mean, gauss_var, lo, hi, smooth_var):
        """General form (used for closed-form diffusion marginals)."""
        obj = cls.__new__(cls)
        obj.m = None
        obj.smoothing_width = math.sqrt(smooth_var)
        obj.gaussian_weight = w_gauss
        obj.support = (lo, hi)
        obj._init_general(w_gauss, gauss_mean, gauss_var, lo, hi, smooth_var)
        return obj

    def _init_general(self, w_gauss, gauss_mean, gauss_var, lo, hi, smooth_var):
        self.dim = 1
        if not 0.0 < w_gauss < 1.0:
            raise ValueError("gaussian weight must lie in (0, 1)")
        if hi <= lo:
            raise ValueError("empty uniform support")
        self._wg = float(w_gauss)
        self._wu = 1.0 - self._wg
        self._gm = float(gauss_mean)
        self._gv = float(gauss_var)
        self._lo, self._hi = float(lo), float(hi)
        self._sv = float(smooth_var)
        self._ss = math.sqrt(smooth_var)
        self._len = self._hi - self._lo

    def _pieces(self, x):
        """Density, first and second derivative of both mixture parts."""
        x = np.asarray(x, dtype=float)
        gs = math.sqrt(self._gv)
        zg = (x - self._gm) / gs
        g = norm.pdf(zg) / gs
        g1 = -zg / gs * g
        g2 = (zg ** 2 - 1.0) / self._gv * g
        za = (x - self._lo) / self._ss
        zb = (x - self._hi) / self._ss
        # survival-function form on the right keeps the difference representable
        diff = np.where(za + zb > 0,
                        norm.sf(zb) - norm.sf(za),
                        norm.cdf(za) - norm.cdf(zb))
        u = diff / self._len
        u1 = (norm.pdf(za) - norm.pdf(zb)) / (self._ss * self._len)
        u2 = (-za * norm.pdf(za) + zb * norm.pdf(zb)) / (self._sv * self._len)
        p = self._wg * g + self._wu * u
        p1 = self._wg * g1 + self._wu * u1
        p2 = self._wg * g2 + self._wu * u2
        return p, p1, p2

    def density(self, x):
        xb, single = _as_batch(x, 1)
        p, _, _ = self._pieces(xb[:, 0])
        return _squeeze(p, single)

    def log_density(self, x):
        d = self.density(x)
        with np.errstate(divide="ignore"):
            return np.log(d)

    def score(self, x):
        xb, single = _as_batch(x, 1)
        p, p1, _ = self._pieces(xb[:, 0])
        if np.any(p <= 0):
            raise ValueError("evaluation at a point of zero density")
        return _squeeze((p1 / p)[:, None], single)

    def hessian_log_density(self, x):
        xb, single = _as_batch(x, 1)
        p, p1, p2 = self._pieces(xb[:, 0])
        if np.any(p <= 0):
            raise ValueError("evaluation at a point of zero density")
        h = p2 / p - (p1 / p) ** 2
        return _squeeze(h[:, None, None], single)

    def sample(self, n, rng):
        rng = np.random.default_rng(rng)
        pick = rng.random(n) < self._wg
        out = np.empty(n)
        out[pick] = self._gm + math.sqrt(self._gv) * rng.standard_normal(int(pick.sum()))
        n_u = int((~pick).sum())
        out[~pick] = (rng.uniform(self._lo, self._hi, size=n_u)
                      + self._ss * rng.standard_normal(n_u))
        return out[:, None]

    def mean(self):
        return np.array([self._wg * self._gm + self._wu * 0.5 * (self._lo + self._hi)])

    def second_moment(self):
        u2 = (self._lo ** 2 + self._lo * self._hi + self._hi ** 2) / 3.0
        return float(self._wg * (self._gm ** 2 + self._gv)
                     + self._wu * (u2 + self._sv))

    def normalization_defect(self, n_grid=20001):
        """|1 - integral of the density| on a wide grid (validation helper)."""
        span = 8.0 * max(self._ss, math.sqrt(self._gv))
        lo = min(self._lo, self._gm) - span
        hi = max(self._hi, self._gm) + span
        xs = np.linspace(lo, hi, n_grid)
        return float(abs(np.trapezoid(self.density(xs[:, None]), xs) - 1.0))


class CompactPlusNoise(Target):
    """Atoms inside a ball convolved with Gaussian or Student-t noise.

    The atom support must satisfy max_i ||loc_i - center||^2 <= d R^2; the
    resulting density is the weighted sum of shifted noise kernels, so score
    and Hessian follow from the shared mixture identities.
    """

    def __init__(self, weights, locations, noise, R, center=None):
        weights = np.asarray(weights, dtype=float)
        locations = np.asarray(locations, dtype=float)
        if locations.ndim == 1:
            locations = locations[:, None]
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL or np.any(weights <= 0):
            raise ValueError("atom weights must be positive and sum to 1")
        self.dim = locations.shape[1]
        center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        radii = np.sum((locations - center) ** 2, axis=1)
        if radii.max() > self.dim * R ** 2 + 1e-12:
            raise ValueError("atom support exceeds the stated radius bound")
        if not isinstance(noise, (Gaussian, StudentT)):
            raise ValueError("noise must be Gaussian or StudentT")
        if np.any(noise.mean() != 0.0):
            raise ValueError("noise must be centered")
        self.weights = weights
        self.locations = locations
        self.noise = noise
        self.R = float(R)
        self.center = center
        self._log_w = np.log(weights)

    def _stacked(self, xb, with_hessian=False):
        n = xb.shape[0]
        m = len(self.weights)
        logp = np.empty((m, n))
        scores = np.empty((m, n, self.dim))
        hess = np.empty((m, n, self.dim, self.dim)) if with_hessian else None
        for i, loc in enumerate(self.locations):
            shifted = xb - loc
            logp[i] = self.noise.log_density(shifted)
            scores[i] = self.noise.score(shifted)
            if with_hessian:
                hess[i] = self.noise.hessian_log_density(shifted)
        return logp, scores, hess

    def log_density(self, x):
        xb, single = _as_batch(x, self.dim)
        logp, _, _ = self._stacked(xb)
        return _squeeze(logsumexp(self._log_w[:, None] + logp, axis=0), single)

    def score(self, x):
        xb, single = _as_batch(x, self.dim)
        logp, scores, _ = self._stacked(xb)
        s, _ = _posterior_mix(self._log_w, logp, scores)
        return _squeeze(s, single)

    def hessian_log_density(self, x):
        xb, single = _as_batch(x, self.dim)
        logp, scores, hess = self._stacked(xb, with_hessian=True)
        _, h = _posterior_mix(self._log_w, logp, scores, hess)
        return _squeeze(h, single)

    def sample(self, n, rng):
        rng = np.random.default_rng(rng)
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.locations[idx] + self.noise.sample(n, rng)

    def mean(self):
        return np.einsum("i,ij->j", self.weights, self.locations) + self.noise.mean()

    def second_moment(self):
        atom_m2 = float(np.sum(self.weights * np.einsum("ij,ij->i",
                                                        self.locations, self.locations)))
        cross = 0.0  # noise is centered and independent of the atom
        return atom_m2 + cross + self.noise.second_moment()


# ---------------------------------------------------------------------------
# Smoothness analysis of Gaussian mixtures


@dataclass
class SmoothnessReport:
    """Outcome of the pairwise covariance conditions for a Gaussian mixture."""

    lipschitz_ok: bool
    L_pi: float
    strongly_convex_outside_ball: bool
    M_pi: float
    r: float
    failed_pairs: list = field(default_factory=list)
    C_pi: float | None = None
    L_pi_method: str = "empirical"

    def to_dict(self):
        return {
            "lipschitz_ok": self.lipschitz_ok,
            "L_pi": self.L_pi,
            "L_pi_method": self.L_pi_method,
            "strongly_convex_outside_ball": self.strongly_convex_outside_ball,
            "M_pi": self.M_pi,
            "r": self.r,
            "failed_pairs": self.failed_pairs,
            "C_pi": self.C_pi,
        }


def _zero_set_candidates(diff, rng, n_random):
    """Unit vectors u with u^T diff u = 0 (exact null vectors and cone samples)."""
    d = diff.shape[0]
    eigval, eigvec = np.linalg.eigh(diff)
    scale = np.abs(eigval).max()
    tol = 1e-10 * max(scale, 1.0)
    zero = np.abs(eigval) <= tol
    pos, neg = eigval > tol, eigval < -tol
    candidates = [eigvec[:, i] for i in np.nonzero(zero)[0]]
    if np.any(pos) and np.any(neg):
        vp, vn, vz = eigvec[:, pos], eigvec[:, neg], eigvec[:, zero]
        lp, ln = eigval[pos], -eigval[neg]
        for _ in range(n_random):
            a = rng.standard_normal(vp.shape[1])
            b = rng.standard_normal(vn.shape[1])
            qa = float(np.sum(lp * a ** 2))
            qb = float(np.sum(ln * b ** 2))
            if qa <= 0 or qb <= 0:
                continue
            u = vp @ a + math.sqrt(qa / qb) * (vn @ b)
            if vz.shape[1]:
                u = u + vz @ rng.standard_normal(vz.shape[1]) * np.linalg.norm(u)
            candidates.append(u / np.linalg.norm(u))
    elif np.all(zero):
        # zero matrix: the whole sphere is the zero set
        candidates.extend(np.eye(d))
        for _ in range(n_random):
            u = rng.standard_normal(d)
            candidates.append(u / np.linalg.norm(u))
    return candidates, tol


def _pair_passes(precisions, mean_pulls, i, j, rng, n_random, skip_null=False):
    """Check the rescue conditions for pair (i, j) over its zero set.

    The genuine null-vector rescue is admissible for the Lipschitz check but
    not for strong convexity (``skip_null``).  Returns (ok, bad_direction).
    """
    diff = precisions[i] - precisions[j]
    candidates, tol = _zero_set_candidates(diff, rng, n_random)
    delta = mean_pulls[i] - mean_pulls[j]
    pull_scale = max(np.linalg.norm(mean_pulls[i]), np.linalg.norm(mean_pulls[j]), 1.0)
    for u in candidates:
        if not skip_null and np.linalg.norm(diff @ u) <= tol:
            continue  # (i): u in the genuine null space
        if abs(float(u @ delta)) > 1e-10 * pull_scale:
            continue  # (ii): linear term separates the components
        rescued = False
        for k in range(len(precisions)):  # (iii): a third component dominates
            if (u @ (precisions[i] - precisions[k]) @ u > tol
                    or u @ (precisions[j] - precisions[k]) @ u > tol):
                rescued = True
                break
        if not rescued:
            return False, u
    return True, None


def _empirical_hessian_sup(target, points):
    h = target.hessian_log_density(points)
    return float(np.linalg.norm(h, ord=2, axis=(1, 2)).max())


def check_mixture_smoothness(mixture: GaussianMixture, n_zero_set=1000,
                             n_cloud=10_000, seed=0) -> SmoothnessReport:
    """Classify score Lipschitzness and strong convexity outside a ball.

    For every unordered component pair with distinct covariances the zero set
    of u^T (P_i - P_j) u is sampled (exactly when the difference is singular)
    and each direction must be rescued by one of the three pairwise
    conditions; ``lipschitz_ok`` is true iff all pairs pass.  Strong convexity
    additionally requires the rescue (without the null-vector clause) for all
    pairs whose mean pulls P_i mu_i differ.
    """
    rng = np.random.default_rng(seed)
    prec = mixture.precisions
    pulls = np.einsum("mde,me->md", prec, mixture.means)
    m = mixture.n_components

    failed = []
    lipschitz_ok = True
    for i in range(m):
        for j in range(i + 1, m):
            if np.allclose(mixture.covs[i], mixture.covs[j], atol=1e-12):
                continue  # equal covariances: the quadratic cross terms cancel
            ok, u = _pair_passes(prec, pulls, i, j, rng, n_zero_set)
            if not ok:
                lipschitz_ok = False
                failed.append({"pair": (i, j), "direction": u.tolist(),
                               "reason": "unrescued zero-set direction"})

    convex_ok = lipschitz_ok
    if lipschitz_ok:
        for i in range(m):
            for j in range(i + 1, m):
                if np.linalg.norm(pulls[i] - pulls[j]) <= 1e-12:
                    continue
                ok, u = _pair_passes(prec, pulls, i, j, rng, n_zero_set,
                                     skip_null=True)
                if not ok:
                    convex_ok = False
                    break
            if not convex_ok:
                break

    l_pi = math.inf
    method = "empirical"
    if lipschitz_ok:
        if mixture.equal_covariances():
            l_pi = mixture.analytic_lipschitz_constant()
            method = "analytic"
        else:
            cloud = mixture.sample(n_cloud, rng)
            radius = float(np.linalg.norm(cloud, axis=1).max())
            ring = rng.standard_normal((512, mixture.dim))
            ring = 5.0 * radius * ring / np.linalg.norm(ring, axis=1, keepdims=True)
            tail = max(float(np.linalg.eigvalsh(p).max()) for p in prec)
            l_pi = max(_empirical_hessian_sup(mixture, cloud),
                       _empirical_hessian_sup(mixture, ring), tail)

    m_pi, r = 0.0, math.inf
    if convex_ok:
        m_pi = 0.5 * min(1.0 / float(np.linalg.eigvalsh(c).max()) for c in mixture.covs)
        r = _convexity_radius(mixture, m_pi, rng)
        if not math.isfinite(r):
            convex_ok, m_pi = False, 0.0

    return SmoothnessReport(
        lipschitz_ok=lipschitz_ok,
        L_pi=l_pi,
        strongly_convex_outside_ball=convex_ok,
        M_pi=m_pi,
        r=r,
        failed_pairs=failed,
        C_pi=None,
        L_pi_method=method,
    )


def _convexity_radius(mixture, m_pi, rng, n_dirs=256, growth=1.3):
    """Smallest tested radius beyond which min eig(-hess) >= m_pi on a shell scan."""
    base = float(np.linalg.norm(mixture.means, axis=1).max())
    base += 5.0 * math.sqrt(max(float(np.linalg.eigvalsh(c).max()) for c in mixture.covs))
    dirs = rng.standard_normal((n_dirs, mixture.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    def shell_ok(radius):
        for mult in (1.0, 1.5, 2.5, 4.0):
            h = mixture.hessian_log_density(radius * mult * dirs)
            if np.linalg.eigvalsh(-h).min() < m_pi:
                return False
        return True

    radius = base
    for _ in range(60):
        if shell_ok(radius):
            return radius
        radius *= growth
    return math.inf


def lsi_constant_bound(M_pi, L_pi, r):
    """Log-Sobolev constant bound (2 / M_pi) exp(16 L_pi r^2)."""
    if M_pi <= 0:
        raise ValueError("M_pi must be positive")
    if L_pi < 0 or r < 0:
        raise ValueError("L_pi and r must be nonnegative")
    exponent = 16.0 * L_pi * r ** 2
    if exponent > 700:
        return math.inf
    return 2.0 / M_pi * math.exp(exponent)


def estimate_K_pi(target: Target, n, seed=0):
    """Monte Carlo estimate of sqrt(E ||score||^8) with its standard error.

    Returns (estimate, standard_error); the error is propagated from the
    sample mean of ||score||^8 through the square root.
    """
    if n < 1000:
        raise ValueError("need at least 1000 samples")
    x = target.sample(n, np.random.default_rng(seed))
    s8 = np.sum(np.asarray(target.score(x)).reshape(n, -1) ** 2, axis=1) ** 4
    mean = float(s8.mean())
    se_mean = float(s8.std(ddof=1) / math.sqrt(n))
    k = math.sqrt(mean)
    return k, se_mean / (2.0 * k) if k > 0 else 0.0
