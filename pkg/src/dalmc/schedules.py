"""Interpolation schedules lambda_t on [0, T] and their assumption constants.

Built-in families:

* ``cosine(phi)``:   0.5 (1 + cos(pi (1 - (t/T)^phi))), hits 0 and 1 exactly.
* ``tanh(phi)``:     0.5 (1 + tanh(phi (t/T - 1/2))), affinely rescaled so
  lambda_T = 1; an optional ``floor`` keeps lambda_0 > 0 (the raw form has
  lambda_T < 1, so the rescale is a documented normalization).
* ``sigmoid``:       alias for the tanh form.
* ``ou(T)``:         exp(-2 (T - t)), the variance-preserving choice.
* ``constant``:      lambda == 1 (degenerate, for stationarity tests).

``schedule_constant`` evaluates the two assumption functionals: the sup of
|d/dt log lambda| (the "A5-log" condition) and the sup of
|lambda'| / sqrt(lambda (1 - lambda)) (the "A7-sqrt" condition), returning
``inf`` when the functional diverges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Schedule", "schedule_constant", "DIVERGENCE_THRESHOLD"]

DIVERGENCE_THRESHOLD = 1e6
_FAMILIES = ("cosine", "tanh", "sigmoid", "ou", "constant")


@dataclass(frozen=True)
class Schedule:
    """A monotone schedule t -> lambda_t in [0, 1] with lambda_T = 1."""

    family: str
    horizon: float
    phi: float = 1.0
    floor: float = 0.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown schedule family {self.family!r}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.family in ("cosine", "tanh", "sigmoid") and self.phi <= 0:
            raise ValueError("phi must be positive")
        if not 0.0 <= self.floor < 1.0:
            raise ValueError("floor must lie in [0, 1)")

    # -- raw tanh building blocks (sigmoid is the same curve) ---------------
    def _g(self, t):
        return 0.5 * (1.0 + np.tanh(self.phi * (t / self.horizon - 0.5)))

    def _g_dot(self, t):
        sech2 = 1.0 / np.cosh(self.phi * (t / self.horizon - 0.5)) ** 2
        return 0.5 * self.phi / self.horizon * sech2

    def lambda_(self, t):
        """Schedule value; exact 0/1 endpoints where the family allows."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.horizon * (1 + 1e-12)):
            raise ValueError("t outside [0, T]")
        t = np.clip(t, 0.0, self.horizon)
        if self.family == "constant":
            out = np.ones_like(t)
        elif self.family == "cosine":
            s = (t / self.horizon) ** self.phi
            out = 0.5 * (1.0 + np.cos(math.pi * (1.0 - s)))
        elif self.family in ("tanh", "sigmoid"):
            g0, gT = self._g(0.0), self._g(self.horizon)
            core = (self._g(t) - g0) / (gT - g0)
            out = self.floor + (1.0 - self.floor) * core
        else:  # ou
            out = np.minimum(1.0, np.exp(-2.0 * (self.horizon - t)))
        return out if out.ndim else float(out)

    def lambda_dot(self, t):
        """Analytic derivative (one-sided from the left at the OU kink)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.horizon * (1 + 1e-12)):
            raise ValueError("t outside [0, T]")
        t = np.clip(t, 0.0, self.horizon)
        if self.family == "constant":
            out = np.zeros_like(t)
        elif self.family == "cosine":
            s = t / self.horizon
            phi = self.phi
            safe = np.where(s > 0, s, 1.0)
            out = (0.5 * math.pi * phi / self.horizon
                   * np.sin(math.pi * safe ** phi) * safe ** (phi - 1.0))
            # limit at s = 0: derivative ~ (pi^2 phi / 2T) s^(2 phi - 1)
            if phi > 0.5:
                at_zero = 0.0
            elif phi == 0.5:
                at_zero = math.pi ** 2 / (4.0 * self.horizon)
            else:
                at_zero = math.inf
            out = np.where(s == 0, at_zero, out)
        elif self.family in ("tanh", "sigmoid"):
            g0, gT = self._g(0.0), self._g(self.horizon)
            out = (1.0 - self.floor) * self._g_dot(t) / (gT - g0)
        else:  # ou
            out = 2.0 * np.exp(-2.0 * (self.horizon - t))
        return out if out.ndim else float(out)

    def endpoint_values(self):
        return float(self.lambda_(0.0)), float(self.lambda_(self.horizon))


def _functional(schedule, condition, t):
    lam = np.asarray(schedule.lambda_(t), dtype=float)
    num = np.abs(np.asarray(schedule.lambda_dot(t), dtype=float))
    if condition == "A5-log":
        den = lam
    elif condition == "A7-sqrt":
        den = np.sqrt(lam * (1.0 - lam))
    else:
        raise ValueError(f"unknown condition {condition!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(num == 0.0, 0.0, np.where(den > 0.0, num / den, np.inf))
    return np.where(np.isnan(vals), np.inf, vals)


def _analytic_constant(schedule, condition):
    """Closed-form endpoint limits for the built-in families (None = no fast path)."""
    T, phi = schedule.horizon, schedule.phi
    fam = schedule.family
    if fam == "constant":
        return 0.0
    if fam == "ou":
        return 2.0 if condition == "A5-log" else math.inf
    if fam == "cosine":
        if condition == "A7-sqrt":
            # lambda = sin^2(pi s^phi / 2): the ratio equals (pi phi / T) s^(phi-1)
            return math.pi * phi / T if phi >= 1 else math.inf
        return math.inf  # log derivative ~ 2 phi / t at t -> 0
    if fam in ("tanh", "sigmoid"):
        if condition == "A7-sqrt":
            return math.inf  # lambda hits 1 with nonzero slope
        return None if schedule.floor > 0 else math.inf
    return None


def schedule_constant(schedule: Schedule, condition: str, grid_size: int = 4096):
    """Supremum of the chosen assumption functional, or ``inf`` if unbounded.

    The interior is scanned on a uniform grid; endpoint behaviour comes from
    analytic limits for the built-in families and from a one-sided refinement
    ladder otherwise (values above ``DIVERGENCE_THRESHOLD`` flag divergence).
    """
    if grid_size < 1000:
        raise ValueError("grid_size must be at least 1000")
    T = schedule.horizon
    interior = np.linspace(0.0, T, grid_size + 1)[1:-1]
    sup = float(_functional(schedule, condition, interior).max())

    endpoint = _analytic_constant(schedule, condition)
    if endpoint is None:
        ladder = np.array([T * 10.0 ** (-k) for k in range(1, 13)])
        probes = np.concatenate([ladder, T - ladder])
        endpoint = float(_functional(schedule, condition, probes).max())
    sup = max(sup, endpoint)
    return math.inf if sup > DIVERGENCE_THRESHOLD else sup
