"""Complexity planners and the discretization KL bound right-hand side.

All asymptotic relations are realized with unit constants; the tests probe
orders (ratios under input scaling), never absolute step counts.  Planners
return the time-dilation factor kappa and the step count M:

* Gaussian plan:  kappa = eps^2 / (M2 v d),  M = d (M2 v d)^2 L_max^2 / eps^6.
* Relaxed plan:   M = (M2 v d)^2 max(d^2, L_pi^2 d, K_pi) L_pi / eps^6.
* Heavy plan:     identical order to the Gaussian plan; the tail-index factor
  alpha / (alpha - 2) <= 3 is recorded in the notes only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "PlannerInput",
    "Plan",
    "plan_gaussian",
    "plan_relaxed",
    "plan_heavy",
    "kl_rhs_gaussian",
]

_KAPPA_CAP = 0.999


@dataclass(frozen=True)
class PlannerInput:
    eps: float
    d: int
    M2: float
    L_max: float | None = None
    L_pi: float | None = None
    K_pi: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.M2 < 0:
            raise ValueError("M2 must be nonnegative")


@dataclass(frozen=True)
class Plan:
    kappa: float
    n_steps: int
    notes: dict = field(default_factory=dict)


def _kappa(inp: PlannerInput) -> float:
    return min(inp.eps ** 2 / max(inp.M2, inp.d), _KAPPA_CAP)


def plan_gaussian(inp: PlannerInput) -> Plan:
    """Step plan for the Gaussian path under the path-smoothness bound."""
    if inp.L_max is None or not math.isfinite(inp.L_max):
        raise ValueError("plan_gaussian needs a finite L_max")
    m = max(inp.M2, inp.d)
    steps = math.ceil(inp.d * m ** 2 * inp.L_max ** 2 / inp.eps ** 6)
    return Plan(kappa=_kappa(inp), n_steps=max(steps, 1))


def plan_relaxed(inp: PlannerInput) -> Plan:
    """Step plan under the relaxed (eighth-moment) target assumption."""
    if inp.L_pi is None or inp.K_pi is None:
        raise ValueError("plan_relaxed needs L_pi and K_pi")
    m = max(inp.M2, inp.d)
    middle = max(inp.d ** 2, inp.L_pi ** 2 * inp.d, inp.K_pi)
    steps = math.ceil(m ** 2 * middle * inp.L_pi / inp.eps ** 6)
    return Plan(kappa=_kappa(inp), n_steps=max(steps, 1))


def plan_heavy(inp: PlannerInput) -> Plan:
    """Step plan for the heavy-tailed path; same order as the Gaussian plan."""
    if inp.alpha is None or inp.alpha <= 2:
        raise ValueError("plan_heavy needs tail index alpha > 2")
    base = plan_gaussian(inp)
    factor = inp.alpha / (inp.alpha - 2.0)
    return Plan(kappa=base.kappa, n_steps=base.n_steps,
                notes={"alpha_factor": factor})


def kl_rhs_gaussian(kappa, n_steps, L_max, M2, d, int_L2, eps_score):
    """Displayed discretization KL bound with unit constants.

    (1 + L^2/(M^2 k^4)) k (M2 + d) + (d/(M k^2)) (1 + L/(M k)) int_L2 + eps^2.
    """
    if min(kappa, n_steps, L_max, int_L2) <= 0 or M2 < 0 or d < 1 or eps_score < 0:
        raise ValueError("inputs must be positive (eps_score, M2 nonnegative)")
    m = float(n_steps)
    first = (1.0 + L_max ** 2 / (m ** 2 * kappa ** 4)) * kappa * (M2 + d)
    second = d / (m * kappa ** 2) * (1.0 + L_max / (m * kappa)) * int_L2
    return first + second + eps_score ** 2
