"""TOML experiment configs and constructors for every module's objects.

A config file has ``[target]``, ``[base]``, ``[schedule]`` and ``[sampler]``
tables plus optional ``[diagnostics]`` and ``[output]``.  Validation happens
eagerly at construction time and error messages name the offending key.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import targets as tg
from .sampler import Perturbation, SamplerConfig
from .schedules import Schedule

__all__ = [
    "ExperimentConfig",
    "load_toml",
    "load_experiment",
    "build_target",
    "build_base",
    "build_schedule",
    "build_sampler_config",
]


def load_toml(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _require(table, key, context):
    if key not in table:
        raise ValueError(f"missing key '{context}.{key}'")
    return table[key]


def build_target(spec: dict):
    kind = _require(spec, "kind", "target")
    if kind == "gaussian":
        mean = _require(spec, "mean", "target")
        cov = spec.get("cov", spec.get("var"))
        if cov is None:
            raise ValueError("missing key 'target.cov' (or 'target.var')")
        return tg.Gaussian(mean, np.asarray(cov, dtype=float))
    if kind == "gaussian_mixture":
        comps = _require(spec, "components", "target")
        weights = [_require(c, "weight", "target.components") for c in comps]
        means = [_require(c, "mean", "target.components") for c in comps]
        covs = [np.asarray(_require(c, "cov", "target.components"), dtype=float)
                for c in comps]
        return tg.GaussianMixture(weights, means, covs)
    if kind == "student_t":
        loc = _require(spec, "loc", "target")
        dof = _require(spec, "dof", "target")
        scale = spec.get("scale_matrix", spec.get("sigma"))
        if scale is None:
            raise ValueError("missing key 'target.sigma' (or 'target.scale_matrix')")
        return tg.StudentT(loc, np.asarray(scale, dtype=float), dof)
    if kind == "smoothed_uniform":
        return tg.SmoothedUniformMixture(
            _require(spec, "m", "target"), spec.get("smoothing_width", 1.0))
    if kind == "compact_plus_noise":
        noise_spec = _require(spec, "noise", "target")
        nkind = _require(noise_spec, "kind", "target.noise")
        tau = _require(noise_spec, "tau", "target.noise")
        locations = np.asarray(_require(spec, "locations", "target"), dtype=float)
        if locations.ndim == 1:
            locations = locations[:, None]
        d = locations.shape[1]
        if nkind == "gaussian":
            noise = tg.Gaussian(np.zeros(d), tau ** 2 * np.eye(d))
        elif nkind == "student_t":
            noise = tg.StudentT(np.zeros(d), tau,
                                _require(noise_spec, "dof", "target.noise"))
        else:
            raise ValueError(f"unknown value for 'target.noise.kind': {nkind!r}")
        return tg.CompactPlusNoise(
            _require(spec, "weights", "target"), locations, noise,
            R=_require(spec, "R", "target"), center=spec.get("center"))
    raise ValueError(f"unknown value for 'target.kind': {kind!r}")


def build_base(spec: dict, dim: int):
    kind = _require(spec, "kind", "base")
    sigma = float(spec.get("sigma", 1.0))
    if kind == "gaussian":
        return tg.Gaussian(np.zeros(dim), sigma ** 2 * np.eye(dim))
    if kind == "student_t":
        return tg.StudentT(np.zeros(dim), sigma, _require(spec, "alpha", "base"))
    raise ValueError(f"unknown value for 'base.kind': {kind!r}")


def build_schedule(spec: dict):
    return Schedule(
        family=_require(spec, "family", "schedule"),
        horizon=float(spec.get("horizon", 1.0)),
        phi=float(spec.get("phi", 1.0)),
        floor=float(spec.get("floor", 0.0)),
    )


def build_perturbation(spec: dict | None):
    if not spec:
        return Perturbation()
    kind = spec.get("kind", "none")
    if kind == "none":
        return Perturbation()
    if kind in ("bias", "additive-bias"):
        return Perturbation("additive-bias",
                            bias=tuple(np.atleast_1d(_require(
                                spec, "bias", "sampler.score_perturbation"))))
    if kind in ("gaussian", "gaussian-noise"):
        return Perturbation("gaussian-noise",
                            tau=float(_require(spec, "tau",
                                               "sampler.score_perturbation")))
    raise ValueError(f"unknown value for 'sampler.score_perturbation.kind': {kind!r}")


def build_sampler_config(spec: dict, seed_override=None):
    return SamplerConfig(
        kappa=float(_require(spec, "kappa", "sampler")),
        n_steps=int(_require(spec, "steps", "sampler")),
        chains=int(_require(spec, "chains", "sampler")),
        seed=int(seed_override if seed_override is not None
                 else spec.get("seed", 0)),
        step_plan=spec.get("step_plan", "uniform"),
        record_every=int(spec.get("record_every", 0)),
        perturbation=build_perturbation(spec.get("score_perturbation")),
    )


@dataclass
class ExperimentConfig:
    target: object
    base: object
    schedule: Schedule
    sampler: SamplerConfig
    diagnostics: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    raw: dict = field(default_factory=dict)


def load_experiment(path, seed_override=None, out_override=None) -> ExperimentConfig:
    raw = load_toml(path)
    target = build_target(_require(raw, "target", "config"))
    base = build_base(_require(raw, "base", "config"), target.dim)
    schedule = build_schedule(_require(raw, "schedule", "config"))
    sampler = build_sampler_config(_require(raw, "sampler", "config"), seed_override)
    diag = raw.get("diagnostics", {})
    out = Path(out_override if out_override is not None
               else raw.get("output", {}).get("dir", "out"))
    return ExperimentConfig(target=target, base=base, schedule=schedule,
                            sampler=sampler, diagnostics=diag,
                            output_dir=out, raw=raw)
