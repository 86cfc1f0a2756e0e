"""Diffusion annealed Langevin Monte Carlo at desk scale.

Subpackages: analytic targets, interpolation schedules, diffusion and
geometric paths, the Euler-Maruyama sampler, complexity planners, and
independent numerical diagnostics.
"""

__version__ = "0.1.0"
