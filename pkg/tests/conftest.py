import numpy as np
import pytest

from dalmc import targets


def fd_gradient(f, x, h=1e-5):
    """Central-difference gradient of a scalar function at a single point."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_jacobian(f, x, h=1e-5):
    """Central-difference Jacobian of a vector function at a single point."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def rel_err(approx, exact, floor=1e-9):
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), floor)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def remark_b6_mixture():
    """Two-component counterexample: shared mean, given precision matrices."""
    p1 = np.array([[2.0, 1.0], [1.0, 2.0]])
    p2 = np.array([[2.0, 0.0], [0.0, 3.0]])
    mu = np.array([1.0, 0.0])
    return targets.GaussianMixture(
        weights=[0.5, 0.5],
        means=[mu, mu],
        covs=[np.linalg.inv(p1), np.linalg.inv(p2)],
    )


def target_zoo():
    """Every shipped target family, desk-scale parameters."""
    zoo = {
        "std_normal": targets.Gaussian(0.0, 1.0),
        "gauss_2d": targets.Gaussian([1.0, -2.0], [[2.0, 0.3], [0.3, 0.5]]),
        "gauss_n34": targets.Gaussian([3.0], 4.0),
        "mixture_1d": targets.GaussianMixture(
            [0.5, 0.5], [[-4.0], [4.0]], [[[1.0]], [[1.0]]]),
        "mixture_2d_eqcov": targets.GaussianMixture(
            [0.4, 0.6], [[-1.5, 0.0], [1.5, 0.5]],
            [[[0.8, 0.2], [0.2, 0.6]]] * 2),
        "mixture_1d_diffvar": targets.GaussianMixture(
            [0.3, 0.7], [[-1.0], [2.0]], [[[0.5]], [[2.0]]]),
        "remark_b6": remark_b6_mixture(),
        "student_t": targets.StudentT(0.0, 1.0, 4.0),
        "student_t_2d": targets.StudentT([0.5, -0.5], np.diag([1.0, 2.0]), 5.0),
        "smoothed_uniform": targets.SmoothedUniformMixture(10.0),
        "compact_gauss": targets.CompactPlusNoise(
            [0.25, 0.25, 0.5], [[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            targets.Gaussian([0.0, 0.0], 0.5), R=1.0),
        "compact_t": targets.CompactPlusNoise(
            [0.5, 0.5], [[-1.0], [1.0]],
            targets.StudentT(0.0, 1.0, 4.0), R=1.5),
    }
    return zoo
