import math

import numpy as np
import pytest

from mindex.activations import erf_scaled, hermite, tanh_act
from mindex.kernels import (
    NonPSDCovariance,
    UnsupportedActivation,
    i2,
    i2_noise,
    i3,
    i4,
    mc_kernel,
    population_risk,
)
from mindex.ode import SufficientStats, glm_stats

ACTS = (hermite(2), hermite(3), erf_scaled())


def random_psd(dim: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.standard_normal((dim, dim + 2))
    cov = A @ A.T / (dim + 2)
    scale = np.sqrt(np.diag(cov))
    cov = cov / np.outer(scale, scale)  # unit diagonal, keeps |off-diag| <= 1
    return cov


def closed_form(act, kind, cov):
    if kind == "i2":
        return i2(act, cov[0, 0], cov[0, 1], cov[1, 1])
    if kind == "i3":
        return i3(act, cov[0, 0], cov[0, 1], cov[0, 2], cov[1, 1], cov[1, 2], cov[2, 2])
    if kind == "i4":
        return i4(
            act,
            cov[0, 0], cov[0, 1], cov[0, 2], cov[0, 3],
            cov[1, 1], cov[1, 2], cov[1, 3],
            cov[2, 2], cov[2, 3], cov[3, 3],
        )
    return i2_noise(act, cov[0, 0], cov[0, 1], cov[1, 1])


@pytest.mark.parametrize("act", ACTS, ids=lambda a: f"{a.kind}{a.degree or ''}")
@pytest.mark.parametrize("kind,dim", [("i2", 2), ("i3", 3), ("i4", 4), ("i2noise", 2)])
def test_closed_forms_match_monte_carlo(act, kind, dim):
    rng = np.random.default_rng(2024)
    for draw in range(5):
        cov = random_psd(dim, rng)
        exact = closed_form(act, kind, cov)
        est, stderr = mc_kernel(kind, act, cov, n_samples=2 * 10**5, seed=100 + draw)
        assert abs(exact - est) < 5.0 * stderr + 1e-12, (kind, act.kind, draw)


def test_i2_self_values():
    # E[sigma^2] at unit variance equals the sum of squared coefficients
    assert i2(hermite(2), 1.0, 1.0, 1.0) == pytest.approx(2.0)
    assert i2(hermite(3), 1.0, 1.0, 1.0) == pytest.approx(6.0)
    assert i2(erf_scaled(), 1.0, 1.0, 1.0) == pytest.approx(1.0 / 3.0)


def test_i2_symmetry():
    rng = np.random.default_rng(7)
    for _ in range(5):
        cov = random_psd(2, rng)
        for act in ACTS:
            assert i2(act, cov[0, 0], cov[0, 1], cov[1, 1]) == pytest.approx(
                i2(act, cov[1, 1], cov[0, 1], cov[0, 0]), rel=1e-12
            )
            assert i2_noise(act, cov[0, 0], cov[0, 1], cov[1, 1]) == pytest.approx(
                i2_noise(act, cov[1, 1], cov[0, 1], cov[0, 0]), rel=1e-12
            )


def test_i2_noise_he2_linear():
    assert i2_noise(hermite(2), 1.0, 0.37, 1.0) == pytest.approx(4 * 0.37)


def test_i4_he2_all_ones():
    ones = [1.0] * 10
    assert i4(hermite(2), *ones) == pytest.approx(40.0)


def test_unsupported_activation_raises():
    with pytest.raises(UnsupportedActivation):
        i2(tanh_act(), 1.0, 0.5, 1.0)


def test_mc_kernel_rejects_non_psd():
    cov = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NonPSDCovariance):
        mc_kernel("i2", hermite(2), cov, n_samples=10**3)


def test_mc_kernel_deterministic():
    cov = np.array([[1.0, 0.3], [0.3, 1.0]])
    a = mc_kernel("i2", hermite(2), cov, n_samples=10**4, seed=9)
    b = mc_kernel("i2", hermite(2), cov, n_samples=10**4, seed=9)
    assert a == b


def test_population_risk_teacher_configuration():
    for act in ACTS:
        for delta in (0.0, 0.2):
            stats = glm_stats(1.0, act)
            assert population_risk(stats, delta) == pytest.approx(delta / 2.0, abs=1e-12)


def test_population_risk_he2_zero_overlap():
    # R(0) = (1/2)(2 + 2) = 2 for matched He2 at m = 0
    assert population_risk(glm_stats(0.0, hermite(2)), 0.0) == pytest.approx(2.0)


def test_population_risk_committee_teacher_config():
    # matched p = k = 2 committee at the teacher configuration
    act = erf_scaled()
    P = np.array([[1.0, 0.2], [0.2, 1.0]])
    stats = SufficientStats(Q=P, M=P, P=P, a=np.ones(2), a_star=np.ones(2), act=act)
    assert population_risk(stats, 0.3) == pytest.approx(0.15, abs=1e-12)


def test_population_risk_matches_monte_carlo():
    act = erf_scaled()
    rng = np.random.default_rng(3)
    m = 0.45
    stats = glm_stats(m, act)
    n = 10**6
    z = rng.standard_normal(n)
    zeta = rng.standard_normal(n)
    lam_star = m * z + math.sqrt(1 - m * m) * zeta
    vals = 0.5 * (act.value(lam_star) - act.value(z)) ** 2
    stderr = np.std(vals) / math.sqrt(n)
    assert abs(population_risk(stats, 0.0) - np.mean(vals)) < 5 * stderr + 1e-6
