"""Closed-form Gaussian-expectation kernels and their Monte-Carlo oracle.

For a joint Gaussian vector with covariance entries w_ab = E[lambda_a lambda_b]:

    i2       = E[sigma(l_a) sigma(l_b)]
    i3       = E[sigma'(l_a) l_b sigma(l_c)]
    i4       = E[sigma'(l_a) sigma'(l_b) sigma(l_c) sigma(l_d)]
    i2_noise = E[sigma'(l_a) sigma'(l_b)]

Argument order follows the fixed tuple conventions documented on each function.
Closed forms exist for hermite(2), hermite(3) and erf(x/sqrt(2)); everything else
must go through mc_kernel.
"""

from __future__ import annotations

import math

import numpy as np

from .activations import ActivationSpec


class UnsupportedActivation(ValueError):
    """Raised when a closed form is requested for a non-analytic activation."""


class NonPSDCovariance(ValueError):
    """Raised when a covariance handed to mc_kernel is not positive semidefinite."""


def _require_analytic(act: ActivationSpec) -> str:
    if not act.analytic_kernels:
        raise UnsupportedActivation(
            f"no closed-form kernels for {act.kind}; use mc_kernel"
        )
    if act.kind == "hermite":
        return f"he{act.degree}"
    return "erf"


# ---------------------------------------------------------------------------
# i2(w_aa, w_ab, w_bb)


def i2(act: ActivationSpec, w_aa: float, w_ab: float, w_bb: float) -> float:
    """E[sigma(l_a) sigma(l_b)]; arguments (w_aa, w_ab, w_bb)."""
    key = _require_analytic(act)
    if key == "he2":
        return w_aa * w_bb + 2.0 * w_ab**2 - w_aa - w_bb + 1.0
    if key == "he3":
        return (
            9.0 * w_ab
            - 9.0 * w_aa * w_ab
            + 6.0 * w_ab**3
            - 9.0 * w_ab * w_bb
            + 9.0 * w_aa * w_ab * w_bb
        )
    # erf(x/sqrt(2)): arcsine law
    return (2.0 / math.pi) * math.asin(w_ab / math.sqrt((1.0 + w_aa) * (1.0 + w_bb)))


# ---------------------------------------------------------------------------
# i3(w_aa, w_ab, w_ac, w_bb, w_bc, w_cc)


def i3(
    act: ActivationSpec,
    w_aa: float,
    w_ab: float,
    w_ac: float,
    w_bb: float,
    w_bc: float,
    w_cc: float,
) -> float:
    """E[sigma'(l_a) l_b sigma(l_c)]; arguments (w_aa, w_ab, w_ac, w_bb, w_bc, w_cc)."""
    key = _require_analytic(act)
    if key == "he2":
        return 2.0 * w_ab * w_cc + 4.0 * w_ac * w_bc - 2.0 * w_ab
    if key == "he3":
        return (
            -18.0 * w_ab * w_ac
            + 9.0 * w_bc
            - 9.0 * w_aa * w_bc
            + 18.0 * w_ac**2 * w_bc
            + 18.0 * w_ab * w_ac * w_cc
            - 9.0 * w_bc * w_cc
            + 9.0 * w_aa * w_bc * w_cc
        )
    lam3 = (1.0 + w_aa) * (1.0 + w_cc) - w_ac**2
    return (
        (2.0 / math.pi)
        * (w_bc * (1.0 + w_aa) - w_ab * w_ac)
        / ((1.0 + w_aa) * math.sqrt(lam3))
    )


# ---------------------------------------------------------------------------
# i4(w_aa, w_ab, w_ac, w_ad, w_bb, w_bc, w_bd, w_cc, w_cd, w_dd)


def _i4_he3(w_aa, w_ab, w_ac, w_ad, w_bb, w_bc, w_bd, w_cc, w_cd, w_dd):
    return (
        -162 * w_ac * w_ad
        + 162 * w_ac * w_ad * w_bb
        + 324 * w_ab * w_ad * w_bc
        - 324 * w_ac * w_ad * w_bc**2
        + 324 * w_ab * w_ac * w_bd
        - 162 * w_bc * w_bd
        + 162 * w_aa * w_bc * w_bd
        - 324 * w_ac**2 * w_bc * w_bd
        - 324 * w_ad**2 * w_bc * w_bd
        - 324 * w_ac * w_ad * w_bd**2
        + 162 * w_ac * w_ad * w_cc
        - 162 * w_ac * w_ad * w_bb * w_cc
        - 324 * w_ab * w_ad * w_bc * w_cc
        - 324 * w_ab * w_ac * w_bd * w_cc
        + 162 * w_bc * w_bd * w_cc
        - 162 * w_aa * w_bc * w_bd * w_cc
        + 324 * w_ad**2 * w_bc * w_bd * w_cc
        + 324 * w_ac * w_ad * w_bd**2 * w_cc
        + 81 * w_cd
        - 81 * w_aa * w_cd
        + 162 * w_ab**2 * w_cd
        + 162 * w_ac**2 * w_cd
        + 162 * w_ad**2 * w_cd
        - 81 * w_bb * w_cd
        + 81 * w_aa * w_bb * w_cd
        - 162 * w_ac**2 * w_bb * w_cd
        - 162 * w_ad**2 * w_bb * w_cd
        - 648 * w_ab * w_ac * w_bc * w_cd
        + 162 * w_bc**2 * w_cd
        - 162 * w_aa * w_bc**2 * w_cd
        + 324 * w_ad**2 * w_bc**2 * w_cd
        - 648 * w_ab * w_ad * w_bd * w_cd
        + 1296 * w_ac * w_ad * w_bc * w_bd * w_cd
        + 162 * w_bd**2 * w_cd
        - 162 * w_aa * w_bd**2 * w_cd
        + 324 * w_ac**2 * w_bd**2 * w_cd
        - 81 * w_cc * w_cd
        + 81 * w_aa * w_cc * w_cd
        - 162 * w_ab**2 * w_cc * w_cd
        - 162 * w_ad**2 * w_cc * w_cd
        + 81 * w_bb * w_cc * w_cd
        - 81 * w_aa * w_bb * w_cc * w_cd
        + 162 * w_ad**2 * w_bb * w_cc * w_cd
        + 648 * w_ab * w_ad * w_bd * w_cc * w_cd
        - 162 * w_bd**2 * w_cc * w_cd
        + 162 * w_aa * w_bd**2 * w_cc * w_cd
        - 324 * w_ac * w_ad * w_cd**2
        + 324 * w_ac * w_ad * w_bb * w_cd**2
        + 648 * w_ab * w_ad * w_bc * w_cd**2
        + 648 * w_ab * w_ac * w_bd * w_cd**2
        - 324 * w_bc * w_bd * w_cd**2
        + 324 * w_aa * w_bc * w_bd * w_cd**2
        + 54 * w_cd**3
        - 54 * w_aa * w_cd**3
        + 108 * w_ab**2 * w_cd**3
        - 54 * w_bb * w_cd**3
        + 54 * w_aa * w_bb * w_cd**3
        + 162 * w_ac * w_ad * w_dd
        - 162 * w_ac * w_ad * w_bb * w_dd
        - 324 * w_ab * w_ad * w_bc * w_dd
        + 324 * w_ac * w_ad * w_bc**2 * w_dd
        - 324 * w_ab * w_ac * w_bd * w_dd
        + 162 * w_bc * w_bd * w_dd
        - 162 * w_aa * w_bc * w_bd * w_dd
        + 324 * w_ac**2 * w_bc * w_bd * w_dd
        - 162 * w_ac * w_ad * w_cc * w_dd
        + 162 * w_ac * w_ad * w_bb * w_cc * w_dd
        + 324 * w_ab * w_ad * w_bc * w_cc * w_dd
        + 324 * w_ab * w_ac * w_bd * w_cc * w_dd
        - 162 * w_bc * w_bd * w_cc * w_dd
        + 162 * w_aa * w_bc * w_bd * w_cc * w_dd
        - 81 * w_cd * w_dd
        + 81 * w_aa * w_cd * w_dd
        - 162 * w_ab**2 * w_cd * w_dd
        - 162 * w_ac**2 * w_cd * w_dd
        + 81 * w_bb * w_cd * w_dd
        - 81 * w_aa * w_bb * w_cd * w_dd
        + 162 * w_ac**2 * w_bb * w_cd * w_dd
        + 648 * w_ab * w_ac * w_bc * w_cd * w_dd
        - 162 * w_bc**2 * w_cd * w_dd
        + 162 * w_aa * w_bc**2 * w_cd * w_dd
        + 81 * w_cc * w_cd * w_dd
        - 81 * w_aa * w_cc * w_cd * w_dd
        + 162 * w_ab**2 * w_cc * w_cd * w_dd
        - 81 * w_bb * w_cc * w_cd * w_dd
        + 81 * w_aa * w_bb * w_cc * w_cd * w_dd
    )


def i4(
    act: ActivationSpec,
    w_aa: float,
    w_ab: float,
    w_ac: float,
    w_ad: float,
    w_bb: float,
    w_bc: float,
    w_bd: float,
    w_cc: float,
    w_cd: float,
    w_dd: float,
) -> float:
    """E[sigma'(l_a) sigma'(l_b) sigma(l_c) sigma(l_d)].

    Arguments (w_aa, w_ab, w_ac, w_ad, w_bb, w_bc, w_bd, w_cc, w_cd, w_dd).
    """
    key = _require_analytic(act)
    if key == "he2":
        return (
            4.0 * w_ab * w_cc * w_dd
            + 8.0 * w_ab * w_cd**2
            + 8.0 * w_ac * w_bc * w_dd
            + 16.0 * w_ac * w_bd * w_cd
            + 16.0 * w_ad * w_bc * w_cd
            + 8.0 * w_ad * w_bd * w_cc
            - 4.0 * w_ab * w_cc
            - 8.0 * w_ac * w_bc
            - 4.0 * w_ab * w_dd
            - 8.0 * w_ad * w_bd
            + 4.0 * w_ab
        )
    if key == "he3":
        return _i4_he3(w_aa, w_ab, w_ac, w_ad, w_bb, w_bc, w_bd, w_cc, w_cd, w_dd)
    lam4 = (1.0 + w_aa) * (1.0 + w_bb) - w_ab**2
    lam0 = (
        lam4 * w_cd
        - w_bc * w_bd * (1.0 + w_aa)
        - w_ac * w_ad * (1.0 + w_bb)
        + w_ab * w_ac * w_bd
        + w_ab * w_ad * w_bc
    )
    lam1 = (
        lam4 * (1.0 + w_cc)
        - w_bc**2 * (1.0 + w_aa)
        - w_ac**2 * (1.0 + w_bb)
        + 2.0 * w_ab * w_ac * w_bc
    )
    lam2 = (
        lam4 * (1.0 + w_dd)
        - w_bd**2 * (1.0 + w_aa)
        - w_ad**2 * (1.0 + w_bb)
        + 2.0 * w_ab * w_ad * w_bd
    )
    return (4.0 / math.pi**2) / math.sqrt(lam4) * math.asin(
        lam0 / math.sqrt(lam1 * lam2)
    )


# ---------------------------------------------------------------------------
# i2_noise(w_aa, w_ab, w_bb)


def i2_noise(act: ActivationSpec, w_aa: float, w_ab: float, w_bb: float) -> float:
    """E[sigma'(l_a) sigma'(l_b)]; arguments (w_aa, w_ab, w_bb)."""
    key = _require_analytic(act)
    if key == "he2":
        return 4.0 * w_ab
    if key == "he3":
        return (
            9.0
            - 9.0 * w_aa
            + 18.0 * w_ab**2
            - 9.0 * w_bb
            + 9.0 * w_aa * w_bb
        )
    lam4 = (1.0 + w_aa) * (1.0 + w_bb) - w_ab**2
    return (2.0 / math.pi) / math.sqrt(lam4)


# ---------------------------------------------------------------------------
# Monte-Carlo oracle


def mc_kernel(
    kind,
    act_pair,
    cov,
    n_samples: int = 10**6,
    seed: int = 0,
) -> tuple[float, float]:
    """Sample mean and stderr of a kernel expectation under N(0, cov).

    kind: one of 'i2', 'i3', 'i4', 'i2noise', or a callable taking the sample
    matrix (n_samples x dim) and returning per-sample values.
    act_pair: a single ActivationSpec or a tuple of them (one per slot).
    Deterministic for a given seed.
    """
    cov = np.asarray(cov, dtype=float)
    if n_samples < 10**3:
        raise ValueError("n_samples must be >= 1e3")
    eigs = np.linalg.eigvalsh(cov)
    if eigs.min() < -1e-10 * max(eigs.max(), 1.0):
        raise NonPSDCovariance(f"covariance has eigenvalue {eigs.min()}")
    rng = np.random.Generator(np.random.Philox(seed))
    root = np.linalg.cholesky(cov + 1e-14 * np.eye(len(cov)))
    z = rng.standard_normal((n_samples, len(cov))) @ root.T
    if callable(kind):
        vals = kind(z)
    else:
        acts = act_pair if isinstance(act_pair, (tuple, list)) else (act_pair,) * 4
        if kind == "i2":
            vals = acts[0].value(z[:, 0]) * acts[1].value(z[:, 1])
        elif kind == "i3":
            vals = acts[0].deriv(z[:, 0]) * z[:, 1] * acts[2].value(z[:, 2])
        elif kind == "i4":
            vals = (
                acts[0].deriv(z[:, 0])
                * acts[1].deriv(z[:, 1])
                * acts[2].value(z[:, 2])
                * acts[3].value(z[:, 3])
            )
        elif kind == "i2noise":
            vals = acts[0].deriv(z[:, 0]) * acts[1].deriv(z[:, 1])
        else:
            raise ValueError(f"unknown kernel kind {kind!r}")
    est = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n_samples))
    return est, stderr


# ---------------------------------------------------------------------------
# Population risk


def population_risk(stats, delta: float) -> float:
    """R = Delta/2 + (1/2)[sums of i2 over student/teacher/cross pairs].

    stats must expose Q, M, P, a, a_star and act (see SufficientStats).
    The 1/2 convention makes R equal to half the expected squared error, so the
    teacher configuration returns exactly Delta/2.
    """
    Q, M, P = stats.Q, stats.M, stats.P
    a, a_star, act = stats.a, stats.a_star, stats.act
    p, k = len(a), len(a_star)
    total = 0.0
    for s in range(p):
        for u in range(p):
            total += a[s] * a[u] * i2(act, Q[s, s], Q[s, u], Q[u, u]) / p**2
    for r in range(k):
        for t in range(k):
            total += a_star[r] * a_star[t] * i2(act, P[r, r], P[r, t], P[t, t]) / k**2
    for s in range(p):
        for r in range(k):
            total -= 2.0 * a[s] * a_star[r] * i2(act, Q[s, s], M[s, r], P[r, r]) / (p * k)
    return delta / 2.0 + 0.5 * total
