"""Dimension-free dynamics of the overlap matrices.

State is the block overlap matrix Omega = [[Q, M], [M^T, P]] for student rows
(lambda = W z) and teacher rows (lambda* = W* z), plus fixed readouts a, a*.
The drift matrices psi, phi_gf, phi_hd are assembled from the closed-form
kernels; phi_bc adds the intra-batch correlation correction. `ode_rhs` gives the
asymptotic spherical dynamics in rescaled time tau, `full_process_step` the
finite-d one-step map with every term kept at its finite-d magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .activations import ActivationSpec
from . import kernels

RIDGE_EPS = 1e-10
COND_LIMIT = 1e12
FLAG_EPS = 1e-12


class PSDViolation(RuntimeError):
    """Raised when Omega loses positive semidefiniteness mid-integration."""


class SingularOrthogonalOverlap(RuntimeError):
    """Raised when Q - M P^-1 M^T stays singular after regularization."""


@dataclass(frozen=True)
class SufficientStats:
    """Overlaps (Q, M, P), readouts (a, a_star) and the shared activation."""

    Q: np.ndarray
    M: np.ndarray
    P: np.ndarray
    a: np.ndarray
    a_star: np.ndarray
    act: ActivationSpec

    def __post_init__(self):
        for name in ("Q", "M", "P", "a", "a_star"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        p, k = self.M.shape
        if self.Q.shape != (p, p) or self.P.shape != (k, k):
            raise ValueError("inconsistent overlap shapes")
        if self.a.shape != (p,) or self.a_star.shape != (k,):
            raise ValueError("inconsistent readout shapes")

    @property
    def p(self) -> int:
        return self.M.shape[0]

    @property
    def k(self) -> int:
        return self.M.shape[1]

    def omega(self) -> np.ndarray:
        return np.block([[self.Q, self.M], [self.M.T, self.P]])

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.omega()).min())


def glm_stats(m: float, act: ActivationSpec, q: float = 1.0) -> SufficientStats:
    """Single student neuron, single teacher neuron, unit readouts."""
    return SufficientStats(
        Q=np.array([[q]]),
        M=np.array([[m]]),
        P=np.array([[1.0]]),
        a=np.array([1.0]),
        a_star=np.array([1.0]),
        act=act,
    )


@dataclass(frozen=True)
class ScalingRegime:
    """Learning-rate and batch-size scalings gamma = gamma0 d^-delta, n_b = n0 d^mu.

    A dynamical term is active in the tau = t * dtau limit iff its per-step
    exponent attains max(-delta, -2 delta + 1 - mu): the population (gradient
    flow) term carries d^-delta, the high-dimensional noise term
    d^(-2 delta + 1 - mu). Both are active on the line delta + mu = 1.
    """

    gamma0: float
    delta: float
    n0: float
    mu: float
    d: int

    def __post_init__(self):
        if self.gamma0 <= 0 or self.n0 <= 0 or self.mu < 0 or self.d < 1:
            raise ValueError("require gamma0 > 0, n0 > 0, mu >= 0, d >= 1")
        if self.n_b < 1:
            raise ValueError("batch size n0 * d^mu must be >= 1")

    @property
    def gamma(self) -> float:
        return self.gamma0 * self.d ** (-self.delta)

    @property
    def n_b(self) -> int:
        return int(round(self.n0 * self.d**self.mu))

    @property
    def e_population(self) -> float:
        return -self.delta

    @property
    def e_hd_noise(self) -> float:
        return -2.0 * self.delta + 1.0 - self.mu

    @property
    def dtau(self) -> float:
        return self.d ** max(self.e_population, self.e_hd_noise)

    @property
    def flag_population(self) -> bool:
        return self.e_population >= max(self.e_population, self.e_hd_noise) - FLAG_EPS

    @property
    def flag_hd_noise(self) -> bool:
        return self.e_hd_noise >= max(self.e_population, self.e_hd_noise) - FLAG_EPS


# ---------------------------------------------------------------------------
# Drift matrices


def psi_matrix(stats: SufficientStats, delta: float) -> np.ndarray:
    """psi_jr = E[sigma'(lambda_j) lambda*_r Err]; label noise drops out."""
    Q, M, P = stats.Q, stats.M, stats.P
    a, a_star, act = stats.a, stats.a_star, stats.act
    p, k = stats.p, stats.k
    out = np.zeros((p, k))
    for j in range(p):
        for r in range(k):
            acc = 0.0
            for t in range(k):
                acc += a_star[t] * kernels.i3(
                    act, Q[j, j], M[j, r], M[j, t], P[r, r], P[r, t], P[t, t]
                ) / k
            for s in range(p):
                acc -= a[s] * kernels.i3(
                    act, Q[j, j], M[j, r], Q[j, s], P[r, r], M[s, r], Q[s, s]
                ) / p
            out[j, r] = acc
    return out


def phi_gf_matrix(stats: SufficientStats, delta: float) -> np.ndarray:
    """phi_gf_jl = E[sigma'(lambda_j) lambda_l Err]."""
    Q, M, P = stats.Q, stats.M, stats.P
    a, a_star, act = stats.a, stats.a_star, stats.act
    p, k = stats.p, stats.k
    out = np.zeros((p, p))
    for j in range(p):
        for l in range(p):
            acc = 0.0
            for t in range(k):
                acc += a_star[t] * kernels.i3(
                    act, Q[j, j], Q[j, l], M[j, t], Q[l, l], M[l, t], P[t, t]
                ) / k
            for s in range(p):
                acc -= a[s] * kernels.i3(
                    act, Q[j, j], Q[j, l], Q[j, s], Q[l, l], Q[l, s], Q[s, s]
                ) / p
            out[j, l] = acc
    return out


def phi_hd_matrix(stats: SufficientStats, delta: float) -> np.ndarray:
    """phi_hd_jl = E[sigma'(lambda_j) sigma'(lambda_l) Err^2] + Delta i2_noise."""
    Q, M, P = stats.Q, stats.M, stats.P
    a, a_star, act = stats.a, stats.a_star, stats.act
    p, k = stats.p, stats.k
    out = np.zeros((p, p))
    for j in range(p):
        for l in range(p):
            acc = 0.0
            for r in range(k):
                for t in range(k):
                    acc += a_star[r] * a_star[t] * kernels.i4(
                        act,
                        Q[j, j], Q[j, l], M[j, r], M[j, t],
                        Q[l, l], M[l, r], M[l, t],
                        P[r, r], P[r, t], P[t, t],
                    ) / k**2
            for s in range(p):
                for u in range(p):
                    acc += a[s] * a[u] * kernels.i4(
                        act,
                        Q[j, j], Q[j, l], Q[j, s], Q[j, u],
                        Q[l, l], Q[l, s], Q[l, u],
                        Q[s, s], Q[s, u], Q[u, u],
                    ) / p**2
            for s in range(p):
                for r in range(k):
                    acc -= 2.0 * a[s] * a_star[r] * kernels.i4(
                        act,
                        Q[j, j], Q[j, l], Q[j, s], M[j, r],
                        Q[l, l], Q[l, s], M[l, r],
                        Q[s, s], M[s, r], P[r, r],
                    ) / (p * k)
            acc += delta * kernels.i2_noise(act, Q[j, j], Q[j, l], Q[l, l])
            out[j, l] = acc
    return out


def _regularized_inverse(mat: np.ndarray) -> tuple[np.ndarray, bool]:
    cond = np.linalg.cond(mat)
    if not math.isfinite(cond) or cond > COND_LIMIT:
        mat = mat + RIDGE_EPS * np.eye(len(mat))
        cond = np.linalg.cond(mat)
        if not math.isfinite(cond) or cond > 1.0 / RIDGE_EPS**0.5:
            raise SingularOrthogonalOverlap("orthogonal overlap singular after ridge")
        return np.linalg.inv(mat), True
    return np.linalg.inv(mat), False


def phi_bc_matrix(
    stats: SufficientStats, delta: float, return_flag: bool = False
):
    """Intra-batch correlation correction.

    phi_bc_jl = psi_j P^-1 psi_l^T
              + (phi_gf_j - M P^-1 psi_j) (Q_perp)^-1 (phi_gf_l - M P^-1 psi_l)^T
    with Q_perp = Q - M P^-1 M^T, ridge-regularized when near-singular.
    """
    psi = psi_matrix(stats, delta)
    phi_gf = phi_gf_matrix(stats, delta)
    p_inv = np.linalg.inv(stats.P)
    q_perp = stats.Q - stats.M @ p_inv @ stats.M.T
    q_perp_inv, regularized = _regularized_inverse(q_perp)
    perp_part = phi_gf - psi @ p_inv @ stats.M.T  # rows: phi_gf_j - M P^-1 psi_j
    out = psi @ p_inv @ psi.T + perp_part @ q_perp_inv @ perp_part.T
    if return_flag:
        return out, regularized
    return out


# ---------------------------------------------------------------------------
# Asymptotic spherical dynamics


def _cap_matrices(
    stats: SufficientStats,
    regime: ScalingRegime,
    delta: float,
    population: bool,
    hd_noise: bool,
    batch_corr: bool = False,
    gamma_scales: Optional[tuple] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Assemble the capital Psi (p x k) and Phi (p x p) drift matrices.

    gamma_scales supplies the (population, hd, bc) prefactors; the asymptotic
    rhs uses (gamma0/p, gamma0^2/(p^2 n0), -) and the finite-d map the full
    d-dependent magnitudes.
    """
    a, a_star = stats.a, stats.a_star
    p = stats.p
    s_pop, s_hd, s_bc = gamma_scales
    cap_psi = np.zeros((stats.p, stats.k))
    cap_phi = np.zeros((stats.p, stats.p))
    if population:
        psi = psi_matrix(stats, delta)
        phi_gf = phi_gf_matrix(stats, delta)
        cap_psi += s_pop * (a[:, None] * psi)
        cap_phi += s_pop * (a[:, None] * phi_gf + a[None, :] * phi_gf.T)
    if hd_noise:
        phi_hd = phi_hd_matrix(stats, delta)
        cap_phi += s_hd * (a[:, None] * a[None, :] * phi_hd)
    if batch_corr:
        phi_bc = phi_bc_matrix(stats, delta)
        cap_phi += s_bc * (a[:, None] * a[None, :] * phi_bc)
    return cap_psi, cap_phi


def _spherical_feedback(
    stats: SufficientStats, cap_psi: np.ndarray, cap_phi: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    diag = np.diag(cap_phi)
    d_m = cap_psi - 0.5 * stats.M * diag[:, None]
    d_q = cap_phi - 0.5 * stats.Q * (diag[:, None] + diag[None, :])
    return d_m, d_q


def ode_rhs(
    stats: SufficientStats, regime: ScalingRegime, delta: float
) -> tuple[np.ndarray, np.ndarray]:
    """(dM/dtau, dQ/dtau) of the asymptotic spherical dynamics."""
    p = stats.p
    cap_psi, cap_phi = _cap_matrices(
        stats,
        regime,
        delta,
        population=regime.flag_population,
        hd_noise=regime.flag_hd_noise,
        gamma_scales=(
            regime.gamma0 / p,
            regime.gamma0**2 / (p**2 * regime.n0),
            0.0,
        ),
    )
    return _spherical_feedback(stats, cap_psi, cap_phi)


@dataclass
class ODETrajectory:
    taus: np.ndarray
    Ms: np.ndarray  # (n, p, k)
    Qs: np.ndarray  # (n, p, p)
    risks: np.ndarray
    regularized_steps: int = 0

    def overlap_frobenius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.Ms**2, axis=(1, 2)))


def _risk_of(stats: SufficientStats, delta: float) -> float:
    return kernels.population_risk(stats, delta)


def integrate(
    stats0: SufficientStats,
    regime: ScalingRegime,
    delta: float,
    tau_max: float,
    method: str = "rk4",
    step: Optional[float] = None,
    record_stride: int = 1,
    psd_tol: float = 1e-8,
) -> ODETrajectory:
    """Fixed-step integration of ode_rhs with stride-recorded trajectory.

    euler defaults to the natural step dtau; rk4 to min(dtau, 1e-2).
    """
    if tau_max <= 0:
        raise ValueError("tau_max must be positive")
    if step is None:
        step = regime.dtau if method == "euler" else min(regime.dtau, 1e-2)
    if step <= 0:
        raise ValueError("step must be positive")
    n_steps = max(1, int(round(tau_max / step)))
    stats = stats0
    taus, Ms, Qs, risks = [0.0], [stats.M], [stats.Q], [_risk_of(stats, delta)]

    def rhs(M, Q):
        s = replace(stats0, Q=Q, M=M)
        return ode_rhs(s, regime, delta)

    M, Q = stats0.M, stats0.Q
    for i in range(1, n_steps + 1):
        if method == "euler":
            dM, dQ = rhs(M, Q)
            M = M + step * dM
            Q = Q + step * dQ
        elif method == "rk4":
            k1 = rhs(M, Q)
            k2 = rhs(M + 0.5 * step * k1[0], Q + 0.5 * step * k1[1])
            k3 = rhs(M + 0.5 * step * k2[0], Q + 0.5 * step * k2[1])
            k4 = rhs(M + step * k3[0], Q + step * k3[1])
            M = M + step / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            Q = Q + step / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        else:
            raise ValueError(f"unknown method {method!r}")
        stats = replace(stats0, Q=Q, M=M)
        if stats.min_eigenvalue() < -psd_tol:
            raise PSDViolation(f"Omega lost PSD at tau={i * step}")
        if i % record_stride == 0 or i == n_steps:
            taus.append(i * step)
            Ms.append(M)
            Qs.append(Q)
            risks.append(_risk_of(stats, delta))
    return ODETrajectory(
        np.array(taus), np.array(Ms), np.array(Qs), np.array(risks)
    )


# ---------------------------------------------------------------------------
# Finite-d full process


def full_process_step(
    stats: SufficientStats, regime: ScalingRegime, delta: float
) -> SufficientStats:
    """One step of the finite-d deterministic map with all terms retained.

    Per-step magnitudes: population d^-delta gamma0/p; high-dimensional noise
    d^(-2 delta + 1 - mu) gamma0^2/(p^2 n0); batch correlation d^(-2 delta)
    gamma0^2/p^2 (only when mu != 0); then the spherical normalization feedback.
    """
    d = regime.d
    p = stats.p
    s_pop = d ** (-regime.delta) * regime.gamma0 / p
    s_hd = d ** (-2.0 * regime.delta + 1.0 - regime.mu) * regime.gamma0**2 / (
        p**2 * regime.n0
    )
    s_bc = d ** (-2.0 * regime.delta) * regime.gamma0**2 / p**2
    cap_psi, cap_phi = _cap_matrices(
        stats,
        regime,
        delta,
        population=True,
        hd_noise=True,
        batch_corr=(regime.mu != 0.0),
        gamma_scales=(s_pop, s_hd, s_bc),
    )
    d_m, d_q = _spherical_feedback(stats, cap_psi, cap_phi)
    return replace(stats, M=stats.M + d_m, Q=stats.Q + d_q)


def integrate_full_process(
    stats0: SufficientStats,
    regime: ScalingRegime,
    delta: float,
    n_steps: int,
    record_stride: int = 1,
) -> ODETrajectory:
    """Iterate full_process_step; taus are steps scaled by the natural dtau."""
    stats = stats0
    taus, Ms, Qs, risks = [0.0], [stats.M], [stats.Q], [_risk_of(stats, delta)]
    for t in range(1, n_steps + 1):
        stats = full_process_step(stats, regime, delta)
        if t % record_stride == 0 or t == n_steps:
            taus.append(t * regime.dtau)
            Ms.append(stats.M)
            Qs.append(stats.Q)
            risks.append(_risk_of(stats, delta))
    return ODETrajectory(
        np.array(taus), np.array(Ms), np.array(Qs), np.array(risks)
    )


def escape_time(traj: ODETrajectory, eta: float, step_like: bool = True) -> Optional[float]:
    """First tau (interpolated) where the overlap Frobenius norm reaches eta.

    Returns None when the trajectory never crosses. Interpolation avoids
    integer-rounding noise when fitting escape-time scaling laws.
    """
    fro = traj.overlap_frobenius()
    above = np.nonzero(fro >= eta)[0]
    if len(above) == 0:
        return None
    i = int(above[0])
    if i == 0:
        return 0.0
    t0, t1 = traj.taus[i - 1], traj.taus[i]
    f0, f1 = fro[i - 1], fro[i]
    if f1 == f0:
        return float(t1)
    return float(t0 + (eta - f0) / (f1 - f0) * (t1 - t0))
