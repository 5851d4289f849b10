"""Activation functions, probabilists' Hermite analysis, and GLM drift series.

Coefficients are always stored in the orthonormalized basis he_k = He_k / sqrt(k!),
so a pure degree-k Hermite activation has a one-hot coefficient vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import erf, roots_hermitenorm

MAX_HERMITE_DEGREE = 20  # three-term recurrence stays accurate in double precision
DEFAULT_MAX_DEGREE = 12
DEFAULT_ZERO_TOL = 1e-9  # relative to the largest coefficient magnitude
QUADRATURE_NODES = 200

ANALYTIC_KINDS = {("hermite", 2), ("hermite", 3), ("erf_scaled", None)}


class QuadratureError(RuntimeError):
    """Raised when doubling the node count moves a coefficient beyond tolerance."""


class NoNonzeroCoefficient(ValueError):
    """Raised when every degree >= 1 coefficient is below tolerance."""


def hermite_poly(k: int, x):
    """Probabilists' Hermite polynomial He_k via the three-term recurrence."""
    if k < 0 or k > MAX_HERMITE_DEGREE:
        raise ValueError(f"degree {k} outside supported range 0..{MAX_HERMITE_DEGREE}")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if k == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = x.copy()
    for j in range(1, k):
        h, h_prev = x * h - j * h_prev, h
    return h if h.ndim else float(h)


def hermite_poly_deriv(k: int, x):
    """He_k'(x) = k He_{k-1}(x)."""
    if k == 0:
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x)
    return k * hermite_poly(k - 1, np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ActivationSpec:
    """A pointwise-evaluable activation with an evaluable derivative.

    kind: one of hermite, erf_scaled, tanh, tanh_of_product, tabulated.
    degree: Hermite degree (hermite) or number of product factors (tanh_of_product).
    table: (x, y) arrays for tabulated activations; derivative by finite differences.
    """

    kind: str
    degree: Optional[int] = None
    table: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "hermite":
            if not (isinstance(self.degree, int) and 1 <= self.degree <= MAX_HERMITE_DEGREE):
                raise ValueError("hermite activation needs degree in 1..20")
        elif self.kind == "tanh_of_product":
            if not (isinstance(self.degree, int) and self.degree >= 1):
                raise ValueError("tanh_of_product needs a positive number of factors")
        elif self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated activation needs a point-value table")
        elif self.kind not in ("erf_scaled", "tanh"):
            raise ValueError(f"unknown activation kind {self.kind!r}")

    @property
    def analytic_kernels(self) -> bool:
        key = (self.kind, self.degree if self.kind == "hermite" else None)
        return key in ANALYTIC_KINDS

    @property
    def is_multi_index(self) -> bool:
        return self.kind == "tanh_of_product"

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "hermite":
            return hermite_poly(self.degree, x)
        if self.kind == "erf_scaled":
            return erf(x / math.sqrt(2.0))
        if self.kind == "tanh":
            return np.tanh(x)
        if self.kind == "tabulated":
            xs, ys = self.table
            return np.interp(x, xs, ys)
        raise ValueError(f"{self.kind} is not a scalar activation")

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "hermite":
            return hermite_poly_deriv(self.degree, x)
        if self.kind == "erf_scaled":
            return math.sqrt(2.0 / math.pi) * np.exp(-0.5 * x * x)
        if self.kind == "tanh":
            return 1.0 - np.tanh(x) ** 2
        if self.kind == "tabulated":
            xs, ys = self.table
            slopes = np.gradient(np.asarray(ys, dtype=float), np.asarray(xs, dtype=float))
            return np.interp(x, xs, slopes)
        raise ValueError(f"{self.kind} is not a scalar activation")

    def multi_value(self, u):
        """Evaluate a multi-index target on rows of u (shape n x k)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "tanh_of_product":
            return np.tanh(np.prod(u, axis=-1))
        raise ValueError(f"{self.kind} is not a multi-index activation")


def hermite(degree: int) -> ActivationSpec:
    return ActivationSpec("hermite", degree)


def erf_scaled() -> ActivationSpec:
    return ActivationSpec("erf_scaled")


def tanh_act() -> ActivationSpec:
    return ActivationSpec("tanh")


def tanh_of_product(factors: int) -> ActivationSpec:
    return ActivationSpec("tanh_of_product", factors)


def tabulated(xs, ys) -> ActivationSpec:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    return ActivationSpec("tabulated", table=(xs, ys))


@dataclass(frozen=True)
class HermiteProfile:
    """Orthonormal-basis Hermite coefficients c_0..c_K of an activation."""

    coeffs: np.ndarray
    max_degree: int
    zero_tol: float = DEFAULT_ZERO_TOL

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        if len(self.coeffs) != self.max_degree + 1:
            raise ValueError("coeffs length must be max_degree + 1")

    @property
    def abs_tol(self) -> float:
        scale = float(np.max(np.abs(self.coeffs))) if len(self.coeffs) else 0.0
        return self.zero_tol * scale


def gauss_hermite_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E_{xi~N(0,1)}[f(xi)] = sum_i w_i f(x_i).

    scipy's Golub-Welsch routine stays finite at several hundred nodes where
    numpy's hermegauss overflows to NaN.
    """
    x, w = roots_hermitenorm(n)
    w = w / math.sqrt(2.0 * math.pi)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
        raise QuadratureError(f"non-finite quadrature rule at {n} nodes")
    return x, w


def gaussian_expectation(f: Callable, n_nodes: int = QUADRATURE_NODES) -> float:
    x, w = gauss_hermite_nodes(n_nodes)
    return float(np.dot(w, f(x)))


def _coeffs_at(act: ActivationSpec, max_degree: int, n_nodes: int) -> np.ndarray:
    x, w = gauss_hermite_nodes(n_nodes)
    vals = act.value(x)
    out = np.empty(max_degree + 1)
    for k in range(max_degree + 1):
        he_k = hermite_poly(k, x) / math.sqrt(math.factorial(k))
        out[k] = np.dot(w, vals * he_k)
    return out


def hermite_coefficients(
    act: ActivationSpec,
    max_degree: int = DEFAULT_MAX_DEGREE,
    zero_tol: float = DEFAULT_ZERO_TOL,
    n_nodes: int = QUADRATURE_NODES,
) -> HermiteProfile:
    """Orthonormal Hermite coefficients by Gauss-Hermite quadrature.

    Convergence is asserted by doubling the node count; quadrature with a fixed
    node count is deterministic, so recomputation is bitwise reproducible.
    """
    if max_degree > MAX_HERMITE_DEGREE:
        raise ValueError(f"max_degree must be <= {MAX_HERMITE_DEGREE}")
    if act.kind == "hermite":
        # exact one-hot profile: He_l = sqrt(l!) he_l
        coeffs = np.zeros(max_degree + 1)
        if act.degree <= max_degree:
            coeffs[act.degree] = math.sqrt(math.factorial(act.degree))
        return HermiteProfile(coeffs, max_degree, zero_tol)
    coeffs = _coeffs_at(act, max_degree, n_nodes)
    check = _coeffs_at(act, max_degree, 2 * n_nodes)
    scale = max(np.max(np.abs(coeffs)), 1e-300)
    if np.max(np.abs(coeffs - check)) > zero_tol * scale:
        raise QuadratureError("coefficients did not converge under node doubling")
    return HermiteProfile(coeffs, max_degree, zero_tol)


def information_exponent(profile: HermiteProfile) -> int:
    """Lowest degree >= 1 whose coefficient is above the relative tolerance."""
    tol = profile.abs_tol
    for k in range(1, profile.max_degree + 1):
        if abs(profile.coeffs[k]) > tol:
            return k
    raise NoNonzeroCoefficient("all degree >= 1 coefficients are below tolerance")


def drift_phi(student: HermiteProfile, teacher: HermiteProfile, m: float) -> float:
    """phi(m) = sum_k (k+1) c_{k+1} c*_{k+1} m^k, truncated at max_degree.

    Equals E[sigma'(lambda) sigma*'(lambda*)] for unit-norm weights at overlap m;
    matched degree-l Hermite pairs give l * l! * m^(l-1).
    """
    if student.max_degree != teacher.max_degree:
        raise ValueError("profiles must share max_degree")
    c, cs = student.coeffs, teacher.coeffs
    total = 0.0
    for k in range(student.max_degree):
        total += (k + 1) * c[k + 1] * cs[k + 1] * m**k
    return total


def c_sq(act: ActivationSpec) -> float:
    """c_sq = E[z sigma(z) sigma'(z)], the self-interaction constant."""
    return gaussian_expectation(lambda z: z * act.value(z) * act.deriv(z))


def drift_psi(
    student: HermiteProfile,
    teacher: HermiteProfile,
    m: float,
    loss: str = "correlation",
    student_act: Optional[ActivationSpec] = None,
) -> float:
    """psi(m) along the student direction.

    correlation: psi_corr(m) = sum_a sqrt((a+1)(a+2)) c_{a+2} c*_a m^a
    (the coefficient of he_a in sigma'' times c*_a); square subtracts
    c_sq = E[z sigma(z) sigma'(z)] computed by quadrature from student_act.
    """
    if student.max_degree != teacher.max_degree:
        raise ValueError("profiles must share max_degree")
    c, cs = student.coeffs, teacher.coeffs
    total = 0.0
    for a in range(student.max_degree - 1):
        total += math.sqrt((a + 1) * (a + 2)) * c[a + 2] * cs[a] * m**a
    if loss == "correlation":
        return total
    if loss == "square":
        if student_act is None:
            raise ValueError("square loss needs student_act for the c_sq term")
        return total - c_sq(student_act)
    raise ValueError(f"unknown loss {loss!r}")
