"""One-pass SGD on teacher-student two-layer networks with Gaussian data.

Two interchangeable integrators produce statistically identical trajectories:

- the full engine keeps the p x d weight matrix and draws d-dimensional batches;
- the reduced engine (p = k = 1 only) tracks the single overlap m and samples
  the conditional law of the update exactly: the batch enters only through the
  projections (lambda, lambda*), and the off-span gradient norm is
  ||c||^2 * chi^2_{d-2} given those projections.

Every step consumes one fresh batch (one-pass); the rng stream of step t is
derived from (seed, run_index, t) so scheduling cannot perturb results.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .activations import ActivationSpec, hermite_coefficients, information_exponent
from .ode import ScalingRegime, SufficientStats
from . import kernels
from .streams import stream

ROW_NORM_FLOOR = 1e-300
MAX_RECORDED_PAIRS = 16


class ZeroNormUpdate(RuntimeError):
    """Raised when a projected update lands numerically at the origin."""


@dataclass(frozen=True)
class TeacherModel:
    """Teacher weights (unit rows), target nonlinearity, and label noise."""

    W_star: np.ndarray
    h_star: ActivationSpec
    noise_var: float = 0.0
    a_star: np.ndarray = None

    def __post_init__(self):
        W = np.asarray(self.W_star, dtype=float)
        object.__setattr__(self, "W_star", W)
        norms = np.linalg.norm(W, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ValueError("teacher rows must have unit norm")
        if self.noise_var < 0:
            raise ValueError("noise variance must be >= 0")
        a = np.ones(W.shape[0]) if self.a_star is None else np.asarray(self.a_star, float)
        object.__setattr__(self, "a_star", a)

    @property
    def k(self) -> int:
        return self.W_star.shape[0]

    @property
    def d(self) -> int:
        return self.W_star.shape[1]

    def P(self) -> np.ndarray:
        return self.W_star @ self.W_star.T

    def clean_labels(self, lam_star: np.ndarray) -> np.ndarray:
        """Noiseless targets from the teacher pre-activations (n x k)."""
        if self.h_star.is_multi_index:
            return self.h_star.multi_value(lam_star)
        return self.h_star.value(lam_star) @ self.a_star / self.k


def orthonormal_teacher(
    k: int, d: int, h_star: ActivationSpec, noise_var: float = 0.0
) -> TeacherModel:
    """Teacher with the first k coordinate directions as rows (P = I_k)."""
    W = np.zeros((k, d))
    W[:, :k] = np.eye(k)
    return TeacherModel(W, h_star, noise_var)


@dataclass
class StudentModel:
    W: np.ndarray
    a: np.ndarray
    act: ActivationSpec

    @property
    def p(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    loss: str  # square | correlation
    update: str  # projected | spherical
    regime: ScalingRegime
    t_max: int
    eta: float
    init: str = "cold"  # cold | warm:<m0> | sign_fixed_cold
    record_stride: int = 1
    seed: int = 0
    run_index: int = 0
    adaptive: bool = False
    switch_fraction: float = 0.6
    lr_decay: float = 0.995
    test_risk: str = "analytic"  # analytic | mc:<n_test>
    engine: str = "auto"  # auto | full | reduced

    def __post_init__(self):
        if not (0.0 < self.eta < 1.0):
            raise ValueError("eta must lie in (0, 1)")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if not (0.0 < self.switch_fraction < 1.0):
            raise ValueError("switch_fraction must lie in (0, 1)")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.loss not in ("square", "correlation"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.update not in ("projected", "spherical"):
            raise ValueError(f"unknown update {self.update!r}")


@dataclass
class Trajectory:
    t: np.ndarray
    overlap_fro: np.ndarray
    M: np.ndarray  # (n, p, k) entries, or (n, 1, 1) for GLM
    q_diag: np.ndarray  # (n, p)
    risk: np.ndarray
    risk_stderr: np.ndarray
    gamma: np.ndarray
    t_eta_plus: Optional[int]
    censored: bool
    wall_time: float
    samples_used: int


# ---------------------------------------------------------------------------
# Elementary operations (full engine)


def sample_batch(
    teacher: TeacherModel, d: int, n_b: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Fresh i.i.d. standard Gaussian batch with noisy teacher labels."""
    if n_b < 1:
        raise ValueError("n_b must be >= 1")
    Z = rng.standard_normal((n_b, d))
    y = teacher.clean_labels(Z @ teacher.W_star.T)
    if teacher.noise_var > 0:
        y = y + math.sqrt(teacher.noise_var) * rng.standard_normal(n_b)
    return Z, y


def predict(student: StudentModel, Z: np.ndarray) -> np.ndarray:
    lam = Z @ student.W.T
    return student.act.value(lam) @ student.a / student.p


def batch_gradient(
    student: StudentModel, Z: np.ndarray, y: np.ndarray, loss: str
) -> np.ndarray:
    """Row j: -(a_j / (p n_b)) sum_nu err^nu sigma'(lambda_j^nu) z^nu.

    err = y - f for the square loss; the correlation loss keeps only the
    teacher term, err = y (the student self-term is dropped).
    """
    n_b = Z.shape[0]
    lam = Z @ student.W.T
    if loss == "square":
        err = y - student.act.value(lam) @ student.a / student.p
    elif loss == "correlation":
        err = y
    else:
        raise ValueError(f"unknown loss {loss!r}")
    weights = student.act.deriv(lam) * err[:, None]  # (n_b, p)
    grad = -(weights.T @ Z) * (student.a[:, None] / (student.p * n_b))
    return grad


def _renormalize(W: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(W, axis=1, keepdims=True)
    if np.any(norms < ROW_NORM_FLOOR):
        raise ZeroNormUpdate("projected update collapsed a row to zero norm")
    return W / norms


def step_projected(student: StudentModel, grad: np.ndarray, gamma: float) -> StudentModel:
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    W = _renormalize(student.W - gamma * grad)
    return StudentModel(W, student.a, student.act)


def step_spherical(student: StudentModel, grad: np.ndarray, gamma: float) -> StudentModel:
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    radial = np.sum(grad * student.W, axis=1, keepdims=True)
    tangent = grad - radial * student.W
    W = _renormalize(student.W - gamma * tangent)
    return StudentModel(W, student.a, student.act)


def overlap_frobenius(student: StudentModel, teacher: TeacherModel) -> float:
    return float(np.linalg.norm(student.W @ teacher.W_star.T))


def init_student(
    p: int,
    d: int,
    mode: str,
    teacher: TeacherModel,
    rng: np.random.Generator,
    act: Optional[ActivationSpec] = None,
) -> StudentModel:
    """cold: uniform sphere rows; warm:<m0>: fixed teacher overlap (GLM);
    sign_fixed_cold: cold with signs flipped toward positive drift (odd exponent)."""
    act = act if act is not None else teacher.h_star
    if mode.startswith("warm:"):
        m0 = float(mode.split(":", 1)[1])
        if not (-1.0 < m0 < 1.0):
            raise ValueError("warm-start m0 must lie in (-1, 1)")
        if teacher.k != 1 or p != 1:
            raise ValueError("warm:<m0> initialization is for GLMs; use overlap init")
        w_star = teacher.W_star[0]
        u = rng.standard_normal(d)
        u -= (u @ w_star) * w_star
        u /= np.linalg.norm(u)
        W = (m0 * w_star + math.sqrt(1.0 - m0**2) * u)[None, :]
        return StudentModel(W, np.ones(p), act)
    if mode not in ("cold", "sign_fixed_cold"):
        raise ValueError(f"unknown init mode {mode!r}")
    W = _renormalize(rng.standard_normal((p, d)))
    if mode == "sign_fixed_cold":
        prof_s = hermite_coefficients(act)
        prof_t = hermite_coefficients(teacher.h_star)
        ell = information_exponent(prof_t)
        if ell % 2 == 1:
            sign = math.copysign(1.0, prof_s.coeffs[ell] * prof_t.coeffs[ell])
            m_rows = W @ teacher.W_star.T  # flip rows whose overlap fights the drift
            flip = np.sign(m_rows.sum(axis=1)) * sign < 0
            W[flip] *= -1.0
    return StudentModel(W, np.ones(p), act)


def student_from_overlaps(
    M0: np.ndarray, Q0: np.ndarray, teacher: TeacherModel, rng: np.random.Generator,
    act: Optional[ActivationSpec] = None,
) -> StudentModel:
    """Student with exact initial overlaps: W0 = M0 P^-1 W* + L U, where U is an
    orthonormal frame orthogonal to the teacher rows and L L^T = Q0 - M0 P^-1 M0^T."""
    M0 = np.asarray(M0, dtype=float)
    Q0 = np.asarray(Q0, dtype=float)
    p, k = M0.shape
    d = teacher.d
    act = act if act is not None else teacher.h_star
    P_inv = np.linalg.inv(teacher.P())
    coef = M0 @ P_inv
    resid = Q0 - coef @ M0.T
    L = np.linalg.cholesky(resid + 1e-14 * np.eye(p))
    G = rng.standard_normal((p, d))
    G -= (G @ teacher.W_star.T) @ P_inv @ teacher.W_star
    U, _ = np.linalg.qr(G.T)
    W = coef @ teacher.W_star + L @ U[:, :p].T
    return StudentModel(W, np.ones(p), act)


# ---------------------------------------------------------------------------
# Risk measurement


class _RiskEvaluator:
    """Analytic risk from instantaneous overlaps when possible, else a fixed
    fresh Monte-Carlo test set drawn once per run."""

    TEST_SET_STEP = 2**62  # stream index reserved for the test set, never a step

    def __init__(self, teacher: TeacherModel, student: StudentModel, config: TrainConfig):
        self.teacher = teacher
        self.delta = teacher.noise_var
        self.mode = config.test_risk
        self.analytic = (
            self.mode == "analytic"
            and student.act.analytic_kernels
            and not teacher.h_star.is_multi_index
            and student.act == teacher.h_star
        )
        self.series = None
        if not self.analytic and self.mode == "analytic" and student.p == 1 and teacher.k == 1 \
                and not teacher.h_star.is_multi_index:
            cs = hermite_coefficients(student.act).coeffs
            ct = hermite_coefficients(teacher.h_star).coeffs
            self.series = (cs, ct)
            self.analytic = True
        self.test_set = None
        if not self.analytic:
            n_test = 10**4
            if self.mode.startswith("mc:"):
                n_test = int(self.mode.split(":", 1)[1])
            rng = stream(config.seed, config.run_index, self.TEST_SET_STEP)
            self.test_set = sample_batch(teacher, teacher.d, n_test, rng)

    def risk_from_overlaps(self, M, Q, student: StudentModel):
        if self.series is not None:
            cs, ct = self.series
            m = float(M[0, 0])
            cross = float(np.sum(cs * ct * m ** np.arange(len(cs))))
            val = self.delta / 2.0 + 0.5 * (np.sum(cs**2) + np.sum(ct**2) - 2.0 * cross)
            return float(val), 0.0
        stats = SufficientStats(
            Q=Q, M=M, P=self.teacher.P(), a=student.a, a_star=self.teacher.a_star,
            act=student.act,
        )
        return kernels.population_risk(stats, self.delta), 0.0

    def __call__(self, student: StudentModel):
        M = student.W @ self.teacher.W_star.T
        Q = student.W @ student.W.T
        if self.analytic:
            return self.risk_from_overlaps(M, Q, student)
        Z, y = self.test_set
        sq = (y - predict(student, Z)) ** 2
        return 0.5 * float(np.mean(sq)), 0.5 * float(np.std(sq, ddof=1) / math.sqrt(len(sq)))


# ---------------------------------------------------------------------------
# Trajectory recording


class _Recorder:
    def __init__(self, p: int, k: int):
        self.keep_pairs = p * k <= MAX_RECORDED_PAIRS
        self.p, self.k = p, k
        self.rows = {name: [] for name in ("t", "fro", "M", "q", "risk", "stderr", "gamma")}

    def add(self, t, fro, M, q_diag, risk, stderr, gamma):
        self.rows["t"].append(t)
        self.rows["fro"].append(fro)
        self.rows["M"].append(np.array(M) if self.keep_pairs else np.zeros((0, 0)))
        self.rows["q"].append(np.array(q_diag))
        self.rows["risk"].append(risk)
        self.rows["stderr"].append(stderr)
        self.rows["gamma"].append(gamma)

    def build(self, t_eta, censored, wall, samples) -> Trajectory:
        return Trajectory(
            t=np.array(self.rows["t"], dtype=int),
            overlap_fro=np.array(self.rows["fro"]),
            M=np.array(self.rows["M"]),
            q_diag=np.array(self.rows["q"]),
            risk=np.array(self.rows["risk"]),
            risk_stderr=np.array(self.rows["stderr"]),
            gamma=np.array(self.rows["gamma"]),
            t_eta_plus=t_eta,
            censored=censored,
            wall_time=wall,
            samples_used=samples,
        )


# ---------------------------------------------------------------------------
# Full-dimensional run


def _run_full(teacher: TeacherModel, student: StudentModel, config: TrainConfig) -> Trajectory:
    start = time.perf_counter()
    regime = config.regime
    d, n_b = regime.d, regime.n_b
    gamma = regime.gamma
    risk_eval = _RiskEvaluator(teacher, student, config)
    recorder = _Recorder(student.p, teacher.k)
    stepper = step_projected if config.update == "projected" else step_spherical

    loss = "correlation" if config.adaptive else config.loss
    initial_risk = None
    samples = 0
    t_eta = None

    fro = overlap_frobenius(student, teacher)
    risk, stderr = risk_eval(student)
    if config.adaptive:
        initial_risk = risk
    recorder.add(0, fro, student.W @ teacher.W_star.T, np.sum(student.W**2, axis=1),
                 risk, stderr, gamma)
    if fro >= config.eta:
        t_eta = 0

    for t in range(1, config.t_max + 1):
        rng = stream(config.seed, config.run_index, t)
        Z, y = sample_batch(teacher, d, n_b, rng)
        samples += n_b
        if config.adaptive and loss == "square":
            gamma *= config.lr_decay
        grad = batch_gradient(student, Z, y, loss)
        student = stepper(student, grad, gamma)

        fro = overlap_frobenius(student, teacher)
        if t_eta is None and fro >= config.eta:
            t_eta = t
        record_now = (t % config.record_stride == 0) or t == config.t_max
        need_risk = record_now or (config.adaptive and loss == "correlation")
        if need_risk:
            risk, stderr = risk_eval(student)
            if config.adaptive and loss == "correlation" and risk < config.switch_fraction * initial_risk:
                loss = "square"
        if record_now:
            recorder.add(t, fro, student.W @ teacher.W_star.T,
                         np.sum(student.W**2, axis=1), risk, stderr, gamma)
    wall = time.perf_counter() - start
    return recorder.build(t_eta, t_eta is None, wall, samples)


# ---------------------------------------------------------------------------
# Exact reduced GLM run


def _run_reduced(teacher: TeacherModel, student: StudentModel, config: TrainConfig) -> Trajectory:
    start = time.perf_counter()
    regime = config.regime
    d, n_b = regime.d, regime.n_b
    gamma = regime.gamma
    act = student.act
    delta = teacher.noise_var
    risk_eval = _RiskEvaluator(teacher, student, config)
    recorder = _Recorder(1, 1)

    m = float((student.W @ teacher.W_star.T)[0, 0])
    loss = "correlation" if config.adaptive else config.loss
    initial_risk = None
    samples = 0
    t_eta = None

    def risk_at(mm: float):
        return risk_eval.risk_from_overlaps(np.array([[mm]]), np.array([[1.0]]), student)

    risk, stderr = risk_at(m)
    if config.adaptive:
        initial_risk = risk
    recorder.add(0, abs(m), [[m]], [1.0], risk, stderr, gamma)
    if abs(m) >= config.eta:
        t_eta = 0

    spherical = config.update == "spherical"
    for t in range(1, config.t_max + 1):
        rng = stream(config.seed, config.run_index, t)
        lam = rng.standard_normal(n_b)
        zeta = rng.standard_normal(n_b)
        lam_star = m * lam + math.sqrt(max(0.0, 1.0 - m * m)) * zeta
        y = act.value(lam_star)
        if delta > 0:
            y = y + math.sqrt(delta) * rng.standard_normal(n_b)
        samples += n_b
        err = y - act.value(lam) if loss == "square" else y
        c = -(err * act.deriv(lam)) / n_b
        gw = float(c @ lam)
        gstar = float(c @ lam_star)
        c_norm_sq = float(c @ c)
        perp_sq = c_norm_sq * float(rng.chisquare(d - 2)) if d > 2 else 0.0
        beta = (gstar - m * gw) / math.sqrt(max(1e-300, 1.0 - m * m))
        g_norm_sq = gw**2 + beta**2 + perp_sq

        if config.adaptive and loss == "square":
            gamma *= config.lr_decay
        if spherical:
            num = m - gamma * (gstar - gw * m)
            den_sq = 1.0 + gamma**2 * (g_norm_sq - gw**2)
        else:
            num = m - gamma * gstar
            den_sq = 1.0 - 2.0 * gamma * gw + gamma**2 * g_norm_sq
        if den_sq < ROW_NORM_FLOOR:
            raise ZeroNormUpdate("projected update collapsed the weight to zero norm")
        m = max(-1.0, min(1.0, num / math.sqrt(den_sq)))

        if t_eta is None and abs(m) >= config.eta:
            t_eta = t
        record_now = (t % config.record_stride == 0) or t == config.t_max
        need_risk = record_now or (config.adaptive and loss == "correlation")
        if need_risk:
            risk, stderr = risk_at(m)
            if config.adaptive and loss == "correlation" and risk < config.switch_fraction * initial_risk:
                loss = "square"
        if record_now:
            recorder.add(t, abs(m), [[m]], [1.0], risk, stderr, gamma)
    wall = time.perf_counter() - start
    return recorder.build(t_eta, t_eta is None, wall, samples)


def run(teacher: TeacherModel, student: StudentModel, config: TrainConfig) -> Trajectory:
    """Train until t_max, recording overlaps/risk and the weak-recovery time."""
    use_reduced = config.engine == "reduced" or (
        config.engine == "auto"
        and student.p == 1
        and teacher.k == 1
        and not teacher.h_star.is_multi_index
        and student.act == teacher.h_star
    )
    if use_reduced:
        if student.p != 1 or teacher.k != 1:
            raise ValueError("reduced engine requires p = k = 1")
        return _run_reduced(teacher, student, config)
    return _run_full(teacher, student, config)
