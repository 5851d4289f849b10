import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mindex.activations import erf_scaled, hermite, tanh_act, tanh_of_product
from mindex.engine import (
    StudentModel,
    TeacherModel,
    TrainConfig,
    ZeroNormUpdate,
    batch_gradient,
    init_student,
    orthonormal_teacher,
    overlap_frobenius,
    run,
    sample_batch,
    step_projected,
    step_spherical,
    student_from_overlaps,
)
from mindex.ode import ScalingRegime
from mindex.streams import mix64, splitmix64, stream


def make_config(**kw):
    defaults = dict(
        loss="square",
        update="projected",
        regime=ScalingRegime(gamma0=0.5, delta=0.5, n0=1.0, mu=1.0, d=200),
        t_max=50,
        eta=0.5,
        init="warm:0.3",
        seed=123,
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


# ---------------------------------------------------------------------------
# Streams


def test_splitmix_reference_values():
    # published splitmix64 test vector
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_mix64_order_sensitivity():
    assert mix64(1, 2) != mix64(2, 1)
    assert mix64(1, 2, 3) != mix64(1, 2, 4)


def test_stream_independence_and_reproducibility():
    a = stream(7, 0, 3).standard_normal(5)
    b = stream(7, 0, 3).standard_normal(5)
    c = stream(7, 0, 4).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


# ---------------------------------------------------------------------------
# Elementary operations


def test_gradient_finite_differences():
    rng = np.random.default_rng(1)
    h = 1e-5
    for trial in range(4):
        p, k, d = rng.integers(1, 5), rng.integers(1, 4), 50
        W_star = rng.standard_normal((k, d))
        W_star /= np.linalg.norm(W_star, axis=1, keepdims=True)
        teacher = TeacherModel(W_star, erf_scaled())
        Z, y = sample_batch(teacher, d, 32, rng)
        W = rng.standard_normal((p, d))
        student = StudentModel(W, np.ones(p), tanh_act())
        for loss in ("square", "correlation"):
            grad = batch_gradient(student, Z, y, loss)

            def loss_val(Wf):
                s = StudentModel(Wf, np.ones(p), tanh_act())
                f = s.act.value(Z @ Wf.T) @ s.a / p
                if loss == "square":
                    return float(np.mean(0.5 * (y - f) ** 2))
                return float(np.mean(1.0 - y * f))

            idx = [(rng.integers(0, p), rng.integers(0, d)) for _ in range(6)]
            for i, j in idx:
                Wp, Wm = W.copy(), W.copy()
                Wp[i, j] += h
                Wm[i, j] -= h
                fd = (loss_val(Wp) - loss_val(Wm)) / (2 * h)
                scale = max(abs(fd), abs(grad[i, j]), 1e-8)
                assert abs(grad[i, j] - fd) / scale < 1e-5


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(1e-4, 10.0))
def test_updates_preserve_unit_rows(seed, gamma):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((3, 20))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    grad = rng.standard_normal((3, 20))
    s = StudentModel(W, np.ones(3), hermite(2))
    for stepper in (step_projected, step_spherical):
        out = stepper(s, grad, gamma)
        np.testing.assert_allclose(np.linalg.norm(out.W, axis=1), 1.0, atol=1e-12)


def test_projected_zero_norm_raises():
    W = np.array([[1.0, 0.0]])
    s = StudentModel(W, np.ones(1), hermite(2))
    with pytest.raises(ZeroNormUpdate):
        step_projected(s, W.copy(), 1.0)


def test_teacher_requires_unit_rows():
    with pytest.raises(ValueError):
        TeacherModel(np.array([[2.0, 0.0]]), hermite(2))


def test_init_modes():
    rng = np.random.default_rng(0)
    teacher = orthonormal_teacher(1, 300, hermite(3))
    warm = init_student(1, 300, "warm:0.3", teacher, rng)
    assert overlap_frobenius(warm, teacher) == pytest.approx(0.3, abs=1e-12)
    cold = init_student(2, 300, "cold", teacher, rng)
    np.testing.assert_allclose(np.linalg.norm(cold.W, axis=1), 1.0, atol=1e-12)
    fixed = init_student(1, 300, "sign_fixed_cold", teacher, rng)
    assert float((fixed.W @ teacher.W_star.T)[0, 0]) > 0.0


def test_student_from_overlaps_exact():
    rng = np.random.default_rng(4)
    teacher = orthonormal_teacher(2, 400, erf_scaled())
    M0 = np.array([[0.3, 0.1], [0.1, 0.3]])
    Q0 = np.eye(2)
    student = student_from_overlaps(M0, Q0, teacher, rng)
    np.testing.assert_allclose(student.W @ teacher.W_star.T, M0, atol=1e-7)
    np.testing.assert_allclose(student.W @ student.W.T, Q0, atol=1e-7)


def test_multi_index_teacher_labels():
    teacher = orthonormal_teacher(2, 50, tanh_of_product(2))
    rng = np.random.default_rng(2)
    Z, y = sample_batch(teacher, 50, 100, rng)
    lam = Z @ teacher.W_star.T
    np.testing.assert_allclose(y, np.tanh(lam[:, 0] * lam[:, 1]))


# ---------------------------------------------------------------------------
# Full runs


def test_run_deterministic():
    teacher = orthonormal_teacher(1, 200, hermite(2))
    config = make_config()
    rng = stream(config.seed, 0, 2**61)
    s0 = init_student(1, 200, config.init, teacher, rng, hermite(2))
    t1 = run(teacher, StudentModel(s0.W.copy(), s0.a.copy(), s0.act), config)
    t2 = run(teacher, StudentModel(s0.W.copy(), s0.a.copy(), s0.act), config)
    np.testing.assert_array_equal(t1.overlap_fro, t2.overlap_fro)
    np.testing.assert_array_equal(t1.risk, t2.risk)
    assert t1.t_eta_plus == t2.t_eta_plus


def test_one_pass_sample_accounting():
    teacher = orthonormal_teacher(1, 100, hermite(2))
    config = make_config(
        regime=ScalingRegime(gamma0=0.5, delta=0.5, n0=2.0, mu=1.0, d=100), t_max=30
    )
    rng = stream(config.seed, 0, 2**61)
    student = init_student(1, 100, config.init, teacher, rng, hermite(2))
    traj = run(teacher, student, config)
    assert traj.samples_used == 30 * config.regime.n_b


def test_run_recovers_he2_glm():
    teacher = orthonormal_teacher(1, 300, hermite(2))
    config = make_config(
        regime=ScalingRegime(gamma0=0.5, delta=0.5, n0=1.0, mu=1.0, d=300),
        t_max=400, engine="full",
    )
    rng = stream(config.seed, 0, 2**61)
    student = init_student(1, 300, config.init, teacher, rng, hermite(2))
    traj = run(teacher, student, config)
    assert not traj.censored
    assert traj.overlap_fro[-1] > 0.9
    assert traj.risk[-1] < 0.1


def test_reduced_and_full_engines_statistically_equivalent():
    # same law of the overlap trajectory, compared at a fixed step count
    d, t_obs, n_runs = 600, 20, 30
    teacher = orthonormal_teacher(1, d, hermite(2))
    finals = {"full": [], "reduced": []}
    for engine in ("full", "reduced"):
        for r in range(n_runs):
            config = make_config(
                regime=ScalingRegime(gamma0=1.0, delta=0.5, n0=1.0, mu=1.0, d=d),
                t_max=t_obs, seed=555, engine=engine,
            )
            config = TrainConfig(**{**config.__dict__, "run_index": r})
            rng = stream(999 + (engine == "full"), r, 2**61)
            student = init_student(1, d, "warm:0.3", teacher, rng, hermite(2))
            traj = run(teacher, student, config)
            finals[engine].append(traj.overlap_fro[-1])
    a, b = np.array(finals["full"]), np.array(finals["reduced"])
    se = math.sqrt(np.var(a, ddof=1) / n_runs + np.var(b, ddof=1) / n_runs)
    assert abs(a.mean() - b.mean()) < 4.0 * se + 1e-3


def test_reduced_engine_drift_matches_series():
    # per-step drift at m = 0.3 vs the dimension-free prediction, d large enough
    # that finite-d corrections sit well inside the Monte-Carlo band
    d, n_runs, m0 = 10**4, 400, 0.3
    teacher = orthonormal_teacher(1, d, hermite(2))
    regime = ScalingRegime(gamma0=1.0, delta=1.0, n0=1.0, mu=1.0, d=d)
    deltas = []
    for r in range(n_runs):
        config = make_config(regime=regime, t_max=1, seed=77, engine="reduced")
        config = TrainConfig(**{**config.__dict__, "run_index": r})
        rng = stream(77, r, 2**61)
        student = init_student(1, d, f"warm:{m0}", teacher, rng, hermite(2))
        traj = run(teacher, student, config)
        deltas.append(traj.overlap_fro[-1] - m0)
    deltas = np.array(deltas)
    predicted = regime.dtau * (4 * m0 - 4 * m0**3)  # population drift only
    se = np.std(deltas, ddof=1) / math.sqrt(n_runs)
    assert abs(deltas.mean() - predicted) < 4.0 * se


def test_correlation_loss_ignores_student_output():
    # the correlation-loss gradient must not involve the student's prediction
    rng = np.random.default_rng(8)
    d = 60
    teacher = orthonormal_teacher(1, d, hermite(3))
    Z, y = sample_batch(teacher, d, 64, rng)
    W = rng.standard_normal((1, d))
    W /= np.linalg.norm(W)
    g1 = batch_gradient(StudentModel(W, np.ones(1), hermite(3)), Z, y, "correlation")
    g2 = batch_gradient(StudentModel(W, 3.0 * np.ones(1), hermite(3)), Z, y, "correlation")
    np.testing.assert_allclose(3.0 * g1, g2)  # linear in a, no self-term


def test_adaptive_switches_and_decays():
    d = 300
    teacher = orthonormal_teacher(1, d, hermite(2))
    config = make_config(
        regime=ScalingRegime(gamma0=0.5, delta=0.5, n0=1.0, mu=1.0, d=d),
        t_max=500, adaptive=True, engine="reduced",
    )
    rng = stream(config.seed, 0, 2**61)
    student = init_student(1, d, "warm:0.3", teacher, rng, hermite(2))
    traj = run(teacher, student, config)
    assert traj.gamma[-1] < traj.gamma[0]  # square phase reached, lr decayed
    assert traj.risk[-1] < 0.1


def test_eta_crossing_recorded():
    d = 300
    teacher = orthonormal_teacher(1, d, hermite(2))
    config = make_config(
        regime=ScalingRegime(gamma0=0.5, delta=0.5, n0=1.0, mu=1.0, d=d),
        t_max=300, engine="reduced",
    )
    rng = stream(config.seed, 0, 2**61)
    student = init_student(1, d, "warm:0.3", teacher, rng, hermite(2))
    traj = run(teacher, student, config)
    assert traj.t_eta_plus is not None
    crossing = traj.t[traj.overlap_fro >= config.eta]
    assert traj.t_eta_plus <= crossing[0]
