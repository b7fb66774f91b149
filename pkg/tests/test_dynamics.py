import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpcflock.dynamics import (
    DivergenceError,
    GpcEnsemble,
    InteractionKernel,
    alignment,
    interaction_matrix,
    interaction_weight,
    mean_velocity,
    rhs,
    rk4_step,
    step_rk4,
)
from gpcflock.oracles import UniformCaseSetup, expected_velocity_normal
from gpcflock.polychaos import HERMITE, make_basis, triple_tensor
from gpcflock.rate import Deterministic, KernelSchedule, SeparableNormal, kernel_expanded

UNIFORM = InteractionKernel()
CS = InteractionKernel("cucker-smale", 0.3)


def random_ensemble(seed, N=6, d=2, M=4, scale=1.0):
    rng = np.random.default_rng(seed)
    return GpcEnsemble(rng.normal(size=(N, d, M + 1)) * scale, rng.normal(size=(N, d, M + 1)) * scale)


def normal_kernel(M, mu=2.0, sigma=0.5):
    b = make_basis(HERMITE, M)
    return kernel_expanded(SeparableNormal(mu, sigma), b, triple_tensor(b))


def test_interaction_weight_examples():
    assert interaction_weight(CS, [1.0, 2.0], [1.0, 2.0]) == 1.0
    assert interaction_weight(InteractionKernel("cucker-smale", 0.0), [0.0], [5.0]) == 1.0
    assert interaction_weight(InteractionKernel("cucker-smale", 1.0), [0.0, 0.0], [1.0, 0.0]) == 0.5


def test_interaction_matrix_symmetric_unit_diagonal():
    x = np.random.default_rng(0).normal(size=(7, 2))
    H = interaction_matrix(CS, x)
    np.testing.assert_array_equal(H, H.T)
    np.testing.assert_array_equal(np.diag(H), np.ones(7))
    assert interaction_matrix(UNIFORM, x) is None


def test_consensus_is_fixed_point():
    ens = GpcEnsemble.deterministic(np.zeros((4, 1)), np.full((4, 1), 3.0), 3)
    _, dv = rhs(ens, CS, normal_kernel(3))
    np.testing.assert_array_equal(dv, 0.0)


def test_two_agent_hand_evaluation():
    k = 1.7
    ens = GpcEnsemble.deterministic(np.zeros(2), np.array([0.0, 2.0]), 0)
    _, dv = rhs(ens, UNIFORM, k * np.eye(1))
    np.testing.assert_allclose(dv[:, 0, 0], [k, -k])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), uniform=st.booleans())
def test_momentum_antisymmetry(seed, uniform):
    ens = random_ensemble(seed)
    _, dv = rhs(ens, UNIFORM if uniform else CS, normal_kernel(4))
    assert np.max(np.abs(dv.sum(axis=0))) < 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_permutation_equivariance(seed):
    ens = random_ensemble(seed)
    perm = np.random.default_rng(seed + 1).permutation(ens.n_agents)
    K = normal_kernel(4)
    _, dv = rhs(ens, CS, K)
    _, dv_p = rhs(GpcEnsemble(ens.x[perm], ens.v[perm]), CS, K)
    np.testing.assert_allclose(dv_p, dv[perm], atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.floats(-10, 10))
def test_galilean_shift(seed, shift):
    ens = random_ensemble(seed)
    K = normal_kernel(4)
    v2 = ens.v.copy()
    v2[..., 0] += shift
    _, dv = rhs(ens, UNIFORM, K)
    _, dv2 = rhs(GpcEnsemble(ens.x, v2), UNIFORM, K)
    np.testing.assert_allclose(dv2, dv, atol=1e-11 * (1 + abs(shift)))
    # positions drift by shift * dt in mode 0 after one step
    dt = 1e-2
    a = step_rk4(ens, UNIFORM, K, dt)
    b = step_rk4(GpcEnsemble(ens.x, v2), UNIFORM, K, dt)
    np.testing.assert_allclose(b.x[..., 0] - a.x[..., 0], shift * dt, atol=1e-11 * (1 + abs(shift)))


def test_zero_velocity_is_stationary():
    ens = GpcEnsemble.deterministic(np.ones((3, 2)), np.zeros((3, 2)), 2)
    out = step_rk4(ens, CS, normal_kernel(2), 0.1)
    np.testing.assert_array_equal(out.x, ens.x)
    np.testing.assert_array_equal(out.v, ens.v)
    assert out.t == pytest.approx(0.1)


def relax(dt, T, v0, k=1.0):
    ens = GpcEnsemble.deterministic(np.zeros_like(v0), v0, 0)
    for _ in range(int(round(T / dt))):
        ens = step_rk4(ens, UNIFORM, k * np.eye(1), dt)
    return ens


def test_deterministic_relaxation_matches_closed_form():
    v0 = np.random.default_rng(2).normal(2.0, 1.0, 10)
    ens = relax(1e-3, 1.0, v0)
    exact = v0.mean() + (v0 - v0.mean()) * math.exp(-1.0)
    assert np.max(np.abs(ens.v[:, 0, 0] - exact)) <= 1e-8


def test_rk4_observed_order():
    v0 = np.random.default_rng(2).normal(2.0, 1.0, 10)
    exact = v0.mean() + (v0 - v0.mean()) * math.exp(-1.0)
    errs = [np.max(np.abs(relax(dt, 1.0, v0).v[:, 0, 0] - exact)) for dt in (4e-3, 2e-3, 1e-3)]
    slopes = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(slopes) >= 3.9


def test_normal_rate_mode_zero_matches_oracle():
    v0 = np.random.default_rng(4).normal(2.0, 1.0, 10)
    M = 10
    b = make_basis(HERMITE, M)
    K = KernelSchedule(SeparableNormal(2.0, 0.5), b)
    ens = GpcEnsemble.deterministic(np.zeros_like(v0), v0, M)
    for _ in range(1000):
        ens = step_rk4(ens, UNIFORM, K, 1e-3)
    setup = UniformCaseSetup(v0, SeparableNormal(2.0, 0.5))
    exact = np.array([expected_velocity_normal(setup, i, 1.0) for i in range(10)])
    assert np.max(np.abs(ens.v[:, 0, 0] - exact)) < 1e-6


def test_mean_velocity_examples():
    ens = GpcEnsemble.deterministic(np.zeros(3), np.full(3, 4.0), 2)
    np.testing.assert_array_equal(mean_velocity(ens), [[4.0, 0.0, 0.0]])
    ens = GpcEnsemble.deterministic(np.zeros(2), np.array([1.0, 2.0]), 2)
    np.testing.assert_array_equal(mean_velocity(ens), [[1.5, 0.0, 0.0]])


@pytest.mark.parametrize("kernel", [UNIFORM, CS])
def test_mean_velocity_conserved_over_100_steps(kernel):
    ens = random_ensemble(9, N=8, d=2, M=5)
    K = normal_kernel(5)
    V0 = mean_velocity(ens)
    for _ in range(100):
        ens = step_rk4(ens, kernel, K, 1e-2)
    assert np.max(np.abs(mean_velocity(ens) - V0)) <= 1e-12


def test_divergence_reports_time():
    ens = GpcEnsemble.deterministic(np.zeros(2), np.array([0.0, 1e11]), 0)
    with pytest.raises(DivergenceError) as info:
        for _ in range(100):
            ens = step_rk4(ens, UNIFORM, -50.0 * np.eye(1), 0.05)
    assert info.value.t > 0
    assert info.value.last_state is not None


def test_rk4_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        rk4_step(random_ensemble(0), lambda s, K: rhs(s, UNIFORM, K), np.eye(5), 0.0)


def test_kernel_sampled_at_stage_times():
    seen = []

    def kernel_at(t):
        seen.append(t)
        return np.eye(1)

    ens = GpcEnsemble.deterministic(np.zeros(2), np.array([0.0, 1.0]), 0, t=1.0)
    step_rk4(ens, UNIFORM, kernel_at, 0.2)
    assert sorted(set(seen)) == pytest.approx([1.0, 1.1, 1.2])


def test_alignment_uniform_equals_general_with_unit_h():
    ens = random_ensemble(5)
    K = normal_kernel(4)
    np.testing.assert_allclose(alignment(ens.v, None, K), alignment(ens.v, np.ones((6, 6)), K), atol=1e-13)


def test_deterministic_rate_gpc_coefficients_stay_zero():
    b = make_basis(HERMITE, 3)
    K = KernelSchedule(Deterministic(1.5), b)
    ens = GpcEnsemble.deterministic(np.zeros(4), np.arange(4.0), 3)
    for _ in range(10):
        ens = step_rk4(ens, UNIFORM, K, 0.01)
    np.testing.assert_array_equal(ens.v[..., 1:], 0.0)
