import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ermfg.equilibrium import k_prop
from ermfg.environments import default_resource_allocation
from ermfg.model import DimensionError, DistributionFlow, Policy, Theta, d_flow, d_policy, d_tv
from ermfg.propagation import coupling, induced_kernel, induced_reward, propagate

from conftest import STAY_SWAP_KERNEL, make_game, random_game, random_policy, stay_swap_game


def test_deterministic_policy_selects_kernel_rows():
    rng = np.random.default_rng(0)
    kernel = rng.dirichlet(np.ones(3), size=(3, 2))
    pi_t = np.zeros((3, 2)); pi_t[:, 1] = 1.0
    assert np.allclose(induced_kernel(kernel, pi_t).matrix, kernel[:, 1, :])


def test_uniform_stay_swap_mixes_evenly():
    m = induced_kernel(STAY_SWAP_KERNEL, np.full((2, 2), 0.5)).matrix
    assert np.allclose(m, 0.5)


def test_biased_stay_swap_kernel():
    m = induced_kernel(STAY_SWAP_KERNEL, np.array([[0.25, 0.75], [0.25, 0.75]])).matrix
    assert np.allclose(m, [[0.25, 0.75], [0.75, 0.25]])


def test_induced_kernel_shape_mismatch():
    with pytest.raises(DimensionError):
        induced_kernel(STAY_SWAP_KERNEL, np.full((3, 2), 0.5))


def test_identity_kernel_keeps_initial_distribution():
    rng = np.random.default_rng(1)
    kernel = np.repeat(np.eye(3)[:, None, :], 2, axis=1)
    spec = make_game(kernel, np.zeros((4, 3, 2, 3)), [0.2, 0.5, 0.3])
    flow = propagate(spec, random_policy(rng, 3, 3, 2))
    assert np.allclose(flow.mus, [0.2, 0.5, 0.3])


def test_always_swap_alternates():
    spec = stay_swap_game(2)
    pi = np.zeros((3, 2, 2)); pi[..., 1] = 1.0
    assert np.allclose(propagate(spec, Policy(pi)).mus, [[1, 0], [0, 1], [1, 0]])


def test_one_step_hand_product():
    spec = stay_swap_game(1)
    pi = Policy(np.broadcast_to([0.25, 0.75], (2, 2, 2)).copy())
    assert np.allclose(propagate(spec, pi)[1], [0.25, 0.75])


def test_propagate_rejects_wrong_horizon():
    with pytest.raises(DimensionError):
        propagate(stay_swap_game(2), Policy.uniform(3, 2, 2))


def test_constant_coupling_gives_constant_reward():
    L = np.full((2, 2, 2, 2), 0.7)
    spec = stay_swap_game(1, L=L)
    r = induced_reward(spec, DistributionFlow(np.array([[0.1, 0.9], [0.6, 0.4]]))).r
    assert np.allclose(r, 0.7)


def test_congestion_reward_at_crowded_bonus_node():
    spec, _ = default_resource_allocation()
    H = spec.horizon
    mus = np.full((H + 1, 5), 0.2)
    mus[H] = np.eye(5)[2]  # everyone on node 3
    r = induced_reward(spec, DistributionFlow(mus)).r
    assert r[H, 2, 0] == pytest.approx(0.25)
    assert np.allclose(r[:H], 0.0)


def test_indicator_coupling_under_uniform_distribution():
    S = 4
    L = np.broadcast_to(np.eye(S)[:, None, :], (2, S, 2, S)).copy()
    kernel = np.repeat(np.eye(S)[:, None, :], 2, axis=1)
    spec = make_game(kernel, L, np.full(S, 0.25))
    r = induced_reward(spec, DistributionFlow(np.full((2, S), 0.25))).r
    assert np.allclose(r, 0.25)


def test_coupling_matches_explicit_sum():
    rng = np.random.default_rng(3)
    spec = random_game(rng, 3, 2, 2)
    mus = rng.dirichlet(np.ones(3), size=3)
    x = coupling(spec, mus)
    L = spec.reward.L
    expected = np.array([[[sum(L[t, s, a, k] * mus[t, k] for k in range(3)) for a in range(2)]
                          for s in range(3)] for t in range(3)])
    assert np.allclose(x, expected)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.integers(1, 3), st.integers(1, 4))
def test_flow_rows_stay_on_simplex(seed, S, A, H):
    rng = np.random.default_rng(seed)
    spec = random_game(rng, S, A, H)
    mus = propagate(spec, random_policy(rng, H, S, A)).mus
    assert np.all(mus >= 0)
    assert np.allclose(mus.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.integers(1, 3), st.integers(1, 4))
def test_propagation_lipschitz_in_policy(seed, S, A, H):
    rng = np.random.default_rng(seed)
    spec = random_game(rng, S, A, H)
    pi, pi2 = random_policy(rng, H, S, A), random_policy(rng, H, S, A)
    f, f2 = propagate(spec, pi), propagate(spec, pi2)
    dp = d_policy(pi, pi2)
    assert d_flow(f, f2) <= k_prop(S, H) * dp + 1e-12
    for t in range(H):
        step = S * (dp + d_tv(f[t], f2[t]))
        assert d_tv(f[t + 1], f2[t + 1]) <= step + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["identity", "square", "affine", "clip"]))
def test_reward_lipschitz_in_distribution(seed, kind):
    rng = np.random.default_rng(seed)
    theta = {"identity": Theta.identity(), "square": Theta.square(),
             "affine": Theta.affine(0.3, -2.0), "clip": Theta.clip(-0.2, 0.4)}[kind]
    spec = random_game(rng, 3, 2, 2, theta)
    nu, nu2 = rng.dirichlet(np.ones(3), size=3), rng.dirichlet(np.ones(3), size=3)
    r = induced_reward(spec, DistributionFlow(nu)).r
    r2 = induced_reward(spec, DistributionFlow(nu2)).r
    bound = 2 * spec.k_theta * spec.l_max
    for t in range(3):
        assert np.max(np.abs(r[t] - r2[t])) <= bound * d_tv(nu[t], nu2[t]) + 1e-12
