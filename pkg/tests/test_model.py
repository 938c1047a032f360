import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ermfg.model import (
    CoupledReward,
    DimensionError,
    DistributionFlow,
    ParameterError,
    Policy,
    Space,
    Theta,
    TransitionKernel,
    d_flow,
    d_policy,
    d_tv,
    validate,
)

from conftest import stay_swap_game


# --- total variation -------------------------------------------------------

@pytest.mark.parametrize("a, b, expected", [
    ((0.3, 0.7), (0.3, 0.7), 0.0),
    ((1.0, 0.0), (0.0, 1.0), 1.0),
    ((0.5, 0.5), (1.0, 0.0), 0.5),
])
def test_d_tv_examples(a, b, expected):
    assert d_tv(a, b) == pytest.approx(expected, abs=1e-15)


def test_d_tv_length_mismatch():
    with pytest.raises(DimensionError):
        d_tv([0.5, 0.5], [1.0, 0.0, 0.0])


def test_d_flow_picks_largest_step():
    base = np.array([[0.5, 0.5]] * 3)
    other = base.copy()
    other[1] = [0.1, 0.9]  # TV 0.4
    other[2] = [0.8, 0.2]  # TV 0.3
    other[0] = [0.6, 0.4]  # TV 0.1
    assert d_flow(base, other) == pytest.approx(0.4)
    assert d_flow(base, base) == 0.0


def test_d_flow_single_terminal_difference():
    a = np.array([[1.0, 0.0], [0.5, 0.5], [0.5, 0.5]])
    b = a.copy()
    b[-1] = [0.7, 0.3]
    assert d_flow(DistributionFlow(a), DistributionFlow(b)) == pytest.approx(0.2)


def test_d_flow_horizon_mismatch():
    with pytest.raises(DimensionError):
        d_flow(np.full((3, 2), 0.5), np.full((4, 2), 0.5))


def test_d_policy_examples():
    pi = np.full((2, 2, 2), 0.5)
    assert d_policy(pi, pi) == 0.0
    det1 = np.zeros((2, 2, 2)); det1[..., 0] = 1
    det2 = det1.copy(); det2[1, 0] = [0, 1]
    assert d_policy(det1, det2) == 1.0
    other = pi.copy(); other[0, 1] = [0.9, 0.1]
    assert d_policy(pi, other) == pytest.approx(0.4)
    with pytest.raises(DimensionError):
        d_policy(pi, np.full((3, 2, 2), 0.5))


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6), st.data())
def test_d_tv_is_a_metric(n, data):
    def draw():
        x = data.draw(arrays(np.float64, n, elements=st.floats(0.0, 1.0)).filter(lambda v: v.sum() > 1e-3))
        return x / x.sum()
    a, b, c = draw(), draw(), draw()
    assert 0.0 <= d_tv(a, b) <= 1.0 + 1e-12
    assert d_tv(a, b) == pytest.approx(d_tv(b, a), abs=1e-15)
    assert d_tv(a, a) == 0.0
    assert d_tv(a, c) <= d_tv(a, b) + d_tv(b, c) + 1e-12


# --- types -----------------------------------------------------------------

def test_space_labels_default_to_indices():
    sp = Space(3)
    assert sp.all_labels() == ["0", "1", "2"]
    named = Space(2, ("a", "b"))
    assert named.label(1) == "b"


def test_theta_closed_forms():
    x = np.array([-2.0, 0.5, 3.0])
    assert np.allclose(Theta.identity()(x), x)
    assert np.allclose(Theta.square()(x), x**2)
    assert np.allclose(Theta.affine(1.0, -2.0)(x), 1 - 2 * x)
    assert np.allclose(Theta.clip(-1, 1)(x), [-1, 0.5, 1])
    assert Theta.square().lipschitz_constant(1.5) == 3.0
    assert Theta.affine(0, -2).lipschitz_constant(7) == 2.0
    assert Theta.square().max_abs(1.5) == pytest.approx(2.25)
    assert Theta.affine(1.0, 1.0).max_abs(2.0) == pytest.approx(3.0)


def test_theta_roundtrip_and_errors():
    for th in (Theta.identity(), Theta.square(), Theta.affine(0.5, 2), Theta.clip(-1, 2)):
        assert Theta.from_dict(th.to_dict()) == th
    assert Theta.from_dict("square") == Theta.square()
    with pytest.raises(ParameterError):
        Theta("cubic")
    with pytest.raises(ParameterError):
        Theta.clip(2, 1)
    with pytest.raises(ParameterError):
        Theta("custom")
    with pytest.raises(ParameterError):
        Theta.custom(np.tanh, 1.0).to_dict()


def test_coupled_reward_constants():
    L = np.zeros((2, 2, 2, 2)); L[1, 0, 0, 0] = -1.5
    rew = CoupledReward(L, (Theta.identity(), Theta.square()))
    assert rew.l_max == 1.5
    assert rew.k_theta == 3.0
    assert rew.r_max == pytest.approx(2.25)
    with pytest.raises(DimensionError):
        CoupledReward(L, (Theta.identity(),) * 3)


def test_policy_and_flow_are_read_only():
    pi = Policy.uniform(2, 3, 2)
    assert pi.horizon == 2 and np.allclose(pi[0], 0.5)
    with pytest.raises(ValueError):
        pi.probs[0, 0, 0] = 1.0
    flow = DistributionFlow(np.full((3, 2), 0.5))
    with pytest.raises(ValueError):
        flow.mus[0, 0] = 1.0


def test_policy_from_unnormalized():
    pi = Policy.from_unnormalized(np.ones((1, 2, 4)) * np.arange(1, 5))
    assert np.allclose(pi.probs.sum(-1), 1)
    assert pi.probs[0, 0, 3] == pytest.approx(0.4)


# --- validate --------------------------------------------------------------

def test_validate_accepts_well_formed_game():
    assert validate(stay_swap_game(2)) == []


def test_validate_names_bad_kernel_row():
    kernel = np.array(stay_swap_game().kernel.probs)
    kernel[1, 0] = [0.0, 0.98]
    spec = stay_swap_game()
    bad = type(spec)(spec.states, spec.actions, spec.horizon, TransitionKernel(kernel), spec.reward, spec.mu0)
    diags = validate(bad)
    assert len(diags) == 1
    assert "s=1" in diags[0] and "a=0" in diags[0] and "0.98" in diags[0]


def test_validate_flags_zero_reference_entry():
    spec = stay_swap_game(1)
    rho = np.full((2, 2, 2), 0.5)
    rho[0, 1] = [1.0, 0.0]
    diags = validate(spec, Policy(rho))
    assert len(diags) == 1 and "not strictly positive" in diags[0]


def test_validate_flags_reference_shape_and_mu0():
    spec = stay_swap_game(1, mu0=(0.7, 0.4))
    diags = validate(spec, Policy.uniform(3, 2, 2))
    assert any("mu0" in d for d in diags)
    assert any("shape" in d for d in diags)


def test_validate_flags_coupling_above_declared_bound():
    L = np.zeros((2, 2, 2, 2)); L[0, 0, 0, 0] = 2.0
    spec = stay_swap_game(1, L=L)
    spec = type(spec)(spec.states, spec.actions, 1, spec.kernel, CoupledReward(L, Theta.identity(), 1.0), spec.mu0)
    diags = validate(spec)
    assert len(diags) == 1 and "L_max" in diags[0]


def test_game_spec_rejects_shape_mismatch():
    with pytest.raises(DimensionError):
        stay_swap_game(1, L=np.zeros((2, 3, 2, 2)))
