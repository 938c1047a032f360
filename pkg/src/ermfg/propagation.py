"""Policy-induced kernels, forward propagation of the mean field, and induced rewards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DimensionError, DistributionFlow, GameSpec, Policy, TransitionKernel


@dataclass(frozen=True)
class InducedKernel:
    """Row-stochastic ``(S, S)`` matrix of one-step state transitions under a policy."""

    matrix: np.ndarray


@dataclass(frozen=True)
class RewardTable:
    """Reward ``r[t, s, a]`` of the MDP faced by a representative agent."""

    r: np.ndarray


def _kernel_array(kernel) -> np.ndarray:
    return kernel.probs if isinstance(kernel, TransitionKernel) else np.asarray(kernel, dtype=np.float64)


def induced_kernel(kernel, pi_t) -> InducedKernel:
    """``P[s, s'] = sum_a T(s'|s, a) pi_t(a|s)``."""
    T = _kernel_array(kernel)
    pi_t = np.asarray(pi_t, dtype=np.float64)
    if pi_t.shape != T.shape[:2]:
        raise DimensionError(f"policy slice shape {pi_t.shape} != {T.shape[:2]}")
    return InducedKernel(np.einsum("sax,sa->sx", T, pi_t))


def _check_policy(spec: GameSpec, pi: Policy) -> None:
    if pi.probs.shape != spec.policy_shape():
        raise DimensionError(f"policy shape {pi.probs.shape} != {spec.policy_shape()}")


def state_marginals(kernel, mu0, pi: Policy) -> np.ndarray:
    """Forward pass ``mu_{t+1} = mu_t P_t`` for ``t = 0..H-1``; returns ``(H+1, S)``."""
    probs = pi.probs
    out = np.empty((probs.shape[0], probs.shape[1]))
    out[0] = mu0
    for t in range(probs.shape[0] - 1):
        out[t + 1] = out[t] @ induced_kernel(kernel, probs[t]).matrix
    return out


def propagate(spec: GameSpec, pi: Policy) -> DistributionFlow:
    """Mean-field flow generated by the whole population following ``pi`` from ``spec.mu0``."""
    _check_policy(spec, pi)
    return DistributionFlow(state_marginals(spec.kernel, spec.mu0, pi))


def coupling(spec: GameSpec, mus) -> np.ndarray:
    """Mean coupling ``L_t(s, a, mu_t) = sum_{s'} L[t, s, a, s'] mu_t(s')`` as ``(H+1, S, A)``."""
    mus = mus.mus if isinstance(mus, DistributionFlow) else np.asarray(mus, dtype=np.float64)
    if mus.shape != (spec.horizon + 1, spec.n_states):
        raise DimensionError(f"flow shape {mus.shape} != {(spec.horizon + 1, spec.n_states)}")
    return np.einsum("tsax,tx->tsa", spec.reward.L, mus)


def apply_theta(spec: GameSpec, x: np.ndarray) -> np.ndarray:
    """Apply the per-step transform to an array whose leading axis is time."""
    return np.stack([spec.reward.theta[t](x[t]) for t in range(x.shape[0])])


def induced_reward(spec: GameSpec, mu: DistributionFlow) -> RewardTable:
    """Reward table ``R_{mu,t}(s, a) = theta_t(L_t(s, a, mu_t))``."""
    return RewardTable(apply_theta(spec, coupling(spec, mu)))
