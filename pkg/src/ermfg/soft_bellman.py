"""Finite-horizon MDP solvers for a fixed mean-field flow.

The regularized objective penalizes ``(1/beta) * log(pi/rho)`` at every step,
which turns the Bellman max into a rho-weighted log-sum-exp and the optimal
policy into a Boltzmann distribution tilted from ``rho``. The hard-max solver
is kept alongside for the unregularized game.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DimensionError, DistributionFlow, GameSpec, ParameterError, Policy
from .propagation import RewardTable, induced_reward, state_marginals

TIE_TOL = 1e-12


@dataclass(frozen=True)
class SoftValue:
    v: np.ndarray


@dataclass(frozen=True)
class SoftQ:
    """Regularized action values ``q[t, s, a]`` with their soft state values ``v[t, s]``."""

    q: np.ndarray
    beta: float
    rho: Policy
    v: np.ndarray

    @property
    def value(self) -> SoftValue:
        return SoftValue(self.v)


def _check_reference(rho: Policy, beta: float, shape) -> None:
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    if rho.probs.shape != tuple(shape):
        raise DimensionError(f"reference policy shape {rho.probs.shape} != {tuple(shape)}")
    if np.any(rho.probs <= 0):
        raise ParameterError("reference policy must be strictly positive")


def soft_value(q: np.ndarray, log_rho: np.ndarray, beta: float) -> np.ndarray:
    """``(1/beta) log sum_a rho(a) exp(beta q(a))`` over the last axis, max-shifted."""
    z = beta * q + log_rho
    m = z.max(axis=-1, keepdims=True)
    return (m[..., 0] + np.log(np.exp(z - m).sum(axis=-1))) / beta


def soft_q_table(kernel: np.ndarray, rewards: np.ndarray, rho: Policy, beta: float) -> SoftQ:
    """Soft backward recursion for an arbitrary reward table ``rewards[t, s, a]``."""
    _check_reference(rho, beta, rewards.shape)
    log_rho = np.log(rho.probs)
    H = rewards.shape[0] - 1
    q = np.empty_like(rewards, dtype=np.float64)
    v = np.empty(rewards.shape[:2])
    q[H] = rewards[H]
    v[H] = soft_value(q[H], log_rho[H], beta)
    for t in range(H - 1, -1, -1):
        q[t] = rewards[t] + kernel @ v[t + 1]
        v[t] = soft_value(q[t], log_rho[t], beta)
    return SoftQ(q, float(beta), rho, v)


def soft_q(spec: GameSpec, mu: DistributionFlow, rho: Policy, beta: float) -> SoftQ:
    """Regularized action values of the MDP induced by ``mu``.

    ``Q_H = R_H`` and ``Q_t = R_t + sum_{s'} T(s'|s, a) V_{t+1}(s')`` where
    ``V_{t+1}`` is the soft value at the successor state under ``rho_{t+1}``.
    """
    return soft_q_table(spec.kernel.probs, induced_reward(spec, mu).r, rho, beta)


def soft_policy(q: SoftQ) -> Policy:
    """Boltzmann policy ``rho * exp(beta * (Q - V))``, normalized per ``(t, s)``."""
    z = q.beta * q.q + np.log(q.rho.probs)
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return Policy(w / w.sum(axis=-1, keepdims=True))


def hard_q_table(kernel: np.ndarray, rewards: np.ndarray) -> np.ndarray:
    H = rewards.shape[0] - 1
    q = np.empty_like(rewards, dtype=np.float64)
    q[H] = rewards[H]
    for t in range(H - 1, -1, -1):
        q[t] = rewards[t] + kernel @ q[t + 1].max(axis=-1)
    return q


def greedy_policy(q: np.ndarray, tie_tol: float = TIE_TOL) -> Policy:
    """Uniform distribution over the argmax set at each ``(t, s)``."""
    best = q.max(axis=-1, keepdims=True)
    mask = (q >= best - tie_tol).astype(np.float64)
    return Policy(mask / mask.sum(axis=-1, keepdims=True))


def hard_opt(spec: GameSpec, mu: DistributionFlow) -> Policy:
    """Optimal policy of the unregularized MDP induced by ``mu`` (ties split evenly)."""
    return greedy_policy(hard_q_table(spec.kernel.probs, induced_reward(spec, mu).r))


def evaluate_table(
    kernel: np.ndarray,
    mu0: np.ndarray,
    pi: Policy,
    rewards: np.ndarray,
    rho: Policy | None = None,
    beta: float | None = None,
) -> float:
    """Expected cumulative reward of ``pi`` under a reward table, exactly.

    With ``rho`` and ``beta`` the per-step KL penalty ``(1/beta) log(pi/rho)`` is
    subtracted; ``0 log 0`` is taken as 0.
    """
    if pi.probs.shape != rewards.shape:
        raise DimensionError(f"policy shape {pi.probs.shape} != reward shape {rewards.shape}")
    p = state_marginals(kernel, mu0, pi)
    step = rewards
    if rho is not None:
        _check_reference(rho, beta, rewards.shape)
        pr = pi.probs
        with np.errstate(divide="ignore", invalid="ignore"):
            log_ratio = np.where(pr > 0, np.log(pr) - np.log(rho.probs), 0.0)
        step = rewards - log_ratio / beta
    return float(np.einsum("ts,tsa,tsa->", p, pi.probs, step))


def evaluate_kl(spec: GameSpec, pi: Policy, mu: DistributionFlow, rho: Policy, beta: float) -> float:
    """Regularized objective of ``pi`` against the fixed flow ``mu``."""
    return evaluate_table(spec.kernel.probs, spec.mu0, pi, induced_reward(spec, mu).r, rho, beta)


def evaluate_plain(spec: GameSpec, pi: Policy, mu: DistributionFlow) -> float:
    """Unregularized expected cumulative reward of ``pi`` against ``mu``."""
    return evaluate_table(spec.kernel.probs, spec.mu0, pi, induced_reward(spec, mu).r)


def best_response_value(spec: GameSpec, mu: DistributionFlow, rho: Policy, beta: float) -> float:
    """Optimal regularized value ``sum_s mu0(s) V_0(s)``."""
    return float(spec.mu0 @ soft_q(spec, mu, rho, beta).v[0])


__all__ = [
    "RewardTable",
    "SoftQ",
    "SoftValue",
    "best_response_value",
    "evaluate_kl",
    "evaluate_plain",
    "evaluate_table",
    "greedy_policy",
    "hard_opt",
    "hard_q_table",
    "soft_policy",
    "soft_q",
    "soft_q_table",
    "soft_value",
]
