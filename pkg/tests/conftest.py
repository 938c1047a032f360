"""Shared fixtures and small game builders for the test suite."""

from __future__ import annotations

import itertools
import math
import sys
from pathlib import Path

import numpy as np
import pytest

from ermfg.config import load_config
from ermfg.model import CoupledReward, GameSpec, Policy, Space, Theta, TransitionKernel

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "ermfg" / "configs"

STAY_SWAP_KERNEL = np.array([
    [[1.0, 0.0], [0.0, 1.0]],  # state 0: stay, swap
    [[0.0, 1.0], [1.0, 0.0]],  # state 1: stay, swap
])


def make_game(kernel, L, mu0, theta=None, l_max=None) -> GameSpec:
    kernel = np.asarray(kernel, dtype=float)
    L = np.asarray(L, dtype=float)
    S, A, _ = kernel.shape
    return GameSpec(
        states=Space(S),
        actions=Space(A),
        horizon=L.shape[0] - 1,
        kernel=TransitionKernel(kernel),
        reward=CoupledReward(L, theta or Theta.identity(), l_max),
        mu0=np.asarray(mu0, dtype=float),
    )


def stay_swap_game(horizon=1, mu0=(1.0, 0.0), L=None) -> GameSpec:
    if L is None:
        L = np.zeros((horizon + 1, 2, 2, 2))
    return make_game(STAY_SWAP_KERNEL, L, mu0)


def random_game(rng, S, A, H, theta=None) -> GameSpec:
    kernel = rng.dirichlet(np.ones(S), size=(S, A))
    L = rng.uniform(-1, 1, size=(H + 1, S, A, S))
    mu0 = rng.dirichlet(np.ones(S))
    return make_game(kernel, L, mu0, theta)


def random_policy(rng, H, S, A, alpha=1.0) -> Policy:
    return Policy(rng.dirichlet(alpha * np.ones(A), size=(H + 1, S)))


def constant_reward_game(rng, S=3, A=2, H=3) -> GameSpec:
    """Coupling constant in s', so the induced reward ignores the population."""
    kernel = rng.dirichlet(np.ones(S), size=(S, A))
    c = rng.uniform(-1, 1, size=(H + 1, S, A, 1))
    L = np.broadcast_to(c, (H + 1, S, A, S)).copy()
    return make_game(kernel, L, rng.dirichlet(np.ones(S)))


def enumerate_paths_value(kernel, mu0, pi, rewards, rho=None, beta=None) -> float:
    """Expected return by summing over every state-action path."""
    H1, S, A = rewards.shape
    total = 0.0
    for path in itertools.product(range(S), range(A), repeat=H1):
        states, actions = path[0::2], path[1::2]
        p = mu0[states[0]]
        ret = 0.0
        for t in range(H1):
            s, a = states[t], actions[t]
            if t > 0:
                p *= kernel[states[t - 1], actions[t - 1], s]
            p *= pi[t, s, a]
            if p == 0.0:
                break
            ret += rewards[t, s, a]
            if rho is not None:
                ret -= math.log(pi[t, s, a] / rho[t, s, a]) / beta
        else:
            total += p * ret
    return total


@pytest.fixture(scope="session")
def bundled():
    """The three bundled resource allocation configurations, loaded once."""
    return {
        "beta3": load_config(CONFIG_DIR / "resource_allocation_beta3.yaml"),
        "beta0.1": load_config(CONFIG_DIR / "resource_allocation_beta0.1.yaml"),
        "unregularized": load_config(CONFIG_DIR / "resource_allocation_unregularized.yaml"),
    }


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
