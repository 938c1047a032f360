"""N-agent Monte Carlo: empirical flows, their convergence to the mean field, and unilateral deviation.

Every rollout draws from its own child stream of ``SeedSequence(seed)``, indexed
by the rollout number, so results do not depend on how rollouts are scheduled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import DistributionFlow, GameSpec, ParameterError, Policy
from .propagation import apply_theta, induced_kernel, propagate
from .soft_bellman import evaluate_table, soft_policy, soft_q_table

logger = logging.getLogger(__name__)

DEFAULT_MC_REPS = 2000
NOISE_FLOOR_FACTOR = 10.0


@dataclass(frozen=True)
class PopulationRollout:
    states: np.ndarray  # (H+1, N) integer
    empirical_flow: DistributionFlow
    seed: int
    counts: np.ndarray  # (H+1, S) integer

    @property
    def n_agents(self) -> int:
        return self.states.shape[1]


@dataclass
class ConvergenceTable:
    rows: list[dict] = field(default_factory=list)
    slope_per_t: dict[int, float] = field(default_factory=dict)
    slope: float = float("nan")

    def column(self, name: str, t: int | None = None) -> np.ndarray:
        return np.array([r[name] for r in self.rows if t is None or r["t"] == t])


@dataclass(frozen=True)
class DeviationResult:
    n_agents: int
    monte_carlo_samples: int
    j_equilibrium: float
    j_best_response: float
    gain: float
    std_err: float
    best_response: Policy = field(repr=False, compare=False, default=None)


@dataclass
class DeviationSweep:
    results: list[DeviationResult]
    slope: float | None
    used_n: list[int]
    diagnostic: str | None = None

    def rows(self) -> list[tuple[int, float, float]]:
        return [(r.n_agents, r.gain, r.std_err) for r in self.results]


def rollout_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _cumulative_kernels(spec: GameSpec, pi: Policy) -> np.ndarray:
    cum = np.stack([np.cumsum(induced_kernel(spec.kernel, pi.probs[t]).matrix, axis=1)
                    for t in range(spec.horizon)]) if spec.horizon else np.zeros((0, spec.n_states, spec.n_states))
    return cum


def _sample_categorical(cum_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # rows may fall a few ulps short of 1; clamp to the last category
    idx = (u[:, None] >= cum_rows).sum(axis=1)
    return np.minimum(idx, cum_rows.shape[1] - 1)


def _rollout_states(
    spec: GameSpec,
    cum: np.ndarray,
    n_agents: int,
    rng: np.random.Generator,
    dev_cum: np.ndarray | None = None,
) -> np.ndarray:
    H = spec.horizon
    cum0 = np.cumsum(spec.mu0)
    states = np.empty((H + 1, n_agents), dtype=np.int64)
    states[0] = _sample_categorical(np.broadcast_to(cum0, (n_agents, cum0.size)), rng.random(n_agents))
    for t in range(H):
        rows = cum[t][states[t]]
        if dev_cum is not None:
            rows = rows.copy()
            rows[0] = dev_cum[t][states[t, 0]]
        states[t + 1] = _sample_categorical(rows, rng.random(n_agents))
    return states


def _counts(states: np.ndarray, n_states: int) -> np.ndarray:
    H1 = states.shape[0]
    counts = np.zeros((H1, n_states), dtype=np.int64)
    for t in range(H1):
        counts[t] = np.bincount(states[t], minlength=n_states)
    return counts


def simulate_population(
    spec: GameSpec,
    pi: Policy,
    n_agents: int,
    seed: int,
    deviator: Policy | None = None,
    index: int = 0,
) -> PopulationRollout:
    """Sample ``n_agents`` independent trajectories under ``pi``.

    With ``deviator`` set, agent 0 follows that policy instead while the others
    keep ``pi``. ``index`` selects the rollout stream within ``seed``.
    """
    if n_agents < 1:
        raise ParameterError("n_agents must be >= 1")
    cum = _cumulative_kernels(spec, pi)
    dev_cum = _cumulative_kernels(spec, deviator) if deviator is not None else None
    states = _rollout_states(spec, cum, n_agents, rollout_rng(seed, index), dev_cum)
    counts = _counts(states, spec.n_states)
    return PopulationRollout(states, DistributionFlow(counts / n_agents), seed, counts)


def _batch_counts(spec, cum, n_agents, mc_reps, seed, dev_cum=None, offset=0) -> np.ndarray:
    out = np.empty((mc_reps, spec.horizon + 1, spec.n_states), dtype=np.int64)
    for m in range(mc_reps):
        states = _rollout_states(spec, cum, n_agents, rollout_rng(seed, offset + m), dev_cum)
        out[m] = _counts(states, spec.n_states)
    return out


def loglog_slope(n: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log n``."""
    x = np.log(np.asarray(n, dtype=np.float64))
    ly = np.log(np.asarray(y, dtype=np.float64))
    return float(np.polyfit(x, ly, 1)[0])


def _pooled_slope(n_list: Sequence[int], per_t: dict[int, np.ndarray]) -> float:
    # common slope with a separate intercept for each t
    x = np.log(np.asarray(n_list, dtype=np.float64))
    xc = x - x.mean()
    num = den = 0.0
    for y in per_t.values():
        ly = np.log(y)
        num += float(xc @ (ly - ly.mean()))
        den += float(xc @ xc)
    return num / den if den > 0 else float("nan")


def convergence_sweep(
    spec: GameSpec,
    pi: Policy,
    n_list: Sequence[int],
    mc_reps: int,
    seed: int,
    deviator: Policy | None = None,
) -> ConvergenceTable:
    """Monte Carlo estimates of ``E d_TV(mu^N_t, mu_t)`` and ``E ||mu^N_t - mu_t||_2^2``.

    Each row also carries the exact second moment ``(1 - ||mu_t||^2) / N`` of an
    i.i.d. population for comparison. Time steps where the mean TV vanishes at
    some N (a deterministic marginal) are left out of the slope fits.
    """
    if not n_list:
        raise ParameterError("n_list must be nonempty")
    if mc_reps < 2:
        raise ParameterError("mc_reps must be >= 2")
    mu = propagate(spec, pi).mus
    cum = _cumulative_kernels(spec, pi)
    dev_cum = _cumulative_kernels(spec, deviator) if deviator is not None else None
    table = ConvergenceTable()
    tv_by_t: dict[int, list[float]] = {t: [] for t in range(spec.horizon + 1)}
    for j, n in enumerate(n_list):
        counts = _batch_counts(spec, cum, n, mc_reps, seed, dev_cum, offset=j * mc_reps)
        diff = counts / n - mu[None]
        tv = 0.5 * np.abs(diff).sum(axis=-1)  # (reps, H+1)
        sq = (diff**2).sum(axis=-1)
        for t in range(spec.horizon + 1):
            table.rows.append({
                "N": int(n),
                "t": t,
                "mean_tv": float(tv[:, t].mean()),
                "std_err": float(tv[:, t].std(ddof=1) / math.sqrt(mc_reps)),
                "mean_sq_l2": float(sq[:, t].mean()),
                "sq_l2_std_err": float(sq[:, t].std(ddof=1) / math.sqrt(mc_reps)),
                "expected_sq_l2": float((1.0 - mu[t] @ mu[t]) / n),
            })
            tv_by_t[t].append(float(tv[:, t].mean()))
    fit = {t: np.array(v) for t, v in tv_by_t.items() if np.all(np.array(v) > 0)}
    if len(n_list) >= 2:
        table.slope_per_t = {t: loglog_slope(n_list, v) for t, v in fit.items()}
        table.slope = _pooled_slope(n_list, fit) if fit else float("nan")
    return table


def deviation_gain(
    spec: GameSpec,
    rho: Policy,
    beta: float,
    pi_star: Policy,
    n_agents: int,
    mc_reps: int = DEFAULT_MC_REPS,
    seed: int = 0,
    stream_offset: int = 0,
) -> DeviationResult:
    """Gain of one agent best-responding while ``n_agents - 1`` others play ``pi_star``.

    The co-agents' empirical flows are sampled ``mc_reps`` times; the deviator's
    expected reward table averages ``theta(L(s, a, mu_hat))`` over them, with
    ``mu_hat = ((N-1)/N) mu^{N-1} + (1/N) delta_s`` counting the deviator at its
    own state. Because co-agent dynamics do not depend on the deviator, the
    deviator faces an ordinary MDP with that table. ``std_err`` comes from the
    per-rollout gains of the fixed best response, whose mean is the gain.
    """
    if n_agents < 2:
        raise ParameterError("n_agents must be >= 2")
    N = n_agents
    H, S = spec.horizon, spec.n_states
    cum = _cumulative_kernels(spec, pi_star)
    counts = _batch_counts(spec, cum, N - 1, mc_reps, seed, offset=stream_offset)
    # coupling with the co-agents: sum_{s'} L[t,s,a,s'] * count(s') / N
    others = np.einsum("tsax,mtx->mtsa", spec.reward.L, counts / N)
    self_term = np.einsum("tsas->tsa", spec.reward.L) / N
    x = others + self_term[None]
    per_rollout = np.stack([apply_theta(spec, x[m]) for m in range(mc_reps)])  # (M, H+1, S, A)
    table = per_rollout.mean(axis=0)

    kernel = spec.kernel.probs
    q = soft_q_table(kernel, table, rho, beta)
    pi_dev = soft_policy(q)
    j_best = float(spec.mu0 @ q.v[0])
    j_eq = evaluate_table(kernel, spec.mu0, pi_star, table, rho, beta)

    gains = np.array([
        evaluate_table(kernel, spec.mu0, pi_dev, per_rollout[m], rho, beta)
        - evaluate_table(kernel, spec.mu0, pi_star, per_rollout[m], rho, beta)
        for m in range(mc_reps)
    ])
    std_err = float(gains.std(ddof=1) / math.sqrt(mc_reps)) if mc_reps > 1 else float("nan")
    return DeviationResult(N, mc_reps, j_eq, j_best, j_best - j_eq, std_err, pi_dev)


def deviation_sweep(
    spec: GameSpec,
    rho: Policy,
    beta: float,
    pi_star: Policy,
    n_list: Sequence[int],
    mc_reps: int = DEFAULT_MC_REPS,
    seed: int = 0,
    solver_tol: float = 1e-8,
) -> DeviationSweep:
    """Deviation gains over ``n_list`` and the log-log slope of gain against N.

    Entries with gain below ``10 * solver_tol`` are treated as noise and left
    out of the fit; if fewer than two remain the slope is ``None``.
    """
    results = [
        deviation_gain(spec, rho, beta, pi_star, n, mc_reps, seed, stream_offset=j * mc_reps)
        for j, n in enumerate(n_list)
    ]
    floor = NOISE_FLOOR_FACTOR * solver_tol
    used = [r for r in results if r.gain > floor]
    if len(used) < 2:
        msg = (f"only {len(used)} of {len(results)} gains exceed the noise floor {floor:.1e}; "
               "slope undefined")
        logger.info(msg)
        return DeviationSweep(results, None, [r.n_agents for r in used], msg)
    slope = loglog_slope([r.n_agents for r in used], [r.gain for r in used])
    return DeviationSweep(results, slope, [r.n_agents for r in used])
