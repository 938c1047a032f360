"""Fixed-point solvers for (regularized) mean-field equilibria and their diagnostics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import DistributionFlow, GameSpec, ParameterError, Policy, d_flow
from .propagation import induced_reward, propagate
from .soft_bellman import (
    best_response_value,
    evaluate_kl,
    evaluate_plain,
    hard_opt,
    hard_q_table,
    soft_policy,
    soft_q,
)

logger = logging.getLogger(__name__)

# thresholds used to call a non-converging run a period-2 cycle
CYCLE_RETURN_TOL = 1e-6
CYCLE_JUMP_MIN = 0.1


@dataclass
class EquilibriumResult:
    pi_star: Policy
    mu_star: DistributionFlow
    iterations: int
    residuals: list[float]
    converged: bool
    exploitability: float = float("nan")
    empirical_contraction: float | None = None
    flows: list[DistributionFlow] = field(default_factory=list, repr=False)
    cycle_period: int | None = None

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual": self.residuals[-1] if self.residuals else None,
            "exploitability": self.exploitability,
            "empirical_contraction": self.empirical_contraction,
            "cycle_period": self.cycle_period,
        }


@dataclass(frozen=True)
class LipschitzReport:
    k_prop: int
    k_q_kl: float
    log_k_q_kl: float
    k_q_overflow: bool
    k_opt_kl: float
    beta: float
    beta_bound: float
    beta_max: float
    rho_min: float
    rho_max: float
    k_q_per_step: tuple[float, ...]

    @property
    def beta_exceeds_bound(self) -> bool:
        return self.beta >= self.beta_bound

    def to_dict(self) -> dict:
        return {
            "k_prop": self.k_prop,
            "k_q_kl": self.k_q_kl,
            "log_k_q_kl": self.log_k_q_kl,
            "k_q_overflow": self.k_q_overflow,
            "k_q_per_step": list(self.k_q_per_step),
            "k_opt_kl": self.k_opt_kl,
            "beta": self.beta,
            "beta_bound": self.beta_bound,
            "beta_max": self.beta_max,
            "beta_exceeds_bound": self.beta_exceeds_bound,
            "rho_min": self.rho_min,
            "rho_max": self.rho_max,
        }


def soft_best_response(spec: GameSpec, mu: DistributionFlow, rho: Policy, beta: float) -> Policy:
    return soft_policy(soft_q(spec, mu, rho, beta))


def gamma_kl(spec: GameSpec, rho: Policy, beta: float, mu: DistributionFlow) -> DistributionFlow:
    """One application of the regularized equilibrium operator: best-respond, then propagate."""
    return propagate(spec, soft_best_response(spec, mu, rho, beta))


def gamma_hard(spec: GameSpec, mu: DistributionFlow) -> DistributionFlow:
    return propagate(spec, hard_opt(spec, mu))


def exploitability(spec: GameSpec, pi: Policy, rho: Policy, beta: float) -> float:
    """Regularized gain of a best response against the flow that ``pi`` itself induces."""
    mu = propagate(spec, pi)
    return best_response_value(spec, mu, rho, beta) - evaluate_kl(spec, pi, mu, rho, beta)


def _detect_cycle(flows: list[DistributionFlow]) -> int | None:
    if len(flows) < 3:
        return None
    a, b, c = flows[-3], flows[-2], flows[-1]
    if d_flow(c, a) < CYCLE_RETURN_TOL and d_flow(b, a) > CYCLE_JUMP_MIN:
        return 2
    return None


def _picard(step, best_response, mu, tol, max_iter, damping):
    if not 0.0 <= damping < 1.0:
        raise ParameterError(f"damping must lie in [0, 1), got {damping}")
    flows = [mu]
    residuals: list[float] = []
    pi = best_response(mu)
    converged = False
    for k in range(max_iter):
        pi = best_response(mu)
        new = step(pi)
        if damping:
            new = DistributionFlow((1.0 - damping) * new.mus + damping * mu.mus)
        res = d_flow(new, mu)
        residuals.append(res)
        flows.append(new)
        mu = new
        logger.debug("iteration %d residual %.3e", k + 1, res)
        if res < tol:
            converged = True
            break
    return pi, mu, flows, residuals, converged


def solve_mfe(
    spec: GameSpec,
    rho: Policy,
    beta: float,
    mu_init: DistributionFlow | None = None,
    tol: float = 1e-8,
    max_iter: int = 500,
    damping: float = 0.0,
) -> EquilibriumResult:
    """Picard iteration ``mu <- Gamma(mu)`` on the regularized operator.

    On convergence the returned ``pi_star`` is the soft best response to the
    last input flow and ``mu_star`` is its propagation, so the pair is
    consistent to machine precision. With ``damping > 0`` the update becomes
    ``(1-d) Gamma(mu) + d mu``; the default is the undamped iteration.
    """
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    if mu_init is None:
        mu_init = propagate(spec, rho)
    pi, mu, flows, residuals, converged = _picard(
        lambda p: propagate(spec, p),
        lambda m: soft_best_response(spec, m, rho, beta),
        mu_init,
        tol,
        max_iter,
        damping,
    )
    mu_star = propagate(spec, pi)
    result = EquilibriumResult(
        pi_star=pi,
        mu_star=mu_star,
        iterations=len(residuals),
        residuals=residuals,
        converged=converged,
        exploitability=exploitability(spec, pi, rho, beta),
        flows=flows,
    )
    if not converged:
        result.cycle_period = _detect_cycle(flows)
        logger.warning("regularized iteration did not converge in %d steps", max_iter)
    return result


def solve_unregularized(
    spec: GameSpec,
    tol: float = 1e-8,
    max_iter: int = 500,
    mu_init: DistributionFlow | None = None,
    damping: float = 0.0,
) -> EquilibriumResult:
    """Picard iteration with the hard-max best response.

    The map is generally not a contraction; non-convergence is reported
    through ``converged=False`` and, when the last iterates alternate,
    ``cycle_period=2``. ``exploitability`` is the plain (unregularized)
    best-response gain.
    """
    if mu_init is None:
        mu_init = propagate(spec, Policy.uniform(spec.horizon, spec.n_states, spec.n_actions))
    pi, mu, flows, residuals, converged = _picard(
        lambda p: propagate(spec, p),
        lambda m: hard_opt(spec, m),
        mu_init,
        tol,
        max_iter,
        damping,
    )
    mu_star = propagate(spec, pi)
    result = EquilibriumResult(
        pi_star=pi,
        mu_star=mu_star,
        iterations=len(residuals),
        residuals=residuals,
        converged=converged,
        exploitability=plain_exploitability(spec, pi),
        flows=flows,
    )
    if not converged:
        result.cycle_period = _detect_cycle(flows)
    return result


def plain_exploitability(spec: GameSpec, pi: Policy) -> float:
    mu = propagate(spec, pi)
    q = hard_q_table(spec.kernel.probs, induced_reward(spec, mu).r)
    best = float(spec.mu0 @ q[0].max(axis=-1))
    return best - evaluate_plain(spec, pi, mu)


def k_prop(n_states: int, horizon: int) -> int:
    """``|S| (|S|^H - 1) / (|S| - 1)``, written as a geometric sum so ``|S| = 1`` is defined."""
    return n_states * sum(n_states**i for i in range(horizon))


def lipschitz_report(spec: GameSpec, rho: Policy, beta: float, beta_max: float) -> LipschitzReport:
    """Theoretical Lipschitz constants and the contraction bound on ``beta``.

    The action-value constant obeys a backward recursion with a doubly
    exponential growth, so it is carried in log space; when it exceeds the
    double range it is reported as ``inf`` with ``k_q_overflow`` set, and the
    bound on ``beta`` is evaluated from the logarithm (underflowing to 0).
    """
    if not beta_max > 0:
        raise ParameterError(f"beta_max must be positive, got {beta_max}")
    S, A, H = spec.n_states, spec.n_actions, spec.horizon
    rho_min = float(rho.probs.min())
    rho_max = float(rho.probs.max())
    base = 2.0 * spec.k_theta * spec.l_max
    log_base = math.log(base) if base > 0 else -math.inf
    log_ratio = math.log(rho_max / rho_min)
    growth = 2.0 * beta_max * (H + 1) * spec.r_max

    # log K_t, t = H down to 0
    log_k = [log_base]
    for _ in range(H):
        prev = log_k[-1]
        if prev == math.inf:
            log_k.append(math.inf)
            continue
        k_prev = math.exp(prev) if prev < 709.0 else math.inf
        expo = growth * k_prev if growth > 0 else 0.0
        log_k.append(float(np.logaddexp(log_base, log_ratio + expo)))
    log_k.reverse()
    log_kq = max(log_k)

    def _exp(x: float) -> float:
        return math.exp(x) if x < 709.0 else math.inf

    per_step = tuple(_exp(x) for x in log_k)
    kq = _exp(log_kq)
    overflow = kq == math.inf
    kp = k_prop(S, H)

    if A == 1:
        return LipschitzReport(kp, kq, log_kq, overflow, 0.0, float(beta), float(beta_max),
                               float(beta_max), rho_min, rho_max, per_step)

    pair = A * (A - 1)
    log_coef = math.log(pair) + 2 * math.log(rho_max) - math.log(2.0) - 2 * math.log(rho_min)
    log_kopt = log_coef + math.log(beta) + log_kq if beta > 0 else -math.inf
    k_opt = _exp(log_kopt) if log_kq > -math.inf else 0.0
    if log_kq == -math.inf or kp == 0:
        bound = float(beta_max)
    else:
        log_bound = -log_coef - log_kq - math.log(kp)
        bound = min(float(beta_max), math.exp(log_bound) if log_bound < 709.0 else math.inf)
    return LipschitzReport(kp, kq, log_kq, overflow, k_opt, float(beta), bound, float(beta_max),
                           rho_min, rho_max, per_step)


def random_flow(rng: np.random.Generator, horizon: int, n_states: int) -> DistributionFlow:
    return DistributionFlow(rng.dirichlet(np.ones(n_states), size=horizon + 1))


def estimate_contraction(
    spec: GameSpec,
    rho: Policy,
    beta: float,
    num_pairs: int = 100,
    seed: int = 0,
) -> float:
    """Largest observed ratio ``d(Gamma mu, Gamma mu') / d(mu, mu')`` over random flow pairs.

    Each pair draws from its own child of ``SeedSequence(seed)``, so the result
    does not depend on evaluation order.
    """
    if num_pairs < 1:
        raise ParameterError("num_pairs must be >= 1")
    ratios = []
    for child in np.random.SeedSequence(seed).spawn(num_pairs):
        rng = np.random.default_rng(child)
        while True:
            mu = random_flow(rng, spec.horizon, spec.n_states)
            mu2 = random_flow(rng, spec.horizon, spec.n_states)
            denom = d_flow(mu, mu2)
            if denom > 0:
                break
        num = d_flow(gamma_kl(spec, rho, beta, mu), gamma_kl(spec, rho, beta, mu2))
        ratios.append(num / denom)
    return float(max(ratios))
