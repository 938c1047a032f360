"""Core game types and the total-variation metrics on distributions, flows and policies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

SIMPLEX_TOL = 1e-9


class DimensionError(ValueError):
    """Raised when array shapes do not agree."""


class ParameterError(ValueError):
    """Raised for invalid scalar parameters (beta, reference policy support, ...)."""


def _frozen(x, ndim: int | None = None, name: str = "array") -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def normalize(x, axis: int = -1) -> np.ndarray:
    """Divide by the sum along ``axis``. Intended for construction time only."""
    arr = np.asarray(x, dtype=np.float64)
    total = arr.sum(axis=axis, keepdims=True)
    if np.any(total <= 0):
        raise ParameterError("cannot normalize a vector with nonpositive mass")
    return arr / total


@dataclass(frozen=True)
class Space:
    """A finite index set ``{0, ..., size-1}`` with optional labels."""

    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if int(self.size) < 1:
            raise ParameterError(f"space size must be >= 1, got {self.size}")
        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != self.size:
                raise DimensionError(f"{len(labels)} labels for a space of size {self.size}")
            if len(set(labels)) != len(labels):
                raise ParameterError(f"labels must be unique: {labels}")
            object.__setattr__(self, "labels", labels)

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels is not None else str(i)

    def all_labels(self) -> list[str]:
        return [self.label(i) for i in range(self.size)]


# StateSpace and ActionSpace carry the same structure.
StateSpace = Space
ActionSpace = Space


@dataclass(frozen=True)
class TransitionKernel:
    """``probs[s, a, s']`` = probability of moving from ``s`` to ``s'`` under ``a``."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs, 3, "kernel"))
        if self.probs.shape[0] != self.probs.shape[2]:
            raise DimensionError(f"kernel must be (S, A, S), got {self.probs.shape}")

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class Theta:
    """Scalar transform applied to the mean coupling term.

    ``kind`` is one of ``identity``, ``square``, ``affine`` (``c0 + c1*x``),
    ``clip`` (to ``[lo, hi]``) or ``custom``. Custom transforms must declare
    their Lipschitz constant on ``|x| <= L_max``.
    """

    kind: str = "identity"
    params: tuple[float, ...] = ()
    fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)
    lipschitz: float | None = None

    KINDS = ("identity", "square", "affine", "clip", "custom")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ParameterError(f"unknown theta kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        expected = {"identity": 0, "square": 0, "affine": 2, "clip": 2}
        if self.kind in expected and len(self.params) != expected[self.kind]:
            raise ParameterError(f"theta {self.kind} takes {expected[self.kind]} parameters")
        if self.kind == "clip" and self.params[0] > self.params[1]:
            raise ParameterError("clip requires lo <= hi")
        if self.kind == "custom":
            if self.fn is None or self.lipschitz is None:
                raise ParameterError("custom theta needs both fn and a declared lipschitz constant")
            if self.lipschitz < 0:
                raise ParameterError("lipschitz constant must be nonnegative")

    @classmethod
    def identity(cls) -> Theta:
        return cls("identity")

    @classmethod
    def square(cls) -> Theta:
        return cls("square")

    @classmethod
    def affine(cls, c0: float, c1: float) -> Theta:
        return cls("affine", (c0, c1))

    @classmethod
    def clip(cls, lo: float, hi: float) -> Theta:
        return cls("clip", (lo, hi))

    @classmethod
    def custom(cls, fn: Callable[[np.ndarray], np.ndarray], lipschitz: float) -> Theta:
        return cls("custom", (), fn, float(lipschitz))

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "square":
            return x * x
        if self.kind == "affine":
            c0, c1 = self.params
            return c0 + c1 * x
        if self.kind == "clip":
            lo, hi = self.params
            return np.clip(x, lo, hi)
        return np.asarray(self.fn(x), dtype=np.float64)

    def lipschitz_constant(self, l_max: float) -> float:
        if self.kind in ("identity", "clip"):
            return 1.0
        if self.kind == "affine":
            return abs(self.params[1])
        if self.kind == "square":
            return 2.0 * l_max
        return float(self.lipschitz)

    def max_abs(self, l_max: float) -> float:
        """``max_{|x| <= l_max} |theta(x)|``."""
        if self.kind == "custom":
            # no structure to exploit; dense grid including the endpoints
            grid = np.linspace(-l_max, l_max, 4001)
            return float(np.max(np.abs(self(grid))))
        # the closed set is monotone or even, so the extremes sit at the endpoints or 0
        pts = np.array([-l_max, 0.0, l_max])
        return float(np.max(np.abs(self(pts))))

    def to_dict(self) -> dict:
        if self.kind == "custom":
            raise ParameterError("custom theta transforms are not serializable")
        out: dict = {"kind": self.kind}
        if self.kind == "affine":
            out["c0"], out["c1"] = self.params
        elif self.kind == "clip":
            out["lo"], out["hi"] = self.params
        return out

    @classmethod
    def from_dict(cls, d) -> Theta:
        if isinstance(d, str):
            d = {"kind": d}
        kind = d["kind"]
        if kind == "affine":
            return cls.affine(d["c0"], d["c1"])
        if kind == "clip":
            return cls.clip(d["lo"], d["hi"])
        return cls(kind)


@dataclass(frozen=True)
class CoupledReward:
    """Pairwise coupling ``L[t, s, a, s']`` passed through per-step transforms ``theta[t]``.

    The reward of an agent at ``(s, a)`` facing population distribution ``mu`` is
    ``theta[t](sum_{s'} L[t, s, a, s'] * mu[s'])``.
    """

    L: np.ndarray
    theta: tuple[Theta, ...]
    l_max: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "L", _frozen(self.L, 4, "L"))
        theta = self.theta
        if isinstance(theta, Theta):
            theta = (theta,) * self.L.shape[0]
        theta = tuple(theta)
        if len(theta) != self.L.shape[0]:
            raise DimensionError(f"{len(theta)} theta transforms for {self.L.shape[0]} time steps")
        object.__setattr__(self, "theta", theta)
        observed = float(np.max(np.abs(self.L))) if self.L.size else 0.0
        if self.l_max is None:
            object.__setattr__(self, "l_max", observed)
        else:
            object.__setattr__(self, "l_max", float(self.l_max))

    @property
    def k_theta(self) -> float:
        return max(th.lipschitz_constant(self.l_max) for th in self.theta)

    @property
    def r_max(self) -> float:
        return max(th.max_abs(self.l_max) for th in self.theta)


@dataclass(frozen=True)
class GameSpec:
    states: Space
    actions: Space
    horizon: int
    kernel: TransitionKernel
    reward: CoupledReward
    mu0: np.ndarray

    def __post_init__(self):
        if not isinstance(self.kernel, TransitionKernel):
            object.__setattr__(self, "kernel", TransitionKernel(self.kernel))
        object.__setattr__(self, "mu0", _frozen(self.mu0, 1, "mu0"))
        if int(self.horizon) < 0:
            raise ParameterError("horizon must be nonnegative")
        object.__setattr__(self, "horizon", int(self.horizon))
        S, A, T = self.states.size, self.actions.size, self.horizon + 1
        if self.kernel.probs.shape != (S, A, S):
            raise DimensionError(f"kernel shape {self.kernel.probs.shape} != {(S, A, S)}")
        if self.reward.L.shape != (T, S, A, S):
            raise DimensionError(f"L shape {self.reward.L.shape} != {(T, S, A, S)}")
        if self.mu0.shape != (S,):
            raise DimensionError(f"mu0 shape {self.mu0.shape} != {(S,)}")

    @property
    def n_states(self) -> int:
        return self.states.size

    @property
    def n_actions(self) -> int:
        return self.actions.size

    @property
    def r_max(self) -> float:
        return self.reward.r_max

    @property
    def k_theta(self) -> float:
        return self.reward.k_theta

    @property
    def l_max(self) -> float:
        return self.reward.l_max

    def policy_shape(self) -> tuple[int, int, int]:
        return (self.horizon + 1, self.n_states, self.n_actions)


@dataclass(frozen=True)
class Policy:
    """Time-indexed stochastic policy, ``probs[t, s, a]`` for ``t = 0..H``."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs, 3, "policy"))

    @classmethod
    def uniform(cls, horizon: int, n_states: int, n_actions: int) -> Policy:
        return cls(np.full((horizon + 1, n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def from_unnormalized(cls, weights) -> Policy:
        return cls(normalize(weights, axis=-1))

    @property
    def horizon(self) -> int:
        return self.probs.shape[0] - 1

    def __getitem__(self, t: int) -> np.ndarray:
        return self.probs[t]


@dataclass(frozen=True)
class DistributionFlow:
    """Sequence ``mu_0..mu_H`` of state distributions, stored as an ``(H+1, S)`` array."""

    mus: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mus", _frozen(self.mus, 2, "flow"))

    @property
    def horizon(self) -> int:
        return self.mus.shape[0] - 1

    def __getitem__(self, t: int) -> np.ndarray:
        return self.mus[t]

    def __len__(self) -> int:
        return self.mus.shape[0]


def _arr(x) -> np.ndarray:
    if isinstance(x, DistributionFlow):
        return x.mus
    if isinstance(x, Policy):
        return x.probs
    return np.asarray(x, dtype=np.float64)


def d_tv(nu, nu2) -> float:
    """Total variation distance ``0.5 * ||nu - nu2||_1``."""
    a, b = _arr(nu), _arr(nu2)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    return 0.5 * float(np.abs(a - b).sum())


def d_flow(mu, mu2) -> float:
    """Sup over time of the total variation between two flows."""
    a, b = _arr(mu), _arr(mu2)
    if a.shape != b.shape:
        raise DimensionError(f"flow shape mismatch: {a.shape} vs {b.shape}")
    return float(np.max(0.5 * np.abs(a - b).sum(axis=-1)))


def d_policy(pi, pi2) -> float:
    """Sup over ``(t, s)`` of the total variation between action distributions."""
    a, b = _arr(pi), _arr(pi2)
    if a.shape != b.shape:
        raise DimensionError(f"policy shape mismatch: {a.shape} vs {b.shape}")
    return float(np.max(0.5 * np.abs(a - b).sum(axis=-1)))


def _simplex_diagnostics(arr: np.ndarray, name: str, index_names: Sequence[str]) -> list[str]:
    out = []
    sums = arr.sum(axis=-1)
    for idx in zip(*np.nonzero(np.abs(sums - 1.0) > SIMPLEX_TOL)):
        where = ", ".join(f"{n}={i}" for n, i in zip(index_names, idx))
        out.append(f"{name}[{where}] sums to {sums[idx]:.12g}, expected 1")
    for idx in zip(*np.nonzero(arr < 0)):
        where = ", ".join(f"{n}={i}" for n, i in zip(index_names, idx))
        out.append(f"{name}[{where}] has negative entry {arr[idx]:.12g}")
    for idx in zip(*np.nonzero(arr > 1)):
        where = ", ".join(f"{n}={i}" for n, i in zip(index_names, idx))
        out.append(f"{name}[{where}] has entry {arr[idx]:.12g} > 1")
    return out


def validate(spec: GameSpec, rho: Policy | None = None) -> list[str]:
    """Check every probabilistic and boundedness invariant of ``spec``.

    Returns a list of human-readable diagnostics; empty means valid. When
    ``rho`` is given it is checked as a reference policy, which additionally
    requires strictly positive entries.
    """
    diags = _simplex_diagnostics(spec.kernel.probs, "kernel", ("s", "a", "s'"))
    diags += _simplex_diagnostics(spec.mu0[None, :], "mu0", ("row", "s"))
    L = spec.reward.L
    for idx in zip(*np.nonzero(np.abs(L) > spec.reward.l_max + SIMPLEX_TOL)):
        t, s, a, s2 = idx
        diags.append(f"L[t={t}, s={s}, a={a}, s'={s2}] = {L[idx]:.12g} exceeds L_max={spec.reward.l_max:.12g}")
    if spec.reward.k_theta < 0:
        diags.append("K_theta must be nonnegative")
    if rho is not None:
        if rho.probs.shape != spec.policy_shape():
            diags.append(f"reference policy shape {rho.probs.shape} != {spec.policy_shape()}")
        else:
            diags += _simplex_diagnostics(rho.probs, "rho", ("t", "s", "a"))
            for idx in zip(*np.nonzero(rho.probs <= 0)):
                t, s, a = idx
                diags.append(f"rho[t={t}, s={s}, a={a}] = {rho.probs[idx]:.12g} is not strictly positive")
    return diags
