"""Run configuration files (YAML or JSON) with line-anchored error messages."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import environments as env
from .model import GameSpec, Policy, Theta, validate
from .serialization import game_from_dict, load_game, read_policy_csv

OUTPUT_ENV = "ERMFG_OUTPUT_DIR"


class ConfigError(Exception):
    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.message = message
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 500
    damping: float = 0.0
    regularized: bool = True


@dataclass(frozen=True)
class BoundsConfig:
    beta_max: float | None = None
    num_pairs: int = 100
    seed: int = 0


@dataclass(frozen=True)
class MonteCarloConfig:
    n_list: tuple[int, ...]
    mc_reps: int
    seed: int


@dataclass(frozen=True)
class RunConfig:
    game: GameSpec
    rho: Policy
    beta: float
    solver: SolverConfig = field(default_factory=SolverConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    convergence: MonteCarloConfig | None = None
    deviation: MonteCarloConfig | None = None
    output_dir: Path | None = None
    source: str = "<config>"
    digest: str = ""

    def with_overrides(self, seed: int | None = None, beta: float | None = None) -> RunConfig:
        cfg = self
        if beta is not None:
            if not beta > 0:
                raise ConfigError("--beta must be positive", "<command line>")
            cfg = replace(cfg, beta=float(beta))
        if seed is not None:
            cfg = replace(
                cfg,
                bounds=replace(cfg.bounds, seed=seed),
                convergence=replace(cfg.convergence, seed=seed) if cfg.convergence else None,
                deviation=replace(cfg.deviation, seed=seed) if cfg.deviation else None,
            )
        return cfg


def _line_map(node, path=(), out=None) -> dict[tuple, int]:
    """Map key paths to 1-based line numbers from a composed YAML node tree."""
    if out is None:
        out = {}
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            out[path + (key,)] = k.start_mark.line + 1
            _line_map(v, path + (key,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out)
    return out


class _Doc:
    """Parsed config plus the location info needed to anchor errors."""

    def __init__(self, text: str, source: str):
        self.source = source
        try:
            self.data = yaml.safe_load(text)
            node = yaml.compose(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            raise ConfigError(f"parse error: {getattr(exc, 'problem', exc)}", source, line) from None
        if not isinstance(self.data, dict):
            raise ConfigError("top level must be a mapping", source, 1)
        self.lines = _line_map(node) if node is not None else {}

    def error(self, path: tuple, message: str) -> ConfigError:
        p = tuple(path)
        while p and p not in self.lines:
            p = p[:-1]
        dotted = ".".join(str(x) for x in path)
        return ConfigError(f"{dotted}: {message}" if dotted else message, self.source, self.lines.get(p))

    def get(self, path: tuple, default: Any = None) -> Any:
        cur = self.data
        for key in path:
            if not isinstance(cur, dict) or key not in cur:
                return default
            cur = cur[key]
        return cur

    def number(self, path, default=None, positive=False, integer=False):
        value = self.get(path, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(path, f"expected a number, got {value!r}")
        if integer and int(value) != value:
            raise self.error(path, f"expected an integer, got {value!r}")
        if positive and not value > 0:
            raise self.error(path, f"must be positive, got {value!r}")
        return int(value) if integer else float(value)


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else (base / path)


def _build_graph_game(doc: _Doc, g: dict) -> tuple[GameSpec, Policy]:
    path = ("game", "graph")
    nodes = g.get("nodes")
    if not isinstance(nodes, int) or nodes < 1:
        raise doc.error(path + ("nodes",), "nodes must be a positive integer")
    edges = g.get("edges", [])
    try:
        # configs number nodes from 1
        zero_based = frozenset((int(a) - 1, int(b) - 1) for a, b in edges)
        labels = g.get("labels") or [f"node{i + 1}" for i in range(nodes)]
        graph = env.DirectedGraph(nodes, zero_based, bool(g.get("self_loops", True)), tuple(labels))
    except (TypeError, ValueError) as exc:
        raise doc.error(path + ("edges",), str(exc)) from None
    bonus = {int(k) - 1: float(v) for k, v in (g.get("bonus") or {}).items()}
    try:
        theta = Theta.from_dict(g.get("theta", "square"))
    except (KeyError, ValueError) as exc:
        raise doc.error(path + ("theta",), str(exc)) from None
    horizon = doc.number(path + ("horizon",), env.DEFAULT_HORIZON, integer=True)
    mu0 = g.get("mu0")
    if mu0 is None:
        mu0 = np.eye(nodes)[0]
    rewards = env.CongestionRewardSpec(bonus, float(g.get("congestion_weight", 1.0)), theta)
    try:
        spec = env.build_graph_game(graph, rewards, horizon, mu0)
    except ValueError as exc:
        raise doc.error(path, str(exc)) from None
    ref = g.get("reference") or {}
    prefs = {(int(a) - 1, int(b) - 1): float(p) for a, b, p in ref.get("preferences", [])}
    try:
        rho = env.graph_reference_policy(graph, horizon, prefs, float(ref.get("floor", env.RHO_FLOOR)))
    except ValueError as exc:
        raise doc.error(path + ("reference",), str(exc)) from None
    return spec, rho


def _load_game(doc: _Doc, base: Path) -> tuple[GameSpec, Policy | None]:
    g = doc.get(("game",))
    if not isinstance(g, dict):
        raise doc.error(("game",), "a game block is required")
    kinds = [k for k in ("builtin", "graph", "file", "inline") if k in g]
    if len(kinds) != 1:
        raise doc.error(("game",), "exactly one of builtin, graph, file, inline is required")
    kind = kinds[0]
    try:
        if kind == "builtin":
            name = g["builtin"]
            if name != "resource_allocation":
                raise doc.error(("game", "builtin"), f"unknown builtin game {name!r}")
            H = doc.number(("game", "horizon"), env.DEFAULT_HORIZON, integer=True)
            return env.default_resource_allocation(H, g.get("mu0"))
        if kind == "graph":
            return _build_graph_game(doc, g["graph"])
        if kind == "file":
            p = _resolve(base, g["file"])
            if not p.exists():
                raise doc.error(("game", "file"), f"file not found: {p}")
            return load_game(p), None
        return game_from_dict(g["inline"]), None
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise doc.error(("game", kind), f"invalid game: {exc}") from None


def _load_rho(doc: _Doc, base: Path, spec: GameSpec, default: Policy | None) -> Policy:
    r = doc.get(("rho",), "default")
    if r == "default":
        if default is None:
            return Policy.uniform(spec.horizon, spec.n_states, spec.n_actions)
        return default
    if r == "uniform":
        return Policy.uniform(spec.horizon, spec.n_states, spec.n_actions)
    try:
        if isinstance(r, dict) and "file" in r:
            p = _resolve(base, r["file"])
            if not p.exists():
                raise doc.error(("rho", "file"), f"file not found: {p}")
            return read_policy_csv(p, spec.policy_shape())
        arr = np.asarray(r, dtype=np.float64)
        if arr.ndim == 2:
            arr = np.broadcast_to(arr, spec.policy_shape()).copy()
        return Policy(arr)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise doc.error(("rho",), f"invalid reference policy: {exc}") from None


def _mc_block(doc: _Doc, name: str) -> MonteCarloConfig | None:
    block = doc.get((name,))
    if block is None:
        return None
    if not isinstance(block, dict):
        raise doc.error((name,), "must be a mapping")
    n_list = block.get("n_list")
    if not isinstance(n_list, list) or not n_list or not all(isinstance(n, int) and n >= 1 for n in n_list):
        raise doc.error((name, "n_list"), "n_list must be a nonempty list of positive integers")
    mc_reps = doc.number((name, "mc_reps"), None, positive=True, integer=True)
    if mc_reps is None:
        raise doc.error((name,), "mc_reps is required")
    seed = doc.number((name, "seed"), None, integer=True)
    if seed is None:
        raise doc.error((name,), "seed is required for a Monte Carlo block")
    return MonteCarloConfig(tuple(n_list), mc_reps, seed)


def parse_config(text: str, source: str = "<config>", base: Path | None = None) -> RunConfig:
    doc = _Doc(text, source)
    base = base or Path.cwd()
    spec, default_rho = _load_game(doc, base)
    rho = _load_rho(doc, base, spec, default_rho)
    problems = validate(spec, rho)
    if problems:
        raise doc.error(("game",), "; ".join(problems[:5]))

    solver = SolverConfig(
        tol=doc.number(("solver", "tol"), 1e-8, positive=True),
        max_iter=doc.number(("solver", "max_iter"), 500, positive=True, integer=True),
        damping=doc.number(("solver", "damping"), 0.0),
        regularized=bool(doc.get(("solver", "regularized"), True)),
    )
    if not 0.0 <= solver.damping < 1.0:
        raise doc.error(("solver", "damping"), "damping must lie in [0, 1)")
    beta = doc.number(("beta",), None, positive=True)
    if beta is None and solver.regularized:
        raise doc.error(("beta",), "beta is required unless solver.regularized is false")
    bounds = BoundsConfig(
        beta_max=doc.number(("bounds", "beta_max"), None, positive=True),
        num_pairs=doc.number(("bounds", "num_pairs"), 100, positive=True, integer=True),
        seed=doc.number(("bounds", "seed"), 0, integer=True),
    )
    out = doc.get(("output_dir",))
    return RunConfig(
        game=spec,
        rho=rho,
        beta=beta if beta is not None else float("nan"),
        solver=solver,
        bounds=bounds,
        convergence=_mc_block(doc, "convergence"),
        deviation=_mc_block(doc, "deviation"),
        output_dir=Path(out) if out else None,
        source=source,
        digest=hashlib.sha256(text.encode()).hexdigest(),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config file not found", str(path))
    return parse_config(path.read_text(), str(path), path.parent)


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "ermfg-out"))
