"""JSON documents for games and policies, and the CSV layouts used for results.

Game document (JSON)::

    {
      "states":  {"size": 5, "labels": ["node1", ...]},   # or just an integer
      "actions": {"size": 3},
      "horizon": 5,
      "kernel":  [[[...]]],                # T[s][a][s']
      "L":       [[[[...]]]]               # L[t][s][a][s'], or
                 {"sparse": [[t, s, a, s2, value], ...]},
      "l_max":   1.5,                      # optional, defaults to max |L|
      "theta":   {"kind": "square"}        # or a list with one entry per t;
                                           # kinds: identity, square,
                                           # affine (c0, c1), clip (lo, hi)
      "mu0":     [...]
    }

All CSV floats are written with 17 significant digits so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import CoupledReward, DimensionError, DistributionFlow, GameSpec, Policy, Space, Theta, TransitionKernel


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _space_to_dict(space: Space) -> dict:
    out: dict = {"size": space.size}
    if space.labels is not None:
        out["labels"] = list(space.labels)
    return out


def _space_from(obj) -> Space:
    if isinstance(obj, int):
        return Space(obj)
    return Space(int(obj["size"]), tuple(obj["labels"]) if obj.get("labels") else None)


def game_to_dict(spec: GameSpec, sparse: bool = False) -> dict:
    L = spec.reward.L
    if sparse:
        idx = np.argwhere(L != 0)
        L_doc = {"sparse": [[int(t), int(s), int(a), int(s2), float(L[t, s, a, s2])] for t, s, a, s2 in idx]}
    else:
        L_doc = L.tolist()
    thetas = spec.reward.theta
    theta_doc = thetas[0].to_dict() if all(th == thetas[0] for th in thetas) else [th.to_dict() for th in thetas]
    return {
        "states": _space_to_dict(spec.states),
        "actions": _space_to_dict(spec.actions),
        "horizon": spec.horizon,
        "kernel": spec.kernel.probs.tolist(),
        "L": L_doc,
        "l_max": spec.reward.l_max,
        "theta": theta_doc,
        "mu0": spec.mu0.tolist(),
    }


def game_from_dict(doc: dict) -> GameSpec:
    states = _space_from(doc["states"])
    actions = _space_from(doc["actions"])
    H = int(doc["horizon"])
    shape = (H + 1, states.size, actions.size, states.size)
    L_doc = doc["L"]
    if isinstance(L_doc, dict):
        L = np.zeros(shape)
        for entry in L_doc["sparse"]:
            t, s, a, s2, value = entry
            L[int(t), int(s), int(a), int(s2)] = float(value)
    else:
        L = np.asarray(L_doc, dtype=np.float64)
        if L.shape != shape:
            raise DimensionError(f"L has shape {L.shape}, expected {shape}")
    theta_doc = doc.get("theta", "identity")
    if isinstance(theta_doc, list):
        theta = tuple(Theta.from_dict(d) for d in theta_doc)
    else:
        theta = Theta.from_dict(theta_doc)
    return GameSpec(
        states=states,
        actions=actions,
        horizon=H,
        kernel=TransitionKernel(np.asarray(doc["kernel"], dtype=np.float64)),
        reward=CoupledReward(L, theta, doc.get("l_max")),
        mu0=np.asarray(doc["mu0"], dtype=np.float64),
    )


def save_game(spec: GameSpec, path, sparse: bool = False) -> None:
    doc = game_to_dict(spec, sparse)
    body = ",\n".join(f"  {json.dumps(k)}: {json.dumps(v)}" for k, v in doc.items())
    Path(path).write_text("{\n" + body + "\n}\n")


def load_game(path) -> GameSpec:
    return game_from_dict(json.loads(Path(path).read_text()))


def _write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_flow_csv(path, flow: DistributionFlow, labels: Sequence[str] | None = None) -> Path:
    """One row per time step, one column per state."""
    mus = flow.mus
    labels = list(labels) if labels is not None else [str(s) for s in range(mus.shape[1])]
    return _write_rows(path, ["t", *labels], ([t, *mus[t]] for t in range(mus.shape[0])))


def read_flow_csv(path) -> DistributionFlow:
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    return DistributionFlow(np.array([[float(v) for v in r[1:]] for r in rows[1:]]))


def write_reward_csv(path, r: np.ndarray, state_labels: Sequence[str] | None = None) -> Path:
    """One row per time step, one column per ``state:action`` pair."""
    H1, S, A = r.shape
    state_labels = list(state_labels) if state_labels is not None else [str(s) for s in range(S)]
    header = ["t"] + [f"{state_labels[s]}:{a}" for s in range(S) for a in range(A)]
    return _write_rows(path, header, ([t, *r[t].reshape(-1)] for t in range(H1)))


def write_table_csv(path, table: np.ndarray) -> Path:
    """Long format ``(t, s, a, value)`` for policies and action-value tables."""
    H1, S, A = table.shape
    rows = ((t, s, a, table[t, s, a]) for t in range(H1) for s in range(S) for a in range(A))
    return _write_rows(path, ["t", "s", "a", "value"], rows)


def read_table_csv(path, shape: tuple[int, int, int] | None = None) -> np.ndarray:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    idx = np.array([[int(r["t"]), int(r["s"]), int(r["a"])] for r in rows])
    if shape is None:
        shape = tuple(int(v) + 1 for v in idx.max(axis=0))
    out = np.zeros(shape)
    for (t, s, a), r in zip(idx, rows):
        out[t, s, a] = float(r["value"])
    return out


def write_policy_csv(path, pi: Policy) -> Path:
    return write_table_csv(path, pi.probs)


def read_policy_csv(path, shape=None) -> Policy:
    return Policy(read_table_csv(path, shape))


def write_residuals_csv(path, residuals: Sequence[float]) -> Path:
    return _write_rows(path, ["iteration", "residual"], ((k + 1, r) for k, r in enumerate(residuals)))


def write_convergence_csv(path, table) -> Path:
    """Long format ``(N, t, statistic, value, std_err)``."""
    rows = []
    for r in table.rows:
        rows.append((r["N"], r["t"], "mean_tv", r["mean_tv"], r["std_err"]))
        rows.append((r["N"], r["t"], "mean_sq_l2", r["mean_sq_l2"], r["sq_l2_std_err"]))
        rows.append((r["N"], r["t"], "expected_sq_l2", r["expected_sq_l2"], 0.0))
    return _write_rows(path, ["N", "t", "statistic", "value", "std_err"], rows)


def write_deviation_csv(path, sweep) -> Path:
    return _write_rows(path, ["N", "gain", "std_err"], sweep.rows())
