"""Command-line entry point: ``ermfg {solve,bounds,deviate,converge,simulate,example}``.

Exit codes: 0 success, 1 configuration error, 2 non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

from . import plotting
from .config import ConfigError, RunConfig, default_output_dir, load_config
from .equilibrium import (
    EquilibriumResult,
    estimate_contraction,
    lipschitz_report,
    solve_mfe,
    solve_unregularized,
)
from .finite_population import convergence_sweep, deviation_sweep, simulate_population
from .propagation import induced_reward, propagate
from .serialization import (
    write_convergence_csv,
    write_deviation_csv,
    write_flow_csv,
    write_policy_csv,
    write_residuals_csv,
    write_reward_csv,
)

logger = logging.getLogger("ermfg")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2

BUNDLED_CONFIG_DIR = Path(__file__).resolve().parent / "configs"


class Run:
    """Output directory bookkeeping for one command invocation."""

    def __init__(self, cfg: RunConfig, out: Path, command: str, figures: bool, quiet: bool):
        self.cfg = cfg
        self.out = out
        self.command = command
        self.figures = figures
        self.quiet = quiet
        self.artifacts: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def add(self, path: Path) -> Path:
        self.artifacts.append(Path(path))
        return path

    def say(self, msg: str) -> None:
        if not self.quiet:
            print(msg)

    def write_json(self, name: str, payload: dict) -> Path:
        path = self.out / name
        path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
        return self.add(path)

    def manifest(self, seed: int | None) -> Path:
        entries = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in self.artifacts}
        payload = {
            "command": self.command,
            "config": self.cfg.source,
            "config_sha256": self.cfg.digest,
            "seed": seed,
            "beta": self.cfg.beta if self.cfg.solver.regularized else None,
            "artifacts": dict(sorted(entries.items())),
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
        return path


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _solve(cfg: RunConfig) -> EquilibriumResult:
    s = cfg.solver
    if s.regularized:
        return solve_mfe(cfg.game, cfg.rho, cfg.beta, tol=s.tol, max_iter=s.max_iter, damping=s.damping)
    return solve_unregularized(cfg.game, tol=s.tol, max_iter=s.max_iter, damping=s.damping)


def _write_equilibrium(run: Run, result: EquilibriumResult) -> None:
    spec = run.cfg.game
    labels = spec.states.all_labels()
    run.add(write_policy_csv(run.out / "policy.csv", result.pi_star))
    run.add(write_flow_csv(run.out / "flow.csv", result.mu_star, labels))
    run.add(write_residuals_csv(run.out / "residuals.csv", result.residuals))
    run.add(write_reward_csv(run.out / "reward.csv", induced_reward(spec, result.mu_star).r, labels))
    if run.figures:
        title = f"beta = {run.cfg.beta:g}" if run.cfg.solver.regularized else "unregularized"
        run.add(plotting.plot_flow(result.mu_star, labels, run.out / "flow.png", title))
        run.add(plotting.plot_residuals(result.residuals, run.out / "residuals.png", run.cfg.solver.tol))


def _equilibrium_report(cfg: RunConfig, result: EquilibriumResult) -> dict:
    report = result.summary()
    report["regularized"] = cfg.solver.regularized
    report["beta"] = cfg.beta if cfg.solver.regularized else None
    report["tol"] = cfg.solver.tol
    report["max_iter"] = cfg.solver.max_iter
    report["terminal_distribution"] = dict(zip(cfg.game.states.all_labels(), result.mu_star.mus[-1].tolist()))
    if cfg.solver.regularized:
        ref = propagate(cfg.game, cfg.rho).mus[-1]
        report["reference_terminal_distribution"] = dict(zip(cfg.game.states.all_labels(), ref.tolist()))
    if result.cycle_period:
        report["diagnostic"] = (
            f"no convergence: iterates alternate with period {result.cycle_period} "
            f"(last residual {result.residuals[-1]:.3g})"
        )
    return report


def cmd_solve(run: Run) -> int:
    result = _solve(run.cfg)
    _write_equilibrium(run, result)
    report = _equilibrium_report(run.cfg, result)
    run.write_json("report.json", report)
    run.manifest(None)
    if result.converged:
        run.say(f"converged in {result.iterations} iterations; exploitability {result.exploitability:.3e}")
        return EXIT_OK
    run.say(report.get("diagnostic", f"did not converge in {result.iterations} iterations"))
    return EXIT_NONCONVERGED


def cmd_bounds(run: Run) -> int:
    cfg = run.cfg
    if not cfg.solver.regularized:
        raise ConfigError("bounds need a regularized configuration (beta)", cfg.source)
    beta_max = cfg.bounds.beta_max or cfg.beta
    report = lipschitz_report(cfg.game, cfg.rho, cfg.beta, beta_max).to_dict()
    ratio = estimate_contraction(cfg.game, cfg.rho, cfg.beta, cfg.bounds.num_pairs, cfg.bounds.seed)
    report["empirical_contraction"] = ratio
    report["num_pairs"] = cfg.bounds.num_pairs
    report["seed"] = cfg.bounds.seed
    run.write_json("bounds.json", report)
    run.manifest(cfg.bounds.seed)
    flag = "exceeds" if report["beta_exceeds_bound"] else "is within"
    run.say(f"beta={cfg.beta:g} {flag} the theoretical bound {report['beta_bound']:.3g}; "
            f"empirical contraction {ratio:.4f}")
    return EXIT_OK


def _solved(run: Run) -> EquilibriumResult | None:
    result = _solve(run.cfg)
    if not result.converged:
        run.say("equilibrium did not converge; nothing to simulate against")
        return None
    return result


def cmd_deviate(run: Run) -> int:
    cfg = run.cfg
    if cfg.deviation is None:
        raise ConfigError("a deviation block (n_list, mc_reps, seed) is required", cfg.source)
    if not cfg.solver.regularized:
        raise ConfigError("deviation needs a regularized configuration (beta)", cfg.source)
    result = _solved(run)
    if result is None:
        return EXIT_NONCONVERGED
    mc = cfg.deviation
    sweep = deviation_sweep(cfg.game, cfg.rho, cfg.beta, result.pi_star, mc.n_list, mc.mc_reps, mc.seed,
                            solver_tol=cfg.solver.tol)
    run.add(write_deviation_csv(run.out / "deviation.csv", sweep))
    if run.figures:
        run.add(plotting.plot_deviation(sweep.rows(), sweep.slope, run.out / "deviation.png"))
    report = {
        "slope": sweep.slope,
        "fitted_n": sweep.used_n,
        "diagnostic": sweep.diagnostic,
        "mc_reps": mc.mc_reps,
        "seed": mc.seed,
        "equilibrium": result.summary(),
    }
    run.write_json("deviation_report.json", report)
    run.manifest(mc.seed)
    if sweep.slope is None:
        run.say(sweep.diagnostic)
    else:
        run.say(f"deviation gain slope {sweep.slope:.3f} over N={list(sweep.used_n)}")
    return EXIT_OK


def cmd_converge(run: Run) -> int:
    cfg = run.cfg
    if cfg.convergence is None:
        raise ConfigError("a convergence block (n_list, mc_reps, seed) is required", cfg.source)
    result = _solved(run)
    if result is None:
        return EXIT_NONCONVERGED
    mc = cfg.convergence
    table = convergence_sweep(cfg.game, result.pi_star, mc.n_list, mc.mc_reps, mc.seed)
    run.add(write_convergence_csv(run.out / "convergence.csv", table))
    if run.figures:
        run.add(plotting.plot_convergence(table, run.out / "convergence.png"))
    worst = max((abs(r["mean_sq_l2"] - r["expected_sq_l2"]) / r["sq_l2_std_err"]
                 for r in table.rows if r["sq_l2_std_err"] > 0), default=0.0)
    report = {
        "slope": table.slope,
        "slope_per_t": {str(t): v for t, v in table.slope_per_t.items()},
        "max_sq_l2_deviation_in_std_err": worst,
        "mc_reps": mc.mc_reps,
        "seed": mc.seed,
    }
    run.write_json("convergence_report.json", report)
    run.manifest(mc.seed)
    run.say(f"pooled TV slope {table.slope:.3f}; worst second-moment deviation {worst:.2f} std errs")
    return EXIT_OK


def cmd_simulate(run: Run, n_agents: int, seed: int) -> int:
    result = _solved(run)
    if result is None:
        return EXIT_NONCONVERGED
    spec = run.cfg.game
    rollout = simulate_population(spec, result.pi_star, n_agents, seed)
    run.add(write_flow_csv(run.out / "empirical_flow.csv", rollout.empirical_flow, spec.states.all_labels()))
    run.add(write_flow_csv(run.out / "flow.csv", result.mu_star, spec.states.all_labels()))
    if run.figures:
        run.add(plotting.plot_flow(rollout.empirical_flow, spec.states.all_labels(),
                                   run.out / "empirical_flow.png", f"N = {n_agents}"))
    run.manifest(seed)
    run.say(f"simulated {n_agents} agents")
    return EXIT_OK


EXAMPLES = ("resource_allocation_beta3", "resource_allocation_beta0.1", "resource_allocation_unregularized")


def cmd_example(out: Path, figures: bool, quiet: bool) -> int:
    """Solve the bundled resource allocation configurations into subdirectories of ``out``."""
    status = {}
    for name in EXAMPLES:
        cfg = load_config(BUNDLED_CONFIG_DIR / f"{name}.yaml")
        run = Run(cfg, out / name, "solve", figures, quiet)
        run.say(f"[{name}]")
        status[name] = cmd_solve(run)
    expected = {EXAMPLES[0]: EXIT_OK, EXAMPLES[1]: EXIT_OK, EXAMPLES[2]: EXIT_NONCONVERGED}
    return EXIT_OK if status == expected else EXIT_NONCONVERGED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration (YAML or JSON)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="override every Monte Carlo seed in the config")
    common.add_argument("--beta", type=float, help="override the inverse temperature")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    common.add_argument("--no-figures", action="store_true", help="write CSV/JSON only")

    parser = argparse.ArgumentParser(prog="ermfg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve for the equilibrium")
    sub.add_parser("bounds", parents=[common], help="theoretical constants and empirical contraction")
    sub.add_parser("deviate", parents=[common], help="unilateral deviation gain vs N")
    sub.add_parser("converge", parents=[common], help="empirical flow convergence vs N")
    sim = sub.add_parser("simulate", parents=[common], help="one N-agent rollout under the equilibrium")
    sim.add_argument("--agents", type=int, default=1000)
    sub.add_parser("example", parents=[common], help="run the bundled resource allocation examples")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        if args.command == "example":
            out = args.out or default_output_dir()
            return cmd_example(out, not args.no_figures, args.quiet)
        if args.config is None:
            raise ConfigError("--config is required", "<command line>")
        cfg = load_config(args.config).with_overrides(seed=args.seed, beta=args.beta)
        out = args.out or cfg.output_dir or default_output_dir()
        run = Run(cfg, out, args.command, not args.no_figures, args.quiet)
        if args.command == "solve":
            return cmd_solve(run)
        if args.command == "bounds":
            return cmd_bounds(run)
        if args.command == "deviate":
            return cmd_deviate(run)
        if args.command == "converge":
            return cmd_converge(run)
        return cmd_simulate(run, args.agents, args.seed if args.seed is not None else 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
