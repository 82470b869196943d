"""Command-line entry point.

Every subcommand reads an experiment config (``--config`` or a shipped name),
applies ``--set key.path=value`` overrides, writes its artifacts into the
output directory, and echoes both the original and the resolved config there
for provenance. Outputs are deterministic for a fixed config and seed; wall
times go into a separate sidecar so CSV artifacts stay byte-reproducible.
"""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, ExperimentConfig, shipped_config_path, validate_config
from .costs import RewardMode
from .dynamics import make_rng
from .evaluation import (
    EvalProtocol,
    evaluate,
    grid_search_penalty,
    mc_violation_estimate,
    state_input_sweep,
)
from .bounds import constraint_probability
from .networks import load_policy, save_mlp

FLOAT_FMT = "%.9g"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    return str(value)


def write_csv(path: Path, header, rows) -> None:
    """Fixed header, fixed column order, 9 significant digits for floats."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _prepare(config, out, overrides, seed) -> tuple[ExperimentConfig, Path]:
    overrides = list(overrides)
    if seed is not None:
        overrides.append(f"seed={seed}")
    config_path = Path(config)
    if not config_path.exists():
        try:
            config_path = shipped_config_path(config)
        except (FileNotFoundError, ModuleNotFoundError):
            fail(f"config not found: {config}")
    violations = validate_config(config_path, overrides)
    if violations:
        for item in violations:
            click.echo(f"error: {item}", err=True)
        sys.exit(1)
    cfg = ExperimentConfig.load(config_path, overrides)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(config_path, out_dir / "config_used.cfg")
    cfg.echo(out_dir / "config_resolved.cfg")
    return cfg, out_dir


def _report_artifacts(out_dir: Path, report, stem: str = "report") -> None:
    write_csv(out_dir / f"{stem}.csv", report.CSV_COLUMNS, [report.csv_row()])
    (out_dir / f"{stem}_runtime.txt").write_text(
        f"mean_step_runtime_s {report.mean_step_runtime_s:.6g}\n", encoding="ascii"
    )


def _load_policy_arg(policy, cfg, system, noise):
    """Resolve a policy argument: 'lqr' or a saved actor parameter file."""
    if policy == "lqr":
        return cfg.build_lqr().fit(system, noise), "lqr"
    path = Path(policy)
    if not path.exists():
        fail(f"policy not found: {policy} (expected 'lqr' or an actor parameter file)")
    return load_policy(path), path.name


config_opt = click.option("--config", required=True,
                          help="Config file path, or a shipped name (second_order, uav).")
out_opt = click.option("--out", default="chancectrl_out", show_default=True,
                       help="Artifact directory.")
set_opt = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                       help="Override a config entry (repeatable), e.g. --set cost.penalty=10.")
seed_opt = click.option("--seed", type=int, default=None, help="Override the top-level seed.")
trials_opt = click.option("--trials", type=int, default=None, help="Override eval trials.")
steps_opt = click.option("--steps", type=int, default=None, help="Override eval steps per trial.")


@click.group()
def main():
    """Chance-constrained control experiments: baselines, training, evaluation."""


@main.command()
@config_opt
@out_opt
@set_opt
@seed_opt
@trials_opt
@steps_opt
def lqr(config, out, overrides, seed, trials, steps):
    """Solve the LQR baseline, evaluate it, and write the report."""
    cfg, out_dir = _prepare(config, out, overrides, seed)
    system, noise = cfg.build_system(), cfg.build_noise()
    controller = cfg.build_lqr().fit(system, noise)
    sol = controller.solution_
    rows = [(f"K{i + 1}{j + 1}", sol.K[i, j])
            for i in range(sol.K.shape[0]) for j in range(sol.K.shape[1])]
    rows += [(f"l{i + 1}", v) for i, v in enumerate(sol.l)]
    rows.append(("residual", sol.residual))
    write_csv(out_dir / "solution.csv", ("field", "value"), rows)
    report = evaluate(system, noise, cfg.build_cost(), cfg.build_constraint(), controller,
                      cfg.build_protocol(trials, steps), policy_name="lqr")
    _report_artifacts(out_dir, report)
    click.echo(f"jc={report.jc:.6g} cv_percent={report.cv_percent:.6g}")


@main.command()
@config_opt
@out_opt
@set_opt
@seed_opt
@click.option("--mode", type=click.Choice(["risk_neutral", "known_model", "unknown_model"]),
              default=None, help="Reward mode override.")
def train(config, out, overrides, seed, mode):
    """Train the actor-critic controller; save the actor and the training log."""
    cfg, out_dir = _prepare(config, out, overrides, seed)
    system, noise = cfg.build_system(), cfg.build_noise()
    controller = cfg.build_ddpg(reward_mode=mode)
    controller.fit(system, noise)
    save_mlp(out_dir / "actor.mlp", controller.actor_)
    write_csv(out_dir / "training_log.csv", controller.log_.COLUMNS, controller.log_.rows())
    click.echo(f"saved actor.mlp and training_log.csv ({len(controller.log_)} episodes)")


@main.command(name="evaluate")
@config_opt
@out_opt
@set_opt
@seed_opt
@trials_opt
@steps_opt
@click.option("--policy", required=True,
              help="'lqr' or the path of a saved actor parameter file.")
def evaluate_cmd(config, out, overrides, seed, trials, steps, policy):
    """Evaluate a policy under the config's Monte-Carlo protocol."""
    cfg, out_dir = _prepare(config, out, overrides, seed)
    system, noise = cfg.build_system(), cfg.build_noise()
    loaded, name = _load_policy_arg(policy, cfg, system, noise)
    report = evaluate(system, noise, cfg.build_cost(), cfg.build_constraint(), loaded,
                      cfg.build_protocol(trials, steps), policy_name=name)
    _report_artifacts(out_dir, report)
    click.echo(f"jc={report.jc:.6g} cv_percent={report.cv_percent:.6g}")


@main.command()
@config_opt
@out_opt
@set_opt
@seed_opt
@trials_opt
@steps_opt
def mpc(config, out, overrides, seed, trials, steps):
    """Evaluate the scenario-MPC baseline."""
    cfg, out_dir = _prepare(config, out, overrides, seed)
    system, noise = cfg.build_system(), cfg.build_noise()
    controller = cfg.build_mpc().fit(system, noise)
    report = evaluate(system, noise, cfg.build_cost(), cfg.build_constraint(), controller,
                      cfg.build_protocol(trials, steps), policy_name="mpc")
    _report_artifacts(out_dir, report)
    click.echo(f"jc={report.jc:.6g} cv_percent={report.cv_percent:.6g}")


@main.command(name="bound-check")
@config_opt
@out_opt
@set_opt
@seed_opt
@click.option("--pairs", type=int, default=100, show_default=True,
              help="Number of random (x, u) pairs to audit.")
@click.option("--draws", type=int, default=100_000, show_default=True,
              help="Monte-Carlo draws per pair.")
@click.option("--scale", type=float, default=1.0, show_default=True,
              help="Std of the sampled states and inputs.")
def bound_check(config, out, overrides, seed, pairs, draws, scale):
    """Audit the analytic risk term against Monte-Carlo at random (x, u) pairs."""
    cfg, out_dir = _prepare(config, out, overrides, seed)
    system, noise = cfg.build_system(), cfg.build_noise()
    constraint = cfg.build_constraint()
    if constraint is None:
        fail("bound-check needs a constraint block in the config")
    rng = make_rng(cfg.seed)
    rows = []
    for _ in range(pairs):
        x = scale * rng.standard_normal(system.n)
        u = scale * rng.standard_normal(system.p)
        analytic = constraint_probability(system, noise, constraint, x, u)
        freq, stderr = mc_violation_estimate(system, noise, constraint, x, u, draws, rng)
        rows.append((*x, *u, analytic, freq, stderr))
    header = ([f"x{i + 1}" for i in range(system.n)]
              + [f"u{i + 1}" for i in range(system.p)]
              + ["analytic", "mc_estimate", "mc_stderr"])
    write_csv(out_dir / "bound_check.csv", header, rows)
    below = sum(1 for r in rows if r[-3] < r[-2] - 3 * r[-1])
    click.echo(f"wrote bound_check.csv ({pairs} pairs, {below} below MC-3se)")


@main.command(name="grid-search")
@config_opt
@out_opt
@set_opt
@seed_opt
@trials_opt
@steps_opt
@click.option("--grid", default="0,1,10,100,1000", show_default=True,
              help="Comma-separated ascending penalty values.")
@click.option("--method", type=click.Choice(["ddpg", "mpc", "lqr"]), default="ddpg",
              show_default=True, help="Controller the grid re-fits per value.")
def grid_search(config, out, overrides, seed, trials, steps, grid, method):
    """Sweep the risk multiplier and tabulate violation rate and cost."""
    cfg, out_dir = _prepare(config, out, overrides, seed)
    system, noise = cfg.build_system(), cfg.build_noise()
    constraint = cfg.build_constraint()
    if constraint is None:
        fail("grid-search needs a constraint block in the config")
    try:
        values = [float(tok) for tok in grid.split(",") if tok.strip() != ""]
    except ValueError:
        fail(f"unparseable grid: {grid}")
    controller = {"ddpg": cfg.build_ddpg, "mpc": cfg.build_mpc, "lqr": cfg.build_lqr}[method]()
    result = grid_search_penalty(controller, system, noise, constraint,
                                 cfg.build_protocol(trials, steps), values)
    write_csv(out_dir / "grid.csv", ("penalty", "delta_hat", "jc"), result.rows())
    if result.feasible:
        click.echo(f"selected penalty {result.selected:g} "
                   f"(target delta {constraint.delta:g})")
    else:
        click.echo("infeasible-at-grid: no penalty met the target delta")


@main.command()
@config_opt
@out_opt
@set_opt
@seed_opt
@click.option("--policy", required=True, help="'lqr' or a saved actor parameter file.")
@click.option("--component", type=int, default=0, show_default=True,
              help="Zero-based state component to sweep.")
@click.option("--lo", type=float, default=-10.0, show_default=True)
@click.option("--hi", type=float, default=10.0, show_default=True)
@click.option("--points", type=int, default=201, show_default=True)
def sweep(config, out, overrides, seed, policy, component, lo, hi, points):
    """Emit (state component, first input) rows for a policy."""
    cfg, out_dir = _prepare(config, out, overrides, seed)
    system, noise = cfg.build_system(), cfg.build_noise()
    loaded, _ = _load_policy_arg(policy, cfg, system, noise)
    rows = state_input_sweep(loaded, component, lo, hi, points, system.n)
    write_csv(out_dir / "sweep.csv", ("x", "u1"), rows)
    click.echo(f"wrote sweep.csv ({points} rows)")


REPRO_ROWS = {
    "table1-case1.2": {
        "config": "second_order",
        "overrides": (),
        "methods": ("known_model", "unknown_model", "lqr"),
    },
    "table2-case2.1": {
        "config": "uav",
        "overrides": (),
        "methods": ("known_model", "unknown_model", "lqr", "mpc"),
    },
    "table2-case2.2": {
        "config": "uav",
        "overrides": (
            "constraint.kind=linear",
            "constraint.q=[1.0, 0.1, 2.0, 0.2]",
            "constraint.threshold=5.0",
            "cost.penalty=10.0",
            "mpc.penalty=4.0",
        ),
        "methods": ("known_model", "unknown_model", "lqr", "mpc"),
    },
}


@main.command()
@click.argument("row")
@out_opt
@set_opt
@seed_opt
@trials_opt
@steps_opt
def repro(row, out, overrides, seed, trials, steps):
    """Run one named benchmark row end-to-end and write the comparison table.

    ROW is one of: Table1-Case1.2, Table2-Case2.1, Table2-Case2.2.
    """
    key = row.lower()
    if key not in REPRO_ROWS:
        fail(f"unknown row '{row}'; expected one of {', '.join(sorted(REPRO_ROWS))}")
    spec_row = REPRO_ROWS[key]
    all_overrides = list(spec_row["overrides"]) + list(overrides)
    cfg, out_dir = _prepare(spec_row["config"], out, all_overrides, seed)
    system, noise = cfg.build_system(), cfg.build_noise()
    constraint = cfg.build_constraint()
    cost = cfg.build_cost()
    protocol = cfg.build_protocol(trials, steps)

    results = []
    for method in spec_row["methods"]:
        if method in ("known_model", "unknown_model"):
            controller = cfg.build_ddpg(reward_mode=method).fit(system, noise)
            save_mlp(out_dir / f"actor_{method}.mlp", controller.actor_)
            write_csv(out_dir / f"training_log_{method}.csv",
                      controller.log_.COLUMNS, controller.log_.rows())
        elif method == "lqr":
            controller = cfg.build_lqr().fit(system, noise)
        else:
            controller = cfg.build_mpc().fit(system, noise)
        report = evaluate(system, noise, cost, constraint, controller, protocol,
                          policy_name=method)
        results.append((method, report.jc, report.cv_percent))
        click.echo(f"{method}: jc={report.jc:.6g} cv_percent={report.cv_percent:.6g}")
    write_csv(out_dir / "comparison.csv", ("method", "jc", "cv_percent"), results)


@main.command()
@click.option("--config", required=True, help="Config file path or shipped name.")
@set_opt
def validate(config, overrides):
    """Check a config; list every violated invariant with its field path."""
    config_path = Path(config)
    if not config_path.exists():
        try:
            config_path = shipped_config_path(config)
        except (FileNotFoundError, ModuleNotFoundError):
            fail(f"config not found: {config}")
    try:
        violations = validate_config(config_path, list(overrides))
    except ConfigError as exc:
        violations = exc.violations
    if violations:
        for item in violations:
            click.echo(f"error: {item}", err=True)
        sys.exit(1)
    click.echo("config ok")


if __name__ == "__main__":
    main()
