"""Command-line interface.

Subcommands mirror the library pipeline: ``deficiency`` and ``minimax`` solve
single LPs with certificates, ``couple`` builds one explicit kernel with its
bound, ``converge`` runs the staged certification, ``lam-check`` the minimax
transfer comparison, and ``scenario`` the full configured pipeline.

Exit codes: 0 when all checks pass, 2 when a certified bound or inequality
fails, 1 for usage or input errors.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .convergence import certify_convergence
from .core import experiment_from_dict, load_experiment
from .coupling import (
    LabeledSpace,
    build_partition,
    canonicalize,
    certify_bound,
    construct_kernel,
)
from .deficiency import MODES, PAPER_MIN, deficiency
from .errors import (
    CertificationError,
    ConditionError,
    LeCamError,
    ScenarioError,
    SolverError,
    ValidationError,
)
from .minimax import lam_transfer_check, loss_from_dict, minimax_value
from .scenarios import (
    BINOMIAL_LAN,
    DEFAULT_ACTIONS,
    DEFAULT_GRID,
    DEFAULT_R_PRIME_FRAC,
    DEFAULT_STEP,
    DEFAULT_TRUNCATION,
    SCENARIOS,
    ScenarioConfig,
    binomial_lan_sequence,
    constant_sequence,
    gen_gaussian_shift,
    load_config,
    run_scenario,
    write_csv_tables,
)


def _parse_label(token: str):
    token = token.strip()
    for kind in (int, float):
        try:
            return kind(token)
        except ValueError:
            continue
    return token


def _parse_labels(text: str | None):
    if text is None:
        return None
    return tuple(_parse_label(tok) for tok in text.split(",") if tok.strip())


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _parse_ints(text: str) -> tuple:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _parse_schedule(text: str):
    if text == "default":
        return None
    pairs = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        parts = [float(tok) for tok in chunk.split(",")]
        if len(parts) != 2:
            raise ValidationError(f"schedule chunk {chunk!r} is not 'delta,epsilon'")
        pairs.append((parts[0], parts[1]))
    return pairs


def _write_json(data: dict, out: str | None) -> None:
    text = json.dumps(data, sort_keys=True, indent=2) + "\n"
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _load_side(path: str) -> LabeledSpace:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    weights = data.pop("weights", None)
    exp = experiment_from_dict(data)
    return LabeledSpace.from_experiment(exp, weights=weights)


def _kernel_json(kernel) -> list:
    return [[float(x) for x in row] for row in kernel.matrix]


@click.group()
def cli():
    """Compare finite statistical experiments with certified numerics."""


@cli.command("deficiency")
@click.option("--source", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--target", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--subset", default=None, help="Comma-separated parameter labels.")
@click.option("--mode", default=PAPER_MIN, type=click.Choice(MODES))
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def deficiency_cmd(source, target, subset, mode, out):
    """Directed deficiencies, the combined distance, and dual certificates."""
    src = load_experiment(source)
    tgt = load_experiment(target)
    labels = _parse_labels(subset)
    forward = deficiency(src, tgt, labels)
    backward = deficiency(tgt, src, labels)

    def block(res):
        cert = res.dual_certificate
        return {
            "value": res.value,
            "kernel": _kernel_json(res.kernel),
            "residuals": [float(x) for x in res.residuals],
            "dual_certificate": {
                "prior": [float(x) for x in cert.prior],
                "witness": [[float(x) for x in row] for row in cert.witness],
                "value": cert.value,
                "gap": cert.gap,
            },
        }

    value = min(forward.value, backward.value) if mode == PAPER_MIN else max(
        forward.value, backward.value
    )
    _write_json(
        {
            "mode": mode,
            "subset": list(forward.subset),
            "value": value,
            "directed": {
                "source_to_target": block(forward),
                "target_to_source": block(backward),
            },
        },
        out,
    )
    return 0


@cli.command("couple")
@click.option("--p-side", "p_side", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--q-side", "q_side", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--delta", required=True, type=float)
@click.option("--epsilon", required=True, type=float)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def couple_cmd(p_side, q_side, delta, epsilon, out):
    """Build the explicit kernel from the q side to the p side and certify it."""
    p_space = _load_side(p_side)
    q_space = canonicalize(_load_side(q_side))
    q_dist = q_space.law()
    partition = build_partition(q_dist, q_space.component_laws(), delta, epsilon)
    try:
        kernel, _ = construct_kernel(p_space, q_dist, partition, epsilon)
        cert = certify_bound(p_space, q_space, kernel, partition, delta, epsilon)
    except ConditionError as exc:
        _write_json(
            {
                "ok": False,
                "error": "mass condition failed",
                "cell": list(exc.cell) if exc.cell is not None else None,
                "detail": str(exc),
            },
            out,
        )
        return 2
    _write_json(
        {
            "ok": True,
            "delta": cert.delta,
            "epsilon": cert.epsilon,
            "bound": cert.bound,
            "achieved": cert.achieved,
            "kernel": _kernel_json(cert.kernel),
            "mu": None if cert.mu is None else [float(x) for x in cert.mu],
            "coupling_l1": list(cert.coupling_l1),
            "remainder_masses": list(cert.remainder_masses),
            "cells": [
                {
                    "key": list(c.key),
                    "p_mass": c.p_mass,
                    "q_mass": c.q_mass,
                    "satisfied": c.satisfied,
                }
                for c in cert.condition.cells
            ],
        },
        out,
    )
    return 0


def _scenario_pieces(scenario, subset, grid, step):
    t_grid = subset if subset is not None else (-1.0, 0.0, 1.0)
    limit = gen_gaussian_shift(t_grid, grid, step)
    if scenario == BINOMIAL_LAN:
        seq = binomial_lan_sequence(t_grid)
    else:
        seq = constant_sequence(limit.experiment)
    return limit, seq


@cli.command("converge")
@click.option("--scenario", default=BINOMIAL_LAN, type=click.Choice(SCENARIOS))
@click.option("--subset", default="-1,0,1", help="Comma-separated local parameters.")
@click.option("--schedule", default="default", help="'default' or 'd1,e1;d2,e2;...'.")
@click.option("--probe", default="8,16,32,64,128,256", help="Comma-separated indices.")
@click.option("--grid", default=f"{DEFAULT_GRID[0]},{DEFAULT_GRID[1]}")
@click.option("--step", default=DEFAULT_STEP, type=float)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def converge_cmd(scenario, subset, schedule, probe, grid, step, out):
    """Certify convergence of a scenario sequence to its discretized limit."""
    t_grid = _parse_floats(subset)
    limit, seq = _scenario_pieces(scenario, t_grid, _parse_floats(grid), step)
    space = LabeledSpace.from_experiment(limit.experiment)
    report = certify_convergence(seq, space, _parse_schedule(schedule), _parse_ints(probe))
    _write_json(report.to_json_dict(), out)
    return 0 if report.certified_entries() else 2


@cli.command("minimax")
@click.option("--exp", "exp_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--loss", "loss_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--subset", default=None, help="Comma-separated parameter labels.")
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def minimax_cmd(exp_path, loss_path, subset, out):
    """Minimax truncated risk with the least-favorable prior."""
    exp = load_experiment(exp_path)
    labels = _parse_labels(subset)
    with open(loss_path, "r", encoding="utf-8") as fh:
        loss = loss_from_dict(json.load(fh), params=labels or exp.params)
    game = minimax_value(exp, loss, labels)
    from .minimax import risk

    _write_json(
        {
            "value": game.value,
            "gap": game.gap,
            "subset": list(game.subset),
            "actions": list(loss.actions),
            "least_favorable_prior": [float(x) for x in game.prior],
            "decision": _kernel_json(game.decision),
            "risks": {str(t): risk(exp, game.decision, loss, t) for t in game.subset},
        },
        out,
    )
    return 0


@cli.command("lam-check")
@click.option("--scenario", default=BINOMIAL_LAN, type=click.Choice(SCENARIOS))
@click.option("--subset", default="-1,0,1")
@click.option("--probe", default="8,16,32,64,128,256")
@click.option("--grid", default=f"{DEFAULT_GRID[0]},{DEFAULT_GRID[1]}")
@click.option("--step", default=DEFAULT_STEP, type=float)
@click.option("--schedule", default="default")
@click.option("--actions", default=None, help="Comma-separated action grid.")
@click.option("--truncation", default=DEFAULT_TRUNCATION, type=float)
@click.option(
    "--rprime",
    default=DEFAULT_R_PRIME_FRAC,
    type=float,
    help="Target level as a fraction of the limit minimax value.",
)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def lam_check_cmd(scenario, subset, probe, grid, step, schedule, actions, truncation, rprime, out):
    """Check the local asymptotic minimax transfer bound along certified kernels."""
    from .minimax import LossSpec

    t_grid = _parse_floats(subset)
    limit, seq = _scenario_pieces(scenario, t_grid, _parse_floats(grid), step)
    space = LabeledSpace.from_experiment(limit.experiment)
    conv = certify_convergence(seq, space, _parse_schedule(schedule), _parse_ints(probe))
    if not conv.certified_entries():
        _write_json({"ok": False, "error": "no certified kernels within the probe budget"}, out)
        return 2
    action_grid = _parse_floats(actions) if actions else DEFAULT_ACTIONS
    loss = LossSpec.squared_error(limit.experiment.params, action_grid, truncation)
    game = minimax_value(limit.experiment, loss)
    report = lam_transfer_check(
        seq, limit.experiment, loss, rprime * game.value, conv
    )
    data = report.to_json_dict()
    data["ok"] = all(r.bound_ok for r in report.rows) and (
        report.crossing_n is not None if report.promised else True
    )
    _write_json(data, out)
    return 0 if data["ok"] else 2


@cli.command("scenario")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.option("--csv", "csv_prefix", default=None, type=click.Path())
def scenario_cmd(config_path, out, csv_prefix):
    """Run the configured end-to-end pipeline and emit the full report."""
    config = ScenarioConfig() if config_path is None else load_config(config_path)
    report = run_scenario(config)
    if out is None:
        click.echo(report.json_text(), nl=False)
    else:
        Path(out).write_text(report.json_text(), encoding="utf-8")
    if csv_prefix is not None:
        write_csv_tables(report, csv_prefix)
    return 0 if report.ok else 2


def main(argv=None) -> int:
    """Dispatch with the documented exit codes."""
    try:
        rc = cli.main(args=argv, standalone_mode=False)
        return rc if isinstance(rc, int) else 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except (CertificationError, SolverError) as exc:
        click.echo(f"check failed: {exc}", err=True)
        return 2
    except ConditionError as exc:
        click.echo(f"check failed: {exc}", err=True)
        return 2
    except (OSError, json.JSONDecodeError, LeCamError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
