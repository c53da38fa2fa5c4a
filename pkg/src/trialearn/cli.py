"""Command-line front end: simulate | analyze | verify | traffic.

Every subcommand writes its artifacts into one output directory next to
a `manifest.json` holding the resolved configuration, input
fingerprints, seeds, and output names, so a finished directory is
self-describing and any run can be repeated byte-identically by feeding
the manifest back through `--config`.

Exit codes: 0 success, 1 validation error (bad paths, formats, or
parameters), 2 verification failure (a structural check did not hold).
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .chain import build_state_graph, resistance_edge_lines, verify_structure
from .chain.report import analysis_report
from .chain.verify import FIT_CHECK_GRID
from .errors import ConfigError, TrialearnError, VerificationError
from .games import Game, RandomGameSpec, load_game, random_game
from .learner import LearnerConfig, config_from_dict, run
from .traffic import (
    MeteringGains,
    build_traffic_game,
    calibrate,
    evaluate_profile,
    load_demands,
    load_freeway,
    simulate_profile,
)

OUT_ROOT_ENV = "TRIALEARN_OUT"
DEFAULT_OUT_ROOT = "trialearn-runs"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_VERIFICATION = 2

# Random-instance shapes cycled by `verify --batch`; small enough that
# the whole chain pipeline stays interactive per game.
BATCH_SHAPES = (
    ((2, 2), 1),
    ((2, 2), 2),
    ((2, 3), 2),
    ((3, 2), 1),
    ((3, 3), 2),
    ((2, 2, 2), 2),
)


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _out_dir(out: str | None, subcommand: str, tag: str) -> Path:
    """Explicit --out wins; otherwise a deterministic name under the root.

    The default root comes from $TRIALEARN_OUT so batch callers can
    redirect every run without touching each invocation.
    """
    if out is not None:
        d = Path(out)
    else:
        root = Path(os.environ.get(OUT_ROOT_ENV, DEFAULT_OUT_ROOT))
        d = root / f"{subcommand}-{tag}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _dump_json(doc: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_manifest(
    out: Path,
    subcommand: str,
    config: dict,
    inputs: dict[str, str],
    seeds: list[int],
    outputs: list[str],
) -> None:
    _dump_json(
        {
            "subcommand": subcommand,
            "tool_version": __version__,
            "config": config,
            "inputs": {
                name: {"path": path, "sha256": _sha256(Path(path))}
                for name, path in inputs.items()
            },
            "seeds": seeds,
            "outputs": outputs,
        },
        out / "manifest.json",
    )


def _read_config_doc(config_path: str) -> dict:
    p = Path(config_path)
    try:
        doc = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: config must be a JSON object")
    if "subcommand" in doc and isinstance(doc.get("config"), dict):
        doc = doc["config"]  # a manifest reruns as its own config
    return doc


def _resolve_game_path(game: str | None, doc: dict, config_path: str | None) -> str:
    """--game beats the config's `game`, which is config-file-relative."""
    if game is not None:
        return game
    rel = doc.get("game")
    if not isinstance(rel, str) or not rel:
        raise ConfigError("no game given: pass --game or a config with a `game` key")
    base = Path(config_path).parent if config_path else Path(".")
    return str(base / rel)


def _learner_config_from_doc(
    doc: dict,
    origin: str,
    seed_override: int | None,
    rho_override: float | None,
) -> LearnerConfig:
    _, cfg = config_from_dict(doc, origin=origin)
    if rho_override is not None:
        cfg = replace(cfg, rho=rho_override)
    if seed_override is not None:
        cfg = replace(cfg, seed=seed_override)
    return cfg


def _config_echo(game_path: str, cfg: LearnerConfig) -> dict:
    """Run-config document mirroring the resolved parameters."""
    return {
        "game": game_path,
        "epsilon": {"initial": cfg.epsilon_initial, "decay": cfg.epsilon_decay},
        "c": cfg.c,
        "rho": "auto" if cfg.rho is None else cfg.rho,
        "beta": cfg.beta,
        "iterations": cfg.iterations,
        "seed": cfg.seed,
    }


def _parse_eps_grid(text: str | None) -> tuple[float, ...] | None:
    if text is None:
        return None
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"bad --eps-grid: {exc}") from exc
    if not values or any(not 0.0 < v < 1.0 for v in values):
        raise ConfigError("--eps-grid needs comma-separated values in (0,1)")
    return values


@click.group()
@click.version_option(__version__, prog_name="trialearn")
def main() -> None:
    """Trial-and-error learning runs and exact chain analysis."""


@main.command()
@click.option("--game", type=str, default=None, help="Game document (JSON).")
@click.option("--config", "config_path", type=str, default=None, help="Run config (JSON) or a previous manifest.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=str, default=None, help="Output directory.")
@click.option("--threshold", type=float, default=0.0001, show_default=True, help="Histogram fraction cutoff.")
@click.option("--unverified-rho", type=float, default=None, help="Force a tolerance, waiving the verified-mode guarantees.")
def simulate(
    game: str | None,
    config_path: str | None,
    seed: int | None,
    out: str | None,
    threshold: float,
    unverified_rho: float | None,
) -> None:
    """Run the learner and export histogram CSV plus a JSON summary."""
    try:
        doc = _read_config_doc(config_path) if config_path else {}
        if not config_path:
            raise ConfigError("simulate needs --config")
        game_path = _resolve_game_path(game, doc, config_path)
        cfg = _learner_config_from_doc(doc, config_path, seed, unverified_rho)
        g = load_game(game_path)
        traj = run(g, cfg)
    except VerificationError as exc:
        _fail(str(exc), EXIT_VERIFICATION)
    except (TrialearnError, OSError) as exc:
        _fail(str(exc), EXIT_VALIDATION)

    d = _out_dir(out, "simulate", f"{_sha256(Path(game_path))[:12]}-s{cfg.seed}")
    with open(d / "histogram.csv", "w", encoding="utf-8") as fh:
        traj.to_histogram_csv(fh, threshold=threshold)
    summary = traj.summary_dict()
    _dump_json(summary, d / "summary.json")
    config_doc = _config_echo(game_path, cfg)
    config_doc["threshold"] = threshold
    _write_manifest(
        d,
        "simulate",
        config_doc,
        {"game": game_path},
        [cfg.seed],
        ["histogram.csv", "summary.json"],
    )
    for w in traj.warnings:
        click.echo(f"warning: {w}", err=True)
    modal = summary["modal_state"]
    click.echo(f"iterations {traj.iterations}, average welfare {traj.average_welfare:.17g}")
    if modal is not None:
        click.echo(f"modal state {modal} (fraction {summary['modal_fraction']:.17g})")
    click.echo(f"wrote {d}")


def _run_structure(
    game_path: str,
    doc: dict,
    unverified_rho: float | None,
    eps_grid: tuple[float, ...] | None,
) -> tuple["Game", object]:
    g = load_game(game_path)
    c = float(doc.get("c", g.n_agents + 1))
    rho = doc.get("rho", "auto")
    rho_val = None if rho == "auto" else float(rho)
    if unverified_rho is not None:
        rho_val = unverified_rho
    beta = doc.get("beta")
    beta_val = None if beta is None else float(beta)
    grid = eps_grid if eps_grid is not None else FIT_CHECK_GRID
    report = verify_structure(g, c, rho=rho_val, beta=beta_val, fit_grid=grid)
    return g, report


@main.command()
@click.option("--game", type=str, default=None, help="Game document (JSON).")
@click.option("--config", "config_path", type=str, default=None, help="Run config supplying c / rho / beta.")
@click.option("--out", type=str, default=None, help="Output directory.")
@click.option("--eps-grid", type=str, default=None, help="Comma-separated ε values for the numeric fit cross-check.")
@click.option("--unverified-rho", type=float, default=None, help="Force a tolerance, waiving the verified-mode guarantees.")
@click.option("--edges", is_flag=True, help="Also export the resistance edge list (src,dst,resistance).")
def analyze(
    game: str | None,
    config_path: str | None,
    out: str | None,
    eps_grid: str | None,
    unverified_rho: float | None,
    edges: bool,
) -> None:
    """Exact chain analysis: classes, resistances, potentials, stable set."""
    try:
        doc = _read_config_doc(config_path) if config_path else {}
        game_path = _resolve_game_path(game, doc, config_path)
        grid = _parse_eps_grid(eps_grid)
        g, report = _run_structure(game_path, doc, unverified_rho, grid)
    except VerificationError as exc:
        _fail(str(exc), EXIT_VERIFICATION)
    except (TrialearnError, OSError) as exc:
        _fail(str(exc), EXIT_VALIDATION)

    out_doc = analysis_report(report)
    d = _out_dir(out, "analyze", _sha256(Path(game_path))[:12])
    _dump_json(out_doc, d / "analysis_report.json")
    outputs = ["analysis_report.json"]
    if edges:
        graph = build_state_graph(report.space)
        with open(d / "edges.csv", "w", encoding="utf-8") as fh:
            fh.write("src,dst,resistance\n")
            for line in resistance_edge_lines(graph):
                fh.write(line + "\n")
        outputs.append("edges.csv")
    config_doc = {
        "game": game_path,
        "c": report.c,
        "rho": "auto" if report.verified else report.rho,
        "beta": report.beta,
        "eps_grid": list(report.extras["fit_grid"]),
    }
    _write_manifest(d, "analyze", config_doc, {"game": game_path}, [], outputs)
    click.echo(f"states {len(report.space)}, stable {out_doc['stable_states']}")
    click.echo(f"wrote {d}")
    if not report.passed:
        _fail(f"structural checks failed: {report.failures()}", EXIT_VERIFICATION)


@main.command()
@click.option("--game", type=str, default=None, help="Game document (JSON); omit with --batch.")
@click.option("--config", "config_path", type=str, default=None, help="Run config supplying c / rho / beta.")
@click.option("--seed", type=int, default=0, show_default=True, help="Base seed for --batch instances.")
@click.option("--out", type=str, default=None, help="Output directory.")
@click.option("--eps-grid", type=str, default=None, help="Comma-separated ε values for the numeric fit cross-check.")
@click.option("--unverified-rho", type=float, default=None, help="Force a tolerance, waiving the verified-mode guarantees.")
@click.option("--batch", type=int, default=0, help="Verify this many random interdependent games instead of --game.")
def verify(
    game: str | None,
    config_path: str | None,
    seed: int,
    out: str | None,
    eps_grid: str | None,
    unverified_rho: float | None,
    batch: int,
) -> None:
    """Run every structural check and print the pass/fail matrix."""
    try:
        grid = _parse_eps_grid(eps_grid)
        if batch > 0:
            _verify_batch(batch, seed, out, grid)
            return
        if game is None and config_path is None:
            raise ConfigError("verify needs --game, --config, or --batch")
        doc = _read_config_doc(config_path) if config_path else {}
        game_path = _resolve_game_path(game, doc, config_path)
        g, report = _run_structure(game_path, doc, unverified_rho, grid)
    except VerificationError as exc:
        _fail(str(exc), EXIT_VERIFICATION)
    except (TrialearnError, OSError) as exc:
        _fail(str(exc), EXIT_VALIDATION)

    for name, ok in report.checks.items():
        click.echo(f"{'PASS' if ok else 'FAIL'}  {name}")
    d = _out_dir(out, "verify", _sha256(Path(game_path))[:12])
    _dump_json(
        {
            "verified_mode": report.verified,
            "checks": dict(report.checks),
            "passed": report.passed,
        },
        d / "verify_report.json",
    )
    config_doc = {
        "game": game_path,
        "c": report.c,
        "rho": "auto" if report.verified else report.rho,
        "beta": report.beta,
        "eps_grid": list(report.extras["fit_grid"]),
    }
    _write_manifest(d, "verify", config_doc, {"game": game_path}, [], ["verify_report.json"])
    click.echo(f"wrote {d}")
    if not report.passed:
        _fail(f"structural checks failed: {report.failures()}", EXIT_VERIFICATION)


def _verify_batch(batch: int, seed: int, out: str | None, grid: tuple[float, ...] | None) -> None:
    results = []
    for k in range(batch):
        action_counts, n_w = BATCH_SHAPES[k % len(BATCH_SHAPES)]
        g = random_game(RandomGameSpec(action_counts, n_disturbances=n_w), seed + k)
        report = verify_structure(
            g, c=g.n_agents + 1, fit_grid=grid if grid is not None else FIT_CHECK_GRID
        )
        results.append(
            {
                "seed": seed + k,
                "action_counts": list(action_counts),
                "n_disturbances": n_w,
                "passed": report.passed,
                "failures": report.failures(),
            }
        )
        click.echo(
            f"{'PASS' if report.passed else 'FAIL'}  seed {seed + k} "
            f"shape {action_counts} |W|={n_w}"
        )
    n_pass = sum(1 for r in results if r["passed"])
    click.echo(f"pass rate {n_pass}/{batch} ({n_pass / batch:.17g})")
    d = _out_dir(out, "verify", f"batch{batch}-s{seed}")
    _dump_json({"results": results, "pass_rate": n_pass / batch}, d / "batch_report.json")
    _write_manifest(
        d,
        "verify",
        {"batch": batch, "seed": seed},
        {},
        [seed + k for k in range(batch)],
        ["batch_report.json"],
    )
    click.echo(f"wrote {d}")
    if n_pass != batch:
        _fail(f"{batch - n_pass} of {batch} random games failed", EXIT_VERIFICATION)


@main.command()
@click.option("--freeway", required=True, type=str, help="Freeway document (JSON).")
@click.option("--demands", "demands_path", required=True, type=str, help="Demand-day document (JSON).")
@click.option("--config", "config_path", type=str, default=None, help="Run config for the learner stage.")
@click.option("--seed", type=int, default=None, help="Override the learner seed.")
@click.option("--out", type=str, default=None, help="Output directory.")
@click.option("--skip-learning", is_flag=True, help="Only tabulate and cache the game.")
def traffic(
    freeway: str,
    demands_path: str,
    config_path: str | None,
    seed: int | None,
    out: str | None,
    skip_learning: bool,
) -> None:
    """Tabulate the ramp-metering game, cache it, and learn a profile.

    The summary compares the learned profile's expected welfare and
    travel cost against the all-LOC profile and against no metering,
    with the saving quoted as a percentage of the no-metering cost.
    """
    try:
        spec = load_freeway(freeway)
        days = load_demands(demands_path)
        gains = MeteringGains()
        d = _out_dir(out, "traffic", f"{_sha256(Path(freeway))[:12]}")
        cache = d / "game.json"
        cal = calibrate(spec, days, gains)
        game = build_traffic_game(spec, days, gains, calibration=cal, cache=cache)
        if config_path:
            doc = _read_config_doc(config_path)
            cfg = _learner_config_from_doc(doc, config_path, seed, None)
        else:
            # reference scenario values: eps 1e-4, c = ramp count,
            # mood broadcast on, tolerance sized to the day-to-day swing
            cfg = LearnerConfig(
                epsilon_initial=1e-4,
                c=float(game.n_agents),
                iterations=1000,
                seed=0 if seed is None else seed,
                rho=0.6,
                beta=5e-5,
            )
        outputs = ["game.json", "summary.json"]
        summary: dict[str, object] = {
            "n_ramps": game.n_agents,
            "days": list(game.disturbances),
        }
        if skip_learning:
            learned = None
        else:
            traj = run(game, cfg)
            acts = traj.states[:, 0::3]
            rows, counts = np.unique(acts, axis=0, return_counts=True)
            learned = tuple(int(a) for a in rows[counts.argmax()])
            summary["learned_profile"] = [game.actions[i][a] for i, a in enumerate(learned)]
            summary["learned_profile_fraction"] = float(counts.max() / acts.shape[0])

        probs = np.asarray(game.disturbance_probs)

        def game_welfare(profile: tuple[int, ...]) -> float:
            p = sum(a * s for a, s in zip(profile, game.strides))
            return float(game.utilities[:, p, :].sum(axis=0) @ probs)

        def expected_cost(profile: tuple[int, ...] | None) -> float:
            costs = [simulate_profile(spec, day, profile, gains).total_cost for day in days]
            return float(np.asarray(costs) @ probs)

        all_loc = tuple(0 for _ in range(game.n_agents))
        none_welfare = float(
            sum(
                float(np.sum(evaluate_profile(spec, day, None, cal, gains))) * p
                for day, p in zip(days, probs)
            )
        )
        summary["welfare"] = {
            "all_loc": game_welfare(all_loc),
            "no_metering": none_welfare,
        }
        summary["expected_cost"] = {
            "all_loc": expected_cost(all_loc),
            "no_metering": expected_cost(None),
        }
        if learned is not None:
            summary["welfare"]["learned"] = game_welfare(learned)
            summary["expected_cost"]["learned"] = expected_cost(learned)
            base = summary["expected_cost"]["no_metering"]
            saving = 100.0 * (base - summary["expected_cost"]["learned"]) / base
            summary["saving_vs_no_metering_pct"] = saving
    except VerificationError as exc:
        _fail(str(exc), EXIT_VERIFICATION)
    except (TrialearnError, OSError) as exc:
        _fail(str(exc), EXIT_VALIDATION)

    _dump_json(summary, d / "summary.json")
    config_doc = _config_echo("game.json", cfg)
    config_doc["freeway"] = freeway
    config_doc["demands"] = demands_path
    _write_manifest(
        d,
        "traffic",
        config_doc,
        {"freeway": freeway, "demands": demands_path},
        [] if skip_learning else [cfg.seed],
        outputs,
    )
    w = summary.get("welfare", {})
    if learned is not None:
        click.echo(
            f"learned {''.join(s[0] for s in summary['learned_profile'])} "
            f"welfare {w['learned']:.6f} vs all-LOC {w['all_loc']:.6f} "
            f"vs none {w['no_metering']:.6f}"
        )
        click.echo(f"cost saving vs no metering: {summary['saving_vs_no_metering_pct']:.2f}%")
    click.echo(f"wrote {d}")


if __name__ == "__main__":
    main()
