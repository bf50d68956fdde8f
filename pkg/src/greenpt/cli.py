"""Batch front-end: run the solvers described by a JSON config and write comparison reports.

Usage::

    greenpt --config run.json [--report out.csv] [--seed N] [--quiet]

Outputs, next to the CSV report ``out.csv``:

* ``out.summary.txt``: per-solver status and messages;
* ``out.states.json``: the state vector behind every CSV row, so each row's
  residual can be recomputed.

Exit status: 0 when every requested solver converged, 2 when some solver did
not converge or failed a precondition, 1 on configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import operators as ops
from .errors import ConfigError, GreenPTError, PreconditionError
from .models import ModelSpec, build_model
from .oracle import exact_states
from .pt import (MAX_SERIES_ORDER, PTProblem, degenerate_solve, effective_kernel, energy_fixed_point,
                 flag_ambiguity, pt_expand, residual_norm, sakurai_solve)
from .rspt import Spectrum, rspt_series
from .unperturbed import pole_decomposition, select_level, solve_unperturbed

log = logging.getLogger(__name__)

SOLVERS = ("fixed_point", "series", "sakurai", "degenerate", "rspt", "oracle")
COLUMNS = ("solver", "level", "order_or_iter", "energy", "residual", "overlap_with_phi",
           "oracle_delta", "converged")
TOP_KEYS = {"problem", "level", "window", "solvers", "order", "tol", "max_iter", "damping",
            "lambda_sweep", "report_path"}
REQUIRED = ("problem", "level", "window", "solvers")


@dataclass
class RunConfig:
    problem: dict
    level: int
    window: tuple
    solvers: tuple
    order: int = 2
    tol: float = 1e-10
    max_iter: int = 200
    damping: float = 1.0
    lambda_sweep: Optional[tuple] = None
    report_path: str = "report.csv"


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def _reject_constant(name):
    raise ConfigError(f"non-finite number {name} is not allowed")


def _number(value, where, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: non-finite number")
    return value


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(obj) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def _validate_problem(problem):
    if not isinstance(problem, dict):
        raise ConfigError("problem: expected an object")
    if "model" in problem:
        _check_keys(problem, {"model", "params", "seed"}, "problem")
        if not isinstance(problem["model"], str):
            raise ConfigError("problem.model: expected a string")
        if not isinstance(problem.get("params", {}), dict):
            raise ConfigError("problem.params: expected an object")
        seed = problem.get("seed")
        if seed is not None:
            _number(seed, "problem.seed", integer=True)
            if not 0 <= seed < 2**64:
                raise ConfigError("problem.seed: must be an unsigned 64-bit integer")
        build_model(ModelSpec(problem["model"], problem.get("params", {}), seed))
    elif "operators" in problem:
        _check_keys(problem, {"operators"}, "problem")
        descs = problem["operators"]
        _check_keys(descs, {"g0inv", "k0", "k1", "g1inv"}, "problem.operators")
        for key in ("g0inv", "k0", "k1"):
            if key not in descs:
                raise ConfigError(f"problem.operators.{key}: missing")
        try:
            built = {k: ops.make_operator(d) for k, d in descs.items()}
        except GreenPTError as exc:
            raise ConfigError(f"problem.operators: {exc}") from None
        if len({op.dim for op in built.values()}) != 1:
            raise ConfigError("problem.operators: dimension mismatch")
    else:
        raise ConfigError("problem: needs either 'model' or 'operators'")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration (unknown keys are rejected)."""
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    _check_keys(doc, TOP_KEYS, "config")
    for key in REQUIRED:
        if key not in doc:
            raise ConfigError(f"config.{key}: missing")
    _validate_problem(doc["problem"])

    level = _number(doc["level"], "config.level", integer=True)
    if level < 0:
        raise ConfigError("config.level: must be >= 0")
    window = doc["window"]
    if not isinstance(window, list) or len(window) != 2:
        raise ConfigError("config.window: expected [lo, hi]")
    lo, hi = (_number(x, "config.window") for x in window)
    if not lo < hi:
        raise ConfigError("config.window: empty interval")
    solvers = doc["solvers"]
    if not isinstance(solvers, list) or not solvers:
        raise ConfigError("config.solvers: expected a non-empty list")
    for s in solvers:
        if s not in SOLVERS:
            raise ConfigError(f"config.solvers: unknown solver {s!r}; choose from {list(SOLVERS)}")
    if len(set(solvers)) != len(solvers):
        raise ConfigError("config.solvers: duplicates")

    cfg = RunConfig(doc["problem"], level, (lo, hi), tuple(solvers))
    if "order" in doc:
        cfg.order = _number(doc["order"], "config.order", integer=True)
        if not 0 <= cfg.order <= MAX_SERIES_ORDER:
            raise ConfigError(f"config.order: must lie in [0, {MAX_SERIES_ORDER}]")
    if "tol" in doc:
        cfg.tol = float(_number(doc["tol"], "config.tol"))
        if cfg.tol <= 0:
            raise ConfigError("config.tol: must be > 0")
    if "max_iter" in doc:
        cfg.max_iter = _number(doc["max_iter"], "config.max_iter", integer=True)
        if cfg.max_iter < 1:
            raise ConfigError("config.max_iter: must be >= 1")
    if "damping" in doc:
        cfg.damping = float(_number(doc["damping"], "config.damping"))
        if not 0 < cfg.damping <= 1:
            raise ConfigError("config.damping: must lie in (0, 1]")
    if doc.get("lambda_sweep") is not None:
        sweep = doc["lambda_sweep"]
        if not isinstance(sweep, list) or not sweep:
            raise ConfigError("config.lambda_sweep: expected a non-empty list")
        cfg.lambda_sweep = tuple(float(_number(x, "config.lambda_sweep")) for x in sweep)
    if "report_path" in doc:
        if not isinstance(doc["report_path"], str) or not doc["report_path"]:
            raise ConfigError("config.report_path: expected a path string")
        cfg.report_path = doc["report_path"]
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    doc = asdict(cfg)
    doc["window"] = list(cfg.window)
    doc["solvers"] = list(cfg.solvers)
    doc["lambda_sweep"] = None if cfg.lambda_sweep is None else list(cfg.lambda_sweep)
    return json.dumps(doc, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


@dataclass
class Row:
    solver: str
    level: int
    order_or_iter: object = ""
    energy: Optional[float] = None
    residual: Optional[float] = None
    overlap: Optional[float] = None
    oracle_delta: Optional[float] = None
    converged: bool = False
    lam: Optional[float] = None
    vector: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class RunResult:
    exit_code: int
    rows: list
    summary: list


def build_system(cfg: RunConfig, seed: Optional[int] = None):
    """``(g0inv, k0, k1, g1inv)`` for the configured problem."""
    p = cfg.problem
    if "model" in p:
        s = seed if seed is not None else p.get("seed")
        m = build_model(ModelSpec(p["model"], p.get("params", {}), s))
        return m.g0inv, m.k0, m.k1, m.g1inv
    built = {k: ops.make_operator(d) for k, d in p["operators"].items()}
    return built["g0inv"], built["k0"], built["k1"], built.get("g1inv")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "%.17g" % (x + 0.0)  # no negative zero
    return str(x)


def _overlap(phi, psi) -> float:
    return float(np.real(np.vdot(phi, psi)))


def _run_block(cfg, g0inv, k0, k1_base, g1inv, decomp, lam, summary):
    """All requested solvers for one value of the coupling scale."""
    k1 = k1_base if lam is None else ops.scaled(k1_base, lam)
    pert = effective_kernel(k1, g0inv, g1inv) if g1inv is not None else k1
    exact_g = g1inv if g1inv is not None else g0inv
    problem = PTProblem(g0inv, k0, pert, decomp, cfg.window)
    n, e_n = cfg.level, decomp.energy
    tag = "" if lam is None else f" [lambda={lam:.17g}]"

    def resid(E, psi):
        return residual_norm(exact_g, k0, k1, E, psi)

    oracle = None
    if "oracle" in cfg.solvers:
        try:
            oracle = exact_states(exact_g, k0, k1, cfg.window)
        except (GreenPTError, np.linalg.LinAlgError) as exc:
            summary.append(f"oracle{tag}: ERROR {exc}")

    def delta(E):
        if oracle is None or len(oracle.energies) == 0:
            return None
        return float(E - oracle.nearest(E)[0])

    rows = []
    for solver in SOLVERS:
        if solver not in cfg.solvers:
            continue
        try:
            if solver == "fixed_point":
                r = energy_fixed_point(problem, cfg.tol, cfg.max_iter, cfg.damping)
                if oracle is not None:
                    flag_ambiguity(r, e_n, oracle.energies)
                rows.append(Row(solver, n, r.iterations, r.energy, resid(r.energy, r.wavefunction),
                                _overlap(decomp.phi, r.wavefunction), delta(r.energy), r.converged,
                                lam, r.wavefunction))
                note = " (another oracle root nearby: ambiguous)" if r.ambiguous else ""
                summary.append(f"fixed_point{tag}: E={r.energy:.17g} iterations={r.iterations} "
                               f"converged={r.converged}{note}")
            elif solver == "sakurai":
                r = sakurai_solve(problem, cfg.tol, cfg.max_iter, cfg.damping)
                rows.append(Row(solver, n, r.iterations, r.energy, resid(r.energy, r.wavefunction),
                                _overlap(decomp.phi, r.wavefunction), delta(r.energy), r.converged,
                                lam, r.wavefunction))
                summary.append(f"sakurai{tag}: E={r.energy:.17g} converged={r.converged}")
            elif solver == "series":
                r = pt_expand(problem, cfg.order)
                es = np.cumsum(r.series_energies)
                psis = np.cumsum(np.array(r.series_wavefunctions), axis=0)
                for k in range(cfg.order + 1):
                    E = float(es[k])
                    rows.append(Row(solver, n, k, E, resid(E, psis[k]), _overlap(decomp.phi, psis[k]),
                                    delta(E), True, lam, psis[k]))
                summary.append(f"series{tag}: coefficients {[float(x) for x in r.series_energies]}")
            elif solver == "degenerate":
                reports = degenerate_solve(problem)
                for j, r in enumerate(reports):
                    rows.append(Row(solver, n, j, r.energy, resid(r.energy, r.wavefunction),
                                    _overlap(r.series_wavefunctions[0], r.wavefunction), delta(r.energy),
                                    r.converged, lam, r.wavefunction))
                summary.append(f"degenerate{tag}: energies {[r.energy for r in reports]}")
            elif solver == "rspt":
                if decomp.mode != "spectral" or not pert.energy_independent:
                    raise PreconditionError("rspt needs energy-independent K0 and K1 with G0^-1 = E - H0")
                if decomp.size != 1:
                    raise PreconditionError("rspt needs a nondegenerate level")
                spec = Spectrum(decomp.spectrum_energies, decomp.spectrum_vectors)
                idx = int(np.argmin(np.abs(decomp.spectrum_energies - e_n)))
                energies, states = rspt_series(spec, ops.evaluate(pert, e_n), idx, min(cfg.order, 3))
                es, psis = np.cumsum(energies), np.cumsum(np.array(states), axis=0)
                for k in range(len(energies)):
                    E = float(es[k])
                    rows.append(Row(solver, n, k, E, resid(E, psis[k]), _overlap(decomp.phi, psis[k]),
                                    delta(E), True, lam, psis[k]))
                summary.append(f"rspt{tag}: coefficients {energies}")
            elif solver == "oracle":
                if oracle is None or len(oracle.energies) == 0:
                    raise GreenPTError("oracle found no roots in the window")
                order = np.argsort(np.abs(oracle.energies - e_n), kind="stable")[: decomp.size]
                for i in sorted(order):
                    E, v = float(oracle.energies[i]), oracle.vectors[i]
                    ov = np.vdot(decomp.vectors[:, 0], v) if decomp.size == 1 else 0.0
                    if abs(ov) > 1e-8:
                        v = v / ov
                    rows.append(Row(solver, n, len(oracle.energies), E, resid(E, v),
                                    _overlap(decomp.vectors[:, 0], v), 0.0, True, lam, v))
                summary.append(f"oracle{tag}: {len(oracle.energies)} roots in window")
        except (GreenPTError, np.linalg.LinAlgError) as exc:
            rows.append(Row(solver, n, "", None, None, None, None, False, lam, None))
            summary.append(f"{solver}{tag}: ERROR {type(exc).__name__}: {exc}")
    return rows


def run(cfg: RunConfig, seed: Optional[int] = None) -> RunResult:
    """Execute every requested solver; raises :class:`GreenPTError` on setup failures."""
    g0inv, k0, k1, g1inv = build_system(cfg, seed)
    states = solve_unperturbed(g0inv, k0, cfg.window)
    try:
        group = select_level(states, cfg.level)
    except IndexError as exc:
        raise ConfigError(f"config.level: {exc}") from None
    decomp = pole_decomposition(g0inv, k0, group, window=cfg.window)
    summary = [f"unperturbed level {cfg.level}: E={decomp.energy:.17g} multiplicity={decomp.size} "
               f"mode={decomp.mode}"]
    rows = []
    sweep = cfg.lambda_sweep or (None,)
    for lam in sweep:
        rows.extend(_run_block(cfg, g0inv, k0, k1, g1inv, decomp, lam, summary))
    # report order: (solver, level, lambda); stable, so per-solver row order is kept
    rows.sort(key=lambda r: (SOLVERS.index(r.solver), r.level, sweep.index(r.lam)))
    code = 0 if all(r.converged for r in rows) else 2
    return RunResult(code, rows, summary)


def render_csv(rows, timestamp: Optional[str] = None) -> str:
    """CSV text; the first line is a ``#`` header with the generation time.

    In a lambda sweep a ``# lambda=<value>`` line precedes each run of rows
    sharing one coupling scale.
    """
    buf = io.StringIO()
    stamp = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    buf.write(f"# greenpt report generated {stamp}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    current = object()
    for r in rows:
        if r.lam != current:
            current = r.lam
            if r.lam is not None:
                buf.write(f"# lambda={r.lam:.17g}\n")
        writer.writerow([r.solver, r.level, _fmt(r.order_or_iter), _fmt(r.energy), _fmt(r.residual),
                         _fmt(r.overlap), _fmt(r.oracle_delta), _fmt(r.converged)])
    return buf.getvalue()


def render_states(rows) -> str:
    out = []
    for i, r in enumerate(rows):
        out.append({"row": i, "solver": r.solver, "lambda": r.lam, "energy": r.energy,
                    "vector": None if r.vector is None else ops.encode_complex(r.vector)})
    return json.dumps(out, indent=1)


def sidecar_paths(report: Path):
    return report.with_suffix(".summary.txt"), report.with_suffix(".states.json")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="greenpt", description=__doc__.split("\n")[0])
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--report", help="CSV report path (overrides the config)")
    parser.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    parser.add_argument("--seed", type=int, help="override the model seed (unsigned 64-bit)")
    args = parser.parse_args(argv)

    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
        if args.report:
            cfg.report_path = args.report
        result = run(cfg, args.seed)
        report = Path(cfg.report_path)
        summary_path, states_path = sidecar_paths(report)
        report.write_text(render_csv(result.rows), encoding="utf-8")
        summary_path.write_text("\n".join(result.summary) + "\n", encoding="utf-8")
        states_path.write_text(render_states(result.rows), encoding="utf-8")
    except (GreenPTError, OSError, np.linalg.LinAlgError) as exc:
        print(f"greenpt: error: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print("\n".join(result.summary))
        print(f"report written to {report}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
