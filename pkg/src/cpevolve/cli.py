"""Command-line entry point.

    cpevolve run CONFIG [--output PATH] [--format csv|json] [--jobs N] [--seed S]
    cpevolve validate CONFIG

Exit codes: 0 success, 2 invalid configuration or input, 3 numeric breach.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import cp_verify, lindblad, neutron_optics as optics
from .config import ConfigError, RunConfig, load_config, read_matrices, read_matrix
from .lindblad import format_float
from .operator_core import DensityMatrixError, make_density_matrix

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BREACH = 3


def _parallel_map(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))  # map keeps sweep order


def _cp_row(item: tuple[str, list[np.ndarray]]) -> dict[str, Any]:
    label, ops = item
    kraus = cp_verify.KrausSet.of(ops)
    phi = kraus.superoperator()
    verdict = cp_verify.is_completely_positive(phi)
    witness = cp_verify.cp_witness(phi)
    ext = cp_verify.tensor_extension_positive(phi, phi.dim, 16, np.random.default_rng(0))
    return {
        "label": label,
        "dim": phi.dim,
        "n_kraus": len(ops),
        "verdict": "CP" if verdict.is_cp else "NotCP",
        "min_choi_eig": verdict.min_eig,
        "witness_value": None if witness is None else witness.value,
        "extension_min_eig": ext.min_eig,
        "trace_residual": kraus.trace_residual,
    }


def run_cp_check(cfg: RunConfig, jobs: int) -> list[dict[str, Any]]:
    items = []
    if cfg.path("kraus") is not None:
        items.append((str(cfg.values["kraus"]), read_matrices(cfg.path("kraus"))))
    rng = np.random.default_rng(cfg.seed)
    for i in range(cfg.random_maps):
        n_ops = int(rng.integers(1, cfg.random_dim**2 + 1))
        items.append((f"random_{i}", list(cp_verify.random_kraus(cfg.random_dim, n_ops, rng).operators)))
    return _parallel_map(_cp_row, items, jobs)


def _medium(cfg: RunConfig, D: float) -> tuple[optics.Medium, optics.Beam]:
    table = cfg.path("s_table")
    s_model = optics.load_structure_table(table) if table is not None else optics.ConstantStructure(1.0)
    return optics.Medium(cfg.n_o, cfg.b, D, s_model), optics.Beam(cfg.values["lambda"])


def _optics_row(args: tuple[RunConfig, float]) -> dict[str, Any]:
    cfg, D = args
    medium, beam = _medium(cfg, D)
    order = cfg.order
    U = optics.complex_optical_potential(medium, beam, order)
    return {
        "D": D,
        "index_deviation": optics.index_deviation(medium, beam),
        "chi": optics.phase_shift(medium, beam),
        "sigma_d": optics.diffusion_cross_section(medium, beam, order),
        "Sigma": optics.attenuation_exponent(medium, beam, order),
        "U_re": U.real,
        "U_im": U.imag,
        "residual": optics.optical_theorem_residual(medium, beam, order),
    }


def _interferometer_row(args: tuple[RunConfig, float]) -> dict[str, Any]:
    cfg, D = args
    medium, beam = _medium(cfg, D)
    res = optics.interferometer_contrast(medium, beam, cfg.order, cfg.integrator, cfg.dt)
    return {
        "D": D,
        "chi": res.chi,
        "contrast": res.contrast,
        "expected_chi": res.expected_chi,
        "expected_contrast": res.expected_contrast,
        "phase_error": abs(optics.wrap_phase(res.chi - res.expected_chi)),
    }


def run_optics(cfg: RunConfig, jobs: int) -> list[dict[str, Any]]:
    return _parallel_map(_optics_row, [(cfg, D) for D in cfg.D], jobs)


def run_interferometer(cfg: RunConfig, jobs: int) -> list[dict[str, Any]]:
    return _parallel_map(_interferometer_row, [(cfg, D) for D in cfg.D], jobs)


def run_evolve(cfg: RunConfig) -> tuple[lindblad.Trajectory, lindblad.GeneratorReport]:
    H0 = read_matrix(cfg.path("H0"))
    V = read_matrix(cfg.path("V")) if cfg.path("V") else None
    Ls = read_matrices(cfg.path("Ls")) if cfg.path("Ls") else []
    Gamma = read_matrix(cfg.path("Gamma")) if cfg.path("Gamma") else None
    w0 = make_density_matrix(read_matrix(cfg.path("w0")))
    gen = lindblad.build_generator(H0, V, Ls, Gamma)
    dt = cfg.dt if cfg.dt is not None else gen.default_dt()
    if cfg.t_final > 0:
        dt = min(dt, cfg.t_final)
    conf = lindblad.EvolutionConfig(dt, cfg.t_final, cfg.integrator, cfg.renormalize, cfg.monitor_every)
    traj = lindblad.evolve(gen, w0.matrix, conf)
    report = lindblad.validate_generator(gen, rng=np.random.default_rng(cfg.seed))
    return traj, report


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _csv_cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return format_float(x)
    return str(x)


def _csv_text(resolved: dict, header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    for key, value in resolved.items():
        buf.write(f"# {key} = {json.dumps(_jsonable(value))}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(x) for x in row])
    return buf.getvalue()


def render(cfg: RunConfig, fmt: str) -> tuple[str, bool]:
    """Run the configured scenario; return the output text and a breach flag."""
    resolved = cfg.resolved()
    jobs = cfg.values.get("jobs", 1)
    breach = False
    if cfg.scenario == "evolve":
        traj, report = run_evolve(cfg)
        breach = bool(traj.breaches)
        if fmt == "json":
            payload = {
                "config": resolved,
                "generator": {
                    "gamma_residual": report.gamma_residual,
                    "trace_rate_bound": report.trace_rate_bound,
                    "hermiticity_residuals": report.hermiticity_residuals,
                },
                "trajectory": traj.to_dict(cfg.include_states),
            }
            return json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n", breach
        header, rows = traj.rows(cfg.include_states)
        resolved = dict(resolved, gamma_residual=report.gamma_residual, trace_rate_bound=report.trace_rate_bound)
        return _csv_text(resolved, header, rows), breach

    runner = {"cp-check": run_cp_check, "optics": run_optics, "interferometer": run_interferometer}[cfg.scenario]
    results = runner(cfg, jobs)
    if fmt == "json":
        return json.dumps(_jsonable({"config": resolved, "results": results}), indent=2) + "\n", breach
    header = list(results[0]) if results else []
    return _csv_text(resolved, header, [[r[h] for h in header] for r in results]), breach


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: RunConfig, output: Path | None = None, fmt: str | None = None) -> int:
    fmt = fmt or cfg.format
    cfg.values["format"] = fmt
    out = output if output is not None else cfg.path("output")
    try:
        text, breach = render(cfg, fmt)
    except (ConfigError, DensityMatrixError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if out is None:
        sys.stdout.write(text)
    else:
        write_atomic(Path(out), text)
    return EXIT_BREACH if breach else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpevolve", description=__doc__.splitlines()[0] if __doc__ else None)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a configured scenario")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--output", type=Path)
    p_run.add_argument("--format", choices=("csv", "json"))
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--seed", type=int)
    p_val = sub.add_parser("validate", help="parse and validate a configuration")
    p_val.add_argument("config", type=Path)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "validate":
        return EXIT_OK
    if args.seed is not None:
        cfg.values["seed"] = args.seed
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    # jobs changes scheduling only, never the results, so it is not part of the resolved config
    cfg.values["jobs"] = args.jobs
    return run(cfg, args.output, args.format)


if __name__ == "__main__":
    sys.exit(main())
