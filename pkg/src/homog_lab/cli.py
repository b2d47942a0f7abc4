"""Command-line driver: ``homog-lab <command> [options]``.

Commands: ``surface``, ``bulk``, ``segment``, ``energy``, ``wulff``, ``verify``.
Usage errors exit with status 2 and list every violation; solver errors exit
with status 1 and a JSON diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import io as hio
from .elastic_cell import (assemble_cell_system, bulk_density, closed_form_density,
                           membrane_cell_density, solve_cell)
from .energies import elastic_energy, spin_energy, weak_membrane_energy
from .exceptions import HomogLabError
from .lattice import CoefficientField, LatticeFunction, NeighborSet
from .membrane import GncSchedule, alternating_minimize, exact_minimize_1d
from .spin_cell import (brute_force_ground_state, build_cut_network, cell_surface_energy,
                        convexity_check, min_cut_ground_state, sweep_directions, WulffTable)

COMMANDS = ("surface", "bulk", "segment", "energy", "wulff", "verify")
SCHEMA = 1


class UsageError(Exception):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class RunConfig:
    command: str
    field_path: Path | None = None
    field: CoefficientField | None = None
    nu: list = dc_field(default_factory=list)
    sweep: int | None = None
    sizes: list = dc_field(default_factory=list)
    zeta: np.ndarray | None = None
    T: int | None = None
    x0: np.ndarray | None = None
    exact_membrane: bool = False
    input_path: Path | None = None
    eps: float | None = None
    weight: float = 1.0
    gnc: bool = False
    exact: bool = False
    kind: str = "membrane"
    out: Path | None = None
    seed: int = 0
    jobs: int = 1
    timing: bool = True

    @property
    def dim(self) -> int | None:
        return self.field.dim if self.field is not None else None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError([message])


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="homog-lab", exit_on_error=False,
                description="Cell-formula densities and weak-membrane tools.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--field")
    p.add_argument("--nu")
    p.add_argument("--sweep")
    p.add_argument("--sizes")
    p.add_argument("--zeta")
    p.add_argument("--T")
    p.add_argument("--x0")
    p.add_argument("--exact-membrane", action="store_true")
    p.add_argument("--input")
    p.add_argument("--eps")
    p.add_argument("--weight")
    p.add_argument("--gnc", action="store_true")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--kind", default="membrane")
    p.add_argument("--out")
    p.add_argument("--seed", default="0")
    p.add_argument("--jobs")
    p.add_argument("--no-timing", action="store_true")
    return p


def _floats(text, name, errors):
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        errors.append(f"{name}: malformed number in {text!r}")
        return None
    if not all(np.isfinite(vals)):
        errors.append(f"{name}: values must be finite")
        return None
    return vals


def _int(text, name, errors, minimum=None):
    try:
        val = int(text)
    except (TypeError, ValueError):
        errors.append(f"{name}: malformed integer {text!r}")
        return None
    if minimum is not None and val < minimum:
        errors.append(f"{name}: must be at least {minimum}")
        return None
    return val


def _float(text, name, errors, positive=False):
    try:
        val = float(text)
    except (TypeError, ValueError):
        errors.append(f"{name}: malformed number {text!r}")
        return None
    if not np.isfinite(val) or (positive and val <= 0):
        errors.append(f"{name}: must be a {'positive ' if positive else ''}finite number")
        return None
    return val


def parse_config(args) -> RunConfig:
    """Validate command-line arguments; raise :class:`UsageError` listing every problem."""
    errors = []
    try:
        ns, unknown = _parser().parse_known_args(list(args))
    except argparse.ArgumentError as exc:
        raise UsageError([str(exc)]) from exc
    except SystemExit as exc:  # --help inside a command
        raise UsageError(["help requested"]) from exc
    errors += [f"unknown argument {u!r}" for u in unknown]
    cfg = RunConfig(ns.command)
    need_field = ns.command in ("surface", "bulk", "wulff", "segment", "energy")

    if ns.field is not None:
        cfg.field_path = Path(ns.field)
        if not cfg.field_path.is_file():
            errors.append(f"--field: file not found: {ns.field}")
        else:
            try:
                cfg.field = hio.read_field(cfg.field_path)
            except HomogLabError as exc:
                errors.append(f"--field: {exc}")
    elif need_field:
        errors.append("--field is required")
    d = cfg.dim

    if ns.sizes is not None:
        sizes = [_int(t, "--sizes", errors, 2) for t in ns.sizes.split(",")]
        if all(s is not None for s in sizes):
            if any(b <= a for a, b in zip(sizes, sizes[1:])):
                errors.append("sizes must be strictly increasing")
            cfg.sizes = sizes
    elif ns.command in ("surface", "bulk"):
        errors.append("--sizes is required")

    if ns.command == "surface":
        if (ns.nu is None) == (ns.sweep is None):
            errors.append("give exactly one of --nu and --sweep")
    if ns.nu is not None:
        for chunk in ns.nu.split(";"):
            vals = _floats(chunk, "--nu", errors)
            if vals is None:
                continue
            if d is not None and len(vals) != d:
                errors.append(f"--nu: expected {d} components, got {len(vals)}")
            elif np.linalg.norm(vals) == 0:
                errors.append("--nu: direction must be nonzero")
            else:
                cfg.nu.append(np.asarray(vals) / np.linalg.norm(vals))
    if ns.sweep is not None:
        cfg.sweep = _int(ns.sweep, "--sweep", errors, 1)
        if d is not None and d > 3:
            errors.append("--sweep: direction sweeps need d <= 3")
    if ns.command == "wulff" and cfg.sweep is None and ns.sweep is None:
        errors.append("--sweep is required")

    if ns.zeta is not None:
        vals = _floats(ns.zeta, "--zeta", errors)
        if vals is not None:
            if d is not None and len(vals) != d:
                errors.append(f"--zeta: expected {d} components, got {len(vals)}")
            cfg.zeta = np.asarray(vals)
    elif ns.command == "bulk":
        errors.append("--zeta is required")

    if ns.T is not None:
        cfg.T = _int(ns.T, "--T", errors, 2)
    elif ns.command == "wulff":
        errors.append("--T is required")
    if ns.x0 is not None:
        vals = _floats(ns.x0, "--x0", errors)
        if vals is not None:
            if d is not None and len(vals) != d:
                errors.append(f"--x0: expected {d} components")
            cfg.x0 = np.asarray(vals)

    if ns.input is not None:
        cfg.input_path = Path(ns.input)
        if not cfg.input_path.is_file():
            errors.append(f"--input: file not found: {ns.input}")
    elif ns.command in ("segment", "energy"):
        errors.append("--input is required")
    if ns.eps is not None:
        cfg.eps = _float(ns.eps, "--eps", errors, positive=True)
    if ns.weight is not None:
        w = _float(ns.weight, "--weight", errors, positive=True)
        cfg.weight = w if w is not None else cfg.weight
    if ns.kind not in ("membrane", "elastic", "spin"):
        errors.append("--kind must be one of membrane, elastic, spin")
    cfg.kind = ns.kind
    cfg.gnc, cfg.exact, cfg.exact_membrane = ns.gnc, ns.exact, ns.exact_membrane
    if ns.exact and d is not None and d != 1:
        errors.append("--exact needs a one-dimensional field")
    if ns.out is not None:
        cfg.out = Path(ns.out)
        if not cfg.out.parent.exists():
            errors.append(f"--out: directory does not exist: {cfg.out.parent}")
    cfg.seed = _int(ns.seed, "--seed", errors) or 0
    jobs = ns.jobs if ns.jobs is not None else os.environ.get("HOMOG_LAB_JOBS", "1")
    cfg.jobs = _int(jobs, "--jobs", errors, 1) or 1
    cfg.timing = not ns.no_timing
    if errors:
        raise UsageError(errors)
    return cfg


# --------------------------------------------------------------------------
# workers (top level so that process pools can pickle them)


def _surface_task(args):
    field, T, nu, x0 = args
    res = cell_surface_energy(field, T, nu, x0)
    return res.value, res.diagnostics["cut_edges"], res.diagnostics["solve_ms"]


def _bulk_task(args):
    field, T, zeta, x0, exact_membrane = args
    res = solve_cell(assemble_cell_system(field, T, zeta, x0))
    f_T = membrane_cell_density(field, zeta, T, x0=x0).value if exact_membrane else res.value
    return f_T, res.value, res.diagnostics["residual"], res.diagnostics["iterations"]


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _cmd_surface(cfg):
    d = cfg.dim
    dirs = cfg.nu if cfg.nu else list(sweep_directions(cfg.sweep, d))
    tasks = [(cfg.field, T, nu, cfg.x0) for nu in dirs for T in cfg.sizes]
    out = _map(_surface_task, tasks, cfg.jobs)
    rows = []
    for (_, T, nu, _), (phi, cuts, ms) in zip(tasks, out):
        rows.append([T] + [float(x) for x in nu] + [float(phi), cuts,
                                                     float(ms) if cfg.timing else 0.0])
    header = ["T"] + [f"nu{j + 1}" for j in range(d)] + ["phi_T", "cut_edges", "solve_ms"]
    _emit(hio.write_rows(None, header, rows), cfg.out)
    return 0


def _cmd_bulk(cfg):
    d = cfg.dim
    tasks = [(cfg.field, T, cfg.zeta, cfg.x0, cfg.exact_membrane) for T in cfg.sizes]
    out = _map(_bulk_task, tasks, cfg.jobs)
    if cfg.field.is_fully_positive():
        bulk_density(cfg.field, cfg.zeta, cfg.sizes, cfg.x0)  # closed-form consistency check
    rows = [[T] + [float(z) for z in cfg.zeta] + [float(f), float(h), float(r), int(it)]
            for T, (f, h, r, it) in zip(cfg.sizes, out)]
    header = ["T"] + [f"zeta{j + 1}" for j in range(d)] + ["f_T", "h_T", "residual", "iters"]
    _emit(hio.write_rows(None, header, rows), cfg.out)
    return 0


def _cmd_segment(cfg):
    g = hio.read_function(cfg.input_path, cfg.eps)
    if cfg.exact:
        res = exact_minimize_1d(g, cfg.field, cfg.weight)
    else:
        schedule = GncSchedule() if cfg.gnc else GncSchedule.direct()
        res = alternating_minimize(g, cfg.field, cfg.weight, schedule)
    d = g.dim
    lines_rows = [[float(x) * g.eps for x in s] + [int(k), int(b)]
                  for s, k, b in zip(res.lines.sites, res.lines.k, res.lines.broken)]
    lines_text = hio.write_rows(None, [f"x{j + 1}" for j in range(d)] + ["k", "broken"],
                                lines_rows)
    report = {"schema": SCHEMA, "energy": res.energy, "energy_trace": res.energy_trace,
              "broken_bond_count": res.lines.count, "converged": res.converged}
    if cfg.out is None:
        sys.stdout.write(hio.function_to_csv(res.u))
        sys.stderr.write(hio.dumps_json(report))
    else:
        hio.write_function(res.u, cfg.out)
        cfg.out.with_suffix(".lines.csv").write_text(lines_text)
        cfg.out.with_suffix(".trace.json").write_text(hio.dumps_json(report))
    return 0


def _cmd_energy(cfg):
    u = hio.read_function(cfg.input_path, cfg.eps)
    if cfg.kind == "membrane":
        rep = weak_membrane_energy(u, cfg.field).to_json()
    elif cfg.kind == "elastic":
        rep = {"total": elastic_energy(u, cfg.field), "broken_bond_count": 0}
    else:
        rep = {"total": spin_energy(u, cfg.field), "broken_bond_count": 0}
    rep = {"schema": SCHEMA, "kind": cfg.kind, **rep}
    _emit(hio.dumps_json(rep), cfg.out)
    return 0


def _cmd_wulff(cfg):
    d = cfg.dim
    dirs = sweep_directions(cfg.sweep, d)
    tasks = [(cfg.field, cfg.T, nu, cfg.x0) for nu in dirs]
    phi = np.array([r[0] for r in _map(_surface_task, tasks, cfg.jobs)])
    table = WulffTable(dirs, phi, cfg.T)
    pts = table.boundary_points
    rows = [[float(x) for x in nu] + [float(p)] + [float(x) for x in q]
            for nu, p, q in zip(dirs, phi, pts)]
    header = ([f"nu{j + 1}" for j in range(d)] + ["phi_T"] + [f"p{j + 1}" for j in range(d)])
    _emit(hio.write_rows(None, header, rows), cfg.out)
    if d == 2 and len(dirs) >= 3:
        ok, ratio = convexity_check(table)
        sys.stderr.write(hio.dumps_json({"schema": SCHEMA, "convex_within_2pct": ok,
                                         "worst_radial_ratio": ratio}))
    return 0


def verify_suite(seed: int = 0) -> dict:
    """Built-in oracle checks; returns ``{property: passed}``."""
    rng = np.random.default_rng(seed)
    results = {}

    ok = True
    for _ in range(20):
        field = CoefficientField.random(rng, 2, int(rng.integers(1, 3)))
        nu = rng.normal(size=2)
        nu /= np.linalg.norm(nu)
        T = int(rng.integers(2, 5))
        try:
            brute = brute_force_ground_state(field, T, nu, max_free=12).energy
        except HomogLabError:
            continue
        cut = min_cut_ground_state(build_cut_network(field, T, nu)).energy
        ok &= abs(brute - cut) <= 1e-9
    results["min_cut_matches_brute_force"] = bool(ok)

    ok = True
    for _ in range(5):
        field = CoefficientField.random(rng, 2, 2, NeighborSet.with_diagonals())
        zeta = rng.normal(size=2)
        val = solve_cell(assemble_cell_system(field, 6, zeta)).value
        ok &= abs(val - closed_form_density(field.neighbors, zeta)) <= 1e-8 * max(1.0, val)
    results["cg_matches_closed_form"] = bool(ok)

    ok = True
    field = CoefficientField.uniform(1, 1.0)
    for _ in range(5):
        n = 60
        g = LatticeFunction(1 / n, np.arange(n)[:, None],
                            (np.arange(n) > n // 2) + rng.normal(0, 0.1, n))
        dp = exact_minimize_1d(g, field, 50.0).energy
        alt = alternating_minimize(g, field, 50.0).energy
        ok &= dp <= alt + 1e-12
    results["dp_dominates_alternating"] = bool(ok)
    return results


def _cmd_verify(cfg):
    results = verify_suite(cfg.seed)
    lines = [f"{'PASS' if ok else 'FAIL'} {name}" for name, ok in results.items()]
    sys.stdout.write("\n".join(lines) + "\n")
    if cfg.out is not None:
        cfg.out.write_text(hio.dumps_json({"schema": SCHEMA, "seed": cfg.seed,
                                           "results": results}))
    return 0 if all(results.values()) else 1


HANDLERS = {"surface": _cmd_surface, "bulk": _cmd_bulk, "segment": _cmd_segment,
            "energy": _cmd_energy, "wulff": _cmd_wulff, "verify": _cmd_verify}


def run(config: RunConfig) -> int:
    """Execute a validated configuration and return the exit status."""
    try:
        return HANDLERS[config.command](config)
    except HomogLabError as exc:
        diag = {"schema": SCHEMA, "error": type(exc).__name__, "message": str(exc),
                "diagnostics": getattr(exc, "diagnostics", {})}
        if getattr(exc, "count", None) is not None:
            diag["count"] = exc.count
        diag["diagnostics"] = {k: v for k, v in diag["diagnostics"].items()
                               if k != "energy_trace"}
        sys.stderr.write(hio.dumps_json(diag))
        return 1


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] in ("-h", "--help"):
        _parser().print_help()
        return 0 if argv else 2
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        sys.stderr.write("usage error:\n" + "".join(f"  - {v}\n" for v in exc.violations))
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
