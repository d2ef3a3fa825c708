"""Command-line front end: ``orthoglm <command> --spec FILE --out DIR``.

Every command writes one or two CSV files.  Each file starts with ``#``
comment lines carrying the tool version, the SHA-256 of the spec file, the
seed and the information unit, followed by a header row and numeric rows.
Files are written to a temporary name and renamed into place.

Exit codes: 0 success, 1 bad input (spec, flags, files), 2 domain or
numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, oracle, rmt
from .errors import ConvergenceError, DomainError, SpecError
from .legendre import inverse_mmse, legendre_1d
from .network import TreeNetwork, domain_box, model, potential, validate_network
from .scalar_info import obs_curve, prior_curve, snr_grid
from .solver import SolverOptions, global_min, phase_scan, stationary_points

__all__ = ["main", "run", "emit_landscape", "read_csv", "write_csv"]

COMMANDS = ("curves", "transform", "potential", "solve", "scan", "validate")
LN2 = math.log(2.0)


class UsageError(Exception):
    """Bad command line; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- CSV artifacts ---------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(path, header, rows, meta: dict) -> Path:
    """Write ``#key=value`` lines, a header and rows atomically."""
    path = Path(path)
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_csv(path) -> tuple[dict, list[str], list[list]]:
    """Parse an artifact into ``(meta, header, rows)``; numeric cells become floats, empty cells None."""
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
        else:
            lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    rows = []
    for raw in reader:
        row = []
        for cell in raw:
            if cell == "":
                row.append(None)
                continue
            try:
                row.append(float(cell))
            except ValueError:
                row.append(cell)
        rows.append(row)
    return meta, header, rows


# -- commands --------------------------------------------------------------


def _info_unit(bits: bool):
    return ("bits", 1.0 / LN2) if bits else ("nats", 1.0)


def _curves(net: TreeNetwork, args):
    """I, M, I* and Gamma tables for the root prior and every channel."""
    unit, k = _info_unit(args.bits)
    n = args.grid or net.default_settings.get("grid", 50)
    s_grid = snr_grid(float(net.default_settings.get("s_max", 1e3)), int(n))
    m = model(net)
    curves = [(net.root, "prior", prior_curve(net.prior))]
    for nid in net.order[1:]:
        em = m.edges[nid]
        curves.append((nid, "channel", obs_curve(net.node[nid].channel, em.tau2)))
    header = ["node", "curve", "s", f"I_{unit}", "M", "u", f"I_star_{unit}", "Gamma"]
    rows = []
    for nid, kind, c in curves:
        u_grid = c.M0 * np.linspace(1.0 / len(s_grid), 1.0, len(s_grid))
        for s, u in zip(s_grid, u_grid):
            rows.append(
                [nid, kind, s, k * c.eval_I(s), c.eval_M(s), u, k * legendre_1d(c, float(u)), inverse_mmse(c, float(u))]
            )
    return {"curves.csv": (header, rows)}


def _transform(net: TreeNetwork, args):
    """Stieltjes, R, J and J* tables for the law on every edge."""
    unit, k = _info_unit(args.bits)
    n = int(args.grid or 100)
    t_grid = np.linspace(0.0, 10.0, n + 1)
    header = ["edge", "t", "C(-t)", "R(-t)", f"J(t)_{unit}", "u", f"J_star(u)_{unit}"]
    rows = []
    for e in net.edges:
        law = e.law
        u_grid = law.mean * np.linspace(0.05, 0.95, n + 1)
        for t, u in zip(t_grid, u_grid):
            t = float(t)
            try:
                c = law.stieltjes(-t)
            except (DomainError, ZeroDivisionError):
                c = math.inf  # atom or hard edge at zero
            r = law.r_of_neg(t) if t > 0 else law.mean
            rows.append([e.child, t, c, r, k * law.integrated_r(t), u, k * law.j_star(float(u))])
    return {"transform.csv": (header, rows)}


def emit_landscape(net: TreeNetwork, axes=None, grid=21, limits=None, bits: bool = False):
    """Long-format ``(axis1, axis2, F)`` table of the potential.

    Coordinates not on an axis take the global minimiser (for ``u``) or the
    inner argmin given all ``u`` (for ``v``).  ``grid`` is a point count per
    axis; ``limits`` optionally gives ``(lo, hi)`` per axis, otherwise the
    axes span the domain box.  Points outside the domain get an empty ``F``.
    """
    names = net.coordinate_names
    axes = tuple(axes) if axes else names[:2]
    if len(axes) != 2 or len(set(axes)) != 2:
        raise SpecError("emit_landscape needs two distinct axes")
    for a in axes:
        if a not in names:
            raise SpecError(f"unknown coordinate {a!r}; choose from {', '.join(names)}")
    box = domain_box(net)
    values = []
    for i, a in enumerate(axes):
        lo, hi = limits[i] if limits else (0.0, box[a][1])
        if grid == 1:
            values.append(np.array([hi]))
        elif limits:
            values.append(np.linspace(lo, hi, grid))
        else:
            values.append(hi * np.arange(1, grid + 1) / grid)
    m = model(net)
    need_u = any(f"u:{i}" not in axes for i in net.var_ids)
    u_star = dict(global_min(net)[0]) if need_u else {}
    unit, k = _info_unit(bits)
    rows = []
    for a in values[0]:
        for b in values[1]:
            u = dict(u_star)
            fixed = {}
            for name, val in zip(axes, (a, b)):
                kind, nid = name.split(":", 1)
                (u if kind == "u" else fixed)[nid] = float(val)
            try:
                v = {}
                for nid, em in m.edges.items():
                    v[nid] = fixed[nid] if nid in fixed else em.inner(u[em.parent], u.get(nid))[1]
                f = k * potential(net, u, v)
            except (DomainError, ConvergenceError):
                f = None
            rows.append([float(a), float(b), f])
    return [axes[0], axes[1], f"F_{unit}"], rows


def _potential(net, args):
    axes = args.axes.split(",") if args.axes else None
    limits = None
    if args.limits:
        try:
            limits = [tuple(float(x) for x in part.split(":")) for part in args.limits.split(",")]
        except ValueError as exc:
            raise UsageError(f"--limits must look like lo:hi,lo:hi ({exc})") from exc
        if len(limits) != 2 or any(len(p) != 2 for p in limits):
            raise UsageError("--limits must look like lo:hi,lo:hi")
    header, rows = emit_landscape(net, axes, int(args.grid or 21), limits, args.bits)
    return {"potential.csv": (header, rows)}


def _options(net, args) -> SolverOptions:
    d = net.default_settings
    kw = {}
    for key in ("starts", "damping", "tol", "seed"):
        if key in d:
            kw[key] = type(getattr(SolverOptions(), key))(d[key])
    if args.tol is not None:
        kw["tol"] = args.tol
    if args.grid is not None:
        kw["grid"] = args.grid
    kw["seed"] = args.seed
    return SolverOptions(**kw)


def _solve(net, args):
    unit, k = _info_unit(args.bits)
    opts = _options(net, args)
    _, _, _, result = global_min(net, opts)
    header = ["is_global", "kind", f"F_{unit}"]
    header += [f"u:{i}" for i in net.var_ids] + [f"v:{i}" for i in net.edge_ids]
    header += ["residual", "min_eig", "iterations"]
    rows = []
    for p in sorted(result.points, key=lambda q: q.value):
        row = [p is result.best or p == result.best, p.kind, k * p.value]
        row += [p.u[i] for i in net.var_ids] + [p.v[i] for i in net.edge_ids]
        row += [p.residual, p.min_eig, p.iterations]
        rows.append(row)
    return {"solve.csv": (header, rows)}


def _scan(net, args, doc):
    if not args.param:
        raise UsageError("scan needs at least one --param PATH")
    if not args.range:
        raise UsageError("scan needs --range LO:HI")
    try:
        lo, hi = (float(x) for x in args.range.split(":"))
    except ValueError as exc:
        raise UsageError("--range must look like LO:HI") from exc
    unit, k = _info_unit(args.bits)
    grid = np.linspace(lo, hi, int(args.grid or 101))
    rep = phase_scan(net, args.param, grid, _options(net, args), base_doc=doc)
    keys = list(rep.u_star[0]) if rep.u_star else []
    header = ["parameter", f"F_star_{unit}"] + [f"u_star:{i}" for i in keys]
    header += [f"F_forward_{unit}", f"F_backward_{unit}"]
    header += [f"u_forward:{i}" for i in keys] + [f"u_backward:{i}" for i in keys] + ["degenerate"]
    rows = []
    for j, val in enumerate(rep.grid):
        row = [val, k * rep.f_star[j]] + [rep.u_star[j][i] for i in keys]
        row += [k * rep.forward_f[j], k * rep.backward_f[j]]
        row += [rep.forward_u[j][i] for i in keys] + [rep.backward_u[j][i] for i in keys] + [rep.degenerate[j]]
        rows.append(row)
    t_header = ["location", "bracket_lo", "bracket_hi", "window_lo", "window_hi", f"F_forward_{unit}", f"F_backward_{unit}"]
    t_rows = [
        [t.location, t.bracket[0], t.bracket[1], t.window[0], t.window[1], k * t.f_forward, k * t.f_backward]
        for t in rep.transitions
    ]
    return {"scan.csv": (header, rows), "transitions.csv": (t_header, t_rows)}


def _validate(net, args):
    """Potential predictions next to the exact finite-size Gaussian oracle."""
    unit, k = _info_unit(args.bits)
    d = net.default_settings
    N = int(d.get("N", 400))
    trials = int(d.get("trials", 10))
    u, v, f, _ = global_min(net, _options(net, args))
    res = oracle.gaussian_exact(net, N, seed=args.seed, trials=trials)
    header = ["quantity", "predicted", "oracle", "oracle_std", "rel_err"]
    rows = [[f"I_{unit}", k * f, k * res.info, k * res.info_std, abs(f - res.info) / abs(res.info)]]
    for nid in net.var_ids:
        rows.append([f"u:{nid}", u[nid], res.mmse[nid], res.mmse_std[nid], abs(u[nid] - res.mmse[nid]) / res.mmse[nid]])
    for nid in net.edge_ids:
        o = res.z_mmse[nid]
        rows.append([f"v:{nid}", v[nid], o, res.z_mmse_std[nid], abs(v[nid] - o) / o if o else math.nan])
    return {"validate.csv": (header, rows)}


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="orthoglm", description="Information potentials of GLM trees with orthogonally invariant matrices.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--spec", required=True, help="network specification (JSON)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=None, help="grid size (meaning depends on the command)")
    p.add_argument("--tol", type=float, default=None, help="solver tolerance")
    p.add_argument("--format", choices=("csv",), default="csv")
    p.add_argument("--bits", action="store_true", help="report information in bits instead of nats")
    p.add_argument("--axes", default=None, help="potential: two coordinates, e.g. u:x,v:y")
    p.add_argument("--limits", default=None, help="potential: axis ranges lo:hi,lo:hi")
    p.add_argument("--param", action="append", default=None, help="scan: dotted spec path (repeatable)")
    p.add_argument("--range", default=None, help="scan: LO:HI")
    return p


def run(argv) -> int:
    """Run one command; returns the exit code."""
    try:
        args = _parser().parse_args(argv)
        spec_path = Path(args.spec)
        raw = spec_path.read_bytes()
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{spec_path}: malformed JSON ({exc.msg} at line {exc.lineno})") from exc
        net = validate_network(doc, base_dir=spec_path.parent)
        if args.command == "scan":
            outputs = _scan(net, args, doc)
        else:
            outputs = {
                "curves": _curves,
                "transform": _transform,
                "potential": _potential,
                "solve": _solve,
                "validate": _validate,
            }[args.command](net, args)
        unit, _ = _info_unit(args.bits)
        meta = {
            "tool": f"orthoglm {__version__}",
            "command": args.command,
            "spec_sha256": hashlib.sha256(raw).hexdigest(),
            "seed": args.seed,
            "units": unit,
        }
        for name, (header, rows) in outputs.items():
            write_csv(Path(args.out) / name, header, rows, meta)
        return 0
    except (DomainError, ConvergenceError, ArithmeticError) as exc:
        print(f"orthoglm: domain error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, SpecError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"orthoglm: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
