"""Command-line entry point: ``flatpath <command> [--config PATH] ...``.

Exit status: 0 on success (or a passing check), 1 when a check fails, 2 on a
usage or configuration error. Reports are deterministic for a fixed config.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

from . import SCHEMA_VERSION, __version__
from .config import ConfigError, canonical_text, config_hash, parse_config

COMMANDS = ("kernel", "transform", "inner", "repro-check", "invariance-check", "propagator", "geometry")
CHECK_COMMANDS = ("repro-check", "invariance-check", "propagator", "geometry", "transform", "inner")


# ---------------------------------------------------------------------------
# output


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    return format(x, ".17g")


def dump_json(obj, indent: int = 0) -> str:
    """JSON with every float printed to 17 significant digits; complex as ``[re, im]``."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, complex):
        return f"[{_fmt_float(obj.real)}, {_fmt_float(obj.imag)}]"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dump_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dump_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dump_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    if hasattr(obj, "tolist"):
        return dump_json(obj.tolist(), indent)
    if hasattr(obj, "item"):
        return dump_json(obj.item(), indent)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def _flatten(prefix: str, obj, out: list):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, out)
    elif isinstance(obj, complex):
        out.append((prefix + ".re", obj.real))
        out.append((prefix + ".im", obj.imag))
    else:
        out.append((prefix, obj))


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return dump_json(report) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    table = report["results"].get("table")
    if table is not None:
        writer.writerow(list(table[0].keys()))
        for row in table:
            writer.writerow([_csv_cell(v) for v in row.values()])
        return buf.getvalue()
    rows = []
    _flatten("", {k: v for k, v in report.items() if k != "inputs"}, rows)
    writer.writerow(["key", "value"])
    for k, v in rows:
        writer.writerow([k, _csv_cell(v)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands (numeric modules are imported lazily, after thread settings apply)


def _space_form(cfg):
    from .spaceform import make_space_form
    params = {}
    for key in ("dim", "lengths", "gamma", "circumference"):
        if cfg[f"spaceform.{key}"] is not None:
            params[key] = cfg[f"spaceform.{key}"]
    rows = [cfg[f"lattice.basis.row{i}"] for i in range(3) if cfg[f"lattice.basis.row{i}"] is not None]
    if rows:
        params["basis"] = rows
    try:
        return make_space_form(cfg["spaceform.family"], **params)
    except ValueError as exc:
        raise ConfigError("spaceform.family", str(exc)) from None


def _base(cfg, n):
    import numpy as np
    base = cfg["base"]
    if base is None:
        return 0.0 if n == 1 else np.zeros(n)
    if len(base) != n:
        raise ConfigError("base", f"needs {n} coordinates")
    return base[0] if n == 1 else np.array(base)


def _function(cfg, key, spec):
    from .fourier import FourierFunction
    terms = cfg[key]
    if any(len(t[0]) != spec.dim for t in terms):
        raise ConfigError(key, f"indices need {spec.dim} entries")
    return FourierFunction.from_terms(spec.reciprocal, terms)


def _space(cfg):
    from .errors import InvalidParameters
    from .hilbert import SpaceFormSpace
    spec = _space_form(cfg)
    try:
        return spec, SpaceFormSpace(spec, cfg["t"], _base(cfg, spec.dim), cfg["tol"])
    except InvalidParameters as exc:
        raise ConfigError("base", str(exc)) from None


def cmd_kernel(cfg):
    import numpy as np
    from .heatkernel import rho_s1, rho_spaceform
    spec, space = _space(cfg)
    n = spec.dim
    pts = cfg["kernel.x"]
    if pts is None:
        x = np.array([space.base]) if n == 1 else space.x0[None, :]
    else:
        if any(len(p) != n for p in pts):
            raise ConfigError("kernel.x", f"points need {n} coordinates")
        x = np.array([p[0] for p in pts]) if n == 1 else np.array(pts)
    vals = rho_spaceform(x, space.base, cfg["t"], spec, cfg["tol"])
    res = {"x": x.tolist(), "rho": vals.tolist()}
    if spec.family == "circle" or (spec.family == "torus" and n == 1 and
                                   abs(spec.translation_basis.matrix[0, 0] - 2 * math.pi) < 1e-15):
        ref = rho_s1(x, space.base, cfg["t"], cfg["tol"])
        res["rho_s1"] = ref.tolist()
        res["max_abs_difference"] = float(np.max(np.abs(ref - vals)))
    return res, None


def cmd_transform(cfg):
    import numpy as np
    from .hilbert import sb_transform, sb_transform_quadrature
    spec, space = _space(cfg)
    f = _function(cfg, "function.f", spec)
    z = np.array(cfg["transform.z"])
    z = z[:, 0] if spec.dim == 1 else z
    psi = sb_transform(f, cfg["t"])
    closed = psi(z)
    quad = sb_transform_quadrature(f, space, z, cfg["quadrature.cell_nodes"])
    err = float(np.max(np.abs(closed - quad)) / max(1.0, np.max(np.abs(closed))))
    res = {"coefficients": psi.to_terms(), "z": z.tolist(), "closed": closed.tolist(),
           "quadrature": quad.tolist(), "max_rel_difference": err, "rtol": 1e-9}
    return res, err <= 1e-9


def cmd_inner(cfg):
    from .hilbert import inner_Q, inner_QC, sb_transform
    spec, space = _space(cfg)
    f = _function(cfg, "function.f", spec)
    g = _function(cfg, "function.g", spec)
    t = cfg["t"]
    q_closed = inner_Q(f, g, space)
    q_quad = inner_Q(f, g, space, "quadrature", cfg["quadrature.cell_nodes"])
    pf, pg = sb_transform(f, t), sb_transform(g, t)
    c_closed = inner_QC(pf, pg, space)
    c_quad = inner_QC(pf, pg, space, "quadrature", cfg["quadrature.cell_nodes"], cfg["quadrature.gauss_nodes"])
    scale = math.sqrt(abs(inner_Q(f, f, space).real * inner_Q(g, g, space).real)) or 1.0
    iso = abs(c_closed - q_closed) / scale
    res = {
        "inner_Q": {"closed": q_closed, "quadrature": q_quad, "difference": abs(q_closed - q_quad) / scale},
        "inner_QC": {"closed": c_closed, "quadrature": c_quad, "difference": abs(c_closed - c_quad) / scale},
        "isometry_defect": iso,
        "tolerances": {"inner_Q": 1e-9, "inner_QC": 1e-8, "isometry": 1e-8},
    }
    ok = res["inner_Q"]["difference"] <= 1e-9 and res["inner_QC"]["difference"] <= 1e-8 and iso <= 1e-8
    return res, ok


def cmd_repro(cfg):
    import numpy as np
    from .hilbert import EuclideanSpace, apply_operator, reproducing_kernel, s1_basis_element
    rng = np.random.default_rng(cfg["repro.seed"])
    npts, b, deg, t = cfg["repro.points"], cfg["repro.imag_bound"], cfg["repro.degree"], cfg["t"]
    per = []
    if cfg["repro.space"] == "euclidean":
        space = EuclideanSpace(t)
        K = reproducing_kernel(space)
        z = rng.uniform(-b, b, npts) + 1j * rng.uniform(-b, b, npts)
        elements = [(f"m={m}", lambda w, m=m: w ** m / math.sqrt(math.factorial(m) * t ** m))
                    for m in range(deg + 1)]
        label = "euclidean"
    else:
        spec, space = _space(cfg)
        if spec.family != "circle":
            raise ConfigError("spaceform.family", "repro-check on space forms needs the circle")
        K = reproducing_kernel(space)
        L = spec.translation_basis.matrix[0, 0]
        z = rng.uniform(-L / 2, L / 2, npts) + 1j * rng.uniform(-b, b, npts)
        elements = [(f"n={k}", s1_basis_element(space, k)) for k in range(-deg, deg + 1)]
        label = spec.family
    worst = 0.0
    for name, phi in elements:
        exact = phi(z)
        approx = apply_operator(K, phi, space, z)
        err = float(np.max(np.abs(approx - exact) / np.maximum(np.abs(exact), 1e-300)))
        per.append({"element": name, "max_rel_error": err})
        worst = max(worst, err)
    res = {"space": label, "kernel": K.name, "points": npts, "max_rel_error": worst,
           "rtol": cfg["repro.rtol"], "per_element": per}
    return res, worst < cfg["repro.rtol"]


def cmd_invariance(cfg):
    import numpy as np
    from .heatkernel import rho_spaceform
    from .spaceform import apply, sample_points
    spec, space = _space(cfg)
    x = sample_points(spec.translation_basis, cfg["invariance.samples"], cfg["invariance.seed"])
    x0 = sample_points(spec.translation_basis, 1, cfg["invariance.seed"] + 1)[0]
    n = spec.dim
    strip = (lambda a: a[..., 0]) if n == 1 else (lambda a: a)
    ref = rho_spaceform(strip(x), strip(x0), cfg["t"], spec, cfg["tol"])
    scale = float(np.max(np.abs(ref)))
    gens = []
    worst = 0.0
    for i, g in enumerate(spec.generators):
        moved = rho_spaceform(strip(apply(g, x)), strip(apply(g, x0)), cfg["t"], spec, cfg["tol"])
        moved_x = rho_spaceform(strip(apply(g, x)), strip(x0), cfg["t"], spec, cfg["tol"])
        dev = float(max(np.max(np.abs(moved - ref)), np.max(np.abs(moved_x - ref)))) / scale
        gens.append({"generator": i, "translation_only": g.is_translation(), "max_rel_deviation": dev})
        worst = max(worst, dev)
    res = {"family": spec.family, "holonomy_order": spec.holonomy_order, "generators": gens,
           "max_rel_deviation": worst, "rtol": cfg["invariance.rtol"]}
    return res, worst < cfg["invariance.rtol"]


def cmd_propagator(cfg):
    from .errors import FlatPathError
    from .propagator import convergence_sweep
    try:
        rows = convergence_sweep(cfg["propagator.z_T"], cfg["propagator.z_0"], cfg["propagator.T"],
                                 cfg["propagator.n_list"], cfg["propagator.engine"])
    except FlatPathError as exc:
        raise ConfigError("propagator.engine", str(exc)) from None
    table = [{"n": r.n, "Re G_n": r.G.real, "Im G_n": r.G.imag, "abs_error": r.abs_error,
              "ratio": r.ratio, "order_estimate": r.order_estimate} for r in rows]
    ratios = [r.ratio for r in rows if r.n >= 8 and r.ratio is not None]
    ok = all(abs(q - 2.0) <= 0.1 for q in ratios)
    res = {"table": table, "ratios_n_ge_8": ratios, "ratio_target": [1.9, 2.1]}
    return res, ok


def cmd_geometry(cfg):
    import numpy as np
    from .geometry import FLAT_METRICS, MetricChart, PhasePoint, bracket_obstruction, compatible_triple, metric_by_name
    name = cfg["geometry.metric"]
    try:
        base = metric_by_name(name)
    except ValueError as exc:
        raise ConfigError("geometry.metric", str(exc)) from None
    chart = MetricChart(base.dim, base.sigma, base.dsigma, cfg["geometry.h_fd"], base.name)
    if len(cfg["geometry.q"]) != chart.dim or len(cfg["geometry.p"]) != chart.dim:
        raise ConfigError("geometry.q", f"q and p need {chart.dim} coordinates")
    rng = np.random.default_rng(cfg["geometry.seed"])
    j2 = comp = 0.0
    for _ in range(cfg["geometry.samples"]):
        q = np.asarray(cfg["geometry.q"]) + rng.uniform(-0.3, 0.3, chart.dim)
        m = PhasePoint(q, rng.normal(size=chart.dim))
        d = compatible_triple(chart, m).defects(rng)
        j2, comp = max(j2, d["J_squared"]), max(comp, d["compatibility"])
    m = PhasePoint(cfg["geometry.q"], cfg["geometry.p"])
    ob = bracket_obstruction(chart, m)
    res = {
        "metric": name, "J_squared_defect": j2, "compatibility_defect": comp,
        "bracket": {"measured": ob.measured.tolist(), "predicted": ob.predicted.tolist(),
                    "literal": ob.literal.tolist(), "magnitude": ob.magnitude,
                    "noise_floor": ob.noise_floor, "q_residual": ob.q_residual},
    }
    ok = j2 < 1e-10 and comp < 1e-10
    if name in FLAT_METRICS:
        ok = ok and ob.magnitude < 1e-8
    else:
        res["bracket"]["relative_error_predicted"] = ob.relative_error("predicted")
        res["bracket"]["relative_error_literal"] = ob.relative_error("literal")
        ok = ok and ob.relative_error("predicted") < 1e-3
    return res, ok


HANDLERS = {
    "kernel": cmd_kernel,
    "transform": cmd_transform,
    "inner": cmd_inner,
    "repro-check": cmd_repro,
    "invariance-check": cmd_invariance,
    "propagator": cmd_propagator,
    "geometry": cmd_geometry,
}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flatpath", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value config file (defaults apply to missing keys)")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default=None,
                   help="report format (default json; csv for propagator)")
    p.add_argument("--threads", type=int, default=1, help="BLAS/OpenMP threads (default 1, bit-reproducible)")
    p.add_argument("--tol", type=float, default=None, help="overrides the config's tol")
    p.add_argument("--version", action="version", version=f"flatpath {__version__}")
    return p


def run(command: str, cfg: dict, fmt: str = "json") -> tuple:
    """Execute ``command``; returns ``(exit_code, report_text)``."""
    results, passed = HANDLERS[command](cfg)
    report = {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "command": command,
        "config_hash": config_hash(cfg),
        "inputs": {k: (v if not isinstance(v, list) else repr(v)) for k, v in
                   ((k, cfg[k]) for k in sorted(cfg))},
        "results": results,
    }
    if command in CHECK_COMMANDS:
        report["passed"] = bool(passed)
    code = 0 if passed in (None, True) else 1
    return code, render(report, fmt)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(args.threads)
    try:
        text = ""
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        if args.tol is not None:
            text += f"\ntol = {args.tol!r}\n" if "tol" not in _keys(text) else ""
        cfg = parse_config(text)
        if args.tol is not None:
            if not args.tol > 0:
                raise ConfigError("--tol", "must be positive")
            cfg["tol"] = float(args.tol)
        fmt = args.format or ("csv" if args.command == "propagator" else "json")
        code, out = run(args.command, cfg, fmt)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ArithmeticError) as exc:
        # numerical failure (truncation cap, unresolved quadrature, no convergence)
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return code


def _keys(text: str) -> set:
    return {line.split("=", 1)[0].strip() for line in text.splitlines() if "=" in line.split("#", 1)[0]}


__all__ = ["main", "run", "build_parser", "dump_json", "canonical_text"]
