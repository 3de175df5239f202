"""Run configuration: flat ``key = value`` files with dotted keys.

Blank lines and ``#`` comments are ignored. Every key is validated against
:data:`SCHEMA`; an unknown key or an unparseable value raises
:class:`ConfigError` naming it.

Value syntax
------------
* numbers and lists: ``t = 0.8``, ``spaceform.lengths = 6.283185307179586, 1.0``
* complex numbers use Python syntax: ``propagator.z_T = 1+0.5j``
* point lists separate points by ``;``: ``kernel.x = 0.1, 0.2 ; 0.3, 0.4``
* coefficient lists are ``index... : re im`` terms separated by ``;``:
  ``function.f = 1 : 2 0 ; -3 : 1 0``
"""

from __future__ import annotations

import hashlib
import math

SCHEMA = {
    # key: (default, kind)
    "spaceform.family": ("circle", "str"),
    "spaceform.dim": (None, "int"),
    "spaceform.lengths": (None, "floats"),
    "spaceform.gamma": (None, "float"),
    "spaceform.circumference": (None, "float"),
    "lattice.basis.row0": (None, "floats"),
    "lattice.basis.row1": (None, "floats"),
    "lattice.basis.row2": (None, "floats"),
    "t": (1.0, "float"),
    "base": (None, "floats"),
    "tol": (1e-14, "float"),
    "quadrature.cell_nodes": (None, "int"),
    "quadrature.gauss_nodes": (None, "int"),
    "kernel.x": (None, "points"),
    "function.f": ("0 : 1 0", "terms"),
    "function.g": ("1 : 1 0", "terms"),
    "transform.z": ("0.3+0.5j ; -1.0-0.7j ; 2.0+1.2j", "cpoints"),
    "repro.space": ("spaceform", "str"),
    "repro.points": (20, "int"),
    "repro.imag_bound": (1.5, "float"),
    "repro.degree": (6, "int"),
    "repro.seed": (0, "int"),
    "repro.rtol": (1e-7, "float"),
    "invariance.samples": (32, "int"),
    "invariance.seed": (0, "int"),
    "invariance.rtol": (1e-10, "float"),
    "propagator.z_T": (1 + 0j, "complex"),
    "propagator.z_0": (1 + 0j, "complex"),
    "propagator.T": (1.0, "float"),
    "propagator.n_list": ([1, 2, 4, 8, 16, 32, 64, 128, 256], "ints"),
    "propagator.engine": ("GaussianClosedForm", "str"),
    "geometry.metric": ("sphere", "str"),
    "geometry.q": ([math.pi / 4, 0.3], "floats"),
    "geometry.p": ([1.0, 0.0], "floats"),
    "geometry.h_fd": (1e-5, "float"),
    "geometry.samples": (50, "int"),
    "geometry.seed": (0, "int"),
}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _floats(text):
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _parse_value(key: str, kind: str, text: str):
    text = text.strip()
    try:
        if kind == "str":
            return text
        if kind == "int":
            v = float(text)
            if v != int(v):
                raise ValueError("not an integer")
            return int(v)
        if kind == "float":
            v = float(text)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        if kind == "complex":
            return complex(text.replace(" ", ""))
        if kind == "floats":
            return _floats(text)
        if kind == "ints":
            return [int(v) for v in text.split(",") if v.strip()]
        if kind == "points":
            return [_floats(p) for p in text.split(";") if p.strip()]
        if kind == "cpoints":
            return [[complex(v.replace(" ", "")) for v in p.split(",") if v.strip()]
                    for p in text.split(";") if p.strip()]
        if kind == "terms":
            terms = []
            for item in text.split(";"):
                if not item.strip():
                    continue
                idx, coef = item.split(":")
                re_im = [float(v) for v in coef.split()]
                if len(re_im) != 2:
                    raise ValueError("coefficient needs re and im")
                terms.append([[int(v) for v in idx.split()], re_im])
            return terms
    except (ValueError, TypeError) as exc:
        raise ConfigError(key, f"cannot parse {text!r} as {kind} ({exc})") from None
    raise ConfigError(key, f"unknown value kind {kind}")


def parse_config(text: str) -> dict:
    """Parse config text into a dict holding every schema key (defaults filled in)."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        if key in raw:
            raise ConfigError(key, "duplicate key")
        raw[key] = value
    cfg = {}
    for key, (default, kind) in SCHEMA.items():
        if key in raw:
            cfg[key] = _parse_value(key, kind, raw[key])
        elif isinstance(default, str) and kind != "str":
            cfg[key] = _parse_value(key, kind, default)
        else:
            cfg[key] = default
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    for key in ("t", "tol", "geometry.h_fd", "repro.rtol", "invariance.rtol"):
        if not cfg[key] > 0:
            raise ConfigError(key, "must be positive")
    for key in ("repro.points", "repro.degree", "invariance.samples", "geometry.samples"):
        if cfg[key] < 0:
            raise ConfigError(key, "must be nonnegative")
    for key in ("quadrature.cell_nodes", "quadrature.gauss_nodes", "spaceform.dim"):
        if cfg[key] is not None and cfg[key] < 1:
            raise ConfigError(key, "must be at least 1")
    if any(n < 1 for n in cfg["propagator.n_list"]):
        raise ConfigError("propagator.n_list", "slice counts must be positive")
    if cfg["repro.space"] not in ("spaceform", "euclidean"):
        raise ConfigError("repro.space", "must be 'spaceform' or 'euclidean'")
    if cfg["propagator.engine"] not in ("Quadrature", "GaussianClosedForm"):
        raise ConfigError("propagator.engine", "must be 'Quadrature' or 'GaussianClosedForm'")


def canonical_text(cfg: dict) -> str:
    """Deterministic ``key = value`` rendering of every schema key."""
    lines = []
    for key in SCHEMA:
        lines.append(f"{key} = {cfg[key]!r}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_text(cfg).encode()).hexdigest()
