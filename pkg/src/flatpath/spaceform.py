"""Euclidean isometries and compact flat space forms.

Supported families: the n-torus, the circle of circumference ``2*pi`` (angles in
``[-pi, pi)``), and the six orientable compact 3-manifolds G1..G6 (G1 is the
3-torus, G2..G5 are half/third/quarter/sixth-turn screw quotients, G6 is the
Hantzsche-Wendt manifold).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidParameters
from .fourier import FourierFunction
from .lattice import LatticeBasis, ReciprocalLattice, cell_volume, reciprocal

FAMILIES = ("torus", "circle", "g1", "g2", "g3", "g4", "g5", "g6")

_ORTHO_TOL = 1e-12
_LATTICE_TOL = 1e-10


@dataclass(frozen=True)
class EuclideanIsometry:
    """``x -> A x + a`` with ``A`` orthogonal."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        A = np.array(self.rotation, dtype=float)
        a = np.array(self.translation, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape != (a.size, a.size):
            raise DimensionMismatch(f"rotation {A.shape} does not match translation of length {a.size}")
        if np.max(np.abs(A.T @ A - np.eye(a.size))) > _ORTHO_TOL * 10:
            raise InvalidParameters("rotation part is not orthogonal")
        A.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "rotation", A)
        object.__setattr__(self, "translation", a)

    @classmethod
    def identity(cls, n: int) -> "EuclideanIsometry":
        return cls(np.eye(n), np.zeros(n))

    @classmethod
    def pure_translation(cls, a) -> "EuclideanIsometry":
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return cls(np.eye(a.size), a)

    @property
    def dim(self) -> int:
        return self.translation.size

    def __call__(self, x):
        return apply(self, x)

    def inverse(self) -> "EuclideanIsometry":
        return EuclideanIsometry(self.rotation.T, -self.rotation.T @ self.translation)

    def power(self, k: int) -> "EuclideanIsometry":
        g = EuclideanIsometry.identity(self.dim)
        base = self if k >= 0 else self.inverse()
        for _ in range(abs(k)):
            g = compose(g, base)
        return g

    def is_translation(self, tol: float = _ORTHO_TOL) -> bool:
        return bool(np.max(np.abs(self.rotation - np.eye(self.dim))) <= tol)

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "EuclideanIsometry":
        return cls(np.array(d["rotation"]), np.array(d["translation"]))


def apply(g: EuclideanIsometry, x) -> np.ndarray:
    """``A x + a`` on points with trailing axis n (real or complex)."""
    x = np.asarray(x)
    if x.shape[-1:] != (g.dim,):
        raise DimensionMismatch(f"point dimension {x.shape[-1:]} != isometry dimension {g.dim}")
    return x @ g.rotation.T + g.translation


def compose(g1: EuclideanIsometry, g2: EuclideanIsometry) -> EuclideanIsometry:
    """``g1 o g2 = (A1 A2, A1 a2 + a1)``."""
    if g1.dim != g2.dim:
        raise DimensionMismatch("cannot compose isometries of different dimensions")
    return EuclideanIsometry(g1.rotation @ g2.rotation, g1.rotation @ g2.translation + g1.translation)


@dataclass(frozen=True)
class SpaceFormSpec:
    """A Bieberbach group together with the data the heat kernels need.

    ``coset_representatives`` holds one element of Gamma per holonomy class
    (identity first); ``volume`` is the volume of the quotient manifold, i.e.
    the translation-cell volume divided by the holonomy order.
    """

    family: str
    translation_basis: LatticeBasis
    holonomy_generators: tuple
    coset_representatives: tuple = field(repr=False)
    params: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.translation_basis.dim

    @property
    def holonomy_order(self) -> int:
        return len(self.coset_representatives)

    @property
    def cell_volume(self) -> float:
        return cell_volume(self.translation_basis)

    @property
    def volume(self) -> float:
        return self.cell_volume / self.holonomy_order

    @property
    def reciprocal(self) -> ReciprocalLattice:
        return reciprocal(self.translation_basis)

    @property
    def translation_generators(self) -> tuple:
        return tuple(EuclideanIsometry.pure_translation(c) for c in self.translation_basis.columns)

    @property
    def generators(self) -> tuple:
        """Translation generators followed by the holonomy (screw) generators."""
        return self.translation_generators + tuple(self.holonomy_generators)

    def to_json(self) -> str:
        return json.dumps({
            "family": self.family,
            "params": self.params,
            "translation_basis": self.translation_basis.matrix.tolist(),
            "holonomy_generators": [g.to_dict() for g in self.holonomy_generators],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SpaceFormSpec":
        d = json.loads(text)
        gens = tuple(EuclideanIsometry.from_dict(g) for g in d["holonomy_generators"])
        return build_spec(d["family"], LatticeBasis(np.array(d["translation_basis"])), gens, d.get("params", {}))


def _maps_lattice_to_itself(A: np.ndarray, basis: LatticeBasis) -> bool:
    B = basis.matrix
    M = np.linalg.solve(B, A @ B)
    return bool(np.max(np.abs(M - np.round(M))) <= _LATTICE_TOL)


def holonomy_cosets(generators, basis: LatticeBasis, max_order: int = 48) -> tuple:
    """One representative per rotation part of the group generated mod the lattice.

    Translation parts are reduced into the fundamental cell; the identity comes first.
    """
    n = basis.dim
    reps = [EuclideanIsometry.identity(n)]
    keys = [np.round(np.eye(n), 9).tobytes()]
    frontier = list(reps)
    while frontier:
        nxt = []
        for g in frontier:
            for h in generators:
                c = compose(h, g)
                key = (np.round(c.rotation, 9) + 0.0).tobytes()
                if key in keys:
                    continue
                c = EuclideanIsometry(c.rotation, basis.reduce(c.translation))
                keys.append(key)
                reps.append(c)
                nxt.append(c)
                if len(reps) > max_order:
                    raise InvalidParameters("holonomy group is not finite (or too large)")
        frontier = nxt
    return tuple(reps)


def acts_freely(g: EuclideanIsometry, basis: LatticeBasis, tol: float = 1e-9, search: int = 3) -> bool:
    """Whether ``x -> g x + l`` has no fixed point for every lattice vector ``l``.

    A fixed point exists iff ``a + l`` lies in the range of ``A - I``, i.e. iff its
    projection on the fixed space of ``A`` vanishes; lattice vectors with
    coefficients up to ``search`` are tried.
    """
    n = g.dim
    A, a = g.rotation, g.translation
    w, v = np.linalg.eigh(0.5 * (A + A.T))
    fixed = v[:, np.abs(w - 1.0) < 1e-9]
    if fixed.shape[1] == 0:
        return False  # A - I invertible: a fixed point always exists
    axis = np.arange(-search, search + 1)
    grid = np.stack([m.ravel() for m in np.meshgrid(*([axis] * n), indexing="ij")], axis=-1)
    shifts = a + grid @ basis.matrix.T
    proj = shifts @ fixed
    return bool(np.min(np.linalg.norm(proj, axis=1)) > tol)


def sample_points(basis: LatticeBasis, count: int = 64, seed: int = 0) -> np.ndarray:
    """Fixed pseudo-random points of the translation cell (deterministic)."""
    rng = np.random.default_rng(seed)
    return rng.random((count, basis.dim)) @ basis.matrix.T


def build_spec(family: str, basis: LatticeBasis, holonomy_generators=(), params=None) -> SpaceFormSpec:
    """Validate generators against the lattice and assemble a :class:`SpaceFormSpec`."""
    gens = tuple(holonomy_generators)
    for g in gens:
        if g.dim != basis.dim:
            raise DimensionMismatch("generator dimension does not match the lattice")
        if not _maps_lattice_to_itself(g.rotation, basis):
            raise InvalidParameters(f"{family}: rotation part does not preserve the translation lattice")
    reps = holonomy_cosets(gens, basis)
    for g in reps[1:]:
        if not acts_freely(g, basis):
            raise InvalidParameters(f"{family}: group element has a fixed point")
        pts = sample_points(basis, 32)
        if np.min(basis.distance_to_lattice(apply(g, pts) - pts)) < 1e-9:
            raise InvalidParameters(f"{family}: group element fixes a sample point")
    return SpaceFormSpec(family, basis, gens, reps, dict(params or {}))


def _lengths(params: dict, n: int) -> np.ndarray:
    lengths = params.get("lengths")
    if lengths is None:
        return np.ones(n)
    lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
    if lengths.size == 1:
        lengths = np.repeat(lengths, n)
    if lengths.size != n:
        raise InvalidParameters(f"expected {n} lengths, got {lengths.size}")
    if np.any(lengths <= 0) or not np.all(np.isfinite(lengths)):
        raise InvalidParameters("lattice lengths must be positive")
    return lengths


def _screw(angle: float, pitch: float) -> EuclideanIsometry:
    c, s = math.cos(angle), math.sin(angle)
    A = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    # snap rounding noise so that powers land exactly on lattice translations
    A[np.abs(A) < 1e-15] = 0.0
    return EuclideanIsometry(A, np.array([0.0, 0.0, pitch]))


def make_space_form(family: str, **params) -> SpaceFormSpec:
    """Build one of the supported flat compact manifolds.

    Parameters
    ----------
    family : str
        ``"torus"``, ``"circle"`` or ``"g1"`` .. ``"g6"`` (case-insensitive).
    dim : int, optional
        Torus dimension (inferred from ``basis`` or ``lengths`` when omitted).
    basis : array_like, optional
        Torus/G1 translation basis as a row-major matrix whose columns are the
        lattice vectors.
    lengths : sequence of float, optional
        Cell edge lengths (default ``2*pi`` for tori, 1 otherwise). For G3/G5 only ``(a, c)`` are used: the
        plane lattice is hexagonal with side ``a``. For G4 the plane lattice is
        square, ``a == b`` is required.
    gamma : float, optional
        In-plane angle between the first two lattice vectors for G1/G2/G6
        (default pi/2); G3/G5 accept only 2*pi/3 (or pi/3, the same lattice),
        G4 only pi/2.
    circumference : float, optional
        Circle length, default ``2*pi``.
    """
    fam = family.lower()
    if fam not in FAMILIES:
        raise InvalidParameters(f"unknown space-form family {family!r}; expected one of {FAMILIES}")
    echo = {k: (np.asarray(v).tolist() if isinstance(v, (np.ndarray, list, tuple)) else v) for k, v in params.items()}

    if fam == "circle":
        L = float(params.get("circumference", 2 * math.pi))
        if not L > 0:
            raise InvalidParameters("circumference must be positive")
        return build_spec("circle", LatticeBasis([[L]]), (), echo)

    if fam == "torus":
        if params.get("basis") is not None:
            basis = LatticeBasis.from_rows(params["basis"])
            if params.get("dim") not in (None, basis.dim):
                raise InvalidParameters("dim does not match the basis")
        else:
            n = params.get("dim")
            if n is None:
                n = len(np.atleast_1d(params["lengths"])) if params.get("lengths") is not None else None
            if n is None or int(n) < 1:
                raise InvalidParameters("torus needs a positive dim, a basis or lengths")
            lengths = params.get("lengths")
            # sides of 2 pi by default, so that Torus(1) is the standard circle
            basis = LatticeBasis.diagonal(_lengths(params, int(n)) if lengths is not None
                                          else np.full(int(n), 2 * math.pi))
        return build_spec("torus", basis, (), echo)

    gamma = float(params.get("gamma", math.pi / 2))
    if fam in ("g3", "g5"):
        if "gamma" in params and not (math.isclose(gamma, 2 * math.pi / 3) or math.isclose(gamma, math.pi / 3)):
            raise InvalidParameters(f"{fam.upper()} requires a hexagonal plane lattice (gamma = 2pi/3)")
        raw = params.get("lengths", (1.0, 1.0))
        raw = np.atleast_1d(np.asarray(raw, dtype=float))
        if raw.size == 3:
            if not math.isclose(raw[0], raw[1]):
                raise InvalidParameters(f"{fam.upper()} requires a hexagonal plane lattice (a == b)")
            raw = raw[[0, 2]]
        a, c = _lengths({"lengths": raw}, 2)
        basis = LatticeBasis(np.array([[a, a / 2, 0.0], [0.0, a * math.sqrt(3) / 2, 0.0], [0.0, 0.0, c]]))
    else:
        if params.get("basis") is not None and fam == "g1":
            basis = LatticeBasis.from_rows(params["basis"])
        else:
            a, b, c = _lengths(params, 3)
            if fam == "g4" and (not math.isclose(a, b) or not math.isclose(gamma, math.pi / 2)):
                raise InvalidParameters("G4 requires a square plane lattice (a == b, gamma = pi/2)")
            if not 0 < gamma < math.pi:
                raise InvalidParameters("gamma must lie in (0, pi)")
            cg, sg = math.cos(gamma), math.sin(gamma)
            if abs(cg) < 1e-15:
                cg = 0.0
            basis = LatticeBasis(np.array([[a, b * cg, 0.0], [0.0, b * sg, 0.0], [0.0, 0.0, c]]))
    c = basis.matrix[2, 2]

    if fam == "g1":
        gens = ()
    elif fam == "g2":
        gens = (_screw(math.pi, c / 2),)
    elif fam == "g3":
        gens = (_screw(2 * math.pi / 3, c / 3),)
    elif fam == "g4":
        gens = (_screw(math.pi / 2, c / 4),)
    elif fam == "g5":
        gens = (_screw(math.pi / 3, c / 6),)
    else:
        a_len, b_len = basis.matrix[0, 0], basis.matrix[1, 1]
        if abs(basis.matrix[0, 1]) > 1e-12:
            raise InvalidParameters("G6 requires an orthorhombic cell (gamma = pi/2)")
        gens = (
            EuclideanIsometry(np.diag([1.0, -1.0, -1.0]), [a_len / 2, b_len / 2, 0.0]),
            EuclideanIsometry(np.diag([-1.0, 1.0, -1.0]), [0.0, b_len / 2, c / 2]),
            EuclideanIsometry(np.diag([-1.0, -1.0, 1.0]), [a_len / 2, 0.0, c / 2]),
        )
    return build_spec(fam, basis, gens, echo)


def is_invariant(f: FourierFunction, g: EuclideanIsometry, tol: float = 1e-10,
                 mode: str = "coefficient", samples: np.ndarray | None = None) -> bool:
    """Whether ``f(g x) == f(x)``.

    ``mode="coefficient"`` (authoritative) checks ``c_{A^T K} = c_K exp(i K.a)`` on
    the support and its images; ``mode="sampled"`` compares values on a fixed set
    of sample points (or the ``samples`` given).
    """
    if g.dim != f.dim:
        raise DimensionMismatch("function and isometry dimensions differ")
    if mode == "sampled":
        if samples is None:
            basis = LatticeBasis(2 * math.pi * np.linalg.inv(f.recip.matrix).T)
            samples = sample_points(basis, 64, seed=1)
        pts = samples if f.dim > 1 else samples[..., 0]
        moved = apply(g, np.asarray(samples))
        moved = moved if f.dim > 1 else moved[..., 0]
        return bool(np.max(np.abs(f(moved) - f(pts))) <= tol)
    if mode != "coefficient":
        raise ValueError(f"unknown mode {mode!r}")
    A, a = g.rotation, g.translation
    K = f.vectors
    try:
        f.recip.indices_of(K @ A)                 # A^T K must stay on the lattice
        preimage = f.recip.indices_of(K @ A.T)    # modes A K that land on the support
    except ValueError:
        return False
    candidates = {tuple(m) for m in f.indices.tolist()} | {tuple(m) for m in preimage.tolist()}
    for m in sorted(candidates):
        k = f.recip.vectors(np.array(m))
        image = tuple(int(v) for v in f.recip.indices_of(k @ A))
        lhs = f.coefficient(image)
        rhs = f.coefficient(m) * np.exp(1j * float(k @ a))
        if abs(lhs - rhs) > tol:
            return False
    return True
