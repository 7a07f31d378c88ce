"""Emitter positions and dipole polarizations.

All lengths are in units of the transition wavelength, so the free-space
wavenumber is ``k0 = 2*pi``.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError

log = logging.getLogger(__name__)

LATTICE_KINDS = ("chain", "ring", "square", "cube", "waveguide", "custom")

CIRCULAR = np.array([1.0, 1.0j, 0.0]) / math.sqrt(2.0)
LINEAR = np.array([0.0, 0.0, 1.0], dtype=complex)


def polarization_vector(pol) -> np.ndarray:
    """Return a complex unit 3-vector for ``"circular"``, ``"linear"`` or an explicit vector."""
    if isinstance(pol, str):
        key = pol.lower()
        if key == "circular":
            return CIRCULAR.copy()
        if key == "linear":
            return LINEAR.copy()
        raise DomainError(f"unknown polarization {pol!r}; use 'circular' or 'linear'")
    d = np.asarray(pol, dtype=complex).reshape(-1)
    if d.shape != (3,):
        raise DomainError("polarization must be a 3-vector")
    norm = np.linalg.norm(d)
    if norm == 0:
        raise DomainError("polarization vector is zero")
    return d / norm


@dataclass(frozen=True)
class EmitterArray:
    positions: np.ndarray  # (N, 3), units of lambda0
    polarization: np.ndarray  # complex (3,)
    kind: str
    spacing: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise DomainError("positions must be a non-empty (N, 3) array")
        if self.kind not in LATTICE_KINDS:
            raise DomainError(f"unknown lattice kind {self.kind!r}")
        pos.setflags(write=False)
        d = np.asarray(self.polarization, dtype=complex)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise DomainError("polarization must have unit norm")
        d.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "polarization", d)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def pairwise_distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)

    def describe(self) -> str:
        """Short human-readable scenario tag, used in trajectory metadata."""
        pol = "circular" if np.allclose(self.polarization, CIRCULAR) else (
            "linear" if np.allclose(self.polarization, LINEAR) else "custom")
        a = "" if self.spacing is None else f" a={self.spacing:g}"
        return f"{self.kind} N={self.n}{a} pol={pol}"


def _check_dims(kind, dims):
    dims = tuple(int(x) for x in (dims if np.iterable(dims) else (dims,)))
    want = {"chain": 1, "ring": 1, "square": 2, "cube": 3}[kind]
    if len(dims) != want:
        raise DomainError(f"{kind} lattice needs {want} dimension(s), got {dims}")
    if any(x < 1 for x in dims):
        raise DomainError(f"lattice dimensions must be >= 1, got {dims}")
    return dims


def build_lattice(kind: str, dims, a: float, polarization="linear") -> EmitterArray:
    """Emitters on a chain (x axis), ring, square (xy plane) or cubic lattice.

    ``dims`` is ``(N,)`` for chain and ring, ``(nx, ny)`` for square and
    ``(nx, ny, nz)`` for cube. The ring has chord length ``a`` between
    neighbours.
    """
    if kind not in ("chain", "ring", "square", "cube"):
        raise DomainError(f"build_lattice does not handle kind {kind!r}")
    dims = _check_dims(kind, dims)
    if not a > 0:
        raise DomainError(f"spacing must be positive, got {a}")
    d = polarization_vector(polarization)

    if kind == "ring":
        n = dims[0]
        if n == 1:
            pos = np.zeros((1, 3))
        else:
            radius = a / (2.0 * math.sin(math.pi / n))
            phi = 2.0 * math.pi * np.arange(n) / n
            pos = np.stack([radius * np.cos(phi), radius * np.sin(phi), np.zeros(n)], axis=1)
        meta = {"radius": 0.0 if n == 1 else radius}
    else:
        grids = np.meshgrid(*[np.arange(k) for k in dims], indexing="ij")
        pos = np.zeros((int(np.prod(dims)), 3))
        for axis, g in enumerate(grids):
            pos[:, axis] = a * g.reshape(-1)
        meta = {}
    return EmitterArray(pos, d, kind, float(a), meta={"dims": dims, **meta})


_HEADER = re.compile(r"^\s*d\s*=\s*\((.*)\)\s*$")


def load_custom(path) -> EmitterArray:
    """Read a custom emitter file.

    Format: a header ``d = (dx_re dx_im dy_re dy_im dz_re dz_im)`` followed by
    one ``x y z`` row per emitter; ``#`` starts a comment.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc

    d = None
    rows: list[tuple[float, float, float]] = []
    lines: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if d is None:
            m = _HEADER.match(line)
            if not m:
                raise ParseError("expected header 'd = (dx_re dx_im dy_re dy_im dz_re dz_im)'", lineno)
            try:
                parts = [float(x) for x in m.group(1).replace(",", " ").split()]
            except ValueError:
                raise ParseError("non-numeric polarization component", lineno) from None
            if len(parts) != 6:
                raise ParseError("polarization needs 6 numbers (re/im pairs)", lineno)
            vec = np.array(parts[0::2]) + 1j * np.array(parts[1::2])
            norm = np.linalg.norm(vec)
            if abs(norm - 1.0) > 1e-6:
                raise ParseError(f"polarization norm {norm:.8g} is not 1", lineno)
            if norm != 1.0:
                log.warning("normalizing polarization with norm %.10g", norm)
                vec = vec / norm
            d = vec
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(f"expected 3 coordinates, got {len(fields)}", lineno)
        try:
            row = tuple(float(x) for x in fields)
        except ValueError:
            raise ParseError("non-numeric coordinate", lineno) from None
        if not all(math.isfinite(x) for x in row):
            raise ParseError("non-finite coordinate", lineno)
        rows.append(row)
        lines.append(lineno)

    if d is None or not rows:
        raise ParseError("no emitters")
    pos = np.array(rows)
    seen: dict[tuple, int] = {}
    for row, lineno in zip(rows, lines):
        if row in seen:
            raise ParseError(f"duplicate position (first on line {seen[row]})", lineno)
        seen[row] = lineno
    return EmitterArray(pos, d, "custom", None, meta={"path": str(path)})
