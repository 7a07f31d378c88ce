"""Collective couplings between emitters.

Rates are in units of the single-emitter decay rate, so Gamma = 1 and the
diagonal of every dissipation matrix is exactly one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .geometry import EmitterArray

K0 = 2.0 * math.pi

SYM_TOL = 1e-12
NEG_EIG_TOL = 1e-9


def green_tensor(r_vec, k0: float = K0) -> np.ndarray:
    """Free-space electromagnetic Green tensor G(r, omega) as a complex 3x3 matrix."""
    r_vec = np.asarray(r_vec, dtype=float)
    r = float(np.linalg.norm(r_vec))
    if r == 0.0:
        raise DomainError("Green tensor is singular at r = 0")
    kr = k0 * r
    rr = np.outer(r_vec, r_vec) / r**2
    pref = np.exp(1j * kr) / (4.0 * math.pi * k0**2 * r**3)
    return pref * ((kr**2 + 1j * kr - 1.0) * np.eye(3) + (-kr**2 - 3j * kr + 3.0) * rr)


def projected_green(r_vec, d, k0: float = K0) -> complex:
    """d^dagger . G(r) . d."""
    d = np.asarray(d, dtype=complex)
    return complex(np.conj(d) @ green_tensor(r_vec, k0) @ d)


def _projected_green_many(diff, d, k0=K0):
    # vectorized d^+ G d over an (..., 3) array of separations, all nonzero
    r = np.linalg.norm(diff, axis=-1)
    kr = k0 * r
    dd = np.vdot(d, d).real
    proj = np.abs(diff @ d) ** 2 / r**2  # |r_hat . d|^2 (G symmetric, real r)
    pref = np.exp(1j * kr) / (4.0 * math.pi * k0**2 * r**3)
    return pref * ((kr**2 + 1j * kr - 1.0) * dd + (-kr**2 - 3j * kr + 3.0) * proj)


@dataclass(frozen=True)
class CouplingModel:
    gamma: np.ndarray  # (N, N) real symmetric dissipation matrix
    j: np.ndarray | None = None  # (N, N) coherent exchange, zero diagonal
    reservoir: str = "free_space"
    ka: float | None = None
    description: str = ""

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
            raise DomainError("dissipation matrix must be square and non-empty")
        if not np.allclose(g, g.T, rtol=0, atol=SYM_TOL):
            raise DomainError("dissipation matrix is not symmetric")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        if self.j is not None:
            jm = np.array(self.j, dtype=float)
            if jm.shape != g.shape:
                raise DomainError("coherent matrix shape does not match")
            jm.setflags(write=False)
            object.__setattr__(self, "j", jm)

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    def decomposition(self) -> JumpDecomposition:
        return jump_decomposition(self)


def build_free_space(array: EmitterArray, include_hamiltonian: bool = False) -> CouplingModel:
    """Dissipative (and optionally coherent) couplings from the free-space Green tensor."""
    pos = array.positions
    n = pos.shape[0]
    d = array.polarization
    gamma = np.eye(n)
    jmat = np.zeros((n, n)) if include_hamiltonian else None
    if n > 1:
        iu, ju = np.triu_indices(n, 1)
        diff = pos[iu] - pos[ju]
        if np.any(np.linalg.norm(diff, axis=1) == 0.0):
            raise DomainError("coincident emitters")
        dgd = _projected_green_many(diff, d)
        g_off = (6.0 * math.pi / K0) * dgd.imag
        gamma[iu, ju] = g_off
        gamma[ju, iu] = g_off
        if include_hamiltonian:
            j_off = -(3.0 * math.pi / K0) * dgd.real
            jmat[iu, ju] = j_off
            jmat[ju, iu] = j_off
    return CouplingModel(gamma, jmat, "free_space", None, array.describe())


def build_waveguide(n: int, ka: float) -> CouplingModel:
    """Equidistant chain coupled to a waveguide: Gamma_nm = cos(ka |n - m|)."""
    if int(n) != n or n < 1:
        raise DomainError(f"emitter count must be a positive integer, got {n}")
    if not math.isfinite(ka):
        raise DomainError("ka must be finite")
    n = int(n)
    sep = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    gamma = np.cos(ka * sep)
    np.fill_diagonal(gamma, 1.0)
    return CouplingModel(gamma, None, "waveguide", float(ka), f"waveguide N={n} ka={ka:.6g}")


def build_dicke(n: int) -> CouplingModel:
    """Idealized all-to-all model with Gamma_nm = 1 for every pair."""
    if int(n) != n or n < 1:
        raise DomainError(f"emitter count must be a positive integer, got {n}")
    return CouplingModel(np.ones((int(n), int(n))), None, "dicke", None, f"dicke N={int(n)}")


@dataclass(frozen=True)
class JumpDecomposition:
    rates: np.ndarray  # (N,) descending
    coefficients: np.ndarray  # (N, N), row k is jump operator k

    def reconstruct(self) -> np.ndarray:
        c = self.coefficients
        return np.einsum("k,kn,km->nm", self.rates, c.conj(), c).real


def jump_decomposition(model: CouplingModel) -> JumpDecomposition:
    """Eigen-decompose the dissipation matrix into collective jump operators.

    Eigenvalues in [-1e-9, 0) are clamped to zero; anything more negative
    means the couplings are unphysical and raises DomainError. Each
    eigenvector is signed so its largest-magnitude component is positive.
    """
    g = model.gamma
    if not np.allclose(g, g.T, rtol=0, atol=SYM_TOL):
        raise DomainError("dissipation matrix is not symmetric")
    w, v = np.linalg.eigh(g)
    if w[0] < -NEG_EIG_TOL:
        raise DomainError(f"dissipation matrix has negative eigenvalue {w[0]:.3e}")
    w = np.where(w < 0.0, 0.0, w)
    order = np.argsort(-w, kind="stable")
    w = w[order]
    c = v[:, order].T.copy()
    lead = np.argmax(np.abs(c), axis=1)
    signs = np.sign(c[np.arange(len(w)), lead])
    c *= signs[:, None]
    return JumpDecomposition(w, c.astype(complex))


def emission_rate(model: CouplingModel, correlations) -> float:
    """Total photon emission rate sum_nm Gamma_nm <s+_n s-_m>."""
    c = np.asarray(correlations)
    n = model.n
    if c.shape != (n, n):
        raise DomainError(f"correlation matrix must be {n}x{n}")
    if np.max(np.abs(c - c.conj().T), initial=0.0) > 1e-8:
        raise DomainError("correlation matrix is not Hermitian")
    diag = np.diagonal(c).real
    if np.any(diag < -1e-8) or np.any(diag > 1 + 1e-8):
        raise DomainError("populations outside [0, 1]")
    val = np.sum(model.gamma * c)
    if abs(val.imag) > 1e-8:
        raise DomainError(f"emission rate has imaginary part {val.imag:.3e}")
    return float(val.real)


def emission_rate_eigen(decomp: JumpDecomposition, correlations) -> float:
    """Same rate evaluated in the jump-operator basis: sum_k Gamma_k <O_k^+ O_k>."""
    c = np.asarray(correlations)
    coef = decomp.coefficients
    per_mode = np.einsum("kn,nm,km->k", coef.conj(), c, coef)
    return float(np.real(decomp.rates @ per_mode))
