"""Exact density-matrix evolution of the collective decay master equation.

Basis index bit ``n`` is set when emitter ``n`` is excited. Lowering
operators are applied matrix-free through index maps: ``up[n, i]`` is the
position of state ``i | (1 << n)`` (or a padding slot pointing at a zero
row/column when bit ``n`` is already set).

Starting from full inversion the density matrix stays block diagonal in
the excitation number, so :func:`evolve_exact` only stores the blocks
``rho_k`` of size ``C(N, k)``. :func:`lindblad_derivative` works on a
dense ``2^N x 2^N`` matrix with the same kernels.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .couplings import CouplingModel, build_free_space
from .errors import CapacityError, DomainError
from .geometry import EmitterArray
from .integrate import IntegratorConfig, Trajectory, run_observed

log = logging.getLogger(__name__)

DEFAULT_CAP = 14
_CHUNK_ELEMENTS = 4_000_000


@dataclass
class DensityState:
    rho: np.ndarray  # (2^N, 2^N) complex
    n: int
    t: float = 0.0

    @classmethod
    def fully_excited(cls, n):
        dim = 2**n
        rho = np.zeros((dim, dim), complex)
        rho[dim - 1, dim - 1] = 1.0
        return cls(rho, n, 0.0)


def _check_size(n, cap):
    if n > cap:
        raise CapacityError(f"exact solver capped at N={cap} (got N={n}); "
                            "memory grows as C(2N, N) complex doubles")


def _coupling_matrix(model, with_hamiltonian):
    # K = sum_nm M_nm s+_n s-_m generates the non-Hermitian part: M = J - i Gamma / 2
    m = -0.5j * model.gamma
    if with_hamiltonian and model.j is not None:
        jm = np.array(model.j, dtype=float)
        np.fill_diagonal(jm, 0.0)
        m = jm + m
    return m


def _up_map(rows, pos, n, pad):
    """(n, len(rows)) positions of ``rows | bit`` or ``pad`` when the bit is set."""
    out = np.empty((n, len(rows)), dtype=np.intp)
    for b in range(n):
        has = (rows >> b) & 1
        tgt = rows | (1 << b)
        out[b] = np.where(has == 1, pad, pos[np.where(has == 1, rows, tgt)])
    return out


def _effective_operator(states, pos, n, m):
    """Dense matrix of sum_nm M_nm s+_n s-_m on the span of ``states``."""
    size = len(states)
    k = np.zeros((size, size), complex)
    col = np.arange(size)
    for j in range(n):
        has_j = ((states >> j) & 1) == 1
        base = states ^ (1 << j)
        for i in range(n):
            if m[i, j] == 0:
                continue
            if i == j:
                sel = has_j
                tgt = states
            else:
                sel = has_j & (((base >> i) & 1) == 0)
                tgt = base | (1 << i)
            if not np.any(sel):
                continue
            k[pos[tgt[sel]], col[sel]] += m[i, j]
    return k


class _JumpMixer:
    """Applies ``B[m] = sum_n Gamma_mn A[n]`` on stacked real-viewed arrays.

    Low-rank dissipation matrices (Dicke, waveguide) go through their jump
    operators, costing ``2 r N`` instead of ``N^2`` per element.
    """

    def __init__(self, gamma):
        self.gamma = np.ascontiguousarray(gamma, dtype=float)
        w, v = np.linalg.eigh(self.gamma)
        keep = w > 1e-12 * max(1.0, float(np.max(np.abs(w))))
        self.low_rank = 2 * int(np.sum(keep)) < gamma.shape[0]
        if self.low_rank:
            self.c = np.ascontiguousarray(v[:, keep].T)
            self.w = w[keep]

    def __call__(self, a):
        if self.low_rank:
            x = self.c @ a
            x *= self.w[:, None]
            return self.c.T @ x
        return self.gamma @ a


def _recycle(rho_src, up, mixer):
    """sum_nm Gamma_nm rho_src[up[n, i], up[m, j]] (the s- rho s+ jump term)."""
    n, rows = up.shape
    cols = rho_src.shape[1] + 1
    src = np.zeros((rho_src.shape[0] + 1, cols), complex)
    src[:-1, :-1] = rho_src
    out = np.empty((rows, rows), complex)
    step = max(1, _CHUNK_ELEMENTS // max(1, n * cols))
    for r0 in range(0, rows, step):
        r1 = min(rows, r0 + step)
        a = src[up[:, r0:r1], :]  # (n, chunk, cols)
        b = mixer(a.view(float).reshape(n, -1)).view(complex).reshape(n, r1 - r0, cols)
        acc = b[0][:, up[0]]
        for m in range(1, n):
            acc += b[m][:, up[m]]
        out[r0:r1] = acc
    return out


def _correlations(rho_src, up):
    """<s+_n s-_m> contributions of one block: sum_i rho[up[m, i], up[n, i]]."""
    src = np.zeros((rho_src.shape[0] + 1, rho_src.shape[1] + 1), complex)
    src[:-1, :-1] = rho_src
    g = src[up[:, None, :], up[None, :, :]].sum(axis=2)  # [m, n]
    return g.T


class _FullSpace:
    def __init__(self, n):
        self.states = np.arange(2**n)
        self.pos = self.states
        self.up = _up_map(self.states, self.pos, n, 2**n)


def lindblad_derivative(state, model: CouplingModel, with_hamiltonian: bool = False,
                        cap: int = DEFAULT_CAP) -> np.ndarray:
    """d(rho)/dt for a dense density matrix (``DensityState`` or array).

    Returns sum_nm Gamma_nm (s_n rho s+_m - 1/2 {s+_n s_m, rho}) - i [H, rho],
    the commutator only when ``with_hamiltonian`` is set.
    """
    rho = state.rho if isinstance(state, DensityState) else np.asarray(state, complex)
    n = model.n
    _check_size(n, cap)
    if rho.shape != (2**n, 2**n):
        raise DomainError(f"density matrix shape {rho.shape} does not match N={n}")
    fs = _FullSpace(n)
    k = _effective_operator(fs.states, fs.pos, n, _coupling_matrix(model, with_hamiltonian))
    kr = k @ rho
    return -1j * (kr - rho @ k.conj().T) + _recycle(rho, fs.up, _JumpMixer(model.gamma))


def correlation_matrix(rho, n) -> np.ndarray:
    """<s+_n s-_m> from a dense density matrix."""
    fs = _FullSpace(n)
    return _correlations(np.asarray(rho, complex), fs.up)


class BlockLiouvillian:
    """Excitation-number block form of the master equation for one model."""

    def __init__(self, model: CouplingModel, with_hamiltonian=False, cap=DEFAULT_CAP):
        n = model.n
        _check_size(n, cap)
        self.n = n
        self.gamma = np.ascontiguousarray(model.gamma)
        self.mixer = _JumpMixer(self.gamma)
        m = _coupling_matrix(model, with_hamiltonian)
        all_states = np.arange(2**n)
        popcount = np.array([bin(s).count("1") for s in range(2**n)])
        self.states = [all_states[popcount == k] for k in range(n + 1)]
        pos = np.empty(2**n, dtype=np.intp)
        for st in self.states:
            pos[st] = np.arange(len(st))
        self.sizes = [len(s) for s in self.states]
        # up[k]: rows of block k-1 -> positions in block k
        self.up = [None] + [_up_map(self.states[k - 1], pos, n, self.sizes[k])
                            for k in range(1, n + 1)]
        self.k_ops = [_effective_operator(self.states[k], pos, n, m) for k in range(n + 1)]
        self.offsets = np.cumsum([0] + [2 * s * s for s in self.sizes])
        self.size = int(self.offsets[-1])

    def blocks(self, y):
        out = []
        for k, s in enumerate(self.sizes):
            flat = y[self.offsets[k]:self.offsets[k + 1]]
            out.append(flat.view(complex).reshape(s, s))
        return out

    def pack(self, blocks):
        return np.concatenate([np.ascontiguousarray(b, complex).reshape(-1).view(float)
                               for b in blocks])

    def initial(self):
        y = np.zeros(self.size)
        blocks = self.blocks(y)
        blocks[self.n][0, 0] = 1.0
        return y

    def derivative(self, t, y):
        rho = self.blocks(y)
        out = []
        for k in range(self.n + 1):
            kr = self.k_ops[k] @ rho[k]
            d = -1j * (kr - kr.conj().T)
            if k < self.n:
                d = d + _recycle(rho[k + 1], self.up[k + 1], self.mixer)
            out.append(d)
        return self.pack(out)

    def correlations(self, y):
        rho = self.blocks(y)
        c = np.zeros((self.n, self.n), complex)
        for k in range(1, self.n + 1):
            c += _correlations(rho[k], self.up[k])
        return c

    def excitation(self, y):
        rho = self.blocks(y)
        return float(sum(k * np.trace(rho[k]).real for k in range(self.n + 1)))

    def trace(self, y):
        return float(sum(np.trace(b).real for b in self.blocks(y)))

    def rate(self, y):
        return float(np.real(np.sum(self.gamma * self.correlations(y))))

    def to_dense(self, y) -> np.ndarray:
        dim = 2**self.n
        rho = np.zeros((dim, dim), complex)
        for st, b in zip(self.states, self.blocks(y)):
            rho[np.ix_(st, st)] = b
        return rho


def evolve_exact(system, with_hamiltonian: bool = False, config: IntegratorConfig | None = None,
                 cap: int = DEFAULT_CAP, return_state: bool = False):
    """Evolve the fully inverted state exactly and record R(t) and N_exc(t).

    ``system`` is an EmitterArray (free-space couplings are built) or a
    CouplingModel. With ``return_state`` the final DensityState is returned too.
    """
    config = config or IntegratorConfig()
    if isinstance(system, EmitterArray):
        model = build_free_space(system, include_hamiltonian=with_hamiltonian)
    elif isinstance(system, CouplingModel):
        model = system
    else:
        raise DomainError("evolve_exact needs an EmitterArray or CouplingModel")
    liou = BlockLiouvillian(model, with_hamiltonian, cap)
    n = model.n

    def observe(t, y):
        return liou.rate(y), liou.excitation(y)

    def step_check(t, y, f):
        dn = sum(k * np.trace(b).real for k, b in enumerate(liou.blocks(f)))
        return (dn + liou.rate(y)) / n

    traj = run_observed(liou.derivative, liou.initial(), config, observe, n,
                        step_check=step_check,
                        method="exact_with_hamiltonian" if with_hamiltonian else "exact",
                        extra_meta={"geometry": model.description,
                                    "hilbert_blocks": liou.sizes})
    if return_state:
        return traj, DensityState(liou.to_dense(traj.final), n, float(traj.t[-1]))
    return traj
