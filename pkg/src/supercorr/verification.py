"""Brute-force checks of the symbolic moment templates.

Everything here works with explicit 2^N x 2^N matrices and numerical
partition sums, independent of the symbolic derivation it is used to check.
Only meant for a handful of emitters.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .moments import CLASS_TEMPLATES, set_partitions

SP = np.array([[0, 0], [1, 0]], dtype=complex)  # |e><g| with basis (g, e)
SM = SP.T.copy()
SZ = np.diag([-1.0, 1.0]).astype(complex)
ID = np.eye(2, dtype=complex)
LOCAL = {"1": ID, "+": SP, "-": SM, "z": SZ}
# dual basis under Tr(X^dagger Y)-style pairing: coef of op = Tr(DUAL[op] @ X)
DUAL = {"1": ID / 2, "+": SM, "-": SP, "z": SZ / 2}


def site_operator(n, ops: dict) -> np.ndarray:
    """Kronecker product with ``ops[site]`` on the given sites, identity elsewhere.

    Site 0 is the most significant tensor factor, so basis index bit
    ``n - 1 - site`` is set when that emitter is excited.
    """
    out = np.ones((1, 1), dtype=complex)
    for s in range(n):
        out = np.kron(out, LOCAL[ops.get(s, "1")])
    return out


def random_u1_density(n, rng) -> np.ndarray:
    """Random full-rank density matrix commuting with the total inversion."""
    dim = 2**n
    exc = np.array([bin(i).count("1") for i in range(dim)])
    rho = np.zeros((dim, dim), complex)
    weights = rng.dirichlet(np.ones(n + 1))
    for k in range(n + 1):
        idx = np.flatnonzero(exc == k)
        m = rng.normal(size=(len(idx), len(idx))) + 1j * rng.normal(size=(len(idx), len(idx)))
        block = m @ m.conj().T
        block /= np.trace(block).real
        rho[np.ix_(idx, idx)] = weights[k] * block
    return rho


def random_dissipation(n, rng) -> np.ndarray:
    """Random real PSD matrix with unit diagonal."""
    x = rng.normal(size=(n, n + 2))
    g = x @ x.T
    d = np.sqrt(np.diag(g))
    return g / np.outer(d, d)


def adjoint_lindblad(A, gamma) -> np.ndarray:
    """sum_nm Gamma_nm (s+_n A s-_m - 1/2 {s+_n s-_m, A}) as a dense matrix."""
    n = gamma.shape[0]
    sp = [site_operator(n, {i: "+"}) for i in range(n)]
    sm = [site_operator(n, {i: "-"}) for i in range(n)]
    out = np.zeros_like(A)
    for i in range(n):
        for j in range(n):
            if gamma[i, j] == 0:
                continue
            pm = sp[i] @ sm[j]
            out += gamma[i, j] * (sp[i] @ A @ sm[j] - 0.5 * (pm @ A + A @ pm))
    return out


def expectation(rho, ops: dict) -> complex:
    n = int(round(math.log2(rho.shape[0])))
    return complex(np.trace(site_operator(n, ops) @ rho))


class _StringBasis:
    """All 4^n on-site operator strings with their duals and expectations in ``rho``."""

    def __init__(self, rho, n):
        self.labels = list(itertools.product("1+-z", repeat=n))
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        self.ops = np.array([_kron(LOCAL, lab) for lab in self.labels])
        self.duals = np.array([_kron(DUAL, lab) for lab in self.labels])
        self.values = np.einsum("sij,ji->s", self.ops, rho)
        self.weight = np.array([sum(c != "1" for c in lab) for lab in self.labels])

    def coefficients(self, X):
        return np.einsum("sij,ji->s", self.duals, X)

    def closed(self, lab, order):
        """Expectation of string ``lab``, cumulant-closed above ``order`` sites."""
        sites = [i for i, c in enumerate(lab) if c != "1"]
        if len(sites) <= order:
            return self.values[self.index[lab]]
        total = 0.0
        for part in set_partitions(sites):
            k = len(part)
            if k == 1:
                continue
            prod = 1.0
            for block in part:
                sub = tuple(c if i in block else "1" for i, c in enumerate(lab))
                prod *= self.values[self.index[sub]]
            total -= math.factorial(k - 1) * (-1) ** (k - 1) * prod
        return total


def _kron(table, labels):
    out = np.ones((1, 1), dtype=complex)
    for lab in labels:
        out = np.kron(out, table[lab])
    return out


def closure_oracle(rho, gamma, order, cls, sites, basis=None) -> complex:
    """d<A>/dt for class ``cls`` on ``sites`` with the closure applied term by term."""
    n = gamma.shape[0]
    basis = basis or _StringBasis(rho, n)
    ops = {s: o for s, (_, o) in zip(sites, CLASS_TEMPLATES[cls])}
    X = adjoint_lindblad(site_operator(n, ops), gamma)
    coefs = basis.coefficients(X)
    total = 0.0
    for s in np.flatnonzero(np.abs(coefs) > 1e-13):
        if basis.weight[s] > order + 1:
            raise AssertionError(f"adjoint produced a weight-{basis.weight[s]} string")
        total += coefs[s] * basis.closed(basis.labels[s], order)
    return complex(total)


def exact_moments(rho, n, order) -> dict:
    """Dense moment arrays (repeated-index entries zero) from a density matrix."""
    z = np.array([expectation(rho, {i: "z"}).real for i in range(n)])
    pm = np.zeros((n, n), complex)
    zz = np.zeros((n, n))
    for i, j in itertools.permutations(range(n), 2):
        pm[i, j] = expectation(rho, {i: "+", j: "-"})
        zz[i, j] = expectation(rho, {i: "z", j: "z"}).real
    out = {"z": z, "pm": pm, "zz": zz}
    if order == 3:
        pmz = np.zeros((n, n, n), complex)
        zzz = np.zeros((n, n, n))
        for i, j, k in itertools.permutations(range(n), 3):
            pmz[i, j, k] = expectation(rho, {i: "+", j: "-", k: "z"})
            zzz[i, j, k] = expectation(rho, {i: "z", j: "z", k: "z"}).real
        out["pmz"] = pmz
        out["zzz"] = zzz
    return out


def verify_templates(system, seed=0, n=None) -> float:
    """Max deviation between the compiled engine and the brute-force closure oracle.

    Uses ``n = order + 1`` emitters by default, the smallest size where the
    closure is exercised for every class.
    """
    from .couplings import CouplingModel
    from .cumulants import MomentEngine

    order = system.order
    n = n or order + 1
    rng = np.random.default_rng(seed)
    gamma = random_dissipation(n, rng)
    rho = random_u1_density(n, rng)
    eng = MomentEngine(CouplingModel(gamma), system)
    dense = exact_moments(rho, n, order)
    deriv = eng.dense_derivative(dense)
    basis = _StringBasis(rho, n)
    worst = 0.0
    for cls in system.classes:
        k = len(CLASS_TEMPLATES[cls])
        for sites in itertools.permutations(range(n), k):
            ref = closure_oracle(rho, gamma, order, cls, sites, basis)
            worst = max(worst, abs(deriv[cls][sites] - ref))
    return worst
