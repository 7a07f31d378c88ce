"""Numerical evaluation and time integration of cumulant moment systems.

The integrator state is a packed real vector of the U(1)-allowed
correlators (only ``n < m`` for pairs, distinct index triples for order 3).
For each derivative evaluation it is unpacked into dense symmetric /
Hermitian arrays and every compiled template is evaluated with ``einsum``
over all index instantiations. Sums over a free site ``q`` are computed as
a full contraction minus the ``q``-coincident terms, so no per-index
branching is needed.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .couplings import CouplingModel
from .errors import DomainError, IntegrationError
from .integrate import IntegratorConfig, Trajectory, run_observed
from .moments import CLASS_TEMPLATES, FREE, MomentSystem, compile_system

log = logging.getLogger(__name__)

Z_ABORT = 1e-3  # tolerated overshoot of |<sigma_z>| beyond 1


class MomentLayout:
    """Offsets and index tables for the packed moment vector of ``n`` emitters."""

    def __init__(self, n: int, order: int):
        if order not in (2, 3):
            raise DomainError(f"unsupported truncation order {order}")
        self.n, self.order = n, order
        self.iu = np.triu_indices(n, 1)
        self.npair = len(self.iu[0])
        sizes = [("z", n), ("pm_re", self.npair), ("pm_im", self.npair), ("zz", self.npair)]
        if order == 3:
            trip = [(i, j, k) for i in range(n) for j in range(i + 1, n) for k in range(n)
                    if k != i and k != j]
            self.pmz_idx = tuple(np.array(x, dtype=np.intp).reshape(-1) for x in zip(*trip)) if trip \
                else (np.zeros(0, np.intp),) * 3
            comb = list(itertools.combinations(range(n), 3))
            self.zzz_idx = tuple(np.array(x, dtype=np.intp).reshape(-1) for x in zip(*comb)) if comb \
                else (np.zeros(0, np.intp),) * 3
            sizes += [("pmz_re", len(trip)), ("pmz_im", len(trip)), ("zzz", len(comb))]
        self.slices = {}
        start = 0
        for name, size in sizes:
            self.slices[name] = slice(start, start + size)
            start += size
        self.size = start

    # -- packing ---------------------------------------------------------
    def unpack(self, y) -> dict:
        n, (i, j) = self.n, self.iu
        s = self.slices
        z = y[s["z"]]
        pm = np.zeros((n, n), complex)
        v = y[s["pm_re"]] + 1j * y[s["pm_im"]]
        pm[i, j] = v
        pm[j, i] = v.conj()
        zz = np.zeros((n, n))
        zz[i, j] = y[s["zz"]]
        zz[j, i] = y[s["zz"]]
        out = {"z": z, "pm": pm, "zz": zz}
        if self.order == 3:
            a, b, c = self.pmz_idx
            pmz = np.zeros((n, n, n), complex)
            w = y[s["pmz_re"]] + 1j * y[s["pmz_im"]]
            pmz[a, b, c] = w
            pmz[b, a, c] = w.conj()
            zzz = np.zeros((n, n, n))
            u = y[s["zzz"]]
            a, b, c = self.zzz_idx
            for p in itertools.permutations((a, b, c)):
                zzz[p] = u
            out["pmz"] = pmz
            out["zzz"] = zzz
        return out

    def pack(self, dense: dict) -> np.ndarray:
        y = np.empty(self.size)
        s = self.slices
        i, j = self.iu
        y[s["z"]] = np.real(dense["z"])
        pm = dense["pm"][i, j]
        y[s["pm_re"]] = pm.real
        y[s["pm_im"]] = pm.imag
        y[s["zz"]] = np.real(dense["zz"][i, j])
        if self.order == 3:
            w = dense["pmz"][self.pmz_idx]
            y[s["pmz_re"]] = w.real
            y[s["pmz_im"]] = w.imag
            y[s["zzz"]] = np.real(dense["zzz"][self.zzz_idx])
        return y

    def initial(self) -> np.ndarray:
        """Fully inverted product state: z = zz = zzz = 1, coherences zero."""
        y = np.zeros(self.size)
        s = self.slices
        y[s["z"]] = 1.0
        y[s["zz"]] = 1.0
        if self.order == 3:
            y[s["zzz"]] = 1.0
        return y


@dataclass
class MomentState:
    """Unpacked view of a packed moment vector at time ``t``."""

    order: int
    z: np.ndarray
    pm: np.ndarray
    zz: np.ndarray
    pmz: np.ndarray | None
    zzz: np.ndarray | None
    t: float = 0.0

    @classmethod
    def from_vector(cls, layout: MomentLayout, y, t=0.0):
        d = layout.unpack(np.asarray(y, float))
        return cls(layout.order, d["z"], d["pm"], d["zz"], d.get("pmz"), d.get("zzz"), t)

    def correlations(self) -> np.ndarray:
        """<sigma+_n sigma-_m> including the diagonal populations."""
        c = self.pm.copy()
        np.fill_diagonal(c, (1.0 + self.z) / 2.0)
        return c


def _unique(sub):
    return "".join(dict.fromkeys(sub))


class _Plan:
    """Compiled evaluation plan for one class template."""

    def __init__(self, cls, terms):
        self.cls = cls
        self.out = "".join(s for s, _ in CLASS_TEMPLATES[cls])
        self.items = []
        for t in terms:
            ops = [("G", "".join(t.gamma))] + [(f.cls, "".join(f.idx)) for f in t.factors
                                                if f.cls != "one"]
            if t.has_free:
                inner = tuple(op for op in ops if FREE in op[1])
                outer = tuple(op for op in ops if FREE not in op[1])
            else:
                inner, outer = None, tuple(ops)
            self.items.append((t.coef, inner, outer))


class MomentEngine:
    """Derivative evaluator for one coupling model and one moment system."""

    def __init__(self, model: CouplingModel, system: MomentSystem):
        self.model = model
        self.system = system
        self.n = model.n
        self.layout = MomentLayout(self.n, system.order)
        self.gamma = np.ascontiguousarray(model.gamma)
        self.plans = [_Plan(c, system.equations[c]) for c in system.classes]
        self._paths: dict = {}

    # -- einsum helpers ----------------------------------------------------
    def _einsum(self, spec, arrays):
        path = self._paths.get(spec)
        if path is None:
            path = np.einsum_path(spec, *arrays, optimize="greedy")[0]
            self._paths[spec] = path
        return np.einsum(spec, *arrays, optimize=path)

    def _operand(self, arrays, name, sub):
        arr = arrays[name]
        u = _unique(sub)
        if u != sub:
            arr = np.einsum(f"{sub}->{u}", arr)
        return arr, u

    def _broadcast(self, arr, letters, out):
        # reorder axes to follow ``out`` and insert singleton axes for absent letters
        present = [c for c in out if c in letters]
        if letters != "".join(present):
            arr = np.transpose(arr, [letters.index(c) for c in present])
        shape = [self.n if c in letters else 1 for c in out]
        return arr.reshape(shape)

    def _contract(self, arrays, ops, out_letters):
        subs, arrs = [], []
        for name, sub in ops:
            a, u = self._operand(arrays, name, sub)
            subs.append(u)
            arrs.append(a)
        letters = "".join(sorted(set("".join(subs)) - {FREE}))
        spec = ",".join(subs) + "->" + letters
        val = self._einsum(spec, arrs) if len(arrs) > 1 or spec.split("->")[0] != letters \
            else arrs[0]
        return self._broadcast(val, letters, out_letters)

    def _free_sum(self, arrays, inner, out, cache):
        # sum over q outside the class sites = full sum minus q-coincident terms
        key = (inner, out)
        hit = cache.get(key)
        if hit is not None:
            return hit
        total = self._contract(arrays, inner, out)
        for s in out:
            sub_ops = tuple((name, sub.replace(FREE, s)) for name, sub in inner)
            total = total - self._contract(arrays, sub_ops, out)
        cache[key] = total
        return total

    # -- public ----------------------------------------------------------------
    def dense_derivative(self, dense: dict) -> dict:
        """Derivatives of every class as dense arrays (entries with repeated indices are meaningless)."""
        arrays = dict(dense)
        arrays["G"] = self.gamma
        cache: dict = {}
        out = {}
        for plan in self.plans:
            shape = (self.n,) * len(plan.out)
            acc = np.zeros(shape, complex)
            for coef, inner, outer in plan.items:
                val = coef
                if inner is not None:
                    val = val * self._free_sum(arrays, inner, plan.out, cache)
                for name, sub in outer:
                    a, u = self._operand(arrays, name, sub)
                    val = val * self._broadcast(a, u, plan.out)
                acc += val
            out[plan.cls] = acc
        return out

    def derivative(self, t, y) -> np.ndarray:
        return self.layout.pack(self.dense_derivative(self.layout.unpack(y)))

    def rate_and_excitation(self, y):
        s = self.layout.slices
        z = y[s["z"]]
        i, j = self.layout.iu
        n_exc = float(np.sum(1.0 + z) / 2.0)
        rate = n_exc + 2.0 * float(self.gamma[i, j] @ y[s["pm_re"]])
        return rate, n_exc

    def excitation_rate(self, dydt) -> float:
        return float(np.sum(dydt[self.layout.slices["z"]]) / 2.0)


def moment_derivative(state: MomentState, model: CouplingModel, system: MomentSystem) -> MomentState:
    """d(state)/dt as a MomentState of derivatives."""
    eng = MomentEngine(model, system)
    dense = {"z": state.z, "pm": state.pm, "zz": state.zz}
    if system.order == 3:
        dense["pmz"] = state.pmz
        dense["zzz"] = state.zzz
    d = eng.dense_derivative(dense)
    y = eng.layout.pack(d)
    return MomentState.from_vector(eng.layout, y, state.t)


def evolve_moments(model: CouplingModel, order: int, config: IntegratorConfig | None = None,
                   system: MomentSystem | None = None) -> Trajectory:
    """Integrate the order-2 or order-3 cumulant equations from full inversion.

    Systems with fewer emitters than ``order`` are handed to the exact solver.
    """
    config = config or IntegratorConfig()
    n = model.n
    if order not in (2, 3):
        raise DomainError(f"unsupported truncation order {order}")
    if n < order:
        from .liouville import evolve_exact
        traj = evolve_exact(model, config=config)
        traj.meta["method"] = f"cumulant{order}"
        traj.meta["fallback"] = "exact"
        return traj
    system = system or compile_system(order)
    eng = MomentEngine(model, system)
    zs = eng.layout.slices["z"]
    scale = n  # bookkeeping residual is reported relative to N * Gamma

    def validate(t, y):
        z = y[zs]
        worst = float(np.max(np.abs(z)))
        if worst > 1.0 + Z_ABORT:
            raise IntegrationError(f"closure breakdown: |<sigma_z>| reached {worst:.6f}", t)

    def step_check(t, y, f):
        r, _ = eng.rate_and_excitation(y)
        return (eng.excitation_rate(f) + r) / scale

    return run_observed(eng.derivative, eng.layout.initial(), config,
                        lambda t, y: eng.rate_and_excitation(y), n,
                        validate=validate, step_check=step_check,
                        method=f"cumulant{order}",
                        extra_meta={"order": order, "n_variables": eng.layout.size,
                                    "geometry": model.description})
