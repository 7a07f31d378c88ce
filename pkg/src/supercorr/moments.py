"""Symbolic derivation of cumulant-closed moment equations.

Operators are products of on-site spin operators, written as a tuple of
``(site, op)`` pairs sorted by site with ``op`` in ``{"+", "-", "z"}``
(identity factors are dropped). A polynomial is a ``dict`` from such
monomials to complex coefficients.

Equations are derived once per correlator class on symbolic sites
``a, b, c``. Sums over emitters outside the class sites are represented by
the free index ``q``; the numerical engine evaluates them with the class
sites excluded. Dissipator terms with both indices outside the class sites
cancel identically, so at most one free index ever appears.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache

from .errors import DomainError

OPS = ("+", "-", "z")
CHARGE = {"+": 1, "-": -1, "z": 0}
FREE = "q"

# left * right for on-site operators, "1" is the identity
_TABLE = {
    ("+", "-"): {"1": 0.5, "z": 0.5},
    ("-", "+"): {"1": 0.5, "z": -0.5},
    ("z", "+"): {"+": 1.0},
    ("+", "z"): {"+": -1.0},
    ("z", "-"): {"-": -1.0},
    ("-", "z"): {"-": 1.0},
    ("+", "+"): {},
    ("-", "-"): {},
    ("z", "z"): {"1": 1.0},
}


def multiply_onsite(a: str, b: str) -> dict:
    """Product of two single-site operators as ``{op: coef}`` over ``1, +, -, z``."""
    if a not in ("1",) + OPS or b not in ("1",) + OPS:
        raise DomainError(f"unknown on-site operator in ({a!r}, {b!r})")
    if a == "1":
        return {b: 1.0}
    if b == "1":
        return {a: 1.0}
    return dict(_TABLE[(a, b)])


def monomial(*pairs) -> tuple:
    """Canonical monomial from ``(site, op)`` pairs on distinct sites."""
    sites = [s for s, _ in pairs]
    if len(set(sites)) != len(sites):
        raise DomainError("monomial() needs distinct sites; use multiply() to combine")
    return tuple(sorted((s, o) for s, o in pairs if o != "1"))


def charge(mono) -> int:
    return sum(CHARGE[o] for _, o in mono)


def _add(poly, mono, coef):
    if coef == 0:
        return
    v = poly.get(mono, 0.0) + coef
    if v == 0:
        poly.pop(mono, None)
    else:
        poly[mono] = v


def multiply(left, right) -> dict:
    """Normal-ordered product of two monomials or polynomials."""
    if isinstance(left, tuple):
        left = {left: 1.0}
    if isinstance(right, tuple):
        right = {right: 1.0}
    out: dict = {}
    for m1, c1 in left.items():
        for m2, c2 in right.items():
            for m, c in _mono_product(m1, m2).items():
                _add(out, m, c1 * c2 * c)
    return out


def _mono_product(m1, m2):
    d1, d2 = dict(m1), dict(m2)
    terms = {(): 1.0}
    for site in sorted(set(d1) | set(d2)):
        local = multiply_onsite(d1.get(site, "1"), d2.get(site, "1"))
        if not local:
            return {}
        new = {}
        for mono, c in terms.items():
            for op, c2 in local.items():
                key = mono if op == "1" else mono + ((site, op),)
                new[key] = new.get(key, 0.0) + c * c2
        terms = new
    return {m: c for m, c in terms.items() if c != 0}


def scale(poly, c) -> dict:
    return {m: v * c for m, v in poly.items()}


def add(*polys) -> dict:
    out: dict = {}
    for p in polys:
        for m, c in p.items():
            _add(out, m, c)
    return out


def commutator(x, y) -> dict:
    return add(multiply(x, y), scale(multiply(y, x), -1.0))


# ---------------------------------------------------------------- cumulants

def set_partitions(items):
    """Yield every partition of ``items`` as a list of blocks (lists)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def joint_cumulant(ops, moment) -> complex:
    """kappa(O_1..O_M) = sum_P (|P|-1)! (-1)^(|P|-1) prod_B <prod_{i in B} O_i>.

    ``moment`` maps a tuple of indices into ``ops`` to the expectation value.
    """
    total = 0.0
    for part in set_partitions(range(len(ops))):
        k = len(part)
        prod = 1.0
        for block in part:
            prod *= moment(tuple(block))
        total += math.factorial(k - 1) * (-1) ** (k - 1) * prod
    return total


def cumulant_expand(ops, drop_charged: bool = True):
    """Express ``<O_1 ... O_M>`` through lower moments by setting kappa = 0.

    ``ops`` are ``(site, op)`` pairs on distinct sites. Returns a list of
    ``(coef, [block monomials])``. Products containing a block with nonzero
    U(1) charge are dropped when ``drop_charged`` is set.
    """
    ops = list(ops)
    sites = [s for s, _ in ops]
    if len(set(sites)) != len(sites):
        raise DomainError("cumulant_expand needs distinct sites; normal-order first")
    m = len(ops)
    out = []
    for part in set_partitions(range(m)):
        k = len(part)
        if k == 1:
            continue
        blocks = [monomial(*(ops[i] for i in block)) for block in part]
        if drop_charged and any(charge(b) != 0 for b in blocks):
            continue
        coef = -math.factorial(k - 1) * (-1) ** (k - 1)
        out.append((coef, sorted(blocks)))
    return out


# ---------------------------------------------------------------- classes

CLASS_TEMPLATES = {
    "z": (("a", "z"),),
    "pm": (("a", "+"), ("b", "-")),
    "zz": (("a", "z"), ("b", "z")),
    "pmz": (("a", "+"), ("b", "-"), ("c", "z")),
    "zzz": (("a", "z"), ("b", "z"), ("c", "z")),
}
CLASSES_BY_ORDER = {2: ("z", "pm", "zz"), 3: ("z", "pm", "zz", "pmz", "zzz")}


@dataclass(frozen=True, order=True)
class Factor:
    """One stored correlator: ``cls`` with site symbols ``idx`` (constant if cls == "one")."""

    cls: str
    idx: tuple

    def __str__(self):
        if self.cls == "one":
            return "1"
        return f"{self.cls}[{','.join(self.idx)}]"


def factor_of(mono) -> Factor:
    """Map a charge-neutral monomial on at most three sites to its stored class."""
    if not mono:
        return Factor("one", ())
    if charge(mono) != 0:
        raise DomainError(f"charged monomial {mono} has no stored class")
    by_op = defaultdict(list)
    for s, o in mono:
        by_op[o].append(s)
    shape = (len(by_op["+"]), len(by_op["-"]), len(by_op["z"]))
    zs = tuple(sorted(by_op["z"]))
    if shape == (0, 0, 1):
        return Factor("z", zs)
    if shape == (1, 1, 0):
        return Factor("pm", (by_op["+"][0], by_op["-"][0]))
    if shape == (0, 0, 2):
        return Factor("zz", zs)
    if shape == (1, 1, 1):
        return Factor("pmz", (by_op["+"][0], by_op["-"][0], zs[0]))
    if shape == (0, 0, 3):
        return Factor("zzz", zs)
    raise DomainError(f"monomial {mono} is outside the stored classes")


@dataclass(frozen=True)
class Term:
    """``coef * Gamma[gamma] * prod(factors)``, summed over ``q`` if it appears."""

    coef: complex
    gamma: tuple
    factors: tuple

    @property
    def has_free(self) -> bool:
        return FREE in self.gamma or any(FREE in f.idx for f in self.factors)

    def __str__(self):
        c = self.coef
        cs = f"{c.real:+g}" if c.imag == 0 else f"+({c:g})"
        body = " ".join(str(f) for f in self.factors if f.cls != "one") or "1"
        g = f"G[{','.join(self.gamma)}]"
        s = f"{cs} {g} {body}"
        return f"sum_q {s}" if self.has_free else s


def _adjoint_dissipator_closed(A, s1, s2):
    """sigma+_{s1} A sigma-_{s2} - 1/2 sigma+_{s1} sigma-_{s2} A - 1/2 A sigma+_{s1} sigma-_{s2}."""
    sp = monomial((s1, "+"))
    sm = monomial((s2, "-"))
    spsm = multiply(sp, sm)
    return add(multiply(multiply(sp, A), sm),
               scale(multiply(spsm, A), -0.5),
               scale(multiply(A, spsm), -0.5))


def _expand(mono, order):
    """Replace a monomial by stored-class products; returns [(coef, factors)]."""
    if charge(mono) != 0:
        return []
    if len(mono) <= order:
        return [(1.0, (factor_of(mono),))]
    if len(mono) > order + 1:
        raise DomainError(f"monomial on {len(mono)} sites exceeds closure order {order} + 1")
    return [(c, tuple(sorted(factor_of(b) for b in blocks)))
            for c, blocks in cumulant_expand(mono)]


def derive_eom(cls: str, order: int):
    """Closed equation of motion for correlator class ``cls`` at cumulant ``order``.

    Returns a tuple of Terms on the class sites (and the free site ``q``).
    """
    if order not in CLASSES_BY_ORDER:
        raise DomainError(f"unsupported truncation order {order}")
    if cls not in CLASSES_BY_ORDER[order]:
        raise DomainError(f"class {cls!r} is not part of the order-{order} system")
    return _derive(cls, order)


@lru_cache(maxsize=None)
def _derive(cls, order):
    A = monomial(*CLASS_TEMPLATES[cls])
    sites = [s for s, _ in A]
    acc: dict = defaultdict(complex)

    def collect(poly, gamma, weight=1.0):
        for mono, c in poly.items():
            for c2, factors in _expand(mono, order):
                factors = tuple(f for f in factors if f.cls != "one") or (Factor("one", ()),)
                acc[(gamma, factors)] += weight * c * c2

    for s1 in sites:
        for s2 in sites:
            collect(_adjoint_dissipator_closed(A, s1, s2), tuple(sorted((s1, s2))))
    q_minus = monomial((FREE, "-"))
    q_plus = monomial((FREE, "+"))
    for s in sites:
        # n = s, m = q:  1/2 [sigma+_s, A] sigma-_q
        collect(multiply(commutator(monomial((s, "+")), A), q_minus), (s, FREE), 0.5)
        # n = q, m = s:  1/2 sigma+_q [A, sigma-_s]
        collect(multiply(q_plus, commutator(A, monomial((s, "-")))), (s, FREE), 0.5)

    terms = []
    for (gamma, factors), c in sorted(acc.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        if abs(c) < 1e-14:
            continue
        c = complex(c)
        if c.imag == 0:
            c = complex(c.real, 0.0)
        terms.append(Term(c, gamma, factors))
    return tuple(terms)


@dataclass(frozen=True)
class MomentSystem:
    order: int
    classes: tuple
    equations: dict  # class -> tuple of Terms

    def counts(self, n: int) -> dict:
        """Number of stored variables per class for ``n`` emitters."""
        pairs = n * (n - 1) // 2
        out = {"z": n, "pm": pairs, "zz": pairs}
        if self.order == 3:
            out["pmz"] = pairs * max(n - 2, 0)
            out["zzz"] = n * (n - 1) * (n - 2) // 6
        return out

    def dump(self) -> str:
        """Plain-text listing of every derived equation."""
        lines = [f"# cumulant order {self.order}"]
        for cls in self.classes:
            sites = ",".join(s for s, _ in CLASS_TEMPLATES[cls])
            lines.append(f"d/dt {cls}[{sites}] =")
            lines.extend(f"    {t}" for t in self.equations[cls])
        return "\n".join(lines)


def compile_system(order: int, verify: bool = True) -> MomentSystem:
    """Derive every class template at ``order``.

    With ``verify`` the templates are checked on random U(1)-symmetric states
    of ``order + 1`` emitters against exact Lindblad moment derivatives that
    are closed numerically, term by term (see ``verification``).
    """
    if order not in CLASSES_BY_ORDER:
        raise DomainError(f"unsupported truncation order {order}")
    system = _compile(order)
    if verify:
        _verify_cached(order)
    return system


@lru_cache(maxsize=None)
def _compile(order):
    classes = CLASSES_BY_ORDER[order]
    return MomentSystem(order, classes, {c: derive_eom(c, order) for c in classes})


@lru_cache(maxsize=None)
def _verify_cached(order):
    from .verification import verify_templates
    err = verify_templates(_compile(order), seed=1234)
    if err > 1e-10:
        raise DomainError(f"order-{order} templates disagree with exact dynamics (err={err:.2e})")
    return err
