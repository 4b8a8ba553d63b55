"""Distributions on (possibly truncated) posets: PDF/UPF conversion, rates,
moment identities and the basic constructions.

A :class:`Pdf` on a truncated poset describes the unrepresented mass through
*tail atoms*.  An atom ``(generators, mass)`` stands for probability mass
sitting on unrepresented elements ``z`` whose represented lower set is the
union of ``D[g]`` over the generators ``g``.  For trees each boundary node is
its own atom; for the lexicographic sum of antichains one atom covers the
whole top level.  This is exactly the information needed to evaluate ``F``
and the generalized UPF on represented elements.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import comb
from numbers import Number
from typing import Callable, Iterable, Sequence

from .errors import (
    InconsistentUpf,
    InputError,
    InvalidDistribution,
    NonPositivePdf,
    NotATree,
    TailBoundTooLoose,
    TooManyChildren,
    TruncatedUpSet,
)
from .poset import (
    Poset,
    _bits,
    classify,
    cumulative_table,
    format_number,
    lex_product_poset,
    parse_number,
    poset_from_dict,
    poset_to_dict,
    product_poset,
)

FLOAT_TOL = 1e-9
SUM_TOL = 1e-12


def is_exact(values: Iterable) -> bool:
    return all(isinstance(v, (int, Fraction)) and not isinstance(v, bool) for v in values)


@dataclass(frozen=True)
class TailAtom:
    generators: frozenset
    mass: Number


@dataclass(frozen=True, eq=False)
class Pdf:
    """Probability table over the represented elements of ``poset``.

    ``tail`` is ``None`` when nothing is known about unrepresented mass beyond
    its total (``1 - sum(probs)``), or a tuple of :class:`TailAtom`.
    """

    poset: Poset
    probs: tuple
    tail: tuple | None = None

    def __post_init__(self):
        probs = tuple(self.probs)
        object.__setattr__(self, "probs", probs)
        P = self.poset
        if len(probs) != P.n:
            raise InvalidDistribution(f"{len(probs)} probabilities for {P.n} elements")
        for x, v in enumerate(probs):
            if not v > 0:
                raise InvalidDistribution(f"probability at element {x} is {v}; support must be S")
        if self.tail is not None:
            atoms = _merge_atoms(self.tail)
            for a in atoms:
                if not a.mass > 0:
                    raise InvalidDistribution("tail atoms need positive mass")
                if not a.generators or not a.generators <= P.boundary:
                    raise InvalidDistribution("tail atom generators must be boundary elements")
            object.__setattr__(self, "tail", atoms)
        total = sum(probs) + (sum(a.mass for a in self.tail) if self.tail else 0)
        exact = self.exact
        if self.tail is None and P.is_truncated:
            ok = total <= 1 if exact else total <= 1 + SUM_TOL
        else:
            ok = total == 1 if exact else abs(total - 1) <= SUM_TOL
        if not ok:
            raise InvalidDistribution(f"total mass {total} != 1")
        if not P.is_truncated and self.tail_mass != 0:
            raise InvalidDistribution("tail mass on a poset without boundary")

    @property
    def exact(self) -> bool:
        vals = list(self.probs)
        if self.tail:
            vals += [a.mass for a in self.tail]
        return is_exact(vals)

    @property
    def tail_mass(self):
        if self.tail is None:
            return 1 - sum(self.probs)
        return sum((a.mass for a in self.tail), 0 * self.probs[0])

    def upper_tail(self) -> list:
        """Unrepresented part of P(X >= x) for every represented x."""
        P = self.poset
        zero = 0 * self.probs[0]
        out = [zero] * P.n
        if not self.tail:
            return out
        for atom in self.tail:
            mask = 0
            for g in atom.generators:
                mask |= P.down_mask(g)
            for x in _bits(mask):
                out[x] += atom.mass
        return out

    def __getitem__(self, x):
        return self.probs[x]

    def __len__(self):
        return len(self.probs)


def _merge_atoms(atoms) -> tuple:
    merged: dict[frozenset, Number] = {}
    for a in atoms:
        if isinstance(a, TailAtom):
            gens, mass = a.generators, a.mass
        else:
            gens, mass = a
        gens = frozenset(gens)
        merged[gens] = merged.get(gens, 0) + mass
    return tuple(TailAtom(g, m) for g, m in sorted(merged.items(), key=lambda kv: sorted(kv[0])))


def uniform_pdf(P: Poset) -> Pdf:
    if P.is_truncated:
        raise InvalidDistribution("uniform law needs a finite poset")
    return Pdf(P, tuple(Fraction(1, P.n) for _ in range(P.n)), tail=())


# -- PDF <-> UPF ---------------------------------------------------------


def upf_from_pdf(f: Pdf) -> list:
    """F(x) = sum of f over I[x] (plus the tail atoms above x)."""
    P = f.poset
    if P.is_truncated and f.tail is None:
        raise TruncatedUpSet("truncated law without tail atoms; F is not determined")
    tail = f.upper_tail()
    out = []
    for x in range(P.n):
        s = tail[x]
        for t in _bits(P.up_mask(x)):
            s += f.probs[t]
        out.append(s)
    return out


def pdf_from_upf_tree(T: Poset, F: Sequence, boundary_child_sums: dict | None = None) -> Pdf:
    """Recover f(x) = F(x) - sum_{y in A(x)} F(y) on a rooted tree.

    ``boundary_child_sums[b]`` is the sum of F over the unrepresented children of
    boundary node ``b``; it becomes that node's tail atom.
    """
    if not classify(T).is_rooted_tree:
        raise NotATree("covering graph is not a rooted tree")
    extra = dict(boundary_child_sums or {})
    missing = T.boundary - set(extra)
    if missing:
        raise TruncatedUpSet(f"no child sums for boundary nodes {sorted(missing)}")
    probs = []
    for x in range(T.n):
        below = sum((F[y] for y in T.children(x)), 0 * F[x]) + extra.get(x, 0)
        v = F[x] - below
        if not v > 0:
            raise NonPositivePdf(T.labels[x], v)
        probs.append(v)
    tail = [({b}, m) for b, m in extra.items() if m]
    return Pdf(T, tuple(probs), tail=tuple(tail))


def generalized_upf(f: Pdf, A: Iterable[int]):
    """F(A) = P(X >= a for every a in A)."""
    P = f.poset
    A = list(A)
    if not A:
        return 1 - 0 * f.probs[0]
    if P.is_truncated and f.tail is None:
        raise TruncatedUpSet("generalized UPF needs tail atoms on a truncated poset")
    common = -1
    for a in A:
        common &= P.up_mask(a)
    total = sum((f.probs[x] for x in _bits(common)), 0 * f.probs[0])
    for atom in f.tail or ():
        reach = 0
        for g in atom.generators:
            reach |= P.down_mask(g)
        if all((reach >> a) & 1 for a in A):
            total += atom.mass
    return total


def pdf_from_generalized_upf(P: Poset, F_gen: Callable[[frozenset], Number],
                             max_children: int = 20) -> Pdf:
    """Inclusion-exclusion over covers: f(x) = sum_{B subset A(x)} (-1)^|B| F({x} u B)."""
    if P.is_truncated:
        raise TruncatedUpSet("recovery needs every cover of every element represented")
    probs = []
    for x in range(P.n):
        kids = P.children(x)
        if len(kids) > max_children:
            raise TooManyChildren(f"element {x} has {len(kids)} covers")
        v = 0
        for size in range(len(kids) + 1):
            sign = -1 if size % 2 else 1
            for B in combinations(kids, size):
                v += sign * F_gen(frozenset((x,) + B))
        if not v > 0:
            raise InconsistentUpf(f"recovered f({x}) = {v}")
        probs.append(v)
    try:
        return Pdf(P, tuple(probs), tail=())
    except InvalidDistribution as exc:
        raise InconsistentUpf(str(exc)) from exc


# -- rates ---------------------------------------------------------------


def rate(f: Pdf) -> list:
    """r(x) = f(x) / F(x)."""
    F = upf_from_pdf(f)
    return [fx / Fx for fx, Fx in zip(f.probs, F)]


def check_constant_rate(f: Pdf, tol: float = FLOAT_TOL):
    """Return the rate constant if f = alpha F (exactly on the rational track), else None."""
    P = f.poset
    F = upf_from_pdf(f)
    x0 = min(classify(P).minimal_elements)
    alpha = f.probs[x0] / F[x0]
    if f.exact:
        ok = all(fx == alpha * Fx for fx, Fx in zip(f.probs, F))
    else:
        ok = max(abs(fx - alpha * Fx) for fx, Fx in zip(f.probs, F)) <= tol
    return alpha if ok else None


def upper_equivalence_classes(P: Poset) -> list[frozenset]:
    """Partition by identical (represented) strict up-sets, ordered by first element."""
    groups: dict[int, list[int]] = {}
    for x in range(P.n):
        groups.setdefault(P.up_mask(x) & ~(1 << x), []).append(x)
    return sorted((frozenset(g) for g in groups.values()), key=min)


# -- moment identities ---------------------------------------------------


@dataclass
class MomentReport:
    rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r["ok"] for r in self.rows)

    def to_csv(self) -> str:
        return rows_to_csv(self.rows, ["check", "n", "lhs", "rhs", "abs_err"])


def moment_identities(f: Pdf, n_max: int, tail_bound: Callable[[str, int], Number] | None = None,
                      max_tail: float = 1e-9, tol: float = FLOAT_TOL) -> MomentReport:
    """Check sum_x lambda_n(x) F(x) = E[lambda_{n+1}(X)] for n <= n_max and, for a
    constant-rate law, E[lambda_n(X)] = alpha^-n.

    On a truncated law the unrepresented contributions are unknown;
    ``tail_bound(check, n)`` must certify them and may not exceed ``max_tail``.
    """
    P = f.poset
    truncated = f.tail_mass != 0
    if truncated and tail_bound is None:
        raise TailBoundTooLoose("truncated law without a certified tail bound")
    F = upf_from_pdf(f)
    lam = cumulative_table(P, n_max + 1)
    alpha = check_constant_rate(f, tol)
    report = MomentReport()

    def add(check, n, lhs, rhs):
        err = abs(lhs - rhs)
        bound = tail_bound(check, n) if truncated else 0
        if truncated and bound > max_tail:
            raise TailBoundTooLoose(f"{check} n={n}: tail bound {float(bound):.3g} > {max_tail}")
        slack = bound if f.exact else bound + tol
        report.rows.append({"check": check, "n": n, "lhs": lhs, "rhs": rhs,
                            "abs_err": err, "bound": bound, "ok": err <= slack})

    for n in range(n_max + 1):
        lhs = sum(l * Fx for l, Fx in zip(lam[n], F))
        rhs = sum(l * fx for l, fx in zip(lam[n + 1], f.probs))
        add("expect1", n, lhs, rhs)
    if alpha is not None:
        for n in range(n_max + 1):
            lhs = sum(l * fx for l, fx in zip(lam[n], f.probs))
            add("constant_rate", n, lhs, 1 / alpha ** n if f.exact else alpha ** -n)
    return report


def rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_csv_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, Fraction):
        return format_number(v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


# -- constructions -------------------------------------------------------


def mixture(dists: Sequence[Pdf], weights: Sequence) -> Pdf:
    """Convex combination of laws on the same poset."""
    if not dists or len(dists) != len(weights):
        raise InputError("need one weight per distribution")
    P = dists[0].poset
    if any(d.poset.covers != P.covers or d.poset.boundary != P.boundary for d in dists):
        raise InputError("mixture components must live on the same poset")
    if sum(weights) != 1 and abs(sum(weights) - 1) > SUM_TOL:
        raise InputError("weights must sum to 1")
    probs = tuple(sum(w * d.probs[x] for w, d in zip(weights, dists)) for x in range(P.n))
    if any(d.tail is None for d in dists) and P.is_truncated:
        tail = None
    else:
        tail = tuple((a.generators, w * a.mass) for w, d in zip(weights, dists) for a in d.tail or ())
    return Pdf(P, probs, tail=tail)


def product_dist(f: Pdf, g: Pdf) -> Pdf:
    """Law of (X, Y) for independent X ~ f, Y ~ g on the product order."""
    P, Q = f.poset, g.poset
    for d in (f, g):
        if d.poset.is_truncated and d.tail is None:
            raise TruncatedUpSet("product of truncated laws needs tail atoms")
    R = product_poset(P, Q)
    probs = tuple(f.probs[x] * g.probs[y] for x in range(P.n) for y in range(Q.n))
    tail = []
    for b in g.tail or ():
        for x in range(P.n):
            tail.append(({x * Q.n + q for q in b.generators}, f.probs[x] * b.mass))
    for a in f.tail or ():
        for y in range(Q.n):
            tail.append(({p * Q.n + y for p in a.generators}, a.mass * g.probs[y]))
        for b in g.tail or ():
            tail.append(({p * Q.n + q for p in a.generators for q in b.generators},
                         a.mass * b.mass))
    return Pdf(R, probs, tail=tuple(tail))


def lex_product(f: Pdf, second) -> Pdf:
    """Law of (X, Y) on the lexicographic product, Y independent of X.

    ``second`` is either a finite poset (Y uniform on it) or a finite law.
    With f of constant rate alpha and Y uniform on an antichain of size k the
    result has constant rate alpha / (k(1 - alpha) + alpha).
    """
    P = f.poset
    if P.is_truncated and f.tail is None:
        raise TruncatedUpSet("lexicographic product of a truncated law needs tail atoms")
    g = uniform_pdf(second) if isinstance(second, Poset) else second
    Q = g.poset
    R = lex_product_poset(P, Q)
    probs = tuple(f.probs[x] * g.probs[y] for x in range(P.n) for y in range(Q.n))
    tops = sorted(classify(Q).maximal_elements)
    tail = [({p * Q.n + t for p in a.generators for t in tops}, a.mass) for a in f.tail or ()]
    return Pdf(R, probs, tail=tuple(tail) if f.tail is not None else None)


# -- serialisation -------------------------------------------------------


def pdf_to_dict(f: Pdf) -> dict:
    d = {
        "poset": poset_to_dict(f.poset),
        "probs": {str(i): format_number(v) for i, v in enumerate(f.probs)},
        "tail_mass": format_number(f.tail_mass),
    }
    if f.tail is not None:
        d["tail_atoms"] = [{"generators": sorted(a.generators), "mass": format_number(a.mass)}
                           for a in f.tail]
    return d


def pdf_from_dict(d: dict, poset: Poset | None = None) -> Pdf:
    if not isinstance(d, dict) or "probs" not in d:
        raise InputError("distribution JSON needs 'probs'")
    P = poset if poset is not None else poset_from_dict(d.get("poset"))
    probs = [None] * P.n
    for k, v in d["probs"].items():
        probs[int(k)] = parse_number(v)
    if any(v is None for v in probs):
        raise InputError("probs must cover every element")
    tail = None
    if "tail_atoms" in d:
        tail = tuple((set(a["generators"]), parse_number(a["mass"])) for a in d["tail_atoms"])
    elif not P.is_truncated:
        tail = ()
    return Pdf(P, tuple(probs), tail=tail)
