"""Locally finite posets stored as covering DAGs, plus the incidence algebra.

Elements are dense integer ids ``0..n-1``.  The order relation is cached as
Python-int bitsets: bit ``t`` of ``down_mask(x)`` is set iff ``t <= x``.
Everything exact is done with ``int``/``Fraction``; float tables are accepted
wherever a table is accepted.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from numbers import Number
from typing import Iterable, Sequence

from .errors import (
    CycleDetected,
    GfDiverges,
    InputError,
    NotComparable,
    RedundantCover,
    TruncatedUpSet,
)


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _topological_order(n, upper, lower):
    indeg = [len(lower[y]) for y in range(n)]
    ready = [x for x in range(n) if indeg[x] == 0]
    order = []
    while ready:
        x = ready.pop()
        order.append(x)
        for y in upper[x]:
            indeg[y] -= 1
            if indeg[y] == 0:
                ready.append(y)
    if len(order) != n:
        raise CycleDetected(x for x in range(n) if indeg[x] > 0)
    # deterministic order regardless of stack behaviour: stable by (rank, id)
    rank = [0] * n
    for x in order:
        for y in upper[x]:
            rank[y] = max(rank[y], rank[x] + 1)
    return sorted(range(n), key=lambda x: (rank[x], x)), rank


class Poset:
    """Immutable finite (possibly truncated) poset given by its covering edges.

    ``covers`` holds pairs ``(x, y)`` meaning *y covers x*.  ``boundary`` lists
    represented elements whose strict up-sets continue beyond the
    representation.
    """

    def __init__(self, n: int, covers: Iterable[tuple[int, int]], boundary: Iterable[int] = (),
                 labels: Sequence | None = None):
        if n < 0:
            raise InputError("n must be non-negative")
        pairs = [(int(x), int(y)) for x, y in covers]
        if len(set(pairs)) != len(pairs):
            raise InputError("duplicate covering pairs")
        upper = [[] for _ in range(n)]
        lower = [[] for _ in range(n)]
        for x, y in pairs:
            if not (0 <= x < n and 0 <= y < n):
                raise InputError(f"cover {(x, y)} out of range for n={n}")
            if x == y:
                raise CycleDetected((x,))
            upper[x].append(y)
            lower[y].append(x)
        order, rank = _topological_order(n, upper, lower)

        down = [0] * n
        for y in order:
            mask = 1 << y
            for x in lower[y]:
                mask |= down[x]
            down[y] = mask
        for y in range(n):
            for x in lower[y]:
                for p in lower[y]:
                    if p != x and (down[p] >> x) & 1:
                        raise RedundantCover((x, y))
        up = [0] * n
        for x in reversed(order):
            mask = 1 << x
            for y in upper[x]:
                mask |= up[y]
            up[x] = mask

        bd = frozenset(int(b) for b in boundary)
        if any(not 0 <= b < n for b in bd):
            raise InputError("boundary id out of range")

        self.n = n
        self.covers = tuple(sorted(pairs))
        self.upper_covers = tuple(tuple(sorted(u)) for u in upper)
        self.lower_covers = tuple(tuple(sorted(l)) for l in lower)
        self.boundary = bd
        self.labels = tuple(labels) if labels is not None else tuple(range(n))
        if len(self.labels) != n:
            raise InputError("labels must have one entry per element")
        self.order = tuple(order)
        self.rank = tuple(rank)
        self._down = tuple(down)
        self._up = tuple(up)
        self._index = None
        self._mobius_rows: dict[int, dict[int, int]] = {}
        self._lock = threading.Lock()
        self._down_lists = None

    # -- order relation --------------------------------------------------

    @property
    def is_truncated(self) -> bool:
        return bool(self.boundary)

    def leq(self, x: int, y: int) -> bool:
        return bool((self._down[y] >> x) & 1)

    def down_mask(self, x: int) -> int:
        return self._down[x]

    def up_mask(self, x: int) -> int:
        return self._up[x]

    def down_set(self, x: int) -> frozenset[int]:
        return frozenset(_bits(self._down[x]))

    def up_set(self, x: int) -> frozenset[int]:
        """Represented part of I[x]; see :meth:`up_truncated` for completeness."""
        return frozenset(_bits(self._up[x]))

    def strict_up(self, x: int) -> frozenset[int]:
        return frozenset(_bits(self._up[x] & ~(1 << x)))

    def strict_down(self, x: int) -> frozenset[int]:
        return frozenset(_bits(self._down[x] & ~(1 << x)))

    def children(self, x: int) -> tuple[int, ...]:
        """Upper covers A(x)."""
        return self.upper_covers[x]

    def parents(self, x: int) -> tuple[int, ...]:
        return self.lower_covers[x]

    def up_truncated(self, x: int) -> bool:
        """True when I[x] meets the boundary, i.e. the represented up-set is incomplete."""
        return any((self._up[x] >> b) & 1 for b in self.boundary)

    def down_list(self, x: int) -> tuple[int, ...]:
        if self._down_lists is None:
            self._down_lists = tuple(tuple(_bits(m)) for m in self._down)
        return self._down_lists[x]

    def index_of(self, label) -> int:
        if self._index is None:
            self._index = {lab: i for i, lab in enumerate(self.labels)}
        return self._index[label]

    def interval(self, x: int, y: int) -> frozenset[int]:
        return frozenset(_bits(self._up[x] & self._down[y]))

    def __len__(self):
        return self.n

    def __repr__(self):
        extra = f", boundary={sorted(self.boundary)}" if self.boundary else ""
        return f"Poset(n={self.n}, covers={len(self.covers)}{extra})"


def build_poset(n: int, cover_pairs, boundary=(), labels=None) -> Poset:
    return Poset(n, cover_pairs, boundary=boundary, labels=labels)


def transitive_reduce(pairs) -> list[tuple[int, int]]:
    """Covering pairs of the order generated by ``pairs`` (a DAG relation).

    Reflexive pairs are ignored.
    """
    pairs = {(int(x), int(y)) for x, y in pairs if x != y}
    nodes = sorted({v for p in pairs for v in p})
    idx = {v: i for i, v in enumerate(nodes)}
    n = len(nodes)
    succ = [[] for _ in range(n)]
    pred = [[] for _ in range(n)]
    for x, y in pairs:
        succ[idx[x]].append(idx[y])
        pred[idx[y]].append(idx[x])
    order, _ = _topological_order(n, succ, pred)
    below = [0] * n  # strict down-sets
    for y in order:
        mask = 0
        for x in pred[y]:
            mask |= below[x] | (1 << x)
        below[y] = mask
    out = []
    for y in range(n):
        for x in set(pred[y]):
            # x -> y is a cover iff no other predecessor p has x strictly below it
            if not any(p != x and (below[p] >> x) & 1 for p in pred[y]):
                out.append((nodes[x], nodes[y]))
    return sorted(out)


@dataclass(frozen=True)
class Classification:
    is_antichain: bool
    is_chain: bool
    is_connected: bool
    is_rooted_tree: bool
    maximal_elements: frozenset
    minimal_elements: frozenset


def classify(P: Poset) -> Classification:
    """Structural flags.  Boundary elements are not reported as maximal."""
    parent = list(range(P.n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for x, y in P.covers:
        parent[find(x)] = find(y)
    roots = {find(x) for x in range(P.n)}
    minimal = frozenset(x for x in range(P.n) if not P.lower_covers[x])
    maximal = frozenset(x for x in range(P.n)
                        if not P.upper_covers[x] and x not in P.boundary)
    tree = (len(minimal) == 1 and P.n > 0
            and all(len(P.lower_covers[x]) <= 1 for x in range(P.n)))
    chain = tree and all(len(u) <= 1 for u in P.upper_covers)
    return Classification(
        is_antichain=not P.covers,
        is_chain=chain,
        is_connected=len(roots) <= 1,
        is_rooted_tree=tree,
        maximal_elements=maximal,
        minimal_elements=minimal,
    )


# -- incidence algebra ---------------------------------------------------


def _mobius_row(P: Poset, x: int) -> dict[int, int]:
    row = P._mobius_rows.get(x)
    if row is not None:
        return row
    targets = sorted(P.strict_up(x), key=lambda y: (P.rank[y], y))
    row = {x: 1}
    nonzero = [(x, 1)]
    for y in targets:
        dy = P.down_mask(y)
        m = -sum(v for t, v in nonzero if (dy >> t) & 1)
        row[y] = m
        if m:
            nonzero.append((y, m))
    # racing threads compute identical rows; the dict store is atomic
    with P._lock:
        P._mobius_rows.setdefault(x, row)
    return P._mobius_rows[x]


def mobius(P: Poset, x: int, y: int) -> int:
    """m(x, y) via the defining recursion m(x,y) = -sum_{x<=t<y} m(x,t)."""
    if not P.leq(x, y):
        raise NotComparable(f"{x} is not below {y}")
    return _mobius_row(P, x)[y]


def lower_op(P: Poset, f: Sequence) -> list:
    """(Lf)(x) = sum of f over D[x]."""
    _check_len(P, f)
    return [sum((f[t] for t in P.down_list(x)), 0 * f[x]) for x in range(P.n)]


def upper_op(P: Poset, f: Sequence, tail: Sequence | None = None) -> list:
    """(Uf)(x) = sum of f over represented I[x], plus ``tail[x]`` when given.

    On a truncated poset ``tail`` must carry the unrepresented part of each
    up-set sum; without it, any element whose up-set reaches the boundary
    raises :class:`TruncatedUpSet`.
    """
    _check_len(P, f)
    if tail is None and P.is_truncated:
        bad = [x for x in range(P.n) if P.up_truncated(x)]
        if bad:
            raise TruncatedUpSet(f"up-sets of {len(bad)} elements reach the boundary")
    out = []
    for x in range(P.n):
        s = sum((f[t] for t in _bits(P.up_mask(x))), 0 * f[x])
        if tail is not None:
            s += tail[x]
        out.append(s)
    return out


def mobius_invert_lower(P: Poset, g: Sequence) -> list:
    """Return f with lower_op(P, f) == g, as f(x) = sum_{t<=x} g(t) m(t, x)."""
    _check_len(P, g)
    f = [0 * v for v in g]
    for t in range(P.n):
        gt = g[t]
        if not gt:
            continue
        for y, m in _mobius_row(P, t).items():
            if m:
                f[y] += gt * m
    return f


def cumulative(P: Poset, n: int) -> list[int]:
    """lambda_n = L^n 1 (integer valued)."""
    if n < 0:
        raise ValueError("order must be non-negative")
    lam = [1] * P.n
    for _ in range(n):
        lam = lower_op(P, lam)
    return lam


def cumulative_table(P: Poset, n_max: int) -> list[list[int]]:
    tables = [[1] * P.n]
    for _ in range(n_max):
        tables.append(lower_op(P, tables[-1]))
    return tables


@dataclass(frozen=True)
class GfValue:
    partial: Number          # sum_{k <= n_max} lambda_k(x) t^k
    tail_bound: Number       # bound on |remainder|
    closed_form: Number | None  # exact Lambda(x, t) for chains and trees


def cumulative_gf(P: Poset, x: int, t, n_max: int = 50) -> GfValue:
    """Generating function Lambda(x, t) = sum_k lambda_k(x) t^k.

    The remainder is bounded with lambda_k(x) <= C(k+s-1, s-1), s = |D[x]|,
    since a multichain in D[x] is determined by its multiset of entries.  On
    rooted trees (chains included) the bound is attained and the closed form
    1/(1-t)^(d(x)+1) is returned.
    """
    if abs(t) >= 1:
        raise GfDiverges(f"|t| = {abs(t)} >= 1")
    lam = cumulative_table(P, n_max)
    partial = sum(lam[k][x] * t ** k for k in range(n_max + 1))
    s = len(P.down_list(x))
    a = abs(t)
    one = 1 if isinstance(a, (int, Fraction)) else 1.0
    majorant = sum(comb(k + s - 1, s - 1) * a ** k for k in range(n_max + 1))
    tail = one / (one - a) ** s - majorant
    closed = None
    if classify(P).is_rooted_tree:
        closed = one / (one - t) ** s
    return GfValue(partial, tail, closed)


def _check_len(P, f):
    if len(f) != P.n:
        raise InputError(f"table has {len(f)} entries, poset has {P.n}")


# -- constructions -------------------------------------------------------


def product_poset(P: Poset, Q: Poset) -> Poset:
    """Product order; element (x, y) gets id ``x * Q.n + y``."""
    covers = []
    for x in range(P.n):
        for y in range(Q.n):
            for x2 in P.upper_covers[x]:
                covers.append((x * Q.n + y, x2 * Q.n + y))
            for y2 in Q.upper_covers[y]:
                covers.append((x * Q.n + y, x * Q.n + y2))
    boundary = [x * Q.n + y for x in range(P.n) for y in range(Q.n)
                if x in P.boundary or y in Q.boundary]
    labels = [(a, b) for a in P.labels for b in Q.labels]
    return Poset(P.n * Q.n, covers, boundary=boundary, labels=labels)


def lex_product_poset(P: Poset, Q: Poset) -> Poset:
    """Lexicographic product: (x, y) < (x', y') iff x < x', or x = x' and y < y'.

    ``Q`` must be finite.  Element (x, y) gets id ``x * Q.n + y``.
    """
    if Q.is_truncated:
        raise InputError("second factor of a lexicographic product must be finite")
    cq = classify(Q)
    covers = []
    for x in range(P.n):
        for y in range(Q.n):
            for y2 in Q.upper_covers[y]:
                covers.append((x * Q.n + y, x * Q.n + y2))
        for x2 in P.upper_covers[x]:
            for top in sorted(cq.maximal_elements):
                for bottom in sorted(cq.minimal_elements):
                    covers.append((x * Q.n + top, x2 * Q.n + bottom))
    boundary = [x * Q.n + y for x in P.boundary for y in sorted(cq.maximal_elements)]
    labels = [(a, b) for a in P.labels for b in Q.labels]
    return Poset(P.n * Q.n, covers, boundary=boundary, labels=labels)


# -- serialisation -------------------------------------------------------


def format_number(v):
    if isinstance(v, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(v, int):
        return str(v)
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}" if v.denominator != 1 else str(v.numerator)
    return float(v)


def parse_number(v):
    if isinstance(v, str):
        try:
            return Fraction(v)
        except ValueError as exc:
            raise InputError(f"not a rational: {v!r}") from exc
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InputError(f"not a number: {v!r}")
    return v


def poset_to_dict(P: Poset) -> dict:
    d = {"n": P.n, "covers": [list(c) for c in P.covers]}
    if P.boundary:
        d["boundary"] = sorted(P.boundary)
    if P.labels != tuple(range(P.n)):
        d["labels"] = [label_str(lab) for lab in P.labels]
    return d


def poset_from_dict(d: dict) -> Poset:
    if not isinstance(d, dict) or "n" not in d or "covers" not in d:
        raise InputError("poset JSON needs 'n' and 'covers'")
    try:
        n = int(d["n"])
        covers = [(int(a), int(b)) for a, b in d["covers"]]
        boundary = [int(b) for b in d.get("boundary", [])]
    except (TypeError, ValueError) as exc:
        raise InputError(f"malformed poset JSON: {exc}") from exc
    return Poset(n, covers, boundary=boundary, labels=d.get("labels"))


def table_to_dict(values: Sequence) -> dict:
    return {"values": {str(i): format_number(v) for i, v in enumerate(values)}}


def table_from_dict(d: dict, n: int) -> list:
    vals = d.get("values") if isinstance(d, dict) else None
    if not isinstance(vals, dict):
        raise InputError("table JSON needs a 'values' object")
    out = [None] * n
    for k, v in vals.items():
        i = int(k)
        if not 0 <= i < n:
            raise InputError(f"table key {k} out of range")
        out[i] = parse_number(v)
    if any(v is None for v in out):
        raise InputError("table does not cover every element")
    return out


def load_poset(path) -> Poset:
    with open(path) as fh:
        try:
            return poset_from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: {exc}") from exc


def label_str(label) -> str:
    """Stable text form of an element label (tree paths as '0.1.1', root as '')."""
    if isinstance(label, tuple):
        return ".".join(str(v) for v in label)
    if isinstance(label, frozenset):
        return "{" + ",".join(str(v) for v in sorted(label)) + "}"
    return str(label)
