"""Rooted trees: lazy generation, UPF characterization, construction of UPFs
from rate functions by child splitting, percolation, depth laws.

Nodes are root-to-node child-index paths (tuples of ints), so the k-ary tree
is literally the free semigroup on ``k`` letters under concatenation.
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from numbers import Number
from typing import Callable, Iterator, Mapping

import numpy as np

from .distributions import Pdf
from .errors import (
    ChildSumViolation,
    InvalidParams,
    LeafEncountered,
    LeafRateNotOne,
    RateBoundMissing,
    RootNotOne,
    WeakInequalityViolation,
)
from .poset import Poset

ROOT: tuple = ()


class DecayNotEstablished(UserWarning):
    """Level sums were reported but no rate lower bound was declared."""


@dataclass(frozen=True, eq=False)
class TreeRule:
    """Deterministic rule ``node -> number of children``.

    ``depth_only`` promises the count depends on ``len(node)`` alone, which lets
    level computations lump all nodes of a depth together.
    """

    children_count: Callable[[tuple], int]
    name: str = "custom"
    depth_only: bool = False
    max_depth_hint: int | None = None

    def children(self, node: tuple) -> tuple:
        return tuple(node + (i,) for i in range(self.children_count(node)))

    def nodes(self, depth: int) -> Iterator[tuple]:
        """Breadth-first enumeration of nodes with d(x) <= depth."""
        level = [ROOT]
        for _ in range(depth + 1):
            yield from level
            level = [c for x in level for c in self.children(x)]

    def level(self, m: int) -> list:
        level = [ROOT]
        for _ in range(m):
            level = [c for x in level for c in self.children(x)]
        return level

    def level_size(self, m: int) -> int:
        if not self.depth_only:
            return len(self.level(m))
        size, node = 1, ROOT
        for _ in range(m):
            size *= self.children_count(node)
            node = node + (0,)
        return size

    @property
    def arity(self) -> int | None:
        """k when every node has exactly k children (a free semigroup), else None."""
        return getattr(self, "_arity", None)


def kary(k: int) -> TreeRule:
    if k < 1:
        raise InvalidParams("k must be >= 1")
    rule = TreeRule(lambda node: k, name=f"kary:{k}", depth_only=True)
    object.__setattr__(rule, "_arity", k)
    return rule


def explicit_tree(children_counts: Mapping[tuple, int]) -> TreeRule:
    counts = {tuple(p): int(c) for p, c in children_counts.items()}
    return TreeRule(lambda node: counts.get(node, 0), name="explicit")


def _alternating(node):
    return 2 if len(node) % 2 == 0 else 1


RULES: dict[str, TreeRule] = {
    "binary": kary(2),
    "ternary": kary(3),
    "path": kary(1),
    # leafless, not a free semigroup: 2 children at even depth, 1 at odd depth
    "alternating": TreeRule(_alternating, name="alternating", depth_only=True),
}


def tree_poset(rule: TreeRule, depth: int) -> Poset:
    """Materialize nodes with d(x) <= depth; nodes at ``depth`` with children form the boundary."""
    nodes = list(rule.nodes(depth))
    index = {v: i for i, v in enumerate(nodes)}
    covers = [(index[v[:-1]], i) for i, v in enumerate(nodes) if v]
    boundary = [index[v] for v in nodes if len(v) == depth and rule.children_count(v) > 0]
    return Poset(len(nodes), covers, boundary=boundary, labels=nodes)


def depth(node: tuple) -> int:
    return len(node)


def is_prefix(x: tuple, y: tuple) -> bool:
    return y[: len(x)] == x


# -- splitters -----------------------------------------------------------


def _divide(mass, parts):
    if isinstance(mass, (int, Fraction)):
        return Fraction(mass) / parts
    return mass / parts


class UniformSplitter:
    """Equal shares among children."""

    symmetric = True

    def __call__(self, node, children, mass):
        share = _divide(mass, len(children))
        return [share] * len(children)

    def __repr__(self):
        return "UniformSplitter()"


class WeightedSplitter:
    """Fixed per-child-index weights, applied at nodes whose depth is in ``levels``
    (every depth when ``levels`` is None); uniform elsewhere.

    Weights applied at every depth give a multiplicative UPF, i.e. an
    exponential law on the free semigroup; restricting them to the root gives a
    constant-rate law that is not exponential.
    """

    symmetric = False

    def __init__(self, weights, levels=None):
        if any(not w > 0 for w in weights):
            raise InvalidParams("weights must be positive")
        self.weights = tuple(weights)
        self.levels = None if levels is None else frozenset(levels)

    def __call__(self, node, children, mass):
        if self.levels is not None and len(node) not in self.levels:
            return UniformSplitter()(node, children, mass)
        if len(children) != len(self.weights):
            raise InvalidParams(f"{len(self.weights)} weights for {len(children)} children")
        total = sum(self.weights)
        return [_divide(mass * w, total) for w in self.weights]

    def __repr__(self):
        return f"WeightedSplitter({self.weights}, levels={self.levels})"


class SeededSplitter:
    """Pseudo-random integer weights in 1..1000, reproducible per (seed, node)."""

    symmetric = False

    def __init__(self, seed: int):
        self.seed = int(seed)

    def __call__(self, node, children, mass):
        ss = np.random.SeedSequence(self.seed, spawn_key=(len(node),) + tuple(node))
        w = [int(v) for v in np.random.default_rng(ss).integers(1, 1001, size=len(children))]
        total = sum(w)
        return [_divide(mass * wi, total) for wi in w]

    def __repr__(self):
        return f"SeededSplitter({self.seed})"


SPLITTERS = {
    "uniform": lambda: UniformSplitter(),
    "70/30": lambda: WeightedSplitter((7, 3), levels={0}),
}


# -- lazy laws -----------------------------------------------------------


class TreeLaw:
    """Distribution on an (infinite) tree defined by a rate function and a splitter.

    F(root) = 1 and the children of x share (1 - r(x)) F(x) as the splitter
    dictates.  Values are memoized on first access, so simulation can go to any
    depth.  ``alpha`` is the declared lower bound on the rate.
    """

    def __init__(self, rule: TreeRule, rate: Callable[[tuple], Number], splitter=None,
                 alpha=None, constant_rate=None):
        self.rule = rule
        self._rate = rate
        self.splitter = splitter if splitter is not None else UniformSplitter()
        self.alpha = alpha
        self.constant_rate = constant_rate
        self._F: dict[tuple, Number] = {ROOT: 1 if _is_rational(rate(ROOT)) else 1.0}
        self._float: dict[tuple, tuple] = {}
        self._lock = threading.Lock()

    @property
    def symmetric(self) -> bool:
        """All nodes of a depth share F (lumpable by level)."""
        return bool(self.rule.depth_only and getattr(self.splitter, "symmetric", False)
                    and self.constant_rate is not None)

    @property
    def lump_level(self) -> int | None:
        """Depth from which every subtree is split uniformly, if the law allows lumping.

        Below that depth all descendants at a given depth of one node share F.
        """
        if not (self.rule.depth_only and self.constant_rate is not None):
            return None
        if getattr(self.splitter, "symmetric", False):
            return 0
        levels = getattr(self.splitter, "levels", None)
        if levels is not None:
            return max(levels, default=-1) + 1
        return None

    def rate(self, node):
        r = self._rate(node)
        kids = self.rule.children_count(node)
        if kids == 0 and r != 1:
            raise LeafRateNotOne(f"leaf {node!r} has rate {r}")
        if kids > 0 and not 0 < r < 1:
            raise InvalidParams(f"rate {r} at internal node {node!r} must lie in (0, 1)")
        return r

    def upf(self, node: tuple):
        F = self._F.get(node)
        if F is not None:
            return F
        parent = node[:-1]
        pF = self.upf(parent)
        kids = self.rule.children(parent)
        if node not in kids:
            raise KeyError(node)
        masses = self.splitter(parent, kids, (1 - self.rate(parent)) * pF)
        if len(masses) != len(kids) or any(not m > 0 for m in masses):
            raise InvalidParams(f"splitter returned {masses} at {parent!r}")
        with self._lock:
            for c, m in zip(kids, masses):
                self._F.setdefault(c, m)
        return self._F[node]

    def pdf(self, node: tuple):
        return self.rate(node) * self.upf(node)

    def upf_table(self, depth: int) -> dict:
        return {x: self.upf(x) for x in self.rule.nodes(depth)}

    def leq(self, x, y) -> bool:
        return is_prefix(x, y)

    def float_step(self, node):
        """(r, children, cumulative child weights) as floats for the descent walk."""
        cached = self._float.get(node)
        if cached is None:
            kids = self.rule.children(node)
            r = float(self.rate(node))
            w = np.cumsum([float(self.upf(c)) for c in kids]) if kids else np.zeros(0)
            if kids:
                w /= w[-1]
            cached = (r, kids, w)
            self._float[node] = cached
        return cached

    def sample_above(self, y: tuple, rng) -> tuple:
        """Draw from z -> f(z)/F(y) on I[y] by descent: stop with probability r, else
        move to a child with probability proportional to F."""
        node = y
        while True:
            r, kids, w = self.float_step(node)
            if not kids or rng.random() < r:
                return node
            node = kids[int(np.searchsorted(w, rng.random(), side="right"))]

    def sample(self, rng) -> tuple:
        return self.sample_above(ROOT, rng)

    def pdf_on(self, depth: int) -> Pdf:
        """Exact Pdf on the depth truncation, with one tail atom per boundary node."""
        T = tree_poset(self.rule, depth)
        probs = tuple(self.pdf(x) for x in T.labels)
        tail = [({i}, self.upf(x) - self.pdf(x)) for i, x in enumerate(T.labels) if i in T.boundary]
        return Pdf(T, probs, tail=tuple(tail))


def _is_rational(v) -> bool:
    return isinstance(v, (int, Fraction))


def constant_rate_law(rule: TreeRule, alpha, splitter=None) -> TreeLaw:
    if not 0 < alpha <= 1:
        raise InvalidParams("alpha must lie in (0, 1]")
    return TreeLaw(rule, lambda node: alpha, splitter, alpha=alpha, constant_rate=alpha)


# -- operations ----------------------------------------------------------


def _as_callable(F):
    if callable(F):
        return F
    return F.__getitem__


@dataclass
class TreeUpfReport:
    level_sums: list
    depth_checked: int
    alpha: Number | None = None
    decay_ok: bool | None = None
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.decay_ok is not False


def validate_upf_tree(rule: TreeRule, F, depth_checked: int, alpha=None,
                      weak: bool = False) -> TreeUpfReport:
    """Check F(root) = 1 and F(x) > sum of F over children for d(x) < depth_checked.

    Level sums s_n = sum_{A_n} F are reported for n <= depth_checked; with a
    declared rate bound ``alpha`` they must satisfy s_n <= (1 - alpha)^n.
    ``weak`` relaxes the child inequality to >= (raising WeakInequalityViolation).
    """
    F = _as_callable(F)
    if F(ROOT) != 1:
        raise RootNotOne(f"F(root) = {F(ROOT)}")
    sums = []
    level = [ROOT]
    for n in range(depth_checked + 1):
        sums.append(sum(F(x) for x in level))
        if n == depth_checked:
            break
        nxt = []
        for x in level:
            kids = rule.children(x)
            s = sum(F(c) for c in kids)
            fx = F(x)
            if weak:
                if s > fx:
                    raise WeakInequalityViolation(x, fx, s)
            elif not fx > s:
                raise ChildSumViolation(x, fx, s)
            nxt.extend(kids)
        level = nxt
    report = TreeUpfReport(sums, depth_checked, alpha)
    if alpha is None:
        warnings.warn("no rate bound declared; decay of level sums not established",
                      DecayNotEstablished, stacklevel=2)
        report.notes.append("decay not established")
    else:
        slack = 0 if all(_is_rational(s) for s in sums) and _is_rational(alpha) else 1e-12
        report.decay_ok = all(s <= (1 - alpha) ** n + slack for n, s in enumerate(sums))
    return report


def construct_upf_from_rate(rule: TreeRule, r: Callable[[tuple], Number], splitter=None,
                            depth: int = 6, alpha=None) -> dict:
    """UPF with rate function r, built top-down: F(root) = 1 and the children of x
    share (1 - r(x)) F(x).  A positive lower bound ``alpha`` on r must be declared."""
    if alpha is None or not alpha > 0:
        raise RateBoundMissing("declare alpha > 0 with r >= alpha")
    law = TreeLaw(rule, r, splitter, alpha=alpha)
    out = {}
    for x in rule.nodes(depth):
        rx = law.rate(x)
        if rx < alpha:
            raise RateBoundMissing(f"r({x!r}) = {rx} is below the declared bound {alpha}")
        out[x] = law.upf(x)
    return out


def construct_constant_rate_upf(rule: TreeRule, alpha, splitter=None, depth: int = 6) -> dict:
    """UPF of a rate-alpha law: children of x share (1 - alpha) F(x)."""
    if not 0 < alpha <= 1:
        raise InvalidParams("alpha must lie in (0, 1]")
    if alpha == 1:
        if rule.children_count(ROOT) != 0:
            raise InvalidParams("rate 1 is only possible on the one-point tree")
        return {ROOT: 1}
    for x in rule.nodes(depth):
        if rule.children_count(x) == 0:
            raise LeafEncountered(f"leaf {x!r}: no constant rate law with leaves")
    return constant_rate_law(rule, alpha, splitter).upf_table(depth)


def percolation_upf(rule: TreeRule, F, p, depth: int) -> dict:
    """F_p(x) = p^d(x) F(x): the UPF of the deepest node below X reachable from
    the root through working edges (each edge works with probability p)."""
    if not 0 < p <= 1:
        raise InvalidParams("p must lie in (0, 1]")
    Fc = _as_callable(F)
    if Fc(ROOT) != 1:
        raise RootNotOne(f"F(root) = {Fc(ROOT)}")
    out = {}
    for x in rule.nodes(depth):
        if len(x) < depth:
            s = sum(Fc(c) for c in rule.children(x))
            if s > Fc(x):
                raise WeakInequalityViolation(x, Fc(x), s)
        out[x] = p ** len(x) * Fc(x)
    return out


@dataclass
class DepthLaw:
    survival: list   # P(d(X) >= n), n = 0..depth
    pmf: list        # P(d(X) = n),  n = 0..depth-1


def depth_distribution(rule: TreeRule, F, depth: int) -> DepthLaw:
    """P(d(X) >= n) = sum of F over A_n."""
    Fc = _as_callable(F)
    surv = [sum(Fc(x) for x in rule.level(n)) for n in range(depth + 1)]
    return DepthLaw(surv, [surv[n] - surv[n + 1] for n in range(depth)])


def level_upf_sums(law: TreeLaw, depth: int) -> list:
    """sum_{A_m} F for m <= depth, lumping subtrees that are split uniformly."""
    L0 = law.lump_level
    if L0 is None:
        return [sum(law.upf(x) for x in law.rule.level(m)) for m in range(depth + 1)]
    out = [sum(law.upf(x) for x in law.rule.level(m)) for m in range(min(L0, depth + 1))]
    base = law.rule.level(L0) if depth >= L0 else []
    base_size = law.rule.level_size(L0)
    for m in range(L0, depth + 1):
        per_node = law.rule.level_size(m) // base_size
        pad = (0,) * (m - L0)
        out.append(sum(per_node * law.upf(v + pad) for v in base))
    return out


@dataclass
class TreeMomentRow:
    n: int
    truncated: Number     # sum over d(x) <= depth of lambda_n(x) f(x)
    target: Number        # alpha^-n
    tail_bound: Number    # certified bound on the unrepresented part

    @property
    def ok(self) -> bool:
        return 0 <= self.target - self.truncated <= self.tail_bound


def tree_moments(law: TreeLaw, n_max: int, depth: int) -> list[TreeMomentRow]:
    """E[lambda_n(X)] = alpha^-n on a constant-rate tree law, n <= n_max.

    lambda_n(x) = C(n + d(x), n).  The part beyond ``depth`` is bounded using
    only rate >= alpha: then P(d(X) >= m) <= (1 - alpha)^m, and since
    m -> C(n + m, n) is increasing the tail is at most the geometric one,
    sum_{m > depth} C(n + m, n) alpha (1 - alpha)^m
    = alpha^-n - sum_{m <= depth} C(n + m, n) alpha (1 - alpha)^m.
    """
    alpha = law.constant_rate
    if alpha is None:
        raise InvalidParams("tree_moments needs a constant-rate law")
    sums = level_upf_sums(law, depth)
    rows = []
    for n in range(n_max + 1):
        trunc = sum(comb(n + m, n) * alpha * s for m, s in enumerate(sums))
        target = 1 / alpha ** n if _is_rational(alpha) else alpha ** -n
        geo = sum(comb(n + m, n) * alpha * (1 - alpha) ** m for m in range(depth + 1))
        rows.append(TreeMomentRow(n, trunc, target, target - geo))
    return rows
