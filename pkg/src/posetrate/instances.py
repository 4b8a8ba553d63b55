"""Named posets and distributions used by tests, demos and the CLI.

Every builder is deterministic: the same parameters give the same poset,
element numbering and probabilities.  ``build`` checks the result against the
classify() flags recorded with the entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from numbers import Number
from typing import Callable

from .distributions import Pdf, lex_product, mixture, uniform_pdf
from .errors import InputError, InvalidParams
from .poset import Poset, classify, lex_product_poset, parse_number, product_poset
from .trees import RULES, SPLITTERS, constant_rate_law, kary, tree_poset

CATALOG_VERSION = 1


def _num(v):
    """Parameters given as text become exact rationals."""
    return parse_number(v) if isinstance(v, str) else v


def _unit_open(name, v):
    if not 0 < v < 1:
        raise InvalidParams(f"{name} = {v} must lie in (0, 1)")


# -- posets --------------------------------------------------------------


def chain_poset(n: int, truncated: bool = False) -> Poset:
    """0 < 1 < ... < n-1; with ``truncated`` the top continues beyond the truncation."""
    if n < 1:
        raise InvalidParams("chain needs n >= 1")
    return Poset(n, [(i, i + 1) for i in range(n - 1)], boundary=[n - 1] if truncated else ())


def antichain_poset(n: int) -> Poset:
    if n < 1:
        raise InvalidParams("antichain needs n >= 1")
    return Poset(n, [])


def boolean_lattice(m: int) -> Poset:
    """All subsets of {1..m} under inclusion (finite, not a truncation)."""
    return _subsets(m, m, boundary=False)


def subsets_poset(M: int, m_cap: int) -> Poset:
    """Finite subsets of N+ restricted to {1..M}, size <= m_cap.

    Every finite set has unrepresented supersets, so every element is on the boundary.
    """
    return _subsets(M, m_cap, boundary=True)


def _subsets(M, m_cap, boundary):
    if M < 0 or m_cap < 0:
        raise InvalidParams("M and m_cap must be non-negative")
    m_cap = min(m_cap, M)
    sets = [frozenset(c) for s in range(m_cap + 1) for c in combinations(range(1, M + 1), s)]
    index = {s: i for i, s in enumerate(sets)}
    covers = [(index[s], index[s | {e}]) for s in sets if len(s) < m_cap
              for e in range(1, M + 1) if e not in s]
    return Poset(len(sets), covers, boundary=range(len(sets)) if boundary else (),
                 labels=sets)


def parallel_chains_poset(depth: int, copies: int = 2) -> Poset:
    """Disjoint truncated chains; copy c holds ids c*(depth+1) .. c*(depth+1)+depth."""
    L = depth + 1
    covers = [(c * L + i, c * L + i + 1) for c in range(copies) for i in range(depth)]
    labels = [(c, i) for c in range(copies) for i in range(L)]
    return Poset(copies * L, covers, boundary=[c * L + depth for c in range(copies)], labels=labels)


def lex_sum_antichains(k: int, depth: int) -> Poset:
    """Levels A_0 = {e}, A_n = {0..k-1}; every element of level n lies below all of level n+1.

    Element (n, a) has id 0 for n = 0 and 1 + (n-1) k + a otherwise; the
    depth-``depth`` level is the boundary.
    """
    labels = [(0, 0)] + [(n, a) for n in range(1, depth + 1) for a in range(k)]
    index = {lab: i for i, lab in enumerate(labels)}
    covers = []
    for n in range(depth):
        lower = [(0, 0)] if n == 0 else [(n, a) for a in range(k)]
        for x in lower:
            for b in range(k):
                covers.append((index[x], index[(n + 1, b)]))
    top = [index[(depth, a)] for a in range(k)] if depth else [0]
    return Poset(len(labels), covers, boundary=top, labels=labels)


# -- distributions -------------------------------------------------------


def geometric_chain(alpha, depth: int) -> Pdf:
    """f(x) = alpha (1 - alpha)^x on the depth-truncated chain."""
    alpha = _num(alpha)
    if not 0 < alpha < 1:
        raise InvalidParams("alpha must lie in (0, 1)")
    P = chain_poset(depth + 1, truncated=True)
    probs = tuple(alpha * (1 - alpha) ** x for x in range(depth + 1))
    return Pdf(P, probs, tail=(({depth}, (1 - alpha) ** (depth + 1)),))


def mixture_counterexample(p, alpha, beta, depth: int) -> Pdf:
    """p times a rate-alpha geometric law on one chain, 1 - p times a rate-beta
    one on a parallel chain.  Ladder conditionals are uniform although the rate
    is not constant.  With p = 1 only the first chain is built."""
    p, alpha, beta = _num(p), _num(alpha), _num(beta)
    _unit_open("alpha", alpha)
    _unit_open("beta", beta)
    if p == 1:
        return geometric_chain(alpha, depth)
    _unit_open("p", p)
    P = parallel_chains_poset(depth)
    L = depth + 1
    probs = tuple([p * alpha * (1 - alpha) ** i for i in range(L)]
                  + [(1 - p) * beta * (1 - beta) ** i for i in range(L)])
    tail = (({depth}, p * (1 - alpha) ** L), ({L + depth}, (1 - p) * (1 - beta) ** L))
    return Pdf(P, probs, tail=tail)


NONUNIQUE_GRID = tuple(Fraction(j, 100) for j in range(1, 101))


@dataclass
class NonuniquePair:
    f: Pdf
    g: Pdf
    c: Fraction
    k: int
    depth: int


def _nonunique_probs(k, depth, q, c):
    rho = Fraction(-1, k - 1)
    probs = [q + c]
    for n in range(1, depth + 1):
        probs += [q * (1 - q) ** n / k + rho ** n * c] * k
    # mass above level `depth`: (1 - q)^(depth+1) from f, and sum_{m > depth} k rho^m c = -rho^depth c
    return probs, (1 - q) ** (depth + 1) - rho ** depth * c


def nonunique_pair(k: int = 3, depth: int = 6, c=None, q=Fraction(1, 2)) -> NonuniquePair:
    """Two distinct laws with the same UPF on the lexicographic sum of antichains.

    f is geometric across levels (f(0,e) = q, f(n, a) = q (1-q)^n / k) and
    g(n, a) = f(n, a) + (-1/(k-1))^n c.  Without an explicit ``c`` the largest
    grid value j/100 keeping g > 0 at every represented level is used; for
    q = 1/2 the binding constraint is odd n, giving c < 1/(2k).
    """
    if k < 2:
        raise InvalidParams("the lexicographic sum needs k >= 2")
    q = _num(q)
    _unit_open("q", q)
    P = lex_sum_antichains(k, depth)
    f_probs, f_tail = _nonunique_probs(k, depth, q, 0)
    if c is None:
        ok = [cc for cc in NONUNIQUE_GRID
              if min(_nonunique_probs(k, depth, q, cc)[0]) > 0 and _nonunique_probs(k, depth, q, cc)[1] > 0
              and _positive_beyond(k, depth, q, cc)]
        if not ok:
            raise InvalidParams(f"no grid value of c keeps g positive for k = {k}")
        c = ok[-1]
    c = _num(c)
    if c == 0:
        raise InvalidParams("c must be nonzero")
    g_probs, g_tail = _nonunique_probs(k, depth, q, c)
    if min(g_probs) <= 0 or g_tail <= 0:
        raise InvalidParams(f"c = {c} makes g non-positive")
    top = frozenset(P.boundary)
    f = Pdf(P, tuple(f_probs), tail=((top, f_tail),))
    g = Pdf(P, tuple(g_probs), tail=((top, g_tail),))
    return NonuniquePair(f, g, c, k, depth)


def _positive_beyond(k, depth, q, c, extra=20):
    """g must stay positive on unrepresented levels too (checked a few levels up)."""
    rho = Fraction(-1, k - 1)
    return all(q * (1 - q) ** n / k + rho ** n * c > 0 for n in range(depth + 1, depth + 1 + extra))


def semigroup_product_subsets(x, y) -> frozenset:
    """x y = x u {x^c(i) : i in y}, x^c(i) the i-th positive integer not in x."""
    x, y = frozenset(x), frozenset(y)
    if any(not isinstance(v, int) or v < 1 for v in x | y):
        raise InputError("elements must be positive integers")
    need = max(y, default=0)
    comp, v = [], 1
    while len(comp) < need:
        if v not in x:
            comp.append(v)
        v += 1
    return x | {comp[i - 1] for i in y}


# -- catalog -------------------------------------------------------------


@dataclass
class Built:
    name: str
    params: dict
    poset: Poset
    dists: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    builder: Callable[..., Built]
    defaults: dict
    expected: Callable[[dict], dict]   # params -> classify() flags
    recipe: str


def _b_chain(n=5, truncated=False):
    return Built("chain", {}, chain_poset(n, truncated))


def _b_antichain(n=4):
    P = antichain_poset(n)
    return Built("antichain", {}, P, {"uniform": uniform_pdf(P)})


def _b_kary(k=2, depth=5, alpha=None, split="uniform"):
    P = tree_poset(kary(k), depth)
    dists = {}
    if alpha is not None:
        dists["constant_rate"] = constant_rate_law(kary(k), _num(alpha), _splitter(split)).pdf_on(depth)
    return Built("kary_tree", {}, P, dists)


def _b_rule_tree(rule="alternating", depth=5, alpha=None):
    if rule not in RULES:
        raise InvalidParams(f"unknown tree rule {rule!r}; choose from {sorted(RULES)}")
    P = tree_poset(RULES[rule], depth)
    dists = {}
    if alpha is not None:
        dists["constant_rate"] = constant_rate_law(RULES[rule], _num(alpha)).pdf_on(depth)
    return Built("rule_tree", {}, P, dists)


def _splitter(name):
    if name not in SPLITTERS:
        raise InvalidParams(f"unknown split {name!r}; choose from {sorted(SPLITTERS)}")
    return SPLITTERS[name]()


def _b_constant_rate_tree(k=2, alpha="1/2", depth=4, split="uniform"):
    return _b_kary(k, depth, alpha, split)


def _b_geometric_chain(alpha="1/2", depth=10):
    f = geometric_chain(alpha, depth)
    return Built("geometric_chain", {}, f.poset, {"geometric": f})


def _b_boolean(m=3):
    return Built("boolean_lattice", {}, boolean_lattice(m))


def _b_subsets(M=4, m_cap=2):
    return Built("subsets", {}, subsets_poset(M, m_cap))


def _b_nonunique(k=3, depth=6, c=None):
    pair = nonunique_pair(k, depth, c)
    return Built("nonunique", {"c": pair.c}, pair.f.poset, {"f": pair.f, "g": pair.g})


def _b_parallel(depth=10, p="1/2", alpha="3/10", beta="3/5"):
    f = mixture_counterexample(p, alpha, beta, depth)
    return Built("parallel_chains", {}, f.poset, {"mixture": f})


def _b_chain_product(m=3, n=3):
    return Built("chain_product", {}, product_poset(chain_poset(m), chain_poset(n)))


def _b_lex_chain_antichain(k=2, alpha="1/2", depth=4):
    f = geometric_chain(alpha, depth)
    Q = antichain_poset(k)
    lf = lex_product(f, Q)
    return Built("lex_chain_antichain", {}, lex_product_poset(f.poset, Q), {"lex": lf})


def _tree_flags(p):
    return {"is_rooted_tree": True, "is_connected": True}


CATALOG: dict[str, CatalogEntry] = {e.name: e for e in [
    CatalogEntry("chain", _b_chain, {"n": 5, "truncated": False},
                 lambda p: {"is_chain": True, "is_rooted_tree": True, "is_connected": True},
                 "0 < 1 < ... < n-1"),
    CatalogEntry("antichain", _b_antichain, {"n": 4},
                 lambda p: {"is_antichain": True, "is_connected": p["n"] == 1},
                 "n incomparable points, uniform law"),
    CatalogEntry("kary_tree", _b_kary, {"k": 2, "depth": 5, "alpha": None, "split": "uniform"},
                 lambda p: {**_tree_flags(p), "is_chain": p["k"] == 1},
                 "free semigroup on k letters, prefix order, truncated at depth"),
    CatalogEntry("rule_tree", _b_rule_tree, {"rule": "alternating", "depth": 5, "alpha": None},
                 _tree_flags, "tree from a named child-count rule"),
    CatalogEntry("constant_rate_tree", _b_constant_rate_tree,
                 {"k": 2, "alpha": "1/2", "depth": 4, "split": "uniform"},
                 lambda p: {**_tree_flags(p), "is_chain": p["k"] == 1},
                 "k-ary tree with a rate-alpha law built by child splitting"),
    CatalogEntry("geometric_chain", _b_geometric_chain, {"alpha": "1/2", "depth": 10},
                 lambda p: {"is_chain": True, "is_rooted_tree": True},
                 "geometric law alpha (1-alpha)^x on a truncated chain"),
    CatalogEntry("boolean_lattice", _b_boolean, {"m": 3},
                 lambda p: {"is_connected": True, "is_rooted_tree": p["m"] <= 1},
                 "all subsets of {1..m} under inclusion"),
    CatalogEntry("subsets", _b_subsets, {"M": 4, "m_cap": 2},
                 lambda p: {"is_connected": True},
                 "finite subsets of N+ inside {1..M}, size <= m_cap, all on the boundary"),
    CatalogEntry("nonunique", _b_nonunique, {"k": 3, "depth": 6, "c": None},
                 lambda p: {"is_connected": True, "is_rooted_tree": False, "is_chain": False},
                 "lexicographic sum of k-antichains over N; pair (f, g) with equal UPFs"),
    CatalogEntry("parallel_chains", _b_parallel,
                 {"depth": 10, "p": "1/2", "alpha": "3/10", "beta": "3/5"},
                 lambda p: {"is_connected": False, "is_rooted_tree": False},
                 "two disjoint chains carrying a p : 1-p geometric mixture"),
    CatalogEntry("chain_product", _b_chain_product, {"m": 3, "n": 3},
                 lambda p: {"is_connected": True, "is_chain": min(p["m"], p["n"]) == 1},
                 "product order of two chains"),
    CatalogEntry("lex_chain_antichain", _b_lex_chain_antichain, {"k": 2, "alpha": "1/2", "depth": 4},
                 lambda p: {"is_connected": True, "is_rooted_tree": p["k"] == 1},
                 "geometric chain lexicographically followed by a uniform k-antichain"),
]}


def catalog_names() -> list[str]:
    return sorted(CATALOG)


def build(name: str, **params) -> Built:
    """Build a catalog entry and check its classify() flags."""
    entry = CATALOG.get(name)
    if entry is None:
        raise InvalidParams(f"unknown catalog entry {name!r}; choose from {catalog_names()}")
    unknown = set(params) - set(entry.defaults)
    if unknown:
        raise InvalidParams(f"{name}: unknown parameters {sorted(unknown)}")
    full = {**entry.defaults, **params}
    for key in ("k", "n", "m", "M", "m_cap", "depth"):
        if key in full and (not isinstance(full[key], int) or full[key] < 0):
            raise InvalidParams(f"{name}: {key} must be a non-negative integer")
    if "k" in full and full["k"] < 1:
        raise InvalidParams(f"{name}: k must be >= 1")
    built = entry.builder(**full)
    built.name = name
    built.params = {**full, **built.params}
    flags = entry.expected(full)
    cls = classify(built.poset)
    for flag, want in flags.items():
        if getattr(cls, flag) != want:
            raise AssertionError(f"catalog entry {name}: expected {flag}={want}")
    return built


def default_posets(max_elements: int = 500) -> dict[str, Poset]:
    """Every catalog entry at its defaults, limited by size."""
    out = {}
    for name in catalog_names():
        P = build(name).poset
        if P.n <= max_elements:
            out[name] = P
    return out
