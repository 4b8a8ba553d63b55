"""IID sequences, ladder variables, partial products and thinning.

A *law* here is either a :class:`~posetrate.trees.TreeLaw` (lazy, infinite
tree, nodes are tuples) or a :class:`FiniteLaw` wrapping a Pdf on a finite
poset (elements are ids).  Both expose ``sample(rng)``, ``sample_above(y, rng)``
and ``leq(x, y)``.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from numbers import Number

import numpy as np
from scipy import stats

from .distributions import Pdf, check_constant_rate, rate, upf_from_pdf
from .errors import (
    Exhausted,
    GfUnavailable,
    InvalidParams,
    NotConstantRate,
    NotFreeSemigroup,
)
from .poset import Poset, _bits, classify, cumulative_table
from .trees import TreeLaw, is_prefix, level_upf_sums, tree_poset

# -- seeding -------------------------------------------------------------


@dataclass(frozen=True)
class SeedSpec:
    """Replicate ``i`` draws from the stream spawned at key ``(i,)`` of ``master_seed``."""

    master_seed: int

    def __post_init__(self):
        if not 0 <= self.master_seed < 2 ** 64:
            raise InvalidParams("master seed must be a 64-bit non-negative integer")

    def rng(self, replicate: int = 0) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.master_seed, spawn_key=(replicate,)))


def _seed(seed) -> SeedSpec:
    return seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))


# -- laws ----------------------------------------------------------------


class FiniteLaw:
    """Sampling wrapper for a Pdf on a finite poset (no unrepresented mass)."""

    def __init__(self, pdf: Pdf):
        if pdf.tail_mass != 0:
            raise InvalidParams("sampling needs a law without unrepresented mass")
        self.pdf = pdf
        self.poset = pdf.poset
        w = np.cumsum([float(v) for v in pdf.probs])
        self._cum = w / w[-1]
        self._above: dict[int, tuple] = {}

    def leq(self, x, y) -> bool:
        return self.poset.leq(x, y)

    def sample(self, rng):
        return int(np.searchsorted(self._cum, rng.random(), side="right"))

    def sample_many(self, n: int, rng) -> list:
        return np.searchsorted(self._cum, rng.random(n), side="right").tolist()

    def sample_above(self, y, rng):
        """Draw from z -> f(z)/F(y) on I[y] by enumerating the up-set."""
        cached = self._above.get(y)
        if cached is None:
            ups = list(_bits(self.poset.up_mask(y)))
            w = np.cumsum([float(self.pdf.probs[z]) for z in ups])
            cached = (ups, w / w[-1])
            self._above[y] = cached
        ups, w = cached
        return ups[int(np.searchsorted(w, rng.random(), side="right"))]

    def label(self, x):
        return self.poset.labels[x]


def as_law(dist):
    if isinstance(dist, (TreeLaw, FiniteLaw)):
        return dist
    if isinstance(dist, Pdf):
        return FiniteLaw(dist)
    raise InvalidParams(f"cannot sample from {type(dist).__name__}")


def collapse_tree_law(law: TreeLaw, depth: int) -> Pdf:
    """Finite law on the depth truncation: every node deeper than ``depth`` is
    mapped to its depth-``depth`` ancestor, so boundary nodes get f(b) = F(b)."""
    T = tree_poset(law.rule, depth)
    T = Poset(T.n, T.covers, labels=T.labels)  # no boundary: it is a genuine finite law
    probs = tuple(law.upf(x) if len(x) == depth else law.pdf(x) for x in T.labels)
    return Pdf(T, probs, tail=())


# -- paths ---------------------------------------------------------------


@dataclass
class SamplePath:
    kind: str                       # "iid" | "ladder" | "partial_product"
    nodes: tuple
    indices: tuple | None = None    # ladder indices N_1 < N_2 < ..., 1-based
    law: object = field(default=None, repr=False, compare=False)


def sample_iid(dist, n: int, seed, replicate: int = 0) -> SamplePath:
    """n independent draws from ``dist``."""
    law = as_law(dist)
    rng = _seed(seed).rng(replicate)
    if isinstance(law, FiniteLaw):
        nodes = law.sample_many(n, rng)
    else:
        nodes = [law.sample(rng) for _ in range(n)]
    return SamplePath("iid", tuple(nodes), None, law)


def ladder_from_iid(path: SamplePath, length: int | None = None, leq=None) -> SamplePath:
    """Y_1 = X_1 and Y_{n+1} = X_m for the first m > N_n with X_m >= Y_n."""
    if leq is None:
        leq = path.law.leq
    if not path.nodes:
        raise Exhausted("empty path")
    ys, idx = [path.nodes[0]], [1]
    for m, x in enumerate(path.nodes[1:], start=2):
        if length is not None and len(ys) >= length:
            break
        if leq(ys[-1], x):
            ys.append(x)
            idx.append(m)
    if length is not None and len(ys) < length:
        raise Exhausted(f"path of {len(path.nodes)} draws gave only {len(ys)} ladder values")
    return SamplePath("ladder", tuple(ys), tuple(idx), path.law)


def ladder_by_iid(dist, n: int, rng, max_draws: int = 10 ** 7) -> SamplePath:
    """Stream IID draws until n ladder values appear."""
    law = as_law(dist)
    ys, idx = [law.sample(rng)], [1]
    m = 1
    while len(ys) < n:
        m += 1
        if m > max_draws:
            raise Exhausted(f"no ladder value of index {len(ys) + 1} in {max_draws} draws")
        x = law.sample(rng)
        if law.leq(ys[-1], x):
            ys.append(x)
            idx.append(m)
    return SamplePath("ladder", tuple(ys), tuple(idx), law)


def ladder_markov_sample(dist, n: int, seed, replicate: int = 0) -> SamplePath:
    """Y_1 ~ f, then Y_{k+1} ~ f(z)/F(Y_k) on I[Y_k]."""
    law = as_law(dist)
    rng = _seed(seed).rng(replicate)
    ys = [law.sample(rng)]
    for _ in range(n - 1):
        ys.append(law.sample_above(ys[-1], rng))
    return SamplePath("ladder", tuple(ys), None, law)


def replicate(fn, replicates: int, seed, threads: int = 1) -> list:
    """``fn(rng)`` on per-replicate streams, in replicate order for any thread count."""
    spec = _seed(seed)

    def one(i):
        return fn(spec.rng(i))

    if threads <= 1:
        return [one(i) for i in range(replicates)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(one, range(replicates), chunksize=max(1, replicates // (8 * threads))))


def ladder_endpoints(dist, n: int, replicates: int, seed, method: str = "markov", threads: int = 1) -> list:
    """Y_n from independent replicates, simulated by the Markov kernel or by IID draws."""
    law = as_law(dist)
    if method == "markov":
        def one(rng):
            y = law.sample(rng)
            for _ in range(n - 1):
                y = law.sample_above(y, rng)
            return y
    elif method == "iid":
        def one(rng):
            return ladder_by_iid(law, n, rng).nodes[-1]
    else:
        raise InvalidParams(f"unknown method {method!r}")
    return replicate(one, replicates, seed, threads)


# -- exact ladder laws ---------------------------------------------------


@dataclass
class LadderTables:
    alpha: Number
    labels: tuple
    tables: list       # tables[k-1][i] = f_k at labels[i]
    level_mass: list   # level_mass[k-1][m] = P(d(Y_k) = m)   (trees only)
    tails: list        # unrepresented mass of f_k

    def table(self, k: int) -> dict:
        return dict(zip(self.labels, self.tables[k - 1]))


def ladder_exact_pdfs(dist, n: int, depth: int = 6, tables: bool = True) -> LadderTables:
    """f_k = alpha^k lambda_{k-1} F for k = 1..n on a constant-rate law.

    On trees lambda_{k-1}(y) = C(k-1+d(y), k-1) and the level sums of F are
    (1-alpha)^m, so the mass missed beyond ``depth`` is known exactly; level
    lumping lets ``depth`` be large when the law is symmetric.
    """
    if isinstance(dist, TreeLaw):
        alpha = dist.constant_rate
        if alpha is None:
            raise NotConstantRate("tree law was not declared constant-rate")
        sums = level_upf_sums(dist, depth)
        for m, s in enumerate(sums):
            # a constant-rate law moves (1 - alpha) of F(x) to the children of x
            if abs(s - (1 - alpha) ** m) > (0 if isinstance(s, (int, Fraction)) else 1e-12):
                raise NotConstantRate(f"level {m} carries F-mass {s}")
        labels = tuple(dist.rule.nodes(depth)) if tables else ()
        out, levels, tails = [], [], []
        for k in range(1, n + 1):
            if tables:
                out.append([alpha ** k * comb(k - 1 + len(y), k - 1) * dist.upf(y) for y in labels])
            lv = [alpha ** k * comb(k - 1 + m, k - 1) * s for m, s in enumerate(sums)]
            levels.append(lv)
            tails.append(1 - sum(lv))
        return LadderTables(alpha, labels, out, levels, tails)
    if isinstance(dist, Pdf):
        alpha = check_constant_rate(dist)
        if alpha is None:
            raise NotConstantRate("pdf does not have constant rate")
        P = dist.poset
        F = upf_from_pdf(dist)
        lam = cumulative_table(P, max(n - 1, 0))
        out, tails = [], []
        for k in range(1, n + 1):
            t = [alpha ** k * l * Fx for l, Fx in zip(lam[k - 1], F)]
            out.append(t)
            tails.append(1 - sum(t))
        return LadderTables(alpha, P.labels, out, [], tails)
    raise InvalidParams(f"unsupported law {type(dist).__name__}")


def ladder_joint_density(f: Pdf, ys) -> Number:
    """P(Y_1 = y_1, ..., Y_n = y_n) = r(y_1) ... r(y_{n-1}) f(y_n) on increasing chains."""
    P = f.poset
    if any(not P.leq(a, b) for a, b in zip(ys, ys[1:])):
        return 0 * f.probs[0]
    r = rate(f)
    out = f.probs[ys[-1]]
    for y in ys[:-1]:
        out *= r[y]
    return out


# -- thinning ------------------------------------------------------------


@dataclass
class ThinnedLaw:
    """Law of the first accepted point, each ladder point kept with probability p."""

    alpha: Number
    p: Number
    rate: Number          # recovered as g(root)
    verified: bool        # sum over children of G equals (1 - rate) G on the checked depth
    depth: int
    labels: tuple
    probs: list           # g on labels

    def table(self) -> dict:
        return dict(zip(self.labels, self.probs))

    @property
    def tail_mass(self):
        return 1 - sum(self.probs)


def thin_exact(dist, p, depth: int = 6) -> ThinnedLaw:
    """g(x) = p alpha F(x) Lambda[x, alpha (1 - p)] with Lambda[x, t] = (1 - t)^-(d(x)+1) on trees."""
    if not 0 < p <= 1:
        raise InvalidParams("p must lie in (0, 1]")
    if isinstance(dist, TreeLaw):
        alpha = dist.constant_rate
        if alpha is None:
            raise NotConstantRate("tree law was not declared constant-rate")
        nodes = list(dist.rule.nodes(depth))
        F = {x: dist.upf(x) for x in nodes}
        children = dist.rule.children
        d = len
    elif isinstance(dist, Pdf):
        P = dist.poset
        if not classify(P).is_rooted_tree:
            raise GfUnavailable("closed-form Lambda is only available on rooted trees and chains")
        alpha = check_constant_rate(dist)
        if alpha is None:
            raise NotConstantRate("pdf does not have constant rate")
        nodes = list(range(P.n))
        Fl = upf_from_pdf(dist)
        F = dict(enumerate(Fl))
        children = P.children
        depth = max(P.rank) if P.n else 0
        d = P.rank.__getitem__
    else:
        raise GfUnavailable(f"no closed-form Lambda for {type(dist).__name__}")
    t = 1 - alpha * (1 - p)
    g = {x: p * alpha * F[x] / t ** (d(x) + 1) for x in nodes}
    root = nodes[0]
    beta = g[root]
    verified = True
    for x in nodes:
        if d(x) >= depth:
            continue
        s = sum(g[c] for c in children(x) if c in g)
        if isinstance(s, (int, Fraction)) and isinstance(beta, Fraction):
            verified &= s / beta == (1 - beta) * g[x] / beta
        else:
            verified &= abs(s - (1 - beta) * g[x]) <= 1e-12
    labels = tuple(nodes) if isinstance(dist, TreeLaw) else tuple(dist.poset.labels)
    return ThinnedLaw(alpha, p, beta, bool(verified), depth, labels, [g[x] for x in nodes])


def thinning_rate(alpha, p):
    return p * alpha / (1 - alpha + p * alpha)


def geometric_index(p: float, u: float) -> int:
    """M >= 1 with P(M = m) = p (1-p)^(m-1), by inversion of u in [0, 1)."""
    if p >= 1:
        return 1
    return 1 + int(math.floor(math.log1p(-u) / math.log1p(-p)))


def thin_simulate(dist, p, replicates: int, seed, threads: int = 1) -> list:
    """First accepted point: draw M by inversion, then walk the ladder chain to Y_M."""
    law = as_law(dist)
    p = float(p)
    if not 0 < p <= 1:
        raise InvalidParams("p must lie in (0, 1]")

    def one(rng):
        M = geometric_index(p, rng.random())
        y = law.sample(rng)
        for _ in range(M - 1):
            y = law.sample_above(y, rng)
        return y

    return replicate(one, replicates, seed, threads)


def thin(dist, p, mode: str = "exact", seed=0, replicates: int = 10 ** 5, depth: int = 6, threads: int = 1):
    if mode == "exact":
        return thin_exact(dist, p, depth)
    if mode == "simulate":
        return thin_simulate(dist, p, replicates, seed, threads)
    raise InvalidParams(f"unknown mode {mode!r}")


def percolate_simulate(law: TreeLaw, p, replicates: int, seed, threads: int = 1) -> list:
    """Deepest ancestor of X reachable from the root through working edges.

    Each edge works independently with probability p, so the number of working
    edges on the root-to-X path before the first failure is geometric.
    """
    p = float(p)
    if not 0 < p <= 1:
        raise InvalidParams("p must lie in (0, 1]")

    def one(rng):
        x = law.sample(rng)
        reach = geometric_index(1 - p, rng.random()) - 1 if p < 1 else len(x)
        return x[:reach]

    return replicate(one, replicates, seed, threads)


def percolated_pdf(law: TreeLaw, p, depth: int) -> dict:
    """f_p(x) = F_p(x) - sum over children of F_p, with F_p = p^d F, for d(x) <= depth."""
    out = {}
    for x in law.rule.nodes(depth):
        kids = law.rule.children(x)
        out[x] = p ** len(x) * law.upf(x) - p ** (len(x) + 1) * sum(law.upf(c) for c in kids)
    return out


# -- free semigroup ------------------------------------------------------


def _require_free(law):
    if not isinstance(law, TreeLaw) or law.rule.arity is None:
        raise NotFreeSemigroup("partial products need a law on a k-ary tree (free semigroup)")
    return law.rule.arity


def partial_products(path: SamplePath, law=None) -> SamplePath:
    """Z_n = X_1 X_2 ... X_n by concatenation of words."""
    law = law if law is not None else path.law
    if law is not None:
        _require_free(law)
    z, out = (), []
    for x in path.nodes:
        if not isinstance(x, tuple):
            raise NotFreeSemigroup(f"element {x!r} is not a word")
        z = z + x
        out.append(z)
    return SamplePath("partial_product", tuple(out), None, law)


def ladder_kernel(law, depth: int) -> dict:
    """g(y, z) = f(z) / F(y) for y <= z, both of depth <= ``depth``."""
    nodes = list(law.rule.nodes(depth))
    return {(y, z): law.pdf(z) / law.upf(y) for y in nodes for z in nodes if is_prefix(y, z)}


def product_kernel(law, depth: int) -> dict:
    """h(y, z) = f(y^-1 z) for y a prefix of z."""
    _require_free(law)
    nodes = list(law.rule.nodes(depth))
    return {(y, z): law.pdf(z[len(y):]) for y in nodes for z in nodes if is_prefix(y, z)}


@dataclass
class EquivalenceReport:
    depth: int
    max_gap: Number
    worst: tuple | None
    entries: int

    @property
    def equivalent(self) -> bool:
        return self.max_gap == 0


def equivalence_diagnostic(law, depth: int = 3) -> EquivalenceReport:
    """Largest |g(y, z) - h(y, z)| over the truncation; 0 iff F is multiplicative there."""
    g = ladder_kernel(law, depth)
    h = product_kernel(law, depth)
    worst, gap = None, 0
    for key, v in g.items():
        e = abs(v - h[key])
        if e > gap:
            gap, worst = e, key
    return EquivalenceReport(depth, gap, worst, len(g))


# -- uniformity and point counts ----------------------------------------


@dataclass
class UniformityReport:
    max_deviation: Number
    per_element: dict    # label -> max |P(Y_1 = x | Y_2 = y) - 1/|D[y]||

    @property
    def uniform(self) -> bool:
        return self.max_deviation == 0


def uniformity_diagnostic(dist, depth: int = 4, tol: float = 1e-12) -> UniformityReport:
    """P(Y_1 = x | Y_2 = y) is proportional to r(x) on D[y]; measure its distance to uniform."""
    f = dist.pdf_on(depth) if isinstance(dist, TreeLaw) else dist
    P = f.poset
    r = rate(f)
    per, worst = {}, 0
    for y in range(P.n):
        down = P.down_list(y)
        total = sum(r[x] for x in down)
        dev = max(abs(r[x] / total - Fraction(1, len(down)) if f.exact else r[x] / total - 1 / len(down))
                  for x in down)
        if not f.exact and dev <= tol:
            dev = 0.0
        per[P.labels[y]] = dev
        worst = max(worst, dev)
    return UniformityReport(worst, per)


@dataclass
class PointCounts:
    counts: dict          # element -> N_x
    inverse_ok: bool      # W_n <= x  iff  N_x >= n, for every n and x
    monotone_ok: bool     # x <= y implies N_x <= N_y


def point_counts(path: SamplePath, elements, leq=None) -> PointCounts:
    """N_x = #{n : W_n <= x} along an increasing path W."""
    leq = leq if leq is not None else path.law.leq
    W = path.nodes
    counts = {x: sum(1 for w in W if leq(w, x)) for x in elements}
    inverse = all(leq(w, x) == (counts[x] >= n) for x in elements for n, w in enumerate(W, start=1))
    mono = all(counts[x] <= counts[y] for x in elements for y in elements if leq(x, y))
    return PointCounts(counts, inverse, mono)


# -- statistics ----------------------------------------------------------

TAIL = "tail"


def empirical_law(samples, support) -> dict:
    """Relative frequencies on ``support`` plus a pooled TAIL bin."""
    support = list(support)
    keep = set(support)
    c = Counter(samples)
    n = len(samples)
    out = {x: c.get(x, 0) / n for x in support}
    out[TAIL] = sum(v for x, v in c.items() if x not in keep) / n
    return out


def with_tail(table: dict) -> dict:
    out = {x: float(v) for x, v in table.items()}
    out[TAIL] = max(0.0, 1.0 - math.fsum(out.values()))
    return out


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


@dataclass
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float
    bins: int

    def passes(self, significance: float = 0.01) -> bool:
        return self.p_value >= significance


def _pool(keys, expected, min_expected):
    """Merge bins with small expected counts into one pooled bin (keeps order stable)."""
    big = [k for k in keys if expected[k] >= min_expected]
    small = [k for k in keys if expected[k] < min_expected]
    return big, small


def chi_square_gof(samples, probs: dict, min_expected: float = 5.0) -> ChiSquareResult:
    """Goodness of fit of samples against an exact law (dict incl. TAIL)."""
    n = len(samples)
    obs = Counter(x if x in probs else TAIL for x in samples)
    exp = {k: n * float(v) for k, v in probs.items()}
    big, small = _pool(list(probs), exp, min_expected)
    o = [obs.get(k, 0) for k in big] + ([sum(obs.get(k, 0) for k in small)] if small else [])
    e = [exp[k] for k in big] + ([sum(exp[k] for k in small)] if small else [])
    stat = sum((oi - ei) ** 2 / ei for oi, ei in zip(o, e) if ei > 0)
    dof = len(o) - 1
    return ChiSquareResult(float(stat), dof, float(stats.chi2.sf(stat, dof)), len(o))


def chi_square_two_sample(a, b, min_expected: float = 5.0) -> ChiSquareResult:
    """Homogeneity test of two samples over their joint support (small bins pooled)."""
    ca, cb = Counter(a), Counter(b)
    keys = sorted(set(ca) | set(cb), key=repr)
    na, nb = len(a), len(b)
    tot = {k: ca.get(k, 0) + cb.get(k, 0) for k in keys}
    exp_min = {k: tot[k] * min(na, nb) / (na + nb) for k in keys}
    big, small = _pool(keys, exp_min, min_expected)
    rows = [[ca.get(k, 0) for k in big], [cb.get(k, 0) for k in big]]
    if small:
        rows[0].append(sum(ca.get(k, 0) for k in small))
        rows[1].append(sum(cb.get(k, 0) for k in small))
    table = np.array(rows)
    table = table[:, table.sum(axis=0) > 0]
    stat, pval, dof, _ = stats.chi2_contingency(table, correction=False)
    return ChiSquareResult(float(stat), int(dof), float(pval), table.shape[1])
