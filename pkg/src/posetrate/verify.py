"""Acceptance checks grouped into suites for ``verify --suite``.

``core`` holds the exact and solver checks, ``stats`` the seeded Monte Carlo
checks, ``all`` both.  Each check returns a :class:`CheckResult`; the suite
passes iff every check does.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import comb

from . import finder, instances
from .distributions import check_constant_rate, generalized_upf, upf_from_pdf
from .ladder import (
    collapse_tree_law,
    empirical_law,
    chi_square_two_sample,
    equivalence_diagnostic,
    ladder_endpoints,
    ladder_exact_pdfs,
    percolate_simulate,
    percolated_pdf,
    thin_exact,
    thin_simulate,
    thinning_rate,
    total_variation,
    uniformity_diagnostic,
    with_tail,
)
from .poset import cumulative_table, lower_op, mobius_invert_lower, upper_op
from .trees import SPLITTERS, constant_rate_law, depth_distribution, kary, tree_moments, validate_upf_tree

DEFAULT_SEED = 20240601
ALPHAS = (Fraction(3, 10), Fraction(1, 2), Fraction(7, 10))


@dataclass
class CheckResult:
    key: str
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.ok else 'FAIL'}] {self.key} {self.name}: {self.detail}"

    def to_dict(self) -> dict:
        return {"key": self.key, "name": self.name, "ok": self.ok, "detail": self.detail,
                "seconds": round(self.seconds, 3)}


# -- 1 -------------------------------------------------------------------


def _lambda_closed_form_errors(n_max=6):
    errs = 0
    P = instances.chain_poset(12)
    lam = cumulative_table(P, n_max)
    errs += sum(lam[n][x] != comb(n + x, n) for n in range(n_max + 1) for x in range(P.n))
    for k in (1, 2, 3):
        T = instances.build("kary_tree", k=k, depth=4).poset
        lam = cumulative_table(T, n_max)
        errs += sum(lam[n][x] != comb(n + len(T.labels[x]), n) for n in range(n_max + 1) for x in range(T.n))
    S = instances.subsets_poset(5, 3)
    lam = cumulative_table(S, n_max)
    errs += sum(lam[n][x] != (n + 1) ** len(S.labels[x]) for n in range(n_max + 1) for x in range(S.n))
    return errs


def check_exact_identities() -> CheckResult:
    errs = _lambda_closed_form_errors()
    chain = cumulative_table(instances.chain_poset(4), 2)
    S = instances.subsets_poset(4, 2)
    spot = chain[2][3] == 10 and cumulative_table(S, 2)[2][S.index_of(frozenset({1, 3}))] == 9
    for name, P in instances.default_posets(500).items():
        f = [(3 * x + 1) % 7 - 3 for x in range(P.n)]
        g = [(5 * x + 2) % 11 - 5 for x in range(P.n)]
        errs += mobius_invert_lower(P, lower_op(P, f)) != f
        Ug = upper_op(P, g, tail=[0] * P.n)
        errs += sum(a * b for a, b in zip(lower_op(P, f), g)) != sum(a * b for a, b in zip(f, Ug))
    ok = errs == 0 and spot
    return CheckResult("1", "exact identities", ok, f"mismatches={errs}, spot values ok={spot}")


# -- 2 -------------------------------------------------------------------


def check_tree_construction(depth=6) -> CheckResult:
    bad = []
    for k, a in product((1, 2, 3), ALPHAS):
        law = constant_rate_law(kary(k), a)
        f = law.pdf_on(depth)
        if check_constant_rate(f) != a:
            bad.append((k, a, "rate"))
        surv = depth_distribution(law.rule, law.upf, depth).survival
        if any(s != (1 - a) ** n for n, s in enumerate(surv)):
            bad.append((k, a, "depth law"))
        if any(law.upf(x) != ((1 - a) / k) ** len(x) for x in law.rule.nodes(depth)):
            bad.append((k, a, "closed form"))
    return CheckResult("2", "constant-rate tree construction", not bad,
                       "9 (k, alpha) cases exact" if not bad else f"failures {bad}")


# -- 3 -------------------------------------------------------------------


def _small_constant_rate_laws():
    half = Fraction(1, 2)
    return {
        "geometric_chain": instances.geometric_chain(half, 10),
        "binary_tree": constant_rate_law(kary(2), half).pdf_on(2),
        "lex_chain_antichain": instances.build("lex_chain_antichain", k=2, depth=4).dists["lex"],
        "parallel_equal": instances.mixture_counterexample(Fraction(1, 3), half, half, 4),
        "antichain": instances.build("antichain", n=4).dists["uniform"],
    }


def ladder_marginals_bruteforce(f, n_max):
    """Law of Y_1..Y_n on represented elements by enumerating increasing chains,
    each step weighted by P(next ladder value = z | current y) = f(z) / P(X >= y)."""
    P = f.poset
    tail = f.upper_tail()
    reach = [tail[y] + sum(f.probs[z] for z in P.up_set(y)) for y in range(P.n)]
    cur = list(f.probs)
    out = [cur]
    for _ in range(n_max - 1):
        nxt = [0 * f.probs[0]] * P.n
        for y in range(P.n):
            for z in P.up_set(y):
                nxt[z] += cur[y] * f.probs[z] / reach[y]
        cur = nxt
        out.append(cur)
    return out


def check_ladder_exactness(n_max=3) -> CheckResult:
    bad = []
    for name, f in _small_constant_rate_laws().items():
        if f.poset.n > 12:
            bad.append((name, "size"))
            continue
        exact = ladder_exact_pdfs(f, n_max).tables
        brute = ladder_marginals_bruteforce(f, n_max)
        if exact != brute:
            bad.append(name)
    rep = uniformity_diagnostic(constant_rate_law(kary(2), Fraction(1, 2)), depth=4)
    ok = not bad and rep.max_deviation == 0
    return CheckResult("3", "ladder exactness", ok,
                       f"{len(_small_constant_rate_laws())} laws, n<={n_max}; binary-tree uniformity "
                       f"deviation={rep.max_deviation}" + (f"; mismatches {bad}" if bad else ""))


# -- 4 -------------------------------------------------------------------


def check_thinning(seed=DEFAULT_SEED, replicates=10 ** 5, threads=1) -> CheckResult:
    t0 = time.perf_counter()
    half = Fraction(1, 2)
    law = constant_rate_law(kary(2), half)
    t = thin_exact(law, half, depth=4)
    exact_ok = t.rate == Fraction(1, 3) == thinning_rate(half, half) and t.verified
    sims = thin_simulate(law, half, replicates, seed, threads)
    tv = total_variation(empirical_law(sims, t.labels), with_tail(t.table()))
    secs = time.perf_counter() - t0
    ok = exact_ok and tv <= 0.01 and secs < 60
    return CheckResult("4", "thinning", ok, f"rate={t.rate}, verified={t.verified}, TV={tv:.5f}, {secs:.1f}s")


# -- 5 -------------------------------------------------------------------


def check_exponential_equivalence(depth=3) -> CheckResult:
    half = Fraction(1, 2)
    u = equivalence_diagnostic(constant_rate_law(kary(2), half), depth)
    w = equivalence_diagnostic(constant_rate_law(kary(2), half, SPLITTERS["70/30"]()), depth)
    ok = u.max_gap == 0 and w.max_gap > 1e-3
    return CheckResult("5", "exponential equivalence", ok,
                       f"uniform gap={u.max_gap}, 70/30 gap={w.max_gap}")


# -- 6 -------------------------------------------------------------------


def check_nonuniqueness() -> CheckResult:
    pair = instances.nonunique_pair(3, 6)
    f, g = pair.f, pair.g
    same = upf_from_pdf(f) == upf_from_pdf(g)
    positive = min(f.probs) > 0 and min(g.probs) > 0
    distinct = f.probs != g.probs
    P = f.poset
    lvl1 = [x for x in range(P.n) if P.labels[x][0] == 1]
    diff = [(a, b) for i, a in enumerate(lvl1) for b in lvl1[i + 1:]
            if generalized_upf(f, (a, b)) != generalized_upf(g, (a, b))]
    ok = same and positive and distinct and bool(diff)
    return CheckResult("6", "non-uniqueness", ok,
                       f"c={pair.c}, equal UPFs={same}, positive={positive}, "
                       f"generalized UPF differs on {len(diff)} pairs")


# -- 7 -------------------------------------------------------------------


def small_posets(n_max=4):
    """Every poset on 1..n_max points, up to relabeling, via natural labelings."""
    from .poset import Poset, transitive_reduce

    out = []
    for n in range(1, n_max + 1):
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        for mask in range(1 << len(pairs)):
            rel = {pairs[t] for t in range(len(pairs)) if mask >> t & 1}
            if all((a, c) in rel for (a, b) in rel for (b2, c) in rel if b == b2):
                out.append(Poset(n, transitive_reduce(rel)))
    return out


def grid_search_constant_rate(P, alphas, denom=12):
    """Brute force: any positive f with denominator ``denom`` and f = alpha F exactly."""
    from .distributions import Pdf

    n = P.n
    hits = set()

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(1, total - parts + 2):
            for rest in compositions(total - first, parts - 1):
                yield (first,) + rest

    for comp in compositions(denom, n) if n <= denom else ():
        f = Pdf(P, tuple(Fraction(c, denom) for c in comp), tail=())
        a = check_constant_rate(f)
        if a is not None and a in alphas:
            hits.add(a)
    return hits


def check_finder(threads=1) -> CheckResult:
    grid = finder.parse_alpha_grid("0.05:1:0.05")
    notes = []
    chain = [r.status for r in finder.scan(instances.chain_poset(5), grid, threads=threads)]
    chain_ok = all(s == "infeasible" for s in chain)
    anti = finder.scan(instances.antichain_poset(4), grid, threads=threads)
    anti_ok = all((r.status == "feasible") == (a == 1) for a, r in zip(grid, anti))
    T = instances.build("kary_tree", k=2, depth=5).poset
    half = Fraction(1, 2)
    rep = finder.constant_rate_feasible_truncated(T, 0.5)
    f = [half * Fraction(1, 4) ** len(x) for x in T.labels]
    F = [Fraction(1, 4) ** len(x) for x in T.labels]
    res = finder.closed_form_residual(T, 0.5, [float(v) for v in f], [float(v) for v in F])
    tree_ok = rep.status == "feasible" and res <= 1e-6
    disagree = 0
    posets = small_posets(4) + [P for P in instances.default_posets(8).values() if not P.is_truncated]
    for P in posets:
        lp = {a for a, r in zip(grid, finder.scan(P, grid, threads=threads)) if r.status == "feasible"}
        brute = grid_search_constant_rate(P, set(grid))
        disagree += lp != brute
    notes.append(f"chain all infeasible={chain_ok}, antichain only at 1={anti_ok}")
    notes.append(f"tree status={rep.status}, closed-form residual={res:.2e}")
    notes.append(f"grid disagreements={disagree} over {len(posets)} posets")
    ok = chain_ok and anti_ok and tree_ok and disagree == 0
    return CheckResult("7", "finder soundness", ok, "; ".join(notes))


# -- 8 -------------------------------------------------------------------


def check_poisson(K=40) -> CheckResult:
    worst = 0.0
    for a in (0.3, 0.5, 0.8):
        rep = finder.subsets_poisson_check(finder.poisson_marginal(-math.log(a), K), a)
        worst = max(worst, rep.max_residual)
    geo = finder.subsets_poisson_check([0.5 ** (j + 1) for j in range(K + 1)], 0.5)
    ok = worst < 1e-10 and geo.max_residual > 1e-3
    return CheckResult("8", "Poisson necessary condition", ok,
                       f"max Poisson residual={worst:.2e}, geometric residual={geo.max_residual:.3g}")


# -- 9 -------------------------------------------------------------------


def check_percolation(seed=DEFAULT_SEED, replicates=10 ** 5, threads=1) -> CheckResult:
    law = constant_rate_law(kary(2), Fraction(1, 2))
    parts = []
    ok = True
    for p in (Fraction(1, 2), Fraction(9, 10)):
        Fp = lambda x, p=p: p ** len(x) * law.upf(x)  # noqa: E731
        rep = validate_upf_tree(law.rule, Fp, 4, alpha=p * Fraction(1, 2))
        exact = percolated_pdf(law, p, 4)
        sims = percolate_simulate(law, p, replicates, seed, threads)
        tv = total_variation(empirical_law(sims, list(exact)), with_tail(exact))
        ok &= rep.ok and tv <= 0.01
        parts.append(f"p={p}: TV={tv:.5f}")
    return CheckResult("9", "percolation", bool(ok), ", ".join(parts))


# -- 10 ------------------------------------------------------------------


def moment_depth(alpha, n_max, bound=1e-9, start=10):
    """Smallest depth whose certified tail bound is <= ``bound`` for every n <= n_max."""
    D = start
    while True:
        geo_tail = max(1 / alpha ** n - sum(comb(n + m, n) * alpha * (1 - alpha) ** m for m in range(D + 1))
                       for n in range(n_max + 1))
        if geo_tail <= bound:
            return D
        D += 5


def check_moments(n_max=3) -> CheckResult:
    bad, worst = [], 0
    for k, a in product((1, 2, 3), ALPHAS):
        for split in ("uniform", "70/30") if k == 2 else ("uniform",):
            law = constant_rate_law(kary(k), a, SPLITTERS[split]())
            rows = tree_moments(law, n_max, moment_depth(a, n_max))
            worst = max([worst] + [r.tail_bound for r in rows])
            if not all(r.ok and r.tail_bound <= 1e-9 for r in rows):
                bad.append((k, a, split))
    return CheckResult("10", "moment identities", not bad,
                       f"max certified tail={float(worst):.2e}" + (f"; failures {bad}" if bad else ""))


# -- extra statistical invariant ----------------------------------------


def check_ladder_agreement(seed=DEFAULT_SEED, replicates=10 ** 5, threads=1) -> CheckResult:
    """Y_2 from IID-based ladders and from the Markov kernel agree (chi-square, 0.01)."""
    law = collapse_tree_law(constant_rate_law(kary(2), Fraction(1, 2)), 3)
    a = ladder_endpoints(law, 2, replicates, seed, "iid", threads)
    b = ladder_endpoints(law, 2, replicates, seed + 1, "markov", threads)
    res = chi_square_two_sample(a, b)
    return CheckResult("L", "ladder agreement", res.passes(0.01),
                       f"chi2={res.statistic:.2f}, dof={res.dof}, p={res.p_value:.3f}")


CHECKS = {
    "1": check_exact_identities,
    "2": check_tree_construction,
    "3": check_ladder_exactness,
    "4": check_thinning,
    "5": check_exponential_equivalence,
    "6": check_nonuniqueness,
    "7": check_finder,
    "8": check_poisson,
    "9": check_percolation,
    "10": check_moments,
    "L": check_ladder_agreement,
}
SUITES = {
    "core": ["1", "2", "3", "5", "6", "7", "8", "10"],
    "stats": ["4", "9", "L"],
}
SUITES["all"] = SUITES["core"] + SUITES["stats"]
_SEEDED = {"4", "9", "L"}
_THREADED = {"4", "7", "9", "L"}


def run_suite(name: str, seed: int = DEFAULT_SEED, threads: int = 1) -> list[CheckResult]:
    if name not in SUITES:
        raise KeyError(name)
    out = []
    for key in SUITES[name]:
        kwargs = {}
        if key in _SEEDED:
            kwargs["seed"] = seed
        if key in _THREADED:
            kwargs["threads"] = threads
        t0 = time.perf_counter()
        res = CHECKS[key](**kwargs)
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out
