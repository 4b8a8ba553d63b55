import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings

from oracles import ladder_law_absorbing
from posetrate.distributions import Pdf, uniform_pdf
from posetrate.errors import Exhausted, GfUnavailable, InvalidParams, NotConstantRate, NotFreeSemigroup
from posetrate.instances import antichain_poset, boolean_lattice, chain_poset, geometric_chain
from posetrate.ladder import (
    TAIL,
    FiniteLaw,
    SamplePath,
    SeedSpec,
    chi_square_gof,
    chi_square_two_sample,
    collapse_tree_law,
    empirical_law,
    equivalence_diagnostic,
    geometric_index,
    ladder_endpoints,
    ladder_exact_pdfs,
    ladder_from_iid,
    ladder_joint_density,
    ladder_markov_sample,
    partial_products,
    point_counts,
    sample_iid,
    thin_exact,
    thin_simulate,
    thinning_rate,
    total_variation,
    uniformity_diagnostic,
    with_tail,
)
from posetrate.poset import Poset
from posetrate.trees import SPLITTERS, constant_rate_law, kary
from test_distributions import finite_laws

HALF = Fraction(1, 2)


def _leq_int(a, b):
    return a <= b


def test_ladder_on_integer_path():
    path = SamplePath("iid", (3, 1, 4, 1, 5))
    lad = ladder_from_iid(path, leq=_leq_int)
    assert lad.nodes == (3, 4, 5)
    assert lad.indices == (1, 3, 5)
    assert ladder_from_iid(path, length=2, leq=_leq_int).nodes == (3, 4)
    with pytest.raises(Exhausted):
        ladder_from_iid(path, length=4, leq=_leq_int)
    with pytest.raises(Exhausted):
        ladder_from_iid(SamplePath("iid", ()), leq=_leq_int)


def test_antichain_ladder_repeats_first_draw():
    law = FiniteLaw(uniform_pdf(antichain_poset(4)))
    path = sample_iid(law, 50, seed=3)
    lad = ladder_from_iid(path)
    assert set(lad.nodes) == {path.nodes[0]}
    assert lad.indices[0] == 1


def test_seeded_streams_reproducible_across_threads():
    law = constant_rate_law(kary(2), HALF)
    a = ladder_endpoints(law, 3, 400, seed=11, threads=1)
    b = ladder_endpoints(law, 3, 400, seed=11, threads=4)
    assert a == b
    assert ladder_endpoints(law, 3, 400, seed=12) != a
    assert sample_iid(law, 20, 5, replicate=2).nodes == sample_iid(law, 20, SeedSpec(5), replicate=2).nodes


def test_seed_range_checked():
    with pytest.raises(InvalidParams):
        SeedSpec(-1)


@settings(max_examples=40, deadline=None)
@given(finite_laws(max_n=5))
def test_joint_density_matches_absorbing_chain(f):
    # small posets only, so every ladder sequence can be enumerated
    P = f.poset
    for n in (1, 2, 3):
        oracle = ladder_law_absorbing(P, f.probs, [0] * P.n, n)
        for ys in product(range(P.n), repeat=n):
            assert ladder_joint_density(f, ys) == oracle.get(ys, 0)


def test_joint_density_on_lattice():
    B = boolean_lattice(3)
    w = [Fraction(i + 1) for i in range(B.n)]
    f = Pdf(B, tuple(v / sum(w) for v in w), tail=())
    oracle = ladder_law_absorbing(B, f.probs, [0] * B.n, 3)
    assert sum(oracle.values()) == 1
    for ys, v in oracle.items():
        assert ladder_joint_density(f, ys) == v


def test_chain_second_ladder_marginal():
    f = geometric_chain(HALF, 12)
    t = ladder_exact_pdfs(f, 3)
    assert t.tables[1] == [Fraction(1, 4) * (x + 1) * HALF ** x for x in range(13)]
    assert t.tables[0] == list(f.probs)


def test_tree_ladder_levels():
    law = constant_rate_law(kary(3), Fraction(3, 10))
    t = ladder_exact_pdfs(law, 4, depth=5)
    for k in range(1, 5):
        a = Fraction(3, 10)
        lv = [a ** k * math.comb(k - 1 + m, k - 1) * (1 - a) ** m for m in range(6)]
        assert t.level_mass[k - 1] == lv
        assert t.tails[k - 1] == 1 - sum(lv)
        assert sum(t.table(k).values()) == sum(lv)


def test_ladder_exact_needs_constant_rate():
    with pytest.raises(NotConstantRate):
        ladder_exact_pdfs(uniform_pdf(chain_poset(3)), 2)


def test_markov_ladder_matches_exact_marginal():
    P = Poset(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
    f = Pdf(P, (Fraction(2, 5), Fraction(1, 5), Fraction(1, 10), Fraction(3, 10)), tail=())
    oracle = ladder_law_absorbing(P, f.probs, [0] * 4, 3)
    marg = {y: sum(v for ys, v in oracle.items() if ys[-1] == y) for y in range(4)}
    ends = ladder_endpoints(f, 3, 20000, seed=99)
    res = chi_square_gof(ends, marg)
    assert res.passes(0.001), res
    iid = ladder_endpoints(f, 3, 20000, seed=100, method="iid")
    assert chi_square_gof(iid, marg).passes(0.001)


def test_markov_path_is_weakly_increasing():
    law = constant_rate_law(kary(2), HALF)
    path = ladder_markov_sample(law, 8, seed=4)
    assert all(law.leq(a, b) for a, b in zip(path.nodes, path.nodes[1:]))


@pytest.mark.parametrize("alpha,p,expected", [
    (HALF, HALF, Fraction(1, 3)),
    (Fraction(3, 10), Fraction(2, 5), Fraction(12, 82)),
])
def test_thinning_rate_exact(alpha, p, expected):
    th = thin_exact(constant_rate_law(kary(2), alpha), p, depth=4)
    assert th.rate == expected == thinning_rate(alpha, p)
    assert th.verified


def test_thinning_with_p_one_returns_law():
    law = constant_rate_law(kary(2), Fraction(3, 10))
    th = thin_exact(law, 1, depth=3)
    assert th.probs == [law.pdf(x) for x in th.labels]


def test_thinning_on_chain_pdf():
    th = thin_exact(geometric_chain(HALF, 8), HALF)
    assert th.rate == Fraction(1, 3) and th.verified
    with pytest.raises(GfUnavailable):
        thin_exact(uniform_pdf(boolean_lattice(2)), HALF)
    with pytest.raises(InvalidParams):
        thin_exact(geometric_chain(HALF, 3), 0)


def test_thinning_simulation_agrees():
    law = constant_rate_law(kary(2), HALF)
    th = thin_exact(law, HALF, depth=4)
    sims = thin_simulate(law, HALF, 20000, seed=8)
    emp = empirical_law(sims, th.labels)
    assert total_variation(emp, with_tail(th.table())) < 0.02


def test_geometric_index_inversion():
    assert geometric_index(1.0, 0.7) == 1
    assert geometric_index(0.5, 0.0) == 1
    assert geometric_index(0.5, 0.5) == 2
    assert geometric_index(0.5, 0.75) == 3


def test_partial_products_concatenate():
    law = constant_rate_law(kary(2), HALF)
    z = partial_products(SamplePath("iid", ((0,), (1,), (), (1, 1)), law=law))
    assert z.nodes == ((0,), (0, 1), (0, 1), (0, 1, 1, 1))
    with pytest.raises(NotFreeSemigroup):
        partial_products(SamplePath("iid", (1, 2)), law=FiniteLaw(uniform_pdf(chain_poset(3))))
    with pytest.raises(NotFreeSemigroup):
        partial_products(SamplePath("iid", (1, 2)))


def test_equivalence_diagnostic():
    assert equivalence_diagnostic(constant_rate_law(kary(2), HALF), 3).max_gap == 0
    rep = equivalence_diagnostic(constant_rate_law(kary(2), HALF, SPLITTERS["70/30"]()), 3)
    assert rep.max_gap > 0 and not rep.equivalent


def test_uniformity_diagnostic():
    assert uniformity_diagnostic(constant_rate_law(kary(2), HALF), 3).uniform
    assert uniformity_diagnostic(geometric_chain(HALF, 6)).uniform
    f = Pdf(chain_poset(3), (HALF, Fraction(1, 3), Fraction(1, 6)), tail=())
    assert uniformity_diagnostic(f).max_deviation > 0


def test_point_counts_inverse_relation():
    law = constant_rate_law(kary(2), HALF)
    path = ladder_markov_sample(law, 6, seed=1)
    elems = list(law.rule.nodes(4))
    pc = point_counts(path, elems)
    assert pc.inverse_ok and pc.monotone_ok
    assert pc.counts[()] == sum(1 for w in path.nodes if w == ())


def test_geometric_chain_mean_depth():
    # depth of X on a unary tree is geometric with mean (1 - a)/a and variance (1 - a)/a^2
    a = Fraction(2, 5)
    law = FiniteLaw(collapse_tree_law(constant_rate_law(kary(1), a), 60))
    n = 20000
    depths = np.array([len(law.label(x)) for x in sample_iid(law, n, seed=2).nodes])
    mean, var = float((1 - a) / a), float((1 - a) / a ** 2)
    assert abs(depths.mean() - mean) < 3 * math.sqrt(var / n)


def test_binary_tree_root_frequency():
    law = constant_rate_law(kary(2), Fraction(3, 10))
    n = 20000
    draws = sample_iid(law, n, seed=6).nodes
    hits = sum(1 for x in draws if x == ())
    assert abs(hits / n - 0.3) < 3 * math.sqrt(0.21 / n)


def test_chi_square_helpers():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 4, 4000).tolist()
    b = rng.integers(0, 4, 4000).tolist()
    assert chi_square_two_sample(a, b).passes(0.001)
    skew = [0] * 3000 + [1] * 1000
    assert not chi_square_two_sample(a, skew).passes(0.001)
    gof = chi_square_gof(a, {0: 0.25, 1: 0.25, 2: 0.25, 3: 0.25, TAIL: 0.0})
    assert gof.passes(0.001)
