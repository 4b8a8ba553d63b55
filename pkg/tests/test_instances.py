from fractions import Fraction

import pytest

from posetrate.distributions import check_constant_rate, generalized_upf, pdf_to_dict, rate, upf_from_pdf
from posetrate.errors import InputError, InvalidParams
from posetrate.instances import (
    CATALOG_VERSION,
    build,
    catalog_names,
    default_posets,
    mixture_counterexample,
    nonunique_pair,
    semigroup_product_subsets,
    subsets_poset,
)
from posetrate.ladder import uniformity_diagnostic
from posetrate.poset import classify, poset_to_dict

HALF = Fraction(1, 2)


def test_kary_tree_entry():
    b = build("kary_tree", k=2, depth=5)
    assert b.poset.n == 63
    assert classify(b.poset).is_rooted_tree


def test_subsets_sizes():
    # size <= 3 drops only the full set; size <= 4 is the whole power set
    assert build("subsets", M=4, m_cap=3).poset.n == 15
    assert build("subsets", M=4, m_cap=4).poset.n == 16
    S = subsets_poset(4, 2)
    assert S.n == 11 and S.boundary == set(range(S.n))


def test_nonunique_pair_identities():
    pair = nonunique_pair(3, 6)
    assert pair.c == Fraction(4, 25)
    assert pair.c < Fraction(1, 6)
    assert upf_from_pdf(pair.f) == upf_from_pdf(pair.g)
    assert min(pair.g.probs) > 0 and pair.f.probs != pair.g.probs
    P = pair.f.poset
    lvl1 = [x for x in range(P.n) if P.labels[x][0] == 1]
    assert generalized_upf(pair.f, lvl1[:2]) != generalized_upf(pair.g, lvl1[:2])


def test_nonunique_params():
    with pytest.raises(InvalidParams):
        nonunique_pair(1, 3)
    with pytest.raises(InvalidParams):
        nonunique_pair(3, 6, c=Fraction(1, 5))
    with pytest.raises(InvalidParams):
        nonunique_pair(3, 6, c=0)


@pytest.mark.parametrize("x,y,expected", [
    (set(), {2, 5}, {2, 5}),
    ({1, 3}, {1}, {1, 2, 3}),
    ({2}, {2}, {2, 3}),
    ({1, 2}, set(), {1, 2}),
])
def test_semigroup_product(x, y, expected):
    assert semigroup_product_subsets(x, y) == expected


def test_semigroup_left_cancellative():
    x = {1, 4}
    seen = {}
    for y in ({1}, {2}, {1, 2}, {3}, {2, 3}):
        z = semigroup_product_subsets(x, y)
        assert z not in seen
        seen[z] = y
    with pytest.raises(InputError):
        semigroup_product_subsets({0}, {1})


def test_mixture_counterexample_rates():
    f = mixture_counterexample(HALF, Fraction(3, 10), Fraction(3, 5), 8)
    r = rate(f)
    assert check_constant_rate(f) is None
    assert set(r) == {Fraction(3, 10), Fraction(3, 5)}
    assert uniformity_diagnostic(f).max_deviation == 0


def test_mixture_degenerate_cases():
    assert check_constant_rate(mixture_counterexample(HALF, HALF, HALF, 5)) == HALF
    single = mixture_counterexample(1, Fraction(3, 10), Fraction(3, 5), 5)
    assert check_constant_rate(single) == Fraction(3, 10)
    assert classify(single.poset).is_chain


def test_catalog_is_deterministic():
    for name in catalog_names():
        a, b = build(name), build(name)
        assert poset_to_dict(a.poset) == poset_to_dict(b.poset)
        assert set(a.dists) == set(b.dists)
        for key in a.dists:
            assert pdf_to_dict(a.dists[key]) == pdf_to_dict(b.dists[key])
    assert CATALOG_VERSION >= 1


def test_catalog_errors():
    with pytest.raises(InvalidParams):
        build("no_such_entry")
    with pytest.raises(InvalidParams):
        build("chain", bogus=1)
    with pytest.raises(InvalidParams):
        build("kary_tree", k=0)
    with pytest.raises(InvalidParams):
        build("kary_tree", depth=-1)
    with pytest.raises(InvalidParams):
        build("nonunique", k=1)


def test_default_posets_size_cap():
    small = default_posets(max_elements=20)
    assert all(P.n <= 20 for P in small.values())
    assert "chain" in small
