from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_upf
from posetrate.distributions import (
    Pdf,
    check_constant_rate,
    generalized_upf,
    lex_product,
    mixture,
    moment_identities,
    pdf_from_dict,
    pdf_from_generalized_upf,
    pdf_from_upf_tree,
    pdf_to_dict,
    product_dist,
    rate,
    uniform_pdf,
    upf_from_pdf,
    upper_equivalence_classes,
)
from posetrate.errors import (
    InconsistentUpf,
    InvalidDistribution,
    NonPositivePdf,
    NotATree,
    TailBoundTooLoose,
    TruncatedUpSet,
)
from posetrate.instances import antichain_poset, boolean_lattice, chain_poset, geometric_chain
from posetrate.poset import Poset, transitive_reduce
from posetrate.trees import constant_rate_law, kary, tree_poset

HALF = Fraction(1, 2)


@st.composite
def finite_laws(draw, max_n=6):
    n = draw(st.integers(1, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    P = Poset(n, transitive_reduce(chosen))
    w = draw(st.lists(st.integers(1, 20), min_size=n, max_size=n))
    return Pdf(P, tuple(Fraction(v, sum(w)) for v in w), tail=())


def test_pdf_validation():
    P = chain_poset(3)
    with pytest.raises(InvalidDistribution):
        Pdf(P, (HALF, HALF, 0), tail=())
    with pytest.raises(InvalidDistribution):
        Pdf(P, (HALF, HALF, HALF), tail=())
    with pytest.raises(InvalidDistribution):
        Pdf(P, (0.5, 0.25, 0.25 + 1e-9), tail=())
    Pdf(P, (0.5, 0.25, 0.25 + 1e-13), tail=())  # float track tolerates 1e-12


@settings(max_examples=60, deadline=None)
@given(finite_laws())
def test_upf_matches_brute_sum(f):
    assert upf_from_pdf(f) == brute_upf(f.poset, f.probs, [0] * f.poset.n)


@settings(max_examples=60, deadline=None)
@given(finite_laws())
def test_expectation_identity(f):
    # sum_x F(x) = E[#D[X]] on a finite poset
    rep = moment_identities(f, 3)
    assert all(r["abs_err"] == 0 for r in rep.rows if r["check"] == "expect1")


def test_geometric_chain_rate_and_upf():
    f = geometric_chain(HALF, 10)
    F = upf_from_pdf(f)
    assert F == [HALF ** x for x in range(11)]
    assert check_constant_rate(f) == HALF
    assert set(rate(f)) == {HALF}


def test_truncated_upf_needs_tail():
    P = chain_poset(3, truncated=True)
    f = Pdf(P, (HALF, Fraction(1, 4), Fraction(1, 8)))
    with pytest.raises(TruncatedUpSet):
        upf_from_pdf(f)


def test_tree_pdf_from_upf():
    T = tree_poset(kary(2), 2)
    F = [Fraction(1, 4) ** len(x) for x in T.labels]
    extra = {b: 2 * Fraction(1, 4) ** 3 for b in T.boundary}
    f = pdf_from_upf_tree(T, F, extra)
    assert f.probs == tuple(HALF * v for v in F)
    assert upf_from_pdf(f) == F
    bad = list(F)
    bad[1] = Fraction(1)
    with pytest.raises(NonPositivePdf):
        pdf_from_upf_tree(T, bad, extra)
    with pytest.raises(NotATree):
        pdf_from_upf_tree(boolean_lattice(2), [1] * 4)


@settings(max_examples=40, deadline=None)
@given(finite_laws(max_n=5))
def test_generalized_upf_recovers_pdf(f):
    back = pdf_from_generalized_upf(f.poset, lambda A: generalized_upf(f, A))
    assert back.probs == f.probs


def test_generalized_upf_inconsistent():
    P = chain_poset(2)
    with pytest.raises(InconsistentUpf):
        pdf_from_generalized_upf(P, lambda A: 1)


def test_antichain_every_law_rate_one():
    f = Pdf(antichain_poset(3), (HALF, Fraction(1, 3), Fraction(1, 6)), tail=())
    assert check_constant_rate(f) == 1


def test_finite_non_antichain_never_constant():
    f = uniform_pdf(chain_poset(4))
    assert check_constant_rate(f) is None


def test_moments_on_truncated_tree_law():
    law = constant_rate_law(kary(2), HALF)
    f = law.pdf_on(3)
    with pytest.raises(TailBoundTooLoose):
        moment_identities(f, 2)
    with pytest.raises(TailBoundTooLoose):
        moment_identities(f, 2, tail_bound=lambda check, n: 1.0)


def test_mixture_and_products():
    P = chain_poset(2)
    a = Pdf(P, (HALF, HALF), tail=())
    b = Pdf(P, (Fraction(1, 4), Fraction(3, 4)), tail=())
    m = mixture([a, b], [HALF, HALF])
    assert m.probs == (Fraction(3, 8), Fraction(5, 8))
    pr = product_dist(a, b)
    assert sum(pr.probs) == 1 and pr.poset.n == 4


def test_lex_product_rate():
    g = lex_product(geometric_chain(HALF, 5), antichain_poset(3))
    # alpha / (k (1 - alpha) + alpha) with alpha = 1/2, k = 3
    assert check_constant_rate(g) == Fraction(1, 4)
    g2 = lex_product(geometric_chain(HALF, 5), chain_poset(2))
    assert check_constant_rate(g2) is None


def test_upper_equivalence():
    P = Poset(4, [(0, 2), (1, 2), (2, 3)])
    classes = upper_equivalence_classes(P)
    assert frozenset({0, 1}) in classes


def test_pdf_json_roundtrip():
    f = constant_rate_law(kary(2), HALF).pdf_on(2)
    g = pdf_from_dict(pdf_to_dict(f))
    assert g.probs == f.probs and upf_from_pdf(g) == upf_from_pdf(f)
