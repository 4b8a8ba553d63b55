import math
from fractions import Fraction

import pytest

from posetrate.errors import EpsilonTooLarge, InvalidParams, TruncationTooSevere
from posetrate.finder import (
    DEFAULT_GRID,
    build_problem,
    closed_form_residual,
    constant_rate_feasible_finite,
    constant_rate_feasible_truncated,
    parse_alpha_grid,
    poisson_marginal,
    scan,
    search_subsets_poset,
    subsets_poisson_check,
    universality_embed,
)
from posetrate.instances import antichain_poset, boolean_lattice, chain_poset, lex_sum_antichains
from posetrate.poset import Poset
from posetrate.trees import kary, tree_poset

GRID_1_9 = [Fraction(j, 10) for j in range(1, 10)]


@pytest.mark.parametrize("alpha", GRID_1_9)
def test_finite_chain_has_no_constant_rate(alpha):
    rep = constant_rate_feasible_finite(chain_poset(5), float(alpha))
    assert rep.status == "infeasible"
    assert rep.certificate_verified


def test_finite_chain_exact_track():
    rep = constant_rate_feasible_finite(chain_poset(5), Fraction(1, 2), exact=True)
    assert rep.status == "infeasible" and rep.certificate_verified


@pytest.mark.parametrize("alpha", [0.3, 0.7])
def test_antichain_only_rate_one(alpha):
    assert constant_rate_feasible_finite(antichain_poset(4), alpha).status == "infeasible"


def test_antichain_rate_one_feasible():
    rep = constant_rate_feasible_finite(antichain_poset(4), 1.0)
    assert rep.status == "feasible"
    assert rep.witness_rate == 1
    assert all(v >= 1e-9 for v in rep.witness)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_tree_truncation_feasible(alpha):
    T = tree_poset(kary(2), 5)
    rep = constant_rate_feasible_truncated(T, alpha)
    assert rep.status == "feasible"
    assert rep.residual <= 1e-6
    assert rep.relaxation == "tree"


def test_tree_closed_form_satisfies_constraints():
    T = tree_poset(kary(2), 5)
    a = 0.5
    F = [((1 - a) / 2) ** len(x) for x in T.labels]
    f = [a * v for v in F]
    assert closed_form_residual(T, a, f, F) <= 1e-12


def test_tree_near_one_hits_epsilon_floor():
    # the depth-5 closed form needs f below 1e-9 at the deepest level
    T = tree_poset(kary(2), 5)
    rep = constant_rate_feasible_truncated(T, 0.99)
    assert rep.status == "infeasible" and rep.certificate_verified
    F = [(0.01 / 2) ** len(x) for x in T.labels]
    assert min(0.99 * v for v in F) < 1e-9
    assert constant_rate_feasible_truncated(T, 0.99, epsilon=1e-14).status == "feasible"


def test_truncated_chain_feasible_on_grid():
    P = chain_poset(5, truncated=True)
    reps = scan(P, GRID_1_9)
    assert all(r.status == "feasible" for r in reps)


@pytest.mark.parametrize("alpha", [0, 1.5, -0.1])
def test_alpha_range(alpha):
    with pytest.raises(InvalidParams):
        build_problem(chain_poset(3), alpha)


def test_epsilon_too_large():
    with pytest.raises(EpsilonTooLarge):
        build_problem(antichain_poset(5), 0.5, epsilon=0.2)


def test_finite_and_truncated_entry_points_check_boundary():
    with pytest.raises(InvalidParams):
        constant_rate_feasible_finite(chain_poset(3, truncated=True), 0.5)
    with pytest.raises(InvalidParams):
        constant_rate_feasible_truncated(chain_poset(3), 0.5)


def test_union_bound_relaxation_is_labelled():
    P = lex_sum_antichains(2, 3)
    rep = constant_rate_feasible_truncated(P, 0.5)
    assert rep.relaxation == "union-bound"
    assert any("union-bound" in n for n in rep.notes)


def test_exact_and_float_agree():
    posets = [chain_poset(3), antichain_poset(3), boolean_lattice(2),
              Poset(3, [(0, 1), (0, 2)]), chain_poset(3, truncated=True)]
    for P in posets:
        for a in (Fraction(1, 4), Fraction(1, 2), Fraction(1)):
            fl = scan(P, [a])[0].status
            ex = scan(P, [a], exact=True)[0].status
            assert fl == ex, (P, a)


def test_scan_is_thread_independent():
    P = tree_poset(kary(2), 3)
    a = [r.to_dict() for r in scan(P, DEFAULT_GRID[:6])]
    b = [r.to_dict() for r in scan(P, DEFAULT_GRID[:6], threads=3)]
    assert a == b


def test_parse_alpha_grid():
    assert parse_alpha_grid("0.1:0.3:0.1") == [Fraction(1, 10), Fraction(2, 10), Fraction(3, 10)]
    assert len(DEFAULT_GRID) == 20 and DEFAULT_GRID[-1] == 1
    for bad in ("0.1:0.2", "a:b:c", "0:1:0"):
        with pytest.raises(InvalidParams):
            parse_alpha_grid(bad)


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
def test_poisson_marginal_passes(alpha):
    rep = subsets_poisson_check(poisson_marginal(-math.log(alpha), 40), alpha)
    assert rep.passes(1e-10)
    # (b) at n = 0 reads P(U = 0) = alpha
    b0 = next(r for r in rep.rows if r["check"] == "b" and r["n"] == 0)
    assert b0["lhs"] == pytest.approx(alpha, abs=1e-12)


def test_poisson_residuals_shrink_with_K():
    alpha = 0.5
    res = []
    for K in (10, 20, 40):
        P = poisson_marginal(-math.log(alpha), K)
        res.append(subsets_poisson_check(P, alpha, max_missing=1.0).max_residual)
    assert res[0] >= res[1] >= res[2]


def test_geometric_marginal_fails():
    alpha = 0.5
    geo = [alpha * (1 - alpha) ** k for k in range(80)]
    assert not subsets_poisson_check(geo, alpha).passes(1e-6)


def test_poisson_truncation_too_severe():
    with pytest.raises(TruncationTooSevere):
        subsets_poisson_check(poisson_marginal(2.0, 5), math.exp(-2.0))


def test_subsets_search():
    rep = search_subsets_poset(0.8, 4, 2)
    assert rep.status == "feasible"
    assert rep.n_elements == 11
    assert any("open" in n for n in rep.notes)
    assert search_subsets_poset(1.0, 4, 2).status == "infeasible"


def test_universality_embedding():
    for P in (boolean_lattice(3), tree_poset(kary(2), 2), Poset(4, [(0, 2), (1, 2), (2, 3)])):
        family, ok = universality_embed(P)
        assert ok
        assert all(min(s) >= 1 for s in family)
