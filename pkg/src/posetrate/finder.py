"""Search for constant-rate distributions.

At a fixed rate alpha the condition f = alpha U f is linear in f, so existence
on a finite poset (or a necessary condition on a truncation) is an LP
feasibility question.  Truncations add slack variables ``m(x)`` for the
unrepresented part of each up-set:

* rooted trees: child up-sets are disjoint, so ``m(x) = sum_{y in A(x)} m(y)``
  (with ``>=`` at boundary nodes, whose children are not all represented);
* general posets: only ``max_y m(y) <= m(x) <= sum_y m(y)`` is known, a union
  bound, so feasibility there does not imply existence.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, fsum
from numbers import Number

from .distributions import Pdf, check_constant_rate
from .errors import EpsilonTooLarge, InvalidParams, TruncationTooSevere
from .poset import Poset, _bits, classify, format_number, label_str
from .simplex import check_certificate, solve_feasibility

DEFAULT_EPSILON = 1e-9
EXACT_LIMIT = 40


@dataclass
class FeasibilityProblem:
    poset: Poset
    alpha: Number
    epsilon: Number
    relaxation: str                       # "finite" | "tree" | "union-bound"
    names: list = field(default_factory=list)
    eq_rows: list = field(default_factory=list)
    eq_rhs: list = field(default_factory=list)
    ub_rows: list = field(default_factory=list)
    ub_rhs: list = field(default_factory=list)
    slack_index: dict = field(default_factory=dict)
    total_index: int | None = None

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def residual(self, values) -> float:
        """Largest violation of any constraint or bound by ``values``."""
        worst = 0.0
        for row, rhs in zip(self.eq_rows, self.eq_rhs):
            worst = max(worst, abs(float(sum(c * values[j] for j, c in row.items()) - rhs)))
        for row, rhs in zip(self.ub_rows, self.ub_rhs):
            worst = max(worst, float(sum(c * values[j] for j, c in row.items()) - rhs))
        for j, name in enumerate(self.names):
            floor = self.epsilon if name[0] == "f" else 0
            worst = max(worst, float(floor - values[j]))
        return worst

    def values_from_upf(self, f, F) -> list:
        """Variable vector implied by a candidate pdf ``f`` with UPF ``F``."""
        P = self.poset
        vals = list(f)
        for x in range(P.n, self.n_vars):
            vals.append(0)
        for x, j in self.slack_index.items():
            vals[j] = F[x] - sum(f[t] for t in _bits(P.up_mask(x)))
        if self.total_index is not None:
            vals[self.total_index] = 1 - sum(f)
        return vals


def build_problem(P: Poset, alpha, epsilon=DEFAULT_EPSILON) -> FeasibilityProblem:
    if not 0 < alpha <= 1:
        raise InvalidParams(f"alpha = {alpha} outside (0, 1]")
    if epsilon < 0:
        raise InvalidParams("epsilon must be non-negative")
    if epsilon * P.n >= 1:
        raise EpsilonTooLarge(f"epsilon * n = {epsilon * P.n} >= 1")
    cls = classify(P)
    relaxation = "finite" if not P.is_truncated else ("tree" if cls.is_rooted_tree else "union-bound")
    prob = FeasibilityProblem(P, alpha, epsilon, relaxation)
    prob.names = [("f", x) for x in range(P.n)]
    if P.is_truncated:
        for x in range(P.n):
            if P.up_truncated(x):
                prob.slack_index[x] = len(prob.names)
                prob.names.append(("m", x))
        prob.total_index = len(prob.names)
        prob.names.append(("M",))
    m = prob.slack_index

    # f(x) = alpha * (sum_{y >= x} f(y) + m(x))
    for x in range(P.n):
        row = {y: -alpha for y in _bits(P.up_mask(x))}
        row[x] = 1 - alpha
        if x in m:
            row[m[x]] = -alpha
        prob.eq_rows.append(row)
        prob.eq_rhs.append(0)
    norm = {x: 1 for x in range(P.n)}
    if prob.total_index is not None:
        norm[prob.total_index] = 1
    prob.eq_rows.append(norm)
    prob.eq_rhs.append(1)

    if not P.is_truncated:
        return prob
    M = prob.total_index
    if relaxation == "tree":
        for x, j in m.items():
            row = {j: 1}
            for y in P.children(x):
                if y in m:
                    row[m[y]] = row.get(m[y], 0) - 1
            if x in P.boundary:  # sum over children <= m(x)
                prob.ub_rows.append({k: -v for k, v in row.items()})
                prob.ub_rhs.append(0)
            else:
                prob.eq_rows.append(row)
                prob.eq_rhs.append(0)
        root = min(cls.minimal_elements)
        prob.eq_rows.append({M: 1, m[root]: -1} if root in m else {M: 1})
        prob.eq_rhs.append(0)
        return prob

    for x, j in m.items():
        for y in P.children(x):
            if y in m:
                prob.ub_rows.append({m[y]: 1, j: -1})
                prob.ub_rhs.append(0)
        if x not in P.boundary:
            row = {j: 1}
            for y in P.children(x):
                if y in m:
                    row[m[y]] = -1
            prob.ub_rows.append(row)
            prob.ub_rhs.append(0)
        prob.ub_rows.append({j: 1, M: -1})
        prob.ub_rhs.append(0)
    row = {M: 1}
    for b in P.boundary:
        row[m[b]] = -1
    prob.ub_rows.append(row)
    prob.ub_rhs.append(0)
    if len(cls.minimal_elements) == 1:
        root = next(iter(cls.minimal_elements))
        prob.eq_rows.append({M: 1, m[root]: -1} if root in m else {M: 1})
        prob.eq_rhs.append(0)
    return prob


@dataclass
class FeasibilityReport:
    status: str                      # feasible | infeasible | residual-only
    alpha: Number
    epsilon: Number
    relaxation: str
    exact: bool
    n_elements: int
    witness: list | None = None      # f values when feasible
    slack_total: Number | None = None
    residual: float | None = None
    certificate_verified: bool | None = None
    witness_rate: Number | None = None
    depth: int | None = None
    notes: list = field(default_factory=list)
    labels: tuple = ()

    def to_dict(self) -> dict:
        d = {
            "status": self.status,
            "alpha": format_number(self.alpha),
            "epsilon": format_number(self.epsilon),
            "relaxation": self.relaxation,
            "exact": self.exact,
            "n_elements": self.n_elements,
            "residual": self.residual,
            "certificate_verified": self.certificate_verified,
            "notes": list(self.notes),
        }
        if self.depth is not None:
            d["depth"] = self.depth
        if self.witness is not None:
            d["witness"] = {label_str(lab): format_number(v) for lab, v in zip(self.labels, self.witness)}
            d["slack_total"] = format_number(self.slack_total)
        if self.witness_rate is not None:
            d["witness_rate"] = format_number(self.witness_rate)
        return d


def solve_problem(prob: FeasibilityProblem, exact: bool = False) -> FeasibilityReport:
    P = prob.poset
    if exact and P.n > EXACT_LIMIT:
        raise InvalidParams(f"exact pivoting is limited to {EXACT_LIMIT} elements")
    # shift f = eps + f' so every variable has lower bound 0; all variables are
    # then <= 1 (f sums to at most 1, each slack is at most the total slack)
    eps = prob.epsilon
    n_f = P.n

    def shifted(rows, rhs):
        out = []
        for row, b in zip(rows, rhs):
            out.append(b - sum(c * eps for j, c in row.items() if j < n_f))
        return out

    res = solve_feasibility(prob.n_vars, prob.eq_rows, shifted(prob.eq_rows, prob.eq_rhs),
                            prob.ub_rows, shifted(prob.ub_rows, prob.ub_rhs), exact=exact,
                            feas_tol=max(float(eps) * 1e-3, 1e-14))
    report = FeasibilityReport("infeasible", prob.alpha, prob.epsilon, prob.relaxation, exact,
                               P.n, labels=P.labels)
    if res.status == "infeasible":
        report.certificate_verified = check_certificate(
            prob.n_vars, prob.eq_rows, shifted(prob.eq_rows, prob.eq_rhs),
            prob.ub_rows, shifted(prob.ub_rows, prob.ub_rhs), res.certificate,
            tol=0 if exact else 1e-12, margin=0, var_bound=1)
        if not report.certificate_verified:
            report.status = "residual-only"
            report.notes.append("phase I did not reach zero but the certificate failed to verify")
        return report
    values = [v + eps if j < n_f else v for j, v in enumerate(res.x)]
    if not exact:
        values = [float(v) for v in values]
    report.status = "feasible"
    report.witness = values[:n_f]
    report.slack_total = values[prob.total_index] if prob.total_index is not None else 0
    report.residual = prob.residual(values)
    if prob.relaxation == "finite":
        try:
            report.witness_rate = check_constant_rate(Pdf(P, tuple(report.witness), tail=()), tol=1e-7)
        except Exception as exc:  # float witness may miss the unit mass by rounding
            report.notes.append(f"witness not checked: {exc}")
    if prob.relaxation == "union-bound":
        report.notes.append("union-bound relaxation: feasibility is necessary evidence only")
    return report


def _exact(v):
    """Decimal-faithful Fraction: 0.1 -> 1/10, not the nearest binary double."""
    return Fraction(str(v)) if isinstance(v, float) else Fraction(v)


def constant_rate_feasible_finite(P: Poset, alpha, epsilon=DEFAULT_EPSILON,
                                  exact: bool = False) -> FeasibilityReport:
    """LP decision of whether the finite poset P carries a law with rate alpha."""
    if P.is_truncated:
        raise InvalidParams("poset is truncated; use constant_rate_feasible_truncated")
    if exact:
        alpha, epsilon = _exact(alpha), _exact(epsilon)
    return solve_problem(build_problem(P, alpha, epsilon), exact)


def constant_rate_feasible_truncated(P: Poset, alpha, epsilon=DEFAULT_EPSILON,
                                     exact: bool = False) -> FeasibilityReport:
    """Necessary-condition search for a rate-alpha law extending the truncation P."""
    if not P.is_truncated:
        raise InvalidParams("poset has no boundary; use constant_rate_feasible_finite")
    if exact:
        alpha, epsilon = _exact(alpha), _exact(epsilon)
    return solve_problem(build_problem(P, alpha, epsilon), exact)


def closed_form_residual(P: Poset, alpha, f, F, epsilon=DEFAULT_EPSILON) -> float:
    """Constraint violation of the candidate (f, F) in the truncated LP."""
    prob = build_problem(P, alpha, epsilon)
    return prob.residual(prob.values_from_upf(f, F))


def parse_alpha_grid(spec: str) -> list[Fraction]:
    """'a:b:step' -> [a, a+step, ..., <= b] as exact decimals."""
    try:
        a, b, step = (Fraction(s) for s in spec.split(":"))
    except ValueError as exc:
        raise InvalidParams(f"bad alpha grid {spec!r}") from exc
    if step <= 0:
        raise InvalidParams("grid step must be positive")
    out, v = [], a
    while v <= b:
        out.append(v)
        v += step
    return out


DEFAULT_GRID = parse_alpha_grid("0.05:1:0.05")


def scan(P: Poset, alphas=None, epsilon=DEFAULT_EPSILON, exact=False, threads=1) -> list:
    """One report per grid cell; results do not depend on ``threads``."""
    alphas = list(DEFAULT_GRID if alphas is None else alphas)
    run = constant_rate_feasible_truncated if P.is_truncated else constant_rate_feasible_finite

    def cell(a):
        return run(P, a if exact else float(a), epsilon, exact)

    if threads <= 1:
        return [cell(a) for a in alphas]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(cell, alphas))


# -- finite subsets of N+ --------------------------------------------------


def poisson_marginal(mu: float, K: int) -> list[float]:
    return [math.exp(-mu + k * math.log(mu) - math.lgamma(k + 1)) if mu > 0 else float(k == 0)
            for k in range(K + 1)]


@dataclass
class PoissonReport:
    alpha: float
    K: int
    missing_mass: float
    residual_a: float   # alpha P(U=k) = E[(-1)^(U+k) C(U,k)]
    residual_b: float   # P(U=n) = alpha E[C(U,n)]
    residual_c: float   # G(t-n) = alpha^n G(t)
    rows: list = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return max(self.residual_a, self.residual_b, self.residual_c)

    def passes(self, tol: float) -> bool:
        return self.max_residual < tol


DEFAULT_T_POINTS = (0.0, 0.25, 0.5, 0.75, 1.0)


def subsets_poisson_check(marginal, alpha, t_points=DEFAULT_T_POINTS, max_missing=1e-12) -> PoissonReport:
    """Residuals of the three equivalent necessary conditions on the law of #X.

    Condition (c) is evaluated at pairs (t, n) with |t| <= 1 and |t - n| <= 1:
    the truncated generating function is only trustworthy there.
    """
    P = [float(p) for p in marginal]
    K = len(P) - 1
    missing = 1 - fsum(P)
    if missing > max_missing:
        raise TruncationTooSevere(f"marginal misses mass {missing:.3g} > {max_missing}")
    alpha = float(alpha)
    rows = []
    ra = rb = rc = 0.0
    for k in range(K + 1):
        rhs = fsum((-1) ** (j + k) * comb(j, k) * P[j] for j in range(k, K + 1))
        err = abs(alpha * P[k] - rhs)
        ra = max(ra, err)
        rows.append({"check": "a", "n": k, "lhs": alpha * P[k], "rhs": rhs, "abs_err": err})
    for n in range(K + 1):
        rhs = alpha * fsum(comb(j, n) * P[j] for j in range(n, K + 1))
        err = abs(P[n] - rhs)
        rb = max(rb, err)
        rows.append({"check": "b", "n": n, "lhs": P[n], "rhs": rhs, "abs_err": err})

    def G(s):
        return fsum(p * s ** j for j, p in enumerate(P))

    for t in t_points:
        for n in range(K + 1):
            if abs(t - n) > 1 or abs(t) > 1:
                continue
            lhs, rhs = G(t - n), alpha ** n * G(t)
            err = abs(lhs - rhs)
            rc = max(rc, err)
            rows.append({"check": "c", "n": n, "t": t, "lhs": lhs, "rhs": rhs, "abs_err": err})
    return PoissonReport(alpha, K, missing, ra, rb, rc, rows)


def search_subsets_poset(alpha, M: int, m_cap: int, epsilon=DEFAULT_EPSILON,
                         exact: bool = False) -> FeasibilityReport:
    """Truncation evidence for a constant-rate law on (finite subsets of N+, inclusion).

    The poset is the subsets of {1..M} of size <= m_cap (all elements on the
    boundary, since every finite set has unrepresented supersets).  On top of
    the union-bound LP, the mass at size j may not exceed the Poisson(-ln alpha)
    probability of j, a necessary condition.
    """
    from .instances import subsets_poset

    P = subsets_poset(M, m_cap)
    if exact:
        alpha, epsilon = _exact(alpha), _exact(epsilon)
    prob = build_problem(P, alpha, epsilon)
    mu = -math.log(float(alpha))
    pois = poisson_marginal(mu, m_cap)
    for j in range(m_cap + 1):
        row = {x: 1 for x in range(P.n) if len(P.labels[x]) == j}
        prob.ub_rows.append(row)
        prob.ub_rhs.append(_exact(pois[j]) if exact else pois[j])
    report = solve_problem(prob, exact)
    report.notes.append(
        f"subsets of {{1..{M}}} with size <= {m_cap}; evidence at this truncation only, "
        "the existence question stays open")
    report.notes.append("size marginal capped by Poisson(-ln alpha): "
                        + ", ".join(f"{j}:{p:.6g}" for j, p in enumerate(pois)))
    return report


def universality_embed(P: Poset):
    """Map x -> D[x] with elements relabeled 1..N; returns (family, is_isomorphism)."""
    family = [frozenset(t + 1 for t in P.down_list(x)) for x in range(P.n)]
    ok = all(P.leq(x, y) == (family[x] <= family[y]) for x in range(P.n) for y in range(P.n))
    return family, ok
