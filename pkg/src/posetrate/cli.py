"""Command-line entry point: ``posetrate <subcommand> ...``.

Every subcommand prints a JSON report (sorted keys) on stdout and, when an
output directory is set (``--out`` or ``$POSETRATE_OUT``), writes
``<subcommand>.json`` and ``<subcommand>.csv`` there.  Exit status is 0 when
all checks in scope pass, 1 when one fails, 2 on input errors (with an error
JSON on stderr).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from . import finder, instances, ladder, verify
from .distributions import (
    Pdf,
    check_constant_rate,
    moment_identities,
    pdf_from_dict,
    pdf_to_dict,
    rate,
    rows_to_csv,
    upf_from_pdf,
)
from .errors import InputError, PosetRateError
from .poset import (
    Poset,
    _mobius_row,
    cumulative_table,
    format_number,
    label_str,
    load_poset,
    poset_to_dict,
)
from .trees import (
    RULES,
    SPLITTERS,
    TreeLaw,
    constant_rate_law,
    kary,
    percolation_upf,
    validate_upf_tree,
)

OUT_ENV = "POSETRATE_OUT"

# frozen CSV schemas, one per subcommand
CSV_COLUMNS = {
    "mobius": ["x", "y", "mu"],
    "cumulative": ["element", "label", "n", "lambda"],
    "upf": ["element", "label", "f", "F"],
    "rate": ["element", "label", "f", "F", "r"],
    "construct-tree": ["node", "depth", "F", "f"],
    "percolate": ["node", "depth", "F_p", "exact", "empirical"],
    "ladder": ["k", "node", "exact", "empirical"],
    "thin": ["node", "exact", "empirical"],
    "products": ["y", "z", "ladder", "product", "gap"],
    "find": ["alpha", "depth", "status", "residual"],
    "poisson-check": ["check", "n", "t", "lhs", "rhs", "abs_err"],
    "verify": ["key", "name", "ok", "detail"],
    "catalog": ["name", "elements", "recipe"],
    "simulate": ["node", "exact", "empirical"],
}


@dataclass
class RunConfig:
    subcommand: str
    args: dict = field(default_factory=dict)
    track: str = "exact"
    seed: int = verify.DEFAULT_SEED
    out: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


# -- input resolution ----------------------------------------------------


def _num(text, track):
    if text is None:
        return None
    try:
        v = Fraction(str(text))
    except ValueError as exc:
        raise InputError(f"not a number: {text!r}") from exc
    return v if track == "exact" else float(v)


def _params(text: str | None) -> dict:
    """'k=2,depth=5' -> {'k': 2, 'depth': 5}; ints stay ints, 'none' is None."""
    out = {}
    if not text:
        return out
    for part in text.split(","):
        if "=" not in part:
            raise InputError(f"parameter {part!r} is not key=value")
        k, v = part.split("=", 1)
        v = v.strip()
        if v.lower() == "none":
            out[k.strip()] = None
        elif v.lower() in ("true", "false"):
            out[k.strip()] = v.lower() == "true"
        else:
            try:
                out[k.strip()] = int(v)
            except ValueError:
                out[k.strip()] = v
    return out


def _catalog(spec: str, extra: dict | None = None):
    name, _, rest = spec.partition(":")
    key = None
    if "#" in rest:
        rest, key = rest.split("#", 1)
    elif "#" in name:
        name, key = name.split("#", 1)
    params = {**_params(rest), **(extra or {})}
    entry = instances.CATALOG.get(name)
    if entry is None:
        raise InputError(f"{spec!r} is neither a file nor a catalog entry")
    params = {k: v for k, v in params.items() if k in entry.defaults}
    return instances.build(name, **params), key


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: {exc}") from exc


def resolve_poset(spec: str, extra=None) -> Poset:
    if os.path.exists(spec):
        return load_poset(spec)
    return _catalog(spec, extra)[0].poset


def resolve_dist(spec: str, extra=None) -> Pdf:
    if os.path.exists(spec):
        return pdf_from_dict(_read_json(spec))
    built, key = _catalog(spec, extra)
    if not built.dists:
        raise InputError(f"catalog entry {built.name!r} carries no distribution")
    if key is None:
        key = sorted(built.dists)[0]
    if key not in built.dists:
        raise InputError(f"{built.name} has distributions {sorted(built.dists)}, not {key!r}")
    return built.dists[key]


def resolve_tree(spec: str, alpha, split: str) -> TreeLaw:
    if spec.startswith("kary:"):
        try:
            rule = kary(int(spec.split(":", 1)[1]))
        except ValueError as exc:
            raise InputError(f"bad tree spec {spec!r}") from exc
    elif spec in RULES:
        rule = RULES[spec]
    else:
        raise InputError(f"unknown tree {spec!r}; use kary:<k> or one of {sorted(RULES)}")
    if split not in SPLITTERS:
        raise InputError(f"unknown split {split!r}; choose from {sorted(SPLITTERS)}")
    if alpha is None:
        raise InputError("--alpha is required")
    return constant_rate_law(rule, alpha, SPLITTERS[split]())


def _label(lab):
    return label_str(lab)


def _fmt(v):
    if v is None or isinstance(v, (bool, str)):
        return v
    return format_number(v)


# -- subcommands ---------------------------------------------------------


def cmd_mobius(a, cfg):
    P = resolve_poset(a.poset, _params(a.params))
    rows = []
    for x in range(P.n):
        for y, mu in sorted(_mobius_row(P, x).items()):
            rows.append({"x": x, "y": y, "mu": mu})
    return {"poset": poset_to_dict(P), "entries": len(rows)}, rows, True


def cmd_cumulative(a, cfg):
    P = resolve_poset(a.poset, _params(a.params))
    lam = cumulative_table(P, a.n)
    rows = [{"element": x, "label": _label(P.labels[x]), "n": n, "lambda": lam[n][x]}
            for n in range(a.n + 1) for x in range(P.n)]
    return {"n_max": a.n, "elements": P.n}, rows, True


def cmd_upf(a, cfg):
    f = resolve_dist(a.dist, _params(a.params))
    F = upf_from_pdf(f)
    rows = [{"element": x, "label": _label(f.poset.labels[x]), "f": f.probs[x], "F": F[x]}
            for x in range(f.poset.n)]
    return {"elements": f.poset.n, "tail_mass": _fmt(f.tail_mass)}, rows, True


def cmd_rate(a, cfg):
    f = resolve_dist(a.dist, _params(a.params))
    F = upf_from_pdf(f)
    r = rate(f)
    alpha = check_constant_rate(f, a.tol)
    rows = [{"element": x, "label": _label(f.poset.labels[x]), "f": f.probs[x], "F": F[x], "r": r[x]}
            for x in range(f.poset.n)]
    report = {"constant_rate": _fmt(alpha)}
    ok = True
    if a.moments is not None and f.tail_mass == 0:
        mr = moment_identities(f, a.moments, tol=a.tol)
        report["moments_ok"] = mr.ok
        ok = mr.ok
    if a.expect_constant and alpha is None:
        ok = False
    return report, rows, ok


def cmd_construct_tree(a, cfg):
    law = resolve_tree(a.tree, _num(a.alpha, cfg.track), a.split)
    table = law.upf_table(a.depth)
    rep = validate_upf_tree(law.rule, law.upf, a.depth, alpha=law.alpha)
    alpha = check_constant_rate(law.pdf_on(a.depth))
    rows = [{"node": _label(x), "depth": len(x), "F": F, "f": law.pdf(x)} for x, F in table.items()]
    report = {"rate": _fmt(alpha), "level_sums": [_fmt(s) for s in rep.level_sums], "decay_ok": rep.decay_ok}
    return report, rows, rep.ok and alpha == law.constant_rate


def cmd_percolate(a, cfg):
    law = resolve_tree(a.tree, _num(a.alpha, cfg.track), a.split)
    p = _num(a.p, cfg.track)
    Fp = percolation_upf(law.rule, law.upf, p, a.depth)
    rep = validate_upf_tree(law.rule, lambda x: p ** len(x) * law.upf(x), a.depth, alpha=p * law.alpha)
    exact = ladder.percolated_pdf(law, p, a.depth - 1) if a.depth > 0 else {}
    report = {"structural_ok": rep.ok}
    emp = {}
    ok = rep.ok
    if a.replicates:
        sims = ladder.percolate_simulate(law, p, a.replicates, cfg.seed, a.threads)
        emp = ladder.empirical_law(sims, list(exact))
        tv = ladder.total_variation(emp, ladder.with_tail(exact))
        report["tv"] = tv
        ok = ok and tv <= a.tv
    rows = [{"node": _label(x), "depth": len(x), "F_p": v, "exact": exact.get(x), "empirical": emp.get(x)}
            for x, v in Fp.items()]
    return report, rows, ok


def _dist_or_tree(a, cfg):
    if a.tree:
        return resolve_tree(a.tree, _num(a.alpha, cfg.track), a.split)
    if a.dist:
        return resolve_dist(a.dist, _params(a.params))
    raise InputError("give --tree or --dist")


def _as_labels(dist, xs):
    """Samples from a finite law are element ids; report them by label."""
    return [dist.poset.labels[x] for x in xs] if isinstance(dist, Pdf) else list(xs)


def cmd_ladder(a, cfg):
    dist = _dist_or_tree(a, cfg)
    tabs = ladder.ladder_exact_pdfs(dist, a.n, a.depth)
    report = {"alpha": _fmt(tabs.alpha), "tails": [_fmt(t) for t in tabs.tails]}
    rows, ok = [], True
    emp = {}
    if a.replicates:
        ys = ladder.ladder_endpoints(dist, a.n, a.replicates, cfg.seed, "markov", a.threads)
        emp = ladder.empirical_law(_as_labels(dist, ys), tabs.labels)
        tv = ladder.total_variation(emp, ladder.with_tail(tabs.table(a.n)))
        report["tv"] = tv
        ok = tv <= a.tv
    for k in range(1, a.n + 1):
        for lab, v in zip(tabs.labels, tabs.tables[k - 1]):
            rows.append({"k": k, "node": _label(lab), "exact": v,
                         "empirical": emp.get(lab) if k == a.n and emp else None})
    return report, rows, ok


def cmd_thin(a, cfg):
    dist = _dist_or_tree(a, cfg)
    p = _num(a.p, cfg.track)
    t = ladder.thin_exact(dist, p, a.depth)
    alpha = t.alpha
    report = {"rate": _fmt(t.rate), "expected_rate": _fmt(ladder.thinning_rate(alpha, p)),
              "verified": t.verified}
    ok = t.verified and t.rate == ladder.thinning_rate(alpha, p)
    emp = {}
    if a.simulate:
        sims = ladder.thin_simulate(dist, p, a.replicates, cfg.seed, a.threads)
        emp = ladder.empirical_law(sims, t.labels)
        tv = ladder.total_variation(emp, ladder.with_tail(t.table()))
        report["tv"] = tv
        ok = ok and tv <= a.tv
    rows = [{"node": _label(x), "exact": v, "empirical": emp.get(x)} for x, v in zip(t.labels, t.probs)]
    return report, rows, ok


def cmd_products(a, cfg):
    law = resolve_tree(a.tree, _num(a.alpha, cfg.track), a.split)
    g = ladder.ladder_kernel(law, a.depth)
    h = ladder.product_kernel(law, a.depth)
    rep = ladder.equivalence_diagnostic(law, a.depth)
    rows = [{"y": _label(y), "z": _label(z), "ladder": v, "product": h[(y, z)], "gap": abs(v - h[(y, z)])}
            for (y, z), v in g.items()]
    report = {"max_gap": _fmt(rep.max_gap), "equivalent": rep.equivalent,
              "worst": [_label(v) for v in rep.worst] if rep.worst else None}
    return report, rows, True


def cmd_find(a, cfg):
    exact = cfg.track == "exact"
    eps = _num(a.epsilon, cfg.track)
    grid = finder.parse_alpha_grid(a.alpha_grid)
    if a.subsets:
        try:
            M, m_cap = (int(v) for v in a.subsets.split(":"))
        except ValueError as exc:
            raise InputError("--subsets takes M:m_cap") from exc
        reports = [finder.search_subsets_poset(al if exact else float(al), M, m_cap, eps, exact) for al in grid]
    else:
        extra = _params(a.params)
        if a.depth is not None:
            extra["depth"] = a.depth
        P = resolve_poset(a.poset, extra)
        reports = finder.scan(P, grid, eps, exact, a.threads)
    cells = [r.to_dict() for r in reports]
    rows = [{"alpha": c["alpha"], "depth": a.depth, "status": c["status"], "residual": c["residual"]}
            for c in cells]
    return {"cells": cells}, rows, True


def cmd_poisson(a, cfg):
    alpha = float(Fraction(a.alpha))
    if a.marginal == "poisson":
        marg = finder.poisson_marginal(-math.log(alpha), a.K)
    elif a.marginal == "geometric":
        marg = [0.5 ** (j + 1) for j in range(a.K + 1)]
    else:
        marg = [float(Fraction(str(v))) for v in _read_json(a.marginal)]
    rep = finder.subsets_poisson_check(marg, alpha)
    report = {"K": rep.K, "missing_mass": rep.missing_mass, "residual_a": rep.residual_a,
              "residual_b": rep.residual_b, "residual_c": rep.residual_c,
              "passes": rep.passes(a.tol)}
    return report, rep.rows, rep.passes(a.tol) if a.expect_pass else True


def cmd_verify(a, cfg):
    if a.suite not in verify.SUITES:
        raise InputError(f"unknown suite {a.suite!r}; choose from {sorted(verify.SUITES)}")
    results = verify.run_suite(a.suite, cfg.seed, a.threads)
    for r in results:
        print(r.line(), file=sys.stderr)
    rows = [{"key": r.key, "name": r.name, "ok": r.ok, "detail": r.detail} for r in results]
    return {"suite": a.suite, "results": rows}, rows, all(r.ok for r in results)


def cmd_catalog(a, cfg):
    if a.action == "list":
        rows = []
        for name in instances.catalog_names():
            e = instances.CATALOG[name]
            rows.append({"name": name, "elements": instances.build(name).poset.n, "recipe": e.recipe,
                         "defaults": {k: _fmt(v) for k, v in e.defaults.items()}})
        return {"version": instances.CATALOG_VERSION, "entries": rows}, rows, True
    if not a.name:
        raise InputError("catalog build needs a name")
    built = instances.build(a.name, **_params(a.params))
    report = {"name": built.name, "params": {k: _fmt(v) for k, v in built.params.items()},
              "poset": poset_to_dict(built.poset),
              "dists": {k: pdf_to_dict(d) for k, d in sorted(built.dists.items())}}
    rows = [{"name": built.name, "elements": built.poset.n, "recipe": instances.CATALOG[a.name].recipe}]
    return report, rows, True


def cmd_simulate(a, cfg):
    spec = _read_json(a.run)
    if not isinstance(spec, dict) or "op" not in spec or "dist" not in spec:
        raise InputError("run spec needs 'op' and 'dist'")
    op = spec["op"]
    n = int(spec.get("n", 2))
    reps = int(spec.get("replicates", 1000))
    seed = int(spec.get("seed", cfg.seed))
    depth = int(spec.get("depth", 4))
    dist_spec = spec["dist"]
    if isinstance(dist_spec, dict):
        dist = resolve_tree(dist_spec.get("tree", "kary:2"), _num(dist_spec.get("alpha"), cfg.track),
                            dist_spec.get("split", "uniform"))
    else:
        dist = resolve_dist(dist_spec)
    if op == "iid":
        samples = [x for i in range(reps) for x in ladder.sample_iid(dist, n, seed, i).nodes]
        exact = dist.pdf_on(depth) if isinstance(dist, TreeLaw) else dist
        table = dict(zip(exact.poset.labels, exact.probs))
        ids = _as_labels(dist, samples)
    elif op == "ladder":
        tabs = ladder.ladder_exact_pdfs(dist, n, depth)
        ys = ladder.ladder_endpoints(dist, n, reps, seed, "markov", a.threads)
        table = tabs.table(n)
        ids = _as_labels(dist, ys)
    elif op == "thin":
        p = _num(spec.get("p", "1/2"), cfg.track)
        t = ladder.thin_exact(dist, p, depth)
        sims = ladder.thin_simulate(dist, p, reps, seed, a.threads)
        table = t.table()
        ids = _as_labels(dist, sims)
    elif op == "products":
        if not isinstance(dist, TreeLaw):
            raise InputError("products needs a tree law")
        ends = [ladder.partial_products(ladder.sample_iid(dist, n, seed, i)).nodes[-1] for i in range(reps)]
        exact_y = ladder.ladder_exact_pdfs(dist, n, depth)
        table = exact_y.table(n)
        ids = ends
    else:
        raise InputError(f"unknown op {op!r}")
    emp = ladder.empirical_law(ids, list(table))
    tv = ladder.total_variation(emp, ladder.with_tail(table))
    rows = [{"node": _label(x), "exact": v, "empirical": emp.get(x)} for x, v in table.items()]
    return {"op": op, "n": n, "replicates": reps, "seed": seed, "tv": tv}, rows, True


COMMANDS = {
    "mobius": cmd_mobius,
    "cumulative": cmd_cumulative,
    "upf": cmd_upf,
    "rate": cmd_rate,
    "construct-tree": cmd_construct_tree,
    "percolate": cmd_percolate,
    "ladder": cmd_ladder,
    "thin": cmd_thin,
    "products": cmd_products,
    "find": cmd_find,
    "poisson-check": cmd_poisson,
    "verify": cmd_verify,
    "catalog": cmd_catalog,
    "simulate": cmd_simulate,
}


# -- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    track = common.add_mutually_exclusive_group()
    track.add_argument("--exact", dest="track", action="store_const", const="exact",
                       help="rational arithmetic (default)")
    track.add_argument("--float", dest="track", action="store_const", const="float",
                       help="float64 arithmetic")
    common.set_defaults(track="exact")
    common.add_argument("--seed", type=int, default=verify.DEFAULT_SEED)
    common.add_argument("--tol", type=float, default=1e-9)
    common.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV})")
    common.add_argument("--threads", type=int, default=1)

    p = argparse.ArgumentParser(prog="posetrate", description="Rates and ladder variables on posets.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    s = add("mobius", help="Moebius function of a poset")
    s.add_argument("--poset", required=True)
    s.add_argument("--params")
    s = add("cumulative", help="lambda_n tables")
    s.add_argument("--poset", required=True)
    s.add_argument("--params")
    s.add_argument("--n", type=int, default=3)
    for name in ("upf", "rate"):
        s = add(name, help=f"{name} table of a distribution")
        s.add_argument("--dist", required=True)
        s.add_argument("--params")
        if name == "rate":
            s.add_argument("--moments", type=int, default=None, metavar="N")
            s.add_argument("--expect-constant", action="store_true")

    def tree_args(s, tree_default="kary:2"):
        s.add_argument("--tree", default=tree_default, help="kary:<k> or a named rule")
        s.add_argument("--alpha", default=None)
        s.add_argument("--split", default="uniform", choices=sorted(SPLITTERS))
        s.add_argument("--depth", type=int, default=4)

    s = add("construct-tree", help="UPF of a constant-rate tree law")
    tree_args(s)
    s = add("percolate", help="percolated UPF, optionally simulated")
    tree_args(s)
    s.add_argument("--p", required=True)
    s.add_argument("--replicates", type=int, default=0)
    s.add_argument("--tv", type=float, default=0.01)
    s = add("ladder", help="exact ladder laws f_1..f_n (and simulation)")
    tree_args(s, None)
    s.add_argument("--dist")
    s.add_argument("--params")
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--replicates", type=int, default=0)
    s.add_argument("--tv", type=float, default=0.01)
    s = add("thin", help="law of the first accepted ladder point")
    tree_args(s, None)
    s.add_argument("--dist")
    s.add_argument("--params")
    s.add_argument("--p", required=True)
    s.add_argument("--simulate", action="store_true")
    s.add_argument("--replicates", type=int, default=10 ** 5)
    s.add_argument("--tv", type=float, default=0.01)
    s = add("products", help="ladder vs partial-product kernels on a free semigroup")
    tree_args(s)
    s = add("find", help="constant-rate feasibility over an alpha grid")
    s.add_argument("--poset", default="chain")
    s.add_argument("--params")
    s.add_argument("--alpha-grid", default="0.05:1:0.05")
    s.add_argument("--depth", type=int, default=None)
    s.add_argument("--epsilon", default="1e-9")
    s.add_argument("--subsets", default=None, metavar="M:m_cap")
    s = add("poisson-check", help="subset-poset necessary conditions on a size marginal")
    s.add_argument("--alpha", required=True)
    s.add_argument("--K", type=int, default=40)
    s.add_argument("--marginal", default="poisson", help="poisson, geometric or a JSON list file")
    s.add_argument("--expect-pass", action="store_true")
    s = add("verify", help="run an acceptance suite")
    s.add_argument("--suite", default="core")
    s = add("catalog", help="list or build catalog entries")
    s.add_argument("action", choices=["list", "build"])
    s.add_argument("name", nargs="?")
    s.add_argument("--params")
    s = add("simulate", help="run a simulation spec")
    s.add_argument("--run", required=True)
    return p


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Fraction):
        return format_number(v)
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if hasattr(v, "item"):  # numpy scalars
        return v.item()
    return v


def run(cfg: RunConfig, args) -> int:
    report, rows, ok = COMMANDS[cfg.subcommand](args, cfg)
    doc = {"command": cfg.subcommand, "config": cfg.to_dict(), "ok": bool(ok), "report": report}
    text = json.dumps(_jsonable(doc), sort_keys=True, indent=2)
    print(text)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{cfg.subcommand}.json").write_text(text + "\n")
        (out / f"{cfg.subcommand}.csv").write_text(rows_to_csv(rows, CSV_COLUMNS[cfg.subcommand]))
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg_args = {k: v for k, v in vars(args).items()
                if k not in ("command", "track", "seed", "out") and v is not None}
    cfg = RunConfig(args.command, cfg_args, args.track, args.seed, args.out or os.environ.get(OUT_ENV))
    try:
        return run(cfg, args)
    except (PosetRateError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
