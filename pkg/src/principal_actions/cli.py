"""Command-line front end.

Every subcommand writes one JSON report (sorted keys, no timestamps) holding the
resolved configuration, an anchor string naming the identity being checked, and
the result.  Tabular results are also written as CSV next to the JSON when
``--csv`` is given.  Exit status: 0 success, 1 usage error, 2 failed check.

Polynomial syntax (``--poly``)::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/")? unary)*     juxtaposition multiplies: 4u3
    unary := ("+" | "-") unary | power
    power := atom ("^" "-"? INT)?
    atom  := INT | u | u1 | u2 | u3 | "(" expr ")"

``u`` generates Z, ``u1 .. ud`` generate Z^d, and on the Heisenberg group
u3 = [u2, u1] is central.  Example: "4 - u1 - u1^-1 - u2 - u2^-1".
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from contextlib import nullcontext

import numpy as np

from . import __version__
from . import coding, combinatorics, entropy, harmonic
from .errors import ExpressionError, LemmaViolation, PrincipalActionsError, WindowTooSmall
from .expr import group_from_name, parse_poly
from .groups import HEISENBERG, Lattice, box
from .reports import VerificationReport
from .ring import Configuration, RingElement

THREADS_ENV = "PRINCIPAL_ACTIONS_THREADS"

ANCHORS = {
    "ring": "Z[G] convolution with involution g* and the l1 norm",
    "sample": "x in X_f  <=>  x f* is integer-valued",
    "encode": "code symbols z = x f*, bounded by min(0, 1 - |f-|) <= z <= max(0, |f+| - 1)",
    "decode": "x = (z w) mod 1 with w = (f*)^-1 in l1",
    "entropy": "h(lambda_f) = m(f), the logarithmic Mahler measure",
    "mahler": "m(f) = integral of log|f| over the torus",
    "green": "omega = sum_n p^n, the Green's function of the symmetric walk p",
    "homoclinic": "f b_J - (1 - u3)^3 = -p^(J+1) (1 - u3)^3 with b_J = 1/4 sum_{j<=J} p^j (1 - u3)^3",
    "multiplier": "a (1 - q - r) = (c - q)^3 with a = sum_k r^k (c - q)^3 (1 - q)^-(k+1)",
    "decay": "(1 - c)^k |phi_k|(c) decays like k^(-3/2)",
    "verify": "finite combinatorial and analytic lemmas, checked exhaustively or on random trials",
    "separate": "distinct points of X_f have distinct partition itineraries",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- output helpers


def _clean(obj):
    """Make obj JSON-safe: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if hasattr(obj, "to_json"):
        return _clean(obj.to_json())
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_clean(v) if not isinstance(v, str) else v for v in r])
    return buf.getvalue()


def _config(args: argparse.Namespace) -> dict:
    skip = {"func", "out", "csv"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _site_rows(conf: Configuration, name: str) -> tuple[list[str], list[list]]:
    rank = conf.group.rank
    header = [f"g{i + 1}" for i in range(rank)] + [name]
    vals = conf.site_values()
    rows = []
    for g, v in zip(conf.window, vals):
        v = int(v) if conf.kind == "integer" else (str(v) if vals.dtype == object else float(v))
        rows.append(list(g) + [v])
    return header, rows


# ---------------------------------------------------------------- argument helpers


def _poly(args, default_group=None) -> RingElement:
    group = getattr(args, "group", None) or default_group
    try:
        return parse_poly(args.poly, group)
    except ValueError as exc:
        if isinstance(exc, ExpressionError):
            raise
        raise UsageError(str(exc)) from exc


def _box(f: RingElement, radius: int, z_radius=None):
    if f.group.is_heisenberg:
        return box(f.group, radius, z_radius)
    return box(f.group, radius)


# ---------------------------------------------------------------- subcommands


def cmd_ring(args):
    f = _poly(args)
    out = {"element": f, "l1": f.l1(), "adjoint": f.adjoint(), "coefficient_sum": str(f.coefficient_sum())}
    if args.times:
        g = parse_poly(args.times, f.group)
        prod = f * g
        out.update({"times": g, "product": prod, "product_l1": prod.l1(), "submultiplicative": prod.l1() <= f.l1() * g.l1()})
    if args.power is not None:
        if args.power < 0:
            raise UsageError("--power must be nonnegative")
        out["power"] = f**args.power
    return out, None, True


def cmd_sample(args):
    f = _poly(args)
    window = _box(f, args.window, args.z_radius)
    pt = coding.sample_point(f, window, args.seed, exact=args.exact)
    header, rows = _site_rows(pt.x, "x")
    out = {"point": pt, "relation_residual": coding.relation_residual(f, pt.x)}
    return out, (header, rows), True


def cmd_encode(args):
    f = _poly(args)
    window = _box(f, args.window, args.z_radius)
    pt = coding.sample_point(f, window, args.seed, exact=args.exact)
    code = coding.encode_B(pt) if args.kind == "B" else coding.encode_C(pt)
    alpha = coding.alphabet(f, args.kind)
    used = sorted({int(v) for v in code.site_values()})
    ok = all(alpha.j_min <= v <= alpha.j_max for v in used)
    out = {"f": f, "alphabet": alpha, "symbols_used": used, "z": code, "x": pt.x, "within_alphabet": ok}
    return out, _site_rows(code, "symbol"), ok


def cmd_decode(args):
    f = _poly(args)
    if args.input:
        with open(args.input, encoding="utf-8") as fh:
            data = json.load(fh)
        rep = data.get("result", data)
        z = Configuration.from_json(rep["z"])
        x_ref = Configuration.from_json(rep["x"]) if "x" in rep else None
        if z.group != f.group:
            raise UsageError("the input code lives on a different group than --poly")
    else:
        window = _box(f, args.window, args.z_radius)
        vals = np.zeros(window.shape, dtype=np.int64)
        vals[window.index_of(f.group.identity)] = 1
        z, x_ref = Configuration(window, vals, "integer"), None
    winv = harmonic.neumann_inverse(f.to_float(), tol=args.tol, prune_tol=args.prune_tol)
    try:
        x = coding.decode(z, winv, f)
    except WindowTooSmall as exc:
        raise UsageError(f"the code window is narrower than the inverse support: {exc}") from exc
    out = {"f": f, "inverse_terms": winv.note.get("terms"), "inverse_l1_error": winv.l1_error, "x": x}
    if x_ref is not None:
        out["sup_error_vs_input"] = x.sup_distance(x_ref)
    return out, _site_rows(x, "x"), True


def cmd_entropy(args):
    f = _poly(args)
    if f.group.is_heisenberg or f.group.d > 2:
        raise UsageError("entropy estimation is available on Z and Z^2 only")
    est = entropy.entropy_estimate(f, n=args.n, eps=args.eps, samples=args.samples, seed=args.seed, method=args.method)
    if est.metadata.get("table"):
        rows = [[r["n"], est.eps, r["log_sep"] / r["n"]] for r in est.metadata["table"]]
    else:
        rows = [[est.n, est.eps, est.estimate]]
    return {"estimate": est}, (["n", "eps", "estimate"], rows), True


def cmd_mahler(args):
    f = _poly(args)
    out = {"f": f, "quadrature": entropy.mahler_measure(f, args.points)}
    if f.group.d == 1:
        out["jensen"] = entropy.jensen_mahler(f)
    out["oracle"] = entropy.entropy_oracle(f)
    return out, None, True


def _simple_walk(group) -> RingElement:
    if group.is_heisenberg:
        return harmonic.HEISENBERG_WALK
    terms = {}
    for i in range(group.d):
        for s in (1, -1):
            terms[tuple(s * (j == i) for j in range(group.d))] = 1 / (2 * group.d)
    return RingElement(group, terms, exact=False)


def cmd_green(args):
    group = group_from_name(args.group)
    p = parse_poly(args.poly, group).to_float() if args.poly else _simple_walk(group)
    window = box(group, args.window, args.z_radius) if group.is_heisenberg else box(group, args.window)
    w = harmonic.green_function(p, window, args.method, args.tol)
    radii = list(range(1, args.window + 1))
    masses = harmonic.ball_masses(w.value, radii)
    out = {"walk": p, "green": w, "ball_masses": masses}
    if group == Lattice(3) and not args.poly:
        oracle = harmonic.z3_green_oracle()
        out["oracle"] = oracle
        out["relative_error"] = abs(w.note["value_at_identity"] - oracle) / oracle
    rows = [[r, m] for r, m in zip(radii, masses)]
    return out, (["radius", "l1_mass"], rows), True


def cmd_homoclinic(args):
    if args.heisenberg:
        num, den = harmonic.p4_u3_coefficient()
        b = harmonic.heisenberg_homoclinic(args.J, args.window, args.z_radius)
        res = b.note["residuals"]
        keys = sorted(res, key=int)
        decreasing = all(res[a] > res[c] for a, c in zip(keys, keys[1:]))
        out = {
            "p4_u3_coefficient": {"hits": num, "words": den, "value": f"{num}/{den}"},
            "series": b,
            "residuals_decreasing": decreasing,
        }
        rows = [[k, res[k]] for k in keys]
        return out, (["J", "residual_l1"], rows), decreasing
    if not args.poly:
        raise UsageError("give --heisenberg or --poly for an expansive polynomial")
    f = _poly(args).to_float()
    w = harmonic.neumann_inverse(f, tol=args.tol)
    resid = harmonic.inverse_residual(w.value.adjoint(), f.adjoint())
    out = {"f": f, "inverse": w, "residual_l1": resid, "l1_norm": w.value.l1()}
    return out, None, True


def cmd_multiplier(args):
    if args.control:
        g = Lattice(1)
        q = RingElement.monomial(g, (1,), args.c, exact=False)
        r = RingElement.zero(g, exact=False)
        a = harmonic.cubic_multiplier(q, r, args.c, args.K, args.prune_tol)
        limit = 1e-9
    else:
        c = 1 / 64
        q = RingElement.monomial(HEISENBERG, (0, 0, 1), c, exact=False)
        r = harmonic.HEISENBERG_WALK**4 - q
        r = RingElement(HEISENBERG, {k: v for k, v in r.terms.items() if abs(v) > 1e-18}, exact=False)
        win = box(HEISENBERG, args.window, args.z_radius)
        a = harmonic.cubic_multiplier(q, r, c, args.K, args.prune_tol, window=win)
        limit = 2 * a.l1_error
    worst = max(a.note["residual_right"], a.note["residual_left"])
    ok = worst <= limit
    return {"multiplier": a, "residual_limit": limit, "max_residual": worst}, None, ok


def cmd_decay(args):
    diag = harmonic.decay_slope(args.c, args.k_min, args.k_max, args.points)
    ok = -1.7 <= diag.slope <= -1.3
    rows = [[k, v] for k, v in zip(diag.index, diag.norms)]
    return {"decay": diag, "slope_in_band": ok}, (["k", "scaled_phi_abs"], rows), ok


def _lemma_reports(name: str, seeds: int | None, seed: int) -> list[VerificationReport]:
    runs = {
        "sauer-shelah": lambda: combinatorics.sauer_shelah_trials(seeds or 500, seed=seed),
        "stirling": lambda: [combinatorics.stirling_bound_check(b) for b in (0.01, 0.05, 0.1, 0.2)],
        "sign-pattern": lambda: [
            combinatorics.sign_pattern_trials(d, k, seeds or 1000, seed) for d, k in ((1, 2), (2, 3), (3, 4), (3, 8))
        ],
        "vq-dimension": lambda: combinatorics.vq_dimension_trials(seeds or 100, seed),
        "gk-closed-form": lambda: combinatorics.gk_closed_form_check(seeds or 1000, seed),
        "gk-forms": lambda: combinatorics.gk_forms_agree(seeds or 100, seed),
        "interlacing": lambda: combinatorics.interlacing_check(),
        "binomial-weight": lambda: [combinatorics.combinatorial_bound_check(c, seeds or 10000, seed) for c in (0.1, 0.5, 0.9)],
    }
    names = list(runs) if name == "all" else [name]
    out = []
    for n in names:
        try:
            res = runs[n]()
            res = res if isinstance(res, list) else [res]
            out.append(VerificationReport(n, all(r["ok"] for r in res), {"runs": res}, {"seeds": seeds, "seed": seed}))
        except LemmaViolation as exc:
            out.append(VerificationReport(n, False, {"violation": str(exc)}, {"seeds": seeds, "seed": seed}))
    return out


LEMMAS = ["sauer-shelah", "stirling", "sign-pattern", "vq-dimension", "gk-closed-form", "gk-forms", "interlacing", "binomial-weight", "all"]


def cmd_verify(args):
    reports = _lemma_reports(args.lemma, args.seeds, args.seed)
    ok = all(r.passed for r in reports)
    rows = [[r.name, r.passed] for r in reports]
    return {"reports": reports, "passed": ok}, (["lemma", "passed"], rows), ok


def cmd_separate(args):
    f = _poly(args)
    rep = coding.itinerary_separation(f, args.pairs, args.horizon, args.eps_match, args.kind, args.seed)
    return {"report": rep}, None, rep.passed


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(
        prog="principal-actions",
        description="Group-ring dynamics of principal algebraic actions.",
        epilog=__doc__.split("\n\n", 2)[2],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, poly=True, poly_required=True, group=True, seed=False):
        if poly:
            p.add_argument("--poly", required=poly_required, help="polynomial expression, e.g. '3 - u - u^-1'")
        if group:
            p.add_argument("--group", default=None, help="z, z2, z3 or heisenberg (default: inferred)")
        if seed:
            p.add_argument("--seed", type=int, required=True)
        p.add_argument("--out", default=None, help="JSON report path (default stdout)")
        p.add_argument("--csv", default=None, help="CSV path for tabular output")
        return p

    p = common(sub.add_parser("ring", help="arithmetic on a group-ring element"))
    p.add_argument("--times", default=None, help="second factor")
    p.add_argument("--power", type=int, default=None)
    p.set_defaults(func=cmd_ring)

    for name, fn, helptext in (("sample", cmd_sample, "sample a window point of X_f"), ("encode", cmd_encode, "sample and encode a point")):
        p = common(sub.add_parser(name, help=helptext), seed=True)
        p.add_argument("--window", type=int, default=10, help="box radius")
        p.add_argument("--z-radius", type=int, default=None, help="central radius on the Heisenberg group")
        p.add_argument("--exact", action="store_true", help="rational arithmetic")
        if name == "encode":
            p.add_argument("--kind", choices=["B", "C"], default="B")
        p.set_defaults(func=fn)

    p = common(sub.add_parser("decode", help="reconstruct x from its code with the l1 inverse"))
    p.add_argument("--input", default=None, help="JSON report from 'encode'; default is z = delta at the identity")
    p.add_argument("--window", type=int, default=40)
    p.add_argument("--z-radius", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-9, help="Neumann tail bound")
    p.add_argument("--prune-tol", type=float, default=1e-10, help="drop inverse coefficients below this")
    p.set_defaults(func=cmd_decode)

    p = common(sub.add_parser("entropy", help="estimate topological entropy on Z or Z^2"), seed=True)
    p.add_argument("--n", type=int, default=None, help="window length (Z)")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--method", choices=["auto", "slope", "ratio", "ball", "sep2"], default="auto")
    p.set_defaults(func=cmd_entropy)

    p = common(sub.add_parser("mahler", help="logarithmic Mahler measure"))
    p.add_argument("--points", type=int, default=None, help="quadrature points per axis")
    p.set_defaults(func=cmd_mahler)

    p = common(sub.add_parser("green", help="Dirichlet Green's function of a symmetric walk"), poly_required=False, group=False)
    p.add_argument("--group", default="z3")
    p.add_argument("--window", type=int, default=16)
    p.add_argument("--z-radius", type=int, default=None)
    p.add_argument("--method", choices=["relaxation", "series"], default="relaxation")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_green)

    p = common(sub.add_parser("homoclinic", help="summable homoclinic points"), poly_required=False)
    p.add_argument("--heisenberg", action="store_true", help="the well-balanced Heisenberg example")
    p.add_argument("--J", type=int, default=64)
    p.add_argument("--window", type=int, default=24)
    p.add_argument("--z-radius", type=int, default=576)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_homoclinic)

    p = common(sub.add_parser("multiplier", help="cubic multiplier series"), poly=False, group=False)
    p.add_argument("--K", type=int, default=12)
    p.add_argument("--window", type=int, default=24)
    p.add_argument("--z-radius", type=int, default=160)
    p.add_argument("--prune-tol", type=float, default=1e-12)
    p.add_argument("--control", action="store_true", help="r = 0 scalar geometric control on Z")
    p.add_argument("--c", type=float, default=0.3, help="c for the control")
    p.set_defaults(func=cmd_multiplier)

    p = common(sub.add_parser("decay", help="decay law of |phi_k|"), poly=False, group=False)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--k-min", type=int, default=100)
    p.add_argument("--k-max", type=int, default=1000)
    p.add_argument("--points", type=int, default=20)
    p.set_defaults(func=cmd_decay)

    p = common(sub.add_parser("verify", help="lemma suite"), poly=False, group=False)
    p.add_argument("--lemma", choices=LEMMAS, default="all")
    p.add_argument("--seeds", type=int, default=None, help="number of random trials")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = common(sub.add_parser("separate", help="itinerary separation test"), seed=True)
    p.add_argument("--kind", choices=["B", "C"], default="B")
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=40)
    p.add_argument("--eps-match", type=float, default=1e-3)
    p.set_defaults(func=cmd_separate)
    return ap


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(raw)))


def _write(path: str | None, text: str, stdout) -> None:
    if path is None:
        stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        with _thread_limit():
            result, table, ok = args.func(args)
    except ExpressionError as exc:
        stderr.write(f"usage error: {exc.diagnostic()}\n")
        return 1
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return 1
    except LemmaViolation as exc:
        stderr.write(f"check failed: {exc}\n")
        return 2
    except (PrincipalActionsError, ValueError) as exc:
        stderr.write(f"error: {exc}\n")
        return 1
    report = {
        "command": args.command,
        "config": _config(args),
        "anchor": ANCHORS[args.command],
        "passed": bool(ok),
        "result": result,
        "version": __version__,
    }
    _write(args.out, dumps(report), stdout)
    if table is not None and args.csv:
        _write(args.csv, _csv_text(*table), stdout)
    return 0 if ok else 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
