"""Symbolic coding of principal actions on finite windows.

A point of X_f is represented on a window by its [0,1) coordinates x; the
integer configuration z = x f* (evaluated where the stencil fits) is its code.
Sampling fills the window in lexicographic order and solves the kernel relation
for the lexicographically largest support element, which must have a unit
coefficient.  This is valid on both supported groups because right
multiplication by a fixed element preserves the relevant lexicographic order.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidPoint, UnsupportedStencil
from .groups import GroupDescriptor, Window, interior, inv_exp, mul_exp, rect
from .reports import VerificationReport
from .ring import Configuration, RingElement, TruncatedSeries, apply_rho, split_pos_neg

SNAP_TOL = 1e-9


@dataclass(frozen=True)
class Alphabet:
    j_min: int
    j_max: int
    kind: str

    @property
    def symbols(self) -> list[int]:
        return list(range(self.j_min, self.j_max + 1))

    def __len__(self) -> int:
        return self.j_max - self.j_min + 1

    def to_json(self) -> dict:
        return {"kind": self.kind, "j_min": self.j_min, "j_max": self.j_max, "size": len(self)}


def _int_norm(g: RingElement) -> int:
    v = g.l1()
    if abs(v - round(v)) > 1e-12:
        raise ValueError("alphabets need integer coefficients")
    return int(round(v))


def symbol_bounds(f: RingElement) -> tuple[int, int]:
    """(c-, c+) = (min(0, 1 - ||f-||_1), max(0, ||f+||_1 - 1)): every code symbol lies in this range."""
    fp, fm = split_pos_neg(f)
    return min(0, 1 - _int_norm(fm)), max(0, _int_norm(fp) - 1)


def alphabet(f: RingElement, kind: str = "B") -> Alphabet:
    if not f.terms:
        raise ValueError("f must be nonzero")
    if kind == "C":
        return Alphabet(0, _int_norm(f) - 1, "C")
    if kind != "B":
        raise ValueError("kind must be 'B' or 'C'")
    fp, fm = split_pos_neg(f)
    plus, minus = _int_norm(fp), _int_norm(fm)
    if plus and minus:
        return Alphabet(1 - minus, plus - 1, "B_full")
    if plus:
        return Alphabet(0, plus - 1, "B_plus_only")
    return Alphabet(1 - minus, 0, "B_minus_only")


@dataclass
class CodedPoint:
    x: Configuration
    z: Configuration
    f: RingElement

    def to_json(self) -> dict:
        return {"f": self.f.to_json(), "x": self.x.to_json(), "z": self.z.to_json()}


# ---------------------------------------------------------------- sampling


@dataclass(frozen=True)
class FillPlan:
    """Lexicographic fill order for a window: which sites are free and how the rest are solved."""

    solve_for: tuple  # support element e with unit coefficient
    sign: int  # its coefficient, +-1
    others: tuple  # ((s, coeff), ...) for s != e
    order: tuple  # ((site_index, anchor or None), ...) in lexicographic order


def fill_plan(f: RingElement, window: Window) -> FillPlan:
    if not window.is_box:
        raise ValueError("sampling needs a box window")
    group = f.group
    e = max(f.terms)
    coeff = f.terms[e]
    if coeff not in (1, -1):
        raise UnsupportedStencil(
            f"the lexicographically largest support element {e} has coefficient {coeff}; a unit (+-1) is needed"
        )
    inner = interior(window, list(f.terms) + [group.identity])
    e_inv = inv_exp(group, e)
    order = []
    for site in window:
        anchor = mul_exp(group, site, e_inv)
        order.append((window.index_of(site), anchor if anchor in inner else None))
    others = tuple((s, c) for s, c in sorted(f.terms.items()) if s != e)
    return FillPlan(e, int(coeff), others, tuple(order))


def sample_values(f: RingElement, window: Window, count: int, rng: np.random.Generator, plan: FillPlan | None = None) -> np.ndarray:
    """count independent window points of X_f, shape (count, *window.shape), float64 in [0,1)."""
    plan = plan or fill_plan(f, window)
    group = f.group
    vals = np.zeros((count,) + window.shape)
    others = [(s, float(c)) for s, c in plan.others]
    for idx, anchor in plan.order:
        if anchor is None:
            vals[(slice(None),) + idx] = rng.random(count)
            continue
        acc = np.zeros(count)
        for s, c in others:
            acc += c * vals[(slice(None),) + window.index_of(mul_exp(group, anchor, s))]
        # sign * x_e + acc = integer  =>  x_e = -sign * acc mod 1
        v = np.mod(-plan.sign * acc, 1.0)
        v[v >= 1.0] = 0.0
        vals[(slice(None),) + idx] = v
    return vals


def _sample_exact(f: RingElement, window: Window, rnd: random.Random, denominator: int) -> np.ndarray:
    plan = fill_plan(f, window)
    group = f.group
    vals = np.empty(window.shape, dtype=object)
    vals[...] = Fraction(0)
    for idx, anchor in plan.order:
        if anchor is None:
            vals[idx] = Fraction(rnd.randrange(denominator), denominator)
            continue
        acc = sum(Fraction(c) * vals[window.index_of(mul_exp(group, anchor, s))] for s, c in plan.others)
        v = -plan.sign * acc
        vals[idx] = v - math.floor(v)
    return vals


def sample_point(f: RingElement, window: Window, seed: int = 0, exact: bool = False, denominator: int = 2**16) -> CodedPoint:
    """One window point of X_f; exact=True uses rationals with the given free-value denominator."""
    if exact:
        vals = _sample_exact(f, window, random.Random(seed), denominator)
    else:
        vals = sample_values(f, window, 1, np.random.default_rng(seed))[0]
    x = Configuration(window, vals, "torus")
    return CodedPoint(x, encode_values(f, x), f)


def relation_residual(f: RingElement, x: Configuration) -> float:
    """Largest distance of (x f*) from the integers on the interior."""
    z = apply_rho(f, x)
    v = np.asarray(z.site_values(), dtype=float)
    return float(np.abs(v - np.round(v)).max()) if v.size else 0.0


# ---------------------------------------------------------------- encoding


def encode_values(f: RingElement, x: Configuration) -> Configuration:
    z = apply_rho(f, x)
    raw = z.values
    if raw.dtype == object:
        if any(Fraction(v).denominator != 1 for v in z.site_values()):
            raise InvalidPoint("x f* is not integer-valued")
        ints = raw.astype(np.int64)
    else:
        ints = np.round(raw)
        gap = np.abs(raw - ints)[z.window.full_mask()]
        if gap.size and gap.max() > SNAP_TOL:
            raise InvalidPoint(f"x f* is {gap.max():.3g} away from an integer")
        ints = ints.astype(np.int64)
    return Configuration(z.window, ints, "integer")


def encode_B(point: CodedPoint) -> Configuration:
    """Symbol (x f*)_gamma at each interior site gamma."""
    return encode_values(point.f, point.x)


def encode_C(point: CodedPoint) -> Configuration:
    """Symbol floor(x_gamma * ||f||_1) at each window site."""
    n = _int_norm(point.f)
    vals = np.asarray(point.x.values, dtype=float)
    sym = np.minimum(np.floor(vals * n), n - 1).astype(np.int64)
    sym[~point.x.window.full_mask()] = 0
    return Configuration(point.x.window, sym, "integer")


def decode(z: Configuration, winv: TruncatedSeries | None, f: RingElement) -> Configuration:
    """x = (z w) mod 1 where w = (f*)^-1 is the Neumann-series inverse.

    The value is computed with apply_rho(w*, z) = z w on the sites whose full
    w-stencil lies in z's window.
    """
    if winv is None:
        raise ValueError("decode needs the inverse series from neumann_inverse")
    if winv.value.group != f.group:
        raise ValueError("inverse and polynomial live on different groups")
    vals = Configuration(z.window, np.asarray(z.values, dtype=float), "real")
    return apply_rho(winv.value.adjoint(), vals, reduce_mod1=True)


# ---------------------------------------------------------------- itineraries


def horizon_window(group: GroupDescriptor, horizon: int) -> Window:
    if group.is_heisenberg:
        raise ValueError("itineraries are only set up for lattices")
    return rect(group, (0,) * group.d, (horizon - 1,) * group.d)


def sampling_window(f: RingElement, horizon: Window) -> Window:
    """Smallest box W with horizon * supp(f) inside W."""
    keys = list(f.terms) + [f.group.identity]
    lo = tuple(l + min(k[i] for k in keys) for i, l in enumerate(horizon.lo))
    hi = tuple(h + max(k[i] for k in keys) for i, h in enumerate(horizon.hi))
    return rect(f.group, lo, hi)


def _itineraries(f: RingElement, vals: np.ndarray, W: Window, horizon: Window, kind: str) -> np.ndarray:
    """Symbol arrays over the horizon for a stack of window points."""
    sl = tuple(slice(l - L, h - L + 1) for l, h, L in zip(horizon.lo, horizon.hi, W.lo))
    if kind == "C":
        n = _int_norm(f)
        return np.minimum(np.floor(vals[(slice(None),) + sl] * n), n - 1).astype(np.int64)
    acc = np.zeros((vals.shape[0],) + horizon.shape)
    for s, c in f.terms.items():
        sh = tuple(slice(l - L + o, h - L + o + 1) for l, h, L, o in zip(horizon.lo, horizon.hi, W.lo, s))
        acc += float(c) * vals[(slice(None),) + sh]
    sym = np.round(acc)
    if np.abs(acc - sym).max() > SNAP_TOL:
        raise InvalidPoint("sampled point violates the kernel relation")
    return sym.astype(np.int64)


def itinerary_separation(
    f: RingElement, n_pairs: int = 1000, horizon: int = 40, eps_match: float = 1e-3, kind: str = "B", seed: int = 0
) -> VerificationReport:
    """Fraction of sampled distinct pairs whose partition itineraries over the horizon coincide.

    Pairs are drawn independently and kept only if their torus sup distance on the
    horizon is at least eps_match.  An identical pair is checked separately as a control.
    This is a finite-horizon proxy for the generator property, nothing more.
    """
    H = horizon_window(f.group, horizon)
    W = sampling_window(f, H)
    rng = np.random.default_rng(seed)
    plan = fill_plan(f, W)
    sl = tuple(slice(l - L, h - L + 1) for l, h, L in zip(H.lo, H.hi, W.lo))
    kept_a, kept_b, drawn = [], [], 0
    while sum(len(a) for a in kept_a) < n_pairs:
        need = n_pairs - sum(len(a) for a in kept_a)
        a = sample_values(f, W, need, rng, plan)
        b = sample_values(f, W, need, rng, plan)
        drawn += need
        d = np.abs(a[(slice(None),) + sl] - b[(slice(None),) + sl])
        d = np.minimum(d, 1 - d).reshape(need, -1).max(axis=1)
        keep = d >= eps_match
        kept_a.append(a[keep])
        kept_b.append(b[keep])
        if drawn > 100 * n_pairs:
            break
    a = np.concatenate(kept_a)[:n_pairs]
    b = np.concatenate(kept_b)[:n_pairs]
    ia = _itineraries(f, a, W, H, kind).reshape(len(a), -1)
    ib = _itineraries(f, b, W, H, kind).reshape(len(b), -1)
    same = np.all(ia == ib, axis=1)
    control = _itineraries(f, a[:1], W, H, kind)
    control_same = bool(np.array_equal(control, _itineraries(f, a[:1].copy(), W, H, kind)))
    coincide = int(same.sum())
    return VerificationReport(
        "itinerary_separation",
        coincide == 0 and control_same,
        {
            "pairs": int(len(a)),
            "coinciding": coincide,
            "fraction": coincide / max(len(a), 1),
            "control_identical_pair_coincides": control_same,
            "symbols_seen": sorted(int(v) for v in np.unique(np.concatenate([ia.ravel(), ib.ravel()]))),
        },
        {"horizon": horizon, "eps_match": eps_match, "kind": kind, "seed": seed, "group": f.group.to_json()},
    )

