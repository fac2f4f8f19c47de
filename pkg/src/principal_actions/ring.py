"""Sparse group-ring arithmetic over Z^d and H, and the two shift actions on windows.

Coefficients are either exact (``Fraction``) or float; mixing promotes to float.
``GridElement`` is a dense float counterpart used where supports grow into the
millions (random-walk powers on H and Z^3).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping

import numpy as np

from .errors import GroupMismatch, WindowTooSmall
from .groups import (
    Exp,
    GroupDescriptor,
    GroupElement,
    Window,
    interior,
    inv_exp,
    rect,
    translate_values,
)


def _as_exp(g) -> Exp:
    if isinstance(g, GroupElement):
        return g.exponents
    return tuple(int(v) for v in g)


def _coerce(c, exact: bool):
    if exact:
        if isinstance(c, float):
            raise TypeError("float coefficient in an exact element")
        return Fraction(c)
    return float(c)


def _is_exact_value(c) -> bool:
    return isinstance(c, (int, Rational)) and not isinstance(c, bool)


class RingElement:
    """Finitely supported map from the group to Q (exact) or R (float)."""

    __slots__ = ("group", "terms", "exact")

    def __init__(self, group: GroupDescriptor, terms: Mapping | Iterable = (), exact: bool | None = None):
        items = list(terms.items()) if isinstance(terms, Mapping) else list(terms)
        if exact is None:
            exact = all(_is_exact_value(c) for _, c in items)
        self.group = group
        self.exact = exact
        acc: dict[Exp, object] = {}
        zero = Fraction(0) if exact else 0.0
        for g, c in items:
            g = _as_exp(g)
            if len(g) != group.rank:
                raise ValueError(f"exponent {g} does not fit {group}")
            acc[g] = acc.get(g, zero) + _coerce(c, exact)
        self.terms = {g: c for g, c in acc.items() if c != 0}

    # -- construction
    @classmethod
    def zero(cls, group: GroupDescriptor, exact: bool = True) -> "RingElement":
        return cls(group, {}, exact)

    @classmethod
    def one(cls, group: GroupDescriptor, exact: bool = True) -> "RingElement":
        return cls(group, {group.identity: 1}, exact)

    @classmethod
    def monomial(cls, group: GroupDescriptor, g, coeff=1, exact: bool | None = None) -> "RingElement":
        return cls(group, {_as_exp(g): coeff}, exact)

    @classmethod
    def _raw(cls, group: GroupDescriptor, terms: dict, exact: bool) -> "RingElement":
        obj = cls.__new__(cls)
        obj.group, obj.terms, obj.exact = group, terms, exact
        return obj

    # -- inspection
    def coefficient(self, g):
        return self.terms.get(_as_exp(g), Fraction(0) if self.exact else 0.0)

    def __getitem__(self, g):
        return self.coefficient(g)

    def support(self) -> list[Exp]:
        return sorted(self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def l1(self) -> float:
        return float(sum(abs(c) for c in self.terms.values()))

    def l1_exact(self):
        """l1 norm as a Fraction for exact elements (a float otherwise)."""
        zero = Fraction(0) if self.exact else 0.0
        return sum((abs(c) for c in self.terms.values()), zero)

    def linf(self) -> float:
        return float(max((abs(c) for c in self.terms.values()), default=0))

    def coefficient_sum(self):
        return sum(self.terms.values(), Fraction(0) if self.exact else 0.0)

    def to_float(self) -> "RingElement":
        return RingElement._raw(self.group, {g: float(c) for g, c in self.terms.items()}, False)

    def to_exact(self) -> "RingElement":
        return RingElement(self.group, {g: Fraction(c) for g, c in self.terms.items()}, True)

    # -- algebra
    def _check(self, other: "RingElement"):
        if other.group != self.group:
            raise GroupMismatch(f"{self.group} vs {other.group}")

    def _lift(self, other) -> "RingElement":
        if isinstance(other, RingElement):
            self._check(other)
            return other
        return RingElement(self.group, {self.group.identity: other}, _is_exact_value(other) and self.exact)

    def __add__(self, other) -> "RingElement":
        other = self._lift(other)
        exact = self.exact and other.exact
        out = dict(self.terms) if exact == self.exact else {g: float(c) for g, c in self.terms.items()}
        for g, c in other.terms.items():
            out[g] = out.get(g, 0) + (c if exact else float(c))
        return RingElement._raw(self.group, {g: c for g, c in out.items() if c != 0}, exact)

    __radd__ = __add__

    def __neg__(self) -> "RingElement":
        return RingElement._raw(self.group, {g: -c for g, c in self.terms.items()}, self.exact)

    def __sub__(self, other) -> "RingElement":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "RingElement":
        return self._lift(other) - self

    def scale(self, s) -> "RingElement":
        exact = self.exact and _is_exact_value(s)
        s = Fraction(s) if exact else float(s)
        return RingElement._raw(
            self.group, {g: c * s for g, c in self.terms.items() if c * s != 0}, exact
        )

    def __mul__(self, other) -> "RingElement":
        if isinstance(other, RingElement):
            return convolve(self, other)
        return self.scale(other)

    def __rmul__(self, other) -> "RingElement":
        return self.scale(other)

    def __pow__(self, k: int) -> "RingElement":
        if k < 0:
            raise ValueError("negative powers are not finitely supported in general")
        out = RingElement.one(self.group, self.exact)
        base = self
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, RingElement):
            return NotImplemented
        return self.group == other.group and self.terms == other.terms

    def __hash__(self):
        return hash((self.group, frozenset(self.terms.items())))

    def allclose(self, other: "RingElement", atol: float = 1e-12) -> bool:
        return (self - other).linf() <= atol

    def adjoint(self) -> "RingElement":
        return adjoint(self)

    def __repr__(self) -> str:
        if not self.terms:
            return f"RingElement({self.group}, 0)"
        parts = [f"{c}*{list(g)}" for g, c in sorted(self.terms.items())]
        return f"RingElement({self.group}, {' + '.join(parts)})"

    # -- serialisation
    def to_json(self) -> dict:
        def enc(c):
            if self.exact:
                c = Fraction(c)
                return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"
            return float(c)

        return {
            "group": self.group.to_json(),
            "terms": [{"g": list(g), "c": enc(c)} for g, c in sorted(self.terms.items())],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RingElement":
        group = GroupDescriptor.from_json(data["group"])
        terms = []
        exact = True
        for t in data["terms"]:
            c = t["c"]
            if isinstance(c, str):
                c = Fraction(c)
            elif isinstance(c, float):
                exact = False
            terms.append((tuple(t["g"]), c))
        if not exact:
            terms = [(g, float(c)) for g, c in terms]
        return cls(group, terms, exact)


def convolve(g: RingElement, h: RingElement) -> RingElement:
    """Group-ring product: sum over pairs of g_a h_b at the group product a*b."""
    g._check(h)
    group = g.group
    exact = g.exact and h.exact
    out: dict[Exp, object] = {}
    hs = list(h.terms.items())
    if not exact:
        hs = [(b, float(c)) for b, c in hs]
    heis = group.is_heisenberg
    for a, ca in g.terms.items():
        if not exact:
            ca = float(ca)
        for b, cb in hs:
            if heis:
                k = (a[0] + b[0], a[1] + b[1], a[2] + b[2] + a[0] * b[1])
            else:
                k = tuple(s + t for s, t in zip(a, b))
            out[k] = out.get(k, 0) + ca * cb
    return RingElement._raw(group, {k: c for k, c in out.items() if c != 0}, exact)


def adjoint(g: RingElement) -> RingElement:
    return RingElement._raw(g.group, {inv_exp(g.group, a): c for a, c in g.terms.items()}, g.exact)


def split_pos_neg(g: RingElement) -> tuple[RingElement, RingElement]:
    pos = {a: c for a, c in g.terms.items() if c > 0}
    neg = {a: c for a, c in g.terms.items() if c < 0}
    return RingElement._raw(g.group, pos, g.exact), RingElement._raw(g.group, neg, g.exact)


def norms(g: RingElement) -> tuple[float, float]:
    return g.l1(), g.linf()


def commutes(g: RingElement, h: RingElement) -> bool:
    """Exact test of gh == hg (float elements compared to 1e-12 in sup norm)."""
    gh, hg = g * h, h * g
    if gh.exact:
        return gh == hg
    return gh.allclose(hg, 1e-12)


@dataclass
class TruncatedSeries:
    """A finite element standing in for an infinite series, with an l1 error budget."""

    value: RingElement
    l1_error: float = 0.0
    note: dict = field(default_factory=dict)
    certified: bool = True

    def __post_init__(self):
        if self.l1_error < 0:
            raise ValueError("l1_error must be nonnegative")

    def prune(self, tol: float) -> "TruncatedSeries":
        pruned = prune(self.value, tol)
        return TruncatedSeries(pruned.value, self.l1_error + pruned.l1_error, dict(self.note), self.certified)

    def to_json(self) -> dict:
        return {
            "value": self.value.to_json(),
            "l1_error": self.l1_error if math.isfinite(self.l1_error) else None,
            "certified": self.certified,
            "note": self.note,
        }


def prune(g: RingElement, tol: float) -> TruncatedSeries:
    """Drop coefficients with |c| < tol; the dropped l1 mass becomes the error budget."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    kept, dropped = {}, 0.0
    for a, c in g.terms.items():
        if abs(c) < tol:
            dropped += abs(float(c))
        else:
            kept[a] = c
    return TruncatedSeries(RingElement._raw(g.group, kept, g.exact), dropped, {"prune_tol": tol})


# ---------------------------------------------------------------- configurations


@dataclass(eq=False)
class Configuration:
    """Values on a window.  ``values`` is indexed over the window's bounding box;
    entries outside the window mask are ignored (kept at zero).

    kind is "torus" (values in [0,1)), "integer", or "real".
    """

    window: Window
    values: np.ndarray
    kind: str = "real"

    def __post_init__(self):
        if self.values.shape != self.window.shape:
            raise ValueError(f"values shape {self.values.shape} != window shape {self.window.shape}")
        if self.kind not in ("torus", "integer", "real"):
            raise ValueError(f"unknown configuration kind {self.kind!r}")

    @property
    def group(self) -> GroupDescriptor:
        return self.window.group

    def __getitem__(self, g):
        return self.values[self.window.index_of(_as_exp(g))]

    def site_values(self) -> np.ndarray:
        """Values at window elements, in canonical (lexicographic) order."""
        return self.values[self.window.full_mask()]

    def mod1(self) -> "Configuration":
        vals = self.values
        if vals.dtype == object:
            out = np.vectorize(lambda v: v - math.floor(v), otypes=[object])(vals)
        else:
            out = np.mod(vals, 1.0)
            out[out >= 1.0] = 0.0
        return Configuration(self.window, self._masked(out), "torus")

    def _masked(self, arr: np.ndarray) -> np.ndarray:
        if self.window.mask is not None:
            arr = arr.copy()
            arr[~self.window.mask] = 0
        return arr

    def restrict(self, window: Window) -> "Configuration":
        """Restrict to a sub-window with the same bounding box or a smaller box inside it."""
        if window.lo == self.window.lo and window.hi == self.window.hi:
            vals = self.values.copy()
            if window.mask is not None:
                vals[~window.mask] = 0
            return Configuration(window, vals, self.kind)
        sl = tuple(slice(l - L, h - L + 1) for l, h, L in zip(window.lo, window.hi, self.window.lo))
        vals = self.values[sl].copy()
        if window.mask is not None:
            vals[~window.mask] = 0
        return Configuration(window, vals, self.kind)

    def sup_distance(self, other: "Configuration", torus: bool = True) -> float:
        a = np.asarray(self.site_values(), dtype=float)
        b = np.asarray(other.restrict(self.window).site_values(), dtype=float)
        d = np.abs(a - b)
        if torus:
            d = np.mod(d, 1.0)
            d = np.minimum(d, 1.0 - d)
        return float(d.max()) if d.size else 0.0

    def to_json(self) -> dict:
        vals = self.site_values()
        if self.kind == "integer":
            out = [int(v) for v in vals]
        elif vals.dtype == object:
            out = [str(Fraction(v)) for v in vals]
        else:
            out = [float(v) for v in vals]
        return {"window": self.window.to_json(), "values": out, "kind": self.kind}

    @classmethod
    def from_json(cls, data: dict) -> "Configuration":
        w = data["window"]
        group = GroupDescriptor.from_json(w["group"])
        window = Window(group, tuple(w["lo"]), tuple(w["hi"]))
        if "elements" in w:
            mask = np.zeros(window.shape, dtype=bool)
            for g in w["elements"]:
                mask[window.index_of(g)] = True
            window = window.with_mask(mask)
        kind = data.get("kind", "real")
        raw = data["values"]
        if kind == "integer":
            flat, dtype = [int(v) for v in raw], np.int64
        elif raw and isinstance(raw[0], str):
            flat, dtype = [Fraction(v) for v in raw], object
        else:
            flat, dtype = [float(v) for v in raw], float
        vals = np.zeros(window.shape, dtype=dtype)
        if dtype == object:
            vals[...] = Fraction(0)
        vals[window.full_mask()] = np.array(flat, dtype=dtype) if flat else vals[window.full_mask()]
        return cls(window, vals, kind)


def apply_rho(h: RingElement, v: Configuration, reduce_mod1: bool = False) -> Configuration:
    """Right action: output at delta is sum_gamma h_gamma * v[delta * gamma].

    Evaluated only on the sites delta with delta * supp(h) inside the window.
    """
    if h.group != v.group:
        raise GroupMismatch("element and configuration live on different groups")
    out_window = interior(v.window, list(h.terms) + [v.group.identity])
    if out_window.is_empty():
        raise WindowTooSmall("apply_rho: no window site has its full stencil inside the window")
    return _act(h, v, out_window, "right", reduce_mod1)


def apply_lambda(h: RingElement, v: Configuration, reduce_mod1: bool = False) -> Configuration:
    """Left action: output at delta is sum_gamma h_gamma * v[gamma^{-1} * delta]."""
    if h.group != v.group:
        raise GroupMismatch("element and configuration live on different groups")
    out_window = interior(v.window, list(h.terms) + [v.group.identity], side="left")
    if out_window.is_empty():
        raise WindowTooSmall("apply_lambda: no window site has its full stencil inside the window")
    return _act(h, v, out_window, "left", reduce_mod1)


def _work_dtype(h: RingElement, vals: np.ndarray):
    if vals.dtype == object:
        return object
    if vals.dtype.kind == "f" or not h.exact:
        return float
    if all(Fraction(c).denominator == 1 for c in h.terms.values()):
        return np.int64
    return object


def _act(h: RingElement, v: Configuration, out_window: Window, side: str, reduce_mod1: bool) -> Configuration:
    group = v.group
    dtype = _work_dtype(h, v.values)
    vals = v.values.astype(dtype)
    acc = np.zeros(vals.shape, dtype=dtype)
    if dtype is object:
        acc[...] = 0
    for g, c in sorted(h.terms.items()):
        t = g if side == "right" else inv_exp(group, g)
        shifted = translate_values(group, v.window.lo, vals, t, side, 0)
        if dtype is float:
            c = float(c)
        elif dtype is np.int64:
            c = int(c)
        acc = acc + c * shifted
    acc[~out_window.full_mask()] = 0
    kind = "integer" if (v.kind == "integer" and dtype is np.int64) else "real"
    out = Configuration(out_window, acc, kind)
    return out.mod1() if reduce_mod1 else out


# ---------------------------------------------------------------- dense elements


class GridElement:
    """Dense float element supported in the box lo..hi (inclusive)."""

    __slots__ = ("group", "lo", "arr")

    def __init__(self, group: GroupDescriptor, lo: Exp, arr: np.ndarray):
        self.group = group
        self.lo = tuple(int(v) for v in lo)
        self.arr = arr

    @property
    def hi(self) -> Exp:
        return tuple(l + s - 1 for l, s in zip(self.lo, self.arr.shape))

    @classmethod
    def from_ring(cls, h: RingElement) -> "GridElement":
        if not h.terms:
            return cls(h.group, h.group.identity, np.zeros((1,) * h.group.rank))
        keys = list(h.terms)
        lo = tuple(min(k[i] for k in keys) for i in range(h.group.rank))
        hi = tuple(max(k[i] for k in keys) for i in range(h.group.rank))
        arr = np.zeros(tuple(b - a + 1 for a, b in zip(lo, hi)))
        for k, c in h.terms.items():
            arr[tuple(a - l for a, l in zip(k, lo))] = float(c)
        return cls(h.group, lo, arr)

    def to_ring(self, tol: float = 0.0) -> RingElement:
        idx = np.argwhere(np.abs(self.arr) > tol) if tol > 0 else np.argwhere(self.arr != 0)
        terms = {tuple(int(i) + l for i, l in zip(ix, self.lo)): float(self.arr[tuple(ix)]) for ix in idx}
        return RingElement._raw(self.group, terms, False)

    def copy(self) -> "GridElement":
        return GridElement(self.group, self.lo, self.arr.copy())

    def l1(self) -> float:
        return float(np.abs(self.arr).sum())

    def coefficient(self, g) -> float:
        idx = tuple(a - l for a, l in zip(_as_exp(g), self.lo))
        if any(i < 0 or i >= s for i, s in zip(idx, self.arr.shape)):
            return 0.0
        return float(self.arr[idx])

    def embed(self, lo: Exp, hi: Exp) -> "GridElement":
        """Copy into the box lo..hi, which must contain the current box."""
        shape = tuple(b - a + 1 for a, b in zip(lo, hi))
        out = np.zeros(shape)
        sl = tuple(slice(a - L, a - L + s) for a, L, s in zip(self.lo, lo, self.arr.shape))
        out[sl] = self.arr
        return GridElement(self.group, lo, out)

    def crop(self, lo: Exp, hi: Exp) -> tuple["GridElement", float]:
        """Restrict to the box lo..hi, returning the dropped l1 mass."""
        total = self.l1()
        nlo = tuple(max(a, b) for a, b in zip(self.lo, lo))
        nhi = tuple(min(a, b) for a, b in zip(self.hi, hi))
        if any(a > b for a, b in zip(nlo, nhi)):
            return GridElement(self.group, lo, np.zeros((1,) * len(lo))), total
        sl = tuple(slice(a - L, b - L + 1) for a, b, L in zip(nlo, nhi, self.lo))
        kept = GridElement(self.group, nlo, self.arr[sl].copy())
        return kept, max(total - kept.l1(), 0.0)

    def crop_window(self, window: Window) -> tuple["GridElement", float]:
        kept, dropped = self.crop(window.lo, window.hi)
        if window.mask is not None:
            m = window.full_mask()
            full = kept.embed(window.lo, window.hi)
            lost = float(np.abs(full.arr[~m]).sum())
            full.arr[~m] = 0
            return full, dropped + lost
        return kept, dropped

    def trim(self, tol: float = 0.0) -> "GridElement":
        nz = np.argwhere(np.abs(self.arr) > tol)
        if nz.size == 0:
            return GridElement(self.group, self.group.identity, np.zeros((1,) * self.group.rank))
        a, b = nz.min(axis=0), nz.max(axis=0)
        sl = tuple(slice(int(i), int(j) + 1) for i, j in zip(a, b))
        return GridElement(self.group, tuple(int(i) + l for i, l in zip(a, self.lo)), self.arr[sl].copy())

    def _product_box(self, h: RingElement, side: str) -> tuple[Exp, Exp]:
        lo, hi = self.lo, self.hi
        if not self.group.is_heisenberg:
            keys = list(h.terms)
            plo = tuple(lo[i] + min(k[i] for k in keys) for i in range(len(lo)))
            phi = tuple(hi[i] + max(k[i] for k in keys) for i in range(len(lo)))
            return plo, phi
        xs, ys, zs = [], [], []
        for a, b, c in h.terms:
            xs += [lo[0] + a, hi[0] + a]
            ys += [lo[1] + b, hi[1] + b]
            if side == "right":
                shear = [x * b for x in (lo[0], hi[0])]
            else:
                shear = [a * y for y in (lo[1], hi[1])]
            zs += [lo[2] + c + min(shear), hi[2] + c + max(shear)]
        return (min(xs), min(ys), min(zs)), (max(xs), max(ys), max(zs))

    def multiply(self, h: RingElement, side: str = "right") -> "GridElement":
        """Exact full-extent product self*h (side="right") or h*self (side="left")."""
        if h.group != self.group:
            raise GroupMismatch("grid and ring element on different groups")
        if not h.terms:
            return GridElement(self.group, self.lo, np.zeros_like(self.arr))
        plo, phi = self._product_box(h, side)
        out = np.zeros(tuple(b - a + 1 for a, b in zip(plo, phi)))
        src = self.arr
        heis = self.group.is_heisenberg
        for s, c in sorted(h.terms.items()):
            c = float(c)
            if not heis:
                off = tuple(l + si - P for l, si, P in zip(self.lo, s, plo))
                sl = tuple(slice(o, o + n) for o, n in zip(off, src.shape))
                out[sl] += c * src
                continue
            a, b, cz = s
            nx, ny, nz = src.shape
            if side == "right":
                # g*s = (gx+a, gy+b, gz+cz+gx*b)
                iy = self.lo[1] + b - plo[1]
                for i in range(nx):
                    gx = self.lo[0] + i
                    ix = gx + a - plo[0]
                    iz = self.lo[2] + cz + gx * b - plo[2]
                    out[ix, iy:iy + ny, iz:iz + nz] += c * src[i]
            else:
                # s*g = (a+gx, b+gy, cz+gz+a*gy)
                ix = self.lo[0] + a - plo[0]
                for j in range(ny):
                    gy = self.lo[1] + j
                    jy = gy + b - plo[1]
                    iz = self.lo[2] + cz + a * gy - plo[2]
                    out[ix:ix + nx, jy, iz:iz + nz] += c * src[:, j]
        return GridElement(self.group, plo, out)

    def __add__(self, other: "GridElement") -> "GridElement":
        lo = tuple(min(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(max(a, b) for a, b in zip(self.hi, other.hi))
        out = self.embed(lo, hi)
        sl = tuple(slice(a - L, a - L + s) for a, L, s in zip(other.lo, lo, other.arr.shape))
        out.arr[sl] += other.arr
        return out

    def __sub__(self, other: "GridElement") -> "GridElement":
        return self + GridElement(other.group, other.lo, -other.arr)

    def scale(self, s: float) -> "GridElement":
        return GridElement(self.group, self.lo, self.arr * s)

    def to_json(self) -> dict:
        """Summary only; dense grids are too large to serialise term by term."""
        return {
            "group": self.group.to_json(),
            "lo": list(self.lo),
            "hi": list(self.hi),
            "l1": self.l1(),
            "nonzero": int(np.count_nonzero(self.arr)),
            "value_at_identity": self.coefficient(self.group.identity),
        }


def window_for(group: GroupDescriptor, lo: Exp, hi: Exp) -> Window:
    return rect(group, lo, hi)
