"""Normal-form arithmetic for Z^d and the discrete Heisenberg group, plus box windows.

Heisenberg elements are exponent triples (x, y, z) standing for the unitriangular
matrix [[1, x, z], [0, 1, y], [0, 0, 1]].  The three standard generators are
u2 = (1, 0, 0), u1 = (0, 1, 0) and the central u3 = (0, 0, 1).

The hot paths work on bare exponent tuples (``mul_exp``/``inv_exp``); the
``GroupElement`` wrapper carries the group along for user-facing code.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import GroupMismatch, WindowTooSmall

Exp = tuple[int, ...]


@dataclass(frozen=True)
class GroupDescriptor:
    kind: str
    d: int = 3

    def __post_init__(self):
        if self.kind not in ("lattice", "heisenberg"):
            raise ValueError(f"unknown group kind {self.kind!r}")
        if self.kind == "heisenberg" and self.d != 3:
            raise ValueError("the Heisenberg group has rank 3 exponents")
        if self.d < 1:
            raise ValueError("lattice rank must be positive")

    @property
    def rank(self) -> int:
        return self.d

    @property
    def is_heisenberg(self) -> bool:
        return self.kind == "heisenberg"

    @property
    def identity(self) -> Exp:
        return (0,) * self.d

    def generators(self) -> list[Exp]:
        """Standard generators (u1, u2, ... for lattices; u1, u2, u3 for H)."""
        if self.is_heisenberg:
            return [(0, 1, 0), (1, 0, 0), (0, 0, 1)]
        return [tuple(int(i == j) for j in range(self.d)) for i in range(self.d)]

    def to_json(self) -> dict:
        if self.is_heisenberg:
            return {"kind": "heisenberg"}
        return {"kind": "lattice", "d": self.d}

    @classmethod
    def from_json(cls, data: dict) -> "GroupDescriptor":
        if data["kind"] == "heisenberg":
            return HEISENBERG
        return Lattice(int(data["d"]))

    def __str__(self) -> str:
        return "H" if self.is_heisenberg else f"Z^{self.d}"


def Lattice(d: int) -> GroupDescriptor:
    return GroupDescriptor("lattice", d)


HEISENBERG = GroupDescriptor("heisenberg", 3)


def mul_exp(group: GroupDescriptor, a: Exp, b: Exp) -> Exp:
    if group.is_heisenberg:
        return (a[0] + b[0], a[1] + b[1], a[2] + b[2] + a[0] * b[1])
    return tuple(s + t for s, t in zip(a, b))


def inv_exp(group: GroupDescriptor, a: Exp) -> Exp:
    if group.is_heisenberg:
        return (-a[0], -a[1], -a[2] + a[0] * a[1])
    return tuple(-s for s in a)


@dataclass(frozen=True)
class GroupElement:
    group: GroupDescriptor
    exponents: Exp

    def __post_init__(self):
        if len(self.exponents) != self.group.rank:
            raise ValueError(f"{self.group} elements need {self.group.rank} exponents")
        object.__setattr__(self, "exponents", tuple(int(e) for e in self.exponents))

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return mul(self, other)

    def inverse(self) -> "GroupElement":
        return inv(self)

    def to_json(self) -> list[int]:
        return list(self.exponents)


def element(group: GroupDescriptor, *exponents: int) -> GroupElement:
    return GroupElement(group, tuple(exponents))


def identity(group: GroupDescriptor) -> GroupElement:
    return GroupElement(group, group.identity)


def mul(g: GroupElement, h: GroupElement) -> GroupElement:
    if g.group != h.group:
        raise GroupMismatch(f"cannot multiply elements of {g.group} and {h.group}")
    return GroupElement(g.group, mul_exp(g.group, g.exponents, h.exponents))


def inv(g: GroupElement) -> GroupElement:
    return GroupElement(g.group, inv_exp(g.group, g.exponents))


def commutator(g: GroupElement, h: GroupElement) -> GroupElement:
    return g * h * g.inverse() * h.inverse()


def heisenberg_matrix(a: Exp) -> np.ndarray:
    x, y, z = a
    return np.array([[1, x, z], [0, 1, y], [0, 0, 1]], dtype=object)


# ---------------------------------------------------------------- windows


@dataclass(frozen=True, eq=False)
class Window:
    """Finite set of group elements inside the bounding box ``lo..hi`` (inclusive).

    ``mask`` (over the bounding box, lexicographic axis order) selects a subset;
    ``None`` means the full box.  Element enumeration is lexicographic on exponents.
    """

    group: GroupDescriptor
    lo: Exp
    hi: Exp
    mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.lo) != self.group.rank or len(self.hi) != self.group.rank:
            raise ValueError("bounds must match the group rank")
        if self.mask is not None:
            if self.mask.shape != self.shape:
                raise ValueError("mask shape does not match bounding box")
            if self.mask.all():
                object.__setattr__(self, "mask", None)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(max(h - l + 1, 0) for l, h in zip(self.lo, self.hi))

    @property
    def is_box(self) -> bool:
        return self.mask is None

    def full_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.shape, dtype=bool)
        return self.mask

    def __len__(self) -> int:
        if self.mask is None:
            return int(np.prod(self.shape)) if self.shape else 0
        return int(self.mask.sum())

    @property
    def size(self) -> int:
        return len(self)

    def __iter__(self) -> Iterator[Exp]:
        ranges = [range(l, h + 1) for l, h in zip(self.lo, self.hi)]
        if self.mask is None:
            yield from itertools.product(*ranges)
        else:
            for idx in np.argwhere(self.mask):
                yield tuple(int(i) + l for i, l in zip(idx, self.lo))

    @property
    def elements(self) -> list[Exp]:
        return list(self)

    def index_of(self, g: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(a) - l for a, l in zip(g, self.lo))

    def __contains__(self, g) -> bool:
        if isinstance(g, GroupElement):
            g = g.exponents
        idx = self.index_of(g)
        if any(i < 0 or i >= s for i, s in zip(idx, self.shape)):
            return False
        return self.mask is None or bool(self.mask[idx])

    def radii(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    def to_json(self) -> dict:
        out = {"group": self.group.to_json(), "lo": list(self.lo), "hi": list(self.hi), "size": len(self)}
        if self.mask is not None:
            out["elements"] = [list(g) for g in self]
        return out

    def with_mask(self, mask: np.ndarray) -> "Window":
        return Window(self.group, self.lo, self.hi, mask & self.full_mask())

    def is_empty(self) -> bool:
        return len(self) == 0


def rect(group: GroupDescriptor, lo: Sequence[int], hi: Sequence[int]) -> Window:
    return Window(group, tuple(int(v) for v in lo), tuple(int(v) for v in hi))


def box(desc: GroupDescriptor, n: int, z_radius: int | None = None) -> Window:
    """Centred box: {-n..n}^d for lattices, |x|,|y| <= n and |z| <= n^2 for H.

    ``z_radius`` overrides the central radius for H (used when pruning budgets
    call for a taller or flatter box).
    """
    if n < 1:
        raise ValueError("box radius must be at least 1")
    if desc.is_heisenberg:
        zr = n * n if z_radius is None else int(z_radius)
        return rect(desc, (-n, -n, -zr), (n, n, zr))
    return rect(desc, (-n,) * desc.d, (n,) * desc.d)


def support_bounds(group: GroupDescriptor, elems: Iterable[Exp]) -> tuple[Exp, Exp]:
    elems = list(elems)
    if not elems:
        raise ValueError("empty element set")
    lo = tuple(min(e[i] for e in elems) for i in range(group.rank))
    hi = tuple(max(e[i] for e in elems) for i in range(group.rank))
    return lo, hi


# ------------------------------------------------------- shifted views


def _shift_view(arr: np.ndarray, offsets: Sequence[int], fill) -> np.ndarray:
    """out[i] = arr[i + offsets] where that index is in range, else ``fill``."""
    out = np.full(arr.shape, fill, dtype=arr.dtype)
    src, dst = [], []
    for off, n in zip(offsets, arr.shape):
        if abs(off) >= n:
            return out
        if off >= 0:
            src.append(slice(off, n))
            dst.append(slice(0, n - off))
        else:
            src.append(slice(0, n + off))
            dst.append(slice(-off, n))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def translate_values(
    group: GroupDescriptor, lo: Exp, arr: np.ndarray, t: Exp, side: str, fill=0
) -> np.ndarray:
    """Gather ``arr`` (indexed from ``lo``) along a translation by ``t``.

    side="right": out[delta] = arr[delta * t];  side="left": out[delta] = arr[t * delta].
    Entries whose source falls outside the array get ``fill``.
    """
    if not group.is_heisenberg:
        return _shift_view(arr, t, fill)
    a, b, c = t
    out = np.full(arr.shape, fill, dtype=arr.dtype)
    if side == "right":
        # delta*t = (dx+a, dy+b, dz+c+dx*b): z-shift depends on the x slice
        for i in range(arr.shape[0]):
            si = i + a
            if not 0 <= si < arr.shape[0]:
                continue
            dx = lo[0] + i
            out[i] = _shift_view(arr[si], (b, c + dx * b), fill)
    elif side == "left":
        # t*delta = (a+dx, b+dy, c+dz+a*dy): z-shift depends on the y slice
        for j in range(arr.shape[1]):
            sj = j + b
            if not 0 <= sj < arr.shape[1]:
                continue
            dy = lo[1] + j
            out[:, j] = _shift_view(arr[:, sj], (a, c + a * dy), fill)
    else:
        raise ValueError("side must be 'left' or 'right'")
    return out


def interior(window: Window, F: Iterable, side: str = "right") -> Window:
    """Elements gamma of the window with gamma * phi in the window for every phi in F.

    side="left" gives instead the gamma with phi^{-1} * gamma in the window, which is
    where left convolutions can be evaluated without leaving the window.
    """
    group = window.group
    F = [f.exponents if isinstance(f, GroupElement) else tuple(f) for f in F]
    if not F:
        raise ValueError("F must be nonempty")
    if group.identity not in F:
        raise ValueError("F must contain the identity")
    base = window.full_mask()
    mask = base.copy()
    for phi in F:
        if phi == group.identity:
            continue
        if side == "right":
            mask &= translate_values(group, window.lo, base, phi, "right", False)
        else:
            mask &= translate_values(group, window.lo, base, inv_exp(group, phi), "left", False)
    return Window(group, window.lo, window.hi, mask)


def symmetric_difference_ratio(window: Window, gamma: Exp) -> float:
    """|gamma F  symmetric-difference  F| / |F| for a box window F."""
    group = window.group
    base = window.full_mask()
    ginv = inv_exp(group, tuple(gamma))
    # delta in gamma*F  iff  ginv*delta in F
    shifted = translate_values(group, window.lo, base, ginv, "left", False)
    inter = int((shifted & base).sum())
    n = len(window)
    return (2 * (n - inter)) / n


def require_nonempty(window: Window, what: str = "window") -> Window:
    if window.is_empty():
        raise WindowTooSmall(f"{what} is empty")
    return window
