"""Finite checks of the counting and sign lemmas used in the entropy comparison and
in the decay estimates for the cubic multiplier.

Every ``*_check`` either returns a report whose ``ok`` field is true or raises
``LemmaViolation``.
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath as mp
import numpy as np
from scipy.optimize import brentq
from scipy.special import kl_div

from .errors import HypothesisNotMet, LemmaViolation
from .groups import Window, interior, inv_exp, mul_exp, rect
from .ring import RingElement

# ------------------------------------------------------------ set families


@dataclass(frozen=True)
class SetFamily:
    n: int
    members: tuple[int, ...]

    def __post_init__(self):
        if not 0 <= self.n <= 16:
            raise ValueError("ground set size must be at most 16")
        if len(set(self.members)) != len(self.members):
            raise ValueError("family members must be distinct")
        if any(m < 0 or m >> self.n for m in self.members):
            raise ValueError("member outside the ground set")

    @classmethod
    def from_sets(cls, n: int, sets: Iterable[Iterable[int]]) -> "SetFamily":
        return cls(n, tuple(_mask(s) for s in sets))

    @classmethod
    def power_set(cls, n: int) -> "SetFamily":
        return cls(n, tuple(range(1 << n)))

    @classmethod
    def random(cls, n: int, size: int, rng: random.Random) -> "SetFamily":
        if size > 1 << n:
            raise ValueError("more members requested than subsets exist")
        return cls(n, tuple(sorted(rng.sample(range(1 << n), size))))

    def __len__(self) -> int:
        return len(self.members)


def _mask(J) -> int:
    if isinstance(J, int):
        return J
    m = 0
    for j in J:
        m |= 1 << j
    return m


def scatters(family: SetFamily, J) -> bool:
    """True iff every subset of J occurs as a trace C & J of some member C."""
    jm = _mask(J)
    size = bin(jm).count("1")
    if size > 20:
        raise ValueError("|J| must be at most 20")
    traces = {c & jm for c in family.members}
    return len(traces) == 1 << size


def sauer_shelah_bound(n: int, k: int) -> int:
    return sum(math.comb(n, i) for i in range(k))


def sauer_shelah_witness(family: SetFamily, k: int) -> tuple[int, ...]:
    """A k-subset of the ground set scattered by ``family`` (exhaustive search)."""
    if not 1 <= k <= family.n:
        raise HypothesisNotMet(f"k must lie in 1..{family.n}")
    bound = sauer_shelah_bound(family.n, k)
    if len(family) <= bound:
        raise HypothesisNotMet(f"|family| = {len(family)} <= sum_(i<{k}) C({family.n}, i) = {bound}")
    for J in itertools.combinations(range(family.n), k):
        if scatters(family, J):
            return J
    raise LemmaViolation(f"no scattered {k}-subset although |family| = {len(family)} > {bound}")


# ------------------------------------------------------------ binomial sums


def binary_entropy(beta: float) -> float:
    return -beta * math.log(beta) - (1 - beta) * math.log(1 - beta)


def stirling_bound_check(beta: float, m_range: tuple[int, int] = (1, 2000)) -> dict:
    """Check sum_{i <= floor(beta m)} C(m, i) <= exp(kappa m) with kappa the binary entropy.

    Sums are exact integers; the comparison runs in 60-digit arithmetic.
    Reports the smallest m0 from which the inequality holds throughout the range.
    """
    if not 0 < beta < 0.5:
        raise ValueError("beta must lie in (0, 1/2)")
    lo, hi = m_range
    with mp.workdps(60):
        b = mp.mpf(beta)
        kappa = -b * mp.log(b) - (1 - b) * mp.log(1 - b)
        width = int(math.floor(beta * hi)) + 1
        row = [1] + [0] * width  # C(m, 0..width) for the current m
        failures = []
        for m in range(1, hi + 1):
            for i in range(width, 0, -1):
                row[i] += row[i - 1]
            if m < lo:
                continue
            total = sum(row[: int(math.floor(beta * m)) + 1])
            if mp.log(total) > kappa * m:
                failures.append(m)
    m0 = (max(failures) + 1) if failures else lo
    return {
        "lemma": "binomial-sum bound",
        "beta": beta,
        "kappa": float(kappa),
        "m_range": [lo, hi],
        "m0": m0,
        "failures": failures,
        "ok": m0 <= hi,
    }


# ------------------------------------------------------------ sign patterns


@dataclass
class AffineSystem:
    """k affine functionals phi_j(x) = coeffs[j] . x + offsets[j] on Q^dim with thresholds b."""

    dim: int
    coeffs: list[list[Fraction]]
    offsets: list[Fraction]
    thresholds: list[Fraction]

    def __post_init__(self):
        self.coeffs = [[Fraction(c) for c in row] for row in self.coeffs]
        self.offsets = [Fraction(v) for v in self.offsets]
        self.thresholds = [Fraction(v) for v in self.thresholds]
        if not (len(self.coeffs) == len(self.offsets) == len(self.thresholds)):
            raise ValueError("inconsistent number of functionals")
        if any(len(row) != self.dim for row in self.coeffs):
            raise ValueError("coefficient rows must have length dim")
        if self.dim > 4:
            raise ValueError("dimension at most 4")

    @property
    def k(self) -> int:
        return len(self.coeffs)

    @classmethod
    def random(cls, dim: int, k: int, rng: np.random.Generator, denom: int = 1000) -> "AffineSystem":
        """Gaussian functionals rounded to rationals with the given denominator."""

        def q(v):
            return Fraction(int(round(v * denom)), denom)

        coeffs = [[q(v) for v in rng.standard_normal(dim)] for _ in range(k)]
        offsets = [q(v) for v in rng.standard_normal(k)]
        thresholds = [q(v) for v in rng.standard_normal(k)]
        return cls(dim, coeffs, offsets, thresholds)

    def constraints(self, pattern: Sequence[int]) -> list[tuple[list[Fraction], Fraction, bool]]:
        """Each constraint reads a . x + c > 0 (strict) or >= 0."""
        out = []
        for row, off, b, a in zip(self.coeffs, self.offsets, self.thresholds, pattern):
            if a == 0:  # phi < b  <=>  b - phi > 0
                out.append(([-v for v in row], b - off, True))
            else:  # phi >= b
                out.append((list(row), off - b, False))
        return out


Constraint = tuple[list[Fraction], Fraction, bool]


def _eliminate(cons: list[Constraint], var: int) -> list[Constraint]:
    pos, neg, rest = [], [], []
    for c in cons:
        v = c[0][var]
        (pos if v > 0 else neg if v < 0 else rest).append(c)
    out = list(rest)
    for a, ca, sa in pos:
        for b, cb, sb in neg:
            wa, wb = -b[var], a[var]  # both positive
            row = [wa * x + wb * y for x, y in zip(a, b)]
            row[var] = Fraction(0)
            out.append((row, wa * ca + wb * cb, sa or sb))
    # drop exact duplicates to keep the blow-up in check
    seen, uniq = set(), []
    for row, c, s in out:
        key = (tuple(row), c, s)
        if key not in seen:
            seen.add(key)
            uniq.append((row, c, s))
    return uniq


def fm_feasible(cons: list[Constraint], dim: int) -> tuple[bool, list[Fraction] | None]:
    """Fourier-Motzkin with strict/non-strict bookkeeping; returns (feasible, witness)."""
    stages = [cons]
    for var in range(dim):
        stages.append(_eliminate(stages[-1], var))
    for row, c, strict in stages[-1]:
        if (strict and not c > 0) or (not strict and not c >= 0):
            return False, None
    # back-substitute: choose x_var inside its interval given later variables
    x = [Fraction(0)] * dim
    for var in reversed(range(dim)):
        # FM already certified a nonempty interval, so the midpoint works for strict bounds too
        lo, hi = None, None
        for row, c, strict in stages[var]:
            a = row[var]
            if a == 0:
                continue
            rest = c + sum(row[j] * x[j] for j in range(var + 1, dim))
            bound = -rest / a
            if a > 0:  # x > bound
                if lo is None or bound > lo:
                    lo = bound
            else:  # x < bound
                if hi is None or bound < hi:
                    hi = bound
        if lo is None and hi is None:
            x[var] = Fraction(0)
        elif lo is None:
            x[var] = hi - 1
        elif hi is None:
            x[var] = lo + 1
        else:
            x[var] = (lo + hi) / 2
    for row, c, strict in cons:
        val = c + sum(a * v for a, v in zip(row, x))
        if (strict and not val > 0) or (not strict and not val >= 0):
            raise LemmaViolation("elimination reported feasibility but the witness fails")
    return True, x


def empty_sign_pattern(system: AffineSystem) -> tuple[int, ...]:
    """A pattern a in {0,1}^k whose half-space intersection is empty.

    An empty intersection among any dim+1 of the half-spaces stays empty when the
    remaining ones are added, so the first dim+1 functionals are searched first
    and their elimination certificate covers the whole pattern.
    """
    if system.k <= system.dim:
        raise HypothesisNotMet("need more functionals than the dimension")
    m = system.dim + 1
    sub = AffineSystem(system.dim, system.coeffs[:m], system.offsets[:m], system.thresholds[:m])
    for head in itertools.product((0, 1), repeat=m):
        if not fm_feasible(sub.constraints(head), system.dim)[0]:
            return head + (0,) * (system.k - m)
    for pattern in itertools.product((0, 1), repeat=system.k):
        if not fm_feasible(system.constraints(pattern), system.dim)[0]:
            return pattern
    raise LemmaViolation("every sign pattern is realised, contradicting the dimension bound")


def count_nonempty_patterns(system: AffineSystem) -> int:
    return sum(
        fm_feasible(system.constraints(p), system.dim)[0]
        for p in itertools.product((0, 1), repeat=system.k)
    )


# ------------------------------------------------------------ kernel dimension


def _exact_rank(rows: list[dict[int, Fraction]]) -> int:
    """Rank of a sparse rational matrix by elimination on lowest pivot columns."""
    pivots: dict[int, dict[int, Fraction]] = {}
    rank = 0
    for row in rows:
        row = {k: v for k, v in row.items() if v != 0}
        while row:
            col = min(row)
            piv = pivots.get(col)
            if piv is None:
                inv = 1 / row[col]
                pivots[col] = {k: v * inv for k, v in row.items()}
                rank += 1
                break
            factor = row[col]
            for k, v in piv.items():
                nv = row.get(k, 0) - factor * v
                if nv == 0:
                    row.pop(k, None)
                else:
                    row[k] = nv
    return rank


def vq_dimension(f: RingElement, Q: Window) -> dict:
    """Kernel dimension of v -> (v . f*) restricted to Int_E Q, and the bound |Q E^-1 \\ Int_E Q|."""
    group = f.group
    E = f.support()
    if group.identity not in f.terms:
        raise HypothesisNotMet("the identity must lie in the support")
    if len(Q) > 400:
        raise ValueError("|Q| must be at most 400")
    q_elems = list(Q)
    col = {g: i for i, g in enumerate(q_elems)}
    inner = list(interior(Q, E))
    rows = []
    for gamma in inner:
        rows.append({col[mul_exp(group, gamma, s)]: Fraction(c) for s, c in f.terms.items()})
    rank = _exact_rank(rows)
    dim = len(q_elems) - rank
    qe = {mul_exp(group, q, inv_exp(group, e)) for q in q_elems for e in E}
    bound = len(qe - set(inner))
    if dim > bound:
        raise LemmaViolation(f"dim V_Q = {dim} exceeds the bound {bound}")
    return {"dim": dim, "bound": bound, "q_size": len(q_elems), "interior_size": len(inner), "rank": rank}


# ------------------------------------------------------------ the cubic g_k


def gk_factored(c, k, x):
    return (
        -(x + 1) * (x + 2) * (x + 3)
        + 3 * c * (x + k + 1) * (x + 2) * (x + 3)
        - 3 * c**2 * (x + k + 1) * (x + k + 2) * (x + 3)
        + c**3 * (x + k + 1) * (x + k + 2) * (x + k + 3)
    )


def gk_coefficients(c, k):
    """Coefficients of g_k from the cubic term down."""
    return [
        (c - 1) ** 3,
        3 * c * (c - 1) ** 2 * k + 6 * (c - 1) ** 3,
        3 * c**2 * (c - 1) * k**2 + 3 * c * (c - 1) * (4 * c - 5) * k + 11 * (c - 1) ** 3,
        c**3 * k**3 + (6 * c**3 - 9 * c**2) * k**2 + (11 * c**3 - 27 * c**2 + 18 * c) * k + 6 * (c - 1) ** 3,
    ]


def gk_expanded(c, k, x):
    a3, a2, a1, a0 = gk_coefficients(c, k)
    return ((a3 * x + a2) * x + a1) * x + a0


def _sqrt(v):
    if isinstance(v, (mp.mpf, mp.mpc)):
        return mp.sqrt(v)
    return math.sqrt(v)


def y_point(c, k, eta, sign: int):
    """Reference abscissa ck/(1-c) - 2 +- sqrt(eta k + (1-c)^2/3)/(1-c)."""
    return c * k / (1 - c) - 2 + sign * _sqrt(eta * k + (1 - c) ** 2 / 3) / (1 - c)


def gk_at_y_closed_form(c, k, eta, sign: int):
    root = _sqrt(eta * k + (1 - c) ** 2 / 3)
    return (c * c + c) * k + sign * ((3 * c - eta) * k + 2 * (c - 1) ** 2 / 3) * root


def kc_conditions(c: float, k: int) -> list[bool]:
    """The four sign conditions that place the roots between the reference points."""
    with mp.workdps(40):
        c, k = mp.mpf(c), mp.mpf(k)
        s4 = mp.sqrt(4 * c * k + (1 - c) ** 2 / 3)
        s1 = mp.sqrt(c * k + (1 - c) ** 2 / 3)
        w = 2 * (c - 1) ** 2 / 3
        return [
            c * k / (1 - c) - 2 - s4 / (1 - c) > 1,
            (c * c + c) * k - (-c * k + w) * s4 > 0,
            (c * c + c) * k - (2 * c * k + w) * s1 < 0,
            (c * c + c) * k + (-c * k + w) * s4 < 0,
        ]


def kc(c: float) -> int:
    """Smallest k from which all four conditions hold for every larger k.

    Each condition compares terms of order k against order k^{3/2}, and all of
    them settle once k exceeds a multiple of 1/c; the scan runs to 100/c + 1000,
    well past that point.
    """
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    limit = int(math.ceil(100 / c)) + 1000
    last_fail = 0
    for k in range(1, limit + 1):
        if not all(kc_conditions(c, k)):
            last_fail = k
    return last_fail + 1


_KC_CACHE: dict[float, int] = {}


def kc_cached(c: float) -> int:
    if c not in _KC_CACHE:
        _KC_CACHE[c] = kc(c)
    return _KC_CACHE[c]


@dataclass
class GkRootReport:
    c: float
    k: int
    k_c: int
    roots: list[float]
    y: dict = field(default_factory=dict)
    interlacing: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.interlacing.values())

    def to_json(self) -> dict:
        return {
            "c": self.c,
            "k": self.k,
            "k_c": self.k_c,
            "roots": self.roots,
            "y": self.y,
            "interlacing": self.interlacing,
            "ok": self.ok,
        }


def gk_roots(c: float, k: int) -> GkRootReport:
    k_c = kc_cached(c)
    y = {
        "4c-": y_point(c, k, 4 * c, -1),
        "c-": y_point(c, k, c, -1),
        "c+": y_point(c, k, c, +1),
        "4c+": y_point(c, k, 4 * c, +1),
    }

    def g(x):
        return gk_expanded(c, k, x)

    if k >= k_c:
        try:
            t1 = brentq(g, y["4c-"], y["c-"], xtol=1e-12, rtol=1e-15)
            t2 = brentq(g, y["c-"], y["c+"], xtol=1e-12, rtol=1e-15)
            t3 = brentq(g, y["c+"], y["4c+"], xtol=1e-12, rtol=1e-15)
        except ValueError as exc:
            raise LemmaViolation(f"root bracketing failed for c={c}, k={k}: {exc}")
        roots = [t1, t2, t3]
    else:
        r = np.roots([float(v) for v in gk_coefficients(c, k)])
        roots = sorted(float(v.real) for v in r if abs(v.imag) < 1e-9 * max(1.0, abs(v)))
    chain = [1.0, y["4c-"]]
    labels = ["1<y(4c,-)"]
    if len(roots) == 3:
        chain = [1.0, y["4c-"], roots[0], y["c-"], roots[1], y["c+"], roots[2], y["4c+"]]
        labels = ["1<y(4c,-)", "y(4c,-)<t1", "t1<y(c,-)", "y(c,-)<t2", "t2<y(c,+)", "y(c,+)<t3", "t3<y(4c,+)"]
    inter = {lab: bool(a < b) for lab, a, b in zip(labels, chain, chain[1:])}
    if len(roots) != 3:
        inter["three real roots"] = False
    report = GkRootReport(c, k, k_c, roots, y, inter)
    if k >= k_c and not report.ok:
        raise LemmaViolation(f"interlacing fails for c={c}, k={k} >= k_c={k_c}: {inter}")
    return report


def gk_closed_form_check(samples: int = 1000, seed: int = 0, rtol: float = 1e-9) -> dict:
    """Compare g_k at the reference points, expanded form vs closed form, in 50-digit arithmetic."""
    rng = random.Random(seed)
    worst = 0.0
    with mp.workdps(50):
        for _ in range(samples):
            c = mp.mpf(rng.uniform(0.01, 0.99))
            k = rng.randint(1, 5000)
            eta = mp.mpf(rng.uniform(0.01, 4.0))
            for sign in (-1, 1):
                x = y_point(c, k, eta, sign)
                direct = gk_expanded(c, k, x)
                closed = gk_at_y_closed_form(c, k, eta, sign)
                scale = max(abs(closed), abs((c * c + c) * k), mp.mpf(1))
                worst = max(worst, float(abs(direct - closed) / scale))
    if worst > rtol:
        raise LemmaViolation(f"closed form of g_k at the reference points is off by {worst:.3g}")
    return {"lemma": "g_k at reference points", "samples": samples, "max_rel_error": worst, "ok": True}


def gk_forms_agree(points: int = 100, seed: int = 0) -> dict:
    """Expanded and factored forms of g_k agree exactly at random rational points."""
    rng = random.Random(seed)
    for _ in range(points):
        c = Fraction(rng.randint(1, 999), 1000)
        k = rng.randint(0, 2000)
        x = Fraction(rng.randint(-10**6, 10**6), rng.randint(1, 1000))
        if gk_factored(c, k, x) != gk_expanded(c, k, x):
            raise LemmaViolation(f"forms of g_k disagree at c={c}, k={k}, x={x}")
    return {"lemma": "g_k expanded = factored", "points": points, "ok": True}


def interlacing_check(cs: Sequence[float] = (0.1, 0.25, 0.5, 0.75), span: int = 200) -> dict:
    rows = []
    for c in cs:
        k_c = kc_cached(c)
        for k in range(k_c, k_c + span + 1):
            gk_roots(c, k)  # raises on failure
        rows.append({"c": c, "k_c": k_c, "k_max": k_c + span})
    return {"lemma": "root interlacing", "cases": rows, "ok": True}


# ------------------------------------------------------------ c^x (1-c)^y bound


def log_binomial_weight(c: float, x: float, y: float) -> float:
    """log of c^x (1-c)^y (x+y)^(x+y) / (x^x y^y), written as -(x+y) KL(p || c), p = x/(x+y).

    The KL form keeps every summand nonnegative, so the sign is exact in floating point.
    """
    p = x / (x + y)
    return -(x + y) * float(kl_div(p, c) + kl_div(1 - p, 1 - c))


def log_binomial_weight_direct(c: float, x: float, y: float) -> float:
    return math.fsum(
        [x * math.log(c), y * math.log(1 - c), (x + y) * math.log(x + y), -x * math.log(x), -y * math.log(y)]
    )


def combinatorial_bound_check(c: float, samples: int = 10000, seed: int = 0) -> dict:
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0, 1000, samples)
    ys = rng.uniform(0, 1000, samples)
    xs[xs == 0] = 1e-3
    ys[ys == 0] = 1e-3
    worst = -math.inf
    worst_direct = -math.inf
    for x, y in zip(xs, ys):
        v = log_binomial_weight(c, x, y)
        worst = max(worst, v)
        scale = (x + y) * (abs(math.log(x + y)) + abs(math.log(c)) + abs(math.log(1 - c)) + 1)
        worst_direct = max(worst_direct, log_binomial_weight_direct(c, x, y) / scale)
        if v > 1e-12:
            raise LemmaViolation(f"bound fails at c={c}, x={x}, y={y}: log value {v}")
    if worst_direct > 1e-12:
        raise LemmaViolation(f"direct evaluation exceeds 0 beyond rounding: {worst_direct}")
    # equality at the maximiser and unimodality along a line
    peak = []
    unimodal = True
    for y in (0.5, 3.0, 70.0, 900.0):
        xm = c * y / (1 - c)
        peak.append(abs(log_binomial_weight(c, xm, y)))
        left = [log_binomial_weight(c, xm * t, y) for t in np.linspace(0.05, 1.0, 40)]
        right = [log_binomial_weight(c, xm * t, y) for t in np.linspace(1.0, 20.0, 40)]
        unimodal &= all(a <= b + 1e-12 for a, b in zip(left, left[1:]))
        unimodal &= all(a >= b - 1e-12 for a, b in zip(right, right[1:]))
    if max(peak) > 1e-12 or not unimodal:
        raise LemmaViolation("maximiser or unimodality check failed")
    return {
        "lemma": "c^x (1-c)^y binomial bound",
        "c": c,
        "samples": samples,
        "max_log_value": worst,
        "max_direct_relative": worst_direct,
        "peak_abs_log": max(peak),
        "unimodal": unimodal,
        "ok": True,
    }


# ------------------------------------------------------------ randomized suites


def sauer_shelah_trials(trials: int = 500, n_max: int = 12, seed: int = 0) -> dict:
    """Random families just above the size threshold; a witness must be found every time."""
    rng = random.Random(seed)
    found = 0
    for _ in range(trials):
        n = rng.randint(3, n_max)
        k = rng.randint(1, min(n, 4))
        bound = sauer_shelah_bound(n, k)
        size = rng.randint(bound + 1, min(1 << n, bound + 1 + bound // 4))
        J = sauer_shelah_witness(SetFamily.random(n, size, rng), k)
        found += len(J) == k
    return {"lemma": "Sauer-Shelah", "trials": trials, "found": found, "ok": found == trials}


def sign_pattern_trials(dim: int, k: int, trials: int = 1000, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        empty_sign_pattern(AffineSystem.random(dim, k, rng))
    return {"lemma": "empty sign pattern", "dim": dim, "k": k, "trials": trials, "found": trials, "ok": True}


def vq_dimension_trials(boxes: int = 100, seed: int = 0) -> dict:
    """dim V_Q against the boundary bound for random boxes and random stencils in {-1,0,1}^2."""
    rng = random.Random(seed)
    from .groups import Lattice

    group = Lattice(2)
    neighbours = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)]
    rows = []
    for i in range(boxes):
        if i % 2 == 0:
            f = RingElement(group, {(0, 0): 1, (1, 0): -1, (0, 1): -1})
        else:
            support = rng.sample(neighbours, rng.randint(1, 4))
            terms = {(0, 0): rng.choice([-3, -2, -1, 1, 2, 3])}
            terms.update({s: rng.choice([-2, -1, 1, 2]) for s in support})
            f = RingElement(group, terms)
        w = rng.randint(1, 20)
        h = rng.randint(1, min(20, 400 // w))
        x0, y0 = rng.randint(-5, 5), rng.randint(-5, 5)
        rep = vq_dimension(f, rect(group, (x0, y0), (x0 + w - 1, y0 + h - 1)))
        rows.append((rep["dim"], rep["bound"]))
    return {
        "lemma": "kernel dimension bound",
        "boxes": boxes,
        "max_slack_used": max(d / b if b else 0.0 for d, b in rows),
        "ok": all(d <= b for d, b in rows),
    }
