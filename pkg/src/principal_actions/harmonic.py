"""Homoclinic-point machinery.

Three families of objects live here:

* l1 inverses of lopsided polynomials by Neumann series (the expansive case),
* Green's functions of transient symmetric random walks, on a finite window
  with zero boundary values, and the Heisenberg homoclinic point built from
  the random walk p = (u1 + u1^-1 + u2 + u2^-1)/4,
* the cubic-multiplier series a = sum_k r^k (c - q)^3 (1 - q)^-(k+1) and the
  scalar sequence (1 - c)^k |phi_k|(c) that controls its convergence.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np
from scipy.optimize import minimize
from scipy.sparse.linalg import LinearOperator, cg
from scipy.special import gammaln

from . import combinatorics as comb
from .errors import HypothesisNotMet, LemmaViolation, NotDiagonallyDominant, WindowTooSmall
from .groups import (
    HEISENBERG,
    GroupDescriptor,
    Window,
    box,
    interior,
    inv_exp,
    mul_exp,
    translate_values,
)
from .ring import GridElement, RingElement, TruncatedSeries, commutes

# ---------------------------------------------------------------- well-balanced


@dataclass
class WellBalancedCheck:
    sums_to_zero: bool
    off_identity_nonpositive: bool
    symmetric: bool
    support_generates: bool
    radius: int
    notes: list[str] = field(default_factory=list)

    @property
    def overall(self) -> bool:
        return self.sums_to_zero and self.off_identity_nonpositive and self.symmetric and self.support_generates

    def to_json(self) -> dict:
        return {
            "sums_to_zero": self.sums_to_zero,
            "off_identity_nonpositive": self.off_identity_nonpositive,
            "symmetric": self.symmetric,
            "support_generates": self.support_generates,
            "overall": self.overall,
            "radius": self.radius,
            "notes": self.notes,
        }


def _in_box(group: GroupDescriptor, g, n: int, zr: int) -> bool:
    if group.is_heisenberg:
        return abs(g[0]) <= n and abs(g[1]) <= n and abs(g[2]) <= zr
    return all(abs(v) <= n for v in g)


def generates_box(group: GroupDescriptor, gens, R: int) -> bool:
    """Breadth-first closure of gens (and inverses) inside box(2R); True once box(R) is reached."""
    steps = set()
    for g in gens:
        g = tuple(g)
        if g != group.identity:
            steps.add(g)
            steps.add(inv_exp(group, g))
    if not steps:
        return False
    target = set(box(group, R))
    search_n = 2 * R
    search_z = search_n * search_n
    seen = {group.identity}
    frontier = [group.identity]
    while frontier and not target <= seen:
        nxt = []
        for g in frontier:
            for s in steps:
                h = mul_exp(group, g, s)
                if h not in seen and _in_box(group, h, search_n, search_z):
                    seen.add(h)
                    nxt.append(h)
        frontier = nxt
    return target <= seen


def check_well_balanced(f: RingElement, R: int = 3) -> WellBalancedCheck:
    ident = f.group.identity
    notes = []
    off = [c for g, c in f.terms.items() if g != ident]
    check = WellBalancedCheck(
        sums_to_zero=f.coefficient_sum() == 0,
        off_identity_nonpositive=all(c <= 0 for c in off),
        symmetric=f == f.adjoint(),
        support_generates=generates_box(f.group, f.support(), R),
        radius=R,
        notes=notes,
    )
    if not f.group.is_heisenberg and f.group.d <= 2:
        notes.append(f"{f.group} is recurrent; the homoclinic construction for well-balanced f needs a transient group")
    return check


# ---------------------------------------------------------------- Neumann inverse


def lopsided_split(f: RingElement) -> tuple[float, tuple, RingElement, float]:
    """Write f = c0 * gamma0 * (1 - g) with c0 the dominant coefficient.

    Returns (c0, gamma0, g, ||g||_1).  Raises NotDiagonallyDominant when ||g||_1 >= 1.
    """
    if not f.terms:
        raise NotDiagonallyDominant("f = 0 has no inverse")
    gamma0, c0 = max(sorted(f.terms.items()), key=lambda t: abs(t[1]))
    c0 = float(c0)
    rest = f.l1() - abs(c0)
    gnorm = rest / abs(c0)
    if gnorm >= 1:
        msg = f"not lopsided: dominant |c0| = {abs(c0):g} but the remaining mass is {rest:g}"
        if f.group.is_heisenberg:
            msg += (
                "; for |a1|+|a2|+|a3| + a1 u1 + a2 u2 + a3 u3 expansivity holds iff a1*a2 != 0 and a3 > 0"
                " (asserted, not numerically certified here)"
            )
        raise NotDiagonallyDominant(msg)
    # g = 1 - c0^-1 gamma0^-1 f
    shifted = RingElement.monomial(f.group, inv_exp(f.group, gamma0), 1.0 / c0, exact=False) * f.to_float()
    g = RingElement.one(f.group, exact=False) - shifted
    g = RingElement._raw(f.group, {k: v for k, v in g.terms.items() if abs(v) > 1e-15}, False)
    return c0, gamma0, g, gnorm


def neumann_inverse(f: RingElement, tol: float = 1e-10, max_terms: int = 10_000, prune_tol: float = 0.0) -> TruncatedSeries:
    """Truncation of (f*)^-1 = c0^-1 gamma0 sum_j (g*)^j for lopsided f.

    The number of terms J is the least with tail |c0|^-1 ||g||^(J+1) / (1 - ||g||) <= tol
    (capped at max_terms).  Coefficients below prune_tol are dropped from each power,
    and the propagated effect of those drops is added to the budget.
    """
    c0, gamma0, g, gnorm = lopsided_split(f)
    group = f.group
    if gnorm == 0:
        J = 0
    else:
        J = 0
        while J < max_terms and gnorm ** (J + 1) / ((1 - gnorm) * abs(c0)) > tol:
            J += 1
    tail = 0.0 if gnorm == 0 else gnorm ** (J + 1) / ((1 - gnorm) * abs(c0))
    gstar = g.adjoint()
    power = RingElement.one(group, exact=False)
    total = dict(power.terms)
    err_power, err_sum = 0.0, 0.0
    for _ in range(J):
        power = power * gstar
        if prune_tol > 0:
            kept = {k: v for k, v in power.terms.items() if abs(v) >= prune_tol}
            dropped = sum(abs(v) for k, v in power.terms.items() if abs(v) < prune_tol)
            power = RingElement._raw(group, kept, False)
        else:
            dropped = 0.0
        # error of the pruned power against the true power
        err_power = err_power * gnorm + dropped
        err_sum += err_power
        for k, v in power.terms.items():
            total[k] = total.get(k, 0.0) + v
    w = RingElement.monomial(group, gamma0, 1.0 / c0, exact=False) * RingElement._raw(
        group, {k: v for k, v in total.items() if v != 0}, False
    )
    budget = tail + err_sum / abs(c0)
    note = {
        "series": "neumann",
        "terms": J,
        "g_l1": gnorm,
        "c0": c0,
        "gamma0": list(gamma0),
        "tail_bound": tail,
        "prune_tol": prune_tol,
    }
    return TruncatedSeries(w, budget, note, certified=True)


def inverse_residual(w: RingElement, f: RingElement) -> float:
    """||w f* - 1||_1."""
    return (w * f.adjoint().to_float() - RingElement.one(f.group, exact=False)).l1()


# ---------------------------------------------------------------- unitary variety


def _torus_values(f: RingElement, thetas: list[np.ndarray]) -> np.ndarray:
    out = 0
    for g, c in f.terms.items():
        phase = sum(e * t for e, t in zip(g, thetas))
        out = out + float(c) * np.exp(1j * phase)
    return out


def unitary_variety_min(f: RingElement, points: int | None = None) -> tuple[float, tuple[float, ...]]:
    """Minimum of |f| over the unit torus: grid scan, then local descent from the best grid point.

    Angles are returned in radians in [0, 2 pi).
    """
    group = f.group
    if group.is_heisenberg or group.d > 3:
        raise ValueError("unitary_variety_min needs Z^d with d <= 3")
    d = group.d
    if points is None:
        points = 2**10 if d <= 2 else 2**7
    axis = 2 * np.pi * np.arange(points) / points
    grids = np.meshgrid(*([axis] * d), indexing="ij", sparse=True)
    vals = np.abs(_torus_values(f, list(grids)))
    idx = np.unravel_index(int(np.argmin(vals)), vals.shape)
    start = np.array([axis[i] for i in idx])

    def obj(th):
        return float(abs(_torus_values(f, list(th))) ** 2)

    res = minimize(obj, start, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-24, "maxiter": 4000})
    best, arg = float(vals[idx]), start
    if math.sqrt(max(res.fun, 0.0)) < best:
        best, arg = math.sqrt(max(res.fun, 0.0)), res.x
    arg = tuple(float(a % (2 * np.pi)) for a in arg)
    return best, arg


# ---------------------------------------------------------------- Green's functions


def _check_walk(p: RingElement) -> None:
    group = p.group
    if not group.is_heisenberg and group.d <= 2:
        raise HypothesisNotMet(f"the random walk on {group} is recurrent; a Green's function needs a transient group")
    coeffs = [float(c) for c in p.terms.values()]
    if any(c < 0 for c in coeffs) or abs(sum(coeffs) - 1) > 1e-12:
        raise ValueError("p must be a probability vector (nonnegative, summing to 1)")
    if not p.to_float().allclose(p.adjoint().to_float(), 1e-14):
        raise ValueError("p must be symmetric (p = p*)")


def _walk_step(p: RingElement, window: Window):
    """x -> (x p) restricted to the Dirichlet domain, on arrays over the window box."""
    domain = interior(window, list(p.terms) + [window.group.identity])
    if domain.is_empty():
        raise WindowTooSmall("window has no interior for this walk")
    mask = domain.full_mask()
    # (x p)[d] = sum_s p_s x[d s^-1] = sum_s p_s x[d s] for symmetric p
    terms = [(s, float(c)) for s, c in sorted(p.terms.items())]

    def step(x: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(x)
        for s, c in terms:
            acc += c * translate_values(window.group, window.lo, x, s, "right", 0.0)
        acc[~mask] = 0.0
        return acc

    return domain, step


def green_function(
    p: RingElement, window: Window, method: str = "relaxation", tol: float = 1e-10, max_iter: int = 100_000
) -> TruncatedSeries:
    """Green's function of p with zero values outside the window's interior.

    "series" sums the killed walk p^j started at the identity until the next term
    is below tol in sup norm; "relaxation" solves x - (x p)|D = delta by conjugate
    gradients (the operator is symmetric positive definite for symmetric p).
    The value is a GridElement over the window's bounding box.  Its distance to the
    infinite-volume Green's function is not bounded here (on H it is not even in l1),
    so l1_error is infinite; use window doubling to gauge truncation.
    """
    _check_walk(p)
    ident = window.group.identity
    if ident not in window:
        raise WindowTooSmall("window must contain the identity")
    domain, step = _walk_step(p, window)
    delta = np.zeros(window.shape)
    delta[window.index_of(ident)] = 1.0
    if ident not in domain:
        raise WindowTooSmall("identity is not in the window interior")
    if method == "series":
        term = delta.copy()
        total = delta.copy()
        it = 0
        while it < max_iter:
            term = step(term)
            it += 1
            if np.abs(term).max() < tol:
                break
            total += term
        resid = float(np.abs(term).max())
    elif method == "relaxation":
        shape = window.shape
        n = int(np.prod(shape))

        def matvec(v):
            x = v.reshape(shape)
            return (x - step(x)).ravel()

        op = LinearOperator((n, n), matvec=matvec, dtype=float)
        counter = [0]

        def cb(_):
            counter[0] += 1

        sol, info = cg(op, delta.ravel(), rtol=0.0, atol=tol, maxiter=max_iter, callback=cb)
        total = sol.reshape(shape)
        total[~domain.full_mask()] = 0.0
        it = counter[0]
        resid = float(np.abs(matvec(total.ravel()) - delta.ravel()).max())
        if info != 0:
            raise LemmaViolation(f"conjugate gradients did not converge (info={info})")
    else:
        raise ValueError("method must be 'series' or 'relaxation'")
    note = {
        "series": "green",
        "method": method,
        "iterations": it,
        "residual_sup": resid,
        "window": {"lo": list(window.lo), "hi": list(window.hi)},
        "value_at_identity": float(total[window.index_of(ident)]),
    }
    return TruncatedSeries(GridElement(window.group, window.lo, total), math.inf, note, certified=False)


def z3_green_oracle() -> float:
    """Expected returns of simple random walk on Z^3 to the origin, by quadrature.

    Uses G(0) = int_0^inf exp(-t) I0(t/3)^3 dt, the Laplace-transform form of the
    Fourier integral over the 3-torus.
    """
    from scipy.integrate import quad
    from scipy.special import i0e

    val, _ = quad(lambda t: i0e(t / 3.0) ** 3, 0.0, np.inf, limit=500, epsabs=1e-13, epsrel=1e-12)
    return float(val)


def window_doubling(p: RingElement, radii, method: str = "relaxation", tol: float = 1e-10, z_radius=None) -> list[dict]:
    """Green's function at the identity on a sequence of box windows, with successive deltas."""
    rows, prev = [], None
    for n in radii:
        zr = None if z_radius is None else z_radius(n)
        w = green_function(p, box(p.group, n, zr), method, tol)
        v = w.note["value_at_identity"]
        rows.append({"radius": n, "value": v, "delta": None if prev is None else v - prev})
        prev = v
    return rows


def ball_masses(grid: GridElement, radii) -> list[float]:
    """l1 mass of grid over box(r) (z-radius r^2 on H) for each r."""
    out = []
    for r in radii:
        if grid.group.is_heisenberg:
            lo, hi = (-r, -r, -r * r), (r, r, r * r)
        else:
            lo, hi = (-r,) * grid.group.d, (r,) * grid.group.d
        kept, _ = grid.crop(lo, hi)
        out.append(kept.l1())
    return out


@dataclass
class SeriesDiagnostics:
    index: list[int]
    norms: list[float]
    increments: list[float]
    slope: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(v < 0 for v in self.norms):
            raise ValueError("per-term norms must be nonnegative")

    def to_json(self) -> dict:
        return {
            "index": list(self.index),
            "norms": list(self.norms),
            "increments": list(self.increments),
            "slope": self.slope,
            **self.extra,
        }


HEISENBERG_WALK = RingElement(
    HEISENBERG, {(0, 1, 0): 0.25, (0, -1, 0): 0.25, (1, 0, 0): 0.25, (-1, 0, 0): 0.25}, exact=False
)


def cube_of_central_difference() -> RingElement:
    """(1 - u3)^3 = 1 - 3 u3 + 3 u3^2 - u3^3."""
    return RingElement(HEISENBERG, {(0, 0, 0): 1, (0, 0, 1): -3, (0, 0, 2): 3, (0, 0, 3): -1})


def heisenberg_green_increments(radius: int = 20, radii=None, tol: float = 1e-10) -> SeriesDiagnostics:
    """Partial l1 masses over box(r) of omega and of (1 - u3)^3 omega on H.

    omega is the Dirichlet Green's function on box(radius).  Only radii well inside
    the window are meaningful; the default range stops three sites short of a
    third of the way in from the edge.
    """
    if radii is None:
        radii = list(range(1, int(radius * 0.7) + 1))
    w = green_function(HEISENBERG_WALK, box(HEISENBERG, radius), "relaxation", tol)
    omega = w.value
    cubed = omega.multiply(cube_of_central_difference())
    raw = ball_masses(omega, radii)
    mass = ball_masses(cubed, radii)
    inc = list(np.diff(mass))
    raw_inc = list(np.diff(raw))
    ratios = [b / a if a > 0 else math.inf for a, b in zip(inc, inc[1:])]
    return SeriesDiagnostics(
        list(radii),
        mass,
        [float(v) for v in inc],
        None,
        {
            "raw_masses": raw,
            "raw_increments": [float(v) for v in raw_inc],
            "increment_ratios": [float(v) for v in ratios],
            "window_radius": radius,
            "residual_sup": w.note["residual_sup"],
        },
    )


# ---------------------------------------------------------------- Heisenberg homoclinic point


def p4_u3_coefficient() -> tuple[int, int]:
    """(number of length-4 words in u1^+-1, u2^+-1 equal to u3, total words)."""
    steps = [(0, 1, 0), (0, -1, 0), (1, 0, 0), (-1, 0, 0)]
    hits = 0
    for word in itertools.product(steps, repeat=4):
        g = (0, 0, 0)
        for s in word:
            g = mul_exp(HEISENBERG, g, s)
        hits += g == (0, 0, 1)
    return hits, 4**4


def heisenberg_homoclinic(
    J: int = 64, radius: int = 24, z_radius: int | None = None, checkpoints=None
) -> TruncatedSeries:
    """b_J = 1/4 sum_{j<=J} p^j (1 - u3)^3 on H, cropped to box(radius, z_radius).

    f b_J - (1 - u3)^3 is reported in l1 at each checkpoint J' <= J, along with the
    l1 norms of the individual terms 1/4 p^j (1 - u3)^3.  l1_error holds the l1
    mass lost to cropping, which bounds the distance to the uncropped b_J; the
    remaining distance to the limit is estimated from a power-law fit of the
    term norms and recorded in the note.
    """
    if J < 0:
        raise ValueError("J must be nonnegative")
    zr = radius * radius if z_radius is None else z_radius
    lo, hi = (-radius, -radius, -zr), (radius, radius, zr)
    if radius < 2 or zr < 4:
        raise WindowTooSmall("window too small for the support of (1 - u3)^3")
    if checkpoints is None:
        checkpoints = sorted({0, J} | {j for j in (8, 16, 32, 64) if j <= J})
    checkpoints = set(checkpoints)
    p = HEISENBERG_WALK
    cube = cube_of_central_difference().to_float()
    f = RingElement(HEISENBERG, {(0, 0, 0): 4, (0, 1, 0): -1, (0, -1, 0): -1, (1, 0, 0): -1, (-1, 0, 0): -1})
    target = GridElement.from_ring(cube)
    power = GridElement.from_ring(RingElement.one(HEISENBERG, exact=False))
    total = power.copy()
    crop_loss = 0.0
    residuals, term_norms = {}, []

    def record(j):
        b = total.multiply(cube).scale(0.25)
        residuals[j] = (b.multiply(f) - target).l1()
        return b

    term_norms.append(power.multiply(cube).scale(0.25).l1())
    b = record(0) if 0 in checkpoints else None
    for j in range(1, J + 1):
        power, lost = power.multiply(p).crop(lo, hi)
        crop_loss += lost
        total = total + power
        term_norms.append(power.multiply(cube).scale(0.25).l1())
        if j in checkpoints:
            b = record(j)
    if b is None or J not in residuals:
        b = record(J)
    # each dropped unit of walk mass costs at most 8/4 in b
    budget = 2.0 * crop_loss
    tail = _power_tail(term_norms, J)
    note = {
        "series": "heisenberg_homoclinic",
        "J": J,
        "window": {"lo": list(lo), "hi": list(hi)},
        "residuals": {str(k): residuals[k] for k in sorted(residuals)},
        "term_norms": term_norms,
        "crop_loss": crop_loss,
        "tail_estimate": tail,
    }
    return TruncatedSeries(b, budget, note, certified=False)


def _power_tail(norms: list[float], J: int) -> float | None:
    """Estimate sum_{j>J} a_j from a power-law fit over the second half of a_1..a_J."""
    js = np.arange(max(1, J // 2), J + 1)
    vals = np.array([norms[j] for j in js])
    if len(js) < 3 or np.any(vals <= 0):
        return None
    slope, icept = np.polyfit(np.log(js), np.log(vals), 1)
    if slope >= -1:
        return math.inf
    # sum_{j>J} C j^s  <=  C J^(s+1) / (-(s+1))
    return float(math.exp(icept) * J ** (slope + 1) / (-(slope + 1)))


# ---------------------------------------------------------------- phi_k


def _phi_low_coefficients(c, k):
    """Coefficients of x^0, x^1, x^2 in phi_k(x) = (c - x)^3 sum_m binom(m+k, k) x^m."""
    return (
        c**3,
        c**3 * (k + 1) - 3 * c**2,
        c**3 * (k + 1) * (k + 2) / 2 - 3 * c**2 * (k + 1) + 3 * c,
    )


def _binom_tail_bound(k: int, x: float, n0: int) -> float:
    """Upper bound for sum_{n >= n0} binom(n+k, k) x^n (infinite if the ratio test fails at n0)."""
    rho = x * (n0 + k + 1) / (n0 + 1)
    if rho >= 1:
        return math.inf
    log_first = gammaln(n0 + k + 1) - gammaln(k + 1) - gammaln(n0 + 1) + (n0 * math.log(x) if x > 0 else -math.inf)
    return math.exp(log_first) / (1 - rho)


def phi_abs_series(c: float, k: int, x: float | None = None, scale: float = 1.0, rtol: float = 1e-17):
    """scale^k |phi_k|(x) by direct summation in double precision.

    Returns (value, tail_bound) where tail_bound bounds the omitted terms.
    """
    x = c if x is None else x
    if x == 0:
        return scale**k * c**3, 0.0
    low = _phi_low_coefficients(c, k)
    logscale = k * math.log(scale) if scale > 0 else -math.inf
    head = sum(abs(v) * x**i for i, v in enumerate(low))
    peak = x * k / (1 - x)
    M = int(peak + 40 * math.sqrt(k + 1) + 60)
    while True:
        m = np.arange(M + 1, dtype=float)
        logB = gammaln(m + k + 1) - gammaln(k + 1) - gammaln(m + 1)
        g = np.abs(comb.gk_factored(c, k, m)) / ((m + 1) * (m + 2) * (m + 3))
        body = float(np.sum(np.exp(logB + (m + 3) * math.log(x) + logscale) * g))
        total = head * math.exp(logscale) + body
        # |b_{k,m}| <= (1+c)^3 binom(m+3+k, k), so the rest is a binomial tail from n = M+4
        tail = (1 + c) ** 3 * _binom_tail_bound(k, x, M + 4) * math.exp(logscale)
        if tail <= rtol * total or M > 50 * (k + 100):
            return total, tail
        M *= 2


def phi_k_direct(c, k: int, x=None, dps: int = 40):
    """(1 - c)^k |phi_k|(x) by direct summation of |b_{k,m}| x^(m+3) at high precision.

    Summation stops once a geometric tail bound is below 10^-(dps-5) of the sum.
    """
    with mp.workdps(dps):
        c = mp.mpf(c)
        x = c if x is None else mp.mpf(x)
        if x == 0:
            return (1 - c) ** k * c**3
        low = _phi_low_coefficients(c, k)
        total = sum(abs(v) * x**i for i, v in enumerate(low))
        B = [mp.mpf(1), mp.mpf(k + 1), mp.mpf(k + 1) * (k + 2) / 2, mp.mpf(k + 1) * (k + 2) * (k + 3) / 6]
        xp = x**3
        eps = mp.mpf(10) ** (-(dps - 5))
        m = 0
        while True:
            b = -B[0] + 3 * c * B[1] - 3 * c**2 * B[2] + c**3 * B[3]
            total += abs(b) * xp
            xp *= x
            m += 1
            B = B[1:] + [B[3] * (m + 3 + k) / (m + 3)]
            rho = x * (m + 4 + k) / (m + 4)
            if rho < 1:
                tail = (1 + c) ** 3 * B[3] * xp / (1 - rho)
                if tail < eps * total:
                    break
        return (1 - c) ** k * total


def _fk(c, k, m):
    return (
        c**m * mp.binomial(m + k, k)
        - 2 * c ** (m + 1) * mp.binomial(m + k + 1, k)
        + c ** (m + 2) * mp.binomial(m + k + 2, k)
    )


def phi_k_closed_form_applies(c: float, k: int) -> bool:
    low = _phi_low_coefficients(c, k)
    return k >= comb.kc_cached(c) and low[1] > 0 and low[2] > 0


def phi_k_closed(c: float, k: int, dps: int = 40):
    """(1 - c)^k |phi_k|(c) = 2 c^3 (h(m1+1) - h(m2) + h(m3+1)) with h = (1-c)^k f_k.

    m1, m3 are floors and m2 the ceiling of the three roots of g_k.
    """
    if not phi_k_closed_form_applies(c, k):
        raise ValueError(f"closed form needs k >= k_c and positive low coefficients (c={c}, k={k})")
    rep = comb.gk_roots(c, k)
    t1, t2, t3 = rep.roots
    m1, m2, m3 = math.floor(t1), math.ceil(t2), math.floor(t3)
    with mp.workdps(dps):
        cc = mp.mpf(c)
        val = 2 * cc**3 * (_fk(cc, k, m1 + 1) - _fk(cc, k, m2) + _fk(cc, k, m3 + 1))
        return (1 - cc) ** k * val


def phi_k_abs(c: float, k: int, method: str = "auto") -> float:
    """(1 - c)^k |phi_k|(c): closed form when it applies, direct summation otherwise."""
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    if method == "direct" or (method == "auto" and not phi_k_closed_form_applies(c, k)):
        return float(phi_k_direct(c, k))
    return float(phi_k_closed(c, k))


def loglog_slope(ks, values) -> float:
    ks = np.asarray(ks, dtype=float)
    vals = np.asarray(values, dtype=float)
    return float(np.polyfit(np.log(ks), np.log(vals), 1)[0])


def decay_slope(c: float, k_min: int = 100, k_max: int = 1000, points: int = 20, method: str = "auto") -> SeriesDiagnostics:
    if k_min < 1 or k_max <= k_min:
        raise ValueError("need 1 <= k_min < k_max")
    ks = sorted({int(round(v)) for v in np.logspace(math.log10(k_min), math.log10(k_max), points)})
    vals = [phi_k_abs(c, k, method) for k in ks]
    inc = [abs(b - a) for a, b in zip(vals, vals[1:])]
    return SeriesDiagnostics(ks, vals, inc, loglog_slope(ks, vals), {"c": c, "k_c": comb.kc_cached(c)})


# ---------------------------------------------------------------- cubic multiplier


def phi_coefficients(c: float, k: int, N: int) -> np.ndarray:
    """Coefficients lambda_0..lambda_N of phi_k (doubles; the low three exactly as written)."""
    out = np.zeros(N + 1)
    low = _phi_low_coefficients(c, k)
    for i in range(min(3, N + 1)):
        out[i] = low[i]
    if N >= 3:
        m = np.arange(N - 2, dtype=float)
        logB = gammaln(m + k + 1) - gammaln(k + 1) - gammaln(m + 1)
        out[3:] = np.exp(logB) * comb.gk_factored(c, k, m) / ((m + 1) * (m + 2) * (m + 3))
    return out


def phi_truncation(c: float, k: int, x: float, tol: float) -> tuple[int, float]:
    """Least N with sum_{n>N} |lambda_n| x^n bounded by tol; returns (N, bound)."""
    if x == 0:
        return 0, 0.0
    N = 2
    while True:
        # terms n > N are b_{k,m} x^(m+3) with m >= N-2 and |b_{k,m}| <= (1+c)^3 binom(m+3+k, k)
        bound = (1 + c) ** 3 * _binom_tail_bound(k, x, N + 1)
        if bound <= tol:
            return N, bound
        N += 1
        if N > 100_000:
            raise ValueError("phi_k series does not truncate; is ||q||_1 < 1?")


def _grid_zero(group: GroupDescriptor) -> GridElement:
    return GridElement(group, group.identity, np.zeros((1,) * group.rank))


def cubic_multiplier(
    q: RingElement,
    r: RingElement,
    c: float,
    K: int = 12,
    prune_tol: float = 1e-12,
    window: Window | None = None,
    tail_terms: int = 4000,
) -> TruncatedSeries:
    """Partial sum a_K = sum_{k<=K} r^k phi_k(q) with phi_k(x) = (c - x)^3 (1 - x)^-(k+1).

    Each phi_k(q) is expanded in powers of q and truncated once its tail bound is
    below prune_tol.  Powers of r are cropped to ``window`` when one is given.
    l1_error adds up: series truncation tails, crop losses propagated through the
    products, and sum_{k>K} ||r||^k |phi_k|(||q||) (summed directly to K + tail_terms,
    then extrapolated with the k^-3/2 law, which makes the budget heuristic).
    The note records both residuals a(1-q-r) - (c-q)^3 and (1-q-r)a - (c-q)^3.
    """
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    nq, nr = q.l1(), r.l1()
    slack = 1e-12
    if nq > c + slack:
        raise ValueError(f"||q||_1 = {nq} exceeds c = {c}")
    if nr > 1 - c + slack:
        raise ValueError(f"||r||_1 = {nr} exceeds 1 - c = {1 - c}")
    if not commutes(q, r):
        raise ValueError("q and r must commute")
    group = q.group
    qf, rf = q.to_float(), r.to_float()
    one = RingElement.one(group, exact=False)

    def crop(g: GridElement) -> tuple[GridElement, float]:
        if window is None:
            return g, 0.0
        return g.crop_window(window)

    # q^n as grids, extended on demand
    qpow = [GridElement.from_ring(one)]
    qpow_err = [0.0]

    def q_power(n):
        while len(qpow) <= n:
            nxt, lost = crop(qpow[-1].multiply(qf))
            qpow.append(nxt)
            qpow_err.append(qpow_err[-1] * nq + lost)
        return qpow[n], qpow_err[n]

    rk = GridElement.from_ring(one)
    rk_err = 0.0
    total = _grid_zero(group)
    budget = 0.0
    truncations = []
    for k in range(K + 1):
        if k > 0:
            rk, lost = crop(rk.multiply(rf))
            rk_err = rk_err * nr + lost
        N, tail = phi_truncation(c, k, nq, prune_tol)
        lam = phi_coefficients(c, k, N)
        phi_grid = _grid_zero(group)
        phi_err = 0.0
        for n, coef in enumerate(lam):
            if coef == 0:
                continue
            g, e = q_power(n)
            phi_grid = phi_grid + g.scale(coef)
            phi_err += abs(coef) * e
        phi_abs = float(np.sum(np.abs(lam) * nq ** np.arange(N + 1))) + tail
        term, lost = crop(rk.multiply(phi_grid.to_ring()))
        total = total + term
        # ||r^k phi - computed|| <= ||r||^k (tail + phi_err) + rk_err |phi|(||q||) + crop loss
        budget += nr**k * (tail + phi_err) + rk_err * phi_abs + lost
        truncations.append(N)
    beyond, beyond_note = _multiplier_tail(c, K, nq, nr, tail_terms)
    budget += beyond
    total = total.trim()
    target = (RingElement.monomial(group, group.identity, c, exact=False) - qf) ** 3
    factor = one - qf - rf
    tgrid = GridElement.from_ring(target)
    res_right = (total.multiply(factor, "right") - tgrid).l1()
    res_left = (total.multiply(factor, "left") - tgrid).l1()
    note = {
        "series": "cubic_multiplier",
        "K": K,
        "c": c,
        "prune_tol": prune_tol,
        "q_l1": nq,
        "r_l1": nr,
        "truncation_orders": truncations,
        "beyond_K": beyond_note,
        "residual_right": res_right,
        "residual_left": res_left,
    }
    if window is not None:
        note["window"] = {"lo": list(window.lo), "hi": list(window.hi)}
    return TruncatedSeries(total, budget, note, certified=beyond_note["certified"])


def _multiplier_tail(c: float, K: int, nq: float, nr: float, terms: int) -> tuple[float, dict]:
    """Bound sum_{k>K} nr^k |phi_k|(nq)."""
    if nr == 0:
        return 0.0, {"sum": 0.0, "certified": True}
    if nq == 0:
        return c**3 * nr ** (K + 1) / (1 - nr), {"sum": c**3 * nr ** (K + 1) / (1 - nr), "certified": True}
    ks = range(K + 1, K + 1 + terms)
    vals = [sum(phi_abs_series(c, k, nq, nr)) for k in ks]
    direct = float(sum(vals))
    # geometric regime when nr/(1-c) or nq/c are strictly below 1; otherwise k^-3/2
    last = np.array(vals[-terms // 4:])
    kk = np.arange(K + 1 + terms - len(last), K + 1 + terms)
    kmax = K + terms
    if not np.any(last > 0):
        # underflowed: the terms decay geometrically, so the rest is below double precision
        slope, extra = -math.inf, 0.0
    elif np.all(last > 0):
        slope = loglog_slope(kk, last)
        if slope < -1:
            log_c = float(np.mean(np.log(last) - slope * np.log(kk)))
            extra = math.exp(log_c + (slope + 1) * math.log(kmax) - math.log(-(slope + 1)))
        else:
            extra = math.inf
    else:
        slope, extra = -math.inf, float(last[last > 0][0]) * len(last)
    return direct + extra, {"sum": direct, "extrapolated": extra, "slope": slope, "terms": terms, "certified": False}
