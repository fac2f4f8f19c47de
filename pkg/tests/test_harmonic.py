import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from principal_actions import harmonic as hm
from principal_actions.errors import HypothesisNotMet, NotDiagonallyDominant, WindowTooSmall
from principal_actions.expr import parse_poly
from principal_actions.groups import HEISENBERG, Lattice, box
from principal_actions.ring import RingElement

H = HEISENBERG


# ---------------------------------------------------------------- well-balanced


def test_heisenberg_laplacian_is_well_balanced():
    chk = hm.check_well_balanced(parse_poly("4 - u1 - u1^-1 - u2 - u2^-1", H))
    assert chk.overall and chk.notes == []


def test_lattice_laplacian_flags_recurrence():
    chk = hm.check_well_balanced(parse_poly("4 - u1 - u1^-1 - u2 - u2^-1"))
    assert chk.overall and "recurrent" in chk.notes[0]


@pytest.mark.parametrize(
    "text, field",
    [("1 - u1", "symmetric"), ("3 - u1 - u1^-1", "sums_to_zero"), ("2 - u1 - u1^-1", "support_generates")],
)
def test_well_balanced_failures(text, field):
    chk = hm.check_well_balanced(parse_poly(text, "z2"))
    assert not getattr(chk, field) and not chk.overall


def test_generates_box():
    assert hm.generates_box(H, [(0, 1, 0), (1, 0, 0)], 3)
    assert not hm.generates_box(Lattice(2), [(2, 0), (0, 1)], 3)


# ---------------------------------------------------------------- Neumann inverse


def test_inverse_of_three_minus_u_matches_closed_form():
    # 3 - u - 1/u = (1 - r u)(1 - r/u)/r with r = (3 - sqrt 5)/2, inverse r^|n| / sqrt 5
    f = parse_poly("3 - u - u^-1")
    w = hm.neumann_inverse(f, tol=1e-13)
    r = (3 - math.sqrt(5)) / 2
    for n in range(-10, 11):
        assert w.value.coefficient((n,)) == pytest.approx(r ** abs(n) / math.sqrt(5), abs=1e-12)
    assert w.l1_error <= 1e-13 and w.certified
    assert hm.inverse_residual(w.value, f) < 1e-12


def lopsided(group):
    gens = st.tuples(*[st.integers(-1, 1)] * group.rank)
    return st.tuples(
        st.integers(4, 9), st.dictionaries(gens, st.integers(-1, 1), max_size=3)
    ).map(lambda t: RingElement(group, {**{k: v for k, v in t[1].items() if k != group.identity}, group.identity: t[0]}))


@settings(max_examples=25)
@given(lopsided(H))
def test_neumann_residual_within_budget(f):
    w = hm.neumann_inverse(f, tol=1e-9)
    # || w f* - 1 || <= || w - true || * ||f||_1
    assert hm.inverse_residual(w.value, f) <= w.l1_error * f.l1() + 1e-12


@settings(max_examples=20)
@given(lopsided(Lattice(2)), st.sampled_from([1e-6, 1e-8]))
def test_pruned_inverse_budget(f, prune):
    w = hm.neumann_inverse(f, tol=1e-10, prune_tol=prune)
    exact = hm.neumann_inverse(f, tol=1e-14)
    assert (w.value - exact.value).l1() <= w.l1_error + exact.l1_error + 1e-12


def test_non_lopsided_heisenberg_message():
    with pytest.raises(NotDiagonallyDominant, match="a3 > 0"):
        hm.neumann_inverse(parse_poly("3 + u1 + u2 + u3", H))
    with pytest.raises(NotDiagonallyDominant):
        hm.neumann_inverse(parse_poly("1 - u1 - u2"))


def test_dominant_off_identity_term():
    f = parse_poly("u^2 * (5 - u)")
    w = hm.neumann_inverse(f, tol=1e-12)
    assert hm.inverse_residual(w.value, f) < 1e-11


# ---------------------------------------------------------------- unitary variety


def test_unitary_variety_of_one_minus_x_minus_y_touches_zero():
    val, (a, b) = hm.unitary_variety_min(parse_poly("1 - u1 - u2"))
    assert val < 1e-8
    assert abs(1 - np.exp(1j * a) - np.exp(1j * b)) < 1e-8


def test_unitary_variety_min_of_expansive():
    val, _ = hm.unitary_variety_min(parse_poly("3 - u - u^-1"))
    assert val == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------- Green's functions


def z3_walk():
    return RingElement(Lattice(3), {g: 1 / 6 for g in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]}, exact=False)


def test_z3_oracle_is_watson_value():
    # Watson's integral: 1.516386059151978...
    assert hm.z3_green_oracle() == pytest.approx(1.516386059151978, abs=1e-10)


def test_green_routes_agree():
    w = box(Lattice(3), 5)
    a = hm.green_function(z3_walk(), w, "relaxation", 1e-12)
    b = hm.green_function(z3_walk(), w, "series", 1e-13)
    assert np.abs(a.value.arr - b.value.arr).max() < 1e-9
    assert a.l1_error == math.inf and not a.certified


def test_green_solves_dirichlet_problem():
    p = z3_walk()
    w = box(Lattice(3), 4)
    g = hm.green_function(p, w, tol=1e-12)
    assert g.note["residual_sup"] < 1e-10
    omega = g.value.arr
    assert omega.min() >= -1e-12
    # harmonic off the identity in the interior
    ring = g.value.to_ring()
    lap = ring - ring * p
    assert lap.coefficient((0, 0, 0)) == pytest.approx(1.0, abs=1e-9)
    assert lap.coefficient((1, 1, 0)) == pytest.approx(0.0, abs=1e-9)


def test_window_doubling_increases_towards_oracle():
    rows = hm.window_doubling(z3_walk(), [3, 6, 12])
    vals = [r["value"] for r in rows]
    assert vals[0] < vals[1] < vals[2] < hm.z3_green_oracle()


def test_recurrent_walk_refused():
    p = RingElement(Lattice(2), {(1, 0): 0.25, (-1, 0): 0.25, (0, 1): 0.25, (0, -1): 0.25}, exact=False)
    with pytest.raises(HypothesisNotMet):
        hm.green_function(p, box(Lattice(2), 5))


def test_non_probability_walk_refused():
    p = RingElement(Lattice(3), {(1, 0, 0): 0.5, (0, 1, 0): 0.5}, exact=False)
    with pytest.raises(ValueError):
        hm.green_function(p, box(Lattice(3), 3))


def test_heisenberg_green_is_positive_and_harmonic():
    g = hm.green_function(hm.HEISENBERG_WALK, box(H, 6), tol=1e-12)
    ring = g.value.to_ring(1e-14)
    assert min(ring.terms.values()) > 0
    lap = ring - ring * hm.HEISENBERG_WALK
    assert lap.coefficient((0, 0, 0)) == pytest.approx(1.0, abs=1e-9)
    for site in [(1, 0, 0), (0, 1, 2), (-2, 1, -3)]:
        assert lap.coefficient(site) == pytest.approx(0.0, abs=1e-9)


# ---------------------------------------------------------------- Heisenberg homoclinic point


def test_p4_u3_coefficient():
    assert hm.p4_u3_coefficient() == (4, 256)
    p4 = hm.HEISENBERG_WALK**4
    assert p4.coefficient((0, 0, 1)) == pytest.approx(1 / 64)


def test_homoclinic_residual_is_walk_tail():
    """f b_J - (1 - u3)^3 = -p^(J+1) (1 - u3)^3, computed here with sparse products."""
    b = hm.heisenberg_homoclinic(J=4, radius=10, z_radius=100)
    cube = hm.cube_of_central_difference().to_float()
    p = hm.HEISENBERG_WALK
    tail = (p**5 * cube).l1()
    assert b.note["residuals"]["4"] == pytest.approx(tail, rel=1e-10)
    assert b.note["crop_loss"] == 0.0
    assert b.note["residuals"]["0"] == pytest.approx(8.0)


def test_homoclinic_residuals_decrease():
    b = hm.heisenberg_homoclinic(J=16, radius=12, z_radius=150)
    res = [b.note["residuals"][k] for k in ("0", "8", "16")]
    assert res[0] > res[1] > res[2]
    assert b.value.l1() > 0


def test_homoclinic_window_too_small():
    with pytest.raises(WindowTooSmall):
        hm.heisenberg_homoclinic(J=2, radius=1)


# ---------------------------------------------------------------- phi_k


def test_phi_coefficients_match_exact_expansion():
    c, k, N = Fraction(1, 4), 3, 12
    # (c - x)^3 * sum_m C(m+k, k) x^m, multiplied out with exact fractions
    cube = [c**3, -3 * c**2, 3 * c, Fraction(-1)]
    series = [Fraction(math.comb(m + k, k)) for m in range(N + 1)]
    exact = [sum(cube[i] * series[n - i] for i in range(4) if 0 <= n - i) for n in range(N + 1)]
    got = hm.phi_coefficients(0.25, k, N)
    for a, b in zip(got, exact):
        assert a == pytest.approx(float(b), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("c, k", [(0.25, 150), (0.5, 40), (0.5, 400), (0.1, 1500)])
def test_closed_form_matches_direct_sum(c, k):
    closed = hm.phi_k_closed(c, k)
    direct = hm.phi_k_direct(c, k)
    assert abs(closed - direct) <= 1e-9 * abs(direct)


@pytest.mark.parametrize("c, k", [(0.25, 3), (0.5, 60), (0.3, 200)])
def test_double_precision_sum_matches_mp(c, k):
    val, tail = hm.phi_abs_series(c, k, c, 1 - c)
    assert val == pytest.approx(float(hm.phi_k_direct(c, k)), rel=1e-12)
    assert tail <= 1e-15 * val


def test_closed_form_domain():
    assert not hm.phi_k_closed_form_applies(0.25, 1)
    with pytest.raises(ValueError):
        hm.phi_k_closed(0.25, 1)


def test_decay_slope_short_range():
    diag = hm.decay_slope(0.5, 100, 300, points=6)
    assert -1.7 <= diag.slope <= -1.3


@settings(max_examples=20)
@given(st.floats(0.05, 0.9), st.integers(0, 30), st.floats(1e-12, 1e-4))
def test_truncation_bound_holds(c, k, tol):
    x = 0.9 * c
    N, bound = hm.phi_truncation(c, k, x, tol)
    assert bound <= tol
    lam = hm.phi_coefficients(c, k, N + 400)
    actual = float(np.sum(np.abs(lam[N + 1:]) * x ** np.arange(N + 1, N + 401)))
    assert actual <= bound * (1 + 1e-9) + 1e-300


# ---------------------------------------------------------------- cubic multiplier


def test_multiplier_scalar_control_is_exact():
    q = RingElement.monomial(Lattice(1), (1,), 0.3, exact=False)
    a = hm.cubic_multiplier(q, RingElement.zero(Lattice(1), exact=False), 0.3, K=5, prune_tol=1e-13)
    assert max(a.note["residual_right"], a.note["residual_left"]) < 1e-9
    assert a.certified


def test_multiplier_lattice_instance_within_budget():
    g = Lattice(1)
    q = RingElement.monomial(g, (1,), 0.2, exact=False)
    r = RingElement.monomial(g, (2,), 0.3, exact=False)
    a = hm.cubic_multiplier(q, r, 0.25, K=30, prune_tol=1e-12)
    worst = max(a.note["residual_right"], a.note["residual_left"])
    assert worst <= 2 * a.l1_error


def test_multiplier_hypotheses():
    g = Lattice(1)
    q = RingElement.monomial(g, (1,), 0.3, exact=False)
    with pytest.raises(ValueError):
        hm.cubic_multiplier(q, q, 0.2)
    with pytest.raises(ValueError):
        hm.cubic_multiplier(q, RingElement.monomial(g, (0,), 0.9, exact=False), 0.3)
    u1 = RingElement.monomial(H, (0, 1, 0), 0.1, exact=False)
    u2 = RingElement.monomial(H, (1, 0, 0), 0.1, exact=False)
    with pytest.raises(ValueError, match="commute"):
        hm.cubic_multiplier(u1, u2, 0.2)


def test_loglog_slope_of_constant_is_zero():
    assert hm.loglog_slope([10, 20, 40], [3.0, 3.0, 3.0]) == pytest.approx(0.0, abs=1e-12)
    assert hm.loglog_slope([10, 20, 40], [k**-1.5 for k in (10, 20, 40)]) == pytest.approx(-1.5)
