import itertools
import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from principal_actions import combinatorics as cb
from principal_actions.errors import HypothesisNotMet, LemmaViolation
from principal_actions.expr import parse_poly
from principal_actions.groups import Lattice, interior, rect

# ---------------------------------------------------------------- Sauer-Shelah


def _scatters_brute(members, J):
    traces = {tuple(bool(m >> j & 1) for j in J) for m in members}
    return len(traces) == 2 ** len(J)


@settings(max_examples=60)
@given(st.integers(1, 6), st.data())
def test_scatters_matches_brute_force(n, data):
    members = data.draw(st.sets(st.integers(0, 2**n - 1), max_size=2**n))
    fam = cb.SetFamily(n, tuple(sorted(members)))
    for k in range(n + 1):
        for J in itertools.combinations(range(n), k):
            assert cb.scatters(fam, J) == _scatters_brute(members, J)


@settings(max_examples=40)
@given(st.integers(2, 8), st.integers(1, 4), st.integers(0, 10**6))
def test_witness_found_above_threshold(n, k, seed):
    k = min(k, n)
    rng = random.Random(seed)
    bound = cb.sauer_shelah_bound(n, k)
    if bound >= 2**n:
        return
    fam = cb.SetFamily.random(n, rng.randint(bound + 1, 2**n), rng)
    J = cb.sauer_shelah_witness(fam, k)
    assert len(J) == k and _scatters_brute(fam.members, J)


def test_threshold_is_sharp():
    # all subsets of size < k: exactly the bound, and no k-set is scattered
    n, k = 7, 3
    fam = cb.SetFamily.from_sets(n, [s for i in range(k) for s in itertools.combinations(range(n), i)])
    assert len(fam) == cb.sauer_shelah_bound(n, k)
    assert not any(cb.scatters(fam, J) for J in itertools.combinations(range(n), k))
    with pytest.raises(HypothesisNotMet):
        cb.sauer_shelah_witness(fam, k)


def test_set_family_validation():
    with pytest.raises(ValueError):
        cb.SetFamily(3, (1, 1))
    with pytest.raises(ValueError):
        cb.SetFamily(2, (4,))
    assert len(cb.SetFamily.power_set(4)) == 16


def test_sauer_shelah_trials():
    rep = cb.sauer_shelah_trials(trials=50, seed=3)
    assert rep["found"] == 50 and rep["ok"]


# ---------------------------------------------------------------- binomial sums


def test_binary_entropy():
    assert cb.binary_entropy(0.5) == pytest.approx(math.log(2))
    assert cb.binary_entropy(0.1) == pytest.approx(-0.1 * math.log(0.1) - 0.9 * math.log(0.9))


@pytest.mark.parametrize("beta", [0.01, 0.05, 0.1, 0.2])
def test_stirling_bound(beta):
    rep = cb.stirling_bound_check(beta, (1, 400))
    assert rep["ok"] and rep["failures"] == []
    # spot-check one m with exact integers
    m = 300
    total = sum(math.comb(m, i) for i in range(int(beta * m) + 1))
    assert math.log(total) <= rep["kappa"] * m


def test_stirling_rejects_bad_beta():
    with pytest.raises(ValueError):
        cb.stirling_bound_check(0.5)


# ---------------------------------------------------------------- sign patterns


def _lp_feasible(system, pattern):
    """Independent check with scipy: maximise a margin t on the strict constraints."""
    A, b = [], []
    for row, c, strict in system.constraints(pattern):
        # row . x + c >= t (strict) or >= 0  ->  -row . x + t <= c
        A.append([-float(v) for v in row] + [1.0 if strict else 0.0])
        b.append(float(c))
    res = linprog([0.0] * system.dim + [-1.0], A_ub=A, b_ub=b, bounds=[(None, None)] * system.dim + [(None, 1.0)])
    return -res.fun if res.status == 0 else None


@settings(max_examples=40)
@given(st.integers(1, 3), st.integers(2, 5), st.integers(0, 10**6))
def test_fourier_motzkin_agrees_with_lp(dim, k, seed):
    system = cb.AffineSystem.random(dim, k, np.random.default_rng(seed))
    for pattern in itertools.product((0, 1), repeat=k):
        feasible, witness = cb.fm_feasible(system.constraints(pattern), dim)
        margin = _lp_feasible(system, pattern)
        if margin is None or abs(margin) < 1e-7:
            continue
        assert feasible == (margin > 0)
        if feasible:
            for row, c, strict in system.constraints(pattern):
                val = c + sum(a * x for a, x in zip(row, witness))
                assert val > 0 if strict else val >= 0


@settings(max_examples=30)
@given(st.integers(1, 3), st.integers(0, 10**6))
def test_realised_patterns_bounded(dim, seed):
    k = dim + 2
    system = cb.AffineSystem.random(dim, k, np.random.default_rng(seed))
    assert cb.count_nonempty_patterns(system) <= sum(math.comb(k, i) for i in range(dim + 1)) < 2**k
    a = cb.empty_sign_pattern(system)
    assert not cb.fm_feasible(system.constraints(a), dim)[0]


def test_sign_pattern_hypothesis():
    system = cb.AffineSystem.random(2, 2, np.random.default_rng(0))
    with pytest.raises(HypothesisNotMet):
        cb.empty_sign_pattern(system)


def test_strict_and_nonstrict_boundaries():
    # phi(x) = x with threshold 0 and phi(x) = -x with threshold 0: pattern (1,1) is {x = 0}
    system = cb.AffineSystem(1, [[1], [-1]], [0, 0], [0, 0])
    assert cb.fm_feasible(system.constraints((1, 1)), 1)[0]
    assert not cb.fm_feasible(system.constraints((0, 0)), 1)[0]


# ---------------------------------------------------------------- V_Q


@settings(max_examples=30)
@given(st.integers(1, 6), st.integers(1, 6), st.sampled_from(["1 - u1 - u2", "3 - u1 - u2 + u1 u2", "2 - u1^-1 + u2"]))
def test_vq_dimension_matches_numpy_rank(w, h, text):
    f = parse_poly(text, "z2")
    Q = rect(Lattice(2), (0, 0), (w - 1, h - 1))
    try:
        rep = cb.vq_dimension(f, Q)
    except LemmaViolation:
        pytest.fail("dimension bound violated")
    elems = list(Q)
    col = {g: i for i, g in enumerate(elems)}
    rows = []
    for g in interior(Q, list(f.terms)):
        r = [0.0] * len(elems)
        for s, c in f.terms.items():
            r[col[(g[0] + s[0], g[1] + s[1])]] = float(c)
        rows.append(r)
    rank = np.linalg.matrix_rank(np.array(rows)) if rows else 0
    assert rep["dim"] == len(elems) - rank
    assert rep["dim"] <= rep["bound"]


def test_vq_requires_identity_in_support():
    with pytest.raises(HypothesisNotMet):
        cb.vq_dimension(parse_poly("u1 - u2"), rect(Lattice(2), (0, 0), (2, 2)))


def test_vq_trials():
    assert cb.vq_dimension_trials(boxes=10, seed=1)["ok"]


# ---------------------------------------------------------------- g_k


@settings(max_examples=40)
@given(st.fractions(Fraction(1, 100), Fraction(99, 100)), st.integers(0, 200), st.fractions(-50, 50))
def test_gk_forms_agree_exactly(c, k, x):
    assert cb.gk_factored(c, k, x) == cb.gk_expanded(c, k, x)


def test_gk_closed_form_small():
    rep = cb.gk_closed_form_check(samples=100, seed=2)
    assert rep["max_rel_error"] < 1e-9


def test_gk_roots_interlace_past_kc():
    c = 0.25
    k_c = cb.kc_cached(c)
    for k in (k_c, k_c + 1, k_c + 50, 4 * k_c):
        rep = cb.gk_roots(c, k)
        assert rep.ok and len(rep.roots) == 3
        for t in rep.roots:
            assert abs(float(cb.gk_expanded(c, k, t))) < 1e-6 * max(1.0, k**2)


def test_kc_is_last_failure_plus_one():
    c = 0.5
    k_c = cb.kc_cached(c)
    assert all(cb.kc_conditions(c, k_c))
    if k_c > 1:
        assert not all(cb.kc_conditions(c, k_c - 1))


# ---------------------------------------------------------------- c^x (1-c)^y bound


@settings(max_examples=60)
@given(st.floats(0.01, 0.99), st.floats(0.01, 500), st.floats(0.01, 500))
def test_log_weight_forms_agree(c, x, y):
    a = cb.log_binomial_weight(c, x, y)
    b = cb.log_binomial_weight_direct(c, x, y)
    assert a <= 1e-12
    assert a == pytest.approx(b, abs=1e-8 * (x + y + 1) * (1 + abs(math.log(x + y))))


def test_combinatorial_bound_check():
    assert cb.combinatorial_bound_check(0.3, samples=500)["ok"]


def test_kappa_decreases_towards_zero():
    vals = [cb.binary_entropy(b) for b in (0.2, 0.1, 0.05, 0.01)]
    assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] < 0.06
    assert cb.stirling_bound_check(0.4, (1, 1))["ok"]
