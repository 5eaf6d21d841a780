"""Unit tests for lattice distances, the LCD condition, and bracket estimators."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ranklab import lcd
from ranklab.matrix_core import RngStream

P = lcd.LCDParams(2.0, 0.25)


def ones_unit(n: int) -> np.ndarray:
    return np.ones(n) / math.sqrt(n)


def basis_vec(n: int, i: int = 0) -> np.ndarray:
    e = np.zeros(n)
    e[i] = 1.0
    return e


# --- lattice distance --------------------------------------------------------


def test_dist_to_lattice_examples():
    assert lcd.dist_to_lattice([3.0, -2.0, 0.0]) == 0.0
    assert lcd.dist_to_lattice([0.4, 1.6]) == pytest.approx(math.sqrt(0.32))
    assert lcd.dist_to_lattice([0.5] * 4) == pytest.approx(1.0)


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=8))
@settings(max_examples=60, deadline=None)
def test_dist_to_lattice_is_translation_invariant(xs):
    y = np.array(xs)
    shift = np.arange(1, y.size + 1, dtype=float)
    assert lcd.dist_to_lattice(y + shift) == pytest.approx(lcd.dist_to_lattice(y), abs=1e-9)
    assert 0.0 <= lcd.dist_to_lattice(y) <= math.sqrt(y.size) / 2 + 1e-12


def test_log_plus():
    assert lcd.log_plus(0.5) == 0.0
    assert lcd.log_plus(1.0) == 0.0
    assert lcd.log_plus(math.e) == pytest.approx(1.0)


# --- condition ---------------------------------------------------------------


def test_condition_below_cutoff_is_false():
    # alpha * ||image|| <= L makes the right side 0; strict inequality fails
    v = ones_unit(100)
    assert not lcd.lcd_condition(v[None, :], [8.0], P)
    assert not lcd.lcd_condition(v[None, :], [1.0], P)


def test_condition_worked_examples():
    v = ones_unit(100)
    assert lcd.lcd_condition(v[None, :], [10.0], P)  # integer image, log+ > 0
    e1 = basis_vec(100)
    assert lcd.lcd_condition(e1[None, :], [9.0], P)


def test_condition_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        lcd.lcd_condition(np.eye(2), [1.0, 2.0, 3.0], P)


# --- lcd_vector --------------------------------------------------------------


def test_lcd_vector_all_ones_bands():
    # frozen from the fine-grid scan; the acceptance window is wider
    expected = {64: (8.0, 8.0), 100: (9.0, 9.5), 144: (10.5, 11.0)}
    for n, (lo_band, hi_band) in expected.items():
        est = lcd.lcd_vector(ones_unit(n), P, 20.0)
        assert lo_band <= est.upper <= hi_band, n
        assert est.lower >= P.L / P.alpha - 1e-12
        assert est.lower <= est.upper + 1e-9
        w = est.witness_theta
        assert lcd.lcd_condition(ones_unit(n)[None, :], w, P)
        assert abs(float(np.linalg.norm(w)) - est.upper) <= 1e-9


def test_lcd_vector_cutoff_boundary_case():
    # for a standard basis vector the condition holds immediately past the
    # cutoff L/alpha, so the bracket pins the infimum at exactly 8
    est = lcd.lcd_vector(basis_vec(50), P, 20.0)
    assert est.upper == pytest.approx(8.0, abs=1e-9)
    assert 8.0 <= float(np.linalg.norm(est.witness_theta)) <= 8.0 + 1e-9


def test_lcd_vector_no_witness_below_bound():
    # all-ones witness region starts near 9.24; a bound of 9 finds nothing
    est = lcd.lcd_vector(ones_unit(100), P, 9.0, grid_step=0.005)
    assert math.isinf(est.upper)
    assert est.witness_theta is None
    assert est.lower == pytest.approx(9.0)


def test_lcd_vector_scaling():
    v = ones_unit(100)
    a = lcd.lcd_vector(v, P, 20.0)
    b = lcd.lcd_vector(2 * v, P, 10.0, grid_step=0.01)
    assert b.upper == pytest.approx(a.upper / 2, abs=1e-6)
    assert b.lower == pytest.approx(a.lower / 2, abs=1e-2)


def test_lcd_vector_validation():
    with pytest.raises(ValueError):
        lcd.lcd_vector(np.zeros(5), P, 20.0)
    with pytest.raises(ValueError):
        lcd.lcd_vector(ones_unit(10), P, 7.9)  # below L/alpha
    with pytest.raises(ValueError):
        lcd.lcd_vector(ones_unit(10), P, 20.0, grid_step=-1.0)


def test_lcd_params_validation():
    with pytest.raises(ValueError):
        lcd.LCDParams(0.0, 0.5)
    with pytest.raises(ValueError):
        lcd.LCDParams(1.0, 0.0)
    with pytest.raises(ValueError):
        lcd.LCDParams(1.0, 1.5)


# --- lcd_matrix --------------------------------------------------------------


def test_lcd_matrix_single_row_delegates():
    v = ones_unit(100)
    em = lcd.lcd_matrix(v[None, :], P, 20.0)
    ev = lcd.lcd_vector(v, P, 20.0)
    assert em.upper == ev.upper
    assert not em.lower_heuristic or em.upper == ev.upper  # m=1 keeps the scan certificate


def test_lcd_matrix_orthonormal_rows_match_worst_row():
    V = np.zeros((2, 20))
    V[0, 0] = 1.0
    V[1, 1] = 1.0
    em = lcd.lcd_matrix(V, P, 20.0, budget=32, rng=RngStream(5))
    row_answers = [lcd.lcd_vector(V[i], P, 20.0).upper for i in range(2)]
    assert em.upper <= max(row_answers) * 1.05
    assert em.lower_heuristic
    assert em.lower == pytest.approx(P.L / P.alpha)  # s1 = 1
    assert lcd.lcd_condition(V, em.witness_theta, P)


def test_lcd_matrix_disjoint_blocks_finds_diagonal_witness():
    # two disjoint normalized all-ones blocks: per-row answers are ~12.8 but
    # a mixed coefficient pair lands both blocks on the lattice cheaper
    u1 = np.zeros(100)
    u1[:50] = 1 / math.sqrt(50)
    u2 = np.zeros(100)
    u2[50:] = 1 / math.sqrt(50)
    em = lcd.lcd_matrix(np.vstack([u1, u2]), P, 20.0, budget=64, rng=RngStream(7))
    assert 8.9 <= em.upper <= 10.1
    assert lcd.lcd_condition(np.vstack([u1, u2]), em.witness_theta, P)


def test_lcd_matrix_halved_axis_rows():
    V = np.zeros((2, 10))
    V[0, 0] = 0.5
    V[1, 1] = 0.5
    em = lcd.lcd_matrix(V, P, 40.0, budget=32, rng=RngStream(9))
    assert em.upper == pytest.approx(16.0, abs=1e-6)  # cutoff boundary at s1 = 1/2
    assert em.lower == pytest.approx(16.0)


def test_lcd_matrix_dimension_cap():
    with pytest.raises(ValueError, match="cap"):
        lcd.lcd_matrix(np.eye(9, 12), P, 20.0)


def test_estimate_record_roundtrip():
    est = lcd.lcd_vector(ones_unit(100), P, 20.0)
    rec = est.to_record()
    assert set(rec) == {"upper", "lower", "witness", "grid_step", "lower_heuristic"}
    assert rec["upper"] == est.upper
    assert rec["witness"] == [float(t) for t in est.witness_theta]


def test_estimate_invariants_enforced():
    with pytest.raises(ValueError):
        lcd.LCDEstimate(upper=1.0, lower=2.0, witness_theta=np.array([1.0]), grid_step=0.1)
    with pytest.raises(ValueError):
        lcd.LCDEstimate(upper=math.inf, lower=2.0, witness_theta=np.array([1.0]), grid_step=0.1)


# --- guard -------------------------------------------------------------------


def test_guard_trivial_below_cutoff():
    rng = np.random.default_rng(0)
    U, _ = np.linalg.qr(rng.normal(size=(100, 3)))
    theta = np.array([0.01, 0.0, 0.0])
    rep = lcd.incomp_lcd_guard(U, 10, 0.1, 1.0, theta)
    assert rep.holds and rep.rhs == 0.0


def test_guard_zero_violations_randomized():
    rng = np.random.default_rng(3)
    U, _ = np.linalg.qr(rng.normal(size=(100, 3)))
    s = 10
    radius = math.sqrt(s) / 2
    checked = 0
    for _ in range(2000):
        theta = rng.normal(size=3)
        theta *= radius * rng.uniform() ** (1 / 3) / np.linalg.norm(theta)
        rep = lcd.incomp_lcd_guard(U, s, 0.1, 1.0, theta)
        if rep.hypothesis_met and rep.applicable:
            checked += 1
            assert rep.holds, theta
    assert checked > 1500  # dense random directions are rarely compressible


def test_guard_sparse_direction_reports_unmet():
    U = np.zeros((100, 1))
    U[0, 0] = 1.0
    rep = lcd.incomp_lcd_guard(U, 10, 0.1, 1.0, [1.5])
    assert rep.status == "hypothesis unmet"
    assert not rep.hypothesis_met
