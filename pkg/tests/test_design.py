import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpc_autotune import DesignBounds, ShapingVector, realize, sample_shaping, shape_value

ALL_EXPONENTS = [-3, -2, -1, 1, 2, 3]


# shape_value ----------------------------------------------------------------


def test_shape_value_positive_exponent_is_power():
    assert shape_value(2, 0.5) == 0.25
    assert shape_value(3, 0.5) == 0.125


def test_shape_value_negative_exponent_is_root():
    assert shape_value(-2, 0.25) == 0.5
    assert shape_value(-3, 0.125) == pytest.approx(0.5, rel=1e-15)


@pytest.mark.parametrize("exponent", ALL_EXPONENTS)
def test_shape_value_endpoints(exponent):
    assert shape_value(exponent, 0.0) == 0.0
    assert shape_value(exponent, 1.0) == 1.0


def test_shape_value_rejects_zero_exponent():
    with pytest.raises(ValueError):
        shape_value(0, 0.5)


@pytest.mark.parametrize("alpha", [-0.1, 1.1])
def test_shape_value_rejects_alpha_outside_unit_interval(alpha):
    with pytest.raises(ValueError):
        shape_value(1, alpha)


@given(
    exponent=st.integers(min_value=-10, max_value=10).filter(lambda e: e != 0),
    a=st.floats(min_value=0.0, max_value=1.0),
    b=st.floats(min_value=0.0, max_value=1.0),
)
def test_shape_value_monotone(exponent, a, b):
    # only non-strict order can hold for arbitrary float pairs: high powers
    # of subnormal inputs underflow and collapse to the same value
    lo, hi = sorted((a, b))
    assert shape_value(exponent, lo) <= shape_value(exponent, hi)


@given(
    exponent=st.sampled_from([-3, -2, -1, 1, 2, 3]),
    i=st.integers(min_value=0, max_value=999),
    j=st.integers(min_value=1, max_value=1000),
)
def test_shape_value_strictly_increasing_on_grid(exponent, i, j):
    # on a millipoint grid within the sampled exponent range every output
    # pair is representably distinct, so strictness is exact
    if i < j:
        assert shape_value(exponent, i / 1000.0) < shape_value(exponent, j / 1000.0)


# ShapingVector / sampling ----------------------------------------------------


def test_shaping_vector_validates_length_and_range():
    with pytest.raises(ValueError):
        ShapingVector((1, 2, 3))
    with pytest.raises(ValueError):
        ShapingVector((0, 1, 1, 1, 1, 1, 1))
    with pytest.raises(ValueError):
        ShapingVector((4, 1, 1, 1, 1, 1, 1), max_power=3)


def test_sample_shaping_uniform_over_admissible_values():
    rng = np.random.default_rng(7)
    counts = {e: np.zeros(7) for e in ALL_EXPONENTS}
    n = 10_000
    for _ in range(n):
        sv = sample_shaping(rng, max_power=3)
        assert len(sv.exponents) == 7
        for i, e in enumerate(sv.exponents):
            assert e in ALL_EXPONENTS
            counts[e][i] += 1
    for e in ALL_EXPONENTS:
        freq = counts[e] / n
        assert np.all(np.abs(freq - 1.0 / 6.0) < 0.02), (e, freq)


def test_sample_shaping_deterministic_per_seed():
    draws1 = [sample_shaping(np.random.default_rng(3)).exponents for _ in range(1)]
    draws2 = [sample_shaping(np.random.default_rng(3)).exponents for _ in range(1)]
    assert draws1 == draws2


def test_sample_shaping_respects_max_power():
    rng = np.random.default_rng(11)
    for _ in range(200):
        sv = sample_shaping(rng, max_power=1)
        assert all(e in (-1, 1) for e in sv.exponents)


# DesignBounds ----------------------------------------------------------------


def test_default_bounds_box():
    b = DesignBounds()
    assert b.kappa == (1, 10)
    assert b.mu_d == (0.0, 1.0)
    assert b.n_pred == (5, 25)
    assert b.n_contr == (1, 5)
    assert b.rho_f == (1.0, 1.0e3)
    assert b.rho_constr == (1.0e3, 1.0e7)
    assert b.max_iter == (5, 20)


def test_bounds_validation():
    with pytest.raises(ValueError):
        DesignBounds(kappa=(5, 2))
    with pytest.raises(ValueError):
        DesignBounds(mu_d=(-0.1, 1.0))
    with pytest.raises(ValueError):
        DesignBounds(kappa=(1.5, 3))
    with pytest.raises(ValueError):
        DesignBounds(rho_f=(0.0, 10.0), rho_log_space=True)


# realize ---------------------------------------------------------------------


def any_shaping(e: int) -> ShapingVector:
    return ShapingVector((e,) * 7)


@pytest.mark.parametrize("exponent", ALL_EXPONENTS)
def test_realize_alpha_zero_is_min_compute_corner(exponent):
    d = realize(any_shaping(exponent), 0.0, DesignBounds())
    assert (d.kappa, d.mu_d, d.n_pred, d.n_contr) == (10, 0.0, 5, 1)
    assert (d.rho_f, d.rho_constr, d.max_iter) == (1.0, 1.0e3, 5)


@pytest.mark.parametrize("exponent", ALL_EXPONENTS)
def test_realize_alpha_one_is_max_compute_corner(exponent):
    d = realize(any_shaping(exponent), 1.0, DesignBounds())
    assert (d.kappa, d.mu_d, d.n_pred, d.n_contr) == (1, 1.0, 25, 5)
    assert (d.rho_f, d.rho_constr, d.max_iter) == (1.0e3, 1.0e7, 20)


def test_realize_midpoint_linear_shaping():
    # phi = 0.5 for every component: kappa 10 - 0.5*9 = 5.5 rounds half up to 6,
    # n_pred 15, n_contr 3, max_iter 12.5 -> 13, weights at their midpoints
    d = realize(any_shaping(1), 0.5, DesignBounds())
    assert d.kappa == 6
    assert d.mu_d == 0.5
    assert d.n_pred == 15
    assert d.n_contr == 3
    assert d.max_iter == 13
    assert d.rho_f == pytest.approx(500.5, rel=1e-15)
    assert d.rho_constr == pytest.approx(5000500.0, rel=1e-15)


def test_realize_log_space_weights():
    b = DesignBounds(rho_log_space=True)
    d = realize(any_shaping(1), 0.5, b)
    # geometric midpoints of [1, 1e3] and [1e3, 1e7]
    assert d.rho_f == pytest.approx(10.0 ** 1.5, rel=1e-12)
    assert d.rho_constr == pytest.approx(1.0e5, rel=1e-12)


def test_realize_couples_n_contr_to_n_pred():
    b = DesignBounds(n_pred=(2, 3), n_contr=(1, 5))
    sv = ShapingVector((1, 1, 3, -3, 1, 1, 1))
    d = realize(sv, 0.3, b)
    # n_pred raw 2 + 0.027*1 -> 2; n_contr raw 1 + 0.3**(1/3)*4 ~ 3.68 -> 4, clipped to n_pred
    assert d.n_pred == 2
    assert d.n_contr == 2


def test_realize_rejects_alpha_outside_unit_interval():
    with pytest.raises(ValueError):
        realize(any_shaping(1), 1.5, DesignBounds())


@given(
    exponents=st.tuples(*[st.sampled_from(ALL_EXPONENTS)] * 7),
    a=st.floats(min_value=0.0, max_value=1.0),
    b=st.floats(min_value=0.0, max_value=1.0),
)
@settings(max_examples=200)
def test_realize_monotone_and_inside_bounds(exponents, a, b):
    bounds = DesignBounds()
    sv = ShapingVector(exponents)
    lo, hi = sorted((a, b))
    d_lo, d_hi = realize(sv, lo, bounds), realize(sv, hi, bounds)
    for d in (d_lo, d_hi):
        assert bounds.kappa[0] <= d.kappa <= bounds.kappa[1]
        assert bounds.mu_d[0] <= d.mu_d <= bounds.mu_d[1]
        assert bounds.n_pred[0] <= d.n_pred <= bounds.n_pred[1]
        assert 1 <= d.n_contr <= d.n_pred
        assert bounds.rho_f[0] <= d.rho_f <= bounds.rho_f[1]
        assert bounds.rho_constr[0] <= d.rho_constr <= bounds.rho_constr[1]
        assert bounds.max_iter[0] <= d.max_iter <= bounds.max_iter[1]
    # kappa shrinks with alpha, every other component grows
    assert d_lo.kappa >= d_hi.kappa
    assert d_lo.mu_d <= d_hi.mu_d
    assert d_lo.n_pred <= d_hi.n_pred
    assert d_lo.rho_f <= d_hi.rho_f
    assert d_lo.rho_constr <= d_hi.rho_constr
    assert d_lo.max_iter <= d_hi.max_iter


def test_design_vector_helpers():
    d = realize(any_shaping(1), 0.5, DesignBounds())
    assert d.tau_u(0.01) == pytest.approx(0.06)
    assert d.horizon(0.01) == pytest.approx(0.9)
    assert set(d.as_dict()) == {"kappa", "mu_d", "n_pred", "n_contr", "rho_f", "rho_constr", "max_iter"}
