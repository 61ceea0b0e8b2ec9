import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbmfluct import measures as ms
from dbmfluct.errors import DomainError

from oracles import semicircle_cdf_quad, semicircle_f

D0 = ms.AtomicMeasure((0.0,), (1.0,))
PM = ms.AtomicMeasure((-1.0, 1.0), (0.5, 0.5))
SC = ms.SemicircleMeasure(1.0)


def test_stieltjes_examples():
    assert ms.stieltjes(D0, 2j) == pytest.approx(0.5j, abs=1e-15)
    assert ms.stieltjes(PM, 2j) == pytest.approx(2j / 5, abs=1e-15)
    assert ms.stieltjes(SC, 1j) == pytest.approx(1j * (math.sqrt(5) - 1) / 2, abs=1e-14)


def test_semicircle_against_quadrature():
    x = np.linspace(-2, 2, 200001)
    dens = np.sqrt(np.maximum(4 - x**2, 0)) / (2 * math.pi)
    z = 0.3 + 0.7j
    from scipy.integrate import simpson
    assert abs(simpson(dens / (x - z), x=x) - ms.stieltjes(SC, z)) < 1e-6


def test_semicircle_real_axis_outside_support():
    # f(w) = int dX/(x - w) is negative to the right of the support
    assert ms.semicircle_stieltjes(1.0, 3.0) == pytest.approx(-(3 - math.sqrt(5)) / 2, abs=1e-14)
    assert ms.semicircle_stieltjes(1.0, -3.0) == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-14)


def test_semicircle_quadratic_and_asymptotics():
    for z in (1j, 0.5 + 0.1j, -3 - 2j, 10j):
        f = ms.semicircle_stieltjes(1.3, z)
        assert abs(1.3**2 * f * f + z * f + 1) < 1e-13
        assert f == pytest.approx(semicircle_f(1.3, z), abs=1e-13)
    assert ms.semicircle_stieltjes(1.0, 1e7j) * 1e7j == pytest.approx(-1, abs=1e-12)


def test_domain_errors():
    with pytest.raises(DomainError):
        ms.stieltjes(SC, 0.5)
    with pytest.raises(DomainError):
        ms.stieltjes(PM, 1.0 + 0j)
    with pytest.raises(ValueError):
        ms.stieltjes(SC, 1j, order=4)


@pytest.mark.parametrize("m", [D0, PM, SC, ms.AtomicMeasure((-2.0, 0.3, 1.0), (0.2, 0.5, 0.3))])
@pytest.mark.parametrize("z", [0.5j, 1 + 1j, -0.7 + 2j, 0.2 - 0.9j])
def test_derivatives_match_finite_differences(m, z):
    h = 1e-4
    f = lambda w, k=0: complex(ms.stieltjes(m, w, k))
    for k in (1, 2, 3):
        fd = (f(z + h, k - 1) - f(z - h, k - 1)) / (2 * h)
        assert abs(fd - f(z, k)) <= 1e-6 * abs(f(z, k)) + 1e-12


@settings(deadline=None, max_examples=60)
@given(x=st.floats(-5, 5), y=st.floats(0.01, 5),
       which=st.sampled_from(["d0", "pm", "sc", "sc2"]))
def test_half_plane_and_conjugation(x, y, which):
    m = {"d0": D0, "pm": PM, "sc": SC, "sc2": ms.SemicircleMeasure(2.5)}[which]
    z = complex(x, y)
    f = complex(ms.stieltjes(m, z))
    assert f.imag > 0
    assert complex(ms.stieltjes(m, z.conjugate())) == pytest.approx(f.conjugate(), rel=1e-13, abs=1e-15)


def test_vectorized_matches_scalar():
    zs = np.array([1j, 2 + 0.5j, -1 - 1j])
    for m in (PM, SC):
        vec = ms.stieltjes(m, zs, 2)
        assert np.allclose(vec, [ms.stieltjes(m, z, 2) for z in zs], rtol=1e-14)


def test_moments():
    assert ms.moment(D0, 5) == 0
    assert ms.moment(PM, 4) == 1
    assert ms.moment(SC, 4) == 2
    assert ms.moment(ms.SemicircleMeasure(1.5), 6) == pytest.approx(5 * 1.5**6)
    for m in (D0, PM, SC):
        assert ms.moment(m, 0) == 1.0


def test_semicircle_moments_by_quadrature():
    x = np.linspace(-2, 2, 200001)
    dens = np.sqrt(np.maximum(4 - x**2, 0)) / (2 * math.pi)
    from scipy.integrate import simpson
    for k in range(0, 9):
        assert simpson(dens * x**k, x=x) == pytest.approx(ms.moment(SC, k), rel=1e-6, abs=1e-6)


def test_quantile_sample_examples():
    assert list(ms.quantile_sample(D0, 4)) == [0, 0, 0, 0]
    assert list(ms.quantile_sample(PM, 4)) == [-1, -1, 1, 1]
    x = ms.quantile_sample(SC, 2)
    assert x[0] == -x[1]
    # midpoint placement: x2 is the 3/4 quantile of the variance-1 semicircle
    assert x[1] == pytest.approx(0.80795, abs=1e-4)
    assert semicircle_cdf_quad(1.0, x[1]) == pytest.approx(0.75, abs=1e-6)


def test_quantile_sample_uneven_weights():
    m = ms.AtomicMeasure((0.0, 1.0, 2.0), (0.25, 0.5, 0.25))
    assert list(ms.quantile_sample(m, 8)) == [0, 0, 1, 1, 1, 1, 2, 2]


def test_quantile_sample_antisymmetric_odd():
    x = ms.quantile_sample(SC, 7)
    assert np.array_equal(x, -x[::-1])
    assert np.all(np.diff(x) > 0)


def test_quantile_stieltjes_convergence():
    f = ms.stieltjes(SC, 1j)
    errs = [abs(np.mean(1 / (ms.quantile_sample(SC, n) - 1j)) - f) for n in (10, 100, 1000)]
    for n, e in zip((10, 100, 1000), errs):
        assert e <= 1.0 / n
    assert errs[0] / errs[1] > 5 and errs[1] / errs[2] > 5


def test_support_bound():
    assert ms.support_bound(D0) == 0
    assert ms.support_bound(PM) == 1
    assert ms.support_bound(ms.SemicircleMeasure(1.5)) == 3


def test_atomic_invariants():
    with pytest.raises(ValueError, match="sum to 1"):
        ms.AtomicMeasure((0.0, 1.0), (0.5, 0.4))
    with pytest.raises(ValueError, match="strictly positive"):
        ms.AtomicMeasure((0.0, 1.0), (1.5, -0.5))
    with pytest.raises(ValueError, match="increasing"):
        ms.AtomicMeasure((1.0, 0.0), (0.5, 0.5))
    with pytest.raises(ValueError):
        ms.AtomicMeasure((), ())
    with pytest.raises(ValueError):
        ms.SemicircleMeasure(0.0)


def test_signed_measure():
    y = ms.SignedAtomicMeasure.from_pairs([(0.5, 1.0), (-0.5, -1.0)])
    assert y.pair(lambda x: x) == 1.0
    with pytest.raises(ValueError, match="total weight 0"):
        ms.SignedAtomicMeasure((0.0,), (1.0,))


@pytest.mark.parametrize("m", [D0, PM, SC])
def test_json_round_trip(m):
    assert ms.measure_from_json(ms.measure_to_json(m)) == m


def test_semicircle_quantile_cdf_inverse():
    for q in (0.01, 0.3, 0.5, 0.9):
        assert ms.semicircle_cdf(1.7, ms.semicircle_quantile(1.7, q)) == pytest.approx(q, abs=1e-14)
