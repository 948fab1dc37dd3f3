import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqg_adapt.errors import SingularInnovation
from lqg_adapt.exploration import FimAccumulator, NaiveSchedule, naive_sigma_sq


def test_naive_schedule():
    sch = NaiveSchedule(0.5)
    assert naive_sigma_sq(sch, 25) == pytest.approx(0.1)
    assert naive_sigma_sq(sch, 50) / naive_sigma_sq(sch, 25) == pytest.approx(2**-0.5)
    with pytest.raises(ValueError):
        NaiveSchedule(0.0)


def test_fim_matches_brute_force_kron():
    rng = np.random.default_rng(1)
    fim = FimAccumulator(3, 2)
    ref = np.zeros((6, 6))
    for _ in range(20):
        for _ in range(3):
            fim.update_innovation(rng.standard_normal(2), np.zeros(2))
        phi = rng.standard_normal(3)
        fim.update_fim(phi)
        ref += np.kron(np.outer(phi, phi), np.linalg.inv(fim.innovation_cov()))
    np.testing.assert_allclose(fim.kron_sum, ref, rtol=1e-10)


def test_single_output_collapses_to_scaled_gram():
    fim = FimAccumulator(2, 1)
    fim.update_innovation([2.0], [0.0])  # residual variance 4
    fim.update_fim([1.0, 3.0])
    np.testing.assert_allclose(fim.kron_sum, np.outer([1.0, 3.0], [1.0, 3.0]) / 4.0)


def test_no_residuals_is_singular():
    with pytest.raises(SingularInnovation):
        FimAccumulator(2, 1).update_fim([1.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_lambda_min_nondecreasing(seed):
    rng = np.random.default_rng(seed)
    fim = FimAccumulator(4, 2)
    for _ in range(3):
        fim.update_innovation(rng.standard_normal(2), np.zeros(2))
    prev = 0.0
    for _ in range(30):
        fim.update_fim(rng.standard_normal(4))
        lam = fim.min_eig()
        assert lam >= prev - 1e-12 * np.linalg.norm(fim.kron_sum, 2)
        prev = lam


def test_switch_latches():
    sch = NaiveSchedule(0.5)
    fim = FimAccumulator(1, 1, alpha=2.0, c_tol=1.0)
    assert fim.sigma_sq(sch, 25, lambda_min=0.5) == (pytest.approx(0.1), False)
    var, using = fim.sigma_sq(sch, 25, lambda_min=4.0)
    assert using and var == pytest.approx(0.5)
    assert fim.sigma_sq(sch, 25, lambda_min=8.0) == (pytest.approx(0.25), True)
    assert fim.switched
