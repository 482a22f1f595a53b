import numpy as np

from articugeo.gradcheck import (central_difference, check_depth_gradient, complex_step, run_gradchecks,
                                 stable_central_difference, synthetic_fixture)


def test_complex_step_matches_analytic_derivative():
    f = lambda x: np.sum(np.sin(x) * x ** 2)
    x = np.array([0.3, 1.7, -2.0])
    d = np.array([1.0, -0.5, 2.0])
    exact = np.sum((np.cos(x) * x ** 2 + 2 * x * np.sin(x)) * d)
    assert abs(complex_step(f, x, d) - exact) < 1e-14
    assert abs(central_difference(f, x, d, 1e-6) - exact) < 1e-8


def test_stable_difference_avoids_a_kink():
    # the kink sits 5e-5 away, so only the largest step straddles it
    f = lambda x: np.abs(x[0] - 1.00005) + x[0]
    x = np.array([1.0])
    est = stable_central_difference(f, x, np.array([1.0]), (1e-4, 1e-5, 1e-6))
    assert abs(est - 0.0) < 1e-6


def test_flat_pixels_are_skipped():
    f = lambda d: np.sum(d * 0.0)
    res = check_depth_gradient("flat", f, np.ones((4, 4)), [(1, 1), (2, 2)])
    assert res.checked == 0 and not res.passed


def test_losses_pass_on_a_small_sample():
    results = run_gradchecks(synthetic_fixture(0), n=8, seed=1)
    assert {r.name for r in results} == {"pe", "NC", "SNC", "PNC_S"}
    for r in results:
        assert r.checked == 8
        assert r.passed, (r.name, r.max_rel_err, r.worst_pixel)
