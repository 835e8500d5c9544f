import math

import numpy as np
import pytest

import dcssl


def test_version():
    assert dcssl.__version__.count(".") == 2


@pytest.mark.parametrize("r", [0.0, 0.5, 1.0])
def test_g_inverse(r):
    for x in [1e-6, 0.3, 2.0, 40.0]:
        assert dcssl.g_inv(dcssl.g(x, r), r) == pytest.approx(x, rel=1e-12)


def test_moments_at_zero():
    m0, m1, m2 = dcssl.frailty_moments(0.0, 1.0)
    assert (m0, m1, m2) == pytest.approx((1.0, 1.0, 2.0))


def test_fit_em_matches_cox():
    sm = pytest.importorskip("statsmodels.api")
    rng = np.random.default_rng(3)
    n = 150
    z = rng.normal(size=(n, 2))
    t = rng.exponential(size=n) * np.exp(-z @ np.array([0.4, -0.2]))
    c = rng.exponential(scale=2.0, size=n)
    time = np.minimum(t, c)
    code = np.where(t <= c, 1, 2)
    fit = dcssl.fit_em(time, code.tolist(), z, r=0.0, tol=1e-10, max_iter=5000)
    cox = sm.PHReg(time, z, status=(code == 1).astype(int), ties="breslow").fit()
    assert fit["converged"]
    np.testing.assert_allclose(fit["beta"], cox.params, atol=1e-6)


def test_bad_code_rejected():
    with pytest.raises(ValueError):
        dcssl.fit_em(np.ones(3), [1, 4, 2], np.zeros((3, 1)))


def test_simulate_and_fit(tmp_path):
    path = tmp_path / "cohort.csv"
    assert dcssl.simulate(path, n=100, seed=11) == 600
    res = dcssl.fit(path)
    est = res["estimates"]
    for name in ["SL", "SSL1", "SSL2", "SSL3"]:
        assert est[name]["available"]
        assert all(math.isfinite(s) and s > 0 for s in est[name]["se"])
    partial = dcssl.fit(path, model5=False)
    assert not partial["estimates"]["SSL2"]["available"]


def test_run_mc_small():
    summary = dcssl.run_mc(n=100, reps=2, seed=5)
    assert summary["replications"] == 2
    assert set(summary["methods"]) == {"SL", "SSL1", "SSL2", "SSL3"}
