import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _helpers import seeds
from ttqi import (
    GridSpec,
    GridTooNarrowError,
    InfeasibleTargetError,
    MeasurementRecord,
    Observable,
    ScanOptions,
    ValidationError,
    chi2,
    fit_central,
    profile_at,
    scan_observable,
    threshold_significance,
)
from ttqi.fano import BinKinematics
from ttqi.oracles import dense_profile_oracle
from ttqi.report import ObservableSummary, format_entry

KIN = BinKinematics((300.0, 400.0), (0.0, 0.4))
C11 = 6  # position of C11 in the 15-vector


def record(o, U):
    return MeasurementRecord(np.asarray(o, float), np.asarray(U, float), KIN)


def toy_record(o7=0.3, sigma=0.1):
    o = np.zeros(15)
    o[C11] = o7
    return record(o, sigma**2 * np.eye(15))


def coordinate(k, **kw):
    e = np.zeros(15)
    e[k] = 1.0
    return Observable(f"x{k}", lambda x: float(x[k]), gradient=lambda x: e, **kw)


def linear(g, **kw):
    g = np.asarray(g, float)
    return Observable("linear", lambda x: float(g @ x), gradient=lambda x: g, **kw)


def correlated_record(seed, spread=0.2):
    rng = np.random.default_rng(seed)
    A = 0.02 * rng.standard_normal((15, 15))
    U = A @ A.T + 1e-4 * np.eye(15)
    return record(rng.uniform(-spread, spread, 15), U), rng


class TestRecord:
    def test_wrong_shapes(self):
        with pytest.raises(ValidationError):
            record(np.zeros(14), np.eye(15))
        with pytest.raises(ValidationError):
            record(np.zeros(15), np.eye(14))

    def test_asymmetric_covariance(self):
        U = np.eye(15)
        U[0, 1] = 0.1
        with pytest.raises(ValidationError):
            record(np.zeros(15), U)

    def test_negative_eigenvalue(self):
        U = np.eye(15)
        U[0, 0] = -0.1
        with pytest.raises(ValidationError):
            record(np.zeros(15), U)

    def test_observed_range(self):
        o = np.zeros(15)
        o[0] = 1.6
        with pytest.raises(ValidationError):
            record(o, np.eye(15))


class TestChi2:
    def test_at_observation(self):
        rec, _ = correlated_record(1)
        assert chi2(rec.observed, rec) == 0.0

    def test_unit_covariance_offset(self):
        rec = record(np.zeros(15), np.eye(15))
        x = np.zeros(15)
        x[4] = 2.0 - 1.0  # stay inside the box
        assert chi2(x, rec) == pytest.approx(1.0)
        o = np.zeros(15)
        o[4] = -1.0
        assert chi2(x, record(o, np.eye(15))) == pytest.approx(4.0)

    def test_quarter_variance(self):
        rec = record(np.zeros(15), 0.25 * np.eye(15))
        x = np.zeros(15)
        x[9] = 1.0
        assert chi2(x, rec) == pytest.approx(4.0)

    def test_rank_deficient_covariance_uses_pseudo_inverse(self):
        U = np.eye(15)
        U[3, 3] = 0.0
        rec = record(np.zeros(15), U)
        x = np.zeros(15)
        x[3] = 0.5
        assert chi2(x, rec) == pytest.approx(0.0, abs=1e-20)

    @given(seeds)
    def test_invariant_under_coordinate_permutation(self, seed):
        rec, rng = correlated_record(seed)
        x = rng.uniform(-1, 1, 15)
        perm = rng.permutation(15)
        permuted = record(rec.observed[perm], rec.covariance[np.ix_(perm, perm)])
        assert chi2(x[perm], permuted) == pytest.approx(chi2(x, rec), rel=1e-9)


class TestFitCentral:
    def test_singlet_chsh(self):
        o = np.concatenate([np.zeros(6), -np.eye(3).ravel()])
        value, x = fit_central(record(o, 1e-4 * np.eye(15)), "chsh")
        assert value == pytest.approx(2.0, abs=1e-12)

    def test_box_clamp_with_diagonal_covariance(self):
        o = np.full(15, 0.1)
        o[C11] = 1.1
        _, x = fit_central(record(o, np.diag(np.linspace(0.01, 0.05, 15))), coordinate(0))
        assert x[C11] == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(np.delete(x, C11), 0.1, atol=1e-10)


class TestProfile:
    def test_zero_at_interior_observation(self):
        rec, _ = correlated_record(2)
        obs = linear(np.arange(15) / 15.0)
        assert profile_at(rec, obs, obs(rec.observed)) == pytest.approx(0.0, abs=1e-10)

    def test_one_dimensional_toy(self):
        assert profile_at(toy_record(), coordinate(C11), 0.5) == pytest.approx(4.0, rel=1e-6)

    def test_singlet_chsh_at_central_value(self):
        o = np.concatenate([np.zeros(6), -0.98 * np.eye(3).ravel()])
        rec = record(o, 1e-4 * np.eye(15))
        central, _ = fit_central(rec, "chsh")
        assert profile_at(rec, "chsh", central) == pytest.approx(0.0, abs=1e-8)

    def test_target_outside_domain(self):
        with pytest.raises(InfeasibleTargetError):
            profile_at(toy_record(), "chsh", 2.5)

    @given(seeds, st.floats(min_value=-3.0, max_value=3.0))
    @settings(max_examples=20)
    def test_linear_matches_analytic_gaussian(self, seed, k):
        rec, rng = correlated_record(seed)
        g = rng.standard_normal(15)
        sigma = math.sqrt(g @ rec.covariance @ g)
        t = float(g @ rec.observed) + k * sigma
        assert profile_at(rec, linear(g), t) == pytest.approx(k * k, abs=1e-3)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_agrees_with_dense_random_search(self, seed):
        rec, rng = correlated_record(seed)
        g = rng.standard_normal(15)
        obs = linear(g)
        t = float(g @ rec.observed) + 1.5 * math.sqrt(g @ rec.covariance @ g)
        fast = profile_at(rec, obs, t)
        assert fast == pytest.approx(dense_profile_oracle(rec, obs, t, 50, seed), abs=1e-3)

    @pytest.mark.parametrize("seed", [3, 4])
    def test_quadratic_observable_agrees_with_dense_random_search(self, seed):
        rec, _ = correlated_record(seed)
        obs = Observable("norm2", lambda x: float(x @ x), gradient=lambda x: 2.0 * x)
        t = 1.05 * obs(rec.observed)
        fast = profile_at(rec, obs, t)
        oracle = dense_profile_oracle(rec, obs, t, 100, seed)
        assert fast <= oracle + 1e-3
        assert fast == pytest.approx(oracle, abs=1e-3)


class TestScan:
    def test_one_dimensional_toy(self):
        res = scan_observable(toy_record(), coordinate(C11))
        assert res.central == pytest.approx(0.3, abs=1e-12)
        assert res.ci68_low == pytest.approx(0.2, abs=1e-3)
        assert res.ci68_high == pytest.approx(0.4, abs=1e-3)
        assert not res.at_boundary_low and not res.at_boundary_high

    def test_curve_minimum_and_bracketing(self):
        rec, rng = correlated_record(8)
        res = scan_observable(rec, linear(rng.standard_normal(15)), options=ScanOptions(n_points=41))
        assert min(c for _, c in res.curve) == pytest.approx(0.0, abs=1e-6)
        assert res.ci68_low <= res.central <= res.ci68_high

    def test_symmetric_curve_gives_symmetric_interval(self):
        res = scan_observable(toy_record(0.0, 0.2), coordinate(C11), options=ScanOptions(n_points=51))
        assert res.err_low == pytest.approx(res.err_high, abs=0.2 * 5 / 25)

    def test_quadratic_curve_is_unimodal(self):
        rec, rng = correlated_record(9)
        res = scan_observable(rec, linear(rng.standard_normal(15)), options=ScanOptions(n_points=41))
        c = np.array([c for _, c in res.curve])
        k = int(np.argmin(c))
        assert np.all(np.diff(c[: k + 1]) <= 1e-9)
        assert np.all(np.diff(c[k:]) >= -1e-9)

    def test_explicit_grid_must_contain_central(self):
        with pytest.raises(GridTooNarrowError):
            scan_observable(toy_record(), coordinate(C11), GridSpec(0.5, 0.9, 11))

    def test_narrow_grid_raises(self):
        with pytest.raises(GridTooNarrowError):
            scan_observable(toy_record(), coordinate(C11), GridSpec(0.25, 0.35, 11))

    def test_grid_spec_parsing(self):
        assert GridSpec.parse("0:1:5") == GridSpec(0.0, 1.0, 5)
        with pytest.raises(ValidationError):
            GridSpec.parse("0:1")

    def test_boundary_quotes_distance_to_zero(self):
        o = np.zeros(15)
        o[C11] = 0.02
        rec = record(o, 0.03**2 * np.eye(15))
        res = scan_observable(rec, "magic", options=ScanOptions(n_points=41))
        assert res.at_boundary_low
        assert res.ci68_low == 0.0
        assert res.err_low == pytest.approx(res.central, abs=0.0)
        assert not res.at_boundary_high

    def test_threads_do_not_change_the_curve(self):
        rec, rng = correlated_record(10)
        obs = linear(rng.standard_normal(15))
        a = scan_observable(rec, obs, options=ScanOptions(n_points=21, threads=1))
        b = scan_observable(rec, obs, options=ScanOptions(n_points=21, threads=2))
        assert a.curve == b.curve


class TestSignificance:
    def test_gaussian_toy(self):
        res = scan_observable(toy_record(0.3, 0.1), coordinate(C11, threshold=0.0))
        assert threshold_significance(res, 0.0) == pytest.approx(3.0, abs=1e-3)

    def test_below_threshold_is_zero(self):
        res = scan_observable(toy_record(0.3, 0.1), coordinate(C11, threshold=0.5))
        assert res.significance == 0.0
        assert res.significance_side == "below"

    @given(st.floats(min_value=0.2, max_value=5.0))
    @settings(max_examples=10)
    def test_invariant_under_positive_rescaling(self, k):
        rec = toy_record(0.3, 0.1)
        base = scan_observable(rec, coordinate(C11, threshold=0.05), options=ScanOptions(n_points=21))
        e = np.zeros(15)
        e[C11] = k
        scaled = Observable("scaled", lambda x: k * float(x[C11]), threshold=0.05 * k, gradient=lambda x: e)
        res = scan_observable(rec, scaled, options=ScanOptions(n_points=21))
        assert res.significance == pytest.approx(base.significance, abs=1e-4)

    def test_steering_like_curve_formats_as_reported(self):
        # value = f(z) with z the pull of C11: f(0) = 8.55, f(+-1) = 8.55 +- 0.65,
        # and the cubic term puts the 2 pi threshold at z = -3.6
        b = (2 * math.pi - 8.55 + 0.65 * 3.6) / (3.6 - 3.6**3)

        def f(x):
            z = (x[C11] - 0.3) / 0.1
            return 8.55 + 0.65 * z + b * (z**3 - z)

        def grad(x):
            z = (x[C11] - 0.3) / 0.1
            g = np.zeros(15)
            g[C11] = (0.65 + b * (3 * z * z - 1.0)) / 0.1
            return g

        obs = Observable("steering", f, (0.0, 4 * math.pi), 2 * math.pi, gradient=grad)
        res = scan_observable(toy_record(), obs)
        text = format_entry(ObservableSummary.from_scan(res))
        assert res.significance == pytest.approx(3.6, abs=1e-3)
        assert text == "8.55_{-0.65}^{+0.65}[3.6σ]"
