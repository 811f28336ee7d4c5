"""Risk-category tables, hazard ratios and trajectory curves."""

import math

import numpy as np
import pytest

from addamsfrailty import (
    AddamsParameters,
    ExponentialBaseline,
    FrailtyLink,
    ModelSpec,
    classify_branch,
    conditional_moments,
    hr_across,
    hr_across_quantile_matched,
    hr_within,
    hr_within_table,
    laplace,
    pinned_result,
    rc_table,
    rfv,
    rfv_parameter_table,
    support_value,
    trajectories,
)
from addamsfrailty.errors import ContinuousBranch, OutOfSupport, UndefinedRatio
from addamsfrailty.family import count_distribution

# published serological example: two strata, shifted scaled neg. binomial
MALE = AddamsParameters(-0.502, 83.447, 1.0)
FEMALE = AddamsParameters(-2.882, 90.996, 0.328)


def two_stratum_fit():
    link = FrailtyLink(
        design={"m": (1.0, 0.0), "f": (1.0, 1.0)},
        zeta=(-0.502, -2.882 + 0.502),
        kappa=(math.log(83.447), math.log(90.996 / 83.447)),
        beta0=(0.0, math.log(0.328)),
        reference="m",
    )
    spec = ModelSpec(
        units=("u1", "u2"),
        baselines={"u1": ExponentialBaseline(0.05), "u2": ExponentialBaseline(0.03)},
        frailty_link=link,
    )
    return pinned_result(spec)


class TestHrWithin:
    def test_no_cure_formula(self):
        branch = classify_branch(MALE)
        # z ratios: (nu + k) / (nu + k - 1)
        for k in (1, 2, 5):
            expected = support_value(branch, k + 1) / support_value(branch, k)
            assert hr_within(branch, k) == pytest.approx(expected, rel=1e-12)

    def test_cure_branch_infinite_then_rational(self):
        branch = classify_branch(AddamsParameters(1.0, 2.0))
        assert hr_within(branch, 1) == math.inf
        assert hr_within(branch, 2) == pytest.approx(2.0)
        assert hr_within(branch, 3) == pytest.approx(1.5)

    def test_binomial_support_cap(self):
        branch = classify_branch(AddamsParameters(2.5, 2.0))   # 3 support points
        hr_within(branch, 2)
        with pytest.raises(OutOfSupport):
            hr_within(branch, 3)

    def test_continuous_branch_rejected(self):
        with pytest.raises(ContinuousBranch):
            hr_within(classify_branch(AddamsParameters(0.0, 2.0)), 1)

    def test_published_value(self):
        assert hr_within(classify_branch(MALE), 1) == pytest.approx(84.949, abs=1.0)


class TestHrAcross:
    def test_same_rc_ratio(self):
        bm, bf = classify_branch(MALE), classify_branch(FEMALE)
        expected = support_value(bf, 2) / support_value(bm, 2)
        assert hr_across(bf, bm, 2) == pytest.approx(expected, rel=1e-12)

    def test_limit_is_scale_ratio(self):
        # z_f(k)/z_m(k) -> psi_f/psi_m as k grows
        bm, bf = classify_branch(MALE), classify_branch(FEMALE)
        assert hr_across(bf, bm, 10000) == pytest.approx(
            bf.psi / bm.psi, rel=1e-3
        )
        assert bf.psi / bm.psi == pytest.approx(1.883, abs=0.01)

    def test_zero_over_positive_and_undefined(self):
        cure = classify_branch(AddamsParameters(1.0, 2.0))
        no_cure = classify_branch(MALE)
        assert hr_across(cure, no_cure, 1) == 0.0
        assert hr_across(no_cure, cure, 1) == math.inf
        with pytest.raises(UndefinedRatio):
            hr_across(cure, cure, 1)


class TestQuantileMatching:
    @staticmethod
    def brute_force(branch_i, branch_j, k, k_limit=400):
        # scan all k' and pick by the interval rule, ties to smaller k'
        dist_i = count_distribution(branch_i)
        dist_j = count_distribution(branch_j)
        lo = 0.0 if k == 1 else float(dist_i.cdf(k - 2))
        hi = float(dist_i.cdf(k - 1))
        cap = branch_j.b + 1 if branch_j.b is not None else k_limit
        best, best_score = None, None
        for kp in range(1, cap + 1):
            p = float(dist_j.cdf(kp - 1))
            inside = lo <= p < hi
            score = 0.0 if inside else max(lo - p, 0.0) + max(p - hi, 0.0)
            if best_score is None or score < best_score - 1e-15:
                best, best_score = kp, score
        return best

    def test_matches_brute_force_scan(self, rng):
        pairs = [
            (MALE, FEMALE),
            (FEMALE, MALE),
            (AddamsParameters(-1.0, 5.0), AddamsParameters(-0.2, 1.0)),
            (AddamsParameters(1.0, 2.0), AddamsParameters(-1.0, 5.0)),
            (AddamsParameters(2.5, 2.0), AddamsParameters(-1.0, 5.0)),
        ]
        for pi, pj in pairs:
            bi, bj = classify_branch(pi), classify_branch(pj)
            k_cap = bi.b + 1 if bi.b is not None else 6
            for k in range(1, k_cap + 1):
                expected = self.brute_force(bi, bj, k)
                got_k, got_hr = hr_across_quantile_matched(bi, bj, k)
                assert got_k == expected, (pi, pj, k)
                zi, zj = support_value(bi, k), support_value(bj, got_k)
                if zj == 0.0:
                    assert got_hr == math.inf
                else:
                    assert got_hr == pytest.approx(zi / zj, rel=1e-12)

    def test_published_first_rc_value(self):
        bm, bf = classify_branch(MALE), classify_branch(FEMALE)
        _, hr = hr_across_quantile_matched(bf, bm, 1)
        assert hr == pytest.approx(1.684, abs=0.01)


class TestRcTable:
    def test_published_first_row(self):
        table = rc_table(two_stratum_fit(), k_max=3)
        first_m = next(r for r in table.rows if r.stratum == "m" and r.k == 1)
        assert first_m.cum_prob.value == pytest.approx(0.941, abs=0.002)
        assert first_m.z.value == pytest.approx(0.006, abs=0.001)

    def test_rows_cover_strata_and_k(self):
        table = rc_table(two_stratum_fit(), k_max=3)
        assert {(r.stratum, r.k) for r in table.rows} == {
            (s, k) for s in ("m", "f") for k in (1, 2, 3)
        }
        assert all(p.reference == "m" for p in table.pairs)
        assert {p.k for p in table.pairs} == {1, 2, 3}

    def test_pinned_fit_has_no_cis(self):
        table = rc_table(two_stratum_fit(), k_max=2)
        assert all(r.z.lo is None for r in table.rows)

    def test_hr_within_table_matches_direct_formula(self):
        entries = hr_within_table(two_stratum_fit(), k_max=4)
        bm = classify_branch(MALE)
        m_entries = [e for e in entries if e["stratum"] == "m"]
        assert [e["k"] for e in m_entries] == [1, 2, 3]
        for e in m_entries:
            assert e["hr"].value == pytest.approx(hr_within(bm, e["k"]), rel=1e-12)


class TestRfvParameterTable:
    def test_published_derived_parameters(self):
        table = rfv_parameter_table(two_stratum_fit())
        m = table["m"]
        assert m["psi"].value == pytest.approx(0.502, abs=0.002)
        assert m["nu"].value == pytest.approx(0.012, abs=0.002)
        assert m["pi"].value == pytest.approx(0.006, abs=0.002)
        f = table["f"]
        assert f["psi"].value == pytest.approx(0.945, abs=0.002)
        assert f["nu"].value == pytest.approx(0.011, abs=0.002)
        assert f["pi"].value == pytest.approx(0.031, abs=0.002)
        assert m["b"] is None and m["lambda_star"] is None

    def test_continuous_stratum_has_no_derived_fields(self):
        link = FrailtyLink.for_factor(["a"], kappa0=math.log(2.0))
        from addamsfrailty.hazard import BranchRegime
        spec = ModelSpec(
            units=("u",), baselines={"u": ExponentialBaseline(0.1)},
            frailty_link=link, branch_regimes={"a": BranchRegime("gamma")},
        )
        table = rfv_parameter_table(pinned_result(spec))
        assert table["a"]["alpha"].value == 0.0
        assert table["a"]["psi"] is None and table["a"]["nu"] is None


class TestTrajectories:
    def test_rfv_curve_matches_closed_form(self):
        result = two_stratum_fit()
        times = np.linspace(0.0, 40.0, 9)
        curves = trajectories(result, "m", times=times, with_ci=False)
        rfv_curve = next(c for c in curves if c.kind == "rfv")
        lam = 0.05 * times + 0.03 * times    # both exponential units aggregate
        np.testing.assert_allclose(rfv_curve.values, rfv(MALE, lam), rtol=1e-12)

    def test_prevalence_curve_matches_laplace(self):
        result = two_stratum_fit()
        times = np.linspace(0.0, 40.0, 9)
        curves = trajectories(result, "f", times=times, with_ci=False)
        prev = next(c for c in curves if c.kind == "prevalence" and c.unit == "u1")
        np.testing.assert_allclose(
            prev.values, 1.0 - laplace(FEMALE, 0.05 * times), rtol=1e-12
        )

    def test_cond_mean_curve(self):
        result = two_stratum_fit()
        times = np.array([0.0, 10.0])
        curves = trajectories(result, "m", times=times, with_ci=False)
        mean = next(c for c in curves if c.kind == "cond_mean")
        assert mean.values[0] == pytest.approx(1.0)   # E(Z) = mu at t = 0
        expected, _, _ = conditional_moments(MALE, 0.08 * 10.0)
        assert mean.values[1] == pytest.approx(expected, rel=1e-10)

    def test_grid_must_increase(self):
        with pytest.raises(ValueError):
            trajectories(two_stratum_fit(), "m", times=[0.0, 1.0, 1.0])
