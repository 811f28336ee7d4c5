"""Post-fit interpretation: latent risk categories and trajectories.

Risk category (RC) k of a stratum is the k-th ordered support point of
its discrete frailty law.  Hazard ratios between adjacent RCs within a
stratum (HR_W) and between strata at the same or quantile-matched RC
(HR_A) are reported together with the RC probability distribution, RFV
and conditional-mean trajectories, and marginal prevalence curves.

Infinite and undefined ratios are distinct: HR values may be ``inf``
(one stratum's RC is non-susceptible) while the 0/0 case raises
:class:`~addamsfrailty.errors.UndefinedRatio` and is reported as
"undef" downstream, never as NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContinuousBranch, OutOfSupport, UndefinedRatio
from .estimation import FitResult, delta_method_se, transformed_ci
from .family import (
    AddamsParameters,
    BranchKind,
    FrailtyBranch,
    classify_branch,
    conditional_moments,
    count_distribution,
    laplace,
    rfv,
    support_and_pmf,
    support_value,
)

__all__ = [
    "Estimate",
    "RCRow",
    "RCPair",
    "RCTable",
    "TrajectoryCurve",
    "hr_within",
    "hr_across",
    "hr_across_quantile_matched",
    "hr_within_table",
    "rc_table",
    "rfv_parameter_table",
    "trajectories",
]


@dataclass(frozen=True)
class Estimate:
    value: float
    lo: Optional[float] = None
    hi: Optional[float] = None


@dataclass(frozen=True)
class RCRow:
    stratum: str
    k: int
    z: Estimate
    prob: float
    cum_prob: Estimate


@dataclass(frozen=True)
class RCPair:
    """Cross-stratum comparison at RC k against the reference stratum."""

    stratum: str
    reference: str
    k: int
    cum_prob_ratio: Estimate
    hr_across: Optional[Estimate]   # None encodes the undefined 0/0 case


@dataclass(frozen=True)
class RCTable:
    reference: str
    rows: Tuple[RCRow, ...]
    pairs: Tuple[RCPair, ...]


@dataclass(frozen=True)
class TrajectoryCurve:
    kind: str                      # "rfv" | "cond_mean" | "prevalence"
    stratum: str
    unit: Optional[str]
    times: np.ndarray
    values: np.ndarray
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None


def hr_within(branch: FrailtyBranch, k: int) -> float:
    """Hazard ratio of RC k+1 versus RC k within one stratum.

    Equals z_(k+1) / z_(k); infinite at k = 1 when a cure fraction exists.
    """
    if not branch.is_discrete:
        raise ContinuousBranch("within-stratum HR needs a discrete branch")
    if k < 1:
        raise ValueError("k must be >= 1")
    if branch.kind is BranchKind.SCALED_BINOMIAL and k + 1 > branch.b + 1:
        raise OutOfSupport(f"RC {k + 1} beyond binomial support")
    if branch.alpha < 0:
        return (branch.nu + k) / (branch.nu + k - 1)
    if k == 1:
        return math.inf
    return k / (k - 1)


def hr_across(branch_i: FrailtyBranch, branch_j: FrailtyBranch, k: int) -> float:
    """Hazard ratio z_{i,(k)} / z_{j,(k)} between two strata at the same RC."""
    zi = support_value(branch_i, k)
    zj = support_value(branch_j, k)
    if zi == 0.0 and zj == 0.0:
        raise UndefinedRatio(f"RC {k} is non-susceptible in both strata (0/0)")
    if zj == 0.0:
        return math.inf
    return zi / zj


def hr_across_quantile_matched(branch_i: FrailtyBranch, branch_j: FrailtyBranch,
                               k: int) -> Tuple[int, float]:
    """Across-stratum HR against the quantile-matched RC of the other stratum.

    Picks the k' with P(Z_j <= z_{j,(k')}) inside
    [P(Z_i <= z_{i,(k-1)}), P(Z_i <= z_{i,(k)})); if no such k' exists, the
    k' whose cumulative probability is closest to that interval (ties to
    the smaller k').
    """
    if not (branch_i.is_discrete and branch_j.is_discrete):
        raise ContinuousBranch("quantile matching needs discrete branches")
    if k < 1:
        raise ValueError("k must be >= 1")
    dist_i = count_distribution(branch_i)
    dist_j = count_distribution(branch_j)
    lo = 0.0 if k == 1 else float(dist_i.cdf(k - 2))
    hi = float(dist_i.cdf(k - 1))
    k_cap = branch_j.b + 1 if branch_j.kind is BranchKind.SCALED_BINOMIAL else None
    if lo <= 0.0:
        k_prime = 1
    else:
        k_prime = int(dist_j.ppf(lo)) + 1   # smallest k' with cdf(k'-1) >= lo
    if k_cap is not None:
        k_prime = min(k_prime, k_cap)
    p = float(dist_j.cdf(k_prime - 1))
    if not (lo <= p < hi):
        candidates = [(max(lo - p, 0.0) + max(p - hi, 0.0), k_prime)]
        if k_prime > 1:
            p_prev = float(dist_j.cdf(k_prime - 2))
            candidates.append((max(lo - p_prev, 0.0) + max(p_prev - hi, 0.0), k_prime - 1))
        if k_cap is None or k_prime + 1 <= k_cap:
            p_next = float(dist_j.cdf(k_prime))
            candidates.append((max(lo - p_next, 0.0) + max(p_next - hi, 0.0), k_prime + 1))
        candidates.sort(key=lambda c: (c[0], c[1]))
        k_prime = candidates[0][1]
    zi = support_value(branch_i, k)
    zj = support_value(branch_j, k_prime)
    if zi == 0.0 and zj == 0.0:
        raise UndefinedRatio("quantile-matched RCs are both non-susceptible")
    return k_prime, math.inf if zj == 0.0 else zi / zj


# ---------------------------------------------------------------------------
# Delta-method plumbing over a fitted model
# ---------------------------------------------------------------------------

def _branch_at(fit: FitResult, level: str, theta) -> FrailtyBranch:
    return classify_branch(fit.layout.build_spec(theta).frailty_params(level))


def _estimate(fit: FitResult, fn, value: float, domain: str) -> Estimate:
    """Delta-method CI of fn(theta) around the fitted point."""
    if fit.n_free == 0:
        return Estimate(value)       # no uncertainty available, no CI
    se = delta_method_se(fn, fit.theta, fit.covariance)
    if domain == "unit_interval" and not (0.0 < value < 1.0):
        return Estimate(value, value, value)
    lo, hi = transformed_ci(value, se, domain)
    return Estimate(value, lo, hi)


def rc_table(fit: FitResult, strata: Optional[Sequence[str]] = None,
             k_max: int = 5, reference: Optional[str] = None) -> RCTable:
    """RC distribution per stratum plus across-stratum comparisons.

    All strata must be on a discrete branch; the gamma limit raises
    :class:`ContinuousBranch`.  CIs use the ln transform for support
    points and hazard ratios, ln(-ln) for cumulative probabilities.
    """
    link = fit.spec.frailty_link
    strata = list(strata) if strata is not None else list(link.levels)
    reference = reference if reference is not None else link.reference
    branches = {
        lvl: classify_branch(fit.spec.frailty_params(lvl))
        for lvl in dict.fromkeys(list(strata) + [reference])
    }
    rows: List[RCRow] = []
    for lvl in strata:
        for point in support_and_pmf(branches[lvl], k_max):
            k = point.k
            z_est = (
                _estimate(
                    fit,
                    lambda th, lvl=lvl, k=k: support_value(_branch_at(fit, lvl, th), k),
                    point.z, "positive",
                )
                if point.z > 0 else Estimate(0.0, 0.0, 0.0)
            )
            cum_est = _estimate(
                fit,
                lambda th, lvl=lvl, k=k: float(
                    count_distribution(_branch_at(fit, lvl, th)).cdf(k - 1)
                ),
                point.cum_prob, "unit_interval",
            )
            rows.append(RCRow(lvl, k, z_est, point.prob, cum_est))
    pairs: List[RCPair] = []
    for lvl in strata:
        if lvl == reference or not branches[reference].is_discrete:
            continue
        for k in range(1, k_max + 1):
            if branches[lvl].kind is BranchKind.SCALED_BINOMIAL and k > branches[lvl].b + 1:
                break
            cum_l = float(count_distribution(branches[lvl]).cdf(k - 1))
            cum_r = float(count_distribution(branches[reference]).cdf(k - 1))
            ratio = _estimate(
                fit,
                lambda th, lvl=lvl, k=k: float(
                    count_distribution(_branch_at(fit, lvl, th)).cdf(k - 1)
                ) / float(
                    count_distribution(_branch_at(fit, reference, th)).cdf(k - 1)
                ),
                cum_l / cum_r, "positive",
            )
            try:
                hr_value = hr_across(branches[lvl], branches[reference], k)
            except UndefinedRatio:
                hr_est = None
            else:
                if math.isinf(hr_value):
                    hr_est = Estimate(math.inf)
                else:
                    hr_est = _estimate(
                        fit,
                        lambda th, lvl=lvl, k=k: hr_across(
                            _branch_at(fit, lvl, th), _branch_at(fit, reference, th), k
                        ),
                        hr_value, "positive",
                    )
            pairs.append(RCPair(lvl, reference, k, ratio, hr_est))
    return RCTable(reference=reference, rows=tuple(rows), pairs=tuple(pairs))


def hr_within_table(fit: FitResult, strata: Optional[Sequence[str]] = None,
                    k_max: int = 5) -> List[Dict]:
    """Adjacent-RC hazard ratios (k+1 vs k) per stratum with delta CIs.

    Continuous (gamma-limit) strata are skipped; the infinite ratio at
    k = 1 under a cure fraction is reported without a CI.
    """
    link = fit.spec.frailty_link
    strata = list(strata) if strata is not None else list(link.levels)
    entries: List[Dict] = []
    for lvl in strata:
        branch = classify_branch(fit.spec.frailty_params(lvl))
        if not branch.is_discrete:
            continue
        cap = branch.b + 1 if branch.kind is BranchKind.SCALED_BINOMIAL else None
        for k in range(1, k_max):
            if cap is not None and k + 1 > cap:
                break
            value = hr_within(branch, k)
            if math.isinf(value):
                est = Estimate(math.inf)
            else:
                est = _estimate(
                    fit,
                    lambda th, lvl=lvl, k=k: hr_within(_branch_at(fit, lvl, th), k),
                    value, "positive",
                )
            entries.append({"stratum": lvl, "k": k, "hr": est})
    return entries


def rfv_parameter_table(fit: FitResult,
                        strata: Optional[Sequence[str]] = None) -> Dict[str, Dict[str, Optional[Estimate]]]:
    """Frailty-law parameters per stratum with delta-method CIs.

    Rows hold alpha, gamma, mu plus the branch-derived scale (psi),
    count size (nu), success probability (pi) and, where applicable,
    trials (b) and Poisson rate (lambda_star).  Entries that do not
    apply to a branch are None.
    """
    link = fit.spec.frailty_link
    strata = list(strata) if strata is not None else list(link.levels)
    table: Dict[str, Dict[str, Optional[Estimate]]] = {}

    def param_at(theta, lvl, name):
        return getattr(fit.layout.build_spec(theta).frailty_params(lvl), name)

    def derived_at(theta, lvl, name):
        return getattr(classify_branch(fit.layout.build_spec(theta).frailty_params(lvl)), name)

    for lvl in strata:
        params = fit.spec.frailty_params(lvl)
        branch = classify_branch(params)
        row: Dict[str, Optional[Estimate]] = {
            "alpha": _estimate(fit, lambda th, lvl=lvl: param_at(th, lvl, "alpha"),
                               params.alpha, "unconstrained"),
            "gamma": _estimate(fit, lambda th, lvl=lvl: param_at(th, lvl, "gamma"),
                               params.gamma, "positive"),
            "mu": _estimate(fit, lambda th, lvl=lvl: param_at(th, lvl, "mu"),
                            params.mu, "positive"),
        }
        for name, domain in (("psi", "positive"), ("nu", "positive"),
                             ("pi", "unit_interval"), ("lambda_star", "positive")):
            value = getattr(branch, name)
            row[name] = (
                _estimate(fit, lambda th, lvl=lvl, name=name: derived_at(th, lvl, name),
                          value, domain)
                if value is not None else None
            )
        row["b"] = Estimate(float(branch.b)) if branch.b is not None else None
        table[lvl] = row
    return table


def _aggregate_hazard(fit: FitResult, theta, level: str, units: Sequence[str],
                      profile: Dict[str, float], times: np.ndarray) -> np.ndarray:
    spec = fit.layout.build_spec(theta)
    total = np.zeros_like(times)
    for unit in units:
        lp = spec.predictors[unit].value(profile) if spec.predictors[unit].covariate_names else 0.0
        total = total + math.exp(lp) * spec.baseline_for(level, unit).cumulative(times)
    return total


def trajectories(fit: FitResult, stratum: str, units: Optional[Sequence[str]] = None,
                 times: Optional[Sequence[float]] = None,
                 covariate_profile: Optional[Dict[str, float]] = None,
                 with_ci: bool = True) -> List[TrajectoryCurve]:
    """RFV, conditional-mean, and per-unit marginal prevalence curves.

    The conditioning hazard is the covariate-free aggregate over ``units``
    by default; pass ``covariate_profile`` to evaluate at a profile.
    """
    units = list(units) if units is not None else list(fit.spec.units)
    grid = np.asarray(times if times is not None else np.linspace(0.0, 80.0, 81), dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    cov_names = sorted({
        n for u in units for n in fit.spec.predictors[u].covariate_names
    })
    profile = dict.fromkeys(cov_names, 0.0)
    if covariate_profile:
        profile.update(covariate_profile)
    params = fit.spec.frailty_params(stratum)
    lam = _aggregate_hazard(fit, fit.theta, stratum, units, profile, grid)
    curves: List[TrajectoryCurve] = []

    def band(fn_of_theta, values, domain):
        if not with_ci or fit.n_free == 0:
            return None, None
        lo = np.empty_like(values)
        hi = np.empty_like(values)
        for i, value in enumerate(values):
            boundary = (
                (domain == "positive" and value <= 0)
                or (domain == "unit_interval" and not 0.0 < value < 1.0)
            )
            if boundary:
                lo[i], hi[i] = value, value
                continue
            se = delta_method_se(lambda th, i=i: fn_of_theta(th, i), fit.theta, fit.covariance)
            lo[i], hi[i] = transformed_ci(value, se, domain)
        return lo, hi

    rfv_values = rfv(params, lam)

    def rfv_at(theta, i):
        spec = fit.layout.build_spec(theta)
        p = spec.frailty_params(stratum)
        lam_i = _aggregate_hazard(fit, theta, stratum, units, profile, grid[i:i + 1])[0]
        return rfv(p, lam_i)

    lo, hi = band(rfv_at, rfv_values, "positive")
    curves.append(TrajectoryCurve("rfv", stratum, None, grid, rfv_values, lo, hi))

    cond_mean = conditional_moments(params, lam)[0]

    def mean_at(theta, i):
        spec = fit.layout.build_spec(theta)
        p = spec.frailty_params(stratum)
        lam_i = _aggregate_hazard(fit, theta, stratum, units, profile, grid[i:i + 1])[0]
        return conditional_moments(p, lam_i)[0]

    lo, hi = band(mean_at, cond_mean, "positive")
    curves.append(TrajectoryCurve("cond_mean", stratum, None, grid, cond_mean, lo, hi))

    for unit in units:
        spec = fit.spec
        lp = spec.predictors[unit].value(profile) if spec.predictors[unit].covariate_names else 0.0
        lam_u = math.exp(lp) * spec.baseline_for(stratum, unit).cumulative(grid)
        prevalence = 1.0 - laplace(params, lam_u)

        def prev_at(theta, i, unit=unit):
            spec_t = fit.layout.build_spec(theta)
            p = spec_t.frailty_params(stratum)
            lp_t = (
                spec_t.predictors[unit].value(profile)
                if spec_t.predictors[unit].covariate_names else 0.0
            )
            lam_i = math.exp(lp_t) * spec_t.baseline_for(stratum, unit).cumulative(grid[i])
            return 1.0 - laplace(p, lam_i)

        lo, hi = band(prev_at, prevalence, "unit_interval")
        curves.append(TrajectoryCurve("prevalence", stratum, unit, grid, prevalence, lo, hi))
    return curves
