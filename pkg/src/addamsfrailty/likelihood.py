"""Marginal log-likelihood for clustered current-status data.

For a cluster with event set d and per-unit cumulative hazards
Lambda^(j), the cluster contribution is

    log sum_{A subset of d} (-1)^|A| L(Lambda^(A) + Lambda^(-d))

with L the frailty Laplace transform.  The alternating sum is evaluated
in Gray-code order with compensated summation grouped by subset parity;
mathematically it is a probability in (0, 1], and tiny negatives from
round-off are clamped (counted in ``diagnostics``).

Two evaluation paths exist: :func:`cluster_loglik` is the scalar
reference, and :class:`LikelihoodWorkspace` evaluates a whole dataset
with vectorized numpy kernels, grouping clusters that share a stratum
and event pattern.  Both must agree; the tests enforce it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .data import Cluster, CurrentStatusDataset
from .errors import MissingCovariate, NonFiniteEvaluation, NonPositiveProbability
from .family import log_laplace
from .hazard import ModelSpec

__all__ = [
    "cluster_loglik",
    "total_loglik",
    "LikelihoodWorkspace",
    "numeric_gradient",
    "diagnostics",
]

_CLAMP_TOL = 1e-12
_CLAMP_VALUE = 1e-300


class _Diagnostics:
    """Counts round-off clamps of the inclusion-exclusion sum."""

    def __init__(self):
        self.clamped_probabilities = 0

    def reset(self):
        self.clamped_probabilities = 0


diagnostics = _Diagnostics()


def _cluster_level(spec: ModelSpec, cluster: Cluster) -> str:
    return cluster.stratum if cluster.stratum is not None else spec.frailty_link.reference


def cluster_loglik(spec: ModelSpec, cluster: Cluster) -> float:
    """Log-probability of one cluster's current-status outcome."""
    level = _cluster_level(spec, cluster)
    params = spec.frailty_params(level)
    lam = [
        spec.unit_cumulative_hazard(level, r.unit, r.covariates, r.time)
        for r in cluster.records
    ]
    event_lams = [l for l, r in zip(lam, cluster.records) if r.event == 1]
    rest = math.fsum(l for l, r in zip(lam, cluster.records) if r.event == 0)
    k = len(event_lams)
    even_terms: List[float] = []
    odd_terms: List[float] = []
    # Gray-code subset walk: one hazard add/subtract per step
    lam_subset = 0.0
    gray = 0
    parity = 0
    even_terms.append(math.exp(log_laplace(params, rest)))  # empty subset
    for m in range(1, 1 << k):
        new_gray = m ^ (m >> 1)
        flipped = new_gray ^ gray
        j = flipped.bit_length() - 1
        if new_gray & flipped:
            lam_subset += event_lams[j]
            parity += 1
        else:
            lam_subset -= event_lams[j]
            parity -= 1
        gray = new_gray
        value = math.exp(log_laplace(params, rest + lam_subset))
        (odd_terms if parity % 2 else even_terms).append(value)
    prob = math.fsum(even_terms) - math.fsum(odd_terms)
    if prob <= 0.0:
        if prob > -_CLAMP_TOL:
            diagnostics.clamped_probabilities += 1
            prob = _CLAMP_VALUE
        else:
            raise NonPositiveProbability(
                f"cluster {cluster.cluster_id!r}: inclusion-exclusion sum {prob}"
            )
    return math.log(prob)


@dataclass
class _Group:
    level: str
    units: Tuple[str, ...]
    events: Tuple[int, ...]
    times: np.ndarray           # [n, m]
    designs: List[Optional[np.ndarray]]  # per unit slot, [n, p] or None
    weights: np.ndarray         # [n]
    cluster_idx: np.ndarray     # positions in the original cluster order
    cluster_ids: List[str]
    subset_matrix: np.ndarray   # [2^K, K] binary
    even_cols: np.ndarray
    odd_cols: np.ndarray


class LikelihoodWorkspace:
    """Dataset compiled for repeated likelihood evaluation.

    The grouping depends only on the data and the model structure (unit
    list, covariate names, stratum levels), never on parameter values, so
    one workspace serves every optimizer iteration.
    """

    def __init__(self, spec: ModelSpec, data: CurrentStatusDataset):
        unit_order = {u: i for i, u in enumerate(spec.units)}
        buckets: Dict[tuple, list] = {}
        for pos, cluster in enumerate(data.clusters):
            level = _cluster_level(spec, cluster)
            recs = sorted(cluster.records, key=lambda r: unit_order[r.unit])
            key = (level, tuple(r.unit for r in recs), tuple(r.event for r in recs))
            buckets.setdefault(key, []).append((pos, cluster, recs))
        self.n_clusters = len(data.clusters)
        self.weights = np.array([c.weight for c in data.clusters])
        self.groups: List[_Group] = []
        for (level, units, events), members in buckets.items():
            n = len(members)
            m = len(units)
            times = np.empty((n, m))
            designs: List[Optional[np.ndarray]] = []
            for j, u in enumerate(units):
                names = spec.predictors[u].covariate_names
                designs.append(np.empty((n, len(names))) if names else None)
            weights = np.empty(n)
            idx = np.empty(n, dtype=int)
            ids = []
            for row, (pos, cluster, recs) in enumerate(members):
                idx[row] = pos
                weights[row] = cluster.weight
                ids.append(cluster.cluster_id)
                for j, r in enumerate(recs):
                    times[row, j] = r.time
                    names = spec.predictors[r.unit].covariate_names
                    if names:
                        for col, nm in enumerate(names):
                            if nm not in r.covariates:
                                raise MissingCovariate(
                                    f"cluster {cluster.cluster_id!r}, unit {r.unit!r}: "
                                    f"covariate {nm!r} missing"
                                )
                            designs[j][row, col] = float(r.covariates[nm])
            k = sum(events)
            subsets = np.arange(1 << k)[:, None] >> np.arange(k)[None, :] & 1
            sizes = subsets.sum(axis=1)
            self.groups.append(
                _Group(
                    level=level,
                    units=units,
                    events=events,
                    times=times,
                    designs=designs,
                    weights=weights,
                    cluster_idx=idx,
                    cluster_ids=ids,
                    subset_matrix=subsets.astype(float),
                    even_cols=np.where(sizes % 2 == 0)[0],
                    odd_cols=np.where(sizes % 2 == 1)[0],
                )
            )

    def cluster_logliks(self, spec: ModelSpec) -> np.ndarray:
        out = np.empty(self.n_clusters)
        for grp in self.groups:
            params = spec.frailty_params(grp.level)
            lam = np.empty_like(grp.times)
            for j, unit in enumerate(grp.units):
                base = spec.baseline_for(grp.level, unit).cumulative(grp.times[:, j])
                if grp.designs[j] is not None:
                    coefs = np.asarray(spec.predictors[unit].coefficients)
                    base = base * np.exp(grp.designs[j] @ coefs)
                lam[:, j] = base
            events = np.asarray(grp.events, dtype=bool)
            rest = lam[:, ~events].sum(axis=1)
            svals = rest[:, None] + lam[:, events] @ grp.subset_matrix.T
            terms = np.exp(log_laplace(params, svals))
            prob = terms[:, grp.even_cols].sum(axis=1) - terms[:, grp.odd_cols].sum(axis=1)
            bad = prob <= 0.0
            if np.any(bad):
                if np.any(prob <= -_CLAMP_TOL):
                    worst = int(np.argmin(prob))
                    raise NonPositiveProbability(
                        f"cluster {grp.cluster_ids[worst]!r}: "
                        f"inclusion-exclusion sum {prob[worst]}"
                    )
                diagnostics.clamped_probabilities += int(bad.sum())
                prob = np.where(bad, _CLAMP_VALUE, prob)
            out[grp.cluster_idx] = np.log(prob)
        return out

    def total_loglik(self, spec: ModelSpec) -> float:
        if self.n_clusters == 0:
            return 0.0
        return float(np.sum(self.weights * self.cluster_logliks(spec)))


def total_loglik(spec: ModelSpec, data: CurrentStatusDataset,
                 theta=None, layout=None) -> float:
    """Weighted total log-likelihood.

    When ``theta`` is given, ``layout`` must map the flat vector back to a
    parameterized spec (see estimation.ParameterLayout).
    """
    if theta is not None:
        if layout is None:
            raise ValueError("theta requires a layout")
        spec = layout.build_spec(np.asarray(theta, dtype=float))
    return LikelihoodWorkspace(spec, data).total_loglik(spec)


def numeric_gradient(f, theta, abs_step=1e-6, rel_step=1e-7) -> np.ndarray:
    """Central-difference gradient with per-coordinate step size.

    Step rule: h_k = max(abs_step, rel_step * |theta_k|).
    """
    theta = np.asarray(theta, dtype=float)
    grad = np.empty_like(theta)
    for k in range(theta.size):
        h = max(abs_step, rel_step * abs(theta[k]))
        hi = theta.copy()
        lo = theta.copy()
        hi[k] += h
        lo[k] -= h
        f_hi = f(hi)
        f_lo = f(lo)
        if not (np.isfinite(f_hi) and np.isfinite(f_lo)):
            raise NonFiniteEvaluation(f"non-finite objective at coordinate {k}")
        grad[k] = (f_hi - f_lo) / (2.0 * h)
    return grad
