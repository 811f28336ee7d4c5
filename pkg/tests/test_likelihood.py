"""Cluster marginal likelihood: closed forms, oracles, vectorized path."""

import itertools
import math

import numpy as np
import pytest

from addamsfrailty import (
    AddamsParameters,
    Cluster,
    CurrentStatusDataset,
    ExponentialBaseline,
    FrailtyLink,
    LikelihoodWorkspace,
    LinearPredictor,
    ModelSpec,
    PiecewiseConstantBaseline,
    UnitRecord,
    cluster_loglik,
    laplace,
    total_loglik,
)
from addamsfrailty.likelihood import numeric_gradient
from addamsfrailty.errors import NonFiniteEvaluation

from conftest import random_triples
from oracles import oracle_cluster_prob

# log P values recomputed by the series/quadrature cluster oracle and frozen;
# configuration: rates below, J = 2, times (10, 25), events (1, 0)
FROZEN_CLUSTER = [
    # (alpha, gamma, mu, expected log-probability)
    (-1.0, 5.0, 1.0, -2.726143668010917),
    (0.0, 5.0, 1.0, -2.926376414322408),
    (2.0, 2.0, 1.0, -2.8462865929723864),
    (4.5, 4.0, 0.7, -3.671187251930517),
]

RATES = {"u1": 0.03, "u2": 0.02}


def single_stratum_spec(alpha, gamma, mu=1.0, units=("u1", "u2"), regime=None):
    from addamsfrailty.hazard import BranchRegime

    if regime is None and alpha >= gamma:
        if alpha == gamma:
            regime = BranchRegime("poisson")
        else:
            regime = BranchRegime("binomial", b=round(1.0 / (alpha - gamma)))
    link = FrailtyLink.for_factor(["s"], zeta0=alpha, kappa0=math.log(gamma))
    if mu != 1.0:
        link = FrailtyLink(
            design={"s": (1.0,)}, zeta=(alpha,), kappa=(math.log(gamma),),
            beta0=(math.log(mu),), reference="s", pin_reference_mu=False,
        )
    regimes = {"s": regime} if regime is not None else {}
    return ModelSpec(
        units=tuple(units),
        baselines={u: ExponentialBaseline(RATES.get(u, 0.05)) for u in units},
        frailty_link=link,
        branch_regimes=regimes,
    )


def cluster_of(times, events, cid="c", weight=1.0):
    return Cluster(
        cluster_id=cid,
        records=tuple(
            UnitRecord(f"u{i + 1}", t, d) for i, (t, d) in enumerate(zip(times, events))
        ),
        weight=weight,
    )


class TestClosedForms:
    def test_single_unit_event_and_no_event(self):
        # J = 1: P(no event) = L(Lambda), P(event) = 1 - L(Lambda)
        spec = single_stratum_spec(-1.0, 5.0, units=("u1",))
        p = AddamsParameters(-1.0, 5.0)
        lam = 0.03 * 10.0
        no_event = cluster_loglik(spec, cluster_of([10.0], [0]))
        event = cluster_loglik(spec, cluster_of([10.0], [1]))
        assert no_event == pytest.approx(math.log(laplace(p, lam)), rel=1e-12)
        assert event == pytest.approx(math.log(1.0 - laplace(p, lam)), rel=1e-12)

    def test_two_units_inclusion_exclusion(self):
        spec = single_stratum_spec(-0.5, 2.0)
        p = AddamsParameters(-0.5, 2.0)
        lam1, lam2 = 0.03 * 10.0, 0.02 * 25.0
        # both events: 1 - L(l1) - L(l2) + L(l1 + l2)
        both = cluster_loglik(spec, cluster_of([10.0, 25.0], [1, 1]))
        expected = 1.0 - laplace(p, lam1) - laplace(p, lam2) + laplace(p, lam1 + lam2)
        assert both == pytest.approx(math.log(expected), rel=1e-10)
        # event in unit 1 only: L(l2) - L(l1 + l2)
        one = cluster_loglik(spec, cluster_of([10.0, 25.0], [1, 0]))
        expected = laplace(p, lam2) - laplace(p, lam1 + lam2)
        assert one == pytest.approx(math.log(expected), rel=1e-10)

    @pytest.mark.parametrize("alpha,gamma,mu,expected", FROZEN_CLUSTER)
    def test_frozen_oracle_values(self, alpha, gamma, mu, expected):
        spec = single_stratum_spec(alpha, gamma, mu)
        got = cluster_loglik(spec, cluster_of([10.0, 25.0], [1, 0]))
        assert got == pytest.approx(expected, rel=1e-9)


class TestOracleEquivalence:
    @staticmethod
    def _condition(alpha, gamma, mu, lams, events, prob):
        # inclusion-exclusion condition number: sum |terms| / |result|
        p = AddamsParameters(alpha, gamma, mu)
        event_lams = [l for l, d in zip(lams, events) if d]
        rest = sum(l for l, d in zip(lams, events) if not d)
        total = 0.0
        for mask in range(1 << len(event_lams)):
            s = rest + sum(
                l for i, l in enumerate(event_lams) if mask >> i & 1
            )
            total += laplace(p, s)
        return total / prob if prob > 0 else math.inf

    def test_random_configurations_all_branches(self, rng):
        # >= 100 configurations spanning |d| in 0..7; the alternating sum
        # cannot beat its own conditioning, so heavily cancelling patterns
        # get a proportionally wider tolerance
        checked = 0
        for branch in ("negative", "zero", "interior", "poisson", "binomial"):
            for alpha, gamma, mu in random_triples(rng, branch, 30):
                n_units = int(rng.integers(1, 8))
                units = tuple(f"u{i + 1}" for i in range(n_units))
                spec = single_stratum_spec(alpha, gamma, mu, units=units)
                times = rng.uniform(1.0, 60.0, size=n_units)
                events = (rng.random(n_units) < 0.5).astype(int)
                lams = [RATES.get(u, 0.05) * t for u, t in zip(units, times)]
                expected = oracle_cluster_prob(alpha, gamma, mu, lams, list(events))
                cond = self._condition(alpha, gamma, mu, lams, list(events), expected)
                tol = max(1e-8, 200.0 * 2.3e-16 * cond)
                got = cluster_loglik(spec, cluster_of(list(times), list(events)))
                assert got == pytest.approx(math.log(expected), rel=tol), (
                    branch, alpha, gamma, mu, list(times), list(events), cond
                )
                if cond < 1e6:
                    checked += 1
        assert checked >= 100

    def test_total_probability_over_patterns(self, rng):
        # sum over all 2^J outcome patterns must be exactly one
        for branch in ("negative", "zero", "poisson"):
            alpha, gamma, mu = random_triples(rng, branch, 1)[0]
            for n_units in (1, 2, 3, 4):
                units = tuple(f"u{i + 1}" for i in range(n_units))
                spec = single_stratum_spec(alpha, gamma, mu, units=units)
                times = list(rng.uniform(1.0, 60.0, size=n_units))
                total = 0.0
                for events in itertools.product((0, 1), repeat=n_units):
                    total += math.exp(
                        cluster_loglik(spec, cluster_of(times, list(events)))
                    )
                assert total == pytest.approx(1.0, abs=1e-10)

    def test_vanishing_heterogeneity_gives_independence(self):
        # gamma -> 0: cluster probability factorizes over units
        spec = single_stratum_spec(0.0, 1e-8)
        got = cluster_loglik(spec, cluster_of([10.0, 25.0], [1, 0]))
        lam1, lam2 = 0.3, 0.5
        independent = math.log1p(-math.exp(-lam1)) - lam2
        assert got == pytest.approx(independent, rel=1e-6)


class TestWorkspace:
    def build_data(self, rng, n=60, stratified=True):
        clusters = []
        for i in range(n):
            n_units = int(rng.integers(1, 3))
            records = tuple(
                UnitRecord(f"u{j + 1}", float(rng.uniform(1, 60)), int(rng.random() < 0.5))
                for j in range(n_units)
            )
            # u1 always present so every cluster is scorable
            if not any(r.unit == "u1" for r in records):
                records = (UnitRecord("u1", 5.0, 0),) + records
            clusters.append(Cluster(
                cluster_id=f"c{i}",
                records=records,
                stratum=("m" if i % 2 else "f") if stratified else None,
                weight=float(rng.uniform(0.5, 2.0)),
            ))
        return CurrentStatusDataset(tuple(clusters))

    def two_stratum_spec(self):
        link = FrailtyLink.for_factor(["f", "m"], reference="f",
                                      zeta0=-0.8, kappa0=math.log(3.0))
        return ModelSpec(
            units=("u1", "u2"),
            baselines={
                "u1": PiecewiseConstantBaseline((0.0, 30.0), (0.03, 0.05)),
                "u2": ExponentialBaseline(0.02),
            },
            frailty_link=link,
        )

    def test_vectorized_matches_scalar(self, rng):
        spec = self.two_stratum_spec()
        data = self.build_data(rng)
        ws = LikelihoodWorkspace(spec, data)
        scalar = sum(
            c.weight * cluster_loglik(spec, c) for c in data.clusters
        )
        assert ws.total_loglik(spec) == pytest.approx(scalar, rel=1e-12)
        assert total_loglik(spec, data) == pytest.approx(scalar, rel=1e-12)

    def test_weights_scale_contributions(self, rng):
        spec = self.two_stratum_spec()
        data = self.build_data(rng, n=20)
        doubled = CurrentStatusDataset(tuple(
            Cluster(c.cluster_id, c.records, c.stratum, 2.0 * c.weight)
            for c in data.clusters
        ))
        assert total_loglik(spec, doubled) == pytest.approx(
            2.0 * total_loglik(spec, data), rel=1e-12
        )

    def test_workspace_reusable_across_parameter_values(self, rng):
        # recompute from a fresh workspace at new parameters: identical
        spec = self.two_stratum_spec()
        data = self.build_data(rng, n=30)
        ws = LikelihoodWorkspace(spec, data)
        import dataclasses
        link2 = dataclasses.replace(spec.frailty_link, zeta=(-0.4, 0.1))
        spec2 = dataclasses.replace(spec, frailty_link=link2)
        assert ws.total_loglik(spec2) == pytest.approx(
            LikelihoodWorkspace(spec2, data).total_loglik(spec2), rel=1e-14
        )
        # and the original value is unchanged by the detour
        assert ws.total_loglik(spec) == pytest.approx(
            total_loglik(spec, data), rel=1e-14
        )


class TestNumericGradient:
    def test_quadratic_exact(self):
        f = lambda x: -(x[0] - 1.0) ** 2 - 3.0 * (x[1] + 2.0) ** 2
        g = numeric_gradient(f, np.array([0.0, 0.0]))
        np.testing.assert_allclose(g, [2.0, -12.0], atol=1e-6)

    def test_nonfinite_reports_coordinate(self):
        def f(x):
            return math.inf if x[1] > 0.5 else float(np.sum(x))

        with pytest.raises(NonFiniteEvaluation):
            numeric_gradient(f, np.array([0.0, 0.5]))
