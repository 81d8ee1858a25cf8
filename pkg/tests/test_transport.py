import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causaltransport.errors import BudgetExhaustedError, StructurallyIdentifiableError
from causaltransport.models import bow_demo, bow_pair, random_transport_pair, unconfounded_bow_pair
from causaltransport.scm import TransportPair, interventional_distribution, mechanism_table, validate_scm
from causaltransport.transport import (
    association_gap,
    causal_invariance_gap,
    nonidentifiability_witness,
    witness_gaps,
)


class TestAssociationGap:
    def test_bow_pair(self):
        # source P(Y=1|X=1) = 0.9, target 0.1 (hand-derived: 0.45/0.5 and 0.05/0.5)
        report = association_gap(bow_pair())
        assert report.max_gap == pytest.approx(0.8, abs=1e-12)
        assert report.per_x[1] == pytest.approx(0.8, abs=1e-12)
        assert report.argmax_x in report.per_x

    def test_identity_pair(self):
        assert association_gap(TransportPair(bow_demo(0.3), bow_demo(0.3))).max_gap == 0.0

    def test_unconfounded(self):
        assert association_gap(unconfounded_bow_pair()).max_gap <= 1e-12

    def test_zero_mass_x_skipped(self):
        src = bow_demo(0.1)
        tgt = bow_demo(0.1)
        tgt.variable("X").table = np.zeros((2, 2), dtype=np.int64)
        tgt.name = "constant-x"
        report = association_gap(TransportPair(src, tgt))
        assert report.skipped == [1]
        assert set(report.per_x) == {0}

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric(self, seed):
        pair = random_transport_pair(np.random.default_rng(seed))
        flipped = TransportPair(pair.target, pair.source)
        assert association_gap(pair).max_gap == pytest.approx(association_gap(flipped).max_gap, abs=1e-15)


class TestCausalInvariance:
    def test_bow_pair(self):
        report = causal_invariance_gap(bow_pair())
        assert report.max_gap <= 1e-12
        for x in (0, 1):
            assert interventional_distribution(bow_demo(0.9), {"X": x}, "Y").prob(Y=1) == pytest.approx(0.5)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_pairs(self, seed):
        assert causal_invariance_gap(random_transport_pair(np.random.default_rng(seed))).max_gap <= 1e-12

    def test_corrupted_pair_negative_control(self):
        target = bow_demo(0.9)
        target.variable("Y").table = mechanism_table(lambda x, u: x, (2, 2))
        pair = TransportPair.unchecked(bow_demo(0.1), target)
        report = causal_invariance_gap(pair)
        assert report.max_gap > 0
        assert any("mechanism of Y" in v for v in report.violations)


class TestWitness:
    def test_binary_witness(self):
        w = nonidentifiability_witness((2, 2, 2, 2), budget=10**5, seed=1)
        assert w.joint_tv <= 1e-9
        assert w.do_gap >= 0.1
        assert validate_scm(w.scm_a).ok and validate_scm(w.scm_b).ok

    def test_reverification(self):
        w = nonidentifiability_witness((2, 2, 2, 2), budget=10**5, seed=1)
        joint_tv, do_gap = witness_gaps(w.scm_a, w.scm_b)
        assert joint_tv == pytest.approx(w.joint_tv, abs=1e-15)
        assert do_gap == pytest.approx(w.do_gap, abs=1e-15)

    def test_same_graph_shape(self):
        w = nonidentifiability_witness((2, 2, 2, 2), budget=10**5, seed=2)
        for scm in (w.scm_a, w.scm_b):
            assert scm.variable("X").exo == ("U_XY", "U_X")
            assert scm.variable("Y").parents == ("X",) and scm.variable("Y").exo == ("U_XY",)

    def test_unconfounded_graph_refused(self):
        with pytest.raises(StructurallyIdentifiableError):
            nonidentifiability_witness((2, 2, 1, 2), budget=10, seed=1)

    def test_budget_exhaustion(self):
        with pytest.raises(BudgetExhaustedError):
            nonidentifiability_witness((2, 2, 2, 2), budget=1, seed=1, min_gap=1.5)

    def test_deterministic(self):
        a = nonidentifiability_witness((2, 2, 2, 2), budget=1000, seed=5)
        b = nonidentifiability_witness((2, 2, 2, 2), budget=1000, seed=5)
        assert a.iterations == b.iterations and a.do_gap == b.do_gap
