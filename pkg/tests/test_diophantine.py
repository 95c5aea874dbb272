import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resonorm.diophantine import (ExactFrequency, FrequencyError,
                                  PeriodicVector, PsiDomainError,
                                  TableExhaustedError, dioph_check,
                                  golden_frequency,
                                  periodic_approximations, psi_table,
                                  rational_span, resonance_lattice)

PHI = (1 + math.sqrt(5)) / 2


class TestExactFrequency:
    def test_parse_golden(self, golden):
        assert golden.omega_float == pytest.approx([1.0, PHI])

    def test_resonance_exact(self):
        v = ExactFrequency.from_rationals(["1/2", "1/3"])
        assert v.is_resonant((2, -3))
        assert not v.is_resonant((3, 2))

    def test_nonresonant_golden(self, golden):
        for k in ((1, -1), (5, -3), (13, -8)):
            assert not golden.is_resonant(k)

    def test_zero_rejected(self):
        with pytest.raises(FrequencyError):
            ExactFrequency.from_rationals(["0", "0"])

    def test_parse_error(self):
        with pytest.raises(FrequencyError):
            ExactFrequency.parse("1, sqrt5 +")


class TestRationalSpan:
    def test_golden_full(self, golden):
        d, basis = rational_span(golden)
        assert d == 2
        assert set(basis) == {(1, 0), (0, 1)}

    def test_rational_line(self):
        v = ExactFrequency.from_rationals(["1/2", "1/3"])
        d, basis = rational_span(v)
        assert d == 1
        assert basis == ((3, 2),)

    def test_golden_with_zero(self):
        om = ExactFrequency.parse("1, phi, 0")
        d, basis = rational_span(om)
        assert d == 2
        assert set(basis) == {(1, 0, 0), (0, 1, 0)}

    def test_resonance_lattice_orthogonal(self):
        om = ExactFrequency.parse("1, phi, 0")
        lat = resonance_lattice(om)
        assert lat == ((0, 0, 1),)


class TestPsi:
    def test_golden_breakpoints(self, golden):
        t = psi_table(golden, 10)
        assert t.psi(1) == pytest.approx(PHI, rel=1e-12)
        assert t.witness(1) == (1, -1)
        assert t.psi(2) == pytest.approx(PHI ** 2, rel=1e-12)
        assert t.witness(2) == (2, -1)

    def test_periodic_vector_psi(self):
        v = ExactFrequency.from_rationals(["1/2", "1/3"])
        t = psi_table(v, 10)
        assert t.q_min == 3
        assert t.psi(3) == pytest.approx(6 / 13)
        assert t.witness(3) == (3, 2)
        # any T-periodic vector: Psi_v(Q) <= T
        assert t.psi(10) <= 6.0

    def test_below_qmin_errors(self):
        v = ExactFrequency.from_rationals(["1/2", "1/3"])
        t = psi_table(v, 10)
        with pytest.raises(PsiDomainError) as ei:
            t.psi(2)
        assert ei.value.q_min == 3

    def test_witness_value_consistent(self, golden):
        t = psi_table(golden, 40)
        for q, val, wit in t.rows():
            assert 1.0 / abs(golden.dot_float(wit)) == \
                pytest.approx(val, rel=1e-12)


class TestDeltaStar:
    def test_golden_value(self, golden):
        t = psi_table(golden, 40)
        assert t.delta_star(5.3) == pytest.approx(5.3 / PHI ** 2, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(min_value=2.0, max_value=300.0),
           st.floats(min_value=0.0, max_value=100.0))
    def test_monotone(self, x, dx):
        t = psi_table(golden_frequency(), 60)
        assert t.delta_star(x) <= t.delta_star(x + dx) + 1e-12

    def test_delta_of_delta_star_is_sup(self, golden):
        # sup semantics: Delta <= x just below Delta*(x), > x just above
        # (at a breakpoint the sup is approached, not attained)
        t = psi_table(golden, 60)
        for x in (2.0, 7.7, 30.0, 111.0):
            q = t.delta_star(x)
            assert t.delta(q * (1 - 1e-9)) <= x * (1 + 1e-9)
            assert t.delta(q * (1 + 1e-6)) > x * (1 - 1e-9)

    def test_inverse_at_continuity_points(self, golden):
        t = psi_table(golden, 60)
        for q in (1.5, 2.5, 4.0, 6.0, 10.0):
            x = t.delta(q)
            assert t.delta_star(x) == pytest.approx(q, rel=1e-13)

    def test_exhausted_table(self, golden):
        t = psi_table(golden, 10)
        with pytest.raises(TableExhaustedError):
            t.delta_star(1e9)

    def test_below_range(self, golden):
        t = psi_table(golden, 10)
        with pytest.raises(ValueError):
            t.delta_star(0.5)


class TestPeriodicVector:
    def test_reduction(self):
        v = PeriodicVector.reduced((2, 4), 2)
        assert v.p == (1, 2) and v.T == 1

    def test_fractional_period(self):
        v = PeriodicVector.reduced((2,), 3)
        assert v.p == (2,) or v.p == (1,)
        # (2/3): minimal period is 3/2
        v = PeriodicVector.reduced((2,), Fraction(3))
        assert v.v == (Fraction(2, 3),)
        assert v.T == Fraction(3, 2)

    def test_primitivity_enforced(self):
        with pytest.raises(ValueError):
            PeriodicVector((2, 4), Fraction(2))

    def test_exact_resonance(self):
        v = PeriodicVector.reduced((2, 3), 2)
        assert v.is_resonant((3, -2))
        assert not v.is_resonant((1, 0))
        assert v.dot((1, -1)) == Fraction(-1, 2)


class TestApproximations:
    def test_rational_returns_itself(self):
        v = ExactFrequency.from_rationals(["1/2", "1/3"])
        res = periodic_approximations(v, 3)
        assert len(res.vectors) == 1
        pv = res.vectors[0]
        assert pv.p == (3, 2) and pv.T == 6
        assert res.errors[0] == 0.0

    def test_integer_vector(self):
        om = ExactFrequency.from_rationals(["2", "1"])
        res = periodic_approximations(om, 4)
        pv = res.vectors[0]
        assert pv.p == (2, 1) and pv.T == 1

    def test_golden_certificates(self, golden):
        for q in (5, 13, 34):
            res = periodic_approximations(golden, q)
            assert abs(res.det) == 1
            assert len(res.vectors) == 2
            for pv, err, c in zip(res.vectors, res.errors, res.constants):
                # T v = p exactly by construction (Fractions)
                assert all((pv.T * x).denominator == 1 for x in pv.v)
                assert c <= 10.0
                assert float(pv.T) <= 4 * res.psi_q + 1e-9

    def test_cubic_certificates(self, cubic):
        res = periodic_approximations(cubic, 5)
        assert abs(res.det) == 1
        assert len(res.vectors) == 3

    def test_lifts_span_lattice(self, golden):
        res = periodic_approximations(golden, 8)
        M = np.array([v.p for v in res.vectors])
        assert abs(round(np.linalg.det(M))) == 1

    def test_negative_entries(self):
        om = ExactFrequency.from_rationals(["3/2", "-1/2"])
        res = periodic_approximations(om, 4)
        pv = res.vectors[0]
        assert pv.p == (3, -1) and pv.T == 2
        assert res.errors[0] == 0.0


class TestDiophCheck:
    def test_periodic_holds_with_tau_zero(self):
        v = ExactFrequency.from_rationals(["1/2", "1/3"])
        rep = dioph_check(v, gamma=1 / 6, tau=0.0, q_max=50)
        assert rep.holds

    def test_golden_tau_one(self, golden):
        rep = dioph_check(golden, gamma=0.3, tau=1.0, q_max=100)
        assert rep.holds
        assert rep.tau_fit == pytest.approx(1.0, abs=0.1)

    def test_violation_witnessed(self, golden):
        rep = dioph_check(golden, gamma=1e6, tau=0.0, q_max=50)
        assert not rep.holds
        assert rep.violation is not None
        q, val, wit = rep.violation
        assert val > 1e-6 * q ** 0

    def test_cubic_tau_two(self, cubic):
        rep = dioph_check(cubic, gamma=0.1, tau=2.5, q_max=60)
        assert rep.tau_fit == pytest.approx(2.0, abs=0.4)


class TestDeterminism:
    def test_table_reproducible(self, golden):
        r1 = psi_table.__wrapped__(golden, 30).rows()
        r2 = psi_table.__wrapped__(golden, 30).rows()
        assert r1 == r2
