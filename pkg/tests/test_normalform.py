import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resonorm.diophantine import (PeriodicVector, golden_frequency,
                                  periodic_approximations)
from resonorm.normalform import (LieGenerator, ThresholdError, average,
                                 lie_transform, localize, map_distance,
                                 normal_form, periodic_step,
                                 solve_homological, transform_points)
from resonorm.trigpoly import TWO_PI, TrigTaylorPoly, random_real_poly

R = 1.0
V32 = PeriodicVector.reduced((2, 3), 2)          # v = (1, 3/2)


class TestAverage:
    def test_resonant_mode_kept(self):
        u = TrigTaylorPoly.cosine(2, R, (3, -2))
        assert average(u, V32).allclose(u)

    def test_nonresonant_killed(self):
        u = TrigTaylorPoly.sine(2, R, (1, 0))
        assert average(u, V32).is_zero()

    def test_mixed(self):
        u = TrigTaylorPoly.sine(2, R, (1, 1), alpha=(1, 0)) + \
            TrigTaylorPoly.constant(2, R, 0.5)
        assert average(u, V32).allclose(TrigTaylorPoly.constant(2, R, 0.5))

    def test_idempotent_linear(self, rng):
        f = random_real_poly(rng, 2, 4, 1, n_modes=6)
        g = random_real_poly(rng, 2, 4, 1, n_modes=6)
        af = average(f, V32)
        assert average(af, V32).allclose(af)
        assert average(f + g, V32).allclose(average(f, V32)
                                            + average(g, V32))

    def test_iterated_average_collapses_to_omega(self, rng, golden):
        res = periodic_approximations(golden, 8)
        for _ in range(5):
            f = random_real_poly(rng, 2, 4, 1, n_modes=8)
            out = f
            for v in res.vectors:
                out = average(out, v)
            assert out.allclose(average(f, golden), tol=1e-12)


class TestHomological:
    def test_hand_example(self):
        u = TrigTaylorPoly.sine(2, R, (1, 0))
        gen = solve_homological(u, V32)
        expect = TrigTaylorPoly.cosine(2, R, (1, 0), coeff=-1 / TWO_PI)
        assert gen.chi.allclose(expect)
        l_v = TrigTaylorPoly.action_linear(V32.v_float, R)
        assert gen.chi.poisson(l_v).allclose(u)

    def test_resonant_gives_zero(self):
        u = TrigTaylorPoly.cosine(2, R, (3, -2))
        assert solve_homological(u, V32).chi.is_zero()

    def test_zero_average_along_v(self, rng):
        u = random_real_poly(rng, 2, 6, 1, n_modes=6)
        gen = solve_homological(u, V32)
        assert average(gen.chi, V32).is_zero()

    def test_random_residuals(self, rng):
        l_v = TrigTaylorPoly.action_linear(V32.v_float, R)
        for _ in range(20):
            u = random_real_poly(rng, 2, 6, 2, n_modes=6)
            gen = solve_homological(u, V32)
            resid = gen.chi.poisson(l_v) - (u - average(u, V32))
            assert resid.ck_norm_grid(0) <= 1e-12 * u.ck_norm_grid(0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10 ** 6),
           st.tuples(st.integers(-3, 3), st.integers(1, 4)))
    def test_homological_identity_property(self, seed, vdata):
        a, b = vdata
        u = random_real_poly(np.random.default_rng(seed), 2, 4, 1,
                             n_modes=4)
        v = PeriodicVector.reduced((a if a else 1, b), 2)
        l_v = TrigTaylorPoly.action_linear(v.v_float, R)
        gen = solve_homological(u, v)
        resid = gen.chi.poisson(l_v) - (u - average(u, v))
        assert resid.ck_norm_grid(0) <= 1e-12 * max(u.ck_norm_grid(0),
                                                    1e-300)
        assert average(gen.chi, v).is_zero()


class TestLieTransform:
    def test_zero_generator(self, rng):
        H = random_real_poly(rng, 2, 2, 2)
        gen = LieGenerator(chi=TrigTaylorPoly.zero(2, R), order=6)
        out, rep = lie_transform(H, gen)
        assert out.allclose(H)
        assert rep.last_term_mass == 0.0

    def test_action_shift(self):
        c = 0.1
        chi = TrigTaylorPoly.monomial(2, R, (1, 0), coeff=c)
        gen = LieGenerator(chi=chi, order=12)
        H = TrigTaylorPoly.sine(2, R, (1, 0))
        out, _ = lie_transform(H, gen)
        shifted = TrigTaylorPoly.sine(2, R, (1, 0),
                                      coeff=math.cos(TWO_PI * c)) + \
            TrigTaylorPoly.cosine(2, R, (1, 0), coeff=math.sin(TWO_PI * c))
        assert (out - shifted).max_abs_coeff() < 1e-10

    def test_first_order_quadratic_smallness(self, rng):
        H = TrigTaylorPoly.sine(2, R, (1, 0)) + \
            TrigTaylorPoly.monomial(2, R, (1, 0))
        sizes = np.array([1e-4, 3e-4, 1e-3, 3e-3, 1e-2])
        resid = []
        for s in sizes:
            chi = TrigTaylorPoly.cosine(2, R, (1, -1), coeff=s) + \
                TrigTaylorPoly.sine(2, R, (0, 1), coeff=s, alpha=(0, 1))
            gen = LieGenerator(chi=chi, order=8)
            out, _ = lie_transform(H, gen)
            first = H + H.poisson(chi)
            resid.append((out - first).ck_norm_grid(0))
        slope = np.polyfit(np.log(sizes), np.log(resid), 1)[0]
        assert abs(slope - 2.0) <= 0.2

    def test_flow_cross_validation_runs(self, rng):
        H = random_real_poly(rng, 2, 2, 1, n_modes=3, scale=0.01)
        chi = random_real_poly(rng, 2, 2, 1, n_modes=2, scale=1e-3)
        gen = LieGenerator(chi=chi, order=6)
        out, rep = lie_transform(H, gen, validate=True)
        assert rep.flow_residual is not None
        assert rep.flow_residual <= max(1e-8, 10 * rep.last_term_mass)

    def test_divergence_guard(self):
        from resonorm.normalform import LieDivergenceError
        H = TrigTaylorPoly.sine(2, R, (1, 0))
        chi = TrigTaylorPoly.sine(2, R, (1, 0), coeff=0.3, alpha=(1, 0))
        gen = LieGenerator(chi=chi, order=6)
        with pytest.raises(LieDivergenceError):
            lie_transform(H, gen, validate=False)


class TestPeriodicStep:
    def test_resonant_u_trivial(self):
        u = TrigTaylorPoly.cosine(2, R, (3, -2), coeff=1e-4)
        s = TrigTaylorPoly.zero(2, R)
        gen, uprime, rec = periodic_step(V32, s, u, nu=1e-3)
        assert gen.chi.is_zero()
        assert uprime.is_zero()
        assert rec.theta_dist == 0.0

    def test_threshold_violation(self):
        u = TrigTaylorPoly.sine(2, R, (1, 0), coeff=1e-4)
        s = TrigTaylorPoly.zero(2, R)
        with pytest.raises(ThresholdError, match="T\\*nu"):
            periodic_step(V32, s, u, nu=0.25)

    def test_quadratic_contraction(self):
        eps = 1e-3
        v = PeriodicVector.reduced((1, 0), 1)
        u = TrigTaylorPoly.sine(2, R, (1, 0), coeff=eps)
        s = TrigTaylorPoly.zero(2, R)
        gen, uprime, rec = periodic_step(v, s, u, nu=eps)
        assert average(u, v).is_zero()
        assert uprime.ck_norm_grid(0) <= 10 * eps ** 2


class TestNormalForm:
    def setup_method(self):
        self.om = golden_frequency()
        self.eps = 1e-4
        self.f = TrigTaylorPoly.sine(2, R, (1, 0), coeff=self.eps) + \
            TrigTaylorPoly.cosine(2, R, (1, -1), coeff=self.eps)

    def test_kappa_zero(self):
        res = normal_form(self.om, self.f, k=4, kappa=0)
        assert res.g.is_zero()
        assert not res.generators
        assert res.f_rem.allclose(self.f - average(self.f, self.om))

    def test_g1_identically_zero(self):
        res = normal_form(self.om, self.f, k=4, kappa=1, q=8)
        assert res.g.is_zero()

    def test_remainder_decreases_with_q(self):
        norms = [normal_form(self.om, self.f, 4, 1,
                             q=q).ledger.final_norms["f_rem"]
                 for q in (4, 8, 16, 32)]
        assert norms[-1] < norms[0]

    def test_energy_consistency(self, rng):
        res = normal_form(self.om, self.f, k=4, kappa=2, q=16)
        H = TrigTaylorPoly.action_linear(self.om.omega_float, R) + self.f
        N_full = res.normal_form_hamiltonian(include_remainder=True)
        pts = np.hstack([rng.random((100, 2)),
                         rng.uniform(-0.4, 0.4, (100, 2))])
        img = transform_points(res.generators, pts)
        lhs = H.evaluate_batch(img[:, :2], img[:, 2:], check_domain=False)
        rhs = N_full.evaluate_batch(pts[:, :2], pts[:, 2:],
                                    check_domain=False)
        tol = max(1e-8, 10 * res.ledger.dropped_total)
        assert np.abs(lhs - rhs).max() <= tol

    def test_auto_q(self):
        res = normal_form(self.om, self.f, k=4, kappa=1, q="auto")
        assert res.ledger.q >= 1.0

    def test_ledger_serialization(self):
        res = normal_form(self.om, self.f, k=4, kappa=2, q=8)
        js = res.ledger.to_json()
        assert '"kappa": 2' in js
        csv = res.ledger.to_csv()
        assert csv.count("\n") == len(res.ledger.steps) + 1


class TestMapDistance:
    def test_zero_generators(self):
        assert map_distance([], 2, R) == 0.0

    def test_single_small_generator(self):
        chi = TrigTaylorPoly.sine(2, R, (1, 0), coeff=1e-3)
        gen = LieGenerator(chi=chi, order=6)
        dist = map_distance([gen], 2, R, n_samples=60)
        # |X_chi|_C0 = 2 pi |chi| for this mode
        field = TWO_PI * 1e-3
        assert dist <= 2 * field
        assert dist >= field / 2


class TestLocalize:
    def setup_method(self):
        self.om = golden_frequency()
        self.eps = 1e-6
        self.f = TrigTaylorPoly.sine(2, R, (1, 0), coeff=self.eps)

    def test_linear_h(self):
        h = TrigTaylorPoly.action_linear(self.om.omega_float, R)
        res = localize(h, self.f, r=0.1, k=3, omega=self.om)
        # perturbation is r^-1 f(theta, r I): same theta-only poly / r
        expect = self.f * (1.0 / 0.1)
        assert res.perturbation.allclose(expect.with_radius(1.0))
        assert res.ratio == pytest.approx(res.pert_norm / 0.1)

    def test_quadratic_part_scales_with_r(self):
        h = TrigTaylorPoly.action_linear(self.om.omega_float, R) + \
            TrigTaylorPoly.monomial(2, R, (2, 0), coeff=0.5)
        r = 0.1
        res = localize(h, self.f, r=r, k=3, omega=self.om)
        quad = res.perturbation - self.f * (1.0 / r)
        # (r I1)^2 / (2 r) on B_1: C^0 mass r/2, C^k norm stays O(r)
        assert quad.ck_norm_grid(3) == pytest.approx(r, rel=0.5)

    def test_pullback_consistency(self, rng):
        h = TrigTaylorPoly.action_linear(self.om.omega_float, R) + \
            TrigTaylorPoly.monomial(2, R, (2, 0), coeff=0.5)
        r = 0.1
        res = localize(h, self.f, r=r, k=3, omega=self.om)
        Ht = res.rescaled_hamiltonian(self.om)
        H = h + self.f
        h0 = h.evaluate([0, 0], [0, 0])
        for _ in range(10):
            th = rng.random(2)
            Ihat = rng.uniform(-1, 1, 2)
            lhs = r * Ht.evaluate(th, Ihat)
            rhs = H.evaluate(th, r * Ihat) - h0
            assert abs(lhs - rhs) < 1e-10

    def test_threshold(self):
        h = TrigTaylorPoly.action_linear(self.om.omega_float, R)
        f_big = TrigTaylorPoly.sine(2, R, (1, 0), coeff=1e-2)
        with pytest.raises(ThresholdError, match="sqrt"):
            localize(h, f_big, r=0.05, k=3, omega=self.om)

    def test_wrong_gradient(self):
        h = TrigTaylorPoly.action_linear([1.0, 1.0], R)
        with pytest.raises(ValueError, match="grad"):
            localize(h, self.f, r=0.1, k=3, omega=self.om)
