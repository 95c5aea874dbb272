import math

import numpy as np
import pytest

from resonorm.normalform import ThresholdError
from resonorm.splitting import (BandPatch, PatchError, ResonantModel,
                                epsilon_sweep, fixed_point, manifolds,
                                pendulum_model, periodic_orbit,
                                separatrix_action, split_model,
                                splitting_matrix)
from resonorm.splitting import _fold_check
from resonorm.trigpoly import TrigTaylorPoly


@pytest.fixture(scope="module")
def unperturbed():
    m0 = pendulum_model()
    wu = manifolds(m0, "unstable")
    ws = manifolds(m0, "stable")
    return m0, wu, ws


class TestModel:
    def test_assumption_checks(self):
        with pytest.raises(ValueError, match="positive"):
            pendulum_model().__class__(
                w1=1.0, A=0.5, B=-0.5,
                V=TrigTaylorPoly.cosine(2, 1.0, (0, 1)),
                R_term=TrigTaylorPoly.zero(2, 1.0),
                F_term=TrigTaylorPoly.zero(2, 1.0))
        with pytest.raises(ValueError, match="maximum"):
            ResonantModel(
                w1=1.0, A=0.5, B=0.5,
                V=TrigTaylorPoly.cosine(2, 1.0, (0, 1), coeff=-1.0),
                R_term=TrigTaylorPoly.zero(2, 1.0),
                F_term=TrigTaylorPoly.zero(2, 1.0))

    def test_hyperbolic_rate(self):
        # B = 1/2, V = cos(2 pi th)/(2 pi)^2: rate sqrt(2 B |V''|) = 1
        assert pendulum_model().hyperbolic_rate == pytest.approx(1.0)


class TestFixedPoint:
    def test_unperturbed_saddle(self):
        fp = fixed_point(pendulum_model())
        assert fp.theta2 == 0.0 and fp.i2 == 0.0
        assert fp.eigenvalues == pytest.approx((-1.0, 1.0))

    def test_anchored_r_keeps_saddle(self):
        fp = fixed_point(pendulum_model(lam=0.01))
        assert abs(fp.theta2) < 1e-12 and abs(fp.i2) < 1e-12

    def test_moving_r_lipschitz(self):
        # classical R = cos(2 pi th2) I2 drags the saddle by O(lam)
        for lam in (1e-4, 1e-3, 1e-2):
            fp = fixed_point(pendulum_model(lam=lam, moving_r=True))
            dist = max(abs(fp.theta2), abs(fp.i2))
            assert 0 < dist <= 10 * lam

    def test_threshold(self):
        with pytest.raises(ThresholdError):
            fixed_point(pendulum_model(lam=0.5))


class TestPeriodicOrbit:
    def test_unperturbed_circle(self):
        m = pendulum_model()
        orb = periodic_orbit(m)
        assert np.abs(orb.y0).max() < 1e-12
        assert orb.period == pytest.approx(1.0 / m.w1, rel=1e-10)
        lam_u = abs(orb.multipliers[-1])
        assert lam_u == pytest.approx(math.exp(1.0 / m.w1), rel=1e-6)

    def test_perturbed_circle_near_origin(self):
        orb = periodic_orbit(pendulum_model(lam=0.01, mu=1e-4))
        assert abs(orb.y0[1]) < 1e-3      # I1 stays O(mu)
        assert orb.residual < 1e-9


class TestManifolds:
    def test_separatrix_closed_form(self, unperturbed):
        m0, wu, _ = unperturbed
        th = np.linspace(0.13, 0.37, 25)
        sep = separatrix_action(m0, th)
        g = wu.sfun.grad(np.full_like(th, 0.3), th)
        assert np.abs(g[:, 1] - sep).max() < 1e-7
        assert np.abs(g[:, 0]).max() < 1e-9    # I1 = 0 on the manifold

    def test_fit_quality(self, unperturbed):
        _, wu, ws = unperturbed
        assert wu.sfun.residual < 1e-6
        assert ws.sfun.residual < 1e-6

    def test_exactness_witness(self, unperturbed):
        _, wu, ws = unperturbed
        assert wu.loop_quadrature < 1e-8
        assert ws.loop_quadrature < 1e-8
        assert wu.curl_sup < 1e-8

    def test_hessian_fd_cross_check(self, unperturbed):
        _, wu, _ = unperturbed
        pts = [(0.1, 0.22), (0.5, 0.3), (0.9, 0.28), (0.3, 0.25),
               (0.7, 0.33)]
        assert wu.sfun.hessian_fd_check(pts) < 1e-6

    def test_patch_near_saddle_rejected(self):
        with pytest.raises(PatchError, match="saddle"):
            manifolds(pendulum_model(), "unstable",
                      patch=BandPatch(center=0.05, halfwidth=0.04))

    def test_bad_side(self):
        with pytest.raises(ValueError):
            manifolds(pendulum_model(), "middle")


class TestFoldCheck:
    def test_folded_samples_detected(self):
        rng = np.random.default_rng(3)
        th = rng.random((400, 2)) * np.array([1.0, 0.25]) + \
            np.array([0.0, 0.125])
        upper = np.hstack([th, np.zeros((400, 1)),
                           0.25 + 0.0 * th[:, :1]])
        lower = np.hstack([th, np.zeros((400, 1)),
                           0.05 + 0.0 * th[:, :1]])
        with pytest.raises(PatchError, match="folding"):
            _fold_check(np.vstack([upper, lower]), 1e-9)


class TestSplittingMatrix:
    def test_mu_zero_doubling(self, unperturbed):
        _, wu, ws = unperturbed
        rep = splitting_matrix(ws.sfun, wu.sfun)
        assert np.abs(rep.angles).max() < 1e-8
        assert rep.grad_residual < 1e-8
        assert np.array_equal(rep.matrix, rep.matrix.T)

    def test_small_mu_structure(self):
        m = pendulum_model(lam=0.01, mu=1e-4)
        wu, ws, rep = split_model(m)
        # flow-direction kernel: smallest angle far below the leading one
        assert abs(rep.angles[0]) <= 0.01 * abs(rep.angles[-1])
        assert abs(rep.angles[-1]) <= 10 * 1e-4
        assert rep.grad_residual < 1e-8
        # eigenvalues real, matrix symmetric
        assert np.isrealobj(rep.angles)


class TestPerturbedManifolds:
    def test_c1_mu_closeness(self):
        # |grad S_(lam,mu) - grad S_(lam,0)| ~ C mu on the patch, slope ~ 1
        lam = 0.01
        base = manifolds(pendulum_model(lam=lam), "unstable")
        t1 = np.linspace(0.05, 0.95, 9)
        t2 = np.linspace(0.15, 0.35, 7)
        T1, T2 = np.meshgrid(t1, t2, indexing="ij")
        g0 = base.sfun.grad(T1.ravel(), T2.ravel())
        devs = []
        mus = [1e-4, 1e-3]
        for mu in mus:
            wu = manifolds(pendulum_model(lam=lam, mu=mu), "unstable")
            g = wu.sfun.grad(T1.ravel(), T2.ravel())
            devs.append(float(np.abs(g - g0).max()))
        for mu, dev in zip(mus, devs):
            assert dev <= 20 * mu
        slope = math.log(devs[1] / devs[0]) / math.log(mus[1] / mus[0])
        assert abs(slope - 1.0) <= 0.2


class TestSweeps:
    def test_epsilon_threshold_error(self):
        with pytest.raises(ThresholdError):
            epsilon_sweep([0.3], k=3)

    def test_k_requirement(self):
        with pytest.raises(ThresholdError, match="k >= 3"):
            epsilon_sweep([1e-4], k=2)
