import math

import numpy as np
import pytest

from resonorm.diophantine import ExactFrequency
from resonorm.dynamics import (DriftDemoFamily, StepSizeError, drift_demo,
                               drift_report, integrate,
                               projector_onto_span, stability_experiment)
from resonorm.trigpoly import TWO_PI, TrigTaylorPoly

R = 1.0


def pendulum():
    return TrigTaylorPoly.monomial(2, R, (0, 2), coeff=0.5) + \
        TrigTaylorPoly.cosine(2, R, (0, 1), coeff=1.0 / TWO_PI ** 2)


class TestIntegrator:
    def test_linear_hamiltonian_exact(self, golden):
        H = TrigTaylorPoly.action_linear(golden.omega_float, R)
        x0 = np.array([0.1, 0.2, 0.05, -0.1])
        traj = integrate(H, x0, 1e-3, 5.0)
        final = traj.states[-1]
        assert np.abs(final[2:] - x0[2:]).max() == 0.0
        expect = x0[:2] + 5.0 * golden.omega_float
        assert np.abs(final[:2] - expect).max() < 1e-12

    def test_pendulum_energy_drift(self):
        H = pendulum()
        traj = integrate(H, np.array([0.0, 0.5, 0.0, 0.1]), 1e-3, 1e3,
                         check_step=False)
        assert traj.energy_drift < 1e-9

    def test_time_reversal(self):
        H = pendulum()
        x0 = np.array([0.0, 0.3, 0.0, 0.2])
        fwd = integrate(H, x0, 1e-3, 10.0, check_step=False)
        back = integrate(H, fwd.states[-1], -1e-3, 10.0, check_step=False)
        assert np.abs(back.states[-1] - x0).max() < 1e-10

    def test_determinism(self):
        H = pendulum()
        x0 = np.array([0.1, 0.4, 0.02, 0.15])
        a = integrate(H, x0, 1e-3, 50.0, check_step=False)
        b = integrate(H, x0, 1e-3, 50.0, check_step=False)
        assert np.array_equal(a.states, b.states)

    def test_step_size_guard(self):
        H = pendulum() * 50.0
        with pytest.raises(StepSizeError):
            integrate(H, np.array([0.0, 0.3, 0.0, 0.2]), 1e-1, 1.0)

    def test_symplectic_one_step(self):
        H = pendulum()
        h = 1e-3
        J = np.array([[0, 0, 1, 0], [0, 0, 0, 1],
                      [-1, 0, 0, 0], [0, -1, 0, 0]], dtype=float)
        x0 = np.array([0.2, 0.35, 0.04, 0.18])
        fd = 1e-6
        G = np.empty((4, 4))
        for i in range(4):
            e = np.zeros(4)
            e[i] = fd
            p = integrate(H, x0 + e, h, h, check_step=False).states[-1]
            m = integrate(H, x0 - e, h, h, check_step=False).states[-1]
            G[:, i] = (p - m) / (2 * fd)
        assert np.abs(G.T @ J @ G - J).max() < 1e-8

    def test_domain_exit_recorded(self):
        H = TrigTaylorPoly.action_linear([1.0, 0.5], R) + \
            TrigTaylorPoly.sine(2, R, (1, 0), coeff=0.3)
        traj = integrate(H, np.zeros(4), 1e-2, 100.0, domain_r=0.25,
                         check_step=False)
        assert traj.exited
        assert traj.exit_time < 100.0


class TestDriftReport:
    def test_linear_flow_no_drift(self, golden):
        H = TrigTaylorPoly.action_linear(golden.omega_float, R)
        traj = integrate(H, np.array([0.0, 0.0, 0.1, 0.1]), 1e-2, 100.0,
                         check_step=False)
        rep = drift_report(traj, golden)
        assert rep.max_drift == 0.0
        assert rep.exit_time == math.inf

    def test_projector_is_orthogonal_projection(self, golden, cubic):
        for om in (golden, cubic):
            P = projector_onto_span(om)
            assert np.allclose(P @ P, P, atol=1e-12)
            assert np.allclose(P, P.T, atol=1e-12)
        v = ExactFrequency.from_rationals(["1/2", "1/3"])
        P = projector_onto_span(v)
        # F is the line through (3, 2)
        b = np.array([3.0, 2.0]) / math.sqrt(13)
        assert np.allclose(P, np.outer(b, b), atol=1e-12)


class TestDriftDemo:
    def test_speed_matches_prediction(self, golden):
        rep = drift_demo(golden, k=2, eps=1e-3)
        assert 1 / 3 <= rep.ratio <= 3

    def test_zero_phase_gives_small_speed(self, golden):
        fam = DriftDemoFamily(omega=golden, k=2)
        data = fam.build(1e-3)
        K = np.array(data["K"], dtype=float)
        # theta0 with cos(2 pi K.theta0) = 0: K.theta0 = 1/4
        th0 = np.array([0.25 / K[0], 0.0]) if K[0] else None
        rep = drift_demo(golden, 2, 1e-3, theta0=th0, check=False)
        assert rep.ratio < 0.2


class TestDriftSpeedShape:
    def test_speed_follows_eps_q_power(self, golden):
        # measured speed ~ eps (2 pi Q)^{1-k} |K|_2-shape over 4 decades
        k = 2
        eps_list = [1e-2, 1e-3, 1e-4, 1e-5]
        measured, predicted = [], []
        for eps in eps_list:
            rep = drift_demo(golden, k, eps, check=False)
            measured.append(rep.speed_measured)
            predicted.append(rep.speed_pred)
        coef = np.polyfit(np.log(predicted), np.log(measured), 1)
        assert abs(coef[0] - 1.0) < 0.1

    def test_normal_form_filtering_gains_q_power(self, golden):
        # exit times for the filtered remainder improve on the raw
        # perturbation by at least Q^kappa (measured via drift speeds)
        from resonorm.normalform import average, normal_form

        eps, k, kappa, q = 1e-4, 4, 1, 16
        f = TrigTaylorPoly.sine(2, R, (1, 0), coeff=eps) + \
            TrigTaylorPoly.cosine(2, R, (1, -1), coeff=eps)
        res = normal_form(golden, f, k, kappa, q=q)
        l_w = TrigTaylorPoly.action_linear(golden.omega_float, R)
        P = projector_onto_span(golden)

        def init_speed(pert):
            H = l_w + pert
            x0 = np.zeros(4)
            t1 = 0.5
            traj = integrate(H, x0, 1e-3, t1, check_step=False)
            disp = P @ (traj.states[-1, 2:] - x0[2:])
            return np.linalg.norm(disp) / t1

        raw = init_speed(f - average(f, golden))
        filtered = init_speed(res.f_rem)
        gain = raw / filtered
        assert gain >= q ** kappa / 10.0


class TestStability:
    def test_parallel_matches_serial(self, golden):
        eps_list = [1e-3, 3e-4]
        kw = dict(delta=1e-8, horizon_steps=50000, q_max=200)
        serial = stability_experiment(golden, 2, eps_list, **kw)
        parallel = stability_experiment(golden, 2, eps_list, threads=2,
                                        **kw)
        for a, b in zip(serial.rows, parallel.rows):
            assert a.t_obs == b.t_obs
            assert a.max_drift == b.max_drift
        assert serial.slope == parallel.slope

    def test_zero_perturbation_unbounded(self, golden):
        class ZeroFamily:
            def build(self, eps):
                H = TrigTaylorPoly.action_linear(golden.omega_float, R)
                return {"H": H, "q": 1.0, "eps": eps,
                        "speed_pred": 1e-12, "window": 1.0,
                        "x0": np.zeros(4)}

        rep = stability_experiment(golden, 3, [1e-3, 1e-4], delta=0.1,
                                   horizon_steps=2000,
                                   family=ZeroFamily())
        assert rep.unbounded
        assert rep.slope is None
        assert "horizon" in rep.note
