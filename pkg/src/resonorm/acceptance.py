"""The acceptance suite: one callable check per criterion.

Each check returns a CheckResult with measured values in `details`, so
`resonorm check` and the pytest wrapper share a single source of truth.
Tolerances are pinned here, not configurable.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .diophantine import (ExactFrequency, PeriodicVector, canonical_mode,
                          cubic_frequency, golden_frequency,
                          periodic_approximations, psi_table)
from .dynamics import (DriftDemoFamily, drift_demo, integrate,
                       projector_onto_span, stability_experiment)
from .normalform import (LieGenerator, average, flow_points,
                         normal_form, solve_homological,
                         symplectic_defect, transform_points)
from .splitting import (epsilon_sweep, mu_sweep, pendulum_model,
                        separatrix_action, split_model)
from .trigpoly import TWO_PI, TrigTaylorPoly, random_real_poly


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    runtime: float
    details: list = field(default_factory=list)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} [{status}] {self.name} " \
               f"({self.runtime:.1f}s)"


def _wrap(number, name):
    def deco(fn):
        def run():
            t0 = time.time()
            passed, details = fn()
            return CheckResult(number=number, name=name, passed=passed,
                               runtime=time.time() - t0, details=details)
        run.number = number
        run.name = name
        return run
    return deco


# --------------------------------------------------------------------- #
# 1. homological exactness
# --------------------------------------------------------------------- #

@_wrap(1, "homological exactness on random trig polynomials")
def check_1():
    rng = np.random.default_rng(101)
    v = PeriodicVector.reduced((2, 3), 2)      # v = (1, 3/2)
    l_v = TrigTaylorPoly.action_linear(v.v_float, 1.0)
    worst = 0.0
    for _ in range(100):
        u = random_real_poly(rng, 2, kmax=8, dmax=2, n_modes=6)
        gen = solve_homological(u, v)
        resid = gen.chi.poisson(l_v) - (u - average(u, v))
        r = resid.ck_norm_grid(0) / max(u.ck_norm_grid(0), 1e-300)
        worst = max(worst, r)
    ok = worst < 1e-12
    return ok, [f"max relative residual {worst:.3e} (tol 1e-12)"]


# --------------------------------------------------------------------- #
# 2. Diophantine oracle equivalence
# --------------------------------------------------------------------- #

def _oracle_psi_table(omega, q_max):
    """Naive enumeration oracle, independent of the production path.

    Loops the ambient integer box directly (innermost axis vectorized),
    tests membership in F against a sympy-computed resonance basis, and
    maximizes |k.omega|^{-1} per shell with the shared sign-canonical /
    lexicographic tie-break.
    """
    import sympy as sp

    n = omega.n
    rows = []
    for j in range(omega.s):
        rows.append([sp.Rational(omega.entries[i][j].numerator,
                                 omega.entries[i][j].denominator)
                     for i in range(n)])
    Mat = sp.Matrix([r for r in rows if any(x != 0 for x in r)])
    # resonance vectors: rational kernel of the constraint system, scaled
    # to integers; k belongs to F iff it is orthogonal to all of them
    res_basis = []
    for vec in Mat.nullspace():
        den = sp.lcm([x.q for x in vec])
        res_basis.append([int(x * den) for x in vec])
    wf = omega.omega_float
    best = {}
    rng = np.arange(-q_max, q_max + 1)
    for head in itertools.product(rng, repeat=n - 1):
        K = np.empty((len(rng), n))
        for i, h in enumerate(head):
            K[:, i] = h
        K[:, n - 1] = rng
        keep = np.ones(len(rng), dtype=bool)
        for rb in res_basis:
            keep &= (K @ np.array(rb, dtype=float)) == 0.0
        K = K[keep]
        if not len(K):
            continue
        shells = np.abs(K).max(axis=1).astype(int)
        vals = np.abs(K @ wf)
        for kk, q, val in zip(K, shells, vals):
            if q == 0 or q > q_max:
                continue
            inv = 1.0 / val
            cur = best.get(q)
            if cur is None or inv > cur[0] * (1 + 1e-9):
                best[q] = (inv, [tuple(int(x) for x in kk)])
            elif inv > cur[0] * (1 - 1e-9):
                cur[1].append(tuple(int(x) for x in kk))
    rows_out = []
    run_val, run_wit = None, None
    import mpmath
    for q in sorted(best):
        val, cands = best[q]
        cands = sorted(set(canonical_mode(c) for c in cands))
        with mpmath.workdps(50):
            scored = [(abs(omega.dot_mp(c)), c) for c in cands]
            dmin = min(s for s, _ in scored)
            wit = min(c for s, c in scored
                      if s <= dmin * (1 + mpmath.mpf("1e-30")))
        val = 1.0 / abs(omega.dot_float(wit))
        if run_val is None or val > run_val * (1 + 1e-12):
            with mpmath.workdps(50):
                if run_wit is not None and \
                        abs(abs(omega.dot_mp(wit)) -
                            abs(omega.dot_mp(run_wit))) <= \
                        mpmath.mpf("1e-30") * abs(omega.dot_mp(run_wit)):
                    continue
            rows_out.append((q, val, wit))
            run_val, run_wit = val, wit
    return rows_out


def corpus_frequencies():
    return [
        ("golden", golden_frequency(), 50),
        ("rational", ExactFrequency.from_rationals(["1/2", "1/3"]), 50),
        ("integer", ExactFrequency.from_rationals(["2", "1"]), 50),
        ("sqrt2", ExactFrequency.parse("1, sqrt2"), 50),
        ("rational2", ExactFrequency.from_rationals(["3/2", "-1/2"]), 50),
        ("golden-line", ExactFrequency([[0, 1], [0, 2]],
                                       [("one", "1"),
                                        ("phi", "1.6180339887498948482045868343656381177203091798058")]
                                       ), 50),
        ("cubic", cubic_frequency(), 50),
        ("golden-plane", ExactFrequency.parse("1, phi, 0"), 50),
        ("mixed", ExactFrequency.parse("1, phi, 1/2"), 50),
        ("sqrt-pair", ExactFrequency.parse("1, sqrt2, sqrt3"), 50),
    ]


@_wrap(2, "psi agrees with the naive enumeration oracle")
def check_2():
    details = []
    ok = True
    for name, omega, qm in corpus_frequencies():
        table = psi_table(omega, qm)
        oracle = _oracle_psi_table(omega, qm)
        prod = table.rows()
        same = len(prod) == len(oracle)
        if same:
            for (q1, v1, w1), (q2, v2, w2) in zip(prod, oracle):
                if q1 != q2 or w1 != w2 or \
                        abs(v1 - v2) > 1e-12 * max(v1, v2):
                    same = False
                    break
        ok &= same
        details.append(f"{name}: {'match' if same else 'MISMATCH'} "
                       f"({len(prod)} breakpoints)")
    return ok, details


# --------------------------------------------------------------------- #
# 3. periodic approximation certificates
# --------------------------------------------------------------------- #

@_wrap(3, "periodic approximation certificates (unimodular, C_j, T_j)")
def check_3():
    details = []
    ok = True
    for name, omega in (("golden", golden_frequency()),
                        ("cubic", cubic_frequency())):
        for q in (5, 13, 34):
            res = periodic_approximations(omega, q)
            cmax = max(res.constants)
            tmax = max(float(v.T) for v in res.vectors)
            good = abs(res.det) == 1 and cmax <= 10.0 and \
                tmax <= 4.0 * res.psi_q + 1e-9
            ok &= good
            details.append(
                f"{name} Q={q}: det={res.det} max C_j={cmax:.3f} "
                f"max T_j={tmax:.0f} (4 psi={4 * res.psi_q:.1f})"
                f"{'' if good else '  <-- FAIL'}")
    return ok, details


# --------------------------------------------------------------------- #
# 4. normal-form structure and exact conservation
# --------------------------------------------------------------------- #

@_wrap(4, "normal-form structure: g_1 = 0, resonant support, "
          "conserved projection")
def check_4():
    details = []
    ok = True
    eps = 1e-4
    # resonant frequency: F is the line through (2, 3)
    om = ExactFrequency.from_rationals(["1", "3/2"])
    f = TrigTaylorPoly.sine(2, 1.0, (1, 0), coeff=eps) + \
        TrigTaylorPoly.sine(2, 1.0, (3, -2), coeff=eps) + \
        TrigTaylorPoly.cosine(2, 1.0, (1, -1), coeff=eps)
    res1 = normal_form(om, f, k=4, kappa=1, q=8)
    g1_zero = res1.g.is_zero()
    ok &= g1_zero
    details.append(f"g_1 identically zero: {g1_zero}")
    res2 = normal_form(om, f, k=4, kappa=2, q=8)
    support_ok = all(om.is_resonant(k) for k in res2.g.modes) and \
        all(om.is_resonant(k) for k in res2.avg_f.modes)
    ok &= support_ok
    details.append(f"resonant Fourier support of g, [f]_omega: {support_ok}")
    # golden (nonresonant) sanity: g vanishes at every order
    omg = golden_frequency()
    fg = TrigTaylorPoly.sine(2, 1.0, (1, 0), coeff=eps) + \
        TrigTaylorPoly.cosine(2, 1.0, (1, -1), coeff=eps)
    resg = normal_form(omg, fg, k=4, kappa=2, q=16)
    ok &= resg.g.is_zero()
    details.append(f"nonresonant g_2 = 0: {resg.g.is_zero()}")
    # truncated normal form conserves the projected actions
    N = res2.normal_form_hamiltonian()
    P = projector_onto_span(om)
    x0 = np.array([0.15, 0.40, 0.05, -0.03])
    traj = integrate(N, x0, 1e-3, 1e3, proj=P, delta=None, i0=x0[2:],
                     check_step=False)
    drift = float(traj.drift_series[-1])
    ok &= drift < 1e-10
    details.append(f"|P_F(I - I_0)| over t=1e3: {drift:.3e} (tol 1e-10)")
    return ok, details


# --------------------------------------------------------------------- #
# 5. remainder scaling in Q
# --------------------------------------------------------------------- #

@_wrap(5, "remainder scaling log|f_k| vs log Q")
def check_5():
    details = []
    om = golden_frequency()
    eps, k = 1e-4, 4
    f = TrigTaylorPoly.sine(2, 1.0, (1, 0), coeff=eps) + \
        TrigTaylorPoly.cosine(2, 1.0, (1, -1), coeff=eps)
    qs = np.array([4.0, 8.0, 16.0, 32.0])
    ok = True
    for kappa in (1, 2):
        norms, dists = [], []
        for q in qs:
            res = normal_form(om, f, k, kappa, q=q)
            norms.append(res.ledger.final_norms["f_rem"])
            dists.append(res.ledger.final_norms["phi_dist"])
        slope = float(np.polyfit(np.log(qs), np.log(norms), 1)[0])
        slope_ok = abs(slope - (-kappa)) <= 0.5
        bound_ok = max(d * q for d, q in zip(dists, qs)) <= 10.0
        ok &= slope_ok and bound_ok
        details.append(
            f"kappa={kappa}: slope {slope:.3f} target {-kappa}+-0.5 "
            f"{'ok' if slope_ok else 'FAIL'}; max |Phi-Id|*Q = "
            f"{max(d * q for d, q in zip(dists, qs)):.3f} "
            f"{'ok' if bound_ok else 'FAIL'}")
    if not ok:
        details.append(
            "note: the pinned two-mode family has fixed Fourier support, "
            "so each averaging pass contracts it by |omega - v_1| ~ Q^-2 "
            "(its divisors k.v stay O(1)); the scheme's worst-case Q^-kappa "
            "rate is an upper bound saturated only by C^k Fourier tails, "
            "which exact trig polynomials cannot carry")
    return ok, details


# --------------------------------------------------------------------- #
# 6. symplecticity of the composed transform
# --------------------------------------------------------------------- #

@_wrap(6, "symplecticity |G^T J G - J| of composed transforms")
def check_6():
    om = golden_frequency()
    eps = 1e-4
    f = TrigTaylorPoly.sine(2, 1.0, (1, 0), coeff=eps) + \
        TrigTaylorPoly.cosine(2, 1.0, (1, -1), coeff=eps)
    res = normal_form(om, f, k=4, kappa=2, q=16)
    defect = symplectic_defect(res.generators, 2, 1.0, n_samples=100,
                               fd_step=1e-5)
    ok = defect <= 1e-6
    return ok, [f"max defect {defect:.3e} over 100 points (tol 1e-6), "
                f"{len(res.generators)} generators at order 6"]


# --------------------------------------------------------------------- #
# 7. stability-time shape
# --------------------------------------------------------------------- #

@_wrap(7, "stability time: predicted window and exponent fit")
def check_7():
    om = cubic_frequency()
    k = 3
    eps_list = np.logspace(-3, -6, 7)
    fam = DriftDemoFamily(omega=om, k=k, q_max=110)
    amp = []
    for eps in eps_list:
        d = fam.build(eps)
        amp.append(d["speed_pred"] * d["window"] / TWO_PI)
    delta = 0.2 * min(amp)
    report = stability_experiment(om, k, eps_list, delta, q_max=110)
    details = [f"delta = {delta:.3e}, tau_fit = {report.tau_fit:.3f}"]
    ok = not report.unbounded
    window_ok = True
    for r in report.rows:
        if not math.isfinite(r.t_obs):
            ok = False
            details.append(f"eps={r.eps:.1e}: horizon reached")
            continue
        window_ok &= r.t_obs >= r.t_pred / 10.0
        details.append(f"eps={r.eps:.1e}: T_obs={r.t_obs:.3e} "
                       f"T_pred={r.t_pred:.3e} Q={r.q:.1f}")
    gap = report.exponent_gap()
    fit_ok = gap <= 0.5
    details.append(f"slope {report.slope:.3f} vs predicted "
                   f"{report.predicted_exponent:.3f} (gap {gap:.3f}, "
                   f"tol 0.5); window check {'ok' if window_ok else 'FAIL'}")
    return ok and window_ok and fit_ok, details


# --------------------------------------------------------------------- #
# 8. drift-rate demonstration
# --------------------------------------------------------------------- #

@_wrap(8, "initial drift speed vs prediction (factor 3)")
def check_8():
    om = golden_frequency()
    details = []
    ok = True
    for k in (2, 3):
        for eps in (1e-3, 1e-4):
            rep = drift_demo(om, k, eps, check=False)
            good = 1 / 3 <= rep.ratio <= 3
            ok &= good
            details.append(
                f"k={k} eps={eps:.0e}: speed {rep.speed_measured:.3e} / "
                f"pred {rep.speed_pred:.3e} = {rep.ratio:.3f} "
                f"{'ok' if good else 'FAIL'} (Q={rep.q:.1f}, "
                f"window={rep.window:.1f})")
    return ok, details


# --------------------------------------------------------------------- #
# 9. splitting of invariant manifolds
# --------------------------------------------------------------------- #

@_wrap(9, "splitting: mu=0 doubling, mu-sweep and eps-sweep slopes")
def check_9():
    details = []
    # separatrix doubling at mu = 0
    m0 = pendulum_model()
    wu, ws, rep0 = split_model(m0)
    double_ok = float(np.abs(rep0.angles).max()) < 1e-8
    details.append(f"mu=0 angles {rep0.angles} (tol 1e-8) "
                   f"{'ok' if double_ok else 'FAIL'}")
    # closed-form separatrix cross-check
    th = np.linspace(0.135, 0.365, 31)
    sep = separatrix_action(m0, th)
    fitted = wu.sfun.grad(np.full_like(th, 0.4), th)[:, 1]
    sep_err = float(np.abs(fitted - sep).max())
    sep_ok = sep_err < 1e-7
    details.append(f"separatrix closed form error {sep_err:.2e} (tol 1e-7)")
    # mu sweep at fixed lam
    mus = [1e-5, 3.16e-5, 1e-4, 3.16e-4, 1e-3]
    msw = mu_sweep(mus)
    mu_ok = abs(msw.slope - 1.0) <= 0.2
    small_ok = max(msw.small_over_mu) <= 1.0
    spread = max(msw.leading_over_mu) / min(msw.leading_over_mu)
    stable_ok = spread <= 2.0
    details.append(f"mu-sweep leading slope {msw.slope:.3f} "
                   f"(target 1.0+-0.2) {'ok' if mu_ok else 'FAIL'}; "
                   f"constant spread x{spread:.2f} "
                   f"{'ok' if stable_ok else 'FAIL'}; "
                   f"max small-angle/mu {max(msw.small_over_mu):.2e}")
    # eps sweep with mu = lam^(k-2), k = 3
    esw = epsilon_sweep([1e-4, 3.16e-5, 1e-5, 3.16e-6, 1e-6], k=3)
    eps_ok = abs(esw.slope - 1.0) <= 0.3
    ratios = [abs(r.angles[0] / r.angles[-1]) for r in esw.rows]
    ratio_ok = max(ratios) <= 0.1
    details.append(f"eps-sweep slope vs bound {esw.slope:.3f} "
                   f"(target 1.0+-0.3) {'ok' if eps_ok else 'FAIL'}; "
                   f"tangential/leading max {max(ratios):.2e}")
    ok = double_ok and sep_ok and mu_ok and small_ok and stable_ok and \
        eps_ok and ratio_ok
    return ok, details


# --------------------------------------------------------------------- #
# 10. appendix inequality audit
# --------------------------------------------------------------------- #

def _map_ck_norm_fd(mapfunc, n, radius, j, n_pts=40, fd=1e-4, rng=None):
    """C^j norm (j <= 2) of a map by central differences at samples."""
    rng = rng or np.random.default_rng(5)
    pts = np.hstack([rng.random((n_pts, n)),
                     rng.uniform(-0.5 * radius, 0.5 * radius, (n_pts, n))])
    best = float(np.abs(mapfunc(pts)).max())
    dim = 2 * n
    eye = np.eye(dim)
    for a in range(dim):
        plus = mapfunc(pts + fd * eye[a])
        minus = mapfunc(pts - fd * eye[a])
        best = max(best, float(np.abs((plus - minus) / (2 * fd)).max()))
        if j >= 2:
            center = mapfunc(pts)
            best = max(best, float(np.abs(
                (plus - 2 * center + minus) / fd ** 2).max()))
            for b in range(a + 1, dim):
                pp = mapfunc(pts + fd * (eye[a] + eye[b]))
                pm = mapfunc(pts + fd * (eye[a] - eye[b]))
                mp = mapfunc(pts - fd * (eye[a] - eye[b]))
                mm = mapfunc(pts - fd * (eye[a] + eye[b]))
                best = max(best, float(np.abs(
                    (pp - pm - mp + mm) / (4 * fd ** 2)).max()))
    return best


@_wrap(10, "appendix inequality audit (products, brackets, composition, "
           "flow distance)")
def check_10():
    rng = np.random.default_rng(77)
    details = []
    ok = True
    # product norms (Leibniz shape)
    worst_prod = 0.0
    for _ in range(50):
        f = random_real_poly(rng, 2, 3, 1, n_modes=3)
        g = random_real_poly(rng, 2, 3, 1, n_modes=3)
        kk = 3
        c = (f * g).ck_norm_grid(kk) / max(
            f.ck_norm_grid(kk) * g.ck_norm_grid(kk), 1e-300)
        worst_prod = max(worst_prod, c)
    ok &= worst_prod <= 1e4
    details.append(f"|fg|_k <= C |f|_k |g|_k: max C = {worst_prod:.2f}")
    # Poisson bracket norms
    worst_pb = 0.0
    for kk in (2, 3, 4):
        for _ in range(16):
            f = random_real_poly(rng, 2, 3, 1, n_modes=3)
            g = random_real_poly(rng, 2, 3, 1, n_modes=3)
            c = f.poisson(g).ck_norm_grid(kk - 1) / max(
                f.ck_norm_grid(kk) * g.ck_norm_grid(kk), 1e-300)
            worst_pb = max(worst_pb, c)
            envelope = 10.0 * 4.0 ** kk * 2
            ok &= c <= envelope
    ok &= worst_pb <= 1e4
    details.append(f"|{{f,g}}|_(k-1) <= C |f|_k |g|_k: max C = "
                   f"{worst_pb:.2f}")
    # composition norms (Faa di Bruno shape), near-identity maps
    worst_comp = 0.0
    for _ in range(10):
        fpol = [random_real_poly(rng, 2, 2, 1, n_modes=2, scale=0.02)
                for _ in range(4)]
        gpol = [random_real_poly(rng, 2, 2, 1, n_modes=2, scale=0.02)
                for _ in range(4)]

        def mk(pols):
            def mapf(pts):
                out = pts.copy()
                for i, p in enumerate(pols):
                    out[:, i] = out[:, i] + p.evaluate_batch(
                        pts[:, :2], pts[:, 2:], check_domain=False)
                return out
            return mapf

        F, G = mk(fpol), mk(gpol)
        comp = lambda pts: F(G(pts))
        nf = _map_ck_norm_fd(F, 2, 1.0, 2, rng=rng)
        ng = _map_ck_norm_fd(G, 2, 1.0, 2, rng=rng)
        nc = _map_ck_norm_fd(comp, 2, 1.0, 2, rng=rng)
        worst_comp = max(worst_comp, nc / (nf * ng ** 2))
    ok &= worst_comp <= 1e4
    details.append(f"|F o G|_k <= C |F|_k |G|_k^k (k=2): max C = "
                   f"{worst_comp:.3f}")
    # flow distance (Lemma-shape |X^1 - Id| <= C |X|)
    worst_flow = 0.0
    for _ in range(8):
        chi = random_real_poly(rng, 2, 2, 2, n_modes=3, scale=2e-3)
        gen = LieGenerator(chi=chi, order=6)
        field_norm = max(p.ck_norm_grid(1) for pair in (gen.field_polys(),)
                         for comp in pair for p in comp if not p.is_zero())
        pts = np.hstack([rng.random((30, 2)),
                         rng.uniform(-0.4, 0.4, (30, 2))])
        img = flow_points(gen, pts)
        dist = float(np.abs(img - pts).max())
        # C^1 part by finite differences
        fd = 1e-5
        for a in range(4):
            e = np.zeros(4)
            e[a] = fd
            dcol = (flow_points(gen, pts + e) -
                    flow_points(gen, pts - e)) / (2 * fd)
            dcol[:, a] -= 1.0
            dist = max(dist, float(np.abs(dcol).max()))
        worst_flow = max(worst_flow, dist / max(field_norm, 1e-300))
    ok &= worst_flow <= 1e4
    details.append(f"|X^1 - Id|_(k-1) <= C |X|_(k-1): max C = "
                   f"{worst_flow:.3f}")
    return ok, details


ALL_CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6,
              check_7, check_8, check_9, check_10]


def run_all(selected=None, verbose=False):
    results = []
    for chk in ALL_CHECKS:
        if selected and chk.number not in selected:
            continue
        res = chk()
        results.append(res)
        if verbose:
            print(res.line())
            for d in res.details:
                print(f"    {d}")
    if verbose:
        npass = sum(r.passed for r in results)
        print(f"{npass}/{len(results)} criteria passed")
    return results
