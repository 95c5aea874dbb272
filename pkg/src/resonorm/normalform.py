"""Iterated periodic averaging: homological equation, Lie transforms, the
single periodic step and the double-induction normal-form driver.

The driver conjugates H = l_omega + f by a composition of time-1 flows of
small generators.  One outer pass reduces the non-resonant remainder by a
factor ~ 1/Q; each outer pass is split into d elementary steps along the
periodic approximations v_1..v_d of omega, which is what keeps the loss
of differentiability at one derivative per pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .diophantine import (ExactFrequency, PeriodicVector,
                          periodic_approximations, psi_table, rational_span)
from .trigpoly import TWO_PI, TrigTaylorPoly


class ThresholdError(RuntimeError):
    """A smallness condition of the averaging step is violated.

    This mirrors the scheme's admissibility inequalities, not a numerical
    failure; the message names the violated inequality.
    """


class LieDivergenceError(RuntimeError):
    """Lie series tail is not small: generator too large for the order."""


class FlowEscapeError(RuntimeError):
    """A generator flow left the action domain before time one."""


@dataclass
class NormalFormConfig:
    lie_order: int = 6
    t_nu_threshold: float = 0.1
    caps_k: int | None = None      # working Fourier cap; None = no limit
    caps_d: int | None = None      # working degree cap
    c_eps: float = 1.0             # Q = Delta*(c_eps / eps) when Q='auto'
    q_max: int = 200
    grid_m: int = 8
    validate_flows: bool = True
    flow_steps: int = 128


# --------------------------------------------------------------------- #
# averaging and the homological equation
# --------------------------------------------------------------------- #

def average(f, direction):
    """[f]_w: keep exactly the Fourier modes with k.w = 0.

    `direction` is a PeriodicVector (exact integer test k.p = 0) or an
    ExactFrequency (exact rational test).  Idempotent and linear.
    """
    modes = {k: dict(cp) for k, cp in f.modes.items()
             if direction.is_resonant(k)}
    return TrigTaylorPoly(f.n, f.radius, modes, f.kmax, f.dmax,
                          _canonical=True)


def nonresonant_part(f, direction):
    modes = {k: dict(cp) for k, cp in f.modes.items()
             if not direction.is_resonant(k)}
    return TrigTaylorPoly(f.n, f.radius, modes, f.kmax, f.dmax,
                          _canonical=True)


@dataclass
class LieGenerator:
    """Generating Hamiltonian chi with zero average along its periodic
    vector (Fourier support only on k with k.v != 0)."""

    chi: TrigTaylorPoly
    order: int
    v: PeriodicVector | None = None

    def field_polys(self):
        """Hamiltonian vector field components (theta', I') of chi."""
        gt = self.chi.gradient_theta()
        ga = self.chi.gradient_action()
        return ga, [-g for g in gt]


def solve_homological(u, v, order=6):
    """Solve {chi, l_v} = u - [u]_v mode-wise.

    chi_k = u_k / (2 pi i k.v) on the non-resonant modes.  Division is
    only ever by exactly nonzero k.v, and |k.v| >= 1/T since T(k.v) is a
    nonzero integer.
    """
    modes = {}
    for k, cp in u.modes.items():
        kv = v.dot(k)
        if kv == 0:
            continue
        div = TWO_PI * 1j * float(kv)
        modes[k] = {a: c / div for a, c in cp.items()}
    chi = TrigTaylorPoly(u.n, u.radius, modes, u.kmax, u.dmax,
                         _canonical=True)
    return LieGenerator(chi=chi, order=order, v=v)


# --------------------------------------------------------------------- #
# flows of generators (numerical, for cross-validation and map distance)
# --------------------------------------------------------------------- #

def flow_points(gen, pts, t=1.0, steps=128, escape_radius=None):
    """RK4 time-t map of the chi-flow applied to points (P, 2n)."""
    chi = gen.chi
    n = chi.n
    ga, gi = gen.field_polys()

    def field(x):
        th, ac = x[:, :n], x[:, n:]
        dth = np.stack([g.evaluate_batch(th, ac, check_domain=False)
                        if not g.is_zero() else np.zeros(len(x))
                        for g in ga], axis=1)
        dac = np.stack([g.evaluate_batch(th, ac, check_domain=False)
                        if not g.is_zero() else np.zeros(len(x))
                        for g in gi], axis=1)
        return np.hstack([dth, dac])

    x = np.array(pts, dtype=float)
    h = t / steps
    for _ in range(steps):
        k1 = field(x)
        k2 = field(x + 0.5 * h * k1)
        k3 = field(x + 0.5 * h * k2)
        k4 = field(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if escape_radius is not None and x.size and \
                np.abs(x[:, n:]).max() > escape_radius:
            raise FlowEscapeError(
                "generator flow left the action domain before time 1 "
                "(outside the smallness regime)")
    return x


def transform_points(generators, pts, steps=128, escape_radius=None):
    """Apply the composed time-1 flows: Phi = X_{g1} o ... o X_{gN}.

    Points go through the flows in reverse list order, matching the
    function-side composition H -> H o X_{g1} o X_{g2} o ...
    """
    x = np.array(pts, dtype=float)
    for gen in reversed(generators):
        if not gen.chi.is_zero():
            x = flow_points(gen, x, steps=steps,
                            escape_radius=escape_radius)
    return x


def _sample_states(n, radius, m, rng=None):
    rng = rng or np.random.default_rng(7)
    th = rng.random((m, n))
    ac = rng.uniform(-radius, radius, (m, n))
    return np.hstack([th, ac])


def map_distance(generators, n, radius, j=0, n_samples=100, steps=128,
                 fd_step=1e-6):
    """Measured C^j distance of the composed transform to the identity.

    C^0 by direct grid sampling of |Phi(x) - x| (angles unwrapped); for
    j = 1 the Jacobian is estimated by central differences and the
    maximum of both levels is returned.
    """
    pts = _sample_states(n, 0.5 * radius, n_samples)
    img = transform_points(generators, pts, steps=steps,
                           escape_radius=2.0 * radius)
    diff = img - pts
    diff[:, :n] = (diff[:, :n] + 0.5) % 1.0 - 0.5
    dist = float(np.abs(diff).max()) if len(generators) else 0.0
    if j == 0 or not generators:
        return dist
    sup = dist
    eye = np.eye(2 * n)
    for i in range(2 * n):
        plus = transform_points(generators, pts + fd_step * eye[i],
                                steps=steps)
        minus = transform_points(generators, pts - fd_step * eye[i],
                                 steps=steps)
        col = (plus - minus) / (2 * fd_step)
        col[:, i] -= 1.0
        sup = max(sup, float(np.abs(col).max()))
    return sup


def symplectic_defect(generators, n, radius, n_samples=100, fd_step=1e-5,
                      steps=128, rng=None):
    """max over sample points of |G^T J G - J|_inf for the composed map."""
    pts = _sample_states(n, 0.5 * radius, n_samples, rng=rng)
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    worst = 0.0
    eye = np.eye(2 * n)
    cols = []
    for i in range(2 * n):
        plus = transform_points(generators, pts + fd_step * eye[i],
                                steps=steps)
        minus = transform_points(generators, pts - fd_step * eye[i],
                                 steps=steps)
        cols.append((plus - minus) / (2 * fd_step))
    for p in range(len(pts)):
        G = np.stack([c[p] for c in cols], axis=1)
        worst = max(worst, float(np.abs(G.T @ J @ G - J).max()))
    return worst


# --------------------------------------------------------------------- #
# Lie transform
# --------------------------------------------------------------------- #

@dataclass
class LieReport:
    order: int
    last_term_mass: float
    dropped_mass: float
    flow_residual: float | None


def lie_transform(H, gen, caps=None, validate=True, flow_steps=128,
                  rng=None):
    """exp(ad_chi) H truncated at the generator's order.

    Returns the transformed Hamiltonian sum_{j<=L} ad_chi^j H / j! and a
    report with the mass of the last retained term plus all truncation
    mass dropped by the working caps.  When `validate`, the result is
    cross-checked pointwise against numerical integration of the chi
    flow at 20 sample points.
    """
    L = gen.order
    if L < 2:
        raise ValueError("lie order must be >= 2")
    chi = gen.chi
    total = H
    term = H
    dropped = 0.0
    last_mass = 0.0
    if chi.is_zero():
        return H, LieReport(order=L, last_term_mass=0.0, dropped_mass=0.0,
                            flow_residual=0.0)
    for j in range(1, L + 1):
        term = term.poisson(chi) * (1.0 / j)
        if caps is not None:
            term, d = term.truncated(*caps)
            dropped += d
        total = total + term
        last_mass = term.coeff_mass()
        if term.is_zero():
            last_mass = 0.0
            break
    href = max(H.coeff_mass(), 1e-300)
    if last_mass > 0.1 * href:
        raise LieDivergenceError(
            f"last Lie term mass {last_mass:.3e} exceeds 10% of |H| "
            f"({href:.3e}); generator too large for series order {L}")
    residual = None
    if validate:
        rng = rng or np.random.default_rng(11)
        pts = _sample_states(H.n, 0.5 * H.radius, 20, rng=rng)
        img = flow_points(gen, pts, steps=flow_steps)
        lhs = total.evaluate_batch(pts[:, :H.n], pts[:, H.n:],
                                   check_domain=False)
        rhs = H.evaluate_batch(img[:, :H.n], img[:, H.n:],
                               check_domain=False)
        residual = float(np.abs(lhs - rhs).max())
        tol = max(1e-8, 10.0 * last_mass + 10.0 * dropped)
        if residual > tol:
            raise LieDivergenceError(
                f"Lie series disagrees with the integrated flow: "
                f"residual {residual:.3e} > {tol:.3e}")
    return total, LieReport(order=L, last_term_mass=last_mass,
                            dropped_mass=dropped, flow_residual=residual)


# --------------------------------------------------------------------- #
# one periodic averaging step
# --------------------------------------------------------------------- #

@dataclass
class StepRecord:
    kappa: int
    j: int
    lift: tuple
    T: float
    nu: float
    order: int
    u_c0: float
    uprime_c0: float
    u_ci: float
    uprime_ci: float
    theta_dist: float
    t_nu: float
    trunc_mass: float
    radius: float

    @property
    def uprime_ratio(self):
        """measured |u'|_0 / (|u|_0 T nu), the step contraction constant."""
        den = self.u_c0 * self.T * self.nu
        return self.uprime_c0 / den if den > 0 else 0.0


def periodic_step(v, s, u, nu, config=None, kappa=0, j=1, radius=None,
                  norm_order=0):
    """One elementary averaging step along a periodic vector.

    Conjugates l_v + s + u by the time-1 flow of the homological
    generator, returning (generator, u', record) with
    H o Theta = l_v + s + [u]_v + u'.  Preconditions mirror the scheme's
    smallness inequalities: T*nu below threshold and |u| <= nu.  The hard
    thresholds gate on C^0 sizes (the scheme's inequalities hold up to
    constants that absorb derivative factors); the C^i norms are
    measured into the record.
    """
    config = config or NormalFormConfig()
    T = float(v.T)
    R = radius if radius is not None else u.radius
    if T * nu > config.t_nu_threshold:
        raise ThresholdError(
            f"T*nu = {T * nu:.3e} > {config.t_nu_threshold} "
            f"(periodic smallness condition T*nu << 1 violated)")
    u_c0 = u.ck_norm_grid(0, m=config.grid_m, radius=R)
    if u_c0 > nu * (1 + 1e-9):
        raise ThresholdError(
            f"|u|_C0 = {u_c0:.3e} > nu = {nu:.3e} "
            f"(effective part must be dominated by nu)")
    gen = solve_homological(u, v, order=config.lie_order)
    caps = None
    if config.caps_k is not None:
        caps = (config.caps_k, config.caps_d
                if config.caps_d is not None else u.dmax + s.dmax + 2)
    l_v = TrigTaylorPoly.action_linear(v.v_float, u.radius)
    H = l_v + s + u
    transformed, rep = lie_transform(H, gen, caps=caps,
                                     validate=config.validate_flows,
                                     flow_steps=config.flow_steps)
    u_res = average(u, v)
    u_prime = transformed - l_v - s - u_res
    theta_dist = map_distance([gen], u.n, R, j=0, n_samples=40,
                              steps=config.flow_steps)
    record = StepRecord(
        kappa=kappa, j=j, lift=v.p, T=T, nu=nu, order=norm_order,
        u_c0=u_c0,
        uprime_c0=u_prime.ck_norm_grid(0, m=config.grid_m, radius=R),
        u_ci=u.ck_norm_grid(norm_order, m=config.grid_m, radius=R),
        uprime_ci=u_prime.ck_norm_grid(norm_order, m=config.grid_m,
                                       radius=R),
        theta_dist=theta_dist, t_nu=T * nu, trunc_mass=rep.dropped_mass,
        radius=R)
    return gen, u_prime, record


# --------------------------------------------------------------------- #
# the double-induction driver
# --------------------------------------------------------------------- #

@dataclass
class NormLedger:
    k: int
    kappa: int
    q: float
    eps: float
    delta_width: float
    steps: list = field(default_factory=list)
    final_norms: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    dropped_total: float = 0.0

    def to_json(self):
        data = asdict(self)
        data["steps"] = [asdict(s) if not isinstance(s, dict) else s
                         for s in self.steps]
        return json.dumps(data, indent=2, default=str)

    def to_csv(self):
        cols = ["kappa", "j", "lift", "T", "nu", "order", "u_c0",
                "uprime_c0", "u_ci", "uprime_ci", "theta_dist", "t_nu",
                "trunc_mass", "radius"]
        lines = [",".join(cols)]
        for s in self.steps:
            d = asdict(s) if not isinstance(s, dict) else s
            lines.append(",".join(
                str(d[c]).replace(",", ";") for c in cols))
        return "\n".join(lines) + "\n"


@dataclass
class NormalFormResult:
    omega: ExactFrequency
    generators: list
    g: TrigTaylorPoly
    f_rem: TrigTaylorPoly
    avg_f: TrigTaylorPoly
    ledger: NormLedger

    def normal_form_hamiltonian(self, include_remainder=False):
        R = self.f_rem.radius
        l_w = TrigTaylorPoly.action_linear(self.omega.omega_float, R)
        out = l_w + self.avg_f + self.g
        if include_remainder:
            out = out + self.f_rem
        return out

    def transform_points(self, pts, steps=128):
        return transform_points(self.generators, pts, steps=steps)


def _assert_resonant_support(poly, omega, what):
    for k in poly.modes:
        if not omega.is_resonant(k):
            raise AssertionError(
                f"{what} has a non-resonant Fourier mode {k}")


def normal_form(omega, f, k, kappa, q="auto", config=None):
    """Resonant normal form of H = l_omega + f to order kappa.

    Runs the double induction: outer passes 1..kappa; inside each pass,
    one periodic step per approximation vector v_1..v_d at parameter Q.
    Returns generators for the composed conjugacy, the resonant part
    g_kappa (identically zero for kappa <= 1), the remainder f_kappa and
    the exact average [f]_omega, with every norm measured to the ledger.
    """
    config = config or NormalFormConfig()
    if not (0 <= kappa <= k - 1):
        raise ValueError("need 0 <= kappa <= k-1")
    R = f.radius
    eps = f.ck_norm_grid(k, m=config.grid_m)
    if q == "auto":
        table = psi_table(omega, config.q_max)
        q = table.delta_star(config.c_eps / eps)
    d, _ = rational_span(omega)
    delta_w = R / (2 * d * max(k - 1, 1))
    ledger = NormLedger(k=k, kappa=kappa, q=float(q), eps=eps,
                        delta_width=delta_w)
    avg_f = average(f, omega)
    f_rem = f - avg_f
    g = TrigTaylorPoly.zero(f.n, R)
    generators = []
    l_w = TrigTaylorPoly.action_linear(omega.omega_float, R)
    radius_cur = R
    dropped = 0.0
    if kappa > 0:
        approx = periodic_approximations(omega, q, q_max=config.q_max)
        ledger.thresholds["approx_constants"] = approx.constants
        ledger.thresholds["approx_T"] = [float(v.T) for v in approx.vectors]
        # measured admissibility ratio: the scheme needs eps * Delta(Q)
        # below an order-one constant
        ledger.thresholds["eps_times_delta_q"] = eps * q * approx.psi_q
        for kp in range(1, kappa + 1):
            order = k - kp
            f_start = f_rem
            u = f_start
            rem = None
            for j, v in enumerate(approx.vectors, start=1):
                s_tilde = l_w - TrigTaylorPoly.action_linear(v.v_float, R)
                s = s_tilde + avg_f + g
                radius_cur -= delta_w
                nu = max(s.ck_norm_grid(0, m=config.grid_m,
                                        radius=radius_cur),
                         u.ck_norm_grid(0, m=config.grid_m,
                                        radius=radius_cur))
                try:
                    gen, u_prime, rec = periodic_step(
                        v, s, u, nu, config=config, kappa=kp, j=j,
                        radius=radius_cur, norm_order=order)
                except ThresholdError as exc:
                    raise ThresholdError(
                        f"outer pass {kp}, step j={j} "
                        f"(v={v.p}, T={v.T}): {exc}") from exc
                generators.append(gen)
                dropped += rec.trunc_mass
                ledger.steps.append(rec)
                if rem is None:
                    rem = u_prime
                else:
                    rem_t, rep = lie_transform(
                        rem, gen,
                        caps=(config.caps_k, config.caps_d)
                        if config.caps_k else None,
                        validate=config.validate_flows,
                        flow_steps=config.flow_steps)
                    dropped += rep.dropped_mass
                    rem = rem_t + u_prime
                u = average(u, v)
            g_inc = u  # [f_start]_{v_1,...,v_d}
            g_inc_direct = average(f_start, omega)
            if not g_inc.allclose(g_inc_direct, tol=1e-10):
                raise AssertionError(
                    "iterated periodic averages do not collapse to the "
                    "omega-average (Z-basis certificate broken?)")
            g = g + g_inc
            f_rem = rem
            if kp == 1 and not g.is_zero():
                raise AssertionError("g_1 must vanish identically")
    _assert_resonant_support(g, omega, "resonant part g")
    _assert_resonant_support(avg_f, omega, "[f]_omega")
    ledger.dropped_total = dropped
    ledger.final_norms = {
        "f_rem": f_rem.ck_norm_grid(k - kappa, m=config.grid_m,
                                    radius=radius_cur) + dropped,
        "g": g.ck_norm_grid(min(k - kappa + 1, k), m=config.grid_m,
                            radius=radius_cur),
        "avg_f": avg_f.ck_norm_grid(k, m=config.grid_m),
        "radius_final": radius_cur,
    }
    if generators:
        ledger.final_norms["phi_dist"] = map_distance(
            generators, f.n, radius_cur, j=0, n_samples=60,
            steps=config.flow_steps)
    else:
        ledger.final_norms["phi_dist"] = 0.0
    return NormalFormResult(omega=omega, generators=generators, g=g,
                            f_rem=f_rem, avg_f=avg_f, ledger=ledger)


# --------------------------------------------------------------------- #
# localization of a nonlinear integrable part
# --------------------------------------------------------------------- #

@dataclass
class LocalizeResult:
    perturbation: TrigTaylorPoly
    r: float
    eps: float
    pert_norm: float
    ratio: float                 # pert_norm vs r (the rescaled smallness)
    weights_note: str

    def rescaled_hamiltonian(self, omega):
        l_w = TrigTaylorPoly.action_linear(omega.omega_float,
                                           self.perturbation.radius)
        return l_w + self.perturbation


def localize(h, f, r, k, omega, config=None):
    """Rescale an r-neighbourhood of the zero torus to the linear case.

    Checks sqrt(eps) <= r <= R, verifies grad h(0) = omega, and returns
    the perturbation of H~(theta, J) = (h(rJ) - h(0))/r + f(theta, rJ)/r
    - l_omega(J) on the unit action ball, with its measured norm.
    """
    config = config or NormalFormConfig()
    R = f.radius
    eps = f.ck_norm_grid(k, m=config.grid_m)
    if r > R:
        raise ThresholdError(f"r = {r} exceeds the domain radius {R}")
    if r < math.sqrt(eps):
        raise ThresholdError(
            f"r = {r} < sqrt(eps) = {math.sqrt(eps):.3e}: localization "
            f"threshold sqrt(eps) <= r <= R violated")
    for km in h.modes:
        if any(km):
            raise ValueError("integrable part must be theta-independent")
    grad0 = np.array([h.daction(i).evaluate([0.0] * h.n, [0.0] * h.n)
                      for i in range(h.n)])
    if np.abs(grad0 - omega.omega_float).max() > 1e-12:
        raise ValueError("grad h(0) != omega")
    h0 = h.evaluate([0.0] * h.n, [0.0] * h.n)
    h_resc = h.scale_actions(r) * (1.0 / r) - h0 / r
    f_resc = f.scale_actions(r) * (1.0 / r)
    l_w = TrigTaylorPoly.action_linear(omega.omega_float, R)
    pert = (h_resc - l_w + f_resc).with_radius(1.0)
    pert_norm = pert.ck_norm_grid(k, m=config.grid_m)
    return LocalizeResult(
        perturbation=pert, r=r, eps=eps, pert_norm=pert_norm,
        ratio=pert_norm / r,
        weights_note=("C^0 bounds on D_r pull back with weights "
                      "r^{-|l2|} per action derivative"))
