"""Splitting of invariant manifolds for the resonant model with one fast
angle and one pendulum angle (d = 1, m = 1, so n = 2).

The hyperbolic invariant circle is computed as a periodic orbit of the
return map to the section theta1 = 0; its stable/unstable manifolds are
grown from the monodromy eigendirections by batches of compiled RK4
trajectories, sampled over a band of pendulum angles a quarter turn from
the saddle, and fitted as exact Lagrangian graphs I = dS/dtheta.  The
splitting matrix is the Hessian of S+ - S- at a gradient-matching point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numpy.polynomial import chebyshev as ncheb

from .dynamics import _field, pack
from .trigpoly import TWO_PI, TrigTaylorPoly
from .normalform import ThresholdError


class HyperbolicityError(RuntimeError):
    pass


class PatchError(RuntimeError):
    pass


class HomoclinicError(RuntimeError):
    pass


# --------------------------------------------------------------------- #
# the model
# --------------------------------------------------------------------- #

@dataclass
class ResonantModel:
    """H = w1*I1 + A*I1^2 + B*I2^2 + V(th2) + lam*R(th2,I) + mu*F(th,I).

    The w1*I1 + A*I1^2 block is the integrable fast part; B*I2^2 + V is
    the pendulum; R is the special (theta1-independent) perturbation and
    F the general one.
    """

    w1: float
    A: float
    B: float
    V: TrigTaylorPoly
    R_term: TrigTaylorPoly
    F_term: TrigTaylorPoly
    lam: float = 0.0
    mu: float = 0.0
    radius: float = 1.0

    def __post_init__(self):
        self.validate_assumptions()

    def validate_assumptions(self):
        """Pendulum block is definite and V has a nondegenerate maximum."""
        if self.B <= 0:
            raise ValueError("B must be positive definite (scalar > 0)")
        g = self.V.dtheta(1).evaluate([0.0, 0.0], [0.0, 0.0])
        h = self.V.derivative((0, 2), (0, 0)).evaluate([0.0, 0.0],
                                                       [0.0, 0.0])
        if abs(g) > 1e-10:
            raise ValueError("V must be critical at theta2 = 0")
        if h >= 0:
            raise ValueError("V must have a nondegenerate maximum at 0")
        self._v2 = h

    def hamiltonian(self, mu=None, lam=None):
        mu = self.mu if mu is None else mu
        lam = self.lam if lam is None else lam
        R1 = self.radius
        H = TrigTaylorPoly.action_linear([self.w1, 0.0], R1)
        H = H + TrigTaylorPoly.monomial(2, R1, (2, 0), self.A)
        H = H + TrigTaylorPoly.monomial(2, R1, (0, 2), self.B)
        H = H + self.V
        if lam:
            H = H + lam * self.R_term
        if mu:
            H = H + mu * self.F_term
        return H

    @property
    def hyperbolic_rate(self):
        """Linear rate sqrt(2 B |V''(0)|) of the unperturbed saddle."""
        return math.sqrt(2.0 * self.B * abs(self._v2))


def pendulum_model(lam=0.0, mu=0.0, w1=math.sqrt(2.0), A=0.5, B=0.5,
                   moving_r=False):
    """Default family: cosine pendulum with a saddle-anchored special
    perturbation R = (1 - cos(2 pi th2)) I2 and a general perturbation
    F = sin(2 pi th2) + cos(2 pi (th1 - th2)).

    R vanishes to second order at the saddle, so the hyperbolic point
    and its linear rate stay put while lam deforms the separatrix; with
    moving_r the classical R = cos(2 pi th2) I2 is used instead, which
    drags the fixed point by O(lam).
    """
    R1 = 1.0
    V = TrigTaylorPoly.cosine(2, R1, (0, 1), coeff=1.0 / TWO_PI ** 2)
    if moving_r:
        R_term = TrigTaylorPoly.cosine(2, R1, (0, 1), alpha=(0, 1))
    else:
        R_term = TrigTaylorPoly.monomial(2, R1, (0, 1)) - \
            TrigTaylorPoly.cosine(2, R1, (0, 1), alpha=(0, 1))
    F_term = TrigTaylorPoly.sine(2, R1, (0, 1)) + \
        TrigTaylorPoly.cosine(2, R1, (1, -1))
    return ResonantModel(w1=w1, A=A, B=B, V=V, R_term=R_term,
                         F_term=F_term, lam=lam, mu=mu)


def separatrix_action(model, theta2):
    """Closed-form upper separatrix I2(th2) = sqrt((V(0)-V(th2))/B) of the
    unperturbed pendulum."""
    th = np.atleast_1d(np.asarray(theta2, dtype=float))
    z = np.zeros_like(th)
    pts_t = np.stack([z, th], axis=1)
    pts_a = np.zeros_like(pts_t)
    v = model.V.evaluate_batch(pts_t, pts_a, check_domain=False)
    v0 = model.V.evaluate([0.0, 0.0], [0.0, 0.0])
    return np.sqrt(np.maximum(v0 - v, 0.0) / model.B)


# --------------------------------------------------------------------- #
# fixed point of the pendulum factor
# --------------------------------------------------------------------- #

@dataclass
class FixedPointResult:
    theta2: float
    i2: float
    eigenvalues: tuple
    unstable_dir: np.ndarray
    iterations: int


def fixed_point(model, lam_threshold=0.2, tol=1e-12, max_iter=50):
    """Hyperbolic fixed point of the reduced (th2, I2) system at I1 = 0.

    Newton iteration from the unperturbed saddle (0, 0); the mu-part is
    ignored (theta1-independent dynamics only).  Returns the point, the
    linearization eigenvalues (asserted a real pair +-alpha) and the
    unstable direction.
    """
    if model.lam > lam_threshold:
        raise ThresholdError(
            f"lam={model.lam} above fixed-point threshold {lam_threshold}")
    H = model.hamiltonian(mu=0.0).restrict_action(0)
    dth = H.derivative((0, 1), (0, 0))
    dI = H.derivative((0, 0), (0, 1))
    d_thth = H.derivative((0, 2), (0, 0))
    d_thI = H.derivative((0, 1), (0, 1))
    d_II = H.derivative((0, 0), (0, 2))

    def ev(poly, th2, i2):
        return poly.evaluate([0.0, th2], [0.0, i2], check_domain=False)

    x = np.array([0.0, 0.0])
    for it in range(max_iter):
        F = np.array([ev(dI, *x), -ev(dth, *x)])
        if np.abs(F).max() < tol:
            break
        J = np.array([[ev(d_thI, *x), ev(d_II, *x)],
                      [-ev(d_thth, *x), -ev(d_thI, *x)]])
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            raise HyperbolicityError("singular Newton system")
        x = x - step
        if np.abs(step).max() > 0.5:
            raise HyperbolicityError("Newton diverged from the saddle")
    else:
        raise HyperbolicityError("Newton did not converge")
    J = np.array([[ev(d_thI, *x), ev(d_II, *x)],
                  [-ev(d_thth, *x), -ev(d_thI, *x)]])
    eig, vec = np.linalg.eig(J)
    if np.abs(eig.imag).max() > 1e-10 or eig.real.prod() >= 0:
        raise HyperbolicityError(
            f"linearization not a real hyperbolic pair: {eig}")
    iu = int(np.argmax(eig.real))
    return FixedPointResult(theta2=float(x[0]), i2=float(x[1]),
                            eigenvalues=(float(eig.real.min()),
                                         float(eig.real.max())),
                            unstable_dir=vec[:, iu].real, iterations=it)


# --------------------------------------------------------------------- #
# compiled kernels: return map and manifold growth
# --------------------------------------------------------------------- #

@njit(cache=True)
def _return_map(y, nsteps, K, A, cre, cim):
    """Flow the section state (th2, I1, I2) over one full turn of th1.

    Integrates dY/dth1 = f_Y / f_th1 with RK4; also accumulates the true
    time.  Requires th1' > 0 throughout (checked by the caller's setup).
    """
    x = np.empty(4)
    f = np.empty(4)
    g = np.empty(3)
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    yy = y.copy()
    h = 1.0 / nsteps
    th1 = 0.0
    t_acc = 0.0

    for step in range(nsteps):
        # RK4 in the th1 parameter
        for stage in range(4):
            if stage == 0:
                cur = yy
                dth = 0.0
            elif stage == 1:
                for i in range(3):
                    g[i] = yy[i] + 0.5 * h * k1[i]
                cur = g
                dth = 0.5 * h
            elif stage == 2:
                for i in range(3):
                    g[i] = yy[i] + 0.5 * h * k2[i]
                cur = g
                dth = 0.5 * h
            else:
                for i in range(3):
                    g[i] = yy[i] + h * k3[i]
                cur = g
                dth = h
            x[0] = th1 + dth
            x[1] = cur[0]
            x[2] = cur[1]
            x[3] = cur[2]
            _field(x[:2], x[2:], K, A, cre, cim, f)
            inv = 1.0 / f[0]
            if stage == 0:
                k1[0] = f[1] * inv
                k1[1] = f[2] * inv
                k1[2] = f[3] * inv
                t_mid = inv
            elif stage == 1:
                k2[0] = f[1] * inv
                k2[1] = f[2] * inv
                k2[2] = f[3] * inv
            elif stage == 2:
                k3[0] = f[1] * inv
                k3[1] = f[2] * inv
                k3[2] = f[3] * inv
            else:
                k4[0] = f[1] * inv
                k4[1] = f[2] * inv
                k4[2] = f[3] * inv
        for i in range(3):
            yy[i] += (h / 6.0) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
        t_acc += h * t_mid
        th1 += h
    return yy, t_acc


@njit(cache=True)
def _grow_manifold(seeds, sign, h, max_steps, K, A, cre, cim,
                   band_lo, band_hi, stop_lo, stop_hi, sample_stride):
    """Flow seeds (N, 4) in true time; collect states while the pendulum
    angle (mod 1) is inside the band and I2 > 0 (upper branch).

    sign = +1 grows the unstable side forward, -1 the stable side
    backward.  A trajectory stops once its unwrapped pendulum angle
    leaves (stop_lo, stop_hi), which keeps samples on the first passage
    of the band.  Returns (samples, count).
    """
    nseeds = seeds.shape[0]
    cap = nseeds * 4000
    out = np.empty((cap, 4))
    cnt = 0
    f = np.empty(4)
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    g = np.empty(4)
    hh = h * sign
    for sidx in range(nseeds):
        x = seeds[sidx].copy()
        th2_seed = x[1]
        escaped = False
        since = 0
        for step in range(max_steps):
            _field(x[:2], x[2:], K, A, cre, cim, f)
            for i in range(4):
                k1[i] = f[i]
                g[i] = x[i] + 0.5 * hh * k1[i]
            _field(g[:2], g[2:], K, A, cre, cim, f)
            for i in range(4):
                k2[i] = f[i]
                g[i] = x[i] + 0.5 * hh * k2[i]
            _field(g[:2], g[2:], K, A, cre, cim, f)
            for i in range(4):
                k3[i] = f[i]
                g[i] = x[i] + hh * k3[i]
            _field(g[:2], g[2:], K, A, cre, cim, f)
            for i in range(4):
                k4[i] = f[i]
                x[i] += (hh / 6.0) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
            since += 1
            if not escaped and abs(x[1] - th2_seed) > 0.08:
                escaped = True
            frac = x[1] % 1.0
            if escaped and frac >= band_lo and frac <= band_hi and \
                    x[3] > 0.0 and since >= sample_stride:
                if cnt < cap:
                    out[cnt, 0] = x[0] % 1.0
                    out[cnt, 1] = frac
                    out[cnt, 2] = x[2]
                    out[cnt, 3] = x[3]
                    cnt += 1
                since = 0
            if x[1] >= stop_hi or x[1] <= stop_lo:
                break
    return out[:cnt], cnt


# --------------------------------------------------------------------- #
# periodic orbit (the whiskered circle) and its bundle
# --------------------------------------------------------------------- #

@dataclass
class PeriodicOrbit:
    y0: np.ndarray              # section state (th2, I1, I2) at th1 = 0
    period: float
    monodromy: np.ndarray
    multipliers: np.ndarray
    unstable: np.ndarray        # section eigenvectors
    stable: np.ndarray
    residual: float


def periodic_orbit(model, nsteps=4096, tol=1e-12, max_iter=30):
    """Invariant circle of the full model as a closed orbit over th1.

    Newton on the return map of the section th1 = 0, continued in mu
    from the pendulum fixed point (whose section point is exact at
    mu = 0) so the iteration stays in the hyperbolic basin.
    """
    fp = fixed_point(model)
    y = np.array([fp.theta2, 0.0, fp.i2])
    if model.mu:
        for frac in (0.25, 0.5):
            y = _orbit_newton(model.hamiltonian(mu=frac * model.mu), y,
                              nsteps, tol, max_iter)[0]
    return _orbit_finalize(model, y, nsteps, tol, max_iter)


def _orbit_newton(H, y, nsteps, tol, max_iter):
    K, A, cre, cim = pack(H)

    def ret(z):
        out, _ = _return_map(z, nsteps, K, A, cre, cim)
        return out

    fd = 1e-7
    cap = 0.05

    def pinned_newton(y):
        # solve the hyperbolic (th2, I2) return conditions at frozen I1;
        # the I1 return defect is mu^2-degenerate along the twist family
        # and chasing it drags Newton to a distant circle
        for _ in range(max_iter):
            G = ret(y) - y
            if max(abs(G[0]), abs(G[2])) < tol:
                break
            J = np.empty((2, 2))
            for col, i in enumerate((0, 2)):
                e = np.zeros(3)
                e[i] = fd
                dg = (ret(y + e) - ret(y - e)) / (2 * fd)
                J[0, col] = dg[0] - (1.0 if i == 0 else 0.0)
                J[1, col] = dg[2] - (1.0 if i == 2 else 0.0)
            step = np.linalg.solve(J, np.array([G[0], G[2]]))
            ns = float(np.abs(step).max())
            if ns > cap:
                step *= cap / ns
            y = y - np.array([step[0], 0.0, step[1]])
        return y

    y = pinned_newton(y)
    # refine the remaining I1 defect with a tightly clamped full Newton
    for _ in range(max_iter):
        G = ret(y) - y
        res = float(np.abs(G).max())
        if res < tol:
            break
        J = np.empty((3, 3))
        for i in range(3):
            e = np.zeros(3)
            e[i] = fd
            J[:, i] = (ret(y + e) - ret(y - e)) / (2 * fd)
        J -= np.eye(3)
        step, *_ = np.linalg.lstsq(J, G, rcond=1e-7)
        ns = float(np.abs(step).max())
        if ns > 2e-3:
            break
        y = y - step
    y = pinned_newton(y)
    res = float(np.abs(ret(y) - y).max())
    return y, res


def _orbit_finalize(model, y, nsteps, tol, max_iter):
    H = model.hamiltonian()
    y, res = _orbit_newton(H, y, nsteps, tol, max_iter)
    if res >= 1e-6:
        raise HyperbolicityError(
            f"periodic orbit Newton stalled at residual {res:.2e}")
    K, A, cre, cim = pack(H)

    def ret(z):
        out, _ = _return_map(z, nsteps, K, A, cre, cim)
        return out

    fd = 1e-7
    M = np.empty((3, 3))
    for i in range(3):
        e = np.zeros(3)
        e[i] = fd
        M[:, i] = (ret(y + e) - ret(y - e)) / (2 * fd)
    _, t_per = _return_map(y, nsteps, K, A, cre, cim)
    eig, vec = np.linalg.eig(M)
    order = np.argsort(np.abs(eig))
    lam_u = eig[order[-1]]
    if abs(lam_u) < 1.05 or abs(lam_u.imag) > 1e-8:
        raise HyperbolicityError(f"no real unstable multiplier: {eig}")
    vu = vec[:, order[-1]].real
    vs = vec[:, order[0]].real
    vu /= np.linalg.norm(vu)
    vs /= np.linalg.norm(vs)
    return PeriodicOrbit(y0=y, period=t_per, monodromy=M,
                         multipliers=eig[order],
                         unstable=vu, stable=vs, residual=res)


# --------------------------------------------------------------------- #
# generating functions on the band
# --------------------------------------------------------------------- #

@dataclass
class BandPatch:
    center: float = 0.25
    halfwidth: float = 0.125

    @property
    def lo(self):
        return self.center - self.halfwidth

    @property
    def hi(self):
        return self.center + self.halfwidth


class GeneratingFunction:
    """Scalar potential S on a band patch with I = grad S.

    Basis: a linear flux term sigma * theta1 plus Fourier modes in
    theta1 tensored with Chebyshev polynomials in the band coordinate.
    Fitted by least squares on the gradient conditions at the manifold
    samples; Hessians come from exact differentiation of the basis and
    are cross-validated against finite differences.
    """

    def __init__(self, patch, m_four=8, j_cheb=14):
        self.patch = patch
        self.m_four = m_four
        self.j_cheb = j_cheb
        self.coeffs = None
        self.residual = None
        self.n_samples = 0
        self._der = [np.array(ncheb.chebder(np.eye(j_cheb + 1)[j]))
                     for j in range(j_cheb + 1)]
        self._der2 = [np.array(ncheb.chebder(c, 2)) if len(c) > 1
                      else np.zeros(1)
                      for c in [np.eye(j_cheb + 1)[j]
                                for j in range(j_cheb + 1)]]

    # basis layout: [sigma] + [(m, j, cos/sin) ...] skipping the constant
    def _layout(self):
        out = []
        for m in range(self.m_four + 1):
            for j in range(self.j_cheb + 1):
                if m == 0 and j == 0:
                    continue
                out.append((m, j, 0))
                if m > 0:
                    out.append((m, j, 1))
        return out

    def _x(self, th2):
        return (np.asarray(th2) - self.patch.center) / self.patch.halfwidth

    def _tables(self, th1, th2):
        x = self._x(th2)
        J = self.j_cheb
        V = ncheb.chebvander(x, J)
        V1 = np.stack([ncheb.chebval(x, self._der[j]) for j in range(J + 1)],
                      axis=1) / self.patch.halfwidth
        V2 = np.stack([ncheb.chebval(x, self._der2[j]) for j in range(J + 1)],
                      axis=1) / self.patch.halfwidth ** 2
        ang = TWO_PI * np.outer(th1, np.arange(self.m_four + 1))
        C, S = np.cos(ang), np.sin(ang)
        return V, V1, V2, C, S

    def _design(self, th1, th2, kind):
        """Rows of d(basis)/d(theta) (kind: 'g1','g2','h11','h12','h22',
        'val')."""
        V, V1, V2, C, S = self._tables(th1, th2)
        P = len(th1)
        layout = self._layout()
        out = np.empty((P, 1 + len(layout)))
        if kind == "g1":
            out[:, 0] = 1.0
        elif kind == "val":
            out[:, 0] = th1
        else:
            out[:, 0] = 0.0
        w = TWO_PI
        for idx, (m, j, sk) in enumerate(layout, start=1):
            if sk == 0:
                f, df = C[:, m], -w * m * S[:, m]
                d2f = -(w * m) ** 2 * C[:, m]
            else:
                f, df = S[:, m], w * m * C[:, m]
                d2f = -(w * m) ** 2 * S[:, m]
            if kind == "val":
                out[:, idx] = f * V[:, j]
            elif kind == "g1":
                out[:, idx] = df * V[:, j]
            elif kind == "g2":
                out[:, idx] = f * V1[:, j]
            elif kind == "h11":
                out[:, idx] = d2f * V[:, j]
            elif kind == "h12":
                out[:, idx] = df * V1[:, j]
            elif kind == "h22":
                out[:, idx] = f * V2[:, j]
        return out

    def fit(self, samples):
        """Least-squares gradient fit: dS/dth1 = I1, dS/dth2 = I2."""
        th1, th2 = samples[:, 0], samples[:, 1]
        D1 = self._design(th1, th2, "g1")
        D2 = self._design(th1, th2, "g2")
        A = np.vstack([D1, D2])
        b = np.concatenate([samples[:, 2], samples[:, 3]])
        sol, *_ = np.linalg.lstsq(A, b, rcond=None)
        self.coeffs = sol
        self.residual = float(np.abs(A @ sol - b).max())
        self.n_samples = len(th1)
        return self

    def grad(self, th1, th2):
        th1 = np.atleast_1d(np.asarray(th1, dtype=float))
        th2 = np.atleast_1d(np.asarray(th2, dtype=float))
        g1 = self._design(th1, th2, "g1") @ self.coeffs
        g2 = self._design(th1, th2, "g2") @ self.coeffs
        return np.stack([g1, g2], axis=1)

    def hessian(self, th1, th2):
        th1 = np.atleast_1d(np.asarray(th1, dtype=float))
        th2 = np.atleast_1d(np.asarray(th2, dtype=float))
        h11 = self._design(th1, th2, "h11") @ self.coeffs
        h12 = self._design(th1, th2, "h12") @ self.coeffs
        h22 = self._design(th1, th2, "h22") @ self.coeffs
        out = np.empty((len(th1), 2, 2))
        out[:, 0, 0] = h11
        out[:, 0, 1] = h12
        out[:, 1, 0] = h12
        out[:, 1, 1] = h22
        return out

    def value(self, th1, th2):
        th1 = np.atleast_1d(np.asarray(th1, dtype=float))
        th2 = np.atleast_1d(np.asarray(th2, dtype=float))
        return self._design(th1, th2, "val") @ self.coeffs

    def hessian_fd_check(self, points, fd=1e-5):
        """Max deviation between basis Hessian and FD of the gradient."""
        worst = 0.0
        for th1, th2 in points:
            Hb = self.hessian([th1], [th2])[0]
            gp1 = self.grad([th1 + fd], [th2])[0]
            gm1 = self.grad([th1 - fd], [th2])[0]
            gp2 = self.grad([th1], [th2 + fd])[0]
            gm2 = self.grad([th1], [th2 - fd])[0]
            Hf = np.empty((2, 2))
            Hf[:, 0] = (gp1 - gm1) / (2 * fd)
            Hf[:, 1] = (gp2 - gm2) / (2 * fd)
            worst = max(worst, float(np.abs(Hb - 0.5 * (Hf + Hf.T)).max()))
        return worst


@dataclass
class ManifoldResult:
    side: str
    samples: np.ndarray
    sfun: GeneratingFunction
    orbit: PeriodicOrbit
    curl_sup: float
    loop_quadrature: float


def _fold_check(samples, res_tol, slope_bound=4.0, cells=64):
    """Two mesh points over the same angle cell with different actions.

    The in-cell action spread of a healthy graph is at most the slope
    times the cell width; a fold doubles the branch and jumps by the
    separatrix height.
    """
    cell = np.floor(samples[:, :2] * cells).astype(np.int64)
    key = cell[:, 0] * 100000 + cell[:, 1]
    order = np.argsort(key, kind="stable")
    k_s = key[order]
    i2 = samples[order, 3]
    spread = 0.0
    start = 0
    for i in range(1, len(k_s) + 1):
        if i == len(k_s) or k_s[i] != k_s[start]:
            if i - start > 1:
                spread = max(spread, float(i2[start:i].max()
                                           - i2[start:i].min()))
            start = i
    allowance = max(2.0 * slope_bound / cells, 500 * res_tol)
    if spread > allowance:
        raise PatchError(
            f"graph folding detected: action spread {spread:.2e} within "
            f"an angle cell exceeds {allowance:.2e}; shrink the patch")


def manifolds(model, side, patch=None, eta=1e-6, n_fiber=32, h=1e-3,
              m_four=12, j_cheb=18, fit_tol=1e-6, sample_stride=2,
              copy_margin=0.06):
    """Stable or unstable manifold of the whiskered circle as a graph.

    Seeds a fundamental domain of the fiber along the monodromy
    eigendirection, grows it with compiled RK4 (forward for unstable,
    backward for stable), samples the upper branch over the patch band,
    and fits a generating function.  Trajectories terminate copy_margin
    before the next saddle copy: past that point the manifold turns in
    its hyperbolic fan and stops being a graph, so the patch must stay
    clear of it.  The Lagrangian-exactness witness (scalar-potential
    consistency of the sampled action field) is measured and returned.
    """
    if side not in ("stable", "unstable"):
        raise ValueError("side must be 'stable' or 'unstable'")
    patch = patch or BandPatch()
    orbit = periodic_orbit(model)
    H = model.hamiltonian()
    K, A, cre, cim = pack(H)
    lam_u = float(abs(orbit.multipliers[-1]))
    vec = orbit.unstable if side == "unstable" else orbit.stable
    sign = 1.0 if side == "unstable" else -1.0
    # the upper-branch directions have positive pendulum-action component
    # (unstable leaves with th2 and I2 rising; stable arrives from th2
    # below the saddle with I2 > 0)
    seed_dir = vec if vec[2] > 0 else -vec
    th2_star = orbit.y0[0]
    fan = 0.6 * math.sqrt(abs(model.mu)) if model.mu else 0.0
    margin = max(copy_margin, fan + 0.02)
    if patch.lo < (th2_star % 1.0) + margin:
        raise PatchError(
            f"patch edge {patch.lo:.3f} is within {margin:.3f} of the "
            f"saddle at {th2_star % 1.0:.3f}; move or shrink the band")
    if side == "unstable":
        stop_lo, stop_hi = th2_star - 0.55, th2_star + 1.0 - margin
    else:
        stop_lo, stop_hi = th2_star - 1.0 + margin, th2_star + 0.55
    seeds = np.empty((n_fiber, 4))
    for i in range(n_fiber):
        r = eta * lam_u ** (i / n_fiber)
        y = orbit.y0 + r * seed_dir
        seeds[i] = (0.0, y[0], y[1], y[2])
    alpha = model.hyperbolic_rate
    max_steps = int((math.log(1.0 / eta) / alpha + 10.0) / h) + 1000
    samples, cnt = _grow_manifold(seeds, sign, h, max_steps, K, A, cre,
                                  cim, patch.lo, patch.hi, stop_lo,
                                  stop_hi, sample_stride)
    if cnt < 200:
        raise PatchError(f"only {cnt} manifold samples fell in the band; "
                         f"widen the patch or refine seeding")
    sfun = GeneratingFunction(patch, m_four=m_four, j_cheb=j_cheb)
    sfun.fit(samples)
    if sfun.residual > fit_tol:
        raise PatchError(
            f"graph fit residual {sfun.residual:.2e} exceeds {fit_tol}; "
            f"resolution too low for this patch")
    _fold_check(samples, sfun.residual)
    curl, loop = _exactness_witness(samples, patch, m_four, j_cheb)
    return ManifoldResult(side=side, samples=samples, sfun=sfun,
                          orbit=orbit, curl_sup=curl, loop_quadrature=loop)


def _exactness_witness(samples, patch, m_four, j_cheb):
    """Fit I1 and I2 independently (no gradient coupling) and measure the
    curl sup plus a rectangle loop quadrature: both vanish for an exact
    Lagrangian graph."""
    gf = GeneratingFunction(patch, m_four=m_four, j_cheb=j_cheb)
    th1, th2 = samples[:, 0], samples[:, 1]
    D = gf._design(th1, th2, "val")
    D = np.hstack([np.ones((len(th1), 1)), D])
    c1, *_ = np.linalg.lstsq(D, samples[:, 2], rcond=None)
    c2, *_ = np.linalg.lstsq(D, samples[:, 3], rcond=None)

    g1 = np.linspace(0.05, 0.95, 12)
    g2 = np.linspace(patch.lo + 0.2 * patch.halfwidth,
                     patch.hi - 0.2 * patch.halfwidth, 10)
    T1, T2 = np.meshgrid(g1, g2, indexing="ij")
    t1, t2 = T1.ravel(), T2.ravel()

    def fit_val(c, kind, a, b):
        M = gf._design(a, b, kind)
        M = np.hstack([np.zeros((len(a), 1))
                       if kind != "val" else np.ones((len(a), 1)), M])
        return M @ c

    d2I1 = fit_val(c1, "g2", t1, t2)
    d1I2 = fit_val(c2, "g1", t1, t2)
    curl = float(np.abs(d2I1 - d1I2).max())

    # rectangle loop quadrature of I . dtheta from the independent fits
    a1, b1 = 0.2, 0.6
    a2 = patch.center - 0.5 * patch.halfwidth
    b2 = patch.center + 0.5 * patch.halfwidth
    tgrid = np.linspace(0.0, 1.0, 200)

    def seg(p, q):
        pts1 = p[0] + (q[0] - p[0]) * tgrid
        pts2 = p[1] + (q[1] - p[1]) * tgrid
        i1 = fit_val(c1, "val", pts1, pts2)
        i2 = fit_val(c2, "val", pts1, pts2)
        return np.trapezoid(i1 * (q[0] - p[0]) + i2 * (q[1] - p[1]), tgrid)

    loop = seg((a1, a2), (b1, a2)) + seg((b1, a2), (b1, b2)) + \
        seg((b1, b2), (a1, b2)) + seg((a1, b2), (a1, a2))
    return curl, float(abs(loop))


# --------------------------------------------------------------------- #
# splitting matrix
# --------------------------------------------------------------------- #

@dataclass
class SplittingReport:
    theta_star: np.ndarray
    matrix: np.ndarray
    angles: np.ndarray            # eigenvalues sorted by |.|
    grad_residual: float
    hessian_fd_error: float


def splitting_matrix(s_plus, s_minus, grad_tol=1e-8, reference=None):
    """Locate a gradient-matching point of S+ - S- and take its Hessian.

    The critical set of the difference is the homoclinic orbit's angle
    trace, so Newton uses the pseudo-inverse; refinement starts from a
    fixed reference angle so that sweeps track the same strand, falling
    back to a gradient-magnitude scan when the reference does not
    converge.  Eigenvalues of the (symmetric) Hessian are the angles.
    """
    patch = s_plus.patch

    def gdiff(t1, t2):
        return (s_plus.grad([t1], [t2]) - s_minus.grad([t1], [t2]))[0]

    def hdiff(t1, t2):
        return (s_plus.hessian([t1], [t2]) - s_minus.hessian([t1], [t2]))[0]

    def refine(t1, t2):
        for _ in range(60):
            g = gdiff(t1, t2)
            if np.abs(g).max() < grad_tol * 1e-2:
                break
            Hm = hdiff(t1, t2)
            step = np.linalg.pinv(Hm, rcond=1e-4) @ g
            nstep = float(np.abs(step).max())
            if nstep > 0.2:
                step *= 0.2 / nstep
            t1n, t2n = t1 - step[0], t2 - step[1]
            t2n = min(max(t2n, patch.lo + 0.05 * patch.halfwidth),
                      patch.hi - 0.05 * patch.halfwidth)
            if np.abs(gdiff(t1n, t2n)).max() >= \
                    np.abs(g).max() * (1 - 1e-12):
                break
            t1, t2 = t1n % 1.0, t2n
        return t1, t2, float(np.abs(gdiff(t1, t2)).max())

    ref = reference or (0.5, patch.center)
    t1, t2, res = refine(*ref)
    if res > grad_tol:
        g1 = np.linspace(0.0, 1.0, 48, endpoint=False)
        g2 = np.linspace(patch.lo + 0.15 * patch.halfwidth,
                         patch.hi - 0.15 * patch.halfwidth, 24)
        best, best_val = None, math.inf
        for a in g1:
            for b in g2:
                v = float(np.abs(gdiff(a, b)).max())
                if v < best_val:
                    best, best_val = (a, b), v
        t1, t2, res = refine(*best)
    g = gdiff(t1, t2)
    if res > grad_tol:
        raise HomoclinicError(
            f"no gradient-matching point in the overlap: residual "
            f"{res:.2e} > {grad_tol}")
    M = hdiff(t1, t2)
    M = 0.5 * (M + M.T)
    fd_err = max(s_plus.hessian_fd_check([(t1, t2)]),
                 s_minus.hessian_fd_check([(t1, t2)]))
    eig = np.linalg.eigvalsh(M)
    order = np.argsort(np.abs(eig))
    return SplittingReport(theta_star=np.array([t1, t2]), matrix=M,
                           angles=eig[order], grad_residual=float(
                               np.abs(g).max()),
                           hessian_fd_error=fd_err)


def split_model(model, **kw):
    """Both manifolds and the splitting report for one model instance."""
    wu = manifolds(model, "unstable", **kw)
    ws = manifolds(model, "stable", **kw)
    rep = splitting_matrix(ws.sfun, wu.sfun)
    return wu, ws, rep


# --------------------------------------------------------------------- #
# sweeps
# --------------------------------------------------------------------- #

@dataclass
class SweepRow:
    mu: float
    lam: float
    eps: float | None
    angles: np.ndarray
    theta_star: np.ndarray
    grad_residual: float


@dataclass
class SplitSweepReport:
    rows: list
    slope: float
    slope_target: float
    leading_over_mu: list
    small_over_mu: list
    note: str = ""


def mu_sweep(mu_list, lam=0.01, model_factory=None, **kw):
    """Splitting angles against mu at fixed lam: the leading angle scales
    linearly (the first-order separatrix-splitting mechanism), while the
    flow-direction angle stays at the noise floor far below mu."""
    factory = model_factory or (lambda lam_, mu_: pendulum_model(lam=lam_,
                                                                 mu=mu_))
    rows = []
    for mu in mu_list:
        model = factory(lam, mu)
        _, _, rep = split_model(model, **kw)
        rows.append(SweepRow(mu=mu, lam=lam, eps=None, angles=rep.angles,
                             theta_star=rep.theta_star,
                             grad_residual=rep.grad_residual))
    lm = np.log([r.mu for r in rows])
    la = np.log([abs(r.angles[-1]) for r in rows])
    A = np.vstack([lm, np.ones_like(lm)]).T
    sol, *_ = np.linalg.lstsq(A, la, rcond=None)
    return SplitSweepReport(
        rows=rows, slope=float(sol[0]), slope_target=1.0,
        leading_over_mu=[abs(r.angles[-1]) / r.mu for r in rows],
        small_over_mu=[abs(r.angles[0]) / r.mu for r in rows])


def epsilon_sweep(eps_list, k=3, c_delta=1.0, model_factory=None,
                  r_cap=1.0, **kw):
    """Thm-2.7-shaped sweep: lam = 1/Delta*(sqrt(eps)^-1), mu = lam^{k-2}.

    The model's fast frequency stays fixed (the sweep drives only the
    perturbation sizes), so measured angles in model coordinates are
    pulled back with the action-rescale factor r = 2 sqrt(eps); the fit
    compares them to the bound sqrt(eps) (1+lam) lam^{k-2}.
    """
    if k < 3:
        raise ThresholdError("need k >= 3 for a controlled C^2 remainder")
    factory = model_factory or (lambda lam_, mu_: pendulum_model(lam=lam_,
                                                                 mu=mu_))
    kw.setdefault("patch", BandPatch(center=0.32, halfwidth=0.06))
    rows, bounds = [], []
    for eps in eps_list:
        r = 2.0 * math.sqrt(eps)
        if r > r_cap:
            raise ThresholdError(
                f"r = 2 sqrt(eps) = {r:.3f} exceeds the domain bound "
                f"{r_cap}: localization window sqrt(eps) <= r <= R fails")
        probe = pendulum_model()
        lam = 1.0 / (c_delta * probe.w1 * (1.0 / math.sqrt(eps)))
        mu = lam ** (k - 2)
        if lam > 0.1:
            raise ThresholdError(
                f"lam = {lam:.3f} beyond the perturbative window")
        model = factory(lam, mu)
        _, _, rep = split_model(model, **kw)
        rows.append(SweepRow(mu=mu, lam=lam, eps=eps, angles=rep.angles,
                             theta_star=rep.theta_star,
                             grad_residual=rep.grad_residual))
        bounds.append(math.sqrt(eps) * (1.0 + lam) * lam ** (k - 2))
    pulled = [2.0 * math.sqrt(r.eps) * abs(r.angles[-1]) for r in rows]
    lb = np.log(bounds)
    la = np.log(pulled)
    A = np.vstack([lb, np.ones_like(lb)]).T
    sol, *_ = np.linalg.lstsq(A, la, rcond=None)
    return SplitSweepReport(
        rows=rows, slope=float(sol[0]), slope_target=1.0,
        leading_over_mu=[abs(r.angles[-1]) / r.mu for r in rows],
        small_over_mu=[abs(r.angles[0]) / r.mu for r in rows],
        note="pulled-back angles fitted against sqrt(eps)(1+lam)lam^(k-2)")
