"""Sparse Fourier-Taylor algebra for real functions on T^n x B_R.

A function is stored as a finite sum

    f(theta, I) = sum_{k, alpha} c_{k,alpha} e^{2 pi i k.theta} I^alpha

with k in Z^n (|k|_inf <= kmax), alpha in N^n (|alpha| <= dmax) and
Hermitian symmetry c_{-k,alpha} = conj(c_{k,alpha}) so that f is real
valued.  The angle convention puts all 2*pi factors in derivatives, never
in coefficients.  Values are immutable after construction and all
operations are pure functions.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * math.pi

# canonicalization: drop coefficients below CANONICAL_EPS * largest one
CANONICAL_EPS = 1e-15


class DimensionMismatchError(ValueError):
    """Operands live on tori of different dimension or radius."""


class DomainError(ValueError):
    """Evaluation point is outside the action ball B_R."""


def _falling(a, m):
    """Falling factorial a*(a-1)*...*(a-m+1), zero when m > a."""
    if m > a:
        return 0
    out = 1
    for i in range(m):
        out *= a - i
    return out


@lru_cache(maxsize=None)
def multi_indices(n, total):
    """All alpha in N^n with |alpha| = total, lexicographic."""
    if n == 1:
        return ((total,),)
    out = []
    for head in range(total + 1):
        for tail in multi_indices(n - 1, total - head):
            out.append((head,) + tail)
    return tuple(out)


def multi_indices_upto(n, jmax):
    for j in range(jmax + 1):
        yield from multi_indices(n, j)


class TrigTaylorPoly:
    """A real trigonometric polynomial with polynomial action dependence.

    Parameters
    ----------
    n : int
        Number of angle/action pairs.
    radius : float
        Half-width R of the action domain B_R (sup norm).
    modes : dict
        Map from k (tuple of ints) to {alpha (tuple of ints): complex}.
    kmax, dmax : int
        Caps on |k|_inf and |alpha|.  Stored data must respect them.
    """

    __slots__ = ("n", "radius", "kmax", "dmax", "modes", "_packed_cache")

    def __init__(self, n, radius, modes, kmax, dmax, _canonical=False):
        self.n = int(n)
        self.radius = float(radius)
        self.kmax = int(kmax)
        self.dmax = int(dmax)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if not _canonical:
            modes = _canonicalize(modes)
            _check_invariants(self.n, modes, self.kmax, self.dmax)
        self.modes = modes
        self._packed_cache = None

    # ----------------------------------------------------------------- #
    # constructors
    # ----------------------------------------------------------------- #

    @classmethod
    def zero(cls, n, radius, kmax=0, dmax=0):
        return cls(n, radius, {}, kmax, dmax, _canonical=True)

    @classmethod
    def constant(cls, n, radius, value, kmax=0, dmax=0):
        if value == 0:
            return cls.zero(n, radius, kmax, dmax)
        z = (0,) * n
        return cls(n, radius, {z: {z: complex(value)}}, kmax, dmax)

    @classmethod
    def action_linear(cls, w, radius):
        """l_w(I) = w . I as a poly of degree 1."""
        w = np.asarray(w, dtype=float)
        n = w.size
        coeffs = {}
        for i, wi in enumerate(w):
            if wi != 0.0:
                alpha = tuple(1 if j == i else 0 for j in range(n))
                coeffs[alpha] = complex(wi)
        return cls(n, radius, {(0,) * n: coeffs} if coeffs else {}, 0, 1)

    @classmethod
    def monomial(cls, n, radius, alpha, coeff=1.0):
        alpha = tuple(int(a) for a in alpha)
        return cls(n, radius, {(0,) * n: {alpha: complex(coeff)}},
                   0, sum(alpha))

    @classmethod
    def cosine(cls, n, radius, k, coeff=1.0, alpha=None):
        """coeff * cos(2 pi k.theta) * I^alpha (Hermitian pair stored)."""
        return cls._trig(n, radius, k, coeff / 2.0, alpha)

    @classmethod
    def sine(cls, n, radius, k, coeff=1.0, alpha=None):
        """coeff * sin(2 pi k.theta) * I^alpha."""
        return cls._trig(n, radius, k, coeff / 2j, alpha)

    @classmethod
    def _trig(cls, n, radius, k, half_coeff, alpha):
        k = tuple(int(x) for x in k)
        mk = tuple(-x for x in k)
        alpha = (0,) * n if alpha is None else tuple(int(a) for a in alpha)
        if k == mk:
            raise ValueError("k must be nonzero for a trig mode")
        modes = {k: {alpha: complex(half_coeff)},
                 mk: {alpha: complex(half_coeff).conjugate()}}
        return cls(n, radius, modes, max(abs(x) for x in k), sum(alpha))

    @classmethod
    def from_terms(cls, n, radius, terms):
        """Build from (kind, k, alpha, coeff) rows, kind in {cos, sin, mono}."""
        acc = cls.zero(n, radius)
        for kind, k, alpha, coeff in terms:
            if kind == "cos":
                acc = acc + cls.cosine(n, radius, k, coeff, alpha)
            elif kind == "sin":
                acc = acc + cls.sine(n, radius, k, coeff, alpha)
            elif kind == "mono":
                acc = acc + cls.monomial(n, radius, alpha, coeff)
            else:
                raise ValueError(f"unknown term kind {kind!r}")
        return acc

    # ----------------------------------------------------------------- #
    # basic queries
    # ----------------------------------------------------------------- #

    def is_zero(self):
        return not self.modes

    def coeff(self, k, alpha):
        return self.modes.get(tuple(k), {}).get(tuple(alpha), 0.0 + 0.0j)

    def support(self):
        """Sorted list of Fourier modes k with a nonzero coefficient."""
        return sorted(self.modes)

    def nterms(self):
        return sum(len(cp) for cp in self.modes.values())

    def max_abs_coeff(self):
        return max((abs(c) for cp in self.modes.values()
                    for c in cp.values()), default=0.0)

    def coeff_mass(self, radius=None):
        """Sum |c| R^{|alpha|}: a C^0 upper bound on the stored sum."""
        R = self.radius if radius is None else radius
        return sum(abs(c) * R ** sum(a)
                   for cp in self.modes.values() for a, c in cp.items())

    def __repr__(self):
        return (f"TrigTaylorPoly(n={self.n}, R={self.radius}, "
                f"modes={len(self.modes)}, terms={self.nterms()}, "
                f"kmax={self.kmax}, dmax={self.dmax})")

    # ----------------------------------------------------------------- #
    # ring operations
    # ----------------------------------------------------------------- #

    def _compat(self, other):
        if self.n != other.n or self.radius != other.radius:
            raise DimensionMismatchError(
                f"incompatible domains: (n={self.n}, R={self.radius}) vs "
                f"(n={other.n}, R={other.radius})")

    def __add__(self, other):
        if np.isscalar(other):
            other = TrigTaylorPoly.constant(self.n, self.radius, other)
        self._compat(other)
        modes = {k: dict(cp) for k, cp in self.modes.items()}
        for k, cp in other.modes.items():
            dst = modes.setdefault(k, {})
            for a, c in cp.items():
                dst[a] = dst.get(a, 0.0) + c
        return TrigTaylorPoly(self.n, self.radius, modes,
                              max(self.kmax, other.kmax),
                              max(self.dmax, other.dmax))

    __radd__ = __add__

    def __neg__(self):
        modes = {k: {a: -c for a, c in cp.items()}
                 for k, cp in self.modes.items()}
        return TrigTaylorPoly(self.n, self.radius, modes, self.kmax,
                              self.dmax, _canonical=True)

    def __sub__(self, other):
        if np.isscalar(other):
            other = TrigTaylorPoly.constant(self.n, self.radius, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            if other == 0:
                return TrigTaylorPoly.zero(self.n, self.radius,
                                           self.kmax, self.dmax)
            modes = {k: {a: c * other for a, c in cp.items()}
                     for k, cp in self.modes.items()}
            return TrigTaylorPoly(self.n, self.radius, modes,
                                  self.kmax, self.dmax, _canonical=True)
        self._compat(other)
        modes = {}
        for k1, cp1 in self.modes.items():
            for k2, cp2 in other.modes.items():
                k = tuple(x + y for x, y in zip(k1, k2))
                dst = modes.setdefault(k, {})
                for a1, c1 in cp1.items():
                    for a2, c2 in cp2.items():
                        a = tuple(x + y for x, y in zip(a1, a2))
                        dst[a] = dst.get(a, 0.0) + c1 * c2
        return TrigTaylorPoly(self.n, self.radius, modes,
                              self.kmax + other.kmax,
                              self.dmax + other.dmax)

    __rmul__ = __mul__

    def allclose(self, other, tol=1e-12):
        """Representation equality up to tolerance (canonical sparse form)."""
        diff = self - other
        scale = max(self.max_abs_coeff(), other.max_abs_coeff(), 1.0)
        return diff.max_abs_coeff() <= tol * scale

    # ----------------------------------------------------------------- #
    # calculus
    # ----------------------------------------------------------------- #

    def derivative(self, l1, l2):
        """Exact partial derivative d_theta^{l1} d_I^{l2}.

        Mixed partials commute exactly since the operation is term-wise.
        """
        l1 = tuple(int(x) for x in l1)
        l2 = tuple(int(x) for x in l2)
        modes = {}
        for k, cp in self.modes.items():
            # theta part: product of (2 pi i k_i)^{l1_i}
            fac = 1.0 + 0.0j
            dead = False
            for ki, li in zip(k, l1):
                if li:
                    if ki == 0:
                        dead = True
                        break
                    fac *= (TWO_PI * 1j * ki) ** li
            if dead:
                continue
            dst = {}
            for a, c in cp.items():
                ff = 1
                for ai, li in zip(a, l2):
                    ff *= _falling(ai, li)
                if ff == 0:
                    continue
                anew = tuple(ai - li for ai, li in zip(a, l2))
                dst[anew] = dst.get(anew, 0.0) + c * fac * ff
            if dst:
                modes[k] = dst
        return TrigTaylorPoly(self.n, self.radius, modes, self.kmax,
                              max(self.dmax - sum(l2), 0))

    def dtheta(self, i):
        l1 = tuple(1 if j == i else 0 for j in range(self.n))
        return self.derivative(l1, (0,) * self.n)

    def daction(self, i):
        l2 = tuple(1 if j == i else 0 for j in range(self.n))
        return self.derivative((0,) * self.n, l2)

    def poisson(self, other):
        """Poisson bracket {f, g} = d_theta f . d_I g - d_I f . d_theta g."""
        self._compat(other)
        acc = TrigTaylorPoly.zero(self.n, self.radius)
        for i in range(self.n):
            acc = acc + self.dtheta(i) * other.daction(i)
            acc = acc - self.daction(i) * other.dtheta(i)
        kmax = self.kmax + other.kmax
        dmax = max(self.dmax + other.dmax - 1, 0)
        return TrigTaylorPoly(self.n, self.radius, acc.modes, kmax, dmax,
                              _canonical=True)

    def gradient_theta(self):
        return [self.dtheta(i) for i in range(self.n)]

    def gradient_action(self):
        return [self.daction(i) for i in range(self.n)]

    # ----------------------------------------------------------------- #
    # evaluation
    # ----------------------------------------------------------------- #

    def packed(self):
        """Coefficient arrays (K, A, C) for vectorized evaluation."""
        if self._packed_cache is None:
            K, A, C = [], [], []
            for k, cp in self.modes.items():
                for a, c in cp.items():
                    K.append(k)
                    A.append(a)
                    C.append(c)
            if K:
                self._packed_cache = (np.array(K, dtype=np.int64),
                                      np.array(A, dtype=np.int64),
                                      np.array(C, dtype=np.complex128))
            else:
                self._packed_cache = (np.zeros((0, self.n), dtype=np.int64),
                                      np.zeros((0, self.n), dtype=np.int64),
                                      np.zeros(0, dtype=np.complex128))
        return self._packed_cache

    def evaluate_batch(self, thetas, actions, check_domain=True,
                       check_real=True):
        """Evaluate at many points; thetas and actions are (P, n) arrays."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        if check_domain and actions.size:
            if np.abs(actions).max() > self.radius + 1e-12:
                raise DomainError(
                    f"action point outside B_R (R={self.radius})")
        K, A, C = self.packed()
        if len(C) == 0:
            return np.zeros(thetas.shape[0])
        phases = np.exp(2j * math.pi * (thetas @ K.T))
        mono = np.ones((thetas.shape[0], len(C)))
        for j in range(self.n):
            aj = A[:, j]
            if aj.any():
                mono *= actions[:, j][:, None] ** aj[None, :]
        vals = (phases * mono) @ C
        if check_real:
            scale = max(np.abs(vals).max(), self.coeff_mass(), 1e-300)
            if np.abs(vals.imag).max() > 1e-12 * scale:
                raise ValueError("broken Hermitian symmetry: evaluation "
                                 "has a large imaginary part")
        return vals.real

    def evaluate(self, theta, action, check_domain=True):
        return float(self.evaluate_batch([theta], [action],
                                         check_domain=check_domain)[0])

    # ----------------------------------------------------------------- #
    # norms
    # ----------------------------------------------------------------- #

    def ck_norm_upper(self, j, radius=None):
        """Rigorous upper bound on |f|_{C^j} = max_{|l|<=j} sup |d^l f|.

        Per term the theta derivative is bounded by (2 pi |k|_inf)^{|l1|}
        and the action monomial derivative is maximized exactly on B_R.
        """
        R = self.radius if radius is None else radius
        if self.is_zero():
            return 0.0
        best = 0.0
        terms = [(max(abs(x) for x in k) if any(k) else 0, a, abs(c))
                 for k, cp in self.modes.items() for a, c in cp.items()]
        for l2 in multi_indices_upto(self.n, j):
            budget = j - sum(l2)
            sums = np.zeros(budget + 1)
            for kinf, a, ac in terms:
                ff = 1
                for ai, li in zip(a, l2):
                    ff *= _falling(ai, li)
                if ff == 0:
                    continue
                base = ac * ff * R ** (sum(a) - sum(l2))
                for l1t in range(budget + 1):
                    if kinf == 0:
                        if l1t == 0:
                            sums[l1t] += base
                    else:
                        sums[l1t] += base * (TWO_PI * kinf) ** l1t
            best = max(best, float(sums.max()))
        return best

    def ck_norm_grid(self, j, m=8, radius=None):
        """Sampled lower bound: max over a grid of |d^l f|, |l| <= j.

        The grid has m points per angle axis on [0,1) and m points per
        action axis spanning [-R, R] (endpoints included).  Always a
        lower bound for the true sup norm, hence <= ck_norm_upper.
        """
        if m < 8:
            raise ValueError("grid method requires m >= 8")
        R = self.radius if radius is None else radius
        if self.is_zero():
            return 0.0
        th = np.linspace(0.0, 1.0, m, endpoint=False)
        ac = np.linspace(-R, R, m)
        grids = np.meshgrid(*([th] * self.n + [ac] * self.n), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        thetas, actions = pts[:, :self.n], pts[:, self.n:]
        best = 0.0
        for l in multi_indices_upto(2 * self.n, j):
            l1, l2 = l[:self.n], l[self.n:]
            df = self.derivative(l1, l2)
            if df.is_zero():
                continue
            vals = df.evaluate_batch(thetas, actions, check_domain=False)
            best = max(best, float(np.abs(vals).max()))
        return best

    def ck_norm(self, j, method="grid", m=8, radius=None):
        if method == "grid":
            return self.ck_norm_grid(j, m=m, radius=radius)
        if method == "upper-bound":
            return self.ck_norm_upper(j, radius=radius)
        raise ValueError(f"unknown norm method {method!r}")

    # ----------------------------------------------------------------- #
    # truncation
    # ----------------------------------------------------------------- #

    def truncated(self, kmax, dmax):
        """Drop terms beyond the caps.

        Returns (poly, dropped_mass) where dropped_mass = sum |c| R^{|a|}
        over removed terms, an upper bound on the C^0 norm of the part
        thrown away.
        """
        modes, dropped = {}, 0.0
        for k, cp in self.modes.items():
            if max((abs(x) for x in k), default=0) > kmax:
                dropped += sum(abs(c) * self.radius ** sum(a)
                               for a, c in cp.items())
                continue
            keep = {}
            for a, c in cp.items():
                if sum(a) > dmax:
                    dropped += abs(c) * self.radius ** sum(a)
                else:
                    keep[a] = c
            if keep:
                modes[k] = keep
        return (TrigTaylorPoly(self.n, self.radius, modes, kmax, dmax,
                               _canonical=True), dropped)

    def with_radius(self, radius):
        """Same coefficients on a different action ball."""
        return TrigTaylorPoly(self.n, radius, self.modes, self.kmax,
                              self.dmax, _canonical=True)

    def scale_actions(self, r):
        """Substitute I -> r*I (coefficient at alpha picks up r^{|alpha|})."""
        modes = {k: {a: c * r ** sum(a) for a, c in cp.items()}
                 for k, cp in self.modes.items()}
        return TrigTaylorPoly(self.n, self.radius, modes, self.kmax,
                              self.dmax)

    def restrict_action(self, i):
        """Substitute I_i = 0 (keep only terms with alpha_i = 0)."""
        modes = {}
        for k, cp in self.modes.items():
            keep = {a: c for a, c in cp.items() if a[i] == 0}
            if keep:
                modes[k] = keep
        return TrigTaylorPoly(self.n, self.radius, modes, self.kmax,
                              self.dmax, _canonical=True)

    # ----------------------------------------------------------------- #
    # serialization
    # ----------------------------------------------------------------- #

    def to_text(self):
        """Plain text: header 'n R K D', one '(k, alpha, re, im)' per line."""
        lines = [f"{self.n} {self.radius!r} {self.kmax} {self.dmax}"]
        for k in sorted(self.modes):
            for a in sorted(self.modes[k]):
                c = self.modes[k][a]
                ks = " ".join(str(x) for x in k)
                As = " ".join(str(x) for x in a)
                lines.append(f"{ks} {As} {c.real!r} {c.imag!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        head = lines[0].split()
        n, radius, kmax, dmax = int(head[0]), float(head[1]), int(head[2]), \
            int(head[3])
        modes = {}
        for ln in lines[1:]:
            parts = ln.split()
            k = tuple(int(x) for x in parts[:n])
            a = tuple(int(x) for x in parts[n:2 * n])
            c = complex(float(parts[2 * n]), float(parts[2 * n + 1]))
            modes.setdefault(k, {})[a] = c
        return cls(n, radius, modes, kmax, dmax)


# --------------------------------------------------------------------- #
# helpers
# --------------------------------------------------------------------- #

def _canonicalize(modes):
    cmax = max((abs(c) for cp in modes.values() for c in cp.values()),
               default=0.0)
    if cmax == 0.0:
        return {}
    floor = CANONICAL_EPS * cmax
    out = {}
    for k, cp in modes.items():
        keep = {a: c for a, c in cp.items() if abs(c) > floor}
        if keep:
            out[tuple(k)] = keep
    return out

def _check_invariants(n, modes, kmax, dmax):
    for k, cp in modes.items():
        if len(k) != n:
            raise DimensionMismatchError("mode length != n")
        if max((abs(x) for x in k), default=0) > kmax:
            raise ValueError(f"mode {k} exceeds kmax={kmax}")
        for a in cp:
            if len(a) != n:
                raise DimensionMismatchError("monomial length != n")
            if sum(a) > dmax:
                raise ValueError(f"monomial {a} exceeds dmax={dmax}")
    # Hermitian symmetry within canonical tolerance
    cmax = max((abs(c) for cp in modes.values() for c in cp.values()),
               default=0.0)
    for k, cp in modes.items():
        mk = tuple(-x for x in k)
        cpm = modes.get(mk, {})
        for a, c in cp.items():
            if abs(cpm.get(a, 0.0).conjugate() - c) > 1e-10 * max(cmax, 1.0):
                raise ValueError(
                    f"Hermitian symmetry violated at mode {k}, {a}")


def random_real_poly(rng, n, kmax, dmax, radius=1.0, n_modes=4,
                     scale=1.0, theta_only=False):
    """Random real-valued poly for tests: Hermitian by construction."""
    modes = {}
    z = (0,) * n
    for _ in range(n_modes):
        k = tuple(int(rng.integers(-kmax, kmax + 1)) for _ in range(n))
        if dmax > 0 and not theta_only:
            deg = int(rng.integers(0, dmax + 1))
        else:
            deg = 0
        alpha = list(z)
        for _ in range(deg):
            alpha[int(rng.integers(0, n))] += 1
        alpha = tuple(alpha)
        c = scale * complex(rng.normal(), rng.normal() if any(k) else 0.0)
        mk = tuple(-x for x in k)
        modes.setdefault(k, {})
        modes[k][alpha] = modes[k].get(alpha, 0.0) + c / 2
        modes.setdefault(mk, {})
        modes[mk][alpha] = modes[mk].get(alpha, 0.0) + c.conjugate() / 2
    return TrigTaylorPoly(n, radius, modes, kmax, dmax)
