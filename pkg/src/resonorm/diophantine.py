"""Exact frequency analysis: resonance lattices, small divisors, periodic
approximations.

A frequency vector is held exactly as a rational combination of declared
irrational constants, so resonance tests k.omega = 0 are decided by
integer arithmetic, never by floating point.  Small-divisor maximization
(the function Psi and its derived Delta, Delta*) is done by full lattice
enumeration at desk scale, with 50-digit refinement only to break
near-ties deterministically.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np
import sympy as sp

MP_DPS = 50
TIE_REL = 1e-9          # float near-tie window, refined with mpmath
MARGIN = mpmath.mpf("1e-30")


class FrequencyError(ValueError):
    pass


class PsiDomainError(ValueError):
    def __init__(self, q, q_min):
        super().__init__(f"Q={q} below Q_min={q_min} (no lattice point)")
        self.q_min = q_min


class TableExhaustedError(ValueError):
    def __init__(self, x, q_max):
        super().__init__(
            f"Delta*({x}) exceeds the tabulated range; rebuild the Psi "
            f"table with Q_max larger than {q_max}")
        self.q_max = q_max


class SearchBudgetError(RuntimeError):
    def __init__(self, msg, diagnostics):
        super().__init__(msg)
        self.diagnostics = diagnostics


# --------------------------------------------------------------------- #
# exact frequencies
# --------------------------------------------------------------------- #

class ExactFrequency:
    """Frequency vector omega_i = sum_j entries[i][j] * c_j.

    The constants c_0 = 1, c_1, ... are declared Q-linearly independent
    real numbers carried with 50-digit decimal values; entries are exact
    rationals.  k.omega = 0 is then decidable exactly.
    """

    def __init__(self, entries, constants):
        self.entries = tuple(tuple(Fraction(e) for e in row)
                             for row in entries)
        self.constants = tuple((str(name), str(value))
                               for name, value in constants)
        self.n = len(self.entries)
        self.s = len(self.constants)
        if any(len(row) != self.s for row in self.entries):
            raise FrequencyError("entries shape does not match constants")
        if self.constants[0][1] not in ("1", "1.0"):
            raise FrequencyError("first constant must be 1")
        if all(all(e == 0 for e in row) for row in self.entries):
            raise FrequencyError("omega must be nonzero")
        with mpmath.workdps(MP_DPS):
            self._values_mp = tuple(mpmath.mpf(v) for _, v in self.constants)
            self._omega_mp = tuple(
                mpmath.fsum(mpmath.mpf(e.numerator) / e.denominator * c
                            for e, c in zip(row, self._values_mp))
                for row in self.entries)
        self.omega_float = np.array([float(w) for w in self._omega_mp])

    # exact structure ---------------------------------------------------

    def dot_coeffs(self, k):
        """Rational coefficients of k.omega in the constant basis."""
        return tuple(sum(Fraction(int(ki)) * row[j]
                         for ki, row in zip(k, self.entries))
                     for j in range(self.s))

    def is_resonant(self, k):
        """Exact test k.omega = 0."""
        return all(c == 0 for c in self.dot_coeffs(k))

    def dot_mp(self, k):
        with mpmath.workdps(MP_DPS):
            return mpmath.fsum(int(ki) * w
                               for ki, w in zip(k, self._omega_mp))

    def dot_float(self, k):
        return float(np.dot(np.asarray(k, dtype=float), self.omega_float))

    def is_rational_vector(self):
        return all(all(row[j] == 0 for j in range(1, self.s))
                   for row in self.entries)

    def as_fractions(self):
        if not self.is_rational_vector():
            raise FrequencyError("omega is not a rational vector")
        return tuple(row[0] for row in self.entries)

    # identity ----------------------------------------------------------

    def _key(self):
        return (self.entries, self.constants)

    def __eq__(self, other):
        return isinstance(other, ExactFrequency) and \
            self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"ExactFrequency({np.array2string(self.omega_float, precision=6)})"

    # constructors --------------------------------------------------------

    @classmethod
    def from_rationals(cls, values):
        entries = [[Fraction(v)] for v in values]
        return cls(entries, [("one", "1")])

    @classmethod
    def parse(cls, spec):
        """Parse a spec like "1, (1+sqrt5)/2" into an exact frequency.

        Components are sympy expressions over rationals and surds; the
        declared constants are 1 plus the distinct irrational monomials
        appearing after expansion.
        """
        parts = [p.strip() for p in str(spec).split(",") if p.strip()]
        if not parts:
            raise FrequencyError(f"empty frequency spec {spec!r}")
        local = {"sqrt2": sp.sqrt(2), "sqrt3": sp.sqrt(3),
                 "sqrt5": sp.sqrt(5), "phi": (1 + sp.sqrt(5)) / 2,
                 "cbrt2": sp.cbrt(2), "cbrt4": sp.cbrt(4)}
        exprs = []
        for p in parts:
            try:
                e = sp.sympify(p, locals=local, rational=True)
            except (sp.SympifyError, SyntaxError) as exc:
                raise FrequencyError(f"cannot parse component {p!r}: {exc}")
            exprs.append(sp.expand(sp.nsimplify(e, rational=False)))
        atoms = set()
        rows_sym = []
        for e in exprs:
            d = e.as_coefficients_dict()
            for mono, coef in d.items():
                if mono == 1:
                    continue
                if not coef.is_Rational:
                    raise FrequencyError(
                        f"non-rational coefficient {coef} in {e}")
                atoms.add(mono)
            rows_sym.append(d)
        atom_list = sorted(atoms, key=str)
        entries = []
        for d in rows_sym:
            r0 = sp.Rational(d.get(1, 0))
            row = [Fraction(int(r0.p), int(r0.q))]
            for a in atom_list:
                r = sp.Rational(d.get(a, 0))
                row.append(Fraction(int(r.p), int(r.q)))
            entries.append(row)
        constants = [("one", "1")]
        with mpmath.workdps(MP_DPS):
            for a in atom_list:
                constants.append((str(a), sp.N(a, MP_DPS)))
        return cls(entries, constants)


def golden_frequency():
    return ExactFrequency.parse("1, (1+sqrt5)/2")


def cubic_frequency():
    return ExactFrequency.parse("1, cbrt2, cbrt4")


# --------------------------------------------------------------------- #
# integer linear algebra (exact, tiny matrices)
# --------------------------------------------------------------------- #

def _integer_rows(rows):
    """Scale each rational row to a primitive integer row."""
    out = []
    for row in rows:
        den = 1
        for e in row:
            den = den * e.denominator // math.gcd(den, e.denominator)
        ints = [int(e * den) for e in row]
        g = 0
        for v in ints:
            g = math.gcd(g, abs(v))
        if g > 1:
            ints = [v // g for v in ints]
        out.append(ints)
    return out


def integer_kernel(rows, n):
    """Saturated Z-basis of {k in Z^n : rows . k = 0}.

    Row-reduces the transposed system with unimodular operations,
    tracking the transform; rows mapped to zero span the kernel lattice.
    """
    m = len(rows)
    B = [[rows[i][j] for i in range(m)] for j in range(n)]   # n x m
    U = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    prow = 0
    for col in range(m):
        piv = None
        for r in range(prow, n):
            if B[r][col] != 0:
                piv = r
                break
        if piv is None:
            continue
        B[prow], B[piv] = B[piv], B[prow]
        U[prow], U[piv] = U[piv], U[prow]
        # clear the column below the pivot by gcd steps
        changed = True
        while changed:
            changed = False
            for r in range(prow + 1, n):
                if B[r][col] == 0:
                    continue
                q = B[r][col] // B[prow][col]
                B[r] = [a - q * b for a, b in zip(B[r], B[prow])]
                U[r] = [a - q * b for a, b in zip(U[r], U[prow])]
                if B[r][col] != 0:
                    B[prow], B[r] = B[r], B[prow]
                    U[prow], U[r] = U[r], U[prow]
                    changed = True
        prow += 1
        if prow == n:
            break
    kernel = [U[r] for r in range(n) if all(v == 0 for v in B[r])]
    return sorted((canonical_mode(tuple(v)) for v in kernel), reverse=True)


def _minor_gcd(rows):
    """gcd of all maximal minors of an r x d integer matrix (r <= d)."""
    r = len(rows)
    d = len(rows[0])
    g = 0
    for cols in itertools.combinations(range(d), r):
        sub = [[row[c] for c in cols] for row in rows]
        g = math.gcd(g, abs(_int_det(sub)))
        if g == 1:
            return 1
    return g


def _int_det(mat):
    r = len(mat)
    if r == 1:
        return mat[0][0]
    if r == 2:
        return mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0]
    det = 0
    for j in range(r):
        sub = [row[:j] + row[j + 1:] for row in mat[1:]]
        det += (-1) ** j * mat[0][j] * _int_det(sub)
    return det


@lru_cache(maxsize=64)
def rational_span(omega):
    """Dimension d of F_omega and a Z-basis of Z^n cap F.

    F is recovered as the orthogonal complement of the resonance lattice
    {k : k.omega = 0}; both kernels are computed by exact integer
    elimination, so the basis is primitive and saturated.
    """
    n = omega.n
    rows = []
    for j in range(omega.s):
        row = [omega.entries[i][j] for i in range(n)]
        if any(row):
            rows.append(row)
    constraint = _integer_rows(rows)
    res_lattice = integer_kernel(constraint, n) if constraint else \
        [tuple(1 if i == j else 0 for j in range(n)) for i in range(n)]
    if not res_lattice:
        basis = [tuple(1 if i == j else 0 for j in range(n))
                 for i in range(n)]
        return n, tuple(basis)
    basis = integer_kernel([list(r) for r in res_lattice], n)
    return len(basis), tuple(basis)


def resonance_lattice(omega):
    """Z-basis of {k in Z^n : k.omega = 0}."""
    n = omega.n
    rows = []
    for j in range(omega.s):
        row = [omega.entries[i][j] for i in range(n)]
        if any(row):
            rows.append(row)
    constraint = _integer_rows(rows)
    return tuple(integer_kernel(constraint, n)) if constraint else ()


# --------------------------------------------------------------------- #
# Psi table
# --------------------------------------------------------------------- #

def canonical_mode(k):
    """Sign-normalized representative: first nonzero component positive."""
    for x in k:
        if x != 0:
            return k if x > 0 else tuple(-v for v in k)
    return k


@dataclass(frozen=True)
class PsiTable:
    """Breakpoints of the small-divisor maximum Psi(Q).

    Each row is (Q, psi, witness): a new extremal lattice vector of sup
    norm Q raising the running maximum of |k.omega|^{-1} to psi.
    """

    omega: ExactFrequency
    q_max: int
    breakpoints: tuple   # ((Q:int, psi:float, witness:tuple), ...)

    @property
    def q_min(self):
        return self.breakpoints[0][0]

    def _step_index(self, q):
        if q < self.q_min:
            raise PsiDomainError(q, self.q_min)
        idx = 0
        for i, (bq, _, _) in enumerate(self.breakpoints):
            if bq <= q:
                idx = i
            else:
                break
        return idx

    def psi(self, q):
        return self.breakpoints[self._step_index(math.floor(q))][1]

    def witness(self, q):
        return self.breakpoints[self._step_index(math.floor(q))][2]

    def delta(self, q):
        return q * self.psi(q)

    def delta_star(self, x):
        """sup{Q : Delta(Q) <= x}, exact on the tabulated staircase."""
        first_q, first_psi, _ = self.breakpoints[0]
        if x < first_q * first_psi:
            raise ValueError(
                f"x={x} below Delta(Q_min)={first_q * first_psi}")
        best = None
        for i, (bq, psi, _) in enumerate(self.breakpoints):
            if x < bq * psi:
                break
            nxt = self.breakpoints[i + 1][0] \
                if i + 1 < len(self.breakpoints) else None
            cand = x / psi
            if nxt is not None and cand >= nxt:
                best = float(nxt)
            else:
                best = min(cand, float(self.q_max))
                if cand > self.q_max:
                    raise TableExhaustedError(x, self.q_max)
                break
        return best

    def rows(self):
        return list(self.breakpoints)


def _coord_bound(basis, q_max):
    B = np.array(basis, dtype=float).T        # n x d, columns are basis
    pinv = np.linalg.pinv(B)
    return int(math.ceil(np.abs(pinv).sum(axis=1).max() * q_max + 1e-9))


@lru_cache(maxsize=32)
def psi_table(omega, q_max):
    """Tabulate Psi_omega up to Q_max by full enumeration of Z^n cap F.

    Enumeration runs in lattice coordinates (slabbed along the last
    coordinate); |k|_inf is measured in ambient Z^n coordinates.  The
    witness per breakpoint is deterministic: sign-canonical, then
    lexicographically smallest, with near-ties resolved at 50 digits.
    """
    q_max = int(math.floor(q_max))
    d, basis = rational_span(omega)
    B = np.array(basis, dtype=np.int64)       # d x n, rows are basis
    cb = _coord_bound(basis, q_max)
    rng = np.arange(-cb, cb + 1, dtype=np.int64)
    shell_best = {}                            # Q -> (val, [k candidates])
    if d == 1:
        slabs = [rng.reshape(-1, 1)]
    else:
        mesh = np.meshgrid(*([rng] * (d - 1)), indexing="ij")
        core = np.stack([g.ravel() for g in mesh], axis=1)
        slabs = [np.hstack([core, np.full((core.shape[0], 1), c,
                                          dtype=np.int64)]) for c in rng]
    wf = omega.omega_float
    for coords in slabs:
        K = coords @ B
        shells = np.abs(K).max(axis=1)
        sel = (shells > 0) & (shells <= q_max)
        if not sel.any():
            continue
        K = K[sel]
        shells = shells[sel]
        vals = 1.0 / np.abs(K @ wf)
        for q in np.unique(shells):
            m = shells == q
            vmax = vals[m].max()
            near = m.copy()
            near[m] = vals[m] >= vmax * (1.0 - TIE_REL)
            cands = [tuple(int(x) for x in row) for row in K[near]]
            cur = shell_best.get(int(q))
            if cur is None or vmax > cur[0] * (1.0 - TIE_REL):
                if cur is not None and abs(vmax - cur[0]) <= \
                        TIE_REL * max(vmax, cur[0]):
                    shell_best[int(q)] = (max(vmax, cur[0]),
                                          cur[1] + cands)
                else:
                    shell_best[int(q)] = (vmax, cands)
    if not shell_best:
        raise PsiDomainError(q_max, None)
    breakpoints = []
    run_val = None
    run_wit = None
    for q in sorted(shell_best):
        vmax, cands = shell_best[q]
        val, wit = _refine_witness(omega, cands)
        if run_val is None or val > run_val * (1.0 + 1e-12):
            if run_val is not None and _mp_close(omega, wit, run_wit):
                continue
            breakpoints.append((q, val, wit))
            run_val, run_wit = val, wit
    return PsiTable(omega, q_max, tuple(breakpoints))


def _refine_witness(omega, cands):
    """Pick the extremal candidate deterministically (50-digit compare)."""
    cands = sorted(set(canonical_mode(k) for k in cands))
    if len(cands) == 1:
        k = cands[0]
        return 1.0 / abs(omega.dot_float(k)), k
    with mpmath.workdps(MP_DPS):
        scored = [(abs(omega.dot_mp(k)), k) for k in cands]
        dmin = min(s[0] for s in scored)
        best = [k for s, k in scored if s <= dmin * (1 + MARGIN)]
    k = min(best)
    return 1.0 / abs(omega.dot_float(k)), k


def _mp_close(omega, k1, k2):
    with mpmath.workdps(MP_DPS):
        return abs(abs(omega.dot_mp(k1)) - abs(omega.dot_mp(k2))) \
            <= MARGIN * abs(omega.dot_mp(k2))


def psi(omega, q, q_max=None):
    """Psi_omega(Q): exact max of |k.omega|^{-1} over 0 < |k|_inf <= Q."""
    table = psi_table(omega, int(math.floor(q_max or max(q, 1))))
    return table.psi(q)


def delta_star(omega, x, q_max=200):
    """Delta*(x) = sup{Q : Q Psi(Q) <= x} from the tabulated staircase."""
    return psi_table(omega, q_max).delta_star(x)


# --------------------------------------------------------------------- #
# periodic vectors and approximations
# --------------------------------------------------------------------- #

@dataclass(frozen=True)
class PeriodicVector:
    """Rational vector v = p/T with minimal period T (so T*v = p in Z^n)."""

    p: tuple
    T: Fraction

    def __post_init__(self):
        g = 0
        for x in self.p:
            g = math.gcd(g, abs(int(x)))
        if g != 1:
            raise ValueError(f"lift {self.p} is not primitive (gcd={g})")
        if self.T <= 0:
            raise ValueError("period must be positive")

    @classmethod
    def reduced(cls, p, T):
        p = [int(x) for x in p]
        T = Fraction(T)
        g = 0
        for x in p:
            g = math.gcd(g, abs(x))
        if g == 0:
            raise ValueError("zero lift")
        return cls(tuple(x // g for x in p), T / g)

    @property
    def n(self):
        return len(self.p)

    @property
    def v(self):
        return tuple(Fraction(x) / self.T for x in self.p)

    @property
    def v_float(self):
        return np.array([float(x) for x in self.v])

    @property
    def T_float(self):
        return float(self.T)

    def dot(self, k):
        """Exact k.v as a Fraction (zero iff k.p = 0)."""
        return Fraction(sum(int(a) * int(b) for a, b in zip(k, self.p)),
                        1) / self.T

    def is_resonant(self, k):
        return sum(int(a) * int(b) for a, b in zip(k, self.p)) == 0


@dataclass
class ApproximationResult:
    vectors: list
    errors: list           # |omega - v_j|_inf
    constants: list        # C_j = err_j * T_j * Q
    coords: list           # integer coordinates of lifts in the F basis
    det: int               # change-of-basis determinant (certified +-1)
    psi_q: float
    q: float


def _coords_exact(basis, p):
    """Integer coordinates of p in the lattice basis, or None."""
    d = len(basis)
    n = len(basis[0])
    A = [[Fraction(basis[j][i]) for j in range(d)] for i in range(n)]
    b = [Fraction(int(x)) for x in p]
    # Gaussian elimination on the overdetermined exact system
    piv_rows = []
    used = [False] * n
    x = [Fraction(0)] * d
    Ab = [row[:] + [b[i]] for i, row in enumerate(A)]
    r = 0
    for c in range(d):
        piv = None
        for i in range(n):
            if not used[i] and Ab[i][c] != 0:
                piv = i
                break
        if piv is None:
            return None
        used[piv] = True
        piv_rows.append(piv)
        for i in range(n):
            if i != piv and Ab[i][c] != 0:
                f = Ab[i][c] / Ab[piv][c]
                Ab[i] = [a - f * bb for a, bb in zip(Ab[i], Ab[piv])]
        r += 1
    for c, i in enumerate(piv_rows):
        x[c] = Ab[i][d] / Ab[i][c]
    # consistency of the unused rows
    for i in range(n):
        if not used[i]:
            if sum(A[i][c] * x[c] for c in range(d)) != b[i]:
                return None
    if any(xi.denominator != 1 for xi in x):
        return None
    return tuple(int(xi) for xi in x)


def periodic_approximations(omega, q, c_budget=4.0, q_max=None):
    """d periodic vectors whose lifts form a certified Z-basis of Z^n cap F.

    Searches integer periods T up to ceil(c_budget * Psi(Q)) (plus the
    exact period when omega itself is rational), scores candidates by
    approximation error, and selects greedily subject to the saturation
    certificate; the final change-of-basis matrix to the rational_span
    basis has determinant +-1, checked exactly.
    """
    d, basis = rational_span(omega)
    table = psi_table(omega, int(math.floor(q_max or max(q, 8))))
    psi_q = table.psi(q)
    t_budget = max(int(math.ceil(c_budget * psi_q)), 8)
    B = np.array(basis, dtype=np.int64)
    Bf = B.T.astype(float)                      # n x d
    pinv = np.linalg.pinv(Bf)
    wf = omega.omega_float

    candidates = {}
    Ts = list(range(1, t_budget + 1))
    exact_T = None
    if omega.is_rational_vector():
        fr = omega.as_fractions()
        L = 1
        for f in fr:
            L = L * f.denominator // math.gcd(L, f.denominator)
        nums = [int(f * L) for f in fr]
        g = 0
        for v in nums:
            g = math.gcd(g, abs(v))
        exact_T = Fraction(L, g)
    for T in Ts:
        coords = np.rint(pinv @ (T * wf)).astype(np.int64)
        p = coords @ B
        if not p.any():
            continue
        pv = PeriodicVector.reduced(p, T)
        err = float(np.abs(wf - pv.v_float).max())
        key = (pv.p, pv.T)
        if key not in candidates or err < candidates[key][0]:
            candidates[key] = (err, pv)
    if exact_T is not None:
        fr = omega.as_fractions()
        p = tuple(int(f * exact_T) for f in fr)
        pv = PeriodicVector.reduced(p, exact_T)
        candidates[(pv.p, pv.T)] = (0.0, pv)

    ranked = sorted(candidates.values(), key=lambda t: (t[0], t[1].T))
    chosen, chosen_coords = [], []
    for err, pv in ranked:
        u = _coords_exact(basis, pv.p)
        if u is None:
            continue
        trial = chosen_coords + [list(u)]
        if _minor_gcd(trial) != 1:
            continue
        chosen.append((err, pv))
        chosen_coords.append(list(u))
        if len(chosen) == d:
            break
    if len(chosen) < d:
        raise SearchBudgetError(
            f"no unimodular {d}-tuple of periodic vectors within budget",
            {"t_budget": t_budget, "q": q, "found": len(chosen),
             "best": [(c[1].p, str(c[1].T), c[0]) for c in ranked[:8]]})
    det = _int_det(chosen_coords)
    assert abs(det) == 1, "saturation certificate failed"
    return ApproximationResult(
        vectors=[pv for _, pv in chosen],
        errors=[err for err, _ in chosen],
        constants=[err * float(pv.T) * float(q) for err, pv in chosen],
        coords=[tuple(u) for u in chosen_coords],
        det=det, psi_q=psi_q, q=float(q))


# --------------------------------------------------------------------- #
# Diophantine condition report
# --------------------------------------------------------------------- #

@dataclass
class DiophantineReport:
    gamma: float
    tau: float
    q_max: int
    holds: bool
    violation: tuple | None       # (Q, psi, witness) of first failure
    tau_fit: float
    gamma_fit: float
    breakpoints: list


def dioph_check(omega, gamma, tau, q_max=100):
    """Check Psi(Q) <= gamma^{-1} Q^tau at every breakpoint up to Q_max.

    Also reports the least-squares (gamma, tau) fit over the breakpoint
    staircase, used by the stability experiments as the empirical
    Diophantine exponent of omega.
    """
    table = psi_table(omega, q_max)
    rows = table.rows()
    holds, violation = True, None
    for bq, val, wit in rows:
        if val > (1.0 / gamma) * bq ** tau * (1 + 1e-12):
            holds, violation = False, (bq, val, wit)
            break
    lq = np.log([r[0] for r in rows])
    lv = np.log([r[1] for r in rows])
    if len(rows) >= 2:
        A = np.vstack([lq, np.ones_like(lq)]).T
        sol, *_ = np.linalg.lstsq(A, lv, rcond=None)
        tau_fit, gamma_fit = float(sol[0]), float(math.exp(-sol[1]))
    else:
        tau_fit, gamma_fit = 0.0, float(1.0 / rows[0][1])
    return DiophantineReport(gamma=gamma, tau=tau, q_max=q_max, holds=holds,
                             violation=violation, tau_fit=tau_fit,
                             gamma_fit=gamma_fit, breakpoints=rows)
