"""Closed-form and quadrature evaluation of the theory constants: integration
time laws, Wasserstein contraction rates, TV-regularity constants, typical-set
geometry, orbit-depth prediction, and gradient-evaluation budgets.

Numerical conventions
---------------------
* Discrete time laws are stored as exact integer numerators over the dyadic
  denominator 2^(2 k*), so normalization is checked in integer arithmetic.
* Quadrature is adaptive Simpson at absolute tolerance 1e-10, with integrands
  split at their kinks (pi/2) and the |cot| singular neighbourhoods excluded
  by construction (they lie inside the removed set).
* ``creg_constants`` reports the one-sided complement integral (the value the
  TV bound is quoted with, ~0.656 / ~0.262); the symmetric complement is
  exactly twice that.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

MUL = "mul"
BPS = "bps"
_VARIANTS = (MUL, BPS)


def _check_variant(variant: str) -> str:
    v = variant.lower()
    if v not in _VARIANTS:
        raise ValueError(f"variant must be one of {_VARIANTS}, got {variant!r}")
    return v


# -- generic numerics ----------------------------------------------------------

def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature with absolute tolerance ``tol``."""

    def simpson(x0, f0, x2, f2, x1, f1):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, f0, x2, f2, x1, f1, whole, eps, depth):
        xl = 0.5 * (x0 + x1)
        xr = 0.5 * (x1 + x2)
        fl, fr = f(xl), f(xr)
        left = simpson(x0, f0, x1, f1, xl, fl)
        right = simpson(x1, f1, x2, f2, xr, fr)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return (recurse(x0, f0, x1, f1, xl, fl, left, 0.5 * eps, depth + 1)
                + recurse(x1, f1, x2, f2, xr, fr, right, 0.5 * eps, depth + 1))

    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    return recurse(a, fa, b, fb, m, fm, simpson(a, fa, b, fb, m, fm), tol, 0)


def _integrate_split(f, points, tol=1e-10) -> float:
    return sum(adaptive_simpson(f, a, b, tol=tol)
               for a, b in zip(points[:-1], points[1:]))


def bisect_root(g, a: float, b: float, tol: float = 1e-10,
                max_iter: int = 200) -> float:
    """Bisection for g(x) = 0 on [a, b]; requires a sign change."""
    ga, gb = g(a), g(b)
    if ga == 0.0:
        return a
    if gb == 0.0:
        return b
    if ga * gb > 0:
        raise ValueError(f"no sign change on [{a}, {b}]")
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        gm = g(m)
        if gm == 0.0 or (b - a) < tol:
            return m
        if ga * gm < 0:
            b = m
        else:
            a, ga = m, gm
    return 0.5 * (a + b)


# -- integration time laws (discrete and limiting) ------------------------------

@dataclass(frozen=True)
class TimeLaw:
    """Discrete law of the signed step count T for the ideal kernel.

    Probabilities are the exact dyadic rationals numerators/denominator with
    denominator 2^(2 k*); ``T_values[i]`` carries ``numerators[i]``.
    """

    variant: str
    kstar: int
    h: float
    T_values: np.ndarray
    numerators: np.ndarray
    denominator: int

    @property
    def probs(self) -> np.ndarray:
        return self.numerators / float(self.denominator)

    def prob_fraction(self, T: int) -> Fraction:
        idx = T - int(self.T_values[0])
        if idx < 0 or idx >= self.T_values.shape[0]:
            return Fraction(0)
        return Fraction(int(self.numerators[idx]), self.denominator)

    def exact_total(self) -> Fraction:
        return Fraction(int(np.sum(self.numerators, dtype=object)), self.denominator)

    def mean_abs_time(self) -> float:
        """E|T| h, the mean absolute integration time."""
        return float(np.sum(np.abs(self.T_values) * self.probs)) * self.h

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def draw(self, u: float) -> int:
        c = self.cdf()
        i = int(np.searchsorted(c, u * c[-1], side="right").clip(0, c.shape[0] - 1))
        return int(self.T_values[i])


def time_law_pmf(variant: str, kstar: int, h: float = 1.0) -> TimeLaw:
    """Exact pmf of T on [-2^k*+1 : 2^k*-1].

    mul: P(T) = (2^k* - |T|) / 2^(2 k*)   (triangular)
    bps: P(T) = (2^(k*-1) - |2^(k*-1) - |T||) / 2^(2 k*-1)   (tent, zero at 0)
    """
    v = _check_variant(variant)
    if not (1 <= kstar <= 20):
        raise ValueError("kstar must be in [1, 20]")
    n = 1 << kstar
    T = np.arange(-(n - 1), n, dtype=np.int64)
    absT = np.abs(T)
    if v == MUL:
        nums = n - absT
    else:
        half = n >> 1
        nums = 2 * (half - np.abs(half - absT))
    return TimeLaw(v, kstar, float(h), T, nums.astype(np.int64), n * n)


def time_law_limit_density(variant: str, T0: float, t: float) -> float:
    """Limiting Lebesgue density on [-T0, T0].

    mul: (T0 - |t|) / T0^2; bps: (T0 - |T0 - 2|t||) / T0^2.
    """
    v = _check_variant(variant)
    if T0 <= 0:
        raise ValueError("T0 must be positive")
    if abs(t) > T0:
        raise ValueError(f"|t|={abs(t)} exceeds T0={T0}")
    if v == MUL:
        return (T0 - abs(t)) / T0**2
    return (T0 - abs(T0 - 2.0 * abs(t))) / T0**2


def _density_pi(variant: str):
    """The limit density with T0 = pi, as a callable on [-pi, pi]."""
    if variant == MUL:
        return lambda t: (math.pi - abs(t)) / math.pi**2
    return lambda t: (math.pi - abs(math.pi - 2.0 * abs(t))) / math.pi**2


# -- contraction and regularity constants ---------------------------------------

_RHO_CLOSED = {MUL: 1.0 - 2.0 / math.pi,
               BPS: 1.0 - 4.0 * (math.pi - 2.0) / math.pi**2}


def contraction_rho_quadrature(variant: str, tol: float = 1e-10) -> float:
    """1 - integral of |cos t| times the limit density, by quadrature."""
    v = _check_variant(variant)
    dens = _density_pi(v)
    val = _integrate_split(lambda t: abs(math.cos(t)) * dens(t),
                           [0.0, math.pi / 2, math.pi], tol=tol)
    return 1.0 - 2.0 * val


def contraction_rho(variant: str) -> float:
    """Ideal-kernel Wasserstein contraction rate rho_infinity.

    Closed forms 1 - 2/pi (mul) and 1 - 4(pi-2)/pi^2 (bps); the quadrature
    route must agree to 1e-9 or an internal consistency error is raised.
    """
    v = _check_variant(variant)
    closed = _RHO_CLOSED[v]
    quad = contraction_rho_quadrature(v)
    if abs(quad - closed) > 1e-9:
        raise ArithmeticError(
            f"contraction rate disagreement for {v}: closed={closed!r} quad={quad!r}")
    return closed


def eta_star(epsilon: float = 0.01) -> float:
    """The budget-optimal eta* = (1 - eps/4) / 12."""
    return (1.0 - epsilon / 4.0) / 12.0


def _cot_abs(t: float) -> float:
    return abs(math.cos(t) / math.sin(t))


@lru_cache(maxsize=64)
def creg_constants(variant: str, eta: float | None = None) -> tuple:
    """(w, C_reg): the removed-set half-width and the TV-regularity constant.

    ``w`` solves mass(removed set) = eta by bisection on (0, pi/2); the
    removed set is [-w, w] for mul and the three-piece set
    [-pi, -pi+w] u [-w, w] u [pi-w, pi] for bps.  C_reg is the one-sided
    integral of |cot t| times the density over the kept set.
    """
    v = _check_variant(variant)
    if eta is None:
        eta = eta_star()
    if not (0.0 < eta < 1.0 / 3.0):
        raise ValueError("eta must lie in (0, 1/3)")
    dens = _density_pi(v)
    if v == MUL:
        # mass of [-w, w] under the triangular density: (2 pi w - w^2)/pi^2
        mass = lambda w: (2.0 * math.pi * w - w * w) / math.pi**2
        w = bisect_root(lambda x: mass(x) - eta, 1e-12, math.pi / 2 - 1e-12)

        def integrand(t):
            if math.pi - t < 1e-9:  # |cot t|(pi - t) -> 1 as t -> pi
                return abs(math.cos(t)) / math.pi**2
            return _cot_abs(t) * dens(t)

        creg = _integrate_split(integrand, [w, math.pi / 2, math.pi])
    else:
        # mass of the three-piece set under the tent density: 4 w^2 / pi^2
        mass = lambda w: 4.0 * w * w / math.pi**2
        w = bisect_root(lambda x: mass(x) - eta, 1e-12, math.pi / 2 - 1e-12)
        creg = _integrate_split(lambda t: _cot_abs(t) * dens(t),
                                [w, math.pi / 2, math.pi - w])
    return float(w), float(creg)


@dataclass(frozen=True)
class TheoryConstants:
    rho_mul: float
    rho_bps: float
    w_mul: float
    w_bps: float
    creg_mul: float
    creg_bps: float
    eta_star: float
    f_eta_star: float
    ratio_limit: float


def f_budget(eta: float, epsilon: float = 0.01) -> float:
    """F(eta) = (1 - 3 eta - eps/4)^(3/2) eta^(1/2), the budget objective."""
    b = 1.0 - 3.0 * eta - epsilon / 4.0
    if b <= 0:
        raise ValueError("1 - 3 eta - eps/4 must be positive")
    return b**1.5 * math.sqrt(eta)


@lru_cache(maxsize=8)
def theory_constants(epsilon: float = 0.01) -> TheoryConstants:
    """All scalar constants of the high-dimensional comparison, in one table."""
    eta = eta_star(epsilon)
    rho_m = contraction_rho(MUL)
    rho_b = contraction_rho(BPS)
    w_m, c_m = creg_constants(MUL, eta)
    w_b, c_b = creg_constants(BPS, eta)
    return TheoryConstants(
        rho_mul=rho_m, rho_bps=rho_b,
        w_mul=w_m, w_bps=w_b,
        creg_mul=c_m, creg_bps=c_b,
        eta_star=eta,
        f_eta_star=f_budget(eta, epsilon),
        ratio_limit=(rho_b / rho_m) ** 2 / math.sqrt(2.0),
    )


# -- mixing budget ---------------------------------------------------------------

BETA_PENALTY = {MUL: 1.0, BPS: 2.0}


@dataclass(frozen=True)
class MixingBudget:
    """Concrete gradient-budget instantiation for one variant at dimension d."""

    variant: str
    d: int
    epsilon: float
    alpha0: float
    eta: float
    b: float
    rho: float
    c_reg: float
    w: float
    cprime: float
    cprime_approx: float
    epochs: float          # E = C' log d
    hbar: float
    horizon: int           # H = E ceil(b^-1 log(2/eps))
    n_grad: float
    beta_penalty: float


#: log-term coefficients of the quoted C' expansions (0.93 + 2.03/log d etc.)
_CPRIME_LINE = {MUL: (1.37, 2.77), BPS: (0.93, 2.03)}


def cprime(variant: str, d: int, epsilon: float = 0.01) -> float:
    """C' = 1/(2 rho) + log(eta^-1 C_reg e^rho sqrt(2)) / log(d).

    Matches the quoted expansions 1.37 + 2.77/log d (mul) and
    0.93 + 2.03/log d (bps).
    """
    v = _check_variant(variant)
    eta = eta_star(epsilon)
    rho = contraction_rho(v)
    _, creg = creg_constants(v, eta)
    return 1.0 / (2.0 * rho) + math.log(creg / eta * math.exp(rho) * math.sqrt(2.0)) / math.log(d)


def cprime_approx(variant: str, d: int) -> float:
    a, c = _CPRIME_LINE[_check_variant(variant)]
    return a + c / math.log(d)


def mixing_budget(variant: str, d: int, epsilon: float = 0.01,
                  alpha0: float = 1.0) -> MixingBudget:
    """Evaluate the concrete budget formulas for one variant.

    Side conditions (d >= 3, 0 < eps <= 0.01, alpha0 <= sqrt(d)) are enforced
    by raising, never silently clamped.
    """
    v = _check_variant(variant)
    if d < 3:
        raise ValueError("budget formulas require d >= 3")
    if not (0.0 < epsilon <= 0.01):
        raise ValueError("epsilon must lie in (0, 0.01]")
    if alpha0 > math.sqrt(d):
        raise ValueError(f"alpha0={alpha0} violates alpha0 <= sqrt(d)={math.sqrt(d):.3f}")
    eta = eta_star(epsilon)
    b = 1.0 - 3.0 * eta - epsilon / 4.0
    rho = contraction_rho(v)
    w, creg = creg_constants(v, eta)
    beta = BETA_PENALTY[v]
    cp = cprime(v, d, epsilon)
    epochs = cp * math.log(d)
    log2e = math.log(2.0 / epsilon)
    hbar = (math.sqrt(eta) / (2.0 * cp * math.sqrt(beta))
            / math.log(d)
            / math.sqrt(1.0 + math.sqrt(2.0))
            / math.sqrt(max(math.sqrt(d), alpha0))
            * math.sqrt(b)
            * log2e ** -0.75)
    horizon = epochs * math.ceil(log2e / b)
    n_grad = math.pi * epochs / b * log2e / hbar
    return MixingBudget(
        variant=v, d=d, epsilon=epsilon, alpha0=alpha0,
        eta=eta, b=b, rho=rho, c_reg=creg, w=w,
        cprime=cp, cprime_approx=cprime_approx(v, d),
        epochs=epochs, hbar=hbar, horizon=int(math.ceil(horizon)),
        n_grad=n_grad, beta_penalty=beta,
    )


def gradient_budget_ratio(d: int | None = None, epsilon: float = 0.01) -> dict:
    """N_g^mul / N_g^bps: the finite-d formula and the log(d) -> infinity limit.

    The two are labelled separately; the limit equals
    (1/sqrt(2)) (rho_bps / rho_mul)^2 ~ 1.546.
    """
    tc = theory_constants(epsilon)
    out = {"limit": tc.ratio_limit}
    if d is not None:
        cm = cprime(MUL, d, epsilon)
        cb = cprime(BPS, d, epsilon)
        out["finite_d"] = (cm / cb) ** 2 * math.sqrt(BETA_PENALTY[MUL] / BETA_PENALTY[BPS])
    return out


# -- typical-set geometry ---------------------------------------------------------

@dataclass(frozen=True)
class ConcentrationParams:
    d: int
    alpha: float
    r: float
    Delta: float
    delta: float


def delta_Delta(d: int, alpha: float, r: float, h: float) -> ConcentrationParams:
    """delta = (pi/2)(5 max(alpha, r)/d + h^2);  Delta = h^2 max(alpha, r)/2 + h^2 d / 8."""
    if d < 1 or alpha < 0 or r < 0 or h < 0:
        raise ValueError("d, alpha, r, h must be nonnegative (d >= 1)")
    m = max(alpha, r)
    return ConcentrationParams(
        d=d, alpha=alpha, r=r,
        Delta=h * h * m / 2.0 + h * h * d / 8.0,
        delta=math.pi / 2.0 * (5.0 * m / d + h * h),
    )


def concentration_check(d: int, alpha: float, r: float, q, p) -> tuple:
    """(q in D_alpha, p in E-test): |q|^2 - d <= alpha and
    max(|p|^2 - d, |q^T p|) <= r.

    The E membership uses the chain's current q in place of the sup over
    D_alpha (the sufficient per-step test); the full sup bound is exercised
    only through the Cauchy-Schwarz envelope in the Monte Carlo validation.
    """
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != (d,) or p.shape != (d,):
        raise ValueError("q, p must have shape (d,)")
    in_d = float(np.dot(q, q)) - d <= alpha
    in_e = max(float(np.dot(p, p)) - d, abs(float(np.dot(q, p)))) <= r
    return bool(in_d), bool(in_e)


def gaussian_shell_tail_bound(d: int, alpha: float) -> float:
    """pi(D_alpha^c) <= 2 exp(-alpha^2 / 8d)."""
    return 2.0 * math.exp(-alpha * alpha / (8.0 * d))


# -- orbit-depth prediction --------------------------------------------------------

def predict_kstar(h: float, delta: float, K_m: int = 20) -> int | None:
    """The unique k* <= K_m with h (2^k* - 1) in (pi + delta, 2 pi - delta),
    or None when the band is missed (or empty)."""
    if h <= 0 or delta <= 0:
        raise ValueError("h and delta must be positive")
    hits = [k for k in range(1, K_m + 1)
            if math.pi + delta < h * (2**k - 1) < 2.0 * math.pi - delta]
    if len(hits) > 1:  # impossible for delta > 0 by the doubling geometry
        raise AssertionError(f"non-unique k* candidates {hits}")
    return hits[0] if hits else None


def admissible_h(h: float, delta: float, k_max: int = 20) -> bool:
    """Literal band condition h(2^N - 1) avoiding (0, delta) and
    (pi - delta, pi + delta) for every rung up to k_max."""
    if h <= 0 or delta <= 0:
        raise ValueError("h and delta must be positive")
    for k in range(1, k_max + 1):
        x = h * (2**k - 1)
        if 0.0 < x < delta or math.pi - delta < x < math.pi + delta:
            return False
    return True


def violated_band(h: float, delta: float, k_max: int = 20,
                  low_band: bool = True) -> tuple | None:
    """First (k, rung, band) violating the admissibility condition, else None.

    ``low_band=False`` restricts the check to the pi-resonance band (the CLI
    pre-check uses this form: the literal (0, delta) clause would reject
    every step size below delta outright).
    """
    for k in range(1, k_max + 1):
        x = h * (2**k - 1)
        if low_band and 0.0 < x < delta:
            return k, x, (0.0, delta)
        if math.pi - delta < x < math.pi + delta:
            return k, x, (math.pi - delta, math.pi + delta)
    return None


def snap_admissible(h_nominal: float, delta: float, K_m: int,
                    span: float = 0.35, n_grid: int = 141) -> tuple:
    """Nearest step size to ``h_nominal`` whose rung ladder stays ``delta``
    clear of both pi and 2 pi and hits the (pi + delta, 2 pi - delta) band.

    Returns (h, k*).  Used by the experiments to de-resonate nominal step
    sizes; the snap should be logged by the caller.
    """
    def ladder_ok(h):
        ks = predict_kstar(h, delta, K_m)
        if ks is None:
            return None
        for k in range(1, K_m + 1):
            x = h * (2**k - 1)
            if x > 2.0 * math.pi + delta:
                break
            if abs(x - math.pi) < delta or abs(x - 2.0 * math.pi) < delta:
                return None
        return ks

    best = None
    for f in np.linspace(-span, span, n_grid):
        h = h_nominal * math.exp(f)
        ks = ladder_ok(h)
        if ks is not None and (best is None or abs(f) < best[0]):
            best = (abs(f), h, ks)
    if best is None:
        raise ValueError(f"no admissible step size near {h_nominal} (delta={delta})")
    return best[1], best[2]
