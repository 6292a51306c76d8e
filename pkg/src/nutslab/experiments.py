"""Monte Carlo verification experiments: synchronous-coupling contraction,
typical-set energy/depth scans, dimension-scaling of the mixing proxy, and
the tail-behaviour probes behind the (non-)geometric-ergodicity claims.

Every experiment takes an explicit seed and is rerun-identical.  Monte Carlo
estimates are always reported with standard errors; assertions against
predictions live in the test suite, not here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .integrator import leapfrog_trajectory
from .orbit import OrbitWorkspace, sample_orbit
from .samplers import KernelConfig, StreamSet, nuts_step
from .targets import PhasePoint, Target, hamiltonian, power_law, std_gaussian
from .theory import concentration_check, delta_Delta, predict_kstar, time_law_pmf


# -- synchronous coupling of the ideal kernels -----------------------------------

@dataclass
class CouplingReport:
    variant: str
    d: int
    h: float
    kstar: int
    n_pairs: int
    n_steps: int
    seed: int
    exact_flow: bool
    ratios: np.ndarray          # per-step mean contraction ratio
    ses: np.ndarray
    predicted_discrete: float   # sum_T L(T) |cos(beta_h T h)|
    predicted_limit: float      # 1 - rho_infinity

    @property
    def pooled_ratio(self) -> float:
        return float(np.mean(self.ratios))

    def to_summary(self) -> dict:
        return {
            "variant": self.variant, "d": self.d, "h": self.h,
            "kstar": self.kstar, "n_pairs": self.n_pairs,
            "n_steps": self.n_steps, "seed": self.seed,
            "exact_flow": self.exact_flow,
            "pooled_ratio": self.pooled_ratio,
            "per_step_ratio": [float(x) for x in self.ratios],
            "per_step_se": [float(x) for x in self.ses],
            "predicted_discrete": self.predicted_discrete,
            "predicted_limit": self.predicted_limit,
        }


def coupling_contraction(variant: str, d: int, h: float, kstar: int,
                         n_pairs: int, n_steps: int, seed: int,
                         exact_flow: bool = False,
                         identical_starts: bool = False) -> CouplingReport:
    """Common-random-numbers coupling of two ideal-kernel chains.

    Both chains share the momentum draw and the integration-time draw each
    step; only the positions differ, so the per-step distance ratio isolates
    the |cos| contraction factor of the linear Gaussian dynamics.  With
    ``exact_flow`` the leapfrog map is replaced by the exact rotation (the
    h -> 0 oracle).  Pairs at zero distance report ratio 0 (they stay glued;
    ``identical_starts`` makes every pair such a pair).
    """
    target = std_gaussian(d)
    law = time_law_pmf(variant, kstar, h)
    cdf = law.cdf()
    theta = math.acos(1.0 - 0.5 * h * h)  # = h * beta_h
    if exact_flow:
        pred_disc = float(np.sum(law.probs * np.abs(np.cos(law.T_values * h))))
    else:
        pred_disc = float(np.sum(law.probs * np.abs(np.cos(law.T_values * theta))))
    from .theory import contraction_rho
    pred_limit = 1.0 - contraction_rho(variant)

    streams = StreamSet(seed)
    qa = streams.noise.standard_normal((n_pairs, d))
    qb = qa.copy() if identical_starts else streams.noise.standard_normal((n_pairs, d))
    ratios = np.empty(n_steps)
    ses = np.empty(n_steps)
    for step in range(n_steps):
        ps = streams.momentum.standard_normal((n_pairs, d))
        us = streams.select.random(n_pairs)
        Ts = law.T_values[np.searchsorted(cdf, us * cdf[-1]).clip(0, cdf.shape[0] - 1)]
        step_ratio = np.empty(n_pairs)
        if exact_flow:
            t = Ts * h
            c, s = np.cos(t)[:, None], np.sin(t)[:, None]
            na = qa * c + ps * s
            nb = qb * c + ps * s
            d0 = np.linalg.norm(qa - qb, axis=1)
            d1 = np.linalg.norm(na - nb, axis=1)
            step_ratio = np.divide(d1, d0, out=np.zeros_like(d1), where=d0 > 0)
            qa, qb = na, nb
        else:
            for i in range(n_pairs):
                T = int(Ts[i])
                d0 = float(np.linalg.norm(qa[i] - qb[i]))
                if d0 == 0.0:
                    step_ratio[i] = 0.0
                    continue
                if T == 0:
                    step_ratio[i] = 1.0
                    continue
                sgn = 1 if T > 0 else -1
                xa, _, _, _, _ = leapfrog_trajectory(
                    target, PhasePoint(qa[i], ps[i]), h, abs(T), sgn)
                xb, _, _, _, _ = leapfrog_trajectory(
                    target, PhasePoint(qb[i], ps[i]), h, abs(T), sgn)
                qa[i], qb[i] = xa[-1], xb[-1]
                step_ratio[i] = float(np.linalg.norm(qa[i] - qb[i])) / d0
        ratios[step] = np.mean(step_ratio)
        ses[step] = np.std(step_ratio) / math.sqrt(n_pairs)
    return CouplingReport(variant, d, h, kstar, n_pairs, n_steps, seed,
                          exact_flow, ratios, ses, pred_disc, pred_limit)


# -- typical-set energy error and orbit depth -------------------------------------

@dataclass
class EnergyScanReport:
    d: int
    h: float
    alpha: float
    r: float
    K_m: int
    seed: int
    n_filtered: int
    n_drawn: int
    kstar: int | None
    Delta: float
    max_energy_error: float
    depth_agreement: float      # fraction of filtered samples at size 2^k*
    size_counts: dict

    def to_summary(self) -> dict:
        out = dict(self.__dict__)
        out["size_counts"] = {str(k): v for k, v in self.size_counts.items()}
        return out


def energy_error_scan(d: int, h: float, alpha: float, r: float,
                      n_samples: int, K_m: int, seed: int,
                      delta: float = 0.5) -> EnergyScanReport:
    """Draw (q, p) from the extended target, keep the typical-set filter
    D_alpha x E-test, and record orbit sizes and sup-energy errors."""
    target = std_gaussian(d)
    streams = StreamSet(seed)
    ws = OrbitWorkspace(d, K_m)
    kstar = predict_kstar(h, delta, K_m)
    params = delta_Delta(d, alpha, r, h)
    sizes: dict = {}
    emax = 0.0
    n_drawn = 0
    kept = 0
    while kept < n_samples:
        n_drawn += 1
        q = streams.noise.standard_normal(d)
        p = streams.noise.standard_normal(d)
        in_d, in_e = concentration_check(d, alpha, r, q, p)
        if not (in_d and in_e):
            continue
        kept += 1
        bits = streams.bits.integers(0, 2, K_m)
        orb = sample_orbit(target, PhasePoint(q, p), h, K_m, bits,
                           workspace=ws, copy_states=False)
        sizes[orb.size] = sizes.get(orb.size, 0) + 1
        emax = max(emax, orb.energy_error())
    agree = sizes.get(2**kstar, 0) / kept if kstar is not None else 0.0
    return EnergyScanReport(d, h, alpha, r, K_m, seed, kept, n_drawn, kstar,
                            params.Delta, emax, agree, sizes)


# -- mixing proxy -------------------------------------------------------------------

@dataclass
class MixingEntry:
    variant: str
    d: int
    h_nominal: float
    h: float
    kstar: int
    threshold: float
    n_chains: int
    seed: int
    iterations: int | None       # None = censored (no convergence within cap)
    grads_at_threshold: float    # log-interpolated crossing
    grads_total: int
    ks_trajectory: list = field(default_factory=list)

    def to_row(self) -> dict:
        return {
            "variant": self.variant, "d": self.d,
            "h_nominal": self.h_nominal, "h": self.h, "kstar": self.kstar,
            "threshold": self.threshold, "n_chains": self.n_chains,
            "seed": self.seed,
            "iterations": -1 if self.iterations is None else self.iterations,
            "grads_at_threshold": self.grads_at_threshold,
            "grads_total": self.grads_total,
        }


@dataclass
class MixingReport:
    entries: list
    exponents: dict              # variant -> fitted log-log slope
    grads_by_variant: dict       # variant -> seed-averaged grads per d
    d_grid: list

    def bps_le_mul(self) -> list:
        gm = self.grads_by_variant.get("nuts-mul")
        gb = self.grads_by_variant.get("nuts-bps")
        if gm is None or gb is None:
            return []
        return [b <= m for b, m in zip(gb, gm)]

    def to_summary(self) -> dict:
        return {
            "d_grid": self.d_grid,
            "exponents": self.exponents,
            "grads_by_variant": {k: [float(x) for x in v]
                                 for k, v in self.grads_by_variant.items()},
            "bps_le_mul": self.bps_le_mul(),
            "entries": [e.to_row() for e in self.entries],
        }


def snap_step_to_band_center(h_nominal: float, K_m: int) -> tuple:
    """Snap a nominal step size onto the grid h_k = (3 pi / 2) / (2^k - 1).

    These steps put the stopping rung at the centre of the (pi, 2 pi) band,
    equalizing the per-step contraction across dimensions; the caller logs
    nominal -> snapped.  Returns ``(h, k*)``.
    """
    best = None
    for k in range(2, K_m + 1):
        h = 1.5 * math.pi / (2**k - 1)
        cost = abs(math.log(h / h_nominal))
        if best is None or cost < best[0]:
            best = (cost, h, k)
    return best[1], best[2]


def mixing_proxy(variant: str, d: int, h: float, threshold: float,
                 n_chains: int, seed: int, K_m: int = 8,
                 max_iter: int = 80, h_nominal: float | None = None,
                 kstar: int | None = None) -> MixingEntry:
    """Run ``n_chains`` chains from the cold start |q0|^2 = d and return the
    first iteration at which both ensemble statistics (KS of |q|^2 against
    chi-square(d), KS of first coordinates against the standard normal) fall
    below ``threshold``, with the log-interpolated gradient count at the
    crossing.  Censored runs report ``iterations=None``.
    """
    if n_chains < 1000:
        raise ValueError("the KS proxy needs n_chains >= 1000")
    target = std_gaussian(d)
    cfg = KernelConfig(variant, h=h, seed=seed, K_m=K_m)
    chain_seeds = np.random.SeedSequence(seed).generate_state(n_chains, dtype=np.uint64)
    streams = [StreamSet(int(s)) for s in chain_seeds]
    ws = OrbitWorkspace(d, K_m)
    Q = np.tile(np.r_[math.sqrt(d), np.zeros(d - 1)], (n_chains, 1))
    chi2 = stats.chi2(d)
    grads = 0
    grads_hist = [0]
    ks_hist = [2.0]
    traj = []
    hit = None
    for it in range(1, max_iter + 1):
        for c in range(n_chains):
            Q[c], diag = nuts_step(cfg, target, Q[c], streams[c], workspace=ws)
            grads += diag.n_grad
        ks_r = stats.kstest(np.sum(Q * Q, axis=1), chi2.cdf).statistic
        ks_1 = stats.kstest(Q[:, 0], "norm").statistic
        m = max(ks_r, ks_1)
        grads_hist.append(grads)
        ks_hist.append(m)
        traj.append(float(m))
        if m < threshold:
            hit = it
            break
    if hit is None:
        g_cross = float(grads)
    else:
        k0, k1 = ks_hist[-2], ks_hist[-1]
        frac = (math.log(threshold) - math.log(k0)) / (math.log(k1) - math.log(k0))
        g_cross = grads_hist[-2] + frac * (grads_hist[-1] - grads_hist[-2])
    return MixingEntry(variant, d, h if h_nominal is None else h_nominal, h,
                       kstar if kstar is not None else (predict_kstar(h, 0.3, K_m) or -1),
                       threshold, n_chains, seed, hit, float(g_cross), grads, traj)


def mixing_study(d_grid, variants=("nuts-mul", "nuts-bps"), threshold: float = 0.05,
                 n_chains: int = 3000, seeds=(101, 102), K_m: int = 8,
                 h_scale: float = 0.4, max_iter: int = 80,
                 on_entry=None, precomputed: dict | None = None) -> MixingReport:
    """Dimension-scaling study: h follows h_scale * d^(-1/4) snapped to the
    band-center grid, gradients-to-threshold are averaged over seeds, and the
    log-log exponent is fitted per variant.

    ``on_entry`` (when given) is called with each finished MixingEntry
    (checkpoint hook); ``precomputed`` maps (variant, d, seed) to a stored
    entry row so interrupted sweeps resume instead of recomputing."""
    entries = []
    grads_by_variant = {}
    precomputed = precomputed or {}
    for variant in variants:
        per_d = []
        for d in d_grid:
            nominal = h_scale * d ** -0.25
            h, kstar = snap_step_to_band_center(nominal, K_m)
            gs = []
            for s in seeds:
                row = precomputed.get((variant, d, s))
                if row is not None:
                    e = MixingEntry(variant, d, row["h_nominal"], row["h"],
                                    row["kstar"], threshold, row["n_chains"], s,
                                    None if row["iterations"] < 0 else row["iterations"],
                                    row["grads_at_threshold"], row["grads_total"])
                else:
                    e = mixing_proxy(variant, d, h, threshold, n_chains, s,
                                     K_m=K_m, max_iter=max_iter,
                                     h_nominal=nominal, kstar=kstar)
                    if on_entry is not None:
                        on_entry(e)
                entries.append(e)
                gs.append(e.grads_at_threshold)
            per_d.append(float(np.mean(gs)))
        grads_by_variant[variant] = per_d
    if len(d_grid) >= 2:
        exps = {v: float(np.polyfit(np.log(d_grid), np.log(g), 1)[0])
                for v, g in grads_by_variant.items()}
    else:
        exps = {v: math.nan for v in grads_by_variant}
    return MixingReport(entries, exps, grads_by_variant, list(d_grid))


# -- tail probes ----------------------------------------------------------------------

@dataclass
class StayPutReport:
    beta: float
    c: float
    variant: str
    h: float
    K_m: int
    n_trials: int
    seed: int
    radii: list
    frequencies: list
    ses: list

    def monotone(self) -> bool:
        f = self.frequencies
        return all(f[i] <= f[i + 1] + 1e-12 for i in range(len(f) - 1))

    def to_summary(self) -> dict:
        out = dict(self.__dict__)
        out["monotone"] = self.monotone()
        return out


def stayput_probe(beta: float, c: float, radii, h: float, K_m: int,
                  n_trials: int, variant: str, seed: int, d: int = 1) -> StayPutReport:
    """Frequency of selecting index 0 for single NUTS steps started at
    q0 = R e1, over a radius grid."""
    target = power_law(c, beta, d)
    cfg = KernelConfig(variant, h=h, seed=seed, K_m=K_m)
    streams = StreamSet(seed)
    ws = OrbitWorkspace(d, K_m)
    freqs, ses = [], []
    for R in radii:
        q0 = np.zeros(d)
        q0[0] = float(R)
        stay = 0
        for _ in range(n_trials):
            _, diag = nuts_step(cfg, target, q0, streams, workspace=ws)
            stay += diag.stayed_put
        f = stay / n_trials
        freqs.append(f)
        ses.append(math.sqrt(max(f * (1 - f), 1e-12) / n_trials))
    return StayPutReport(beta, c, variant, h, K_m, n_trials, seed,
                         [float(R) for R in radii], freqs, ses)


@dataclass
class JumpBoundReport:
    h: float
    K_m: int
    n_trials: int
    seed: int
    grad_bound: float
    violations: int
    min_margin: float           # min over trials of bound - |q' - q|
    max_displacement: float

    def to_summary(self) -> dict:
        return dict(self.__dict__)


def jump_bound_probe(target: Target, h: float, K_m: int, n_trials: int,
                     seed: int, grad_bound: float,
                     start_scale: float = 5.0) -> JumpBoundReport:
    """Verify the one-step displacement bound |q' - q| <= |T| h |p| + (h T)^2 M
    for every realized (T, p), M the target's gradient bound."""
    cfg = KernelConfig("nuts-mul", h=h, seed=seed, K_m=K_m)
    streams = StreamSet(seed)
    ws = OrbitWorkspace(target.d, K_m)
    from .index_select import select_multinomial

    violations = 0
    min_margin = math.inf
    max_disp = 0.0
    for _ in range(n_trials):
        q0 = streams.noise.standard_normal(target.d) * start_scale
        p = streams.momentum.standard_normal(target.d)
        bits = streams.bits.integers(0, 2, K_m)
        us = streams.select.random(2 * K_m + 1)
        orb = sample_orbit(target, PhasePoint(q0, p), h, K_m, bits,
                           workspace=ws, copy_states=False)
        j = select_multinomial(orb, us[0])
        disp = float(np.linalg.norm(orb.qs[orb.row(j)] - q0))
        bound = abs(j) * h * float(np.linalg.norm(p)) + (h * j) ** 2 * grad_bound
        margin = bound - disp
        min_margin = min(min_margin, margin)
        max_disp = max(max_disp, disp)
        if disp > bound + 1e-12:
            violations += 1
    return JumpBoundReport(h, K_m, n_trials, seed, grad_bound, violations,
                           min_margin, max_disp)


def _raw_leapfrog(target: Target, q, p, h: float, n: int):
    """Guard-free leapfrog (states may overflow to inf; that is the point)."""
    q = q.astype(np.float64).copy()
    p = p.astype(np.float64).copy()
    out = []
    with np.errstate(over="ignore", invalid="ignore"):
        g = target.grad(q)
        for _ in range(n):
            p = p - 0.5 * h * g
            q = q + h * p
            g = target.grad(q)
            p = p - 0.5 * h * g
            out.append((q.copy(), p.copy()))
    return out


@dataclass
class TailGrowthReport:
    beta: float
    c: float
    h: float
    T: int
    gamma: float
    seed: int
    radii: list
    energy_gaps: list            # H_T - H_0 (nan when diverged/overflowed)
    normalized: list             # (H_T - H_0) / R^(beta (beta - 2))
    diverged: list
    loglog_slope: float | None
    alpha_q: list                # |alpha_q^j| from the one-dimensional recursion
    alpha_ratio_relerr: float | None   # |omega ratio| vs |alpha| at the largest clean R
    alpha_sign_consistent: bool | None

    def to_summary(self) -> dict:
        out = dict(self.__dict__)
        out["energy_gaps"] = [None if not math.isfinite(x) else x for x in self.energy_gaps]
        out["normalized"] = [None if not math.isfinite(x) else x for x in self.normalized]
        return out


def tail_energy_growth(beta: float, c: float, h: float, T: int, radii,
                       gamma: float | None = None, seed: int = 0,
                       d: int = 2) -> TailGrowthReport:
    """Deterministic sweep of the leapfrog energy blow-up H_T - H_0 from
    q0 = R e1, |p0| = R^gamma, over a radius grid.

    Runs without the divergence guard: float overflow at large R is recorded
    as divergence, not fatal.  Also tracks the q-parallel coefficient
    recursion a_q^{j+1} = -a_q^j C beta h^2/2 + h a_p^j,
    a_p^{j+1} = -a_q^{j+1} C beta h / 2 against the observed components
    (magnitudes compared; the sign convention is reported, not asserted).
    """
    if beta <= 2:
        raise ValueError("tail growth probe requires beta > 2")
    if T not in (1, 2, 3):
        raise ValueError("T must be in {1, 2, 3}")
    if gamma is None:
        gamma = min((beta - 2.0) / 2.0, 0.5)
    target = power_law(c, beta, d)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)

    # signed alpha recursion (base case alpha_q^1 = -C beta h^2 / 2)
    aq, ap = 1.0, 0.0
    alpha_q = []
    for _ in range(T):
        aq = -aq * c * beta * h * h / 2.0 + h * ap
        ap = -aq * c * beta * h / 2.0
        alpha_q.append(aq)

    gaps, normalized, diverged = [], [], []
    ratio_err = None
    sign_ok = None
    for R in radii:
        q0 = np.zeros(d)
        q0[0] = float(R)
        p0 = u * float(R) ** gamma
        H0 = hamiltonian(target, PhasePoint(q0, p0))
        states = _raw_leapfrog(target, q0, p0, h, T)
        qT, pT = states[-1]
        with np.errstate(over="ignore", invalid="ignore"):
            HT = c * np.linalg.norm(qT) ** beta + 0.5 * float(np.dot(pT, pT))
        gap = HT - H0
        bad = not math.isfinite(gap)
        gaps.append(float(gap) if not bad else math.nan)
        normalized.append(float(gap) / float(R) ** (beta * (beta - 2.0))
                          if not bad else math.nan)
        diverged.append(bad)
        if not bad:
            # omega_q^T / (|q0|^(beta-1) prod_{i<T} |q_i|^(beta-2)) -> alpha_q^T
            denom = float(R) ** (beta - 1.0)
            for i in range(T - 1):
                denom *= float(np.linalg.norm(states[i][0])) ** (beta - 2.0)
            omega = float(qT[0])  # component along q0-hat
            if math.isfinite(denom) and denom > 0:
                ratio = omega / denom
                ratio_err = abs(abs(ratio) - abs(alpha_q[-1])) / abs(alpha_q[-1])
                sign_ok = (ratio < 0) == (alpha_q[-1] < 0)
    clean = [(math.log(R), math.log(g)) for R, g in zip(radii, gaps)
             if math.isfinite(g) and g > 0]
    slope = None
    if len(clean) >= 2:
        xs, ys = zip(*clean)
        slope = float(np.polyfit(xs, ys, 1)[0])
    return TailGrowthReport(beta, c, h, T, gamma, seed,
                            [float(R) for R in radii], gaps, normalized,
                            diverged, slope, [float(a) for a in alpha_q],
                            ratio_err, sign_ok)


# -- Foster-Lyapunov drift ----------------------------------------------------------

@dataclass
class DriftReport:
    beta: float
    c: float
    a: float
    h: float
    K_m: int
    n_mc: int
    seed: int
    variant: str
    radii: list
    ratios: list                 # E[V_a(q')] / V_a(q) per radius
    ses: list

    def to_summary(self) -> dict:
        return dict(self.__dict__)


def drift_check(beta: float, c: float, a: float, radii, h: float, K_m: int,
                n_mc: int, seed: int, variant: str = "nuts-mul",
                d: int = 1) -> DriftReport:
    """Monte Carlo estimate of the drift ratio E[V_a(q')] / V_a(q) at
    q = R e1 for V_a(q) = exp(a |q|)."""
    if a <= 0:
        raise ValueError("a must be positive")
    target = power_law(c, beta, d)
    cfg = KernelConfig(variant, h=h, seed=seed, K_m=K_m)
    streams = StreamSet(seed)
    ws = OrbitWorkspace(d, K_m)
    ratios, ses = [], []
    for R in radii:
        q0 = np.zeros(d)
        q0[0] = float(R)
        v0 = math.exp(a * float(R))
        tot = 0.0
        tot2 = 0.0
        for _ in range(n_mc):
            q, _ = nuts_step(cfg, target, q0, streams, workspace=ws)
            v = math.exp(a * float(np.linalg.norm(q)))
            tot += v
            tot2 += v * v
        m = tot / n_mc
        sd = math.sqrt(max(tot2 / n_mc - m * m, 0.0) / n_mc)
        ratios.append(m / v0)
        ses.append(sd / v0)
    return DriftReport(beta, c, a, h, K_m, n_mc, seed, variant,
                       [float(R) for R in radii], ratios, ses)
