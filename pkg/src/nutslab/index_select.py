"""Index selection over a sampled orbit: multinomial (Boltzmann weights over
the whole window) and biased progressive sampling (level-wise swap with
ratio R, favouring the last-doubled half).

All weight arithmetic is done in log space with max-shift; heavy-tail probes
routinely produce H ranges of hundreds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .orbit import IndexInterval, Orbit, index_set_from_bits


def _logsumexp(logw: np.ndarray) -> float:
    m = float(np.max(logw))
    return m + float(np.log(np.sum(np.exp(logw - m))))


def _softmax(logw: np.ndarray) -> np.ndarray:
    z = np.exp(logw - np.max(logw))
    return z / z.sum()


@dataclass(frozen=True)
class IndexPmf:
    """Probabilities over a contiguous index window (aligned to interval)."""

    interval: IndexInterval
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape[0] != self.interval.size:
            raise ValueError("probs not aligned to interval")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", p)

    def prob(self, j: int) -> float:
        return float(self.probs[j - self.interval.lo]) if j in self.interval else 0.0


@dataclass(frozen=True)
class BpsLevel:
    old: IndexInterval
    new: IndexInterval
    ratio: float
    swapped: bool | None = None  # None when derived from the expanded pmf


@dataclass(frozen=True)
class BpsTrace:
    levels: tuple


def progress_ratio(logw_old, logw_new) -> float:
    """R = 1 ^ [pi~(I_new) / pi~(I_old)] from log-weights of the two halves."""
    logw_old = np.asarray(logw_old, dtype=np.float64)
    logw_new = np.asarray(logw_new, dtype=np.float64)
    if logw_old.size == 0 or logw_new.size == 0:
        raise ValueError("both weight lists must be nonempty")
    return min(1.0, float(np.exp(_logsumexp(logw_new) - _logsumexp(logw_old))))


def multinomial_pmf(orbit: Orbit) -> IndexPmf:
    """q^MUL: probs[j] proportional to exp(-H_j) over the whole orbit."""
    return IndexPmf(orbit.interval, _softmax(orbit.log_weights))


def _level_intervals(bits, depth: int) -> list:
    """(I_old_k, I_new_k) for each accepted doubling level k."""
    out = []
    for k in range(depth):
        old = index_set_from_bits(bits, k)
        size = old.size
        if bits[k] == 0:
            new = IndexInterval(old.hi + 1, old.hi + size)
        else:
            new = IndexInterval(old.lo - size, old.lo - 1)
        out.append((old, new))
    return out


def bps_trace(orbit: Orbit) -> BpsTrace:
    """Per-level (I_old, I_new, R) reconstructed from the orbit's weights."""
    lo = orbit.interval.lo
    lw = orbit.log_weights
    levels = []
    for old, new in _level_intervals(orbit.bits, orbit.depth):
        r = progress_ratio(lw[old.lo - lo: old.hi - lo + 1],
                           lw[new.lo - lo: new.hi - lo + 1])
        levels.append(BpsLevel(old, new, r))
    return BpsTrace(tuple(levels))


def bps_pmf(orbit: Orbit) -> IndexPmf:
    """q^BPS in expanded form: level k carries weight
    R_k * prod_{l>k} (1 - R_l) spread multinomially over I_new_k, and the
    residual prod_l (1 - R_l) sits at index 0.  Exactly one additive term
    covers each index (the new halves are disjoint)."""
    if orbit.last_half is None and orbit.depth > 0:
        raise ValueError("orbit lacks its construction trace")
    lo = orbit.interval.lo
    lw = orbit.log_weights
    probs = np.zeros(orbit.size)
    trace = bps_trace(orbit)
    ratios = [lv.ratio for lv in trace.levels]
    tail = 1.0  # prod_{l>k} (1 - R_l), built from the top level down
    contrib = np.empty(len(ratios))
    for k in range(len(ratios) - 1, -1, -1):
        contrib[k] = ratios[k] * tail
        tail *= 1.0 - ratios[k]
    for k, lv in enumerate(trace.levels):
        sl = slice(lv.new.lo - lo, lv.new.hi - lo + 1)
        probs[sl] = contrib[k] * _softmax(lw[sl])
    probs[0 - lo] += tail  # residual mass at the starting index
    return IndexPmf(orbit.interval, probs)


def _inverse_cdf(probs: np.ndarray, u: float) -> int:
    c = np.cumsum(probs)
    return int(np.searchsorted(c, u * c[-1], side="right").clip(0, probs.shape[0] - 1))


def select_multinomial(orbit: Orbit, u: float) -> int:
    """One multinomial draw via inverse CDF on a single uniform."""
    return orbit.interval.lo + _inverse_cdf(_softmax(orbit.log_weights), u)


def bps_sample_online(orbit: Orbit, uniform_source):
    """Progressive selection: one candidate index, swapped into each accepted
    half with probability R_k (a multinomial draw within that half).

    ``uniform_source`` is a Generator or a sequence supplying two uniforms
    per level (swap decision, then the within-half draw); exactly
    ``2 * depth`` are consumed.  The returned index is distributed exactly
    as ``bps_pmf`` of the same orbit.  A 2-d uniform array of shape
    ``(n, 2 * depth)`` yields n independent draws at once.
    """
    if isinstance(uniform_source, np.random.Generator):
        us = uniform_source.random(2 * orbit.depth)
    else:
        us = np.asarray(uniform_source, dtype=np.float64)
        if us.ndim == 2:
            return _bps_sample_batch(orbit, us)
        if us.shape[0] < 2 * orbit.depth:
            raise ValueError("need 2 uniforms per level")
    lo = orbit.interval.lo
    lw = orbit.log_weights
    candidate = 0
    for k, (old, new) in enumerate(_level_intervals(orbit.bits, orbit.depth)):
        r = progress_ratio(lw[old.lo - lo: old.hi - lo + 1],
                           lw[new.lo - lo: new.hi - lo + 1])
        if us[2 * k] < r:
            sl = slice(new.lo - lo, new.hi - lo + 1)
            candidate = new.lo + _inverse_cdf(_softmax(lw[sl]), us[2 * k + 1])
    return candidate


def _bps_sample_batch(orbit: Orbit, us: np.ndarray) -> np.ndarray:
    if us.shape[1] < 2 * orbit.depth:
        raise ValueError("need 2 uniforms per level")
    lo = orbit.interval.lo
    lw = orbit.log_weights
    candidates = np.zeros(us.shape[0], dtype=np.int64)
    for k, (old, new) in enumerate(_level_intervals(orbit.bits, orbit.depth)):
        r = progress_ratio(lw[old.lo - lo: old.hi - lo + 1],
                           lw[new.lo - lo: new.hi - lo + 1])
        swap = us[:, 2 * k] < r
        c = np.cumsum(_softmax(lw[new.lo - lo: new.hi - lo + 1]))
        draws = new.lo + np.searchsorted(
            c, us[:, 2 * k + 1] * c[-1], side="right").clip(0, new.size - 1)
        candidates = np.where(swap, draws, candidates)
    return candidates
