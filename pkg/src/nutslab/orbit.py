"""NUTS orbit selection: Bernoulli-direction doubling with dyadic U-turn
checks, plus exact pmf enumeration for testing.

Construction per step, starting from the singleton window {0}: draw a bit,
extend the index window forward (bit 0) or backward (bit 1) by its current
size, computing the new states incrementally from the stored extreme point.
Stopping has two flavours:

* a U-turn *inside* the freshly added half (any dyadic sub-window of the new
  half, its own full span included) rejects the doubling: the pre-doubling
  window is returned and the new states are discarded;
* a U-turn *across the ends* of the combined window stops further doubling
  but keeps the combined window.

The second rule is what guarantees that every orbit contains index 1 or -1
(the first doubling can never be rejected short of divergence) and that on
the Gaussian typical set the returned window has size 2^{k*} with
h(2^{k*}-1) in (pi, 2pi).

Divergence during an extension rejects that doubling like an inner U-turn
and flags the orbit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .integrator import GradientCounter, _extend_callback
from .targets import PhasePoint, Target, hamiltonian

STANDARD_RECURSIVE = "standard-recursive"
INNER_ONLY = "inner-only"

STOP_UTURN = "u-turn"
STOP_MAXDEPTH = "max-depth"


@dataclass(frozen=True)
class IndexInterval:
    """Contiguous signed index window [lo .. hi] of power-of-two length."""

    lo: int
    hi: int

    def __post_init__(self):
        n = self.hi - self.lo + 1
        if n < 1 or (n & (n - 1)) != 0:
            raise ValueError(f"interval [{self.lo}:{self.hi}] length {n} is not a power of two")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, j: int) -> bool:
        return self.lo <= j <= self.hi

    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)


def index_set_from_bits(v, K: int) -> IndexInterval:
    """B_K(v) = [-sum v_i 2^i : 2^K - sum v_i 2^i - 1] over the first K bits."""
    v = list(v)
    if K > len(v):
        raise ValueError(f"K={K} exceeds the number of bits ({len(v)})")
    lo = -sum(int(v[i]) << i for i in range(K))
    return IndexInterval(lo, (1 << K) + lo - 1)


@dataclass
class Orbit:
    """A materialized orbit: cached iterates over ``interval`` around index 0.

    Row ``i`` of ``qs``/``ps``/``log_weights`` corresponds to signed index
    ``interval.lo + i``; ``log_weights[j - lo] = -H`` at iterate j.
    ``last_half`` is the half added by the final accepted doubling.
    """

    anchor: PhasePoint
    interval: IndexInterval
    qs: np.ndarray
    ps: np.ndarray
    log_weights: np.ndarray
    bits: tuple
    depth: int
    last_half: IndexInterval | None
    stopped_by: str
    diverged: bool
    n_grad: int
    rejected_size: int = 0

    @property
    def size(self) -> int:
        return self.interval.size

    def row(self, j: int) -> int:
        if j not in self.interval:
            raise IndexError(f"index {j} outside orbit {self.interval}")
        return j - self.interval.lo

    def state(self, j: int) -> PhasePoint:
        r = self.row(j)
        return PhasePoint(self.qs[r], self.ps[r])

    def log_weight(self, j: int) -> float:
        return float(self.log_weights[self.row(j)])

    def energy_error(self) -> float:
        """max_j |H_j - H_0| over the kept orbit."""
        return float(np.max(np.abs(self.log_weights - self.log_weight(0))))

    def diagnostic_record(self) -> dict:
        return {
            "lo": self.interval.lo,
            "hi": self.interval.hi,
            "depth": self.depth,
            "stopped_by": self.stopped_by,
            "diverged": self.diverged,
            "energy_error": self.energy_error(),
            "n_grad": self.n_grad,
        }


# -- U-turn criterion ---------------------------------------------------------

def _dyadic_windows(size: int, include_full: bool) -> list:
    """Aligned dyadic (start, end) index pairs inside [0, size)."""
    out = []
    m = 2
    top = size if include_full else size // 2
    while m <= top:
        for a in range(0, size, m):
            out.append((a, a + m - 1))
        m *= 2
    return out


def _window_triggers(qs, ps, starts, ends) -> bool:
    """Any window with p+.(q+ - q-) < 0 or p-.(q+ - q-) < 0 (strict)."""
    dq = qs[ends] - qs[starts]
    if np.any(np.einsum("ij,ij->i", ps[ends], dq) < 0.0):
        return True
    return bool(np.any(np.einsum("ij,ij->i", ps[starts], dq) < 0.0))


def u_turn_triggered(qs, ps, mode: str = STANDARD_RECURSIVE) -> bool:
    """U-turn predicate over a stacked index window (row order = index order).

    ``standard-recursive`` checks every aligned dyadic sub-window at every
    level, the full window included (classical doubling semantics).
    ``inner-only`` restricts to sub-windows of span at most half the input,
    leaving out the full-interval check; kept for fidelity comparisons.
    Ties do not trigger: the inequalities are strict.
    """
    qs = np.atleast_2d(np.asarray(qs, dtype=np.float64))
    ps = np.atleast_2d(np.asarray(ps, dtype=np.float64))
    size = qs.shape[0]
    if size < 2 or (size & (size - 1)) != 0:
        raise ValueError("interval length must be a power of two >= 2")
    if mode not in (STANDARD_RECURSIVE, INNER_ONLY):
        raise ValueError(f"unknown U-turn mode {mode!r}")
    wins = _dyadic_windows(size, include_full=(mode == STANDARD_RECURSIVE))
    if not wins:
        return False
    starts = np.fromiter((w[0] for w in wins), dtype=np.intp)
    ends = np.fromiter((w[1] for w in wins), dtype=np.intp)
    return _window_triggers(qs, ps, starts, ends)


# -- orbit sampling ------------------------------------------------------------

class OrbitWorkspace:
    """Reusable state buffers for one chain (avoids per-step allocation)."""

    def __init__(self, d: int, K_m: int):
        rows = 2 ** (K_m + 1) - 1
        self.d = d
        self.K_m = K_m
        self.offset = 2**K_m - 1
        self.qs = np.empty((rows, d))
        self.ps = np.empty((rows, d))
        self.logw = np.empty(rows)
        self.g_lo = np.empty(d)
        self.g_hi = np.empty(d)
        self.g_new = np.empty(d)


def _normalize_bits(bit_source, K_m: int) -> np.ndarray:
    if isinstance(bit_source, np.random.Generator):
        return bit_source.integers(0, 2, size=K_m).astype(np.int64)
    bits = np.asarray(list(bit_source), dtype=np.int64)
    if bits.shape[0] < K_m:
        raise ValueError(f"need at least K_m={K_m} bits, got {bits.shape[0]}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    return bits[:K_m]


def sample_orbit(target: Target, anchor: PhasePoint, h: float, K_m: int,
                 bit_source, workspace: OrbitWorkspace | None = None,
                 counter: GradientCounter | None = None,
                 copy_states: bool = True) -> Orbit:
    """Sample the orbit kernel at ``anchor``.

    ``bit_source`` is an explicit seeded ``numpy.random.Generator`` (exactly
    K_m bits are consumed) or a bit sequence, never global state.  With
    ``copy_states=False`` the returned arrays are views into ``workspace``
    and are only valid until its next use.
    """
    if K_m < 1:
        raise ValueError("K_m must be >= 1")
    if h <= 0:
        raise ValueError("h must be positive")
    ws = workspace if workspace is not None else OrbitWorkspace(target.d, K_m)
    if ws.d != target.d or ws.K_m < K_m:
        raise ValueError("workspace does not match (d, K_m)")
    bits = _normalize_bits(bit_source, K_m)

    off = ws.offset
    ws.qs[off] = anchor.q
    ws.ps[off] = anchor.p
    h0 = hamiltonian(target, anchor)
    ws.logw[off] = -h0
    g0 = target.grad(anchor.q)
    ws.g_lo[:] = g0
    ws.g_hi[:] = g0
    n_grad = 1

    lo = hi = 0
    last_half = None
    depth = 0
    stopped_by = STOP_MAXDEPTH
    diverged = False
    rejected_size = 0
    bits_used = []

    for k in range(K_m):
        bit = int(bits[k])
        bits_used.append(bit)
        size = hi - lo + 1
        if bit == 0:
            new_lo, new_hi = hi + 1, hi + size
            edge_row = off + hi
            rows = slice(off + new_lo, off + new_hi + 1)
            out_q = ws.qs[rows]
            out_p = ws.ps[rows]
            out_w = ws.logw[rows]
            sign = 1.0
            g_edge = ws.g_hi
        else:
            new_lo, new_hi = lo - size, lo - 1
            edge_row = off + lo
            rows = slice(off + new_lo, off + new_hi + 1)
            out_q = ws.qs[rows][::-1]
            out_p = ws.ps[rows][::-1]
            out_w = ws.logw[rows][::-1]
            sign = -1.0
            g_edge = ws.g_lo

        if target.jit_compatible:
            n_done, div = kernels.extend(
                target.kind_code, target.aux, ws.qs[edge_row], ws.ps[edge_row],
                g_edge, sign * h, size, out_q, out_p, out_w, ws.g_new)
        else:
            n_done, div = _extend_callback(
                target, ws.qs[edge_row], ws.ps[edge_row], g_edge, sign * h,
                size, out_q, out_p, out_w, ws.g_new)
        n_grad += n_done + (1 if div else 0)

        if div:
            diverged = True
            stopped_by = STOP_UTURN
            rejected_size = size
            break

        if size >= 2:
            wins = _dyadic_windows(size, include_full=True)
            starts = np.fromiter((w[0] for w in wins), dtype=np.intp) + (off + new_lo)
            ends = np.fromiter((w[1] for w in wins), dtype=np.intp) + (off + new_lo)
            if _window_triggers(ws.qs, ws.ps, starts, ends):
                stopped_by = STOP_UTURN
                rejected_size = size
                break

        # doubling accepted
        lo, hi = min(lo, new_lo), max(hi, new_hi)
        last_half = IndexInterval(new_lo, new_hi)
        depth += 1
        if bit == 0:
            ws.g_hi[:] = ws.g_new
        else:
            ws.g_lo[:] = ws.g_new

        # across-the-ends check on the combined window: stop but keep
        a, b = np.intp(off + lo), np.intp(off + hi)
        if _window_triggers(ws.qs, ws.ps, np.array([a]), np.array([b])):
            stopped_by = STOP_UTURN
            break

    if counter is not None:
        counter.add(n_grad)

    rows = slice(off + lo, off + hi + 1)
    qs, ps, lws = ws.qs[rows], ws.ps[rows], ws.logw[rows]
    if copy_states:
        qs, ps, lws = qs.copy(), ps.copy(), lws.copy()
    return Orbit(
        anchor=anchor,
        interval=IndexInterval(lo, hi),
        qs=qs, ps=ps, log_weights=lws,
        bits=tuple(bits_used),
        depth=depth,
        last_half=last_half,
        stopped_by=stopped_by,
        diverged=diverged,
        n_grad=n_grad,
        rejected_size=rejected_size,
    )


# -- exact pmf by enumeration ---------------------------------------------------

def orbit_distribution(target: Target, anchor: PhasePoint, h: float, K_m: int) -> dict:
    """Exact orbit-kernel pmf {(lo, hi): probability} by enumerating all
    2^K_m bit strings (each outcome weighted 2^-K_m; strings sharing the
    consumed prefix collapse onto the same orbit)."""
    if K_m > 12:
        raise ValueError("exhaustive enumeration limited to K_m <= 12")
    ws = OrbitWorkspace(target.d, K_m)
    out: dict = {}
    for code in range(1 << K_m):
        bits = [(code >> i) & 1 for i in range(K_m)]
        orb = sample_orbit(target, anchor, h, K_m, bits,
                           workspace=ws, copy_states=False)
        key = (orb.interval.lo, orb.interval.hi)
        out[key] = out.get(key, 0.0) + 0.5**K_m
    return out


def orbit_pmf(target: Target, anchor: PhasePoint, h: float, K_m: int,
              J: IndexInterval) -> float:
    """Exact probability that sample_orbit returns the window J."""
    return orbit_distribution(target, anchor, h, K_m).get((J.lo, J.hi), 0.0)
