"""Leapfrog map and signed iteration.

One leapfrog step is the half-kick / drift / half-kick composition

    p <- p - (h/2) grad U(q);   q <- q + h p;   p <- p - (h/2) grad U(q)

Negative iteration counts apply the exact inverse map (kick(-h/2), drift(-h),
kick(-h/2) per step) rather than momentum-flip conjugation; the equivalence
of the two is a test, not an implementation detail.

Gradient accounting: the closing half-kick's gradient is reused as the next
opening half-kick, so an n-step trajectory costs n+1 gradient evaluations.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .targets import PhasePoint, Target

DIVERGENCE_LIMIT = kernels.DIVERGENCE_LIMIT


class DivergenceError(RuntimeError):
    """Trajectory blew past the divergence limit.

    ``step_index`` is the signed index of the first bad leapfrog iterate.
    """

    def __init__(self, step_index: int):
        super().__init__(f"leapfrog divergence at step index {step_index}")
        self.step_index = step_index


class GradientCounter:
    """Monotone counter of gradient evaluations (per-chain local)."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, n: int):
        if n < 0:
            raise ValueError("gradient counter never decreases")
        self.count += n


def _check_h(h):
    if not (h > 0):
        raise ValueError(f"step size must be positive, got {h}")


def leapfrog_trajectory(target: Target, s: PhasePoint, h: float, n: int,
                        direction: int = 1, counter: GradientCounter | None = None,
                        grad_start: np.ndarray | None = None):
    """Record ``n`` leapfrog iterates from ``s`` in the given direction.

    Returns ``(qs, ps, logws, n_done, grad_end)`` where row ``i`` holds the
    state after ``i+1`` signed steps and ``logws[i] = -H`` there.  On
    divergence ``n_done < n`` and ``grad_end`` is None.  Costs ``n_done + 1``
    gradients (or ``n_done`` when ``grad_start`` is supplied).
    """
    _check_h(h)
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if s.d != target.d:
        raise ValueError("phase point dimension mismatch")
    d = target.d
    out_q = np.empty((n, d))
    out_p = np.empty((n, d))
    out_logw = np.empty(n)
    out_g = np.empty(d)
    if grad_start is None:
        g0 = target.grad(s.q)
        fresh = 1
    else:
        g0 = np.asarray(grad_start, dtype=np.float64)
        fresh = 0
    if target.jit_compatible:
        n_done, diverged = kernels.extend(
            target.kind_code, target.aux, s.q, s.p, g0, direction * h, n,
            out_q, out_p, out_logw, out_g)
    else:
        n_done, diverged = _extend_callback(
            target, s.q, s.p, g0, direction * h, n,
            out_q, out_p, out_logw, out_g)
    if counter is not None:
        counter.add(fresh + n_done + (1 if diverged else 0))
    grad_end = None if diverged else out_g
    return out_q[:n_done], out_p[:n_done], out_logw[:n_done], n_done, grad_end


def _extend_callback(target, q0, p0, g0, hs, n_steps,
                     out_q, out_p, out_logw, out_g):
    # numpy path for callback targets (PerturbedGaussian); mirrors kernels
    q, p, g = q0.copy(), p0.copy(), g0.copy()
    half = 0.5 * hs
    for step in range(n_steps):
        p -= half * g
        q += hs * p
        try:
            g = target.grad(q)
            u = target.potential(q)
        except ValueError:
            return step, True
        p -= half * g
        h_val = u + 0.5 * float(np.dot(p, p))
        if not (abs(h_val) <= DIVERGENCE_LIMIT) \
                or np.max(np.abs(q)) > DIVERGENCE_LIMIT \
                or np.max(np.abs(p)) > DIVERGENCE_LIMIT:
            return step, True
        out_q[step] = q
        out_p[step] = p
        out_logw[step] = -h_val
    out_g[:] = g
    return n_steps, False


def leapfrog_step(target: Target, s: PhasePoint, h: float,
                  counter: GradientCounter | None = None) -> PhasePoint:
    """One forward leapfrog step (2 gradient evaluations)."""
    return leapfrog_iterate(target, s, h, 1, counter=counter)


def leapfrog_iterate(target: Target, s: PhasePoint, h: float, j: int,
                     counter: GradientCounter | None = None) -> PhasePoint:
    """The j-fold leapfrog map; j < 0 applies the exact inverse, j = 0 is identity."""
    _check_h(h)
    if abs(j) > 2**31:
        raise ValueError("|j| too large")
    if j == 0:
        if counter is not None:
            counter.add(0)
        return s
    direction = 1 if j > 0 else -1
    qs, ps, logws, n_done, _ = leapfrog_trajectory(
        target, s, h, abs(j), direction, counter=counter)
    if n_done < abs(j):
        raise DivergenceError(direction * (n_done + 1))
    return PhasePoint(qs[-1], ps[-1])


def gaussian_step_angle(h: float) -> float:
    """Per-step rotation angle factor beta_h = arccos(1 - h^2/2) / h.

    The single leapfrog step on the standard Gaussian is conjugate to a
    rotation by h * beta_h; requires 0 < h < 2 (stability limit).
    """
    if not (0 < h < 2):
        raise ValueError(f"leapfrog on the Gaussian is unstable for h={h}; need 0 < h < 2")
    return float(np.arccos(1.0 - 0.5 * h * h) / h)
