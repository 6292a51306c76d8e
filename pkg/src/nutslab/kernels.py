"""Hot inner loops: leapfrog trajectory extension with state recording.

Two interchangeable implementations live here: a numba-compiled scalar loop
(:func:`_extend_jit`) and a vectorized numpy twin (:func:`_extend_np`).
:func:`extend` dispatches on the backend selected in :mod:`nutslab.backend`.
Everything above this layer (orbit doubling, U-turn checks, selection) is
plain numpy and shared between backends.

Contract of an extension call: starting from the edge state ``(q, p)`` with
cached gradient ``g = grad U(q)``, march ``n_steps`` leapfrog steps of signed
step ``hs`` (negative = exact inverse map), writing each new state and its
log-weight ``-H`` into the output rows.  Exactly one fresh gradient is
evaluated per completed step (the closing half-kick's gradient doubles as the
next opening one).  Returns ``(n_done, diverged)``; on divergence the failing
state is not recorded.
"""
from __future__ import annotations

import numpy as np

from .backend import jit_kernel, use_numba

#: any |H| or |coordinate| beyond this aborts the trajectory (divergence)
DIVERGENCE_LIMIT = 1.0e10


def _extend_loop(kind, aux, q0, p0, g0, hs, n_steps,
                 out_q, out_p, out_logw, out_g, div):
    d = q0.shape[0]
    q = q0.copy()
    p = p0.copy()
    g = g0.copy()
    half = 0.5 * hs
    for step in range(n_steps):
        for i in range(d):
            p[i] -= half * g[i]
        for i in range(d):
            q[i] += hs * p[i]
        if kind == 0:  # diagonal Gaussian: aux = 1/sigma_i^2
            u = 0.0
            for i in range(d):
                g[i] = aux[i] * q[i]
                u += q[i] * g[i]
            u *= 0.5
        else:  # power law: aux = (C, beta)
            r2 = 0.0
            for i in range(d):
                r2 += q[i] * q[i]
            r = np.sqrt(r2)
            c = aux[0]
            beta = aux[1]
            if r == 0.0:
                if beta < 2.0:
                    return step, True  # singular gradient at the origin
                coef = 0.0
                u = 0.0
            else:
                coef = c * beta * r ** (beta - 2.0)
                u = c * r ** beta
            for i in range(d):
                g[i] = coef * q[i]
        for i in range(d):
            p[i] -= half * g[i]
        ke = 0.0
        for i in range(d):
            ke += p[i] * p[i]
        h_val = u + 0.5 * ke
        bad = not (np.abs(h_val) <= div)  # catches NaN as well
        if not bad:
            for i in range(d):
                if np.abs(q[i]) > div or np.abs(p[i]) > div:
                    bad = True
                    break
        if bad:
            return step, True
        out_q[step, :] = q
        out_p[step, :] = p
        out_logw[step] = -h_val
    out_g[:] = g
    return n_steps, False


_extend_jit = jit_kernel(_extend_loop)


def _extend_np(kind, aux, q0, p0, g0, hs, n_steps,
               out_q, out_p, out_logw, out_g, div):
    q = q0.copy()
    p = p0.copy()
    g = g0.copy()
    half = 0.5 * hs
    for step in range(n_steps):
        p -= half * g
        q += hs * p
        if kind == 0:
            g = aux * q
            u = 0.5 * float(np.dot(q, g))
        else:
            c, beta = aux[0], aux[1]
            r = float(np.linalg.norm(q))
            if r == 0.0:
                if beta < 2.0:
                    return step, True
                g = np.zeros_like(q)
                u = 0.0
            else:
                g = (c * beta * r ** (beta - 2.0)) * q
                u = c * r ** beta
        p -= half * g
        h_val = u + 0.5 * float(np.dot(p, p))
        if not (abs(h_val) <= div) or np.max(np.abs(q)) > div or np.max(np.abs(p)) > div:
            return step, True
        out_q[step] = q
        out_p[step] = p
        out_logw[step] = -h_val
    out_g[:] = g
    return n_steps, False


_USE_JIT = use_numba()


def extend(kind, aux, q, p, g, hs, n_steps, out_q, out_p, out_logw, out_g,
           div=DIVERGENCE_LIMIT):
    """Run one trajectory extension on the selected backend."""
    impl = _extend_jit if _USE_JIT else _extend_np
    return impl(kind, aux, q, p, g, hs, int(n_steps),
                out_q, out_p, out_logw, out_g, div)
