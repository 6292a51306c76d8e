"""Full Markov kernels: NUTS with multinomial or biased-progressive index
selection, Metropolis-corrected HMC, and the idealized randomized-HMC
kernels (leapfrog with a random signed step count drawn from the variant's
time law; standard Gaussian targets only).

RNG architecture: one master seed spawns four independent named streams per
chain (momentum, orbit bits, selection uniforms, experiment noise).  Each
NUTS step consumes a fixed budget from every stream (d normals, K_m bits,
2 K_m + 1 uniforms) regardless of the realized orbit, so two chains sharing
streams stay synchronized step for step while their positions differ; stream
identity is the coupling contract.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .integrator import GradientCounter, leapfrog_trajectory
from .index_select import bps_pmf, bps_sample_online, multinomial_pmf, select_multinomial
from .orbit import OrbitWorkspace, sample_orbit
from .targets import PhasePoint, Target, hamiltonian
from .theory import time_law_pmf

NUTS_MUL = "nuts-mul"
NUTS_BPS = "nuts-bps"
HMC = "hmc"
IDEAL_MUL = "ideal-mul"
IDEAL_BPS = "ideal-bps"

VARIANTS = (NUTS_MUL, NUTS_BPS, HMC, IDEAL_MUL, IDEAL_BPS)


@dataclass(frozen=True)
class KernelConfig:
    variant: str
    h: float
    seed: int
    K_m: int = 8
    T: int | None = None        # HMC step count
    kstar: int | None = None    # ideal-kernel depth

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.variant in (NUTS_MUL, NUTS_BPS) and not (1 <= self.K_m <= 12):
            raise ValueError("K_m must lie in [1, 12] for NUTS variants")
        if self.variant == HMC and (self.T is None or self.T < 1):
            raise ValueError("HMC requires T >= 1")
        if self.variant in (IDEAL_MUL, IDEAL_BPS) and (self.kstar is None or self.kstar < 1):
            raise ValueError("ideal kernels require kstar >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")


class StreamSet:
    """Four named generators split from one seed."""

    NAMES = ("momentum", "bits", "select", "noise")

    def __init__(self, seed: int):
        self.seed = int(seed)
        children = np.random.SeedSequence(self.seed).spawn(4)
        self.momentum = np.random.Generator(np.random.Philox(children[0]))
        self.bits = np.random.Generator(np.random.Philox(children[1]))
        self.select = np.random.Generator(np.random.Philox(children[2]))
        self.noise = np.random.Generator(np.random.Philox(children[3]))


@dataclass(frozen=True)
class StepDiagnostics:
    selected_index: int
    depth: int
    stop_reason: str
    energy_error: float
    n_grad: int
    accept_event: bool
    stayed_put: bool
    diverged: bool = False


@dataclass
class ChainTrace:
    variant: str
    seed: int
    q0: np.ndarray
    positions: np.ndarray             # (n_steps, d): post-step positions
    diagnostics: list = field(default_factory=list)
    n_grad: int = 0

    def __len__(self):
        return self.positions.shape[0]

    def to_jsonl(self, path, positions: str = "full", header: dict | None = None):
        """One record per step; ``positions`` is 'full' or 'hash'.

        ``header`` (config hash / seed / version) becomes the first record.
        """
        if positions not in ("full", "hash"):
            raise ValueError("positions must be 'full' or 'hash'")
        with open(path, "w") as fh:
            if header is not None:
                fh.write(json.dumps({"header": header}) + "\n")
            for i, diag in enumerate(self.diagnostics):
                rec = {
                    "step": i,
                    "selected_index": diag.selected_index,
                    "depth": diag.depth,
                    "stop_reason": diag.stop_reason,
                    "energy_error": diag.energy_error,
                    "n_grad": diag.n_grad,
                    "accept_event": diag.accept_event,
                    "stayed_put": diag.stayed_put,
                    "diverged": diag.diverged,
                }
                q = self.positions[i]
                if positions == "full":
                    rec["q"] = [float(x) for x in q]
                else:
                    rec["q_sha256"] = hashlib.sha256(q.tobytes()).hexdigest()
                fh.write(json.dumps(rec) + "\n")

    def summary(self) -> dict:
        q = self.positions
        diags = self.diagnostics
        n = max(len(diags), 1)
        return {
            "variant": self.variant,
            "seed": self.seed,
            "n_steps": len(diags),
            "d": int(q.shape[1]),
            "n_grad": int(self.n_grad),
            "mean_sq_radius": float(np.mean(np.sum(q * q, axis=1))),
            "mean_first_coord": float(np.mean(q[:, 0])),
            "stay_rate": sum(d.stayed_put for d in diags) / n,
            "accept_rate": sum(d.accept_event for d in diags) / n,
            "divergence_rate": sum(d.diverged for d in diags) / n,
        }


# -- NUTS -------------------------------------------------------------------------

def nuts_step(cfg: KernelConfig, target: Target, q: np.ndarray,
              streams: StreamSet, workspace: OrbitWorkspace | None = None):
    """One NUTS transition: fresh momentum, orbit doubling, index selection.

    Returns ``(q', StepDiagnostics)``.  Divergence is propagated through the
    diagnostics, never raised.
    """
    if cfg.variant not in (NUTS_MUL, NUTS_BPS):
        raise ValueError("nuts_step requires a NUTS variant")
    d = target.d
    p = streams.momentum.standard_normal(d)
    bits = streams.bits.integers(0, 2, size=cfg.K_m)
    us = streams.select.random(2 * cfg.K_m + 1)

    anchor = PhasePoint(np.asarray(q, dtype=np.float64), p)
    orbit = sample_orbit(target, anchor, cfg.h, cfg.K_m, bits,
                         workspace=workspace, copy_states=False)
    if cfg.variant == NUTS_MUL:
        j = select_multinomial(orbit, us[0])
        pmf = multinomial_pmf(orbit)
        support = orbit.interval
    else:
        j = bps_sample_online(orbit, us[1:])
        pmf = bps_pmf(orbit)
        support = orbit.last_half if orbit.last_half is not None else orbit.interval
    # ideal-reduction accept event: the uniform part of the selection law
    # restricted to the ideal support (whole orbit for mul, I_last for bps)
    sl = slice(support.lo - orbit.interval.lo, support.hi - orbit.interval.lo + 1)
    thr = support.size * float(np.min(pmf.probs[sl]))
    accept = bool(streams.noise.random() <= thr)

    q_next = orbit.qs[orbit.row(j)].copy()
    diag = StepDiagnostics(
        selected_index=j,
        depth=orbit.depth,
        stop_reason=orbit.stopped_by,
        energy_error=orbit.energy_error(),
        n_grad=orbit.n_grad,
        accept_event=accept,
        stayed_put=(j == 0),
        diverged=orbit.diverged,
    )
    return q_next, diag


# -- Metropolis-corrected HMC -------------------------------------------------------

def hmc_step(target: Target, q: np.ndarray, h: float, T: int,
             streams: StreamSet, counter: GradientCounter | None = None):
    """One HMC transition with a fresh momentum draw and MH correction.

    The acceptance ratio compares H at (q, P_fresh) against the proposal
    (the standard algorithm).  Divergence auto-rejects.  Returns
    ``(q', accepted, diverged)``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    q = np.asarray(q, dtype=np.float64)
    p = streams.momentum.standard_normal(target.d)
    u = streams.select.random()
    h0 = hamiltonian(target, PhasePoint(q, p))
    qs, ps, logws, n_done, _ = leapfrog_trajectory(
        target, PhasePoint(q, p), h, T, 1, counter=counter)
    if n_done < T:
        return q, False, True
    h1 = -logws[-1]
    if u < np.exp(min(0.0, h0 - h1)):
        return qs[-1].copy(), True, False
    return q, False, False


# -- idealized randomized-HMC kernels -----------------------------------------------

def _require_std_gaussian(target: Target):
    if not (target.kind_code == 0 and np.all(target.aux == 1.0)):
        raise ValueError("ideal kernels are defined for the standard Gaussian only")


_law_cache: dict = {}


def _cached_law(variant: str, kstar: int):
    key = (variant, kstar)
    if key not in _law_cache:
        law = time_law_pmf(variant, kstar)
        _law_cache[key] = (law, law.cdf())
    return _law_cache[key]


def ideal_step(variant: str, target: Target, q: np.ndarray, h: float,
               kstar: int, streams: StreamSet,
               counter: GradientCounter | None = None):
    """One ideal-kernel transition: T ~ time law, then the signed leapfrog map.

    Returns ``(q', T)``.
    """
    _require_std_gaussian(target)
    law_variant = "mul" if variant in (IDEAL_MUL, "mul") else "bps"
    law, cdf = _cached_law(law_variant, kstar)
    q = np.asarray(q, dtype=np.float64)
    p = streams.momentum.standard_normal(target.d)
    u = streams.select.random()
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right").clip(0, cdf.shape[0] - 1))
    T = int(law.T_values[i])
    if T == 0:
        return q.copy(), 0
    qs, _, _, n_done, _ = leapfrog_trajectory(
        target, PhasePoint(q, p), h, abs(T), 1 if T > 0 else -1, counter=counter)
    if n_done < abs(T):  # cannot happen on the Gaussian at stable h
        return q.copy(), T
    return qs[-1].copy(), T


# -- chain driver --------------------------------------------------------------------

def run_chain(cfg: KernelConfig, target: Target, q0, n_steps: int) -> ChainTrace:
    """Run one chain; byte-identical for identical (seed, q0, n_steps)."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    q0 = np.asarray(q0, dtype=np.float64)
    streams = StreamSet(cfg.seed)
    counter = GradientCounter()
    positions = np.empty((n_steps, target.d))
    diags = []
    q = q0.copy()
    ws = OrbitWorkspace(target.d, cfg.K_m) if cfg.variant in (NUTS_MUL, NUTS_BPS) else None

    for i in range(n_steps):
        if cfg.variant in (NUTS_MUL, NUTS_BPS):
            q, diag = nuts_step(cfg, target, q, streams, workspace=ws)
            counter.add(diag.n_grad)
        elif cfg.variant == HMC:
            before = counter.count
            q, accepted, diverged = hmc_step(target, q, cfg.h, cfg.T, streams, counter)
            diag = StepDiagnostics(
                selected_index=cfg.T if accepted else 0,
                depth=0, stop_reason="hmc",
                energy_error=float("nan"),
                n_grad=counter.count - before,
                accept_event=accepted,
                stayed_put=not accepted,
                diverged=diverged,
            )
        else:
            before = counter.count
            q, T = ideal_step(cfg.variant, target, q, cfg.h, cfg.kstar, streams, counter)
            diag = StepDiagnostics(
                selected_index=T,
                depth=cfg.kstar, stop_reason="ideal",
                energy_error=0.0,
                n_grad=counter.count - before,
                accept_event=True,
                stayed_put=(T == 0),
                diverged=False,
            )
        positions[i] = q
        diags.append(diag)

    return ChainTrace(variant=cfg.variant, seed=cfg.seed, q0=q0,
                      positions=positions, diagnostics=diags,
                      n_grad=counter.count)
