"""Target distributions: potential energy, gradient, Hamiltonian, and the
assumption-class metadata used by the ergodicity probes.

Four potential families are supported:

* standard Gaussian        U(q) = |q|^2 / 2
* diagonal Gaussian        U(q) = sum_i q_i^2 / (2 sigma_i^2)
* power law                U(q) = C |q|^beta          (C > 0, beta > 0)
* perturbed Gaussian       U(q) = q^T Sigma q / 2 + Utilde(q)  (user callback)

Assumption tags (H1, H2i, H2ii, H3, H4) classify the tail/regularity regime
of each target.  They are declarative metadata: constants such as M1 or the
A_i never enter any algorithm and are kept only as free-form extras.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# kind codes shared with the compiled kernels; negative means "python only"
KIND_DIAG_GAUSSIAN = 0
KIND_POWER_LAW = 1
KIND_CALLBACK = -1


def _as_vector(x, d=None, name="q"):
    q = np.asarray(x, dtype=np.float64)
    if q.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {q.shape}")
    if d is not None and q.shape[0] != d:
        raise ValueError(f"{name} has dimension {q.shape[0]}, expected {d}")
    if not np.all(np.isfinite(q)):
        raise ValueError(f"{name} has non-finite components")
    return q


@dataclass(frozen=True)
class PhasePoint:
    """Position/momentum pair (q, p); the state of all dynamics."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = _as_vector(self.q, name="q")
        p = _as_vector(self.p, d=q.shape[0], name="p")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def d(self) -> int:
        return self.q.shape[0]

    def flip(self) -> "PhasePoint":
        return PhasePoint(self.q, -self.p)


@dataclass(frozen=True)
class AssumptionProfile:
    """Declared regularity/tail metadata for a target.

    ``satisfies`` holds tags from {"H1", "H2i", "H2ii", "H3", "H4"}.  The
    named constants of H3/H4 (M1, A1..A5, rho, R_U) have no computational
    role and may be recorded in ``extras``.
    """

    lipschitz_L1: float | None = None
    growth_m: float | None = None
    tail_beta: float | None = None
    satisfies: frozenset = frozenset()
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.growth_m is not None and not (1.0 < self.growth_m <= 2.0):
            raise ValueError("growth_m must lie in (1, 2]")
        object.__setattr__(self, "satisfies", frozenset(self.satisfies))


class Target:
    """Immutable target distribution pi(q) propto exp(-U(q)) on R^d.

    Use the module-level constructors (:func:`std_gaussian`,
    :func:`diag_gaussian`, :func:`power_law`, :func:`perturbed_gaussian`).
    """

    def __init__(self, d, kind, kind_code, aux, profile, label,
                 u_callback=None, grad_callback=None):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.d = int(d)
        self.kind = kind
        self.kind_code = int(kind_code)
        self.aux = np.asarray(aux, dtype=np.float64)
        self.aux.setflags(write=False)
        self.profile = profile
        self.label = label
        self._u_callback = u_callback
        self._grad_callback = grad_callback

    def __repr__(self):
        return f"Target({self.label}, d={self.d})"

    # -- potential / gradient ------------------------------------------------

    def potential(self, q) -> float:
        q = _as_vector(q, self.d)
        if self.kind_code == KIND_DIAG_GAUSSIAN:
            return 0.5 * float(np.dot(q * self.aux, q))
        if self.kind_code == KIND_POWER_LAW:
            c, beta = self.aux
            return float(c * np.linalg.norm(q) ** beta)
        return float(self._u_callback(q))

    def grad(self, q) -> np.ndarray:
        q = _as_vector(q, self.d)
        if self.kind_code == KIND_DIAG_GAUSSIAN:
            return self.aux * q
        if self.kind_code == KIND_POWER_LAW:
            c, beta = self.aux
            r = np.linalg.norm(q)
            if r == 0.0:
                if beta >= 2.0:
                    return np.zeros_like(q)
                raise ValueError(
                    f"power-law gradient is singular at the origin for beta={beta} < 2"
                )
            return (c * beta * r ** (beta - 2.0)) * q
        return np.asarray(self._grad_callback(q), dtype=np.float64)

    @property
    def jit_compatible(self) -> bool:
        """Whether the compiled kernels can evaluate this target."""
        return self.kind_code >= 0


# -- spec operations ---------------------------------------------------------

def potential_eval(target: Target, q) -> float:
    """U(q)."""
    return target.potential(q)


def potential_grad(target: Target, q) -> np.ndarray:
    """grad U(q); for the power law this is C beta |q|^(beta-2) q."""
    return target.grad(q)


def hamiltonian(target: Target, s: PhasePoint) -> float:
    """H(q, p) = U(q) + |p|^2 / 2."""
    if s.d != target.d:
        raise ValueError(f"phase point has dimension {s.d}, expected {target.d}")
    return target.potential(s.q) + 0.5 * float(np.dot(s.p, s.p))


# -- constructors ------------------------------------------------------------

def std_gaussian(d: int) -> Target:
    """Standard Gaussian: U(q) = |q|^2/2 (diagonal Gaussian, all scales 1)."""
    return diag_gaussian(np.ones(d))


def diag_gaussian(scales) -> Target:
    """Gaussian with diagonal covariance diag(sigma_i^2); U = sum q_i^2/(2 sigma_i^2)."""
    scales = _as_vector(scales, name="scales")
    if np.any(scales <= 0):
        raise ValueError("scales must be positive")
    inv_var = 1.0 / scales**2
    profile = AssumptionProfile(
        lipschitz_L1=float(np.max(inv_var)),
        growth_m=2.0,
        satisfies={"H1", "H3", "H4"},
    )
    label = "StdGaussian" if np.all(scales == 1.0) else "DiagGaussian"
    return Target(scales.shape[0], label, KIND_DIAG_GAUSSIAN, inv_var, profile, label)


def power_law(c: float, beta: float, d: int = 1) -> Target:
    """Power-law potential U(q) = C |q|^beta with C > 0, beta > 0.

    Tail classification: beta <= 1 -> H2i (bounded gradient, sub-exponential
    tail); beta in (1, 2] -> H3(m=beta); beta > 2 -> H2ii (lighter than
    Gaussian; no geometric ergodicity).
    """
    if c <= 0 or beta <= 0:
        raise ValueError("power law requires C > 0 and beta > 0")
    if beta <= 1.0:
        tags, m = {"H2i"}, None
    elif beta < 2.0:
        tags, m = {"H3"}, beta
    elif beta == 2.0:
        tags, m = {"H1", "H3", "H4"}, 2.0
    else:
        tags, m = {"H2ii"}, None
    profile = AssumptionProfile(
        lipschitz_L1=2.0 * c if beta == 2.0 else None,
        growth_m=m,
        tail_beta=float(beta),
        satisfies=tags,
    )
    return Target(d, "PowerLaw", KIND_POWER_LAW, [c, beta],
                  profile, f"PowerLaw(C={c:g},beta={beta:g})")


def perturbed_gaussian(sigma_diag, u_tilde, grad_u_tilde,
                       profile: AssumptionProfile | None = None) -> Target:
    """Gaussian-plus-perturbation: U(q) = q^T Sigma q / 2 + Utilde(q).

    Sigma is diagonal (given as its diagonal); Utilde and its gradient are
    user callbacks.  H4's bounds on Utilde are *not* enforced: the profile is
    declarative.  This target always runs on the numpy path (callbacks are
    not jit-compiled).
    """
    sigma_diag = np.asarray(sigma_diag, dtype=np.float64)
    if sigma_diag.ndim != 1:
        raise ValueError("sigma_diag must be a vector")
    d = sigma_diag.shape[0]
    if profile is None:
        profile = AssumptionProfile(satisfies={"H1", "H4"})

    def u(q):
        return 0.5 * float(np.dot(q * sigma_diag, q)) + float(u_tilde(q))

    def g(q):
        return sigma_diag * q + np.asarray(grad_u_tilde(q), dtype=np.float64)

    return Target(d, "PerturbedGaussian", KIND_CALLBACK, sigma_diag, profile,
                  "PerturbedGaussian", u_callback=u, grad_callback=g)
