"""Covariance-matrix representation of fermionic Gaussian states.

A state over m modes is held as the real antisymmetric 2m x 2m matrix
Gamma[mu, nu] = (i/2) tr(rho [c_mu, c_nu]) with the row index mu = 2*v + alpha
(alpha = 0 for c1, 1 for c2, normalisation {c_mu, c_nu} = delta), plus an
accumulated log trace weight.  In this convention <n_v> = Gamma[2v, 2v+1] + 1/2
and every singular value of a physical Gamma is at most 1/2.

All operations the sampler needs close over this representation:
quadratic+loss/gain segments are linear matrix flows, and conjugation by
exp(theta*n_v) or by a number projector is a rank-two update because
exp(theta*n) = 1 + (exp(theta)-1)*n on a fermionic mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .model import ModelSpec

__all__ = [
    "ZeroWeightError",
    "FermionGaussianState",
    "vacuum_state",
    "maximally_mixed_state",
    "state_from_occupations",
    "number_expectation",
    "pair_moments",
    "segment_generator",
    "segment_propagator",
    "evolve_gaussian_segment",
    "apply_number_exponential",
    "apply_number_projector",
    "sample_fock",
]

_WEIGHT_TOL = 1e-14


class ZeroWeightError(ValueError):
    """A conditioning branch with (numerically) zero probability was requested."""


@dataclass
class FermionGaussianState:
    gamma: np.ndarray
    log_weight: float = 0.0

    @property
    def m(self) -> int:
        return self.gamma.shape[0] // 2

    def copy(self) -> "FermionGaussianState":
        return FermionGaussianState(self.gamma.copy(), self.log_weight)

    def validate(self, antisym_tol=1e-10, sv_tol=1e-8) -> "FermionGaussianState":
        g = self.gamma
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] % 2:
            raise ValueError("gamma must be a square 2m x 2m matrix")
        if np.max(np.abs(g + g.T)) > antisym_tol:
            raise ValueError("gamma is not antisymmetric within tolerance")
        if np.linalg.svd(g, compute_uv=False).max() > 0.5 + sv_tol:
            raise ValueError("gamma violates the singular-value bound 1/2")
        if not math.isfinite(self.log_weight):
            raise ValueError("log_weight is not finite")
        return self


def state_from_occupations(bits) -> FermionGaussianState:
    """Product Fock state with the given 0/1 occupations."""
    bits = list(bits)
    g = np.zeros((2 * len(bits), 2 * len(bits)))
    for v, b in enumerate(bits):
        g[2 * v, 2 * v + 1] = (0.5 if b else -0.5)
        g[2 * v + 1, 2 * v] = -g[2 * v, 2 * v + 1]
    return FermionGaussianState(g)


def vacuum_state(m: int) -> FermionGaussianState:
    if m < 1:
        raise ValueError("m must be >= 1")
    return state_from_occupations([0] * m)


def maximally_mixed_state(m: int) -> FermionGaussianState:
    return FermionGaussianState(np.zeros((2 * m, 2 * m)))


def number_expectation(state: FermionGaussianState, v: int) -> float:
    return float(state.gamma[2 * v, 2 * v + 1] + 0.5)


def pair_moments(state: FermionGaussianState, v: int, u: int):
    """(<n_v>, <n_u>, <n_v n_u>) from the 4x4 sub-block, by Wick expansion."""
    if v == u:
        raise ValueError("pair moments need two distinct modes")
    g = state.gamma
    p, q, r, s = 2 * v, 2 * v + 1, 2 * u, 2 * u + 1
    nv = g[p, q] + 0.5
    nu = g[r, s] + 0.5
    nvnu = (0.25 + 0.5 * (g[p, q] + g[r, s])
            + g[p, q] * g[r, s] - g[p, r] * g[q, s] + g[p, s] * g[q, r])
    return float(nv), float(nu), float(nvnu)


# ---------------------------------------------------------------------------
# quadratic + loss/gain segments
# ---------------------------------------------------------------------------

def segment_generator(spec: ModelSpec, t: float):
    """Drift X and constant term Y of d(Gamma)/dt = X Gamma + Gamma X^T + Y."""
    m = spec.m
    B = np.imag(spec.j_matrix(t))
    X = 2.0 * B - 0.5 * (spec.kappa1 + spec.kappa2) * np.eye(2 * m)
    Y = np.zeros((2 * m, 2 * m))
    y = 0.5 * (spec.kappa2 - spec.kappa1)
    for v in range(m):
        Y[2 * v, 2 * v + 1] = y
        Y[2 * v + 1, 2 * v] = -y
    return X, Y


def segment_propagator(X: np.ndarray, Y: np.ndarray, tau: float):
    """(F, V) with Gamma -> F Gamma F^T + V, via a block matrix exponential."""
    k = X.shape[0]
    M = np.zeros((2 * k, 2 * k))
    M[:k, :k] = X
    M[:k, k:] = Y
    M[k:, k:] = -X.T
    E = expm(M * tau)
    F = E[:k, :k]
    V = E[:k, k:] @ F.T
    return F, 0.5 * (V - V.T)  # symmetrise away roundoff


def evolve_gaussian_segment(state: FermionGaussianState, spec: ModelSpec,
                            t0: float, t1: float) -> FermionGaussianState:
    """Evolve under the quadratic Hamiltonian plus loss/gain over [t0, t1].

    Trace preserving, so the log weight is untouched.  Each piecewise-constant
    interval is integrated exactly through its matrix exponential.
    """
    if t1 < t0:
        raise ValueError("t1 < t0")
    edges = [t0] + [b for b in spec.breakpoints_union() if t0 < b < t1] + [t1]
    g = state.gamma
    for a, b in zip(edges, edges[1:]):
        X, Y = segment_generator(spec, (a + b) / 2)
        F, V = segment_propagator(X, Y, b - a)
        g = F @ g @ F.T + V
    return FermionGaussianState(0.5 * (g - g.T), state.log_weight)


# ---------------------------------------------------------------------------
# rank-structured conjugations
# ---------------------------------------------------------------------------

def apply_number_exponential(state: FermionGaussianState, v: int,
                             theta: complex) -> FermionGaussianState:
    """Map rho -> exp(theta n_v) rho exp(conj(theta) n_v), tracking the trace.

    Closed-form updates: writing w = e^theta - 1 and W = e^{2 Re theta} - 1,
    the trace factor is 1 + W <n_v>; correlations against the rest of the
    system rotate by [[1+Re w, -Im w], [Im w, 1+Re w]] / norm, and the
    remaining block picks up a rank-two Wick correction.
    """
    theta = complex(theta)
    g = state.gamma
    p, q = 2 * v, 2 * v + 1
    w = np.expm1(theta)
    W = float(np.expm1(2 * theta.real))
    nv = g[p, q] + 0.5
    norm = 1.0 + W * nv
    if norm <= _WEIGHT_TOL:
        raise ZeroWeightError(f"exp({theta}) n_{v} branch has vanishing weight")
    colp = g[:, p].copy()
    colq = g[:, q].copy()
    new = g + (W / norm) * (np.outer(colq, colp) - np.outer(colp, colq))
    ar = (1.0 + w.real) / norm
    br = w.imag / norm
    new[:, p] = ar * colp - br * colq
    new[:, q] = br * colp + ar * colq
    new[p, :] = -new[:, p]
    new[q, :] = -new[:, q]
    new[p, p] = new[q, q] = 0.0
    new[p, q] = (W + 1.0) * nv / norm - 0.5
    new[q, p] = -new[p, q]
    return FermionGaussianState(new, state.log_weight + math.log(norm))


def apply_number_projector(state: FermionGaussianState, v: int,
                           outcome: int) -> FermionGaussianState:
    """Condition mode v on measuring n_v = outcome; weight gains log(prob)."""
    if outcome not in (0, 1):
        raise ValueError("outcome must be 0 or 1")
    g = state.gamma
    p, q = 2 * v, 2 * v + 1
    nv = g[p, q] + 0.5
    prob = nv if outcome == 1 else 1.0 - nv
    if prob <= _WEIGHT_TOL:
        raise ZeroWeightError(f"projecting mode {v} onto n={outcome} has probability {prob:.3e}")
    sign = 1.0 if outcome == 1 else -1.0
    colp = g[:, p].copy()
    colq = g[:, q].copy()
    new = g + (sign / prob) * (np.outer(colq, colp) - np.outer(colp, colq))
    new[:, p] = 0.0
    new[:, q] = 0.0
    new[p, :] = 0.0
    new[q, :] = 0.0
    new[p, q] = outcome - 0.5
    new[q, p] = 0.5 - outcome
    return FermionGaussianState(new, state.log_weight + math.log(prob))


def sample_fock(state: FermionGaussianState, rng: np.random.Generator) -> np.ndarray:
    """Draw an occupation bitstring from the state's Fock-basis diagonal.

    Sequentially samples each mode from its conditional distribution and
    conditions the remainder, so the output follows diag(rho) exactly.
    """
    cur = state
    bits = np.empty(state.m, dtype=np.int64)
    for v in range(state.m):
        p1 = min(max(number_expectation(cur, v), 0.0), 1.0)
        bits[v] = 1 if rng.random() < p1 else 0
        cur = apply_number_projector(cur, v, int(bits[v]))
    return bits
