"""Trajectory sampler for the noisy fermionic lattice.

Each Trotter step applies the quadratic-plus-loss/gain segment exactly at the
covariance level, then unravels the density-density interaction plus its
dephasing share on every coupled mode pair into Gaussian branches:

  * a complex Gaussian draw z enters through exp(mu z n_v) exp(mu z* n_u)
    with mu = sqrt(Uint) * exp(-i pi / 4),
  * deterministic damping exp(-K_i n_i / 2) on both modes,
  * a sampled two-outcome branch {identity, project onto n_i = 1} whose
    weights are {1, (exp(K_i - |Uint|) - 1) <n_i>}.

Averaged over the randomness this reproduces the exact pair channel; the
running log weight collects every trace factor so that weighted averages of
observables are unbiased.  ``run_population`` is the vectorised engine used
for large trajectory counts; ``run_trajectory`` is the single-trajectory
reference implementation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import ModelSpec, build_step_grid, leftover_rate, noise_split_weights
from . import fermion_gaussian as fg
from .fermion_gaussian import FermionGaussianState

__all__ = [
    "PairChannelParams",
    "pair_channel_params",
    "pair_channel_step",
    "dephasing_step",
    "FermionTrajectory",
    "run_trajectory",
    "estimate",
    "resample",
    "run_population",
    "FermionPopulation",
    "trajectory_rng",
]

_NEG_TOL = 1e-12


def trajectory_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for trajectory ``stream`` of run ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))


# ---------------------------------------------------------------------------
# per-pair channel parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairChannelParams:
    """Step-integrated scalars of one pair channel.

    ``U_int`` integrates the full interaction coefficient of n_v n_u over the
    step (both symmetric orderings), ``K1``/``K2`` the dephasing shares routed
    to modes v and u.
    """

    U_int: float
    K1: float
    K2: float

    def __post_init__(self):
        if min(self.K1, self.K2) < abs(self.U_int) - 1e-9:
            warnings.warn("dephasing share below |U_int|: pair channel is outside "
                          "the branch-sampling regime", stacklevel=2)


def pair_channel_params(spec: ModelSpec, v: int, u: int, t0: float, t1: float) -> PairChannelParams:
    u_int = 2.0 * spec.u_integral(v, u, t0, t1)
    edges = [t0] + [b for b in spec.breakpoints_union() if t0 < b < t1] + [t1]
    k1 = k2 = 0.0
    for a, b in zip(edges, edges[1:]):
        tm = (a + b) / 2
        share_v = noise_split_weights(spec, v, u, 3, "p", tm) \
            + noise_split_weights(spec, u, v, 3, "q", tm)
        share_u = noise_split_weights(spec, v, u, 3, "q", tm) \
            + noise_split_weights(spec, u, v, 3, "p", tm)
        k1 += spec.kappa3 * share_v * (b - a)
        k2 += spec.kappa3 * share_u * (b - a)
    return PairChannelParams(U_int=u_int, K1=k1, K2=k2)


# ---------------------------------------------------------------------------
# single-trajectory steps
# ---------------------------------------------------------------------------

def _branch_weight_guard(w: float) -> float:
    if w < -_NEG_TOL:
        raise RuntimeError(f"negative branch weight {w:.3e}; threshold violated or bad input")
    return max(w, 0.0)


def _number_branch(state: FermionGaussianState, v: int, coeff: float,
                   rng: np.random.Generator):
    """Apply rho -> rho + coeff * n rho n by sampling its two-branch mixture."""
    nv = fg.number_expectation(state, v)
    w_proj = _branch_weight_guard(coeff * nv)
    total = 1.0 + w_proj
    state = FermionGaussianState(state.gamma, state.log_weight + math.log(total))
    took_proj = rng.random() < w_proj / total
    if took_proj:
        state = fg.apply_number_projector(state, v, 1)
        state = FermionGaussianState(state.gamma, state.log_weight - math.log(nv))
    return state, took_proj


def pair_channel_step(state: FermionGaussianState, params: PairChannelParams,
                      pair: tuple[int, int], rng: np.random.Generator,
                      log: list | None = None) -> FermionGaussianState:
    """One unraveled application of the interaction+dephasing pair channel."""
    v, u = pair
    absu = abs(params.U_int)
    if absu == 0.0 and params.K1 == 0.0 and params.K2 == 0.0:
        return state
    a, b = rng.standard_normal(2)
    z = complex(a, b) / math.sqrt(2)
    mu = np.sqrt(complex(params.U_int)) * np.exp(-0.25j * np.pi)
    state = fg.apply_number_exponential(state, v, mu * z)
    state = fg.apply_number_exponential(state, u, mu * z.conjugate())
    state = fg.apply_number_exponential(state, v, -params.K1 / 2)
    state = fg.apply_number_exponential(state, u, -params.K2 / 2)
    outcomes = []
    for mode, K in ((v, params.K1), (u, params.K2)):
        state, proj = _number_branch(state, mode, math.expm1(K - absu), rng)
        outcomes.append(proj)
    if log is not None:
        log.append((pair, z, tuple(outcomes)))
    return state


def dephasing_step(state: FermionGaussianState, v: int, K: float,
                   rng: np.random.Generator) -> FermionGaussianState:
    """Exact single-mode dephasing channel exp(K D_n), unraveled the same way."""
    if K == 0.0:
        return state
    state = fg.apply_number_exponential(state, v, -K / 2)
    state, _ = _number_branch(state, v, math.expm1(K), rng)
    return state


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class FermionTrajectory:
    state: FermionGaussianState
    stream: int = 0
    step_index: int = 0
    branch_log: list = field(default_factory=list)

    @property
    def weight(self) -> float:
        return math.exp(self.state.log_weight)


def _step_schedule(spec: ModelSpec, t: float, T: int):
    """Per-interval precomputation shared by both trajectory runners."""
    intervals = build_step_grid(t, T, spec.breakpoints_union())
    pairs = spec.u_pairs()
    plan = []
    for (a, b) in intervals:
        X, Y = fg.segment_generator(spec, (a + b) / 2)
        F, V = fg.segment_propagator(X, Y, b - a)
        pair_params = [(p, pair_channel_params(spec, p[0], p[1], a, b)) for p in pairs]
        lone = [(v, spec.kappa3 * (b - a)) for v in range(spec.m)
                if leftover_rate(spec, v, 3, (a + b) / 2) > 0]
        plan.append(((a, b), F, V, pair_params, lone))
    return plan


def run_trajectory(spec: ModelSpec, t: float, T: int, init: FermionGaussianState,
                   rng: np.random.Generator, stream: int = 0,
                   check_invariants: bool = False) -> FermionTrajectory:
    """Run one weighted Gaussian trajectory over T Trotter steps up to time t."""
    traj = FermionTrajectory(state=init.copy(), stream=stream)
    for (a, b), F, V, pair_params, lone in _step_schedule(spec, t, T):
        g = F @ traj.state.gamma @ F.T + V
        state = FermionGaussianState(0.5 * (g - g.T), traj.state.log_weight)
        step_log: list = []
        for pair, params in pair_params:
            state = pair_channel_step(state, params, pair, rng, log=step_log)
        for v, K in lone:
            state = dephasing_step(state, v, K, rng)
        if check_invariants:
            state.validate()
        traj.state = state
        traj.step_index += 1
        traj.branch_log.append(step_log)
    return traj


def estimate(trajectories, observable):
    """Self-normalised weighted mean of observable(state) with jackknife stderr."""
    if len(trajectories) < 2:
        raise ValueError("need at least two trajectories")
    logw = np.array([tr.state.log_weight for tr in trajectories])
    w = np.exp(logw - logw.max())
    if not np.any(w > 0):
        raise ValueError("all trajectory weights vanish")
    f = np.array([observable(tr.state) for tr in trajectories])
    sw, swf = w.sum(), (w * f).sum()
    value = swf / sw
    loo = (swf - w * f) / (sw - w)
    n = len(w)
    stderr = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return float(value), float(stderr)


def _systematic_counts(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(weights)
    cum = np.cumsum(weights / weights.sum())
    points = (rng.random() + np.arange(n)) / n
    idx = np.searchsorted(cum, points)
    return np.minimum(idx, n - 1)


def resample(trajectories, rng: np.random.Generator):
    """Systematic resampling to an equal-weight population of the same size."""
    logw = np.array([tr.state.log_weight for tr in trajectories])
    w = np.exp(logw - logw.max())
    if not np.any(w > 0):
        raise ValueError("all trajectory weights vanish")
    mean_logw = logw.max() + math.log(w.mean())
    out = []
    for i in _systematic_counts(w, rng):
        src = trajectories[i]
        out.append(FermionTrajectory(
            state=FermionGaussianState(src.state.gamma.copy(), mean_logw),
            stream=src.stream, step_index=src.step_index,
            branch_log=list(src.branch_log)))
    return out


# ---------------------------------------------------------------------------
# vectorised population engine
# ---------------------------------------------------------------------------

def _b_apply_exponential(G, logw, v, theta):
    """In-place batched rho -> e^{theta n_v} rho e^{theta* n_v} on (B,2m,2m)."""
    p, q = 2 * v, 2 * v + 1
    th = np.asarray(theta, dtype=complex)
    w = np.expm1(th)
    W = np.expm1(2 * th.real)
    nv = G[:, p, q] + 0.5
    norm = 1.0 + W * nv
    if np.any(norm <= _NEG_TOL):
        raise fg.ZeroWeightError("vanishing branch weight in batched exponential")
    colp = G[:, :, p].copy()
    colq = G[:, :, q].copy()
    scale = (W / norm)[:, None, None]
    G += scale * (colq[:, :, None] * colp[:, None, :] - colp[:, :, None] * colq[:, None, :])
    ar = ((1.0 + w.real) / norm)[:, None]
    br = (w.imag / norm)[:, None]
    G[:, :, p] = ar * colp - br * colq
    G[:, :, q] = br * colp + ar * colq
    G[:, p, :] = -G[:, :, p]
    G[:, q, :] = -G[:, :, q]
    G[:, p, p] = G[:, q, q] = 0.0
    npq = (W + 1.0) * nv / norm - 0.5
    G[:, p, q] = npq
    G[:, q, p] = -npq
    logw += np.log(norm)


def _b_project_one(G, v, idx):
    """Condition the idx rows of the batch on n_v = 1 (no weight bookkeeping)."""
    p, q = 2 * v, 2 * v + 1
    sub = G[idx]
    nv = sub[:, p, q] + 0.5
    colp = sub[:, :, p].copy()
    colq = sub[:, :, q].copy()
    sub += (1.0 / nv)[:, None, None] * (colq[:, :, None] * colp[:, None, :]
                                        - colp[:, :, None] * colq[:, None, :])
    sub[:, :, p] = 0.0
    sub[:, :, q] = 0.0
    sub[:, p, :] = 0.0
    sub[:, q, :] = 0.0
    sub[:, p, q] = 0.5
    sub[:, q, p] = -0.5
    G[idx] = sub


def _b_number_branch(G, logw, v, coeff, rng):
    nv = G[:, 2 * v, 2 * v + 1] + 0.5
    w_proj = coeff * nv
    if np.min(w_proj) < -_NEG_TOL:
        raise RuntimeError("negative branch weight in batched step")
    w_proj = np.clip(w_proj, 0.0, None)
    total = 1.0 + w_proj
    logw += np.log(total)
    take = rng.random(G.shape[0]) < w_proj / total
    idx = np.nonzero(take)[0]
    if idx.size:
        _b_project_one(G, v, idx)


def _b_check_invariants(G, antisym_tol=1e-10, sv_tol=1e-8):
    bad = np.abs(G + np.swapaxes(G, 1, 2)).max()
    if bad > antisym_tol:
        raise ValueError(f"batched antisymmetry violation {bad:.2e}")
    sv = np.linalg.svd(G, compute_uv=False).max()
    if sv > 0.5 + sv_tol:
        raise ValueError(f"batched singular-value violation {sv:.8f}")


@dataclass
class FermionPopulation:
    """Final state of a weighted trajectory population."""

    gammas: np.ndarray     # (B, 2m, 2m)
    log_weights: np.ndarray
    steps: int
    invariant_checks: int

    @property
    def size(self) -> int:
        return self.gammas.shape[0]

    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()

    def number_expectation(self, v: int):
        w = self.weights()
        f = self.gammas[:, 2 * v, 2 * v + 1] + 0.5
        value = float(w @ f)
        n = len(w)
        loo = (value - w * f) / (1.0 - w)
        stderr = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
        return value, stderr

    def sample_fock(self, n_samples: int, rng: np.random.Generator) -> np.ndarray:
        """Draw occupation bitstrings: pick trajectories by weight, then sample."""
        m = self.gammas.shape[1] // 2
        sel = rng.choice(self.size, size=n_samples, p=self.weights())
        G = self.gammas[sel].copy()
        bits = np.empty((n_samples, m), dtype=np.int64)
        for v in range(m):
            p1 = np.clip(G[:, 2 * v, 2 * v + 1] + 0.5, 0.0, 1.0)
            ones = rng.random(n_samples) < p1
            bits[:, v] = ones
            idx1 = np.nonzero(ones)[0]
            if idx1.size:
                _b_project_one(G, v, idx1)
            idx0 = np.nonzero(~ones)[0]
            if idx0.size:
                # conditioning on n=0 is the same rank-two update with opposite sign
                p, q = 2 * v, 2 * v + 1
                sub = G[idx0]
                nv = sub[:, p, q] + 0.5
                colp = sub[:, :, p].copy()
                colq = sub[:, :, q].copy()
                sub += (-1.0 / (1.0 - nv))[:, None, None] * (
                    colq[:, :, None] * colp[:, None, :] - colp[:, :, None] * colq[:, None, :])
                sub[:, :, p] = 0.0
                sub[:, :, q] = 0.0
                sub[:, p, :] = 0.0
                sub[:, q, :] = 0.0
                sub[:, p, q] = -0.5
                sub[:, q, p] = 0.5
                G[idx0] = sub
        return bits


def run_population(spec: ModelSpec, t: float, T: int, n_traj: int, seed: int,
                   init: FermionGaussianState | None = None,
                   resample_every: int = 1,
                   check_invariants: bool = True) -> FermionPopulation:
    """Vectorised run of ``n_traj`` weighted trajectories with resampling barriers.

    Statistically equivalent to ``run_trajectory`` repeated, but draws the
    per-step randomness for the whole population from one counter-based
    stream, so results are reproducible for a given (spec, t, T, seed).
    """
    if init is None:
        init = fg.state_from_occupations(spec.initial.occupations) \
            if spec.initial.kind == "fock" else fg.vacuum_state(spec.m)
    rng = trajectory_rng(seed)
    B = n_traj
    G = np.broadcast_to(init.gamma, (B,) + init.gamma.shape).copy()
    logw = np.full(B, init.log_weight)
    checks = 0
    schedule = _step_schedule(spec, t, T)
    for step, ((a, b), F, V, pair_params, lone) in enumerate(schedule):
        G = F[None] @ G @ F.T[None] + V[None]
        G = 0.5 * (G - np.swapaxes(G, 1, 2))
        for (v, u), params in pair_params:
            absu = abs(params.U_int)
            if absu == 0.0 and params.K1 == 0.0 and params.K2 == 0.0:
                continue
            zr = rng.standard_normal(B)
            zi = rng.standard_normal(B)
            z = (zr + 1j * zi) / math.sqrt(2)
            mu = np.sqrt(complex(params.U_int)) * np.exp(-0.25j * np.pi)
            _b_apply_exponential(G, logw, v, mu * z)
            _b_apply_exponential(G, logw, u, mu * z.conjugate())
            _b_apply_exponential(G, logw, v, np.full(B, -params.K1 / 2, dtype=complex))
            _b_apply_exponential(G, logw, u, np.full(B, -params.K2 / 2, dtype=complex))
            _b_number_branch(G, logw, v, math.expm1(params.K1 - absu), rng)
            _b_number_branch(G, logw, u, math.expm1(params.K2 - absu), rng)
        for v, K in lone:
            if K > 0.0:
                _b_apply_exponential(G, logw, v, np.full(B, -K / 2, dtype=complex))
                _b_number_branch(G, logw, v, math.expm1(K), rng)
        if check_invariants:
            _b_check_invariants(G)
            checks += 1
        if resample_every and (step + 1) % resample_every == 0:
            w = np.exp(logw - logw.max())
            idx = _systematic_counts(w, rng)
            G = G[idx]
            logw = np.full(B, logw.max() + math.log(w.mean()))
    return FermionPopulation(gammas=G, log_weights=logw, steps=len(schedule),
                             invariant_checks=checks)
