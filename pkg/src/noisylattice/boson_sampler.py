"""Product-state sampler for the noisy bosonic lattice on truncated Fock spaces.

Sites carry dense (d+1)^L density matrices.  Each Trotter step applies the
on-site channel (all intra-site Hamiltonian terms, drives and any dissipator
mass not routed to a pair channel), then, for every coupled inter-site mode
pair, one completely positive two-site map assembled from a finite list of
product Kraus branches:

  * 256 branches drawing one fourth root of unity per quadrature pair,
    carrying the inter-site quadratic coupling,
  * 4 branches drawing a single fourth root of unity for the density-density
    coupling,
  * 4 recycling branches from the eigendecomposition of a 2x2 coefficient
    matrix per mode (loss/gain recycling minus the quadrature surplus),
  * 2 dephasing recycling branches proportional to the number operator.

Every branch is a tensor product across the two sites, so sampling one branch
per step preserves the product structure exactly; the map agrees with the
exact pair channel to second order in the step size.  Ancestral sampling picks
a branch with probability proportional to prior times output trace, and the
running log weight absorbs the (near-unit) step normalisations.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .model import ModelSpec, build_step_grid, leftover_rate, noise_split_weights
from .fermion_sampler import trajectory_rng

__all__ = [
    "TruncatedOps",
    "build_truncated_ops",
    "ThresholdViolation",
    "BosonProductState",
    "boson_initial_state",
    "onsite_step",
    "PairStepParams",
    "pair_step_params",
    "TwoSiteBranch",
    "enumerate_two_site_branches",
    "PairBranchSet",
    "sample_two_site_step",
    "run_boson_trajectory",
    "run_boson_population",
    "BosonRunResult",
]

_ROOT4 = (1.0 + 0.0j, -1.0 + 0.0j, 1.0j, -1.0j)


class ThresholdViolation(ValueError):
    """The step parameters violate a complete-positivity condition."""


# ---------------------------------------------------------------------------
# truncated single-mode operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncatedOps:
    d: int
    a: np.ndarray
    adag: np.ndarray
    n: np.ndarray
    c1: np.ndarray
    c2: np.ndarray


def build_truncated_ops(d: int) -> TruncatedOps:
    """Single-mode operators projected onto the lowest d+1 Fock levels."""
    if d < 1:
        raise ValueError("d must be >= 1")
    a = np.diag(np.sqrt(np.arange(1, d + 1)), k=1).astype(complex)
    adag = a.conj().T.copy()
    return TruncatedOps(
        d=d, a=a, adag=adag, n=adag @ a,
        c1=(adag + a) / math.sqrt(2),
        c2=1j * (adag - a) / math.sqrt(2),
    )


def _embed(op: np.ndarray, sigma: int, L: int) -> np.ndarray:
    """Place a single-mode operator at local position sigma (0-based) in a site."""
    dim = op.shape[0]
    out = np.ones((1, 1), dtype=complex)
    for s in range(L):
        out = np.kron(out, op if s == sigma else np.eye(dim, dtype=complex))
    return out


# ---------------------------------------------------------------------------
# product states
# ---------------------------------------------------------------------------

@dataclass
class BosonProductState:
    sites: list            # n matrices of shape ((d+1)^L, (d+1)^L)
    d: int
    L: int
    log_weight: float = 0.0

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def copy(self) -> "BosonProductState":
        return BosonProductState([s.copy() for s in self.sites], self.d, self.L,
                                 self.log_weight)

    def validate(self, herm_tol=1e-10, eig_tol=1e-9, trace_tol=1e-9) -> "BosonProductState":
        for k, s in enumerate(self.sites):
            if np.max(np.abs(s - s.conj().T)) > herm_tol:
                raise ValueError(f"site {k} matrix not Hermitian")
            if abs(np.trace(s).real - 1.0) > trace_tol:
                raise ValueError(f"site {k} matrix not normalised")
            if np.linalg.eigvalsh((s + s.conj().T) / 2).min() < -eig_tol:
                raise ValueError(f"site {k} matrix not positive semidefinite")
        if not math.isfinite(self.log_weight):
            raise ValueError("log_weight not finite")
        return self

    def number_expectations(self) -> np.ndarray:
        """<n_v> for every mode, in global mode order."""
        dloc = self.d + 1
        out = np.empty(self.n_sites * self.L)
        ns = np.arange(dloc)
        for i, s in enumerate(self.sites):
            diag = np.real(np.diag(s)).reshape((dloc,) * self.L)
            for sig in range(self.L):
                marg = diag.sum(axis=tuple(x for x in range(self.L) if x != sig))
                out[i * self.L + sig] = marg @ ns
        return out

    def sample_fock(self, rng: np.random.Generator) -> np.ndarray:
        """One occupation sample per mode from the product of site diagonals."""
        dloc = self.d + 1
        occ = np.empty(self.n_sites * self.L, dtype=np.int64)
        for i, s in enumerate(self.sites):
            p = np.clip(np.real(np.diag(s)), 0.0, None)
            p = p / p.sum()
            idx = rng.choice(len(p), p=p)
            for sig in range(self.L - 1, -1, -1):
                occ[i * self.L + sig] = idx % dloc
                idx //= dloc
        return occ


def boson_initial_state(spec: ModelSpec, d: int) -> BosonProductState:
    from .oracle import coherent_vector  # local import to keep modules decoupled
    dloc = d + 1
    sites = []
    for i in range(spec.n):
        vecs = []
        for sig in range(spec.L):
            v = np.zeros(dloc, dtype=complex)
            if spec.initial.kind == "coherent":
                v = coherent_vector(complex(spec.initial.alphas[i * spec.L + sig]), d)
            else:
                v[0] = 1.0
            vecs.append(v)
        site = vecs[0]
        for v in vecs[1:]:
            site = np.kron(site, v)
        sites.append(np.outer(site, site.conj()))
    return BosonProductState(sites, d, spec.L)


# ---------------------------------------------------------------------------
# on-site channel
# ---------------------------------------------------------------------------

def _site_hamiltonian(spec: ModelSpec, site: int, t: float, ops: TruncatedOps) -> np.ndarray:
    L = spec.L
    dim = (ops.d + 1) ** L
    H = np.zeros((dim, dim), dtype=complex)
    cs = (ops.c1, ops.c2)
    base = site * L
    for (v, a, u, b), e in spec._j_table.items():
        if spec.site_of(v) == site and spec.site_of(u) == site:
            H += e.value_at(t) * (_embed(cs[a], v - base, L) @ _embed(cs[b], u - base, L))
    for (v, u), e in spec._u_table.items():
        if spec.site_of(v) == site and spec.site_of(u) == site:
            H += complex(e.value_at(t)).real * (_embed(ops.n, v - base, L) @ _embed(ops.n, u - base, L))
    for (v, a), e in spec._d_table.items():
        if spec.site_of(v) == site:
            H += complex(e.value_at(t)).real * _embed(cs[a], v - base, L)
    return H


def _site_channel(spec: ModelSpec, site: int, t: float, tau: float,
                  ops: TruncatedOps) -> np.ndarray:
    """Superoperator (row-major vec) of one on-site interval."""
    from .oracle import hamiltonian_superop, dissipator_superop
    H = _site_hamiltonian(spec, site, t, ops)
    M = hamiltonian_superop(H)
    jump_of = {1: ops.a, 2: ops.adag, 3: ops.n}
    for sig in range(spec.L):
        v = site * spec.L + sig
        for l in (1, 2, 3):
            rate = leftover_rate(spec, v, l, t)
            if rate > 0:
                M += rate * dissipator_superop(_embed(jump_of[l], sig, spec.L))
    return expm(M * tau)


def _superop_to_kraus(S: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Kraus stack of a CP superoperator in row-major vec convention."""
    D = int(round(math.sqrt(S.shape[0])))
    choi = S.reshape(D, D, D, D).transpose(0, 2, 1, 3).reshape(D * D, D * D)
    lam, V = np.linalg.eigh((choi + choi.conj().T) / 2)
    if lam.min() < -1e-9:
        raise ValueError(f"channel is not completely positive ({lam.min():.2e})")
    keep = lam > tol
    return np.stack([math.sqrt(l) * V[:, k].reshape(D, D)
                     for k, l in zip(np.nonzero(keep)[0], lam[keep])])


def _site_channel_kraus(spec: ModelSpec, site: int, t: float, tau: float,
                        ops: TruncatedOps):
    """('unitary', U) when the on-site interval is Hamiltonian-only, else
    ('kraus', stack)."""
    has_leftover = any(
        leftover_rate(spec, site * spec.L + sig, l, t) > 0
        for sig in range(spec.L) for l in (1, 2, 3))
    if not has_leftover:
        return ("unitary", expm(-1j * _site_hamiltonian(spec, site, t, ops) * tau))
    return ("kraus", _superop_to_kraus(_site_channel(spec, site, t, tau, ops)))


def onsite_step(state: BosonProductState, spec: ModelSpec, site: int,
                t0: float, t1: float) -> BosonProductState:
    """All intra-site terms over [t0, t1]; trace preserving."""
    ops = build_truncated_ops(state.d)
    out = state.copy()
    edges = [t0] + [b for b in spec.breakpoints_union() if t0 < b < t1] + [t1]
    rho = out.sites[site]
    dim = rho.shape[0]
    for a, b in zip(edges, edges[1:]):
        S = _site_channel(spec, site, (a + b) / 2, b - a, ops)
        rho = (S @ rho.reshape(-1)).reshape(dim, dim)
    out.sites[site] = rho
    return out


# ---------------------------------------------------------------------------
# two-site branch mixture
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairStepParams:
    """Step-integrated scalars of one inter-site pair channel.

    G[alpha, beta] integrates the (doubled) quadratic coupling, U_int the
    doubled density-density coupling; K[i][l-1] is the integrated dissipator
    share of mode i in {0, 1} and dissipator l in {1, 2, 3}.
    """

    G: tuple        # 2x2 nested tuples, signed
    U_int: float
    K: tuple        # ((K1_1, K1_2, K1_3), (K2_1, K2_2, K2_3))

    @property
    def g0(self) -> float:
        return sum(abs(self.G[a][b]) for a in range(2) for b in range(2))

    @property
    def total(self) -> float:
        return self.g0 + abs(self.U_int) + sum(self.K[0]) + sum(self.K[1])


def pair_step_params(spec: ModelSpec, v: int, u: int, t0: float, t1: float) -> PairStepParams:
    G = [[0.0, 0.0], [0.0, 0.0]]
    for a in range(2):
        for b in range(2):
            G[a][b] = 2.0 * complex(spec.j_integral(v, a, u, b, t0, t1)).real
    u_int = 2.0 * spec.u_integral(v, u, t0, t1)
    edges = [t0] + [b for b in spec.breakpoints_union() if t0 < b < t1] + [t1]
    K = np.zeros((2, 3))
    kap = {1: spec.kappa1, 2: spec.kappa2, 3: spec.kappa3}
    for a, b in zip(edges, edges[1:]):
        tm = (a + b) / 2
        for l in (1, 2, 3):
            K[0, l - 1] += kap[l] * noise_split_weights(spec, v, u, l, "p", tm) * (b - a)
            K[1, l - 1] += kap[l] * noise_split_weights(spec, v, u, l, "q", tm) * (b - a)
    return PairStepParams(G=tuple(tuple(row) for row in G), U_int=u_int,
                          K=tuple(tuple(row) for row in K))


@dataclass(frozen=True)
class TwoSiteBranch:
    kind: str          # 'R' | 'Rt' | 'V' | 'Vt'
    prior: float
    a_op: np.ndarray   # acts on the first site
    b_op: np.ndarray   # acts on the second site
    detail: tuple = ()


def enumerate_two_site_branches(params: PairStepParams, ops: TruncatedOps,
                                L: int = 1, sigma_v: int = 0, sigma_u: int = 0,
                                psd_tol: float = 1e-12) -> list[TwoSiteBranch]:
    """Explicit product-Kraus mixture of the pair channel (266 branches).

    Complete positivity of the recycling branches requires the integrated
    loss/gain shares to dominate the quadratic coupling and the dephasing
    share to dominate |U_int|; violations raise ThresholdViolation.
    """
    d = ops.d
    dim = (d + 1) ** L
    eye = np.eye(dim, dtype=complex)
    K1, K2 = params.K
    g0 = params.g0
    absu = abs(params.U_int)
    if K1[2] < absu - psd_tol or K2[2] < absu - psd_tol:
        raise ThresholdViolation(
            f"dephasing share ({min(K1[2], K2[2]):.3e}) below |U_int| ({absu:.3e})")

    def q_op(K, sigma):
        n_loc = ops.n
        aad = ops.a @ ops.adag
        return _embed(expm(-(K[0] * n_loc + K[1] * aad + K[2] * n_loc @ n_loc) / 2), sigma, L)

    Q1 = q_op(K1, sigma_v)
    Q2 = q_op(K2, sigma_u)
    c_v = [_embed(ops.c1, sigma_v, L), _embed(ops.c2, sigma_v, L)]
    c_u = [_embed(ops.c1, sigma_u, L), _embed(ops.c2, sigma_u, L)]
    n_v = _embed(ops.n, sigma_v, L)
    n_u = _embed(ops.n, sigma_u, L)
    phase = math.sqrt(2.0) * np.exp(-0.25j * np.pi)
    sqrtG = [[np.sqrt(complex(params.G[a][b])) for b in range(2)] for a in range(2)]

    branches: list[TwoSiteBranch] = []
    pairs_ab = [(a, b) for a in range(2) for b in range(2)]
    for zs in itertools.product(_ROOT4, repeat=4):
        A = Q1.copy()
        B = Q2.copy()
        for (a, b), z in zip(pairs_ab, zs):
            A = A + phase * z * sqrtG[a][b] * c_v[a]
            B = B + phase * np.conj(z) * sqrtG[a][b] * c_u[b]
        branches.append(TwoSiteBranch("R", 1.0 / 512.0, A, B, detail=zs))
    sqrtU = np.sqrt(complex(params.U_int))
    for y in _ROOT4:
        A = Q1 + phase * y * sqrtU * n_v
        B = Q2 + phase * np.conj(y) * sqrtU * n_u
        branches.append(TwoSiteBranch("Rt", 1.0 / 8.0, A, B, detail=(y,)))
    # loss/gain recycling minus quadrature surplus, one 2x2 form per mode
    row_abs = [sum(abs(params.G[a][b]) for b in range(2)) for a in range(2)]
    col_abs = [sum(abs(params.G[a][b]) for a in range(2)) for b in range(2)]
    for mode, (K, s_off, sigma) in enumerate((
            (K1, 0.5 * (row_abs[1] - row_abs[0]), sigma_v),
            (K2, 0.5 * (col_abs[1] - col_abs[0]), sigma_u))):
        F = np.array([[K[0] - g0 / 2, s_off], [s_off, K[1] - g0 / 2]])
        lam, W = np.linalg.eigh(F)
        if lam.min() < -psd_tol:
            raise ThresholdViolation(
                f"recycling form of pair mode {mode} has eigenvalue {lam.min():.3e}")
        for k in range(2):
            op_loc = W[0, k] * ops.a + W[1, k] * ops.adag
            op = _embed(op_loc, sigma, L)
            A, B = (op, eye) if mode == 0 else (eye, op)
            branches.append(TwoSiteBranch("V", float(max(lam[k], 0.0)), A, B,
                                          detail=(mode, k)))
    for mode, n_op in enumerate((n_v, n_u)):
        w = params.K[mode][2] - absu
        A, B = (n_op, eye) if mode == 0 else (eye, n_op)
        branches.append(TwoSiteBranch("Vt", float(max(w, 0.0)), A, B, detail=(mode,)))
    return branches


@dataclass
class PairBranchSet:
    """Branch list of one pair channel, stacked for fast weight evaluation."""

    site_i: int
    site_j: int
    priors: np.ndarray       # (n_branches,)
    a_ops: np.ndarray        # (n_branches, D, D)
    b_ops: np.ndarray
    a_gram: np.ndarray = field(init=False)   # A^dag A stacked, for traces
    b_gram: np.ndarray = field(init=False)
    a_gram_flat: np.ndarray = field(init=False)   # rows vec((A^dag A)^T)
    b_gram_flat: np.ndarray = field(init=False)

    def __post_init__(self):
        self.a_gram = np.einsum("bij,bik->bjk", self.a_ops.conj(), self.a_ops)
        self.b_gram = np.einsum("bij,bik->bjk", self.b_ops.conj(), self.b_ops)
        nb, D, _ = self.a_ops.shape
        self.a_gram_flat = self.a_gram.transpose(0, 2, 1).reshape(nb, D * D)
        self.b_gram_flat = self.b_gram.transpose(0, 2, 1).reshape(nb, D * D)

    @classmethod
    def from_branches(cls, site_i, site_j, branches):
        return cls(site_i=site_i, site_j=site_j,
                   priors=np.array([b.prior for b in branches]),
                   a_ops=np.stack([b.a_op for b in branches]),
                   b_ops=np.stack([b.b_op for b in branches]))


def sample_two_site_step(state: BosonProductState, branch_set: PairBranchSet,
                         rng: np.random.Generator) -> BosonProductState:
    """Pick one product branch by posterior weight and apply it to both sites."""
    rho_i = state.sites[branch_set.site_i]
    rho_j = state.sites[branch_set.site_j]
    tr_a = np.einsum("bjk,kj->b", branch_set.a_gram, rho_i).real
    tr_b = np.einsum("bjk,kj->b", branch_set.b_gram, rho_j).real
    w = branch_set.priors * np.clip(tr_a, 0.0, None) * np.clip(tr_b, 0.0, None)
    total = w.sum()
    if total <= 0.0:
        raise RuntimeError("two-site step has no branch with positive weight")
    k = rng.choice(len(w), p=w / total)
    A = branch_set.a_ops[k]
    B = branch_set.b_ops[k]
    out = state.copy()
    new_i = A @ rho_i @ A.conj().T
    new_j = B @ rho_j @ B.conj().T
    out.sites[branch_set.site_i] = new_i / np.trace(new_i).real
    out.sites[branch_set.site_j] = new_j / np.trace(new_j).real
    out.log_weight = state.log_weight + math.log(total)
    return out


# ---------------------------------------------------------------------------
# trajectory runners
# ---------------------------------------------------------------------------

def _boson_step_schedule(spec: ModelSpec, t: float, T: int, d: int):
    ops = build_truncated_ops(d)
    intervals = build_step_grid(t, T, spec.breakpoints_union())
    pairs = spec.coupled_intersite_pairs()
    plan = []
    for (a, b) in intervals:
        site_channels = [_site_channel_kraus(spec, s, (a + b) / 2, b - a, ops)
                         for s in range(spec.n)]
        branch_sets = []
        for (v, u) in pairs:
            params = pair_step_params(spec, v, u, a, b)
            branches = enumerate_two_site_branches(
                params, ops, L=spec.L, sigma_v=v % spec.L, sigma_u=u % spec.L)
            branch_sets.append(PairBranchSet.from_branches(
                spec.site_of(v), spec.site_of(u), branches))
        plan.append((site_channels, branch_sets))
    return plan


def _apply_site_channel(rho: np.ndarray, channel) -> np.ndarray:
    kind, data = channel
    if kind == "unitary":
        return data @ rho @ data.conj().T
    out = np.zeros_like(rho)
    for K in data:
        out += K @ rho @ K.conj().T
    return out


def _run_single(state: BosonProductState, plan, rng,
                check_invariants: bool) -> BosonProductState:
    for site_channels, branch_sets in plan:
        out = state.copy()
        for s, ch in enumerate(site_channels):
            out.sites[s] = _apply_site_channel(out.sites[s], ch)
        state = out
        for bs in branch_sets:
            state = sample_two_site_step(state, bs, rng)
        if check_invariants:
            state.validate()
    return state


def run_boson_trajectory(spec: ModelSpec, t: float, T: int, d: int,
                         rng: np.random.Generator,
                         init: BosonProductState | None = None,
                         check_invariants: bool = False):
    """One trajectory; returns (final product state, one Fock sample)."""
    state = init.copy() if init is not None else boson_initial_state(spec, d)
    plan = _boson_step_schedule(spec, t, T, d)
    state = _run_single(state, plan, rng, check_invariants)
    return state, state.sample_fock(rng)


@dataclass
class BosonRunResult:
    number_expectations: np.ndarray   # (B, m) per-trajectory <n_v>
    log_weights: np.ndarray
    fock_samples: np.ndarray          # (B, m)

    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()

    def mean_numbers(self) -> np.ndarray:
        return self.weights() @ self.number_expectations

    def number_expectation(self, v: int):
        w = self.weights()
        f = self.number_expectations[:, v]
        value = float(w @ f)
        n = len(w)
        loo = (value - w * f) / (1.0 - w)
        stderr = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
        return value, stderr


def _batched_pair_step(R_i, R_j, logw, bs, rng):
    """Vectorised sample_two_site_step across the trajectory axis."""
    B, D, _ = R_i.shape
    tr_a = np.clip((bs.a_gram_flat @ R_i.reshape(B, D * D).T).real, 0.0, None)
    tr_b = np.clip((bs.b_gram_flat @ R_j.reshape(B, D * D).T).real, 0.0, None)
    w = bs.priors[:, None] * tr_a * tr_b            # (branches, B)
    total = w.sum(axis=0)
    if np.any(total <= 0.0):
        raise RuntimeError("two-site step has no branch with positive weight")
    cum = np.cumsum(w, axis=0)
    u = rng.random(B) * total
    sel = np.minimum((cum < u[None, :]).sum(axis=0), len(bs.priors) - 1)
    A = bs.a_ops[sel]
    Bop = bs.b_ops[sel]
    new_i = A @ R_i @ A.conj().transpose(0, 2, 1)
    new_j = Bop @ R_j @ Bop.conj().transpose(0, 2, 1)
    tri = np.einsum("bii->b", new_i).real
    trj = np.einsum("bii->b", new_j).real
    logw += np.log(total)
    return new_i / tri[:, None, None], new_j / trj[:, None, None]


def _batched_site_channel(R, channel):
    kind, data = channel
    if kind == "unitary":
        return data[None] @ R @ data.conj().T[None]
    out = np.zeros_like(R)
    for K in data:
        out += K[None] @ R @ K.conj().T[None]
    return out


def _batched_invariants(R, herm_tol=1e-10, eig_tol=1e-9):
    bad = np.abs(R - R.conj().transpose(0, 2, 1)).max()
    if bad > herm_tol:
        raise ValueError(f"batched hermiticity violation {bad:.2e}")
    ev = np.linalg.eigvalsh(R).min()
    if ev < -eig_tol:
        raise ValueError(f"batched positivity violation {ev:.2e}")


def _batched_fock_sample(R_sites, d, L, rng):
    B = R_sites[0].shape[0]
    m = len(R_sites) * L
    occ = np.empty((B, m), dtype=np.int64)
    dloc = d + 1
    for i, R in enumerate(R_sites):
        p = np.clip(np.einsum("bii->bi", R).real, 0.0, None)
        p = p / p.sum(axis=1, keepdims=True)
        cum = np.cumsum(p, axis=1)
        idx = (cum < rng.random(B)[:, None]).sum(axis=1)
        for sig in range(L - 1, -1, -1):
            occ[:, i * L + sig] = idx % dloc
            idx //= dloc
    return occ


def run_boson_population(spec: ModelSpec, t: float, T: int, d: int, n_traj: int,
                         seed: int, check_invariants: bool = True) -> BosonRunResult:
    """Vectorised run of n_traj trajectories sharing one counter-based stream."""
    plan = _boson_step_schedule(spec, t, T, d)
    init = boson_initial_state(spec, d)
    rng = trajectory_rng(seed)
    B = n_traj
    R_sites = [np.broadcast_to(s, (B,) + s.shape).copy() for s in init.sites]
    logw = np.zeros(B)
    for site_channels, branch_sets in plan:
        for s, ch in enumerate(site_channels):
            R_sites[s] = _batched_site_channel(R_sites[s], ch)
        for bs in branch_sets:
            R_sites[bs.site_i], R_sites[bs.site_j] = _batched_pair_step(
                R_sites[bs.site_i], R_sites[bs.site_j], logw, bs, rng)
        if check_invariants:
            for R in R_sites:
                _batched_invariants(R)
    dloc = d + 1
    ns = np.arange(dloc)
    nums = np.empty((B, spec.m))
    for i, R in enumerate(R_sites):
        diag = np.einsum("bii->bi", R).real.reshape((B,) + (dloc,) * spec.L)
        for sig in range(spec.L):
            axes = tuple(1 + x for x in range(spec.L) if x != sig)
            nums[:, i * spec.L + sig] = diag.sum(axis=axes) @ ns
    fock = _batched_fock_sample(R_sites, d, spec.L, rng)
    return BosonRunResult(number_expectations=nums, log_weights=logw, fock_samples=fock)
