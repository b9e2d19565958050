"""Dense reference implementation for small systems.

Everything here is brute force on purpose: full density matrices, explicit
superoperators, matrix exponentials.  It exists to validate the scalable
samplers and to run the small counterexample experiments.

Conventions (frozen; every cross-module test depends on them):
  * mode ordering: mode index v = (i-1)*L + sigma, counted from 0 internally;
    mode 0 is the most significant tensor factor.
  * fermions: qubit |1> = occupied, annihilation realised with a parity
    string over lower-indexed modes so anticommutation holds exactly.
  * quadratures/Majoranas: c1 = (a^dag + a)/sqrt(2), c2 = i(a^dag - a)/sqrt(2).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .model import ModelSpec, build_step_grid, leftover_rate, noise_split_weights

__all__ = [
    "DenseState",
    "Liouvillian",
    "build_liouvillian",
    "evolve_exact",
    "evolve_piecewise",
    "trotterized_dense",
    "trace_distance",
    "wigner",
    "WignerResult",
    "offdiag_entanglement",
    "even_obs_reduction",
    "min_eig_partial_transpose",
    "gate_fidelity",
    "FidelityReport",
    "fermion_ops",
    "boson_mode_ops",
    "dense_initial_state",
    "covariance_of_dense",
    "number_expectations",
    "fock_distribution",
    "tail_occupancy",
]

FERMION_MODE_CAP = 10
BOSON_DIM_CAP = 4096
DENSE_EXPM_DIM = 64  # above this state dimension, fall back to adaptive stepping


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasisInfo:
    kind: str          # 'fermion' | 'boson'
    m: int
    d: int = 1         # per-mode truncation (bosons); 1 for fermions

    @property
    def local_dim(self) -> int:
        return 2 if self.kind == "fermion" else self.d + 1

    @property
    def dim(self) -> int:
        return self.local_dim ** self.m


@dataclass
class DenseState:
    rho: np.ndarray
    basis: BasisInfo

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def validate(self, herm_tol=1e-10, trace_tol=1e-9, psd_tol=1e-8):
        rho = self.rho
        if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
            raise ValueError("density matrix is not Hermitian within tolerance")
        if abs(np.trace(rho).real - 1.0) > trace_tol or abs(np.trace(rho).imag) > trace_tol:
            raise ValueError("density matrix trace differs from 1")
        if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -psd_tol:
            raise ValueError("density matrix has a negative eigenvalue beyond tolerance")
        return self

    def copy(self) -> "DenseState":
        return DenseState(self.rho.copy(), self.basis)


# ---------------------------------------------------------------------------
# operator caches
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def fermion_ops(m: int):
    """JW-realised annihilation, Majorana and number operators for m modes.

    Returns a dict with keys 'a', 'c1', 'c2', 'n' mapping to length-m lists.
    """
    if m > FERMION_MODE_CAP:
        raise ValueError(f"fermionic oracle capped at {FERMION_MODE_CAP} modes")
    a_loc = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    z_loc = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    eye = np.eye(2, dtype=complex)
    ann = []
    for v in range(m):
        op = np.ones((1, 1), dtype=complex)
        for w in range(m):
            if w < v:
                op = np.kron(op, z_loc)
            elif w == v:
                op = np.kron(op, a_loc)
            else:
                op = np.kron(op, eye)
        ann.append(op)
    c1 = [(a.conj().T + a) / math.sqrt(2) for a in ann]
    c2 = [1j * (a.conj().T - a) / math.sqrt(2) for a in ann]
    n = [a.conj().T @ a for a in ann]
    return {"a": ann, "c1": c1, "c2": c2, "n": n}


@lru_cache(maxsize=16)
def boson_mode_ops(m: int, d: int):
    """Truncated annihilation/quadrature/number operators embedded in m modes."""
    dim = (d + 1) ** m
    if dim > BOSON_DIM_CAP:
        raise ValueError(f"bosonic oracle capped at total dimension {BOSON_DIM_CAP}")
    a_loc = np.diag(np.sqrt(np.arange(1, d + 1)), k=1).astype(complex)
    eye = np.eye(d + 1, dtype=complex)
    ann = []
    for v in range(m):
        op = np.ones((1, 1), dtype=complex)
        for w in range(m):
            op = np.kron(op, a_loc if w == v else eye)
        ann.append(op)
    c1 = [(a.conj().T + a) / math.sqrt(2) for a in ann]
    c2 = [1j * (a.conj().T - a) / math.sqrt(2) for a in ann]
    n = [a.conj().T @ a for a in ann]
    return {"a": ann, "c1": c1, "c2": c2, "n": n}


def _ops_for(spec: ModelSpec, d: int):
    if spec.particle_kind == "fermion":
        return fermion_ops(spec.m)
    return boson_mode_ops(spec.m, d)


# ---------------------------------------------------------------------------
# Hamiltonian and Liouvillian assembly
# ---------------------------------------------------------------------------

def hamiltonian_dense(spec: ModelSpec, t: float, d: int = 1) -> np.ndarray:
    ops = _ops_for(spec, d)
    dim = ops["a"][0].shape[0]
    H = np.zeros((dim, dim), dtype=complex)
    cs = (ops["c1"], ops["c2"])
    for (v, a, u, b), e in spec._j_table.items():
        H += e.value_at(t) * (cs[a][v] @ cs[b][u])
    for (v, u), e in spec._u_table.items():
        H += complex(e.value_at(t)).real * (ops["n"][v] @ ops["n"][u])
    for (v, a), e in spec._d_table.items():
        H += complex(e.value_at(t)).real * cs[a][v]
    return H


def jump_operators(spec: ModelSpec, d: int = 1):
    """(rate, L) pairs for loss, gain and dephasing on every mode."""
    ops = _ops_for(spec, d)
    out = []
    for v in range(spec.m):
        if spec.kappa1 > 0:
            out.append((spec.kappa1, ops["a"][v]))
        if spec.kappa2 > 0:
            out.append((spec.kappa2, ops["a"][v].conj().T))
        if spec.kappa3 > 0:
            out.append((spec.kappa3, ops["n"][v]))
    return out


def hamiltonian_superop(H: np.ndarray) -> np.ndarray:
    dim = H.shape[0]
    eye = np.eye(dim)
    return -1j * (np.kron(H, eye) - np.kron(eye, H.T))


def dissipator_superop(L: np.ndarray) -> np.ndarray:
    dim = L.shape[0]
    eye = np.eye(dim)
    LdL = L.conj().T @ L
    return (np.kron(L, L.conj())
            - 0.5 * np.kron(LdL, eye)
            - 0.5 * np.kron(eye, LdL.T))


@dataclass
class Liouvillian:
    dim: int
    hamiltonian: np.ndarray
    jumps: list
    matrix: np.ndarray | None = None

    def apply(self, rho: np.ndarray) -> np.ndarray:
        H = self.hamiltonian
        out = -1j * (H @ rho - rho @ H)
        for rate, L in self.jumps:
            Ld = L.conj().T
            LdL = Ld @ L
            out += rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
        return out

    def as_matrix(self) -> np.ndarray:
        if self.matrix is None:
            M = hamiltonian_superop(self.hamiltonian)
            for rate, L in self.jumps:
                M += rate * dissipator_superop(L)
            self.matrix = M
        return self.matrix


def build_liouvillian(spec: ModelSpec, t: float, d: int = 1) -> Liouvillian:
    """Generator of the full noisy dynamics at time t (dense, desk scale)."""
    H = hamiltonian_dense(spec, t, d)
    L = Liouvillian(dim=H.shape[0], hamiltonian=H, jumps=jump_operators(spec, d))
    if L.dim <= DENSE_EXPM_DIM:
        L.as_matrix()
    return L


# ---------------------------------------------------------------------------
# time evolution
# ---------------------------------------------------------------------------

def _propagate_interval(rho, H, jumps, tau, rtol=1e-10, atol=1e-12,
                        dense_cutoff=DENSE_EXPM_DIM):
    dim = rho.shape[0]
    if not jumps:
        U = expm(-1j * H * tau)
        return U @ rho @ U.conj().T
    lv = Liouvillian(dim=dim, hamiltonian=H, jumps=list(jumps))
    if dim <= dense_cutoff:
        P = expm(lv.as_matrix() * tau)
        return (P @ rho.reshape(-1)).reshape(dim, dim)
    sol = solve_ivp(lambda _t, y: lv.apply(y.reshape(dim, dim)).reshape(-1),
                    (0.0, tau), rho.reshape(-1), method="DOP853",
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"integrator failed: {sol.message}")
    return sol.y[:, -1].reshape(dim, dim)


def evolve_exact(state: DenseState, spec: ModelSpec, t0: float, t1: float) -> DenseState:
    """Exact evolution of the dense state, split at schedule breakpoints."""
    if t1 < t0:
        raise ValueError("t1 < t0")
    edges = [t0] + [b for b in spec.breakpoints_union() if t0 < b < t1] + [t1]
    rho = state.rho
    d = state.basis.d
    for a, b in zip(edges, edges[1:]):
        H = hamiltonian_dense(spec, (a + b) / 2, d)
        rho = _propagate_interval(rho, H, jump_operators(spec, d), b - a)
    return DenseState(rho, state.basis)


def evolve_piecewise(state: DenseState, segments, jumps,
                     dense_cutoff: int = 20) -> DenseState:
    """Evolve through [(duration, H), ...] segments under fixed jump operators.

    Meant for many short segments (drive schedules): noiseless segments get a
    plain unitary conjugation, noisy ones a dense exponential only while the
    state is small, an adaptive integrator otherwise.
    """
    rho = state.rho
    for tau, H in segments:
        if tau < 0:
            raise ValueError("segment durations must be nonnegative")
        if tau > 0:
            rho = _propagate_interval(rho, H, jumps, tau, dense_cutoff=dense_cutoff)
    return DenseState(rho, state.basis)


# ---------------------------------------------------------------------------
# initial states
# ---------------------------------------------------------------------------

def dense_initial_state(spec: ModelSpec, d: int = 1) -> DenseState:
    init = spec.initial
    if spec.particle_kind == "fermion":
        basis = BasisInfo("fermion", spec.m)
        vec = np.zeros(basis.dim, dtype=complex)
        vec[0] = 1.0
        if init.kind == "fock":
            ops = fermion_ops(spec.m)
            for v, occ in enumerate(init.occupations):
                if occ:
                    vec = ops["a"][v].conj().T @ vec
        return DenseState(np.outer(vec, vec.conj()), basis)
    basis = BasisInfo("boson", spec.m, d)
    if init.kind == "coherent":
        locs = [coherent_vector(complex(al), d) for al in init.alphas]
    else:
        locs = [_vac_vector(d)] * spec.m
    vec = locs[0]
    for loc in locs[1:]:
        vec = np.kron(vec, loc)
    return DenseState(np.outer(vec, vec.conj()), basis)


def _vac_vector(d: int) -> np.ndarray:
    v = np.zeros(d + 1, dtype=complex)
    v[0] = 1.0
    return v


def coherent_vector(alpha: complex, d: int, renorm_warn: float = 1e-8) -> np.ndarray:
    k = np.arange(d + 1)
    logs = k * np.log(np.abs(alpha)) - 0.5 * np.array([math.lgamma(x + 1) for x in k]) \
        if alpha != 0 else np.where(k == 0, 0.0, -np.inf)
    mags = np.exp(logs - np.abs(alpha) ** 2 / 2)
    phases = np.exp(1j * np.angle(alpha) * k)
    vec = mags * phases
    norm = np.linalg.norm(vec)
    if abs(1 - norm) > renorm_warn:
        warnings.warn(f"coherent state truncated: norm deficit {1 - norm:.2e}")
    return vec / norm


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def trace_distance(a: DenseState, b: DenseState) -> float:
    """Half the trace norm of the difference; in [0, 1] for states."""
    if a.basis != b.basis:
        raise ValueError("trace distance requires a common basis")
    diff = a.rho - b.rho
    return 0.5 * float(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum())


def _mode_digits(basis: BasisInfo):
    ld, m = basis.local_dim, basis.m
    idx = np.arange(basis.dim)
    digits = np.empty((m, basis.dim), dtype=np.int64)
    for v in range(m - 1, -1, -1):
        digits[v] = idx % ld
        idx = idx // ld
    return digits


def number_expectations(state: DenseState) -> np.ndarray:
    diag = np.real(np.diag(state.rho))
    return _mode_digits(state.basis) @ diag


def fock_distribution(state: DenseState) -> np.ndarray:
    """Diagonal of rho in the occupation basis (clipped, renormalised)."""
    diag = np.clip(np.real(np.diag(state.rho)), 0.0, None)
    return diag / diag.sum()


def tail_occupancy(state: DenseState, d: int) -> float:
    """Total weight on basis states with at least d particles in total."""
    totals = _mode_digits(state.basis).sum(axis=0)
    return float(np.real(np.diag(state.rho))[totals >= d].sum())


def covariance_of_dense(state: DenseState) -> np.ndarray:
    """Antisymmetric correlation matrix (i/2)tr(rho [c_mu, c_nu]) of a fermionic state."""
    if state.basis.kind != "fermion":
        raise ValueError("covariance bridge is fermionic")
    m = state.basis.m
    ops = fermion_ops(m)
    cs = []
    for v in range(m):
        cs.append(ops["c1"][v])
        cs.append(ops["c2"][v])
    gamma = np.zeros((2 * m, 2 * m))
    for mu in range(2 * m):
        for nu in range(mu + 1, 2 * m):
            comm = cs[mu] @ cs[nu] - cs[nu] @ cs[mu]
            gamma[mu, nu] = np.real(0.5j * np.trace(state.rho @ comm))
            gamma[nu, mu] = -gamma[mu, nu]
    return gamma


# ---------------------------------------------------------------------------
# Wigner function
# ---------------------------------------------------------------------------

def hermite_functions(pts: np.ndarray, count: int) -> np.ndarray:
    """Harmonic-oscillator position wavefunctions psi_0..psi_{count-1} at pts."""
    out = np.empty((len(pts), count))
    out[:, 0] = np.pi ** -0.25 * np.exp(-pts ** 2 / 2)
    if count > 1:
        out[:, 1] = math.sqrt(2.0) * pts * out[:, 0]
    for k in range(2, count):
        out[:, k] = (math.sqrt(2.0 / k) * pts * out[:, k - 1]
                     - math.sqrt((k - 1) / k) * out[:, k - 2])
    return out


@dataclass
class WignerResult:
    W: np.ndarray    # shape (len(x), len(p))
    x: np.ndarray
    p: np.ndarray
    w_min: float
    w_max: float
    mass: float      # grid integral of W, should be ~1


def wigner(state: DenseState, x: np.ndarray, p: np.ndarray,
           n_y: int = 513, boundary_tol: float = 1e-6) -> WignerResult:
    """Phase-space distribution W(x, p) of a single-mode state.

    Evaluates (1/pi) * Integral dy <x-y|rho|x+y> exp(2ipy) on the supplied
    grid, using the truncated Fock basis position wavefunctions.
    """
    if state.basis.m != 1:
        raise ValueError("wigner expects a single-mode state")
    rho = state.rho
    D = rho.shape[0]
    boundary = float(np.real(rho[D - 1, D - 1]))
    if boundary > boundary_tol:
        warnings.warn(f"boundary Fock population {boundary:.2e} exceeds {boundary_tol:.0e}; "
                      "increase the truncation")
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    support = math.sqrt(2 * D + 1) + 2.0
    y_max = support + np.max(np.abs(x))
    y = np.linspace(-y_max, y_max, n_y)
    dy = y[1] - y[0]
    phases = np.exp(2j * np.outer(y, p))          # (n_y, n_p)
    W = np.empty((len(x), len(p)))
    for ix, xv in enumerate(x):
        psi_m = hermite_functions(xv - y, D)      # <x-y|k>
        psi_p = hermite_functions(xv + y, D)
        f = np.einsum("yd,de,ye->y", psi_m, rho, psi_p)
        W[ix] = np.real(f @ phases) * dy / np.pi
    mass = float(np.trapezoid(np.trapezoid(W, p, axis=1), x))
    return WignerResult(W=W, x=x, p=p, w_min=float(W.min()), w_max=float(W.max()),
                        mass=mass)


# ---------------------------------------------------------------------------
# fermionic entanglement diagnostics
# ---------------------------------------------------------------------------

def offdiag_entanglement(state: DenseState) -> float:
    """Sum of |rho_bb'| over all off-diagonal occupation-basis pairs (2 modes)."""
    if state.basis.kind != "fermion" or state.basis.m != 2:
        raise ValueError("off-diagonal measure is defined for 2 fermionic modes")
    off = np.abs(state.rho.copy())
    np.fill_diagonal(off, 0.0)
    return float(off.sum())


def even_obs_reduction(state: DenseState) -> tuple[np.ndarray, np.ndarray]:
    """Two-qubit reduction of a 4-mode fermionic state on the {1,2}|{3,4} split.

    The rows of the reduction map are the states a3+|vac>, a4+|vac>,
    a3+ a2+ a1+ |vac> and a4+ a2+ a1+ |vac>, identified with |00>, |01>,
    |10> and |11> of the qubit pair.  Returns (unnormalised, normalised).
    """
    if state.basis.kind != "fermion" or state.basis.m != 4:
        raise ValueError("reduction is defined for 4 fermionic modes")
    ops = fermion_ops(4)
    adag = [a.conj().T for a in ops["a"]]
    vac = np.zeros(16, dtype=complex)
    vac[0] = 1.0
    rows = [
        adag[2] @ vac,
        adag[3] @ vac,
        adag[2] @ adag[1] @ adag[0] @ vac,
        adag[3] @ adag[1] @ adag[0] @ vac,
    ]
    M = np.array([r.conj() for r in rows])
    sigma = M @ state.rho @ M.conj().T
    tr = np.trace(sigma).real
    if tr <= 0:
        raise ValueError("reduction has no support")
    return sigma, sigma / tr


def min_eig_partial_transpose(sigma: np.ndarray) -> float:
    """Minimum eigenvalue of the partial transpose (over the second qubit)."""
    sigma = np.asarray(sigma)
    if sigma.shape != (4, 4):
        raise ValueError("expected a two-qubit matrix")
    pt = sigma.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)
    return float(np.linalg.eigvalsh((pt + pt.conj().T) / 2).min())


# ---------------------------------------------------------------------------
# gate fidelity
# ---------------------------------------------------------------------------

@dataclass
class FidelityReport:
    fidelity: float
    code_population: float
    noise_bound: float | None = None


def gate_fidelity(output: DenseState, code_states: list[np.ndarray],
                  target_unitary: np.ndarray, input_coeffs: np.ndarray,
                  noise_bound: float | None = None) -> FidelityReport:
    """Overlap of the code-subspace projection of the output with the target image.

    ``code_states`` are orthonormal full-space vectors spanning the code
    subspace; ``input_coeffs`` expresses the input state in that basis.
    """
    M = np.array([c.conj() for c in code_states])
    rho_code = M @ output.rho @ M.conj().T
    pop = float(np.trace(rho_code).real)
    if pop <= 1e-12:
        raise ValueError("output has no weight on the code subspace")
    rho_code = rho_code / pop
    psi = target_unitary @ np.asarray(input_coeffs, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    fid = float(np.real(psi.conj() @ rho_code @ psi))
    return FidelityReport(fidelity=fid, code_population=pop, noise_bound=noise_bound)


# ---------------------------------------------------------------------------
# dense Trotterized evolution (reference for the step-count bounds)
# ---------------------------------------------------------------------------

def _fermion_split_superops(spec: ModelSpec, t: float):
    ops = fermion_ops(spec.m)
    dim = 2 ** spec.m
    cs = (ops["c1"], ops["c2"])
    Hg = np.zeros((dim, dim), dtype=complex)
    for (v, a, u, b), e in spec._j_table.items():
        Hg += e.value_at(t) * (cs[a][v] @ cs[b][u])
    Hng = np.zeros((dim, dim), dtype=complex)
    for (v, u), e in spec._u_table.items():
        Hng += complex(e.value_at(t)).real * (ops["n"][v] @ ops["n"][u])
    Lg = hamiltonian_superop(Hg)
    for v in range(spec.m):
        if spec.kappa1:
            Lg += spec.kappa1 * dissipator_superop(ops["a"][v])
        if spec.kappa2:
            Lg += spec.kappa2 * dissipator_superop(ops["a"][v].conj().T)
    Lng = hamiltonian_superop(Hng)
    for v in range(spec.m):
        if spec.kappa3:
            Lng += spec.kappa3 * dissipator_superop(ops["n"][v])
    return Lg, Lng


def _boson_split_superops(spec: ModelSpec, t: float, d: int):
    """On-site generator plus one generator per coupled inter-site pair."""
    ops = boson_mode_ops(spec.m, d)
    dim = (d + 1) ** spec.m
    cs = (ops["c1"], ops["c2"])
    Hos = np.zeros((dim, dim), dtype=complex)
    for (v, a, u, b), e in spec._j_table.items():
        if spec.site_of(v) == spec.site_of(u):
            Hos += e.value_at(t) * (cs[a][v] @ cs[b][u])
    for (v, u), e in spec._u_table.items():
        if spec.site_of(v) == spec.site_of(u):
            Hos += complex(e.value_at(t)).real * (ops["n"][v] @ ops["n"][u])
    for (v, a), e in spec._d_table.items():
        Hos += complex(e.value_at(t)).real * cs[a][v]
    Los = hamiltonian_superop(Hos)
    jump_of = {1: lambda v: ops["a"][v], 2: lambda v: ops["a"][v].conj().T,
               3: lambda v: ops["n"][v]}
    kappa = {1: spec.kappa1, 2: spec.kappa2, 3: spec.kappa3}
    for v in range(spec.m):
        for l in (1, 2, 3):
            rate = leftover_rate(spec, v, l, t)
            if rate:
                Los += rate * dissipator_superop(jump_of[l](v))
    pair_gens = []
    for (v, u) in spec.coupled_intersite_pairs():
        Hp = np.zeros((dim, dim), dtype=complex)
        for a in (0, 1):
            for b in (0, 1):
                Hp += 2 * spec.j_value(v, a, u, b, t) * (cs[a][v] @ cs[b][u])
        Hp += 2 * spec.u_value(v, u, t) * (ops["n"][v] @ ops["n"][u])
        Lp = hamiltonian_superop(Hp)
        for l in (1, 2, 3):
            if kappa[l]:
                pw = noise_split_weights(spec, v, u, l, "p", t)
                qw = noise_split_weights(spec, v, u, l, "q", t)
                if pw:
                    Lp += kappa[l] * pw * dissipator_superop(jump_of[l](v))
                if qw:
                    Lp += kappa[l] * qw * dissipator_superop(jump_of[l](u))
        pair_gens.append(Lp)
    return Los, pair_gens


def trotterized_dense(state: DenseState, spec: ModelSpec, t: float, T: int) -> DenseState:
    """First-order split evolution with T steps, as a dense superoperator product."""
    steps = build_step_grid(t, T, spec.breakpoints_union())
    vec = state.rho.reshape(-1)
    if spec.particle_kind == "fermion":
        for a, b in steps:
            Lg, Lng = _fermion_split_superops(spec, (a + b) / 2)
            vec = expm(Lng * (b - a)) @ (expm(Lg * (b - a)) @ vec)
    else:
        d = state.basis.d
        for a, b in steps:
            Los, pair_gens = _boson_split_superops(spec, (a + b) / 2, d)
            vec = expm(Los * (b - a)) @ vec
            for Lp in pair_gens:
                vec = expm(Lp * (b - a)) @ vec
    dim = state.dim
    return DenseState(vec.reshape(dim, dim), state.basis)
