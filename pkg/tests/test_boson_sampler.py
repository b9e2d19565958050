import itertools
import math

import numpy as np
import pytest
from scipy.linalg import expm

from noisylattice import boson_sampler as bs
from noisylattice import oracle as orc
from noisylattice.fermion_sampler import trajectory_rng
from noisylattice.model import (InitialState, ModelSpec, ScheduleEntry,
                                boson_hopping_entries)


# ---------------------------------------------------------------------------
# truncated operators
# ---------------------------------------------------------------------------

def test_truncated_ops_basics():
    ops = bs.build_truncated_ops(1)
    assert np.array_equal(ops.a, np.array([[0, 1], [0, 0]], dtype=complex))
    ops3 = bs.build_truncated_ops(3)
    assert np.linalg.norm(ops3.n, 2) == pytest.approx(3.0)
    assert np.linalg.norm(ops3.a, 2) == pytest.approx(math.sqrt(3))
    assert np.abs(ops3.c1 - ops3.c1.conj().T).max() < 1e-14
    assert np.abs(ops3.c2 - ops3.c2.conj().T).max() < 1e-14
    with pytest.raises(ValueError):
        bs.build_truncated_ops(0)


def test_truncation_artifact_in_commutator():
    d = 4
    ops = bs.build_truncated_ops(d)
    comm = ops.a @ ops.adag - ops.adag @ ops.a
    expected = np.eye(d + 1)
    expected[d, d] = -d
    assert np.abs(comm - expected).max() < 1e-12


# ---------------------------------------------------------------------------
# on-site steps
# ---------------------------------------------------------------------------

def test_onsite_identity_without_terms():
    spec = ModelSpec(n=1, L=1, particle_kind="boson",
                     gaussian_couplings=tuple(boson_hopping_entries(1, 1, 1, 1, 0.0)))
    st = bs.boson_initial_state(spec, d=3)
    out = bs.onsite_step(st, spec, 0, 0.0, 0.7)
    assert np.abs(out.sites[0] - st.sites[0]).max() < 1e-12


def test_onsite_kerr_fixes_number_states():
    spec = ModelSpec(n=1, L=1, particle_kind="boson",
                     nongaussian_couplings=(ScheduleEntry((1, 1, 1, 1), (0.0,), (0.5,)),))
    st = bs.boson_initial_state(spec, d=4)
    st.sites[0] = np.zeros((5, 5), dtype=complex)
    st.sites[0][2, 2] = 1.0
    out = bs.onsite_step(st, spec, 0, 0.0, 1.3)
    assert np.abs(out.sites[0] - st.sites[0]).max() < 1e-12


def test_onsite_kerr_matches_oracle_on_coherent_state():
    spec = ModelSpec(n=1, L=1, particle_kind="boson",
                     nongaussian_couplings=(ScheduleEntry((1, 1, 1, 1), (0.0,), (0.4,)),),
                     initial=InitialState("coherent", alphas=(0.8 + 0j,)))
    d = 10
    st = bs.boson_initial_state(spec, d=d)
    out = bs.onsite_step(st, spec, 0, 0.0, 0.6)
    ref = orc.evolve_exact(orc.dense_initial_state(spec, d=d), spec, 0.0, 0.6)
    assert np.abs(out.sites[0] - ref.rho).max() < 1e-8


def test_onsite_step_carries_leftover_dissipators():
    # no inter-site couplings at all: loss must act inside the on-site step
    spec = ModelSpec(n=1, L=1, particle_kind="boson", kappa1=0.7,
                     initial=InitialState("coherent", alphas=(0.9 + 0j,)))
    d = 10
    st = bs.boson_initial_state(spec, d=d)
    out = bs.onsite_step(st, spec, 0, 0.0, 0.8)
    ref = orc.evolve_exact(orc.dense_initial_state(spec, d=d), spec, 0.0, 0.8)
    assert np.abs(out.sites[0] - ref.rho).max() < 1e-8


# ---------------------------------------------------------------------------
# two-site branch mixture
# ---------------------------------------------------------------------------

def example_params(delta=0.02, g_scale=1.0, u_scale=1.0):
    g = np.array([[0.3, -0.2], [0.15, 0.25]]) * g_scale
    u = 0.2 * u_scale
    g0 = np.abs(g).sum()
    K = ((max(1.2, g0) * 1.2 * delta, max(1.1, g0) * 1.2 * delta, max(0.6, abs(u)) * 1.3 * delta),
         (max(1.2, g0) * 1.1 * delta, max(1.1, g0) * 1.15 * delta, max(0.6, abs(u)) * 1.25 * delta))
    return bs.PairStepParams(
        G=tuple(tuple(g[a][b] * delta for b in range(2)) for a in range(2)),
        U_int=u * delta, K=K)


def branch_sum_superop(branches, dim):
    S = np.zeros((dim * dim, dim * dim), dtype=complex)
    for br in branches:
        K = np.kron(br.a_op, br.b_op)
        S += br.prior * np.kron(K, K.conj())
    return S


def test_branch_count_and_kinds():
    ops = bs.build_truncated_ops(3)
    branches = bs.enumerate_two_site_branches(example_params(), ops)
    assert len(branches) == 266
    kinds = {}
    for b in branches:
        kinds[b.kind] = kinds.get(b.kind, 0) + 1
    assert kinds == {"R": 256, "Rt": 4, "V": 4, "Vt": 2}


def test_zero_couplings_collapse_to_identity():
    ops = bs.build_truncated_ops(2)
    params = bs.PairStepParams(G=((0.0,) * 2,) * 2, U_int=0.0, K=((0.0,) * 3,) * 2)
    branches = bs.enumerate_two_site_branches(params, ops)
    assert all(b.prior == 0.0 for b in branches if b.kind in ("V", "Vt"))
    S = branch_sum_superop(branches, 9)
    assert np.abs(S - np.eye(81)).max() < 1e-12


def test_threshold_violations_raise():
    ops = bs.build_truncated_ops(2)
    good = example_params()
    bad_dephasing = bs.PairStepParams(G=good.G, U_int=10.0, K=good.K)
    with pytest.raises(bs.ThresholdViolation, match="dephasing"):
        bs.enumerate_two_site_branches(bad_dephasing, ops)
    bad_recycling = bs.PairStepParams(G=good.G, U_int=good.U_int,
                                      K=((0.0, 0.0, good.K[0][2]), good.K[1]))
    with pytest.raises(bs.ThresholdViolation, match="eigenvalue"):
        bs.enumerate_two_site_branches(bad_recycling, ops)


def independent_mixture_superop(params, ops):
    """Rebuild the mixture from its defining pieces, without the branch list.

    The two randomised families are written out exactly as their expectation
    over fourth roots of unity; the recycling parts enter in Kraus-matrix form
    F_{mu,nu} A_mu . A_nu^dag, bypassing the eigendecomposition used by the
    sampler.
    """
    d = ops.d
    dim = d + 1
    K1, K2 = params.K
    g0 = params.g0
    roots = (1, -1, 1j, -1j)
    q = [expm(-(K[0] * ops.n + K[1] * ops.a @ ops.adag + K[2] * ops.n @ ops.n) / 2)
         for K in (K1, K2)]
    phase = math.sqrt(2) * np.exp(-0.25j * np.pi)
    sqrtG = [[np.sqrt(complex(params.G[a][b])) for b in range(2)] for a in range(2)]
    cs = (ops.c1, ops.c2)
    S = np.zeros((dim ** 4, dim ** 4), dtype=complex)
    for zs in itertools.product(roots, repeat=4):
        R1, R2 = q[0].astype(complex), q[1].astype(complex)
        for (a, b), z in zip([(x, y) for x in range(2) for y in range(2)], zs):
            R1 = R1 + phase * z * sqrtG[a][b] * cs[a]
            R2 = R2 + phase * np.conj(z) * sqrtG[a][b] * cs[b]
        K = np.kron(R1, R2)
        S += (0.5 / 256) * np.kron(K, K.conj())
    sqrtU = np.sqrt(complex(params.U_int))
    for y in roots:
        R1 = q[0] + phase * y * sqrtU * ops.n
        R2 = q[1] + phase * np.conj(y) * sqrtU * ops.n
        K = np.kron(R1, R2)
        S += (0.5 / 4) * np.kron(K, K.conj())
    eye = np.eye(dim, dtype=complex)
    row_abs = [sum(abs(params.G[a][b]) for b in range(2)) for a in range(2)]
    col_abs = [sum(abs(params.G[a][b]) for a in range(2)) for b in range(2)]
    for mode, (K, s_off) in enumerate(((K1, 0.5 * (row_abs[1] - row_abs[0])),
                                       (K2, 0.5 * (col_abs[1] - col_abs[0])))):
        F = np.array([[K[0] - g0 / 2, s_off], [s_off, K[1] - g0 / 2]])
        A = (ops.a, ops.adag)
        for mu in range(2):
            for nu in range(2):
                left = A[mu] if mode == 0 else eye
                right = A[nu] if mode == 0 else eye
                if mode == 1:
                    left, right = eye, eye
                    Kl = np.kron(eye, A[mu])
                    Kr = np.kron(eye, A[nu])
                else:
                    Kl = np.kron(A[mu], eye)
                    Kr = np.kron(A[nu], eye)
                S += F[mu, nu] * np.kron(Kl, Kr.conj())
    for mode in range(2):
        w = params.K[mode][2] - abs(params.U_int)
        N = np.kron(ops.n, eye) if mode == 0 else np.kron(eye, ops.n)
        S += w * np.kron(N, N.conj())
    return S


def test_branch_sum_matches_independent_construction():
    ops = bs.build_truncated_ops(2)
    params = example_params(delta=0.05)
    branches = bs.enumerate_two_site_branches(params, ops)
    S = branch_sum_superop(branches, 9)
    S_ref = independent_mixture_superop(params, ops)
    assert np.abs(S - S_ref).max() < 1e-10


def test_branch_sum_near_trace_preserving():
    d = 3
    ops = bs.build_truncated_ops(d)
    rng = np.random.default_rng(8)
    A = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    rho = A @ A.conj().T
    rho = rho / np.trace(rho).real
    deficits = []
    for delta in (0.04, 0.02):
        params = example_params(delta=delta)
        S = branch_sum_superop(bs.enumerate_two_site_branches(params, ops), 16)
        out = (S @ rho.reshape(-1)).reshape(16, 16)
        deficit = abs(np.trace(out).real - 1.0)
        assert deficit < 8 * d ** 4 * params.total ** 2
        deficits.append(deficit)
    assert 2.5 < deficits[0] / deficits[1] < 5.5  # quadratic in the step size


# ---------------------------------------------------------------------------
# sampling steps
# ---------------------------------------------------------------------------

def _pair_branch_set(params, ops):
    branches = bs.enumerate_two_site_branches(params, ops)
    return bs.PairBranchSet.from_branches(0, 1, branches)


def test_two_site_step_on_vacuum():
    spec = ModelSpec(n=2, L=1, particle_kind="boson")
    st = bs.boson_initial_state(spec, d=3)
    ops = bs.build_truncated_ops(3)
    params = example_params(delta=0.01, u_scale=0.0)
    out = bs.sample_two_site_step(st, _pair_branch_set(params, ops), trajectory_rng(0))
    for s in range(2):
        assert np.abs(out.sites[s] - st.sites[s]).max() < 5e-2  # O(delta) branch kick
    assert math.exp(out.log_weight) == pytest.approx(1.0, abs=1e-3)


def test_two_site_step_diagonal_invariance():
    # number eigenstates are fixed by the dephasing/interaction branches
    spec = ModelSpec(n=2, L=1, particle_kind="boson")
    st = bs.boson_initial_state(spec, d=3)
    for s in range(2):
        st.sites[s] = np.zeros((4, 4), dtype=complex)
        st.sites[s][2, 2] = 1.0
    ops = bs.build_truncated_ops(3)
    params = bs.PairStepParams(G=((0.0,) * 2,) * 2, U_int=0.01,
                               K=((0.0, 0.0, 0.02), (0.0, 0.0, 0.02)))
    rng = trajectory_rng(1)
    out = bs.sample_two_site_step(st, _pair_branch_set(params, ops), rng)
    for s in range(2):
        assert np.abs(out.sites[s] - st.sites[s]).max() < 1e-12


def test_two_site_step_weight_near_one():
    rng = np.random.default_rng(5)
    d = 3
    ops = bs.build_truncated_ops(d)
    spec = ModelSpec(n=2, L=1, particle_kind="boson")
    st = bs.boson_initial_state(spec, d=d)
    for s in range(2):
        A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = A @ A.conj().T
        st.sites[s] = rho / np.trace(rho).real
    deviations = []
    for delta in (0.02, 0.01):
        params = example_params(delta=delta)
        out = bs.sample_two_site_step(st, _pair_branch_set(params, ops),
                                      trajectory_rng(2))
        dev = abs(math.exp(out.log_weight) - 1.0)
        assert dev < 8 * d ** 4 * params.total ** 2
        deviations.append(dev)
        out.validate()
    assert 2.5 < deviations[0] / deviations[1] < 5.5


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def test_trajectory_time_zero(boson_benchmark_spec):
    st, occ = bs.run_boson_trajectory(boson_benchmark_spec, 0.0, 5, 4,
                                      trajectory_rng(0))
    ref = bs.boson_initial_state(boson_benchmark_spec, 4)
    for s in range(2):
        assert np.abs(st.sites[s] - ref.sites[s]).max() < 1e-12
    assert occ.shape == (2,)


def test_uncoupled_sites_evolve_deterministically():
    spec = ModelSpec(n=2, L=1, particle_kind="boson",
                     nongaussian_couplings=(ScheduleEntry((1, 1, 1, 1), (0.0,), (0.4,)),),
                     kappa1=0.5, kappa3=0.2,
                     initial=InitialState("coherent", alphas=(0.7 + 0j, 0.4 + 0j)))
    d = 8
    st, _ = bs.run_boson_trajectory(spec, 1.0, 10, d, trajectory_rng(0),
                                    check_invariants=True)
    assert st.log_weight == pytest.approx(0.0, abs=1e-12)
    ref = orc.evolve_exact(orc.dense_initial_state(spec, d=d), spec, 0.0, 1.0)
    joint = np.kron(st.sites[0], st.sites[1])
    assert np.abs(joint - ref.rho).max() < 1e-7


def test_population_deterministic_given_seed(boson_benchmark_spec):
    a = bs.run_boson_population(boson_benchmark_spec, 0.5, 20, 4, 50, seed=3)
    b = bs.run_boson_population(boson_benchmark_spec, 0.5, 20, 4, 50, seed=3)
    assert np.array_equal(a.number_expectations, b.number_expectations)
    assert np.array_equal(a.log_weights, b.log_weights)
    assert np.array_equal(a.fock_samples, b.fock_samples)


def test_population_agrees_with_single_trajectories(boson_benchmark_spec):
    spec = boson_benchmark_spec
    t, T, d, n = 0.6, 30, 5, 400
    res = bs.run_boson_population(spec, t, T, d, n, seed=6)
    singles = []
    plan = bs._boson_step_schedule(spec, t, T, d)
    init = bs.boson_initial_state(spec, d)
    for k in range(n):
        st = bs._run_single(init.copy(), plan, trajectory_rng(99, k), False)
        singles.append(st.number_expectations())
    singles = np.array(singles)
    for v in range(2):
        mu_b, se_b = res.number_expectation(v)
        mu_s = singles[:, v].mean()
        se_s = singles[:, v].std() / math.sqrt(n)
        assert abs(mu_b - mu_s) < 4 * math.sqrt(se_b ** 2 + se_s ** 2)


def test_total_number_nonincreasing_without_gain():
    # inter-site interaction + Kerr + loss + dephasing, no gain, no squeezing
    ng = (ScheduleEntry((1, 1, 2, 1), (0.0,), (0.06,)),
          ScheduleEntry((1, 1, 1, 1), (0.0,), (0.3,)))
    spec = ModelSpec(n=2, L=1, particle_kind="boson", nongaussian_couplings=ng,
                     kappa1=0.6, kappa2=0.0, kappa3=0.25,
                     initial=InitialState("coherent", alphas=(0.8 + 0j, 0.5 + 0j)))
    d = 5
    T = 40
    delta = 1.0 / T
    ops = bs.build_truncated_ops(d)
    params = bs.pair_step_params(spec, 0, 1, 0.0, delta)
    dim = (d + 1) ** 2
    SM = branch_sum_superop(bs.enumerate_two_site_branches(params, ops), dim)
    Los, _ = orc._boson_split_superops(spec, delta / 2, d)
    Sos = expm(Los * delta)
    st = orc.dense_initial_state(spec, d=d)
    vec = st.rho.reshape(-1)
    totals = [orc.number_expectations(st).sum()]
    for _ in range(T):
        vec = SM @ (Sos @ vec)
        rho = vec.reshape(dim, dim)
        vec = (rho / np.trace(rho).real).reshape(-1)
        totals.append(orc.number_expectations(
            orc.DenseState(vec.reshape(dim, dim), st.basis)).sum())
    diffs = np.diff(totals)
    assert np.all(diffs <= 1e-9)


def test_population_invariants_and_fock_marginals(boson_benchmark_spec):
    spec = boson_benchmark_spec
    res = bs.run_boson_population(spec, 0.8, 40, 5, 3000, seed=17)
    w = res.weights()
    for v in range(2):
        mean_n = float(w @ res.number_expectations[:, v])
        emp = res.fock_samples[:, v].mean()
        assert abs(emp - mean_n) < 0.05
