import math

import numpy as np
import pytest
from scipy.linalg import expm

from noisylattice import fermion_gaussian as fg
from noisylattice import fermion_sampler as fs
from noisylattice import oracle as orc
from noisylattice.model import (InitialState, ModelSpec, ScheduleEntry,
                                fermion_hopping_entries)


def small_interacting_spec(kappa3=1.2):
    ents = tuple(fermion_hopping_entries(1, 1, 2, 1, 0.5))
    ng = (ScheduleEntry((1, 1, 2, 1), (0.0,), (0.4,)),)
    return ModelSpec(n=2, L=1, particle_kind="fermion", gaussian_couplings=ents,
                     nongaussian_couplings=ng, kappa1=0.3, kappa2=0.2,
                     kappa3=kappa3, initial=InitialState("fock", (1, 0)))


# ---------------------------------------------------------------------------
# pair channel parameters
# ---------------------------------------------------------------------------

def test_pair_params_integration():
    spec = small_interacting_spec(kappa3=1.2)
    params = fs.pair_channel_params(spec, 0, 1, 0.0, 0.25)
    # both symmetric orderings of the mode pair contribute to U_int
    assert params.U_int == pytest.approx(2 * 0.4 * 0.25)
    # the single coupled pair receives the full dephasing of both modes
    assert params.K1 == pytest.approx(1.2 * 0.25)
    assert params.K2 == pytest.approx(1.2 * 0.25)


def test_pair_params_warns_below_threshold():
    with pytest.warns(UserWarning, match="branch-sampling"):
        fs.PairChannelParams(U_int=1.0, K1=0.2, K2=1.5)


# ---------------------------------------------------------------------------
# pair channel steps
# ---------------------------------------------------------------------------

def test_pair_step_identity_when_trivial():
    st = fg.state_from_occupations([1, 0])
    rng = fs.trajectory_rng(0)
    out = fs.pair_channel_step(st, fs.PairChannelParams(0.0, 0.0, 0.0), (0, 1), rng)
    assert out is st


def test_pair_step_fixes_vacuum():
    st = fg.vacuum_state(2)
    rng = fs.trajectory_rng(1)
    params = fs.PairChannelParams(U_int=0.3, K1=0.5, K2=0.4)
    out = fs.pair_channel_step(st, params, (0, 1), rng)
    assert np.abs(out.gamma - st.gamma).max() < 1e-12
    assert out.log_weight == pytest.approx(0.0, abs=1e-12)


def test_pair_step_fixes_fock_diagonal_states():
    # number states are fixed points of the diagonal pair channel
    rng = fs.trajectory_rng(2)
    params = fs.PairChannelParams(U_int=0.4, K1=0.6, K2=0.5)
    for occ in ([1, 1], [1, 0], [0, 1]):
        st = fg.state_from_occupations(occ)
        out = fs.pair_channel_step(st, params, (0, 1), rng)
        assert np.abs(out.gamma - st.gamma).max() < 1e-10


def dense_pair_factors(U, K1, K2):
    """In-test reconstruction of the unraveled channel as a superoperator."""
    ops = orc.fermion_ops(2)
    n1, n2 = ops["n"][0], ops["n"][1]
    eye = np.eye(4)
    N1l, N1r = np.kron(n1, eye), np.kron(eye, n1.T)
    N2l, N2r = np.kron(n2, eye), np.kron(eye, n2.T)
    absU = abs(U)
    R = expm(-1j * U * (N1l @ N2l - N1r @ N2r) + absU * (N1l @ N1r + N2l @ N2r))
    F1 = np.kron(expm(-K1 * n1 / 2), expm(-K1 * n1 / 2).conj())
    F2 = np.kron(expm(-K2 * n2 / 2), expm(-K2 * n2 / 2).conj())
    E1 = expm((K1 - absU) * (N1l @ N1r))
    E2 = expm((K2 - absU) * (N2l @ N2r))
    return E1 @ F1 @ E2 @ F2 @ R


def exact_pair_channel(U, K1, K2):
    ops = orc.fermion_ops(2)
    L = orc.hamiltonian_superop(U * (ops["n"][0] @ ops["n"][1]))
    L += K1 * orc.dissipator_superop(ops["n"][0])
    L += K2 * orc.dissipator_superop(ops["n"][1])
    return expm(L)


def test_pair_channel_identity_spot_checks():
    rng = np.random.default_rng(0)
    for _ in range(5):
        U = rng.uniform(-1.5, 1.5)
        K1 = abs(U) + rng.uniform(0, 2)
        K2 = abs(U) + rng.uniform(0, 2)
        err = np.abs(dense_pair_factors(U, K1, K2) - exact_pair_channel(U, K1, K2)).max()
        assert err < 1e-10


def test_pair_step_reproduces_channel_moments():
    """Monte Carlo average of the unraveled step matches the exact channel."""
    spec = small_interacting_spec()
    dense0 = orc.evolve_exact(orc.dense_initial_state(spec), spec, 0.0, 0.5)
    st = fg.FermionGaussianState(orc.covariance_of_dense(dense0))
    U, K1, K2 = 0.35, 0.6, 0.5
    out_dense = (exact_pair_channel(U, K1, K2) @ dense0.rho.reshape(-1)).reshape(4, 4)
    ops = orc.fermion_ops(2)
    ref = [np.real(np.trace(out_dense @ ops["n"][v])) for v in (0, 1)]
    rng = fs.trajectory_rng(11)
    params = fs.PairChannelParams(U, K1, K2)
    n = 20000
    acc = np.zeros(2)
    wsum = 0.0
    for _ in range(n):
        out = fs.pair_channel_step(st, params, (0, 1), rng)
        w = math.exp(out.log_weight)
        wsum += w
        acc += w * np.array([fg.number_expectation(out, v) for v in (0, 1)])
    est = acc / wsum
    assert np.abs(est - ref).max() < 0.01


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def test_trajectory_time_zero():
    spec = small_interacting_spec()
    init = fg.state_from_occupations([1, 0])
    traj = fs.run_trajectory(spec, 0.0, 4, init, fs.trajectory_rng(0))
    assert traj.step_index == 0
    assert np.abs(traj.state.gamma - init.gamma).max() == 0.0


def test_trajectory_without_interaction_is_deterministic():
    ents = tuple(fermion_hopping_entries(1, 1, 2, 1, 0.5))
    spec = ModelSpec(n=2, L=1, particle_kind="fermion", gaussian_couplings=ents,
                     kappa1=0.3, kappa2=0.2, initial=InitialState("fock", (1, 0)))
    init = fg.state_from_occupations([1, 0])
    traj = fs.run_trajectory(spec, 0.9, 6, init, fs.trajectory_rng(0))
    ref = fg.evolve_gaussian_segment(init, spec, 0.0, 0.9)
    assert np.abs(traj.state.gamma - ref.gamma).max() < 1e-10
    assert traj.state.log_weight == 0.0
    assert len(traj.branch_log) == traj.step_index == 6


def test_trajectory_branch_log_and_invariants():
    spec = small_interacting_spec()
    traj = fs.run_trajectory(spec, 0.6, 5, fg.state_from_occupations([1, 0]),
                             fs.trajectory_rng(3), check_invariants=True)
    assert len(traj.branch_log) == 5
    assert all(len(step) == 1 for step in traj.branch_log)  # one coupled pair
    traj.state.validate()


def test_mean_weight_is_one():
    spec = small_interacting_spec()
    pop = fs.run_population(spec, 0.8, 16, 20000, seed=9, resample_every=0)
    w = np.exp(pop.log_weights)
    assert w.mean() == pytest.approx(1.0, abs=4 * w.std() / math.sqrt(len(w)))


def test_population_matches_oracle_and_checks_invariants():
    spec = small_interacting_spec()
    pop = fs.run_population(spec, 1.0, 30, 20000, seed=5)
    assert pop.invariant_checks == pop.steps == 30
    exact = orc.evolve_exact(orc.dense_initial_state(spec), spec, 0.0, 1.0)
    n_ref = orc.number_expectations(exact)
    for v in range(2):
        val, se = pop.number_expectation(v)
        assert abs(val - n_ref[v]) < max(4 * se, 0.01)


def test_population_deterministic_given_seed():
    spec = small_interacting_spec()
    a = fs.run_population(spec, 0.5, 8, 500, seed=4)
    b = fs.run_population(spec, 0.5, 8, 500, seed=4)
    assert np.array_equal(a.gammas, b.gammas)
    assert np.array_equal(a.log_weights, b.log_weights)


def test_population_agrees_with_single_trajectories():
    """Batched and per-state engines sample the same distribution."""
    spec = small_interacting_spec()
    t, T, n = 0.8, 10, 3000
    pop = fs.run_population(spec, t, T, n, seed=21, resample_every=0)
    init = fg.state_from_occupations([1, 0])
    vals = []
    ws = []
    for k in range(n):
        traj = fs.run_trajectory(spec, t, T, init, fs.trajectory_rng(77, k))
        ws.append(math.exp(traj.state.log_weight))
        vals.append(fg.number_expectation(traj.state, 0))
    ws = np.array(ws)
    single = float(ws @ vals / ws.sum())
    batched, se_b = pop.number_expectation(0)
    se_s = np.std(vals) / math.sqrt(n)
    assert abs(single - batched) < 4 * math.sqrt(se_b ** 2 + se_s ** 2)


def test_leftover_dephasing_matches_oracle():
    # hopping with dephasing but no interaction: kappa3 must still act
    ents = tuple(fermion_hopping_entries(1, 1, 2, 1, 0.6))
    spec = ModelSpec(n=2, L=1, particle_kind="fermion", gaussian_couplings=ents,
                     kappa3=0.8, initial=InitialState("fock", (1, 0)))
    pop = fs.run_population(spec, 1.0, 25, 30000, seed=13)
    exact = orc.evolve_exact(orc.dense_initial_state(spec), spec, 0.0, 1.0)
    gamma_ref = orc.covariance_of_dense(exact)
    w = pop.weights()
    gamma_mean = np.einsum("b,bij->ij", w, pop.gammas)
    assert np.abs(gamma_mean - gamma_ref).max() < 0.02
    n_ref = orc.number_expectations(exact)
    for v in range(2):
        val, se = pop.number_expectation(v)
        assert abs(val - n_ref[v]) < max(4 * se, 0.01)


# ---------------------------------------------------------------------------
# estimation and resampling
# ---------------------------------------------------------------------------

def _make_trajs(weights, values):
    out = []
    for w, val in zip(weights, values):
        st = fg.maximally_mixed_state(1)
        st.gamma[0, 1] = val - 0.5
        st.gamma[1, 0] = 0.5 - val
        st.log_weight = math.log(w) if w > 0 else float("-inf")
        out.append(fs.FermionTrajectory(state=st))
    return out


def test_estimate_equal_weights_is_plain_mean():
    trajs = _make_trajs([1, 1, 1, 1], [0.1, 0.2, 0.3, 0.4])
    val, se = fs.estimate(trajs, lambda s: fg.number_expectation(s, 0))
    assert val == pytest.approx(0.25)
    assert se > 0


def test_estimate_dominant_weight():
    trajs = _make_trajs([1.0, 1e-14], [0.7, 0.1])
    val, _ = fs.estimate(trajs, lambda s: fg.number_expectation(s, 0))
    assert val == pytest.approx(0.7, abs=1e-12)


def test_estimate_needs_two_trajectories():
    with pytest.raises(ValueError):
        fs.estimate(_make_trajs([1.0], [0.5]), lambda s: 0.0)


def test_resample_equal_weights_is_permutation():
    trajs = _make_trajs([1, 1, 1, 1], [0.1, 0.2, 0.3, 0.4])
    out = fs.resample(trajs, fs.trajectory_rng(0))
    vals = sorted(fg.number_expectation(t.state, 0) for t in out)
    assert vals == pytest.approx([0.1, 0.2, 0.3, 0.4])


def test_resample_degenerate_weights():
    trajs = _make_trajs([1.0, 0.0], [0.9, 0.1])
    out = fs.resample(trajs, fs.trajectory_rng(0))
    assert all(fg.number_expectation(t.state, 0) == pytest.approx(0.9) for t in out)


def test_resample_reduces_estimator_variance():
    spec = small_interacting_spec()
    ests_plain, ests_rs = [], []
    for seed in range(12):
        plain = fs.run_population(spec, 1.0, 12, 400, seed=seed, resample_every=0)
        rs = fs.run_population(spec, 1.0, 12, 400, seed=seed, resample_every=1)
        ests_plain.append(plain.number_expectation(0)[0])
        ests_rs.append(rs.number_expectation(0)[0])
    assert np.var(ests_rs) <= 2.0 * np.var(ests_plain)
