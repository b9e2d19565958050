import math

import numpy as np
import pytest
from scipy.linalg import expm

from noisylattice import gates
from noisylattice import oracle as orc


def test_phase_gate_schedule_example():
    s = gates.build_gate_schedule("S", U=0.3, P=10.0)
    assert len(s.intervals) == 1
    iv = s.intervals[0]
    assert iv.duration == pytest.approx(3 * math.pi / 20)
    assert iv.delta == (10.0,)
    assert np.abs(s.target_unitary - np.diag([1.0, 1j])).max() < 1e-12


def test_t_like_gate_duration():
    s = gates.build_gate_schedule("T", U=0.3, P=8.0)
    assert s.intervals[0].duration == pytest.approx(3 * math.pi / 32)


def test_schedule_respects_caps():
    for target in ("sqrtX", "entangle"):
        s = gates.build_gate_schedule(target, U=0.3, P=12.0, kappa1=0.01, kappa2=0.004)
        s.validate_caps()
    with pytest.raises(ValueError):
        gates.build_gate_schedule("entangle", U=5.0, P=10.0)
    with pytest.raises(ValueError):
        gates.build_gate_schedule("nope", U=0.3, P=10.0)


def test_blockade_drive_solution():
    """The solved drives leave exactly the blockaded frame residual."""
    U, k1, k2 = 0.3, 0.02, 0.006
    for alpha, adot in ((1.7, 0.0), (0.9, 0.35), (2.4, -0.2)):
        lam1, lam2, delta = gates._blockade_drives(U, alpha, adot, k1, k2)
        d_t, l1_t, l2_t = gates.displaced_frame_residuals(
            U, lam1, lam2, delta, alpha, adot, k1, k2)
        assert abs(d_t) < 1e-12
        assert abs(l2_t) < 1e-12
        assert abs(l1_t + 2 * U * alpha) < 1e-12


def test_ramp_intervals_report_frame_data():
    s = gates.build_gate_schedule("sqrtX", U=0.3, P=12.0, kappa1=0.01, kappa2=0.002,
                                  ramp_steps=8)
    ramps = [iv for iv in s.intervals if iv.alpha_dot != 0.0]
    assert len(ramps) == 16
    for iv in ramps:
        d_t, l1_t, l2_t = gates.displaced_frame_residuals(
            0.3, iv.lam1[0], iv.lam2[0], iv.delta[0], iv.alpha, iv.alpha_dot,
            0.01, 0.002)
        assert max(abs(d_t), abs(l2_t), abs(l1_t + 2 * 0.3 * iv.alpha)) < 1e-12


def test_displaced_frame_identity_dense():
    """Independent dense check of the frame equations on an interior block."""
    d = 90
    ops = orc.boson_mode_ops(1, d)
    a = ops["a"][0]
    ad = a.conj().T
    n = ops["n"][0]
    U, alpha, adot, k1, k2 = 0.3, 1.2, 0.23, 0.02, 0.006
    lam1, lam2, delta = gates._blockade_drives(U, alpha, adot, k1, k2)
    H_lab = (U * (ad @ ad @ a @ a) + lam1 * ad + np.conj(lam1) * a
             + lam2 * (ad @ ad) + np.conj(lam2) * (a @ a) + delta * n)
    D = expm(alpha * (ad - a))
    H_frame = (D.conj().T @ H_lab @ D - 1j * adot * (ad - a)
               - 0.5j * (k1 - k2) * alpha * (ad - a))
    eye = np.eye(d + 1)
    H_target = U * (ad @ ad @ a @ a) + 2 * U * alpha * (ad @ (n - eye) + (n - eye) @ a)
    diff = H_frame - H_target
    interior = diff[:12, :12] - np.eye(12) * diff[0, 0]
    assert np.abs(interior).max() < 1e-10


def test_phase_gate_exact_without_noise():
    s = gates.build_gate_schedule("S", U=0.3, P=10.0)
    r = gates.run_gate_schedule(s, d=6)
    assert r.infidelity <= 1e-9
    assert r.code_population == pytest.approx(1.0, abs=1e-12)


def test_phase_gate_infidelity_below_noise_bound():
    for P in (5.0, 10.0, 20.0):
        s = gates.build_gate_schedule("S", U=0.3, P=P, kappa1=0.02, kappa2=0.01)
        r = gates.run_gate_schedule(s, d=8)
        assert 0 < r.infidelity <= r.noise_bound


def test_sqrtx_near_exact_without_noise():
    s = gates.build_gate_schedule("sqrtX", U=0.3, P=10.0)
    r = gates.run_gate_schedule(s, d=gates.default_truncation(s.alpha_F))
    assert r.infidelity <= 1e-6
    assert r.boundary_population < 1e-8


def test_sqrtx_improves_with_stronger_drives():
    res = []
    for P in (6.0, 24.0):
        s = gates.build_gate_schedule("sqrtX", U=0.3, P=P, kappa1=0.007, kappa2=0.003)
        res.append(gates.run_gate_schedule(s, d=gates.default_truncation(s.alpha_F)))
    assert res[1].infidelity < res[0].infidelity


def test_entangling_gate_produces_negativity():
    s = gates.build_gate_schedule("entangle", U=0.25, P=8.0)
    r = gates.run_gate_schedule(s, d=4)
    assert r.infidelity < 1e-9
    idx = gates._code_indices(2, 4)
    sig = r.output.rho[np.ix_(idx, idx)]
    sig = sig / np.trace(sig).real
    assert orc.min_eig_partial_transpose(sig) < -0.45
    # target is unitary on the code space
    tu = s.target_unitary
    assert np.abs(tu @ tu.conj().T - np.eye(4)).max() < 1e-10


def test_boundary_population_escalates():
    s = gates.build_gate_schedule("sqrtX", U=0.3, P=10.0)
    with pytest.raises(RuntimeError, match="boundary"):
        gates.run_gate_schedule(s, d=4)   # far too small for alpha_F ~ 1.8
