"""Command-line front end: planners, sampler-vs-oracle validation runs and the
small counterexample experiments, all emitting reproducible CSV/JSON artifacts.

Subcommands: plan, validate, sample-fermion, sample-boson, oracle, wigner,
fermion-entanglement, gate-demo.  Every run writes its data as CSV plus a JSON
manifest (config digest, seed, command line, code version, wall time); CSV
bodies are byte-identical across reruns with the same config and seed.

Exit codes: 0 ok, 1 runtime error, 2 config error, 3 validation failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from . import __version__
from .model import (ConfigError, EpsilonBudget, boson_trotter_plan,
                    boson_truncation_plan, check_thresholds, derived_constants,
                    fermion_trotter_plan, load_model_spec)
from . import oracle as orc
from . import fermion_sampler as fsamp
from . import boson_sampler as bsamp
from . import gates


class ValidationFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# small IO helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(x) for x in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _json_default(x):
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    raise TypeError(f"not JSON serializable: {type(x)}")


def write_manifest(outdir: Path, name: str, args: argparse.Namespace,
                   wall_time: float, tolerances: dict | None = None,
                   extra: dict | None = None) -> None:
    digest = "-"
    cfg = getattr(args, "config", None)
    if cfg:
        digest = hashlib.sha256(Path(cfg).read_bytes()).hexdigest()
    manifest = {
        "command": name,
        "argv": sys.argv[1:],
        "config_digest": digest,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "wall_time_s": wall_time,
        "tolerances": tolerances or {},
    }
    if extra:
        manifest.update(extra)
    (outdir / f"{name}_manifest.json").write_text(
        json.dumps(manifest, indent=2, default=_json_default) + "\n")


def parse_grid(txt: str) -> np.ndarray:
    """'lo:hi:n' (linear), 'lo:hi:n:log', or a comma-separated list."""
    if ":" in txt:
        parts = txt.split(":")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if len(parts) > 3 and parts[3] == "log":
            return np.geomspace(lo, hi, n)
        return np.linspace(lo, hi, n)
    return np.array([float(x) for x in txt.split(",")])


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    return load_model_spec(args.config, overrides=args.override or [])


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------

def cmd_plan(args) -> int:
    t0 = time.time()
    spec = _load(args)
    consts = derived_constants(spec)
    report = check_thresholds(spec, consts)
    budget = EpsilonBudget(*(f * args.epsilon for f in args.budget))
    out = {
        "particle_kind": spec.particle_kind,
        "n": spec.n, "L": spec.L, "m": spec.m,
        "constants": {k: (None if isinstance(v := getattr(consts, k), float)
                          and math.isinf(v) else v)
                      for k in consts.__dataclass_fields__},
        "thresholds": report.__dict__,
        "violations": report.violations(spec.particle_kind),
        "epsilon": args.epsilon,
        "budget": budget.__dict__,
        "time": args.time,
    }
    d = args.d
    if spec.particle_kind == "boson":
        if d is None:
            if consts.gamma > 0:
                d = boson_truncation_plan(consts, spec.m, args.time, budget.truncation).d
            else:
                d = 6
                out["truncation_note"] = ("gamma <= 0: tail bounds unavailable, "
                                          "using default d=6; override with --d")
        plan = boson_trotter_plan(spec, args.time, d, budget.trotter, budget)
        out["d"] = d
    else:
        plan = fermion_trotter_plan(spec, args.time, budget.trotter, budget)
    out["T"] = plan.T
    out["delta"] = plan.delta
    out["suggested_trajectories"] = math.ceil(budget.statistical ** -2)
    outdir = _outdir(args)
    (outdir / "plan.json").write_text(json.dumps(out, indent=2, default=float) + "\n")
    print(f"model: {spec.particle_kind} n={spec.n} L={spec.L} (m={spec.m})")
    print(f"Lambda={consts.Lambda:.6g}  J_C={consts.J_C:.6g} J_os={consts.J_os:.6g} "
          f"U_C={consts.U_C:.6g} U_os={consts.U_os:.6g} Omega={consts.Omega:.6g}")
    print(f"thresholds: violations={report.violations(spec.particle_kind) or 'none'}")
    print(f"plan: T={plan.T} delta={plan.delta:.6g}" + (f" d={d}" if d else ""))
    write_manifest(outdir, "plan", args, time.time() - t0)
    return 0


# ---------------------------------------------------------------------------
# validate and sampling runs
# ---------------------------------------------------------------------------

def _fermion_caps(spec):
    if spec.m > orc.FERMION_MODE_CAP:
        raise ConfigError(f"oracle cap: at most {orc.FERMION_MODE_CAP} fermionic modes")


def _boson_caps(spec, d):
    if (d + 1) ** spec.m > orc.BOSON_DIM_CAP:
        raise ConfigError(f"oracle cap: (d+1)^m must stay below {orc.BOSON_DIM_CAP}")


def cmd_validate(args) -> int:
    t0 = time.time()
    spec = _load(args)
    rows = []
    rng = fsamp.trajectory_rng(args.seed, 10 ** 6)
    if spec.particle_kind == "fermion":
        _fermion_caps(spec)
        pop = fsamp.run_population(spec, args.time, args.steps, args.trajectories,
                                   seed=args.seed)
        exact = orc.evolve_exact(orc.dense_initial_state(spec), spec, 0.0, args.time)
        n_oracle = orc.number_expectations(exact)
        for v in range(spec.m):
            val, se = pop.number_expectation(v)
            diff = abs(val - n_oracle[v])
            rows.append([f"n_{v + 1}", val, se, n_oracle[v], diff, diff <= args.tol_n])
        bits = pop.sample_fock(args.trajectories, rng)
        weights = (2 ** np.arange(spec.m - 1, -1, -1))
        emp = np.bincount(bits @ weights, minlength=2 ** spec.m) / len(bits)
    else:
        d = args.d
        _boson_caps(spec, d)
        res = bsamp.run_boson_population(spec, args.time, args.steps, d,
                                         args.trajectories, seed=args.seed)
        exact = orc.evolve_exact(orc.dense_initial_state(spec, d=d + 2), spec,
                                 0.0, args.time)
        n_oracle = orc.number_expectations(exact)
        for v in range(spec.m):
            val, se = res.number_expectation(v)
            diff = abs(val - n_oracle[v])
            rows.append([f"n_{v + 1}", val, se, n_oracle[v], diff, diff <= args.tol_n])
        weights = (d + 1) ** np.arange(spec.m - 1, -1, -1)
        emp_small = np.bincount(res.fock_samples @ weights,
                                minlength=(d + 1) ** spec.m) / len(res.fock_samples)
        # embed the d-truncated sampler histogram into the oracle's basis
        emp = np.zeros(exact.dim)
        dig = orc._mode_digits(exact.basis)
        keep = np.all(dig <= d, axis=0)
        emp[keep] = emp_small
    tv = 0.5 * np.abs(emp - orc.fock_distribution(exact)).sum()
    max_dn = max(r[4] for r in rows)
    rows.append(["fock_tv", tv, 0.0, 0.0, tv, tv <= args.tol_tv])
    outdir = _outdir(args)
    write_csv(outdir / "validation.csv",
              ["observable", "sampler_value", "sampler_stderr", "oracle_value",
               "abs_diff", "within_tolerance"], rows)
    tol = {"n": args.tol_n, "tv": args.tol_tv}
    passed = max_dn <= args.tol_n and tv <= args.tol_tv
    write_manifest(outdir, "validate", args, time.time() - t0, tolerances=tol,
                   extra={"passed": passed})
    print(f"max |<n_v>| deviation: {max_dn:.5f} (tol {args.tol_n})")
    print(f"Fock distribution TV: {tv:.5f} (tol {args.tol_tv})")
    print("PASS" if passed else "FAIL")
    if not passed:
        raise ValidationFailure("tolerance gate failed")
    return 0


def cmd_sample_fermion(args) -> int:
    t0 = time.time()
    spec = _load(args)
    if spec.particle_kind != "fermion":
        raise ConfigError("sample-fermion requires a fermion config")
    pop = fsamp.run_population(spec, args.time, args.steps, args.trajectories,
                               seed=args.seed)
    rng = fsamp.trajectory_rng(args.seed, 10 ** 6)
    bits = pop.sample_fock(pop.size, rng)
    header = ["trajectory", "weight"] + [f"n_{v + 1}" for v in range(spec.m)] + ["fock"]
    w = np.exp(pop.log_weights - pop.log_weights.max())
    w = w / w.mean()
    rows = []
    for b in range(pop.size):
        ns = [pop.gammas[b, 2 * v, 2 * v + 1] + 0.5 for v in range(spec.m)]
        rows.append([b, w[b]] + ns + ["".join(map(str, bits[b]))])
    outdir = _outdir(args)
    write_csv(outdir / "fermion_trajectories.csv", header, rows)
    summary = [[f"n_{v + 1}", *pop.number_expectation(v)] for v in range(spec.m)]
    write_csv(outdir / "fermion_summary.csv", ["observable", "value", "stderr"], summary)
    write_manifest(outdir, "sample-fermion", args, time.time() - t0)
    for name, val, se in summary:
        print(f"{name} = {val:.6f} +- {se:.6f}")
    return 0


def cmd_sample_boson(args) -> int:
    t0 = time.time()
    spec = _load(args)
    if spec.particle_kind != "boson":
        raise ConfigError("sample-boson requires a boson config")
    res = bsamp.run_boson_population(spec, args.time, args.steps, args.d,
                                     args.trajectories, seed=args.seed)
    header = ["trajectory", "weight"] + [f"n_{v + 1}" for v in range(spec.m)] + ["fock"]
    w = np.exp(res.log_weights - res.log_weights.max())
    w = w / w.mean()
    rows = [[b, w[b]] + list(res.number_expectations[b])
            + ["".join(map(str, res.fock_samples[b]))]
            for b in range(len(w))]
    outdir = _outdir(args)
    write_csv(outdir / "boson_trajectories.csv", header, rows)
    summary = [[f"n_{v + 1}", *res.number_expectation(v)] for v in range(spec.m)]
    write_csv(outdir / "boson_summary.csv", ["observable", "value", "stderr"], summary)
    write_manifest(outdir, "sample-boson", args, time.time() - t0)
    for name, val, se in summary:
        print(f"{name} = {val:.6f} +- {se:.6f}")
    return 0


def cmd_oracle(args) -> int:
    t0 = time.time()
    spec = _load(args)
    d = args.d
    if spec.particle_kind == "fermion":
        _fermion_caps(spec)
        state = orc.dense_initial_state(spec)
    else:
        _boson_caps(spec, d)
        state = orc.dense_initial_state(spec, d=d)
    grid = parse_grid(args.t_grid) if args.t_grid else np.array([args.time])
    rows = []
    prev = 0.0
    for tv in grid:
        state = orc.evolve_exact(state, spec, prev, float(tv))
        prev = float(tv)
        rows.append([tv] + list(orc.number_expectations(state)))
    outdir = _outdir(args)
    write_csv(outdir / "oracle.csv",
              ["time[t]"] + [f"n_{v + 1}" for v in range(spec.m)], rows)
    write_manifest(outdir, "oracle", args, time.time() - t0)
    print(f"wrote {len(rows)} oracle rows")
    return 0


# ---------------------------------------------------------------------------
# counterexample experiments
# ---------------------------------------------------------------------------

def _refine_min(state, w, n_local=17, shrink=8.0):
    """Zoom the Wigner grid around the coarse minimum to pin W_min down."""
    ix, ip = np.unravel_index(np.argmin(w.W), w.W.shape)
    dx = (w.x[1] - w.x[0]) if len(w.x) > 1 else 0.5
    dp = (w.p[1] - w.p[0]) if len(w.p) > 1 else 0.5
    xs = w.x[ix] + np.linspace(-dx, dx, n_local)
    ps = w.p[ip] + np.linspace(-dp, dp, n_local)
    fine = orc.wigner(state, xs, ps, n_y=301)
    return min(w.w_min, fine.w_min)


def kerr_dephasing_state(U, kappa3, alpha, d):
    from .model import ModelSpec, InitialState, ScheduleEntry
    spec = ModelSpec(n=1, L=1, particle_kind="boson",
                     nongaussian_couplings=(ScheduleEntry((1, 1, 1, 1), (0.0,), (U,)),),
                     kappa3=kappa3,
                     initial=InitialState("coherent", alphas=(complex(alpha),)))
    return spec, orc.dense_initial_state(spec, d=d)


def cmd_wigner(args) -> int:
    t0 = time.time()
    Us = parse_grid(args.U)
    ratios = parse_grid(args.kappa_over_u)
    tgrid = parse_grid(args.t_grid)
    alpha = args.alpha
    d = args.d or gates.default_truncation(alpha)
    xmax = math.sqrt(2) * alpha + 4.0
    g = np.linspace(-xmax, xmax, args.grid_points)
    rows = []
    tstar_rows = []
    for U in Us:
        for r in ratios:
            spec, state = kerr_dephasing_state(U, r * U, alpha, d)
            prev = 0.0
            best = (-math.inf, None)
            for tv in tgrid:
                state = orc.evolve_exact(state, spec, prev, float(tv))
                prev = float(tv)
                w = orc.wigner(state, g, g, n_y=args.n_y)
                wmin = _refine_min(state, w) if args.refine else w.w_min
                ratio = -wmin / w.w_max
                rows.append([U, r, alpha, tv, wmin, w.w_max, ratio, w.mass])
                if ratio > best[0]:
                    best = (ratio, tv)
            tstar_rows.append([U, r, alpha, best[1], best[0]])
    outdir = _outdir(args)
    write_csv(outdir / "wigner_scan.csv",
              ["U[1/t]", "kappa_over_U", "alpha", "time[t]", "W_min", "W_max",
               "neg_over_max", "grid_mass"], rows)
    write_csv(outdir / "wigner_tstar.csv",
              ["U[1/t]", "kappa_over_U", "alpha", "t_star[t]", "max_neg_over_max"], tstar_rows)
    write_manifest(outdir, "wigner", args, time.time() - t0,
                   extra={"truncation": d})
    print(f"wrote {len(rows)} scan rows; t* per (U, kappa): "
          + "; ".join(f"U={r[0]:.3g}: t*={r[3]:.3g}" for r in tstar_rows))
    return 0


def exchange_pair_model(J: float):
    """Two fermionic modes with a particle-exchange coupling, one particle in."""
    ops = orc.fermion_ops(2)
    H = J * (ops["a"][0].conj().T @ ops["a"][1] + ops["a"][1].conj().T @ ops["a"][0])
    vac = np.eye(4, dtype=complex)[:, 0]
    psi = ops["a"][0].conj().T @ vac
    return H, np.outer(psi, psi.conj()), orc.BasisInfo("fermion", 2)


def pair_creation_model(J: float):
    """Four fermionic modes with pair creation across the 12|34 cut."""
    ops = orc.fermion_ops(4)
    a2, a3 = ops["a"][1], ops["a"][2]
    H = J * (a2 @ a3 + a3.conj().T @ a2.conj().T)
    vac = np.eye(16, dtype=complex)[:, 0]
    psi = (ops["a"][0].conj().T @ vac + ops["a"][3].conj().T @ vac) / math.sqrt(2)
    return H, np.outer(psi, psi.conj()), orc.BasisInfo("fermion", 4)


def _entanglement_scan(model: str, J: float, kappas, tgrid):
    H, rho0, basis = (exchange_pair_model(J) if model == "two-mode"
                      else pair_creation_model(J))
    ops = orc.fermion_ops(basis.m)
    scan_rows, tstar_rows = [], []
    for kap in kappas:
        L = orc.hamiltonian_superop(H)
        for a in ops["a"]:
            L = L + kap * orc.dissipator_superop(a)
            L = L + kap * orc.dissipator_superop(a.conj().T)
        vec = rho0.reshape(-1)
        prev = 0.0
        best = (-math.inf, None)
        for tv in tgrid:
            vec = expm(L * (float(tv) - prev)) @ vec
            prev = float(tv)
            state = orc.DenseState(vec.reshape(rho0.shape), basis)
            if model == "two-mode":
                meas = orc.offdiag_entanglement(state)
            else:
                _, sig = orc.even_obs_reduction(state)
                meas = -orc.min_eig_partial_transpose(sig)
            scan_rows.append([kap, tv, meas])
            if meas > best[0]:
                best = (meas, tv)
        tstar_rows.append([kap, best[1], best[0]])
    return scan_rows, tstar_rows


def cmd_fermion_entanglement(args) -> int:
    t0 = time.time()
    kappas = parse_grid(args.kappa_grid)
    tgrid = parse_grid(args.t_grid)
    scan_rows, tstar_rows = _entanglement_scan(args.model, args.J, kappas, tgrid)
    outdir = _outdir(args)
    name = "entanglement" if args.model == "two-mode" else "pt_negativity"
    write_csv(outdir / f"fermion_{name}_scan.csv",
              ["kappa[1/t]", "time[t]", "measure"], scan_rows)
    write_csv(outdir / f"fermion_{name}_tstar.csv",
              ["kappa[1/t]", "t_star[t]", "measure_max"], tstar_rows)
    write_manifest(outdir, "fermion-entanglement", args, time.time() - t0)
    slope = np.polyfit(np.log([r[0] for r in tstar_rows]),
                       np.log([r[1] for r in tstar_rows]), 1)[0]
    print(f"{args.model}: t*(kappa) log-log slope = {slope:.4f}")
    return 0


def cmd_gate_demo(args) -> int:
    t0 = time.time()
    Ps = parse_grid(args.P_grid)
    rows = []
    for P in Ps:
        sched = gates.build_gate_schedule(args.target, args.U, float(P),
                                          kappa1=args.kappa1, kappa2=args.kappa2,
                                          alpha_cap=args.alpha_cap,
                                          ramp_steps=args.ramp_steps)
        d = args.d or gates.default_truncation(max(sched.alpha_F, 1.0))
        res = gates.run_gate_schedule(sched, d=d)
        row = [P, sched.alpha_F, res.total_time, res.fidelity, res.infidelity,
               res.noise_bound, res.code_population]
        if args.target == "entangle":
            idx = gates._code_indices(2, d)
            sig = res.output.rho[np.ix_(idx, idx)]
            row.append(orc.min_eig_partial_transpose(sig / np.trace(sig).real))
        rows.append(row)
    header = ["P[1/t]", "alpha_F", "total_time[t]", "fidelity", "infidelity",
              "noise_bound", "code_population"]
    if args.target == "entangle":
        header.append("pt_min_eig")
    outdir = _outdir(args)
    write_csv(outdir / "gate_demo.csv", header, rows)
    write_manifest(outdir, "gate-demo", args, time.time() - t0)
    for row in rows:
        print(f"P={row[0]:.4g}: infidelity={row[4]:.3e} bound={row[5]:.3e}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_common(p, config=True):
    if config:
        p.add_argument("--config", required=True, help="model config file (TOML)")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="patch a top-level config field")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="noisylattice", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("plan", help="derived constants, thresholds and run parameters")
    _add_common(p)
    p.add_argument("--time", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--budget", type=lambda s: tuple(float(x) for x in s.split(",")),
                   default=(1 / 3, 1 / 3, 1 / 3),
                   help="epsilon fractions: trotter,truncation,statistical")
    p.add_argument("--d", type=int, default=None, help="override the truncation level")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("validate", help="sampler vs oracle comparison with tolerances")
    _add_common(p)
    p.add_argument("--time", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=100, help="Trotter steps")
    p.add_argument("--trajectories", type=int, default=10000)
    p.add_argument("--d", type=int, default=6)
    p.add_argument("--tol-n", type=float, default=0.02)
    p.add_argument("--tol-tv", type=float, default=0.05)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sample-fermion", help="weighted fermionic trajectories")
    _add_common(p)
    p.add_argument("--time", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--trajectories", type=int, default=10000)
    p.set_defaults(func=cmd_sample_fermion)

    p = sub.add_parser("sample-boson", help="bosonic product-state trajectories")
    _add_common(p)
    p.add_argument("--time", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--trajectories", type=int, default=10000)
    p.add_argument("--d", type=int, default=6)
    p.set_defaults(func=cmd_sample_boson)

    p = sub.add_parser("oracle", help="dense exact evolution")
    _add_common(p)
    p.add_argument("--time", type=float, default=1.0)
    p.add_argument("--t-grid", default=None, help="emit a trajectory: lo:hi:n[:log]")
    p.add_argument("--d", type=int, default=6)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("wigner", help="phase-space negativity scans")
    _add_common(p, config=False)
    p.add_argument("--U", default="0.05", help="grid or list of Kerr strengths")
    p.add_argument("--kappa-over-u", default="0.1,2.0")
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--t-grid", default="0.5")
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--grid-points", type=int, default=121)
    p.add_argument("--n-y", type=int, default=401)
    p.add_argument("--refine", action="store_true",
                   help="zoom around the coarse minimum")
    p.set_defaults(func=cmd_wigner)

    p = sub.add_parser("fermion-entanglement", help="two- and four-mode scans")
    _add_common(p, config=False)
    p.add_argument("--model", choices=["two-mode", "four-mode"], default="two-mode")
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--kappa-grid", default="1:10:7:log")
    p.add_argument("--t-grid", default="0.001:5:120:log")
    p.set_defaults(func=cmd_fermion_entanglement)

    p = sub.add_parser("gate-demo", help="blockaded gate protocols under noise")
    _add_common(p, config=False)
    p.add_argument("--target", choices=list(gates.TARGETS), default="S")
    p.add_argument("--U", type=float, default=0.3)
    p.add_argument("--P-grid", default="5:40:4:log")
    p.add_argument("--kappa1", type=float, default=0.0)
    p.add_argument("--kappa2", type=float, default=0.0)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--alpha-cap", type=float, default=2.5)
    p.add_argument("--ramp-steps", type=int, default=64)
    p.set_defaults(func=cmd_gate_demo)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValidationFailure as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
