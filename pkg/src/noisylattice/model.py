"""Lattice model description, derived coupling constants and runtime planners.

The model lives on ``n`` sites with ``L`` modes per site (``m = n*L`` modes
total).  Dynamics are generated by a quadratic ("gaussian") Hamiltonian with
coefficients ``J``, density-density ("nongaussian") interactions ``U``, an
optional bosonic drive ``Omega``, and three local dissipators: particle loss
(rate ``kappa1``), particle gain (``kappa2``) and dephasing (``kappa3``).
All coefficients are piecewise-constant in time.
"""
from __future__ import annotations

import math
import sys
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

__all__ = [
    "ConfigError",
    "ValidationError",
    "ScheduleEntry",
    "InitialState",
    "ModelSpec",
    "DerivedConstants",
    "ThresholdReport",
    "EpsilonBudget",
    "RunPlan",
    "TruncationPlan",
    "load_model_spec",
    "apply_overrides",
    "derived_constants",
    "check_thresholds",
    "fermion_trotter_plan",
    "boson_trotter_plan",
    "moment_bound",
    "boson_truncation_plan",
    "noise_split_weights",
    "build_step_grid",
    "fermion_hopping_entries",
    "boson_hopping_entries",
]

_TOL = 1e-12


class ConfigError(ValueError):
    """Raised when a config file cannot be parsed into a model."""


class ValidationError(ConfigError):
    """Raised when a parsed model violates a structural invariant."""


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduleEntry:
    """One piecewise-constant coefficient.

    ``indices`` identifies the coefficient, all 1-based:
      * gaussian couplings: ``(i, sigma, alpha, j, sigma2, alpha2)``
      * nongaussian couplings: ``(i, sigma, j, sigma2)``
      * displacements: ``(i, sigma, alpha)``

    ``values[k]`` applies on ``[breakpoints[k], breakpoints[k+1])``; the last
    value extends to infinity.  ``breakpoints[0]`` must be 0.
    """

    indices: tuple[int, ...]
    breakpoints: tuple[float, ...]
    values: tuple[complex, ...]

    def __post_init__(self):
        bp, vals = self.breakpoints, self.values
        if len(bp) != len(vals) or not bp:
            raise ValidationError(f"{self._name()}: need one value per breakpoint")
        if bp[0] != 0.0:
            raise ValidationError(f"{self._name()}: first breakpoint must be 0")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ValidationError(f"{self._name()}: breakpoints must be strictly ascending")
        if not all(np.isfinite(complex(v).real) and np.isfinite(complex(v).imag) for v in vals):
            raise ValidationError(f"{self._name()}: values must be finite")

    def _name(self) -> str:
        return f"entry{self.indices}"

    def value_at(self, t: float) -> complex:
        k = bisect_right(self.breakpoints, t) - 1
        return self.values[max(k, 0)]

    def integral(self, t0: float, t1: float) -> complex:
        """Exact integral of the piecewise-constant coefficient over [t0, t1]."""
        if t1 < t0:
            raise ValueError("t1 < t0")
        total = 0.0 + 0.0j
        bp = list(self.breakpoints) + [math.inf]
        for k, v in enumerate(self.values):
            lo, hi = max(bp[k], t0), min(bp[k + 1], t1)
            if hi > lo:
                total += complex(v) * (hi - lo)
        return total


@dataclass(frozen=True)
class InitialState:
    """Initial product state: 'vacuum', fermionic 'fock' or bosonic 'coherent'."""

    kind: str = "vacuum"
    occupations: tuple[int, ...] = ()
    alphas: tuple[complex, ...] = ()


# ---------------------------------------------------------------------------
# model spec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    n: int
    L: int
    particle_kind: str
    gaussian_couplings: tuple[ScheduleEntry, ...] = ()
    nongaussian_couplings: tuple[ScheduleEntry, ...] = ()
    displacements: tuple[ScheduleEntry, ...] = ()
    kappa1: float = 0.0
    kappa2: float = 0.0
    kappa3: float = 0.0
    c0: float = 1.0
    alpha0: float = 1.0
    beta0: float = 1.0
    initial: InitialState = field(default_factory=InitialState)
    # symmetry-completed lookup tables, filled in by __post_init__
    _j_table: dict = field(default_factory=dict, repr=False, compare=False)
    _u_table: dict = field(default_factory=dict, repr=False, compare=False)
    _d_table: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def m(self) -> int:
        return self.n * self.L

    def mode(self, i: int, sigma: int) -> int:
        """0-based mode index of the sigma-th mode (1-based) at site i (1-based)."""
        return (i - 1) * self.L + (sigma - 1)

    def site_of(self, v: int) -> int:
        return v // self.L

    def __post_init__(self):
        if self.n < 1 or self.L < 1:
            raise ValidationError("n and L must be >= 1")
        if self.particle_kind not in ("fermion", "boson"):
            raise ValidationError(f"unknown particle_kind {self.particle_kind!r}")
        for name in ("kappa1", "kappa2", "kappa3"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")
        if self.particle_kind == "fermion" and self.displacements:
            raise ValidationError("displacements are only allowed for bosons")
        self._j_table.update(self._build_j_table())
        self._u_table.update(self._build_u_table())
        self._d_table.update(self._build_d_table())
        self._validate_initial()

    # -- symmetry completion ------------------------------------------------

    def _check_mode_indices(self, i, sigma, where):
        if not (1 <= i <= self.n) or not (1 <= sigma <= self.L):
            raise ValidationError(f"{where}: mode index (i={i}, sigma={sigma}) out of range")

    def _build_j_table(self):
        fermion = self.particle_kind == "fermion"
        table: dict[tuple[int, int, int, int], ScheduleEntry] = {}
        for e in self.gaussian_couplings:
            if len(e.indices) != 6:
                raise ValidationError(f"gaussian {e._name()}: expected (i,sigma,alpha,j,sigma2,alpha2)")
            i, s, a, j, s2, a2 = e.indices
            self._check_mode_indices(i, s, f"gaussian {e._name()}")
            self._check_mode_indices(j, s2, f"gaussian {e._name()}")
            if a not in (1, 2) or a2 not in (1, 2):
                raise ValidationError(f"gaussian {e._name()}: alpha indices must be 1 or 2")
            v, u = self.mode(i, s), self.mode(j, s2)
            vals = tuple(complex(x) for x in e.values)
            if fermion:
                if any(abs(x.real) > _TOL for x in vals):
                    raise ValidationError(
                        f"gaussian {e._name()}: fermionic couplings must be purely imaginary")
                if (v, a) == (u, a2):
                    if any(abs(x) > _TOL for x in vals):
                        raise ValidationError(
                            f"gaussian {e._name()}: diagonal fermionic coupling must vanish")
                    continue
            else:
                if any(abs(x.imag) > _TOL for x in vals):
                    raise ValidationError(
                        f"gaussian {e._name()}: bosonic couplings must be purely real")
            sgn = -1.0 if fermion else 1.0
            mirror = tuple(sgn * x for x in vals)
            self._insert(table, (v, a - 1, u, a2 - 1), e.breakpoints, vals, f"gaussian {e._name()}")
            self._insert(table, (u, a2 - 1, v, a - 1), e.breakpoints, mirror, f"gaussian {e._name()}")
        return table

    def _build_u_table(self):
        table: dict[tuple[int, int], ScheduleEntry] = {}
        for e in self.nongaussian_couplings:
            if len(e.indices) != 4:
                raise ValidationError(f"nongaussian {e._name()}: expected (i,sigma,j,sigma2)")
            i, s, j, s2 = e.indices
            self._check_mode_indices(i, s, f"nongaussian {e._name()}")
            self._check_mode_indices(j, s2, f"nongaussian {e._name()}")
            v, u = self.mode(i, s), self.mode(j, s2)
            vals = tuple(complex(x) for x in e.values)
            if any(abs(x.imag) > _TOL for x in vals):
                raise ValidationError(f"nongaussian {e._name()}: interactions must be real")
            if v == u and self.particle_kind == "fermion":
                raise ValidationError(
                    f"nongaussian {e._name()}: same-mode fermionic interaction is trivial; remove it")
            self._insert(table, (v, u), e.breakpoints, vals, f"nongaussian {e._name()}")
            if v != u:
                self._insert(table, (u, v), e.breakpoints, vals, f"nongaussian {e._name()}")
        return table

    def _build_d_table(self):
        table: dict[tuple[int, int], ScheduleEntry] = {}
        for e in self.displacements:
            if len(e.indices) != 3:
                raise ValidationError(f"displacement {e._name()}: expected (i,sigma,alpha)")
            i, s, a = e.indices
            self._check_mode_indices(i, s, f"displacement {e._name()}")
            if a not in (1, 2):
                raise ValidationError(f"displacement {e._name()}: alpha must be 1 or 2")
            vals = tuple(complex(x) for x in e.values)
            if any(abs(x.imag) > _TOL for x in vals):
                raise ValidationError(f"displacement {e._name()}: drives must be real")
            self._insert(table, (self.mode(i, s), a - 1), e.breakpoints, vals,
                         f"displacement {e._name()}")
        return table

    @staticmethod
    def _insert(table, key, breakpoints, values, where):
        entry = ScheduleEntry(key, tuple(breakpoints), tuple(values))
        prev = table.get(key)
        if prev is not None:
            same = prev.breakpoints == entry.breakpoints and all(
                abs(a - b) <= _TOL for a, b in zip(prev.values, entry.values))
            if not same:
                raise ValidationError(f"{where}: conflicts with its symmetry partner")
            return
        table[key] = entry

    def _validate_initial(self):
        init = self.initial
        if init.kind == "vacuum":
            return
        if init.kind == "fock":
            if self.particle_kind != "fermion":
                raise ValidationError("initial fock occupations are for fermion models")
            if len(init.occupations) != self.m or any(o not in (0, 1) for o in init.occupations):
                raise ValidationError("initial occupations must be m bits")
        elif init.kind == "coherent":
            if self.particle_kind != "boson":
                raise ValidationError("initial coherent amplitudes are for boson models")
            if len(init.alphas) != self.m:
                raise ValidationError("need one coherent amplitude per mode")
        else:
            raise ValidationError(f"unknown initial state kind {init.kind!r}")

    # -- coefficient access --------------------------------------------------

    def breakpoints_union(self) -> tuple[float, ...]:
        pts = {0.0}
        for tbl in (self._j_table, self._u_table, self._d_table):
            for e in tbl.values():
                pts.update(e.breakpoints)
        return tuple(sorted(pts))

    def j_value(self, v: int, a: int, u: int, b: int, t: float) -> complex:
        """J coefficient of c^a_v c^b_u at time t (a, b are 0-based)."""
        e = self._j_table.get((v, a, u, b))
        return 0.0 if e is None else e.value_at(t)

    def j_matrix(self, t: float) -> np.ndarray:
        """Full (2m, 2m) coupling matrix at time t, row index 2*v + a."""
        m2 = 2 * self.m
        J = np.zeros((m2, m2), dtype=complex)
        for (v, a, u, b), e in self._j_table.items():
            J[2 * v + a, 2 * u + b] = e.value_at(t)
        return J

    def u_value(self, v: int, u: int, t: float) -> float:
        e = self._u_table.get((v, u))
        return 0.0 if e is None else complex(e.value_at(t)).real

    def u_integral(self, v: int, u: int, t0: float, t1: float) -> float:
        e = self._u_table.get((v, u))
        return 0.0 if e is None else complex(e.integral(t0, t1)).real

    def j_integral(self, v: int, a: int, u: int, b: int, t0: float, t1: float) -> complex:
        e = self._j_table.get((v, a, u, b))
        return 0.0 if e is None else e.integral(t0, t1)

    def disp_value(self, v: int, a: int, t: float) -> float:
        e = self._d_table.get((v, a))
        return 0.0 if e is None else complex(e.value_at(t)).real

    def u_pairs(self) -> list[tuple[int, int]]:
        """Unordered mode pairs (v < u) carrying a nongaussian coupling."""
        return sorted({(min(v, u), max(v, u)) for (v, u) in self._u_table if v != u})

    def coupled_intersite_pairs(self) -> list[tuple[int, int]]:
        """Unordered inter-site mode pairs with any gaussian or nongaussian coupling."""
        pairs = {(min(v, u), max(v, u)) for (v, a, u, b) in self._j_table
                 if self.site_of(v) != self.site_of(u)}
        pairs |= {(min(v, u), max(v, u)) for (v, u) in self._u_table
                  if self.site_of(v) != self.site_of(u)}
        return sorted(pairs)


# ---------------------------------------------------------------------------
# config ingestion
# ---------------------------------------------------------------------------

def _parse_value(x, where: str) -> complex:
    if isinstance(x, bool):
        raise ConfigError(f"{where}: boolean is not a coefficient")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, str):
        try:
            return complex(x.replace(" ", ""))
        except ValueError as exc:
            raise ConfigError(f"{where}: cannot parse {x!r} as a number") from exc
    raise ConfigError(f"{where}: unsupported value type {type(x).__name__}")


def _entries_from(raw: dict, key: str, index_fields: tuple[str, ...]) -> list[ScheduleEntry]:
    out = []
    for k, tbl in enumerate(raw.get(key, [])):
        where = f"{key}[{k}]"
        if not isinstance(tbl, dict):
            raise ConfigError(f"{where}: expected a table")
        try:
            idx = tuple(int(tbl[f]) for f in index_fields)
        except KeyError as exc:
            raise ConfigError(f"{where}: missing index field {exc.args[0]!r}") from exc
        bps = tbl.get("breakpoints", [0.0])
        vals = tbl.get("values")
        if vals is None:
            if "value" not in tbl:
                raise ConfigError(f"{where}: missing 'values'")
            vals = [tbl["value"]]
        values = tuple(_parse_value(v, where) for v in vals)
        out.append(ScheduleEntry(idx, tuple(float(b) for b in bps), values))
    return out


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Patch top-level scalar fields with 'key=value' strings."""
    raw = dict(raw)
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r}: expected key=value")
        key, txt = ov.split("=", 1)
        key = key.strip()
        txt = txt.strip()
        if txt.lower() in ("true", "false"):
            val = txt.lower() == "true"
        else:
            try:
                val = int(txt)
            except ValueError:
                try:
                    val = float(txt)
                except ValueError:
                    val = txt
        raw[key] = val
    return raw


def spec_from_dict(raw: dict) -> ModelSpec:
    known = {"particle_kind", "n", "L", "kappa1", "kappa2", "kappa3",
             "c0", "alpha0", "beta0", "gaussian", "nongaussian", "displacement",
             "initial"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    for req in ("particle_kind", "n", "L"):
        if req not in raw:
            raise ConfigError(f"missing config key {req!r}")
    init_raw = raw.get("initial", {})
    init = InitialState(
        kind=init_raw.get("kind", "vacuum"),
        occupations=tuple(int(x) for x in init_raw.get("occupations", ())),
        alphas=tuple(complex(_parse_value(x, "initial.alphas")) for x in init_raw.get("alphas", ())),
    )
    return ModelSpec(
        n=int(raw["n"]),
        L=int(raw["L"]),
        particle_kind=str(raw["particle_kind"]),
        gaussian_couplings=tuple(_entries_from(raw, "gaussian",
                                               ("i", "sigma", "alpha", "j", "sigma2", "alpha2"))),
        nongaussian_couplings=tuple(_entries_from(raw, "nongaussian",
                                                  ("i", "sigma", "j", "sigma2"))),
        displacements=tuple(_entries_from(raw, "displacement", ("i", "sigma", "alpha"))),
        kappa1=float(raw.get("kappa1", 0.0)),
        kappa2=float(raw.get("kappa2", 0.0)),
        kappa3=float(raw.get("kappa3", 0.0)),
        c0=float(raw.get("c0", 1.0)),
        alpha0=float(raw.get("alpha0", 1.0)),
        beta0=float(raw.get("beta0", 1.0)),
        initial=init,
    )


def load_model_spec(path, overrides: list[str] | None = None) -> ModelSpec:
    """Load and validate a model from a TOML config file."""
    try:
        with open(path, "rb") as fh:
            raw = _toml.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if overrides:
        raw = apply_overrides(raw, overrides)
    return spec_from_dict(raw)


# ---------------------------------------------------------------------------
# convenience constructors for common couplings
# ---------------------------------------------------------------------------

def fermion_hopping_entries(i, sigma, j, sigma2, amplitude, breakpoints=(0.0,)):
    """Entries realising amplitude*(a_v^dag a_u + a_u^dag a_v) for fermions."""
    amps = np.atleast_1d(amplitude).astype(float)
    half = 0.5j * amps
    return [
        ScheduleEntry((i, sigma, 1, j, sigma2, 2), tuple(breakpoints), tuple(half)),
        ScheduleEntry((i, sigma, 2, j, sigma2, 1), tuple(breakpoints), tuple(-half)),
    ]


def boson_hopping_entries(i, sigma, j, sigma2, amplitude, breakpoints=(0.0,)):
    """Entries realising amplitude*(a_v^dag a_u + a_u^dag a_v) for bosons."""
    amps = np.atleast_1d(amplitude).astype(float)
    half = 0.5 * amps
    return [
        ScheduleEntry((i, sigma, 1, j, sigma2, 1), tuple(breakpoints), tuple(half)),
        ScheduleEntry((i, sigma, 2, j, sigma2, 2), tuple(breakpoints), tuple(half)),
    ]


# ---------------------------------------------------------------------------
# derived constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DerivedConstants:
    J_C: float
    J_os: float
    U_C: float
    U_os: float
    Omega: float
    Lambda: float
    G_sq: float
    gamma: float
    C0: float
    alpha0: float
    beta0: float
    C: float
    alpha: float
    beta: float
    d0: float
    k0: float


def _interval_probes(spec: ModelSpec) -> list[float]:
    bps = spec.breakpoints_union()
    probes = [(a + b) / 2 for a, b in zip(bps, bps[1:])]
    probes.append(bps[-1] + 1.0)
    return probes


def derived_constants(spec: ModelSpec) -> DerivedConstants:
    """Coupling-strength constants, maximised over modes and schedule intervals."""
    m = spec.m
    J_C = J_os = U_C = U_os = Om = Gs = 0.0
    for t in _interval_probes(spec):
        jsum_c = np.zeros(m)
        jsum_os = np.zeros(m)
        for (v, a, u, b), e in spec._j_table.items():
            x = abs(e.value_at(t))
            if spec.site_of(v) == spec.site_of(u):
                jsum_os[v] += x
            else:
                jsum_c[v] += x
        usum_c = np.zeros(m)
        usum_os = np.zeros(m)
        for (v, u), e in spec._u_table.items():
            x = abs(e.value_at(t))
            if spec.site_of(v) == spec.site_of(u):
                usum_os[v] += x
            else:
                usum_c[v] += x
        dsum = np.zeros(m)
        for (v, a), e in spec._d_table.items():
            dsum[v] += abs(e.value_at(t))
        J_C = max(J_C, jsum_c.max(initial=0.0))
        J_os = max(J_os, jsum_os.max(initial=0.0))
        U_C = max(U_C, usum_c.max(initial=0.0))
        U_os = max(U_os, usum_os.max(initial=0.0))
        Om = max(Om, dsum.max(initial=0.0))
        if spec.particle_kind == "boson":
            gsum = np.zeros(m)
            for v in range(m):
                for u in range(m):
                    j11 = spec.j_value(v, 0, u, 0, t)
                    j12 = spec.j_value(v, 0, u, 1, t)
                    j21 = spec.j_value(v, 1, u, 0, t)
                    j22 = spec.j_value(v, 1, u, 1, t)
                    gsum[v] += abs((j11 + 1j * j12 + 1j * j21 - j22) / 2)
            Gs = max(Gs, gsum.max(initial=0.0))
    kappa = spec.kappa1 + spec.kappa2 + spec.kappa3
    lam = J_C + U_C + J_os + U_os + kappa + Om
    gamma = (spec.kappa1 - spec.kappa2 - 2 * Gs) / 2
    alpha = max(spec.alpha0, 1.0)
    beta = spec.beta0
    g2 = 2 * gamma  # decay parameter entering the moment constant
    if g2 > 0:
        exponent = (1 + 4 * Om ** 2 / g2 ** 2 + 2 * Gs / g2
                    + 4 * (spec.kappa1 + spec.kappa2) / g2)
        C = math.exp(exponent) * (spec.c0 + 2) if exponent < 700 else math.inf
    else:
        C = math.inf
    return DerivedConstants(
        J_C=J_C, J_os=J_os, U_C=U_C, U_os=U_os, Omega=Om, Lambda=lam,
        G_sq=Gs, gamma=gamma, C0=spec.c0, alpha0=spec.alpha0, beta0=spec.beta0,
        C=C, alpha=alpha, beta=beta, d0=math.e * C, k0=beta / alpha,
    )


@dataclass(frozen=True)
class ThresholdReport:
    fermion_convex_gaussian_ok: bool
    fermion_convex_gaussian_margin: float
    boson_separable_ok: bool
    boson_separable_margin: float
    boson_moment_ok: bool
    boson_moment_margin: float

    def violations(self, particle_kind: str | None = None) -> list[str]:
        out = []
        if particle_kind in (None, "fermion") and not self.fermion_convex_gaussian_ok:
            out.append("fermion_convex_gaussian")
        if particle_kind in (None, "boson"):
            if not self.boson_separable_ok:
                out.append("boson_separable")
            if not self.boson_moment_ok:
                out.append("boson_moment")
        return out


def check_thresholds(spec: ModelSpec, consts: DerivedConstants | None = None) -> ThresholdReport:
    """Noise-versus-coupling threshold checks with numeric margins."""
    c = consts if consts is not None else derived_constants(spec)
    fermion_margin = spec.kappa3 - 2 * (c.U_C + c.U_os)
    boson_margin = min(spec.kappa1 - 2 * c.J_C, spec.kappa2 - 2 * c.J_C,
                       spec.kappa3 - 2 * c.U_C)
    return ThresholdReport(
        fermion_convex_gaussian_ok=bool(fermion_margin >= 0),
        fermion_convex_gaussian_margin=float(fermion_margin),
        boson_separable_ok=bool(boson_margin >= 0),
        boson_separable_margin=float(boson_margin),
        boson_moment_ok=bool(c.gamma > 0),
        boson_moment_margin=float(c.gamma),
    )


# ---------------------------------------------------------------------------
# planners
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonBudget:
    trotter: float
    truncation: float
    statistical: float

    @classmethod
    def thirds(cls, eps: float) -> "EpsilonBudget":
        return cls(eps / 3, eps / 3, eps / 3)

    @property
    def total(self) -> float:
        return self.trotter + self.truncation + self.statistical


@dataclass(frozen=True)
class RunPlan:
    T: int
    delta: float
    d: int = 1
    epsilon_budget: EpsilonBudget | None = None

    def __post_init__(self):
        if self.T < 1 or self.d < 1:
            raise ValueError("RunPlan requires T >= 1 and d >= 1")


def fermion_trotter_plan(spec: ModelSpec, t: float, eps: float,
                         budget: EpsilonBudget | None = None) -> RunPlan:
    """Step count guaranteeing trace-norm step error at most eps for fermions."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    lam = derived_constants(spec).Lambda
    T = max(1, math.ceil(4 * t ** 2 * spec.m ** 2 * lam ** 2 / eps))
    return RunPlan(T=T, delta=t / T, epsilon_budget=budget)


def boson_trotter_plan(spec: ModelSpec, t: float, d: int, eps: float,
                       budget: EpsilonBudget | None = None) -> RunPlan:
    """Step count for the truncated bosonic model at truncation level d."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    lam = derived_constants(spec).Lambda
    T = max(1, math.ceil(16 * t ** 2 * spec.m ** 2 * d ** 4 * lam ** 2 / eps))
    return RunPlan(T=T, delta=t / T, d=d, epsilon_budget=budget)


def moment_bound(consts: DerivedConstants, m: int, k: int) -> float:
    """Upper bound on the k-th moment of the total particle number."""
    if consts.gamma <= 0:
        raise ValueError("moment bound requires gamma > 0")
    if k < 1 or int(k) != k:
        raise ValueError("k must be a positive integer")
    return (consts.C * m) ** k * float(k) ** (consts.alpha * k + consts.beta)


def _truncation_bound(consts: DerivedConstants, m: int, t: float, d: int) -> float:
    x = (d / (consts.d0 * m)) ** (1.0 / consts.alpha)
    return (m ** (1 - consts.k0 / 2) * d ** (2 + consts.k0 / 2)
            * t * consts.Lambda * math.exp(-x / 2))


def tail_probability(consts: DerivedConstants, m: int, d: int) -> float:
    """Occupancy bound for the subspace with at least d particles."""
    r = d / (consts.d0 * m)
    return math.e * r ** consts.k0 * math.exp(-r ** (1.0 / consts.alpha))


@dataclass(frozen=True)
class TruncationPlan:
    d: int
    bound: float
    tail: float


def boson_truncation_plan(consts: DerivedConstants, m: int, t: float, eps: float,
                          max_d: int = 10 ** 7) -> TruncationPlan:
    """Smallest truncation level whose error bound (unit constant) is below eps.

    The bound grows up to d* = d0*m*(2*alpha*(2 + k0/2))**alpha before its
    exponential tail takes over, so the search only accepts levels past d*
    unless the bound already holds at d = 1.
    """
    if consts.gamma <= 0:
        raise ValueError("truncation plan requires gamma > 0")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if _truncation_bound(consts, m, t, 1) <= eps:
        return TruncationPlan(1, _truncation_bound(consts, m, t, 1),
                              tail_probability(consts, m, 1))
    dstar = consts.d0 * m * (2 * consts.alpha * (2 + consts.k0 / 2)) ** consts.alpha
    d = 2
    while d <= max_d:
        if d >= dstar and _truncation_bound(consts, m, t, d) <= eps:
            return TruncationPlan(d, _truncation_bound(consts, m, t, d),
                                  tail_probability(consts, m, d))
        d += 1
    raise RuntimeError("truncation search exceeded max_d")


# ---------------------------------------------------------------------------
# dissipator splitting across pair channels
# ---------------------------------------------------------------------------

def _pair_j_weight(spec: ModelSpec, v: int, u: int, t: float) -> float:
    return sum(abs(spec.j_value(v, a, u, b, t)) for a in (0, 1) for b in (0, 1))


def _intersite_j_sum(spec: ModelSpec, v: int, t: float) -> float:
    tot = 0.0
    for (vv, a, u, b), e in spec._j_table.items():
        if vv == v and spec.site_of(u) != spec.site_of(v):
            tot += abs(e.value_at(t))
    return tot


def _intersite_u_sum(spec: ModelSpec, v: int, t: float) -> float:
    tot = 0.0
    for (vv, u), e in spec._u_table.items():
        if vv == v and spec.site_of(u) != spec.site_of(v):
            tot += abs(e.value_at(t))
    return tot


def _all_u_sum(spec: ModelSpec, v: int, t: float) -> float:
    return sum(abs(e.value_at(t)) for (vv, u), e in spec._u_table.items()
               if vv == v and u != v)


def noise_split_weights(spec: ModelSpec, v: int, u: int, l: int, side: str,
                        t: float) -> float:
    """Share of mode v's (side 'p') or mode u's (side 'q') dissipator l routed
    to the (v, u) pair channel.  Zero-coupling denominators yield weight 0."""
    if side not in ("p", "q"):
        raise ValueError("side must be 'p' or 'q'")
    if spec.particle_kind == "fermion":
        if l != 3:
            raise ValueError("fermionic channels only split the dephasing dissipator")
        num = abs(spec.u_value(v, u, t))
        den = _all_u_sum(spec, v, t) if side == "p" else _all_u_sum(spec, u, t)
        return 0.0 if den == 0.0 else 0.5 * num / den
    if l not in (1, 2, 3):
        raise ValueError("dissipator index must be 1, 2 or 3")
    if spec.site_of(v) == spec.site_of(u):
        raise ValueError("bosonic pair channels act on inter-site pairs")
    anchor = v if side == "p" else u
    if l in (1, 2):
        num = _pair_j_weight(spec, v, u, t)
        den = _intersite_j_sum(spec, anchor, t)
    else:
        num = abs(spec.u_value(v, u, t))
        den = _intersite_u_sum(spec, anchor, t)
    return 0.0 if den == 0.0 else num / den


def leftover_rate(spec: ModelSpec, v: int, l: int, t: float) -> float:
    """Dissipator mass of mode v not distributed to any pair channel."""
    kappa = {1: spec.kappa1, 2: spec.kappa2, 3: spec.kappa3}[l]
    if kappa == 0.0:
        return 0.0
    if spec.particle_kind == "fermion":
        if l in (1, 2):
            return 0.0  # loss and gain ride with the quadratic segment
        return kappa if _all_u_sum(spec, v, t) == 0.0 else 0.0
    den = _intersite_j_sum(spec, v, t) if l in (1, 2) else _intersite_u_sum(spec, v, t)
    return kappa if den == 0.0 else 0.0


# ---------------------------------------------------------------------------
# step grids
# ---------------------------------------------------------------------------

def build_step_grid(t: float, T: int, breakpoints=()) -> list[tuple[float, float]]:
    """T uniform steps over [0, t], split wherever a schedule breakpoint falls."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return []
    edges = {k * t / T for k in range(T + 1)}
    edges.update(b for b in breakpoints if 0.0 < b < t)
    grid = sorted(edges)
    return list(zip(grid, grid[1:]))
