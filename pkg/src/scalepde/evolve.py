"""Slice evolution of the macroscopic system and the coupled defect.

The macroscopic velocity evolves by dv/dt = P(-(v . grad) v + r) with P
the Leray projection and r either zero or the screened-Poisson closure
of the derived filter source.  The filter defect psi rides along on the
same RK4 stages through its linearized transport equation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as _dc_field

import numpy as np

from . import families
from .fluid import advect, fluid_source, leray_project
from .grid import (
    TWO_PI,
    Field,
    Grid,
    NonFiniteFieldError,
    _dealias_values,
    dealiased,
    divergence,
    field_norms,
    make_grid,
    restrict_to_grid,
    spectral_derivative,
)
from .residual import solve_residual_closure


class ConfigError(ValueError):
    """Raised for invalid run configuration values."""


class SimulationDiverged(RuntimeError):
    """Raised when evolution produces non-finite values."""

    def __init__(self, message: str, records=None):
        super().__init__(message)
        self.records = records or []


@dataclass(frozen=True)
class EvolutionState:
    """Macroscopic slice state at one time: velocity and optional defect."""

    t: float
    v: Field
    psi_v: Field | None = None
    step_count: int = 0

    @property
    def eta(self) -> float:
        return self.v.eta


def cfl_limit(v: Field) -> float:
    """Largest admissible dt: half a cell crossing at the peak speed."""
    vmax = float(np.max(np.abs(v.values)))
    if vmax == 0.0:
        return math.inf
    return 0.5 * v.grid.spacing / vmax


def macroscopic_rhs(v: Field, closure: str = "none", eta: float | None = None) -> Field:
    """Projected right-hand side P(-(v . grad) v + r_closure)."""
    if closure not in ("none", "helmholtz"):
        raise ValueError(f"unknown closure {closure!r}")
    w = -advect(v, v)
    if closure == "helmholtz":
        if eta is None:
            eta = v.eta
        if not eta > 0.0:
            raise ValueError("the helmholtz closure needs eta > 0")
        s = fluid_source(v)
        s_v = s.with_values(s.values[: v.grid.n])
        w = w + solve_residual_closure(s_v, eta)
    return leray_project(w)[0]


def psi_rhs(psi_v: Field, v: Field, e_v: Field | None = None) -> Field:
    """Defect transport: -(v . grad) psi - (psi . grad) v - grad(psi_p) + e.

    The pressure-defect gradient is realized by Leray projection, which
    removes exactly the gradient part the transport terms generate.
    """
    rhs = -advect(v, psi_v) - advect(psi_v, v)
    if e_v is not None:
        rhs = rhs + e_v
    return leray_project(rhs)[0]


def _stage(f: Field, k: Field, h: float) -> Field:
    return f.with_values(f.values + h * k.values)


def step_rk4(
    state: EvolutionState,
    dt: float,
    closure: str = "none",
    e_v: Field | None = None,
) -> EvolutionState:
    """One classical RK4 step of the coupled (v, psi) system.

    The combined update is re-projected so divergence-free velocity and
    defect are preserved exactly.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    v, psi = state.v, state.psi_v
    try:
        kv1 = macroscopic_rhs(v, closure)
        kv2 = macroscopic_rhs(_stage(v, kv1, dt / 2), closure)
        kv3 = macroscopic_rhs(_stage(v, kv2, dt / 2), closure)
        kv4 = macroscopic_rhs(_stage(v, kv3, dt), closure)
        combo = v.values + (dt / 6.0) * (
            kv1.values + 2 * kv2.values + 2 * kv3.values + kv4.values
        )
        v_new = leray_project(v.with_values(combo))[0]
        psi_new = None
        if psi is not None:
            kp1 = psi_rhs(psi, v, e_v)
            kp2 = psi_rhs(_stage(psi, kp1, dt / 2), _stage(v, kv1, dt / 2), e_v)
            kp3 = psi_rhs(_stage(psi, kp2, dt / 2), _stage(v, kv2, dt / 2), e_v)
            kp4 = psi_rhs(_stage(psi, kp3, dt), _stage(v, kv3, dt), e_v)
            pcombo = psi.values + (dt / 6.0) * (
                kp1.values + 2 * kp2.values + 2 * kp3.values + kp4.values
            )
            psi_new = leray_project(psi.with_values(pcombo))[0]
    except NonFiniteFieldError as err:
        raise SimulationDiverged(
            f"non-finite values at t={state.t:.6g}, step {state.step_count}: {err}"
        ) from err
    t_new = state.t + dt
    return EvolutionState(
        t=t_new,
        v=v_new.with_values(t=t_new),
        psi_v=None if psi_new is None else psi_new.with_values(t=t_new),
        step_count=state.step_count + 1,
    )


_IC_DEFAULTS = {
    "taylor_green": {"amplitude": 1.0},
    "random_solenoidal": {"kmax": 4, "amplitude": 1.0},
    "single_mode": {"k": (1, 2), "amplitude": 1.0},
    "zero": {},
}


def _build_ic(spec: dict, grid: Grid, rng: np.random.Generator, what: str) -> Field:
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in _IC_DEFAULTS:
        raise ConfigError(
            f"{what}.name must be one of {sorted(_IC_DEFAULTS)}, got {name!r}"
        )
    params = dict(_IC_DEFAULTS[name])
    for key, value in spec.items():
        if key not in params:
            raise ConfigError(f"unknown key {what}.{key}")
        params[key] = value
    if name == "taylor_green":
        return families.taylor_green(grid, amplitude=params["amplitude"])
    if name == "random_solenoidal":
        return families.random_solenoidal(
            grid, rng, kmax=int(params["kmax"]), amplitude=params["amplitude"]
        )
    if name == "single_mode":
        return families.single_mode_solenoidal(
            grid, k=tuple(params["k"]), amplitude=params["amplitude"]
        )
    return Field(grid, np.zeros((grid.n,) + grid.shape))


@dataclass(frozen=True)
class RunConfig:
    """Validated description of one run or experiment.

    ``eta`` can be given directly or through beta * delta^2 at parse
    time.  ``epsilon``/``eta0``/``nodes`` configure the scale windows
    of the check experiments.
    """

    n: int = 2
    grid_size: int = 64
    core: str = "fluid"
    eta: float = 0.05
    dt: float | None = None
    t_end: float = 0.1
    closure: str = "helmholtz"
    initial_condition: dict = _dc_field(
        default_factory=lambda: {"name": "taylor_green"}
    )
    psi_enabled: bool = False
    psi_initial: dict = _dc_field(default_factory=lambda: {"name": "zero"})
    psi_forcing: dict = _dc_field(default_factory=lambda: {"name": "zero"})
    epsilon: float = 0.05
    eta0: float = 0.15
    nodes: tuple[int, ...] = (9, 17, 33)
    output_interval: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigError(f"n must be 1 or 2, got {self.n}")
        if self.grid_size < 4 or self.grid_size % 2:
            raise ConfigError(f"grid_size must be even and >= 4, got {self.grid_size}")
        if self.core not in ("fluid", "burgers"):
            raise ConfigError(f"core must be 'fluid' or 'burgers', got {self.core!r}")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta}")
        if self.dt is not None and not self.dt > 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0.0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.closure not in ("none", "helmholtz"):
            raise ConfigError(
                f"closure must be 'none' or 'helmholtz', got {self.closure!r}"
            )
        if not 0.0 < self.epsilon < self.eta0 <= 1.0:
            raise ConfigError(
                f"need 0 < epsilon < eta0 <= 1, got epsilon={self.epsilon}, "
                f"eta0={self.eta0}"
            )
        nodes = tuple(int(k) for k in self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if any(k < 5 for k in nodes) or not nodes:
            raise ConfigError(f"nodes must all be >= 5, got {nodes}")
        if self.output_interval < 1:
            raise ConfigError(
                f"output_interval must be >= 1, got {self.output_interval}"
            )

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def grid(self) -> Grid:
        return make_grid(self.n, self.grid_size)

    def resolved_dt(self, v0: Field) -> float:
        limit = cfl_limit(v0)
        if self.dt is None:
            if not math.isfinite(limit):
                return self.t_end / max(1, round(self.t_end / 0.01))
            n_steps = max(1, math.ceil(self.t_end / (0.8 * limit) - 1e-12))
            return self.t_end / n_steps
        n_steps = round(self.t_end / self.dt)
        if n_steps < 1 or abs(n_steps * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ConfigError(
                f"t_end={self.t_end} is not an integer number of dt={self.dt} steps"
            )
        return self.dt


def build_initial_state(config: RunConfig) -> EvolutionState:
    """Construct the configured initial (v, psi) slice at t = 0."""
    if config.core != "fluid":
        raise ConfigError("slice evolution supports the fluid core only")
    grid = config.grid()
    rng = config.rng()
    v0 = _build_ic(config.initial_condition, grid, rng, "initial_condition")
    v0 = leray_project(v0)[0].with_values(t=0.0, eta=config.eta)
    psi0 = None
    if config.psi_enabled:
        psi0 = _build_ic(config.psi_initial, grid, rng, "psi_initial")
        psi0 = leray_project(psi0)[0].with_values(t=0.0, eta=config.eta)
    return EvolutionState(t=0.0, v=v0, psi_v=psi0)


def resolve_forcing(config: RunConfig, grid: Grid) -> Field | None:
    """Materialize the psi forcing field e_v, if any."""
    spec = dict(config.psi_forcing)
    name = spec.pop("name", None)
    if name == "zero":
        if spec:
            raise ConfigError(f"unknown keys in psi_forcing: {sorted(spec)}")
        return None
    if name == "checkpoint":
        path = spec.pop("path", None)
        if spec:
            raise ConfigError(f"unknown keys in psi_forcing: {sorted(spec)}")
        if not path:
            raise ConfigError("psi_forcing.path is required for checkpoint forcing")
        f, _ = read_checkpoint(path)
        if f.grid != grid or f.ncomp != grid.n:
            raise ConfigError(
                "psi_forcing checkpoint does not match the run grid"
            )
        return f
    raise ConfigError(
        f"psi_forcing.name must be 'zero' or 'checkpoint', got {name!r}"
    )


DIAGNOSTIC_COLUMNS = (
    "step",
    "t",
    "energy",
    "max_div_v",
    "r_l2",
    "r_max",
    "psi_l2",
    "psi_max",
    "psi_sup",
    "deviation_bound",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One diagnostics row of a run."""

    step: int
    t: float
    energy: float
    max_div_v: float
    r_l2: float
    r_max: float
    psi_l2: float
    psi_max: float
    psi_sup: float
    deviation_bound: float

    def row(self) -> tuple:
        return tuple(getattr(self, c) for c in DIAGNOSTIC_COLUMNS)


def kinetic_energy(v: Field) -> float:
    measure = TWO_PI ** v.grid.n
    return 0.5 * float(np.mean(np.sum(v.values**2, axis=0))) * measure


def _diagnose(state: EvolutionState, closure: str, psi_sup: float) -> DiagnosticsRecord:
    v = state.v
    div_max = field_norms(divergence(v))[1]
    if closure == "helmholtz":
        s = fluid_source(v)
        r_v = solve_residual_closure(s.with_values(s.values[: v.grid.n]), v.eta)
        r_l2, r_max = field_norms(r_v)
    else:
        r_l2, r_max = 0.0, 0.0
    if state.psi_v is not None:
        psi_l2, psi_max = field_norms(state.psi_v)
    else:
        psi_l2, psi_max = 0.0, 0.0
    return DiagnosticsRecord(
        step=state.step_count,
        t=state.t,
        energy=kinetic_energy(v),
        max_div_v=div_max,
        r_l2=r_l2,
        r_max=r_max,
        psi_l2=psi_l2,
        psi_max=psi_max,
        psi_sup=psi_sup,
        deviation_bound=state.eta * psi_sup,
    )


@dataclass
class SimulationResult:
    config: RunConfig
    records: list[DiagnosticsRecord]
    final: EvolutionState


def run_simulation(
    config: RunConfig, initial: EvolutionState | None = None
) -> SimulationResult:
    """Integrate a configured run and collect diagnostics.

    The running sup of |psi| feeds the deviation bound column
    eta * sup |psi|.  Raises SimulationDiverged (with partial records
    attached) when values stop being finite.
    """
    if initial is None:
        initial = build_initial_state(config)
    state = initial
    dt = config.resolved_dt(state.v)
    limit = cfl_limit(state.v)
    if dt > limit * (1.0 + 1e-12):
        raise ConfigError(
            f"dt={dt:.6g} violates the CFL limit {limit:.6g} for this initial state"
        )
    n_steps = max(1, round(config.t_end / dt))
    e_v = resolve_forcing(config, state.v.grid)
    psi_sup = 0.0
    if state.psi_v is not None:
        psi_sup = field_norms(state.psi_v)[1]
    records = [_diagnose(state, config.closure, psi_sup)]
    try:
        for _ in range(n_steps):
            state = step_rk4(state, dt, closure=config.closure, e_v=e_v)
            if state.psi_v is not None:
                psi_sup = max(psi_sup, field_norms(state.psi_v)[1])
            if state.step_count % config.output_interval == 0 or state.step_count == n_steps:
                records.append(_diagnose(state, config.closure, psi_sup))
    except SimulationDiverged as err:
        raise SimulationDiverged(str(err), records=records) from err
    return SimulationResult(config=config, records=records, final=state)


def _burgers_rhs(u: Field) -> Field:
    du = spectral_derivative(u, 0)
    return u.with_values(-_dealias_values(u.grid, u.values * du.values))


def _rk4_field(u: Field, dt: float, rhs) -> Field:
    k1 = rhs(u)
    k2 = rhs(_stage(u, k1, dt / 2))
    k3 = rhs(_stage(u, k2, dt / 2))
    k4 = rhs(_stage(u, k3, dt))
    return u.with_values(
        u.values + (dt / 6.0) * (k1.values + 2 * k2.values + 2 * k3.values + k4.values),
        t=u.t + dt,
    )


@dataclass
class BurgersReference:
    """Fine-grid inviscid Burgers trajectory with coarse slice access."""

    coarse: Grid
    fine: Grid
    times: list[float]
    snapshots: list[Field]

    def coarse_slice(self, i: int) -> tuple[Field, Field]:
        """(u, u_t) restricted to the coarse grid and dealiased there.

        u_t restricts the fine-grid right-hand side, which is the exact
        time derivative of the restricted trajectory.
        """
        snap = self.snapshots[i]
        u = dealiased(restrict_to_grid(snap, self.coarse))
        u_t = dealiased(restrict_to_grid(_burgers_rhs(snap), self.coarse))
        return u, u_t.with_values(t=u.t)


def reference_burgers(
    coarse: Grid,
    t_end: float,
    fine_factor: int = 4,
    dt: float | None = None,
    snapshot_times: list[float] | None = None,
) -> BurgersReference:
    """Solve inviscid Burgers from u0 = sin x on a refined grid.

    Valid strictly before shock formation at t = 1.
    """
    if coarse.n != 1:
        raise ValueError("the reference problem is one dimensional")
    if not 0.0 <= t_end < 1.0:
        raise ValueError(
            f"t_end must lie in [0, 1) before the first shock, got {t_end}"
        )
    if fine_factor < 1:
        raise ValueError("fine_factor must be >= 1")
    fine = make_grid(1, coarse.size * fine_factor)
    if dt is None:
        dt = 0.25 * fine.spacing
    wanted = sorted(set(snapshot_times or []) | {t_end})
    for tw in wanted:
        if not 0.0 <= tw <= t_end:
            raise ValueError(f"snapshot time {tw} outside [0, {t_end}]")
    u = Field(fine, np.sin(fine.coords()[0])[np.newaxis], t=0.0)
    times, snapshots = [], []
    if wanted and wanted[0] == 0.0:
        times.append(0.0)
        snapshots.append(u)
        wanted = wanted[1:]
    t = 0.0
    for target in wanted:
        n_steps = max(1, round((target - t) / dt))
        h = (target - t) / n_steps
        for _ in range(n_steps):
            u = _rk4_field(u, h, _burgers_rhs)
        t = target
        u = u.with_values(t=target)
        times.append(target)
        snapshots.append(u)
    return BurgersReference(coarse=coarse, fine=fine, times=times, snapshots=snapshots)


CHECKPOINT_MAGIC = b"SCALEPDE"
CHECKPOINT_VERSION = 1


def write_checkpoint(path, f: Field, extra: dict | None = None):
    """Binary snapshot: magic, JSON header line, raw little-endian values."""
    header = {
        "version": CHECKPOINT_VERSION,
        "n": f.grid.n,
        "size": f.grid.size,
        "components": f.ncomp,
        "t": f.t,
        "eta": f.eta,
    }
    if extra:
        header.update(extra)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[Field, dict]:
    """Read a checkpoint back into a Field plus its header dict."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        header = json.loads(fh.readline().decode())
        grid = make_grid(header["n"], header["size"])
        count = header["components"] * grid.num_points
        data = np.frombuffer(fh.read(count * 8), dtype="<f8").copy()
    values = data.reshape((header["components"],) + grid.shape)
    return Field(grid, values, t=header["t"], eta=header["eta"]), header
