"""
Одномерный послойный решатель теплопроводности с источником от отверждения.

Пространство: конечные объёмы с центрами в ячейках, проводимость границы
ячеек через гармоническое среднее. Время: двухстадийная SDIRK-схема второго
порядка с вложенной схемой первого порядка и PI-регулятором шага.
Состояние y = (Θ [K] по ячейкам, c по ячейкам).
"""

import logging
from typing import Iterable, Protocol

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from cureuq import presets
from cureuq.core import constitutive as cm
from cureuq.exceptions import (
    ConfigurationError,
    ConvergenceError,
    CureUQError,
    SimulationError,
)
from cureuq.schemas.materials import KELVIN, CuringState
from cureuq.schemas.simulation import (
    STEFAN_BOLTZMANN,
    Adiabatic,
    DirichletPath,
    EpoxyMaterial,
    InertMaterial,
    Layer,
    Mixed,
    ScenarioConfig,
    SimDomain,
    SimResult,
    SolverOptions,
)

logger = logging.getLogger(__name__)

GAMMA = 1.0 - np.sqrt(2.0) / 2.0
TABLEAU_A = np.array([[GAMMA, 0.0], [1.0 - GAMMA, GAMMA]])
TABLEAU_C = np.array([GAMMA, 1.0])
WEIGHTS = np.array([1.0 - GAMMA, GAMMA])
ALPHA_HAT = 2.0 - 1.25 * np.sqrt(2.0)
WEIGHTS_EMBEDDED = np.array([1.0 - ALPHA_HAT, ALPHA_HAT])

FD_STEP = np.sqrt(np.finfo(float).eps)
ERR_FLOOR = 1e-10


class OdeSystem(Protocol):
    size: int

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray: ...

    def jacobian(self, t: float, y: np.ndarray, f0: np.ndarray | None = None): ...

    def atol(self, options: SolverOptions) -> np.ndarray: ...

    def newton_scale(self, y: np.ndarray) -> np.ndarray: ...


def stability_function(z) -> tuple[complex, complex]:
    """R(z) = 1 + z·bᵀ(I − zA)⁻¹·1 для основной и вложенной схем."""
    z = complex(z)
    stages = np.linalg.solve(np.eye(2) - z * TABLEAU_A, np.ones(2))
    return 1.0 + z * WEIGHTS @ stages, 1.0 + z * WEIGHTS_EMBEDDED @ stages


def default_curing_path(ramp: float = 600.0) -> DirichletPath:
    """Путь печи: 20 °C, 8 ч при 60 °C, 4 ч при 120 °C, 2 ч при 20 °C."""
    temps = presets.CURING_PATH_TEMPS
    nodes = [(0.0, temps[0])]
    t = 0.0
    for hold, (start, end) in zip(
        presets.CURING_PATH_HOLDS, zip(temps[1::2], temps[2::2])
    ):
        t += ramp
        nodes.append((t, start))
        t += hold
        nodes.append((t, end))
    return DirichletPath(nodes=nodes)


class CureSystem:
    """Полудискретная система ОДУ слоистой области."""

    def __init__(self, domain: SimDomain):
        self.domain = domain
        self.n = domain.n_cells
        self.size = 2 * self.n
        dx, rho, h_c = [], [], []
        self.epoxy_slices: list[tuple[slice, EpoxyMaterial]] = []
        self.inert_slices: list[tuple[slice, InertMaterial]] = []
        start = 0
        for layer in domain.layers:
            cells = slice(start, start + layer.cells)
            dx.append(np.full(layer.cells, layer.thickness / layer.cells))
            material = layer.material
            if isinstance(material, EpoxyMaterial):
                self.epoxy_slices.append((cells, material))
                rho.append(np.full(layer.cells, material.rho_ref))
                h_c.append(np.full(layer.cells, material.h_c))
            else:
                self.inert_slices.append((cells, material))
                rho.append(np.full(layer.cells, material.rho))
                h_c.append(np.zeros(layer.cells))
            start += layer.cells
        self.dx = np.concatenate(dx)
        self.rho = np.concatenate(rho)
        self.h_c = np.concatenate(h_c)
        self.epoxy = np.zeros(self.n, dtype=bool)
        for cells, _ in self.epoxy_slices:
            self.epoxy[cells] = True
        self.centres = np.cumsum(self.dx) - 0.5 * self.dx

    def initial_state(self) -> np.ndarray:
        theta = np.broadcast_to(
            np.asarray(self.domain.initial_theta, dtype=float), (self.n,)
        )
        c = np.where(self.epoxy, self.domain.initial_c, 0.0)
        return np.concatenate([theta + KELVIN, c])

    def properties(self, theta: np.ndarray, c: np.ndarray):
        """κ, c_p и ċ по ячейкам; в инертных слоях ċ = 0."""
        kappa = np.empty(self.n)
        cp = np.empty(self.n)
        rate = np.zeros(self.n)
        for cells, m in self.inert_slices:
            kappa[cells], cp[cells] = m.kappa, m.cp
        for cells, m in self.epoxy_slices:
            state = CuringState.unchecked(theta[cells], c[cells])
            p = m.parameters
            kappa[cells] = cm.conductivity(state, p.conductivity)
            cp[cells] = cm.specific_heat(state, p.heat_capacity, p.glass_transition)
            rate[cells] = cm.curing_rate(state, p.kinetics, p.glass_transition)
        return kappa, cp, rate

    def _boundary_inflow(self, bc, t, theta_cell, kappa_cell, dx_cell) -> float:
        if isinstance(bc, Adiabatic):
            return 0.0
        if isinstance(bc, DirichletPath):
            wall = bc.at(t) + KELVIN
            return 2.0 * kappa_cell / dx_cell * (wall - theta_cell)
        ambient = bc.ambient.at(t) + KELVIN
        convection = bc.h * (theta_cell - ambient)
        radiation = STEFAN_BOLTZMANN * bc.eps * (theta_cell**4 - ambient**4)
        return -(convection + radiation)

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        theta, c = y[: self.n], y[self.n :]
        kappa, cp, rate = self.properties(theta, c)
        resistance = 0.5 * self.dx / kappa
        conductance = 1.0 / (resistance[:-1] + resistance[1:])
        flow = conductance * (theta[1:] - theta[:-1])
        inflow = np.zeros(self.n)
        inflow[:-1] += flow
        inflow[1:] -= flow
        inflow[0] += self._boundary_inflow(
            self.domain.bc_low, t, theta[0], kappa[0], self.dx[0]
        )
        inflow[-1] += self._boundary_inflow(
            self.domain.bc_high, t, theta[-1], kappa[-1], self.dx[-1]
        )
        dtheta = (inflow / self.dx + self.rho * self.h_c * rate) / (self.rho * cp)
        return np.concatenate([dtheta, rate])

    def jacobian(self, t: float, y: np.ndarray, f0: np.ndarray | None = None):
        """
        Разреженный якобиан прямыми разностями по шести группам столбцов.

        Столбец Θ_j или c_j влияет только на строки Θ_{j-1..j+1} и c_j,
        поэтому столбцы с одинаковым j mod 3 возмущаются одновременно.
        """
        n = self.n
        f0 = self.rhs(t, y) if f0 is None else f0
        rows, cols, vals = [], [], []
        for block in (0, n):
            for residue in range(3):
                idx = np.arange(residue, n, 3)
                columns = block + idx
                step = FD_STEP * (1.0 + np.abs(y[columns]))
                shifted = y.copy()
                shifted[columns] += step
                df = self.rhs(t, shifted) - f0
                for offset in (-1, 0, 1):
                    nb = idx + offset
                    ok = (nb >= 0) & (nb < n)
                    rows.append(nb[ok])
                    cols.append(columns[ok])
                    vals.append(df[nb[ok]] / step[ok])
                rows.append(n + idx)
                cols.append(columns)
                vals.append(df[n + idx] / step)
        return sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size),
        )

    def atol(self, options: SolverOptions) -> np.ndarray:
        return np.concatenate(
            [np.full(self.n, options.abs_tol_theta), np.full(self.n, options.abs_tol_c)]
        )

    def newton_scale(self, y: np.ndarray) -> np.ndarray:
        return np.concatenate([1.0 + np.abs(y[: self.n]), np.ones(self.n)])

    def enthalpy(self, y: np.ndarray) -> float:
        """∑ρ·c_p·Θ·Δx [J/m²]; сохраняется в изолированной инертной области."""
        theta, c = y[: self.n], y[self.n :]
        _, cp, _ = self.properties(theta, c)
        return float(np.sum(self.rho * cp * theta * self.dx))

    def breakpoints(self) -> np.ndarray:
        times = []
        for bc in (self.domain.bc_low, self.domain.bc_high):
            path = bc.ambient if isinstance(bc, Mixed) else bc
            if isinstance(path, DirichletPath):
                times.extend(path.times.tolist())
        return np.unique(times)


def semidiscretize(domain: SimDomain) -> CureSystem:
    return CureSystem(domain)


def _solve_stage(system, t, base, dt_gamma, guess, options: SolverOptions):
    y = guess.copy()
    identity = sp.identity(system.size, format="csc")
    for _ in range(options.newton_max_iter):
        try:
            f = system.rhs(t, y)
            jac = sp.csc_matrix(system.jacobian(t, y, f))
            delta = splu((identity - dt_gamma * jac).tocsc()).solve(
                -(y - base - dt_gamma * f)
            )
        except (CureUQError, RuntimeError) as exc:
            raise ConvergenceError(f"Stage solve failed at t = {t:.6g} s: {exc}")
        y = y + delta
        if not np.all(np.isfinite(y)):
            break
        scaled = delta / system.newton_scale(y)
        if np.sqrt(np.mean(scaled**2)) < options.newton_tol:
            return y
    raise ConvergenceError(f"Newton did not converge at t = {t:.6g} s")


def step_dirk(
    y: np.ndarray, t: float, dt: float, system: OdeSystem, options: SolverOptions
) -> tuple[np.ndarray, float]:
    """
    Один шаг SDIRK(2) с вложенной схемой первого порядка.

    Возвращает:
    - (y_new, err): err есть взвешенная среднеквадратичная норма y₂ − ŷ,
      шаг принимается при err ≤ 1.

    Исключения:
    - ConvergenceError, если метод Ньютона не сошёлся на какой-либо стадии.
    """
    if dt <= 0:
        raise SimulationError("Time step must be positive")
    dt_gamma = dt * GAMMA
    slopes = []
    stage = y
    for i in range(2):
        base = y + dt * sum(TABLEAU_A[i, j] * slopes[j] for j in range(i))
        stage = _solve_stage(
            system, t + TABLEAU_C[i] * dt, base, dt_gamma, stage, options
        )
        slopes.append((stage - base) / dt_gamma)
    y_new = stage
    error = dt * sum((WEIGHTS - WEIGHTS_EMBEDDED)[j] * slopes[j] for j in range(2))
    scale = system.atol(options) + options.rel_tol * np.maximum(
        np.abs(y), np.abs(y_new)
    )
    return y_new, float(np.sqrt(np.mean((error / scale) ** 2)))


def _propose(dt: float, err: float, err_prev: float, o: SolverOptions) -> float:
    err = max(err, ERR_FLOOR)
    factor = o.safety * err ** (-o.k_i) * (err_prev / err) ** o.k_p
    factor = min(max(factor, o.growth_min), o.growth_max)
    return min(max(dt * factor, o.dt_min), o.dt_max)


def _enforce_cure(c_new, c_old, epoxy) -> tuple[np.ndarray, int, int]:
    clipped = np.clip(c_new, 0.0, 1.0)
    clamps = int(np.count_nonzero(clipped != c_new))
    monotone = np.maximum(clipped, c_old)
    regressions = int(np.count_nonzero(monotone != clipped))
    return np.where(epoxy, monotone, 0.0), clamps, regressions


def default_probes(system: CureSystem) -> dict[str, int]:
    """Верхняя, средняя (по смоле) и нижняя ячейки."""
    epoxy_cells = np.flatnonzero(system.epoxy)
    cells = epoxy_cells if epoxy_cells.size else np.arange(system.n)
    return {
        "top": system.n - 1,
        "middle": int(cells[cells.size // 2]),
        "bottom": 0,
    }


def integrate_adaptive(
    domain: SimDomain,
    options: SolverOptions | None = None,
    t_end: float = 0.0,
    snapshot_times: Iterable[float] = (),
    t_start: float = 0.0,
) -> SimResult:
    """
    Адаптивное интегрирование до t_end.

    Параметры:
    - domain: Слоистая область с граничными условиями.
    - options: Допуски, параметры Ньютона и PI-регулятора.
    - snapshot_times: Моменты, в которые сохраняется профиль Θ.

    Возвращает:
    - SimResult с принятыми шагами, полями Θ [°C] и c и числом отклонённых шагов.

    Исключения:
    - SimulationError, если шаг упал ниже dt_min или превышено max_steps.
    """
    if t_end <= t_start:
        raise SimulationError("t_end must exceed the start time")
    o = options or SolverOptions()
    system = semidiscretize(domain)
    snapshots_at = sorted(float(s) for s in snapshot_times if t_start < s <= t_end)
    stops = np.unique(
        np.concatenate([system.breakpoints(), snapshots_at, [t_end]])
    )
    stops = stops[(stops > t_start) & (stops <= t_end)]

    y = system.initial_state()
    t = t_start
    times, dts, fields = [t], [], [y.copy()]
    snapshots: dict[str, list[float]] = {}
    dt = min(max(o.dt_init, o.dt_min), o.dt_max)
    err_prev = 1.0
    rejected = clamps = regressions = steps = 0
    stop_index = 0

    while t < t_end:
        if steps >= o.max_steps:
            raise SimulationError(f"Exceeded {o.max_steps} steps at t = {t:.6g} s")
        steps += 1
        while stops[stop_index] <= t:
            stop_index += 1
        target = stops[stop_index]
        trial = min(dt, target - t)
        hits_stop = trial >= target - t
        try:
            y_new, err = step_dirk(y, t, trial, system, o)
        except ConvergenceError as exc:
            logger.debug("Step at t = %.6g s rejected: %s", t, exc)
            y_new, err = None, np.inf
        if y_new is None or not err <= 1.0:
            rejected += 1
            shrink = o.safety * err**-0.5 if np.isfinite(err) else 0.0
            dt = trial * max(o.growth_min, shrink)
            if dt < o.dt_min:
                raise SimulationError(
                    f"Step size fell below dt_min at t = {t:.6g} s (error {err:.3g})"
                )
            continue

        n = system.n
        c_new, n_clamp, n_regress = _enforce_cure(y_new[n:], y[n:], system.epoxy)
        clamps += n_clamp
        regressions += n_regress
        y = np.concatenate([y_new[:n], c_new])
        t = float(target) if hits_stop else t + trial
        times.append(t)
        dts.append(trial)
        fields.append(y.copy())
        proposal = _propose(trial, err, err_prev, o)
        # обрезка шага у точки излома не должна сбрасывать предложенный шаг
        dt = max(proposal, dt) if hits_stop and trial < dt else proposal
        dt = min(dt, o.dt_max)
        err_prev = max(err, ERR_FLOOR)
        for s in snapshots_at:
            if s == t:
                snapshots[f"{s:g}"] = (y[:n] - KELVIN).tolist()

    if clamps or regressions:
        logger.info(
            "Cure corrections: %d clamps to [0, 1], %d monotonicity fixes",
            clamps,
            regressions,
        )
    states = np.array(fields)
    n = system.n
    return SimResult(
        times=np.array(times),
        dt=np.array(dts),
        theta=states[:, :n] - KELVIN,
        c=states[:, n:],
        probes=default_probes(system),
        rejected=rejected,
        clamp_events=clamps,
        monotonicity_events=regressions,
        snapshots=snapshots,
    )


def default_domain(config: ScenarioConfig) -> SimDomain:
    """
    Алюминиевое основание (путь Дирихле снизу) под слоем смолы
    (смешанное условие сверху, окружающая температура = путь печи).

    Исключения:
    - ConfigurationError, если не задана удельная теплота реакции h_c.
    """
    if config.h_c is None:
        raise ConfigurationError(
            "Scenario needs the reaction enthalpy h_c [J/kg]"
        )
    path = config.path or default_curing_path()
    parameters = config.parameters or presets.reference_material()
    epoxy = EpoxyMaterial(parameters=parameters, rho_ref=config.rho_ref, h_c=config.h_c)
    return SimDomain(
        layers=[
            Layer(
                material=config.base,
                thickness=config.base_thickness,
                cells=config.base_cells,
            ),
            Layer(
                material=epoxy,
                thickness=config.epoxy_thickness,
                cells=config.epoxy_cells,
            ),
        ],
        bc_low=path,
        bc_high=Mixed(h=config.h, eps=config.eps, ambient=path),
        initial_theta=float(path.at(path.times[0])),
        initial_c=0.0,
    )


def run_default_scenario(
    config: ScenarioConfig | None = None, **overrides
) -> SimResult:
    """Полный путь отверждения для сценария по умолчанию с заменой отдельных полей."""
    config = (config or ScenarioConfig()).model_copy(update=overrides)
    domain = default_domain(config)
    path = domain.bc_low
    return integrate_adaptive(
        domain,
        config.options,
        t_end=float(path.times[-1]),
        snapshot_times=config.snapshot_times,
        t_start=float(path.times[0]),
    )
