"""This module contains the main process of the runner: one task runs one command on one resolved experiment."""

from __future__ import annotations

import logging
import math
import platform
import time
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np
from pebble import ThreadPool, concurrent

from catpump import __version__, artifacts, config
from catpump.adiabatic import (AdiabaticProjector, build_projector, cat_split_report, fidelity, halfspace_split,
                               predicted_weight, project, symmetric_width, weight_metric_approx,
                               zero_frequency_spectrum)
from catpump.connection import RunConnection, Task
from catpump.exceptions import OutOfRange, ZeroState
from catpump.experiment import ExperimentConfig, load_experiment
from catpump.propagation import (OBSERVABLE_COLUMNS, Propagator, build_propagator, energy_expectation, evolve,
                                 number_distribution, observable_series, observables)
from catpump.qubit_geometry import MINUS, PLUS, GeometryMap, Phase2, chern_number, geometry_map, metric_at
from catpump.rotor_lattice import NumberLattice, SparseHermitian, assemble_total, build_lattice
from catpump.semiclassics import (MOMENT_COLUMNS, SPREADING_COLUMNS, TRAJECTORY_COLUMNS, adiabatic_timescale,
                                  classical_trajectory, geometric_pumping, phase_averaged_moments,
                                  polarization_prediction, pumping_rate, purity_prediction, quasi_periods,
                                  spreading_prediction)
from catpump.states import SNAPSHOT_COLUMNS, TotalState, phase_amplitude, separable_state

logger = logging.getLogger(__name__)

BAND_NAMES = {MINUS: "minus", PLUS: "plus"}

GEOMETRY_COLUMNS = ["phi1", "phi2", "E_minus", "E_plus", "F_minus", "g11", "g12", "g22"]
DISTRIBUTION_COLUMNS = ["n1", "n2", "probability"]
FIDELITY_COLUMNS = ["t_over_T1", "fidelity_order0", "fidelity_order1", "W_minus_order0", "W_minus_order1",
                    "W_below"]
PURITY_COLUMNS = ["t_over_T1", "purity_minus", "purity_plus", "purity_minus_metric", "purity_minus_mixture",
                  "purity_plus_mixture"]
DPHI_SWEEP_COLUMNS = ["dphi_over_pi", "W_minus_dynamic", "W_minus_projected", "W_minus_predicted",
                      "W_minus_metric_approx"]
THETA_SWEEP_COLUMNS = ["theta_q", "dphi_over_pi", "W_minus_dynamic", "W_minus_projected", "W_minus_predicted"]
POLARIZATION_COLUMNS = ["t_over_T1", "Qx", "Qy", "Qz", "purity"]

_POOLS: list[ThreadPool] = []


def process(connection: RunConnection, task: Task) -> None:
    """Do the primary process of the runner for one task."""
    connection.log_trace("Running process.")
    experiment = load_experiment(connection.config_path, task.preset, connection.full_scale)
    directory = connection.task_dir(task)
    directory.mkdir(parents=True, exist_ok=True)
    connection.log_info(f"Task {task.reference}: config {experiment.digest()[:12]}")

    start = time.perf_counter()
    future = run_task(task.command, experiment, directory, connection.threads)
    try:
        files = future.result()
    except TimeoutError as error:
        connection.log_error(f"{task.command} exceeded the timeout of {config.TASK_TIMEOUT} seconds.")
        raise RuntimeError(f"{task.command} did not complete within the allowed time.") from error

    write_manifest(directory, experiment, task, files, time.perf_counter() - start)
    connection.log_info(f"[Ok] {task.reference} wrote {len(files)} files to {directory}")


@concurrent.process(timeout=config.TASK_TIMEOUT)
def run_task(command: str, experiment: ExperimentConfig, directory: Path, threads: int = 1) -> list[Path]:
    """Run one command in a child process and return the files it wrote."""
    try:
        return COMMAND_RUNNERS[command](experiment, Path(directory), threads)
    finally:
        shutdown_pools()


def sweep_pool(threads: int) -> ThreadPool:
    """A thread pool for independent sweep points, released by `shutdown_pools`."""
    pool = ThreadPool(max_workers=threads)
    _POOLS.append(pool)
    return pool


def shutdown_pools() -> None:
    while _POOLS:
        pool = _POOLS.pop()
        pool.close()
        pool.join()


def write_manifest(directory: Path, experiment: ExperimentConfig, task: Task, files: list[Path],
                   wall_time: float) -> Path:
    """Record what ran: command, config and its hash, package versions, wall time and the written files."""
    versions = {"python": platform.python_version()}
    versions["catpump"] = __version__
    for package in ("numpy", "scipy", "Pebble"):
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return artifacts.write_json(directory / "manifest.json", {
        "command": task.command,
        "preset": task.preset,
        "config_hash": experiment.digest(),
        "config": experiment.values,
        "seed": experiment.seed,
        "versions": versions,
        "wall_time_s": round(wall_time, 3),
        "files": sorted(Path(f).relative_to(directory).as_posix() for f in files),
    })


@dataclass
class Setup:
    """Lattice, Hamiltonian and propagator shared by every state of one experiment."""
    experiment: ExperimentConfig
    lattice: NumberLattice
    operator: SparseHermitian
    propagator: Propagator

    def initial_state(self, dn: float | None = None, theta: float | None = None) -> TotalState:
        mode1, mode2 = self.experiment.modes(dn)
        return separable_state(mode1, mode2, self.experiment.qubit(theta), self.lattice)

    def evolve(self, state: TotalState, times) -> list[TotalState]:
        return evolve(self.propagator, state, times, self.experiment.propagation["abort_on_boundary"])


def prepare(experiment: ExperimentConfig) -> Setup:
    lattice = build_lattice(experiment.truncation())
    operator = assemble_total(lattice, experiment.model(), experiment.omega)
    propagator = build_propagator(operator, experiment.propagation["method"], experiment.period,
                                  krylov_dim=experiment.propagation["krylov_dim"], seed=experiment.seed)
    return Setup(experiment, lattice, operator, propagator)


def _phase_geometry(experiment: ExperimentConfig) -> GeometryMap:
    """Geometry of the configured order on the phase grid, the grid band amplitudes live on."""
    m = experiment.analysis["phase_grid"]
    return geometry_map(experiment.model(), experiment.omega, experiment.analysis["projector_order"], m, m)


def _bare_geometry(experiment: ExperimentConfig) -> GeometryMap:
    m = experiment.analysis["geometry_grid"]
    return geometry_map(experiment.model(), experiment.omega, 0, m, m)


def _finite(value: float) -> float | None:
    return value if math.isfinite(value) else None


def run_geometry(experiment: ExperimentConfig, directory: Path, threads: int = 1) -> list[Path]:
    """Geometry map of the configured order, Chern numbers and the adiabatic timescale."""
    m = experiment.analysis["geometry_grid"]
    order = experiment.analysis["projector_order"]
    geometry = geometry_map(experiment.model(), experiment.omega, order, m, m)
    bare = geometry if order == 0 else _bare_geometry(experiment)
    epsilon, tau = adiabatic_timescale(bare, experiment.omega)
    logger.info("Chern numbers %d / %d", chern_number(bare, MINUS), chern_number(bare, PLUS))
    return [
        artifacts.write_table(directory / "geometry.csv", GEOMETRY_COLUMNS, geometry.rows()),
        artifacts.write_json(directory / "chern.json",
                             {"C_minus": chern_number(bare, MINUS), "C_plus": chern_number(bare, PLUS)}),
        artifacts.write_json(directory / "adiabatic_timescale.json",
                             {"epsilon_adiab": epsilon, "tau_adiab_over_T1": _finite(tau)}),
    ]


def run_evolution(experiment: ExperimentConfig, directory: Path, threads: int = 1) -> list[Path]:
    """Observable time series and snapshot dumps of the exact evolution."""
    setup = prepare(experiment)
    state = setup.initial_state()
    states = setup.evolve(state, experiment.series_times())
    series = observable_series(states, experiment.omega)
    drift = energy_expectation(setup.operator, states[-1]) - energy_expectation(setup.operator, state)
    logger.info("Energy drift over the run: %.3e", drift)
    files = [artifacts.write_table(directory / "observables.csv", OBSERVABLE_COLUMNS, series.rows())]

    if experiment.values["output"]["snapshots"]:
        for index, snapshot in enumerate(setup.evolve(state, experiment.snapshot_times())):
            header = f"# t_over_T1={artifacts.format_number(snapshot.meta['t_over_T1'])}"
            files.append(artifacts.write_table(directory / f"snapshot_{index:02d}.csv", SNAPSHOT_COLUMNS,
                                               snapshot.snapshot_rows(), header=header))
            files.append(artifacts.write_table(directory / f"distribution_{index:02d}.csv", DISTRIBUTION_COLUMNS,
                                               number_distribution(snapshot).rows(), header=header))
    return files


def _weight_point(setup: Setup, projector: AdiabaticProjector, geometry: GeometryMap, split_time: float,
                  dphi_over_pi: float, theta: float | None = None) -> tuple[float, float, float]:
    """(W_<, W₋, predicted W₋) for one phase width and qubit angle.

    W_< is the weight below the initial n_perp at `split_time` (in T₁).
    """
    experiment = setup.experiment
    state = setup.initial_state(dn=1 / (2 * math.pi * dphi_over_pi), theta=theta)
    reference = observables(state, experiment.omega).nperp_mean
    evolved = evolve(setup.propagator, state, [split_time], abort=False)[0]
    _, _, dynamic = halfspace_split(evolved, experiment.omega, reference)
    _, projected = project(state, projector)
    density = phase_amplitude(state, geometry.shape[0]).density()
    predicted = predicted_weight(density, geometry, experiment.qubit(theta).bloch, MINUS)
    return dynamic, projected, predicted


def _weight_sweeps(setup: Setup, projector: AdiabaticProjector, geometry: GeometryMap, split_time: float,
                   directory: Path, threads: int) -> list[Path]:
    experiment = setup.experiment
    analysis = experiment.analysis
    files = []
    pool = sweep_pool(threads)

    widths = analysis["dphi_sweep_over_pi"]
    if widths:
        points = pool.map(lambda w: _weight_point(setup, projector, geometry, split_time, w), widths).result()
        metric = metric_at(experiment.model(), experiment.phase0, experiment.omega, analysis["projector_order"])
        rows = []
        for width, (dynamic, projected, predicted) in zip(widths, points):
            dphi = math.pi * width
            approx = weight_metric_approx(dphi, dphi, metric) if dphi <= config.SMALL_WIDTH_LIMIT else math.nan
            rows.append([width, dynamic, projected, predicted, approx])
        files.append(artifacts.write_table(directory / "weight_sweep_dphi.csv", DPHI_SWEEP_COLUMNS, rows))

    grid = [(theta, width) for width in analysis["theta_sweep_dphi_over_pi"] for theta in analysis["theta_sweep"]]
    if grid:
        points = pool.map(lambda p: _weight_point(setup, projector, geometry, split_time, p[1], p[0]),
                          grid).result()
        rows = [[theta, width, *point] for (theta, width), point in zip(grid, points)]
        files.append(artifacts.write_table(directory / "weight_sweep_theta.csv", THETA_SWEEP_COLUMNS, rows))
    return files


def run_cat_analysis(experiment: ExperimentConfig, directory: Path, threads: int = 1) -> list[Path]:
    """Split of the initial state into the two adiabatic components, with fidelity, purity and weight sweeps."""
    analysis = experiment.analysis
    order = analysis["projector_order"]
    omega = experiment.omega
    setup = prepare(experiment)
    spectrum = zero_frequency_spectrum(setup.lattice, experiment.model())
    projectors = {(band, o): build_projector(spectrum, omega, band, o) for band in (MINUS, PLUS) for o in (0, 1)}
    chern_minus = chern_number(_bare_geometry(experiment), MINUS)
    geometry = _phase_geometry(experiment)

    state = setup.initial_state()
    times = experiment.series_times()
    states = setup.evolve(state, times)
    report = cat_split_report(states, times, projectors[(MINUS, order)], projectors[(PLUS, order)], chern_minus,
                              experiment.period, tuple(analysis["fit_window"]))
    summary = report.as_dict()
    summary.update(
        projector_order=order,
        chern_minus=chern_minus,
        total_slope_theory=pumping_rate(report.minus.weight, report.plus.weight, chern_minus, omega)
        * experiment.period,
    )
    try:
        summary["symmetric_dphi_over_pi"] = symmetric_width(geometry, experiment.phase0.as_array()) / math.pi
    except OutOfRange as error:
        logger.info("No symmetric width: %s", error)
        summary["symmetric_dphi_over_pi"] = None
    files = [artifacts.write_json(directory / "cat_split.json", summary)]

    reference = observables(state, omega).nperp_mean
    fidelity_rows, minus_parts, plus_parts = [], [], []
    for t, evolved in zip(times, states):
        below, _, w_below = halfspace_split(evolved, omega, reference)
        first, w_first = project(evolved, projectors[(MINUS, 0)])
        second, w_second = project(evolved, projectors[(MINUS, 1)])
        fidelity_rows.append([t, fidelity(below, first), fidelity(below, second), w_first, w_second, w_below])
        minus_parts.append(second if order == 1 else first)
        plus_parts.append(project(evolved, projectors[(PLUS, order)])[0])
    files.append(artifacts.write_table(directory / "fidelity.csv", FIDELITY_COLUMNS, fidelity_rows))
    files.extend(_purity_series(experiment, geometry, state, times, minus_parts, plus_parts, directory))
    split_time = report.t_sep if report.t_sep_detected else analysis["split_time"]
    files.extend(_weight_sweeps(setup, projectors[(MINUS, order)], geometry, split_time, directory, threads))
    return files


def _purity_series(experiment: ExperimentConfig, geometry: GeometryMap, state: TotalState, times,
                   minus_parts: list[TotalState], plus_parts: list[TotalState], directory: Path) -> list[Path]:
    """Quantum purity of both components next to the metric law and the translated-density mixture."""
    omega = experiment.omega
    m = geometry.shape[0]
    mixtures = {}
    for band in (MINUS, PLUS):
        amplitude = phase_amplitude(state, m, band, geometry)
        try:
            mixtures[band] = polarization_prediction(geometry, band, amplitude, times).purity
        except ZeroState:
            mixtures[band] = np.full(len(times), math.nan)

    dphi = experiment.phase_width
    metric, summary = np.full(len(times), math.nan), {}
    if dphi <= math.pi:
        prediction = purity_prediction(geometry, MINUS, experiment.phase0, dphi, times)
        metric = prediction.purity
        summary = {"average": prediction.average, "bound": prediction.bound,
                   "satisfies_bound": prediction.satisfies_bound}

    def purity(component: TotalState) -> float:
        return observables(component, omega).purity if component.squared_norm() > 0 else math.nan

    rows = [[t, purity(a), purity(b), g, x, y]
            for t, a, b, g, x, y in zip(times, minus_parts, plus_parts, metric, mixtures[MINUS], mixtures[PLUS])]
    files = [artifacts.write_table(directory / "purity.csv", PURITY_COLUMNS, rows)]
    if summary:
        files.append(artifacts.write_json(directory / "purity_bound.json", summary))
    return files


def run_semiclassics(experiment: ExperimentConfig, directory: Path, threads: int = 1) -> list[Path]:
    """Trajectories and phase-averaged predictions of the hybrid classical-quantum picture."""
    analysis = experiment.analysis
    omega = experiment.omega
    geometry = _phase_geometry(experiment)
    lattice = build_lattice(experiment.truncation())
    mode1, mode2 = experiment.modes()
    state = separable_state(mode1, mode2, experiment.qubit(), lattice)
    times = experiment.series_times()
    step = experiment.propagation["time_step"]
    count = int(math.floor(analysis["trajectory_t_max"] / step + 1e-9))
    trajectory_times = np.round(np.arange(count + 1) * step, 12)

    files = []
    for index, phase in enumerate(analysis["trajectory_phases"]):
        for band, name in BAND_NAMES.items():
            trajectory = classical_trajectory(geometry, band, Phase2(*phase), trajectory_times)
            files.append(artifacts.write_table(directory / f"trajectory_{name}_{index:02d}.csv",
                                               TRAJECTORY_COLUMNS, trajectory.rows()))

    weights = {}
    for band, name in BAND_NAMES.items():
        amplitude = phase_amplitude(state, geometry.shape[0], band, geometry)
        weights[name] = amplitude.total_weight()
        if weights[name] == 0:
            logger.info("Band %s is empty, skipping its predictions", name)
            continue
        moments = phase_averaged_moments(geometry, band, amplitude.density(), times)
        spreading = spreading_prediction(geometry, band, amplitude, times)
        polarization = polarization_prediction(geometry, band, amplitude, times)
        files.append(artifacts.write_table(directory / f"moments_{name}.csv", MOMENT_COLUMNS, moments.rows()))
        files.append(artifacts.write_table(directory / f"spreading_{name}.csv", SPREADING_COLUMNS,
                                           spreading.rows()))
        files.append(artifacts.write_table(
            directory / f"polarization_{name}.csv", POLARIZATION_COLUMNS,
            [[t, *q, p] for t, q, p in zip(times, polarization.polarization, polarization.purity)]))

    dphi = experiment.phase_width
    if dphi <= math.pi:
        purity = purity_prediction(geometry, MINUS, experiment.phase0, dphi, times)
        files.append(artifacts.write_table(directory / "purity_prediction.csv", ["t_over_T1", "purity"],
                                           zip(purity.times, purity.purity)))

    p1, p2 = analysis["commensurate"]
    pumping = geometric_pumping(geometry, MINUS, experiment.phase0, p1, p2)
    bare = _bare_geometry(experiment)
    chern_minus = chern_number(bare, MINUS)
    epsilon, tau = adiabatic_timescale(bare, omega)
    files.append(artifacts.write_json(directory / "semiclassics.json", {
        "W_minus": weights["minus"],
        "W_plus": weights["plus"],
        "chern_minus": chern_minus,
        "pumping_rate_per_T1": pumping_rate(weights["minus"], weights["plus"], chern_minus, omega)
        * experiment.period,
        "geometric_pumping": {"p1": p1, "p2": p2, "average": pumping.average, "theory": pumping.theory,
                              "spread": float(np.ptp(pumping.pumped))},
        "epsilon_adiab": epsilon,
        "tau_adiab_over_T1": _finite(tau),
    }))
    return files


def run_quasiperiods(experiment: ExperimentConfig, directory: Path, threads: int = 1) -> list[Path]:
    """Continued-fraction quasi-periods of the frequency ratio."""
    omega1, omega2 = experiment.omega
    periods = quasi_periods(omega1, omega2, experiment.analysis["quasi_max_p1"])
    return [artifacts.write_json(directory / "quasi_periods.json",
                                 {"ratio": periods.ratio, "quasi_periods": periods.as_list()})]


COMMAND_RUNNERS = {
    "geometry": run_geometry,
    "evolve": run_evolution,
    "cat": run_cat_analysis,
    "semiclassics": run_semiclassics,
    "quasiperiods": run_quasiperiods,
}
