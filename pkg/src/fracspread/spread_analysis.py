"""Front tracking and spread classification.

A trajectory is reduced to the positions ``m(t)`` where it first crosses a
level.  Over the trailing part of the track, ``m`` is fitted linearly in
``t`` and ``log|m|`` is fitted linearly in ``t``.  The fit whose normalized
residual is smaller by the ratio threshold wins.  The two theorem
experiments run the solver from a resolved step profile and compare the
result with the dichotomy between KPP (accelerating) and bistable
(constant-speed) spreading.
"""

from __future__ import annotations

import csv
import math
import time as _time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .evolution import (
    BoundaryProximityError,
    EvolutionConfig,
    Field,
    Grid,
    evolve,
    leftmost_crossing,
)
from .stable_law import DomainError, StableParams
from .wave_family import (
    HypothesisError,
    ReactionSpec,
    TauCertificate,
    check_hypotheses,
    reaction_pair,
    tau_search,
)

__all__ = [
    "ExperimentConfig",
    "FrontTrack",
    "SpreadFit",
    "Theorem31Report",
    "Theorem32Report",
    "TrackingError",
    "Trajectory",
    "fit_spread",
    "run_trajectory",
    "theorem31_experiment",
    "theorem32_experiment",
    "track_level",
    "upper_surrogate",
    "write_track_csv",
]

TRACK_SCHEMA = "fracspread.fronttrack/1"
FIT_SCHEMA = "fracspread.spreadfit/1"
THEOREM31_SCHEMA = "fracspread.theorem31/1"
THEOREM32_SCHEMA = "fracspread.theorem32/1"

PASS_INF = 0.95
PASS_SUP = 0.05


class TrackingError(ArithmeticError):
    """A snapshot does not cross the tracked level."""

    def __init__(self, time: float, level: float):
        super().__init__(f"snapshot at t={time:.6g} does not cross level {level:g}")
        self.time = time
        self.level = level


# -- tracking -----------------------------------------------------------------


@dataclass(frozen=True)
class FrontTrack:
    level: float
    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise DomainError("level must lie in (0, 1)")
        t = np.asarray(self.times, dtype=float)
        m = np.asarray(self.positions, dtype=float)
        if t.ndim != 1 or t.shape != m.shape:
            raise DomainError("times and positions must be 1-d arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise DomainError("track times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", m)

    def __len__(self):
        return self.times.size

    def to_dict(self) -> dict:
        return {
            "schema": TRACK_SCHEMA,
            "level": self.level,
            "times": self.times.tolist(),
            "positions": self.positions.tolist(),
        }


def track_level(trajectory: Sequence[Field], level: float = 0.5) -> FrontTrack:
    """Leftmost crossing of ``level`` for each snapshot."""
    if not 0 < level < 1:
        raise DomainError("level must lie in (0, 1)")
    times, positions = [], []
    for u in trajectory:
        m = leftmost_crossing(u.grid.x, u.values, level)
        if m is None:
            raise TrackingError(u.time, level)
        times.append(u.time)
        positions.append(m)
    return FrontTrack(level, np.array(times), np.array(positions))


def write_track_csv(track: FrontTrack, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema: {TRACK_SCHEMA}; level: {track.level!r}\n")
        w = csv.writer(fh)
        w.writerow(["t", "m"])
        for t, m in zip(track.times, track.positions):
            w.writerow([repr(float(t)), repr(float(m))])
    return path


# -- classification -------------------------------------------------------------


@dataclass(frozen=True)
class SpreadFit:
    """Outcome of :func:`fit_spread`.

    ``rate`` is the leftward speed ``-dm/dt`` for a linear front and the
    exponent ``d log|m| / dt`` for an exponential one.  Residuals are RMS
    residuals divided by the RMS deviation of the fitted data from its mean.
    """

    classification: str
    rate: float
    window: tuple[float, float]
    residual: float
    residual_linear: float
    residual_exponential: float
    n_points: int
    ratio_threshold: float
    min_points: int
    note: str = ""

    def to_dict(self) -> dict:
        out = asdict(self)
        out["window"] = list(self.window)
        out["schema"] = FIT_SCHEMA
        return out


def _normalized_fit(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    slope, icpt = np.polyfit(t, y, 1)
    spread = math.sqrt(np.mean((y - y.mean()) ** 2))
    res = math.sqrt(np.mean((y - (slope * t + icpt)) ** 2))
    # constant data is fitted exactly
    return float(slope), (0.0 if spread == 0 else res / spread)


def fit_spread(
    track: FrontTrack,
    window: float = 0.5,
    min_points: int = 20,
    ratio: float = 4.0,
) -> SpreadFit:
    """Classify the trailing ``window`` fraction of ``track`` as linear or exponential.

    The exponential model is only fitted when ``m`` keeps one sign in the
    window; a sign change, or fewer than ``min_points`` points, gives an
    indeterminate result.  A model wins when its normalized residual is at
    least ``ratio`` times smaller than the other one.
    """
    if not 0 < window <= 1:
        raise DomainError("window must lie in (0, 1]")
    n = len(track)
    k = n - max(1, int(round(window * n)))
    t, m = track.times[k:], track.positions[k:]
    span = (float(t[0]), float(t[-1])) if t.size else (math.nan, math.nan)

    def indeterminate(note, res_lin=math.nan, res_exp=math.nan):
        return SpreadFit("indeterminate", math.nan, span, math.nan, res_lin, res_exp, t.size, ratio, min_points, note)

    if t.size < min_points:
        return indeterminate(f"{t.size} points in the fit window, need {min_points}")
    slope, res_lin = _normalized_fit(t, m)
    if not (np.all(m < 0) or np.all(m > 0)):
        return indeterminate("front position changes sign in the fit window", res_lin)
    growth, res_exp = _normalized_fit(t, np.log(np.abs(m)))
    if res_lin * ratio <= res_exp:
        return SpreadFit("linear", -slope, span, res_lin, res_lin, res_exp, t.size, ratio, min_points)
    if res_exp * ratio <= res_lin:
        return SpreadFit("exponential", growth, span, res_exp, res_lin, res_exp, t.size, ratio, min_points)
    return indeterminate("residual ratio below the threshold", res_lin, res_exp)


# -- experiments --------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid, time stepping and initial data of a spreading run.

    The initial datum is the step profile ``F((x - shift) tau**(-1/alpha))``;
    ``initial_tau = 0`` gives the Heaviside step itself.
    """

    half_width: float = 200.0
    n_points: int = 4096
    dt: float = 0.01
    T: float = 10.0
    snapshots: int = 100
    initial_shift: float = 0.0
    initial_tau: float = 1.0
    level: float = 0.5
    boundary_margin: float = 0.1

    def __post_init__(self):
        if self.snapshots < 1:
            raise DomainError("snapshots must be at least 1")
        if not 0 < self.level < 1:
            raise DomainError("level must lie in (0, 1)")
        self.grid()
        self.evolution_config()

    def grid(self) -> Grid:
        return Grid(self.half_width, self.n_points)

    def evolution_config(self) -> EvolutionConfig:
        return EvolutionConfig(self.dt, self.T, boundary_margin=self.boundary_margin)

    def snapshot_times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.snapshots + 1)[1:]

    def initial_field(self, params: StableParams) -> Field:
        return Field.profile(self.grid(), params, self.initial_shift, self.initial_tau)


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of one run; ``stopped`` explains an early end."""

    snapshots: list
    horizon: float
    runtime: float
    stopped: str | None = None


def run_trajectory(params: StableParams, g: ReactionSpec, config: ExperimentConfig, initial: Field | None = None) -> Trajectory:
    """Run to ``config.T``, ending early (with the snapshots so far) if the
    front approaches the end of the grid."""
    u0 = config.initial_field(params) if initial is None else initial
    start = _time.perf_counter()
    try:
        snaps = evolve(u0, g, config.evolution_config(), config.snapshot_times())
        stopped = None
    except BoundaryProximityError as err:
        snaps, stopped = err.snapshots, str(err)
    if not snaps:
        raise DomainError(f"run stopped before the first snapshot: {stopped}")
    return Trajectory(snaps, snaps[-1].time, _time.perf_counter() - start, stopped)


def _analyse(traj: Trajectory, level: float) -> tuple[FrontTrack | None, SpreadFit | None, str]:
    try:
        track = track_level(traj.snapshots, level)
    except TrackingError as err:
        return None, None, str(err)
    return track, fit_spread(track), ""


def _bounds(traj: Trajectory) -> tuple[float, float]:
    return (
        float(min(u.values.min() for u in traj.snapshots)),
        float(max(u.values.max() for u in traj.snapshots)),
    )


@dataclass(frozen=True)
class Theorem31Report:
    params: StableParams
    reaction: dict
    config: ExperimentConfig
    speeds: list
    infima: list
    inside_grid: list
    horizon: float
    stopped: str | None
    min_value: float
    max_value: float
    track: FrontTrack | None
    fit: SpreadFit | None
    runtime: float
    note: str = ""
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return all(v > PASS_INF for v in self.infima)

    def to_dict(self) -> dict:
        return {
            "schema": THEOREM31_SCHEMA,
            "params": {"alpha": self.params.alpha, "beta": self.params.beta},
            "reaction": self.reaction,
            "config": asdict(self.config),
            "speeds": list(self.speeds),
            "infima": list(self.infima),
            "inside_grid": list(self.inside_grid),
            "threshold": PASS_INF,
            "passed": self.passed,
            "horizon": self.horizon,
            "stopped": self.stopped,
            "min_value": self.min_value,
            "max_value": self.max_value,
            "track": None if self.track is None else self.track.to_dict(),
            "fit": None if self.fit is None else self.fit.to_dict(),
            "runtime": self.runtime,
            "note": self.note,
        }


def theorem31_experiment(
    params: StableParams,
    g: ReactionSpec,
    c_list: Sequence[float],
    config: ExperimentConfig,
) -> Theorem31Report:
    """Report ``inf_{x >= -ct} u`` at the last snapshot for each ``c``.

    ``g`` must satisfy the KPP-type hypotheses for ``params.alpha``.  The run
    ends early when the front nears the grid boundary; the horizon is then
    the last completed snapshot.  When ``-ct`` lies left of the grid the
    reported value is the grid minimum, an upper bound for the infimum.
    """
    check_hypotheses(params, g, "lower")
    if any(not c >= 0 for c in c_list):
        raise DomainError("speeds must be non-negative")
    traj = run_trajectory(params, g, config)
    u = traj.snapshots[-1]
    x = u.grid.x
    infima, inside = [], []
    for c in c_list:
        sel = x >= -c * u.time
        inside.append(bool(-c * u.time >= x[0]))
        infima.append(float(u.values[sel].min()))
    track, fit, note = _analyse(traj, config.level)
    lo, hi = _bounds(traj)
    return Theorem31Report(
        params, g.describe(), config, [float(c) for c in c_list], infima, inside,
        traj.horizon, traj.stopped, lo, hi, track, fit, traj.runtime, note, traj,
    )


def upper_surrogate(g: ReactionSpec) -> ReactionSpec:
    """A reaction that vanishes near 1 and bounds the dynamics of ``u / 2``.

    If ``g`` already vanishes near 1 it is returned unchanged.  Otherwise
    ``w = u / 2`` solves the equation with reaction ``g(2w) / 2`` and stays
    in ``[0, 1/2]``, so that reaction may be set to zero on ``[1/2, 1]``.
    """
    try:
        check_hypotheses(None, g, "upper")
        return g
    except HypothesisError:
        pass

    def half(z):
        z = np.asarray(z, dtype=float)
        return np.where(z <= 0.5, 0.5 * g.func(np.clip(2.0 * z, 0.0, 1.0)), 0.0)

    return ReactionSpec(f"half-{g.name}", half, g.tag, g.coeffs, g.dg0, 0.0)


@dataclass(frozen=True)
class Theorem32Report:
    params: StableParams
    reaction: dict
    config: ExperimentConfig
    certificate: TauCertificate
    surrogate: dict
    speed: float
    supremum: float
    inside_grid: bool
    horizon: float
    stopped: str | None
    min_value: float
    max_value: float
    track: FrontTrack | None
    fit: SpreadFit | None
    runtime: float
    note: str = ""
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return self.supremum < PASS_SUP

    def to_dict(self) -> dict:
        return {
            "schema": THEOREM32_SCHEMA,
            "params": {"alpha": self.params.alpha, "beta": self.params.beta},
            "reaction": self.reaction,
            "config": asdict(self.config),
            "certificate": asdict(self.certificate),
            "surrogate": self.surrogate,
            "speed": self.speed,
            "supremum": self.supremum,
            "inside_grid": self.inside_grid,
            "threshold": PASS_SUP,
            "passed": self.passed,
            "horizon": self.horizon,
            "stopped": self.stopped,
            "min_value": self.min_value,
            "max_value": self.max_value,
            "track": None if self.track is None else self.track.to_dict(),
            "fit": None if self.fit is None else self.fit.to_dict(),
            "runtime": self.runtime,
            "note": self.note,
        }


def theorem32_experiment(
    params: StableParams,
    g: ReactionSpec,
    config: ExperimentConfig,
    c_start: float = 0.25,
) -> Theorem32Report:
    """Certify a speed ``c`` with an upper-mode search and report
    ``sup_{x <= -ct} u`` at the last snapshot.

    When ``-ct`` lies left of the grid the value at the left end is reported;
    it bounds the supremum because the left tail increases towards the grid.
    """
    if not g.dg0 < 0:
        raise HypothesisError(f"bistable experiment needs g'(0) < 0, got {g.dg0:.4g}")
    sur = upper_surrogate(g)
    cert = tau_search(reaction_pair(params), sur, c_start, mode="upper")
    traj = run_trajectory(params, g, config)
    u = traj.snapshots[-1]
    x = u.grid.x
    edge = -cert.c * u.time
    inside = bool(edge >= x[0])
    sup = float(u.values[x <= edge].max()) if inside else float(u.values[0])
    track, fit, note = _analyse(traj, config.level)
    speed = fit.rate if fit is not None and fit.classification == "linear" else math.nan
    lo, hi = _bounds(traj)
    return Theorem32Report(
        params, g.describe(), config, cert, sur.describe(), speed, sup, inside,
        traj.horizon, traj.stopped, lo, hi, track, fit, traj.runtime, note, traj,
    )
