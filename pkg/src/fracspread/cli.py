"""Command-line entry point: ``fracspread {dist,wave,simulate,spread,verify}``.

Every command reads an optional JSON run configuration (``--config``),
merges it over the defaults below, validates it before computing anything
and writes CSV/JSON files into ``--out``.  Each file carries a schema tag
and the full merged configuration.

Exit codes: 0 success, 2 configuration or domain error, 3 numerical
accuracy failure (including failed checks), 4 instability.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _suites
from . import evolution as ev
from . import spread_analysis as sa
from . import stable_law as sl
from . import wave_family as wf

SCHEMA_VERSION = 1
CONFIG_SCHEMA = "fracspread.runconfig/1"
DIST_SCHEMA = "fracspread.dist/1"
WAVE_SCHEMA = "fracspread.wave/1"
SNAPSHOT_SCHEMA = "fracspread.snapshot/1"
MANIFEST_SCHEMA = "fracspread.manifest/1"
VERIFY_SCHEMA = "fracspread.verify/1"

EXIT_OK, EXIT_CONFIG, EXIT_ACCURACY, EXIT_INSTABILITY = 0, 2, 3, 4

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "params": {"alpha": 1.5, "beta": 0.0},
    "grid": {"half_width": 200.0, "n_points": 4096},
    "evolution": {
        "dt": 0.01,
        "T": 10.0,
        "snapshots": 10,
        "splitting": 2,
        "reaction_substeps": 1,
        "boundary_margin": 0.1,
    },
    "reaction": {"name": "kpp-logistic", "coeffs": {}},
    "initial": {"kind": "profile", "shift": 0.0, "tau": 1.0},
    "experiment": {"name": "theorem31", "speeds": [1.0, 5.0], "level": 0.5, "c_start": 0.25},
    "wave": {"c": 1.0, "tau": 1.0, "n": 1001},
    "dist": {"x_min": -20.0, "x_max": 20.0, "n": 2001},
    "seed": 0,
}


class ConfigError(ValueError):
    """The run configuration is malformed."""


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown configuration key {key!r}")
        if isinstance(base[key], dict) and key != "reaction":
            if not isinstance(value, dict):
                raise ConfigError(f"configuration section {key!r} must be an object")
            unknown = set(value) - set(base[key])
            if unknown:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(unknown)}")
            out[key].update(value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class RunConfig:
    """Merged configuration plus the validated objects built from it."""

    raw: dict
    params: sl.StableParams
    grid: ev.Grid
    evolution: ev.EvolutionConfig
    snapshot_times: np.ndarray

    @classmethod
    def from_dict(cls, data: dict, smoke: bool = False) -> "RunConfig":
        if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {data.get('schema_version')!r}, expected {SCHEMA_VERSION}")
        raw = _merge(DEFAULTS, data)
        if smoke:
            raw["grid"]["n_points"] = max(256, raw["grid"]["n_points"] // 4)
        try:
            p = raw["params"]
            params = sl.make_params(p["alpha"], p["beta"])
            g = raw["grid"]
            grid = ev.Grid(float(g["half_width"]), int(g["n_points"]))
            e = raw["evolution"]
            evo = ev.EvolutionConfig(
                float(e["dt"]), float(e["T"]), int(e["splitting"]), int(e["reaction_substeps"]), float(e["boundary_margin"])
            )
            n_snap = int(e["snapshots"])
        except (TypeError, KeyError) as err:
            raise ConfigError(f"malformed configuration: {err}") from err
        if n_snap < 1:
            raise ConfigError("evolution.snapshots must be at least 1")
        if raw["initial"]["kind"] not in ("profile", "wave", "zero"):
            raise ConfigError(f"initial.kind must be profile, wave or zero, got {raw['initial']['kind']!r}")
        if not 0 < float(raw["experiment"]["level"]) < 1:
            raise ConfigError("experiment.level must lie in (0, 1)")
        times = np.linspace(0.0, evo.T, n_snap + 1)[1:]
        return cls(raw, params, grid, evo, times)

    @classmethod
    def load(cls, path: str | None, smoke: bool = False, seed: int | None = None) -> "RunConfig":
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as err:
                raise ConfigError(f"cannot read configuration {path}: {err}") from err
            if not isinstance(data, dict):
                raise ConfigError("the configuration must be a JSON object")
        if seed is not None:
            data = {**data, "seed": int(seed)}
        cfg = cls.from_dict(data, smoke)
        cfg.raw["smoke"] = bool(smoke)
        return cfg

    def reaction(self, pair: wf.ReactionPair | None = None) -> wf.ReactionSpec:
        r = self.raw["reaction"]
        name = r.get("name")
        coeffs = dict(r.get("coeffs", {}))
        if name == "combination":
            coeffs = {"c": r.get("c", coeffs.get("c")), "tau": r.get("tau", coeffs.get("tau"))}
            if None in coeffs.values():
                raise ConfigError("the combination reaction needs c and tau")
            pair = pair or wf.reaction_pair(self.params)
        try:
            return wf.builtin_reaction(name, coeffs, pair)
        except TypeError as err:
            raise ConfigError(f"bad coefficients for reaction {name!r}: {err}") from err

    def initial_field(self, g: wf.ReactionSpec) -> ev.Field:
        init = self.raw["initial"]
        if init["kind"] == "zero":
            return ev.Field(self.grid, self.params, np.zeros(self.grid.n_points))
        if init["kind"] == "wave":
            tau = dict(g.coeffs).get("tau")
            if g.name != "combination":
                raise ConfigError("initial.kind 'wave' needs the combination reaction")
            return ev.Field.profile(self.grid, self.params, 0.0, float(tau))
        return ev.Field.profile(self.grid, self.params, float(init["shift"]), float(init["tau"]))

    def experiment_config(self) -> sa.ExperimentConfig:
        e, init = self.raw["evolution"], self.raw["initial"]
        if init["kind"] != "profile":
            raise ConfigError("spread experiments start from a step profile (initial.kind 'profile')")
        return sa.ExperimentConfig(
            self.grid.half_width,
            self.grid.n_points,
            self.evolution.dt,
            self.evolution.T,
            int(e["snapshots"]),
            float(init["shift"]),
            float(init["tau"]),
            float(self.raw["experiment"]["level"]),
            self.evolution.boundary_margin,
        )


# -- output helpers -----------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, schema: str, cfg: RunConfig, payload: dict) -> Path:
    body = {"schema": schema, "config_schema": CONFIG_SCHEMA, "config": cfg.raw, **payload}
    path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
    return path


def _header(schema: str, cfg: RunConfig) -> list[str]:
    return [f"schema: {schema}", f"config: {json.dumps(_jsonable(cfg.raw), sort_keys=True)}"]


def _write_csv(path: Path, schema: str, cfg: RunConfig, columns, rows) -> Path:
    with path.open("w", newline="") as fh:
        for line in _header(schema, cfg):
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    return path


def _say(msg: str):
    print(msg, flush=True)


# -- commands -------------------------------------------------------------------


def cmd_dist(cfg: RunConfig, out: Path) -> int:
    p = cfg.params
    d = cfg.raw["dist"]
    table = sl.default_table(p)
    x = np.linspace(float(d["x_min"]), float(d["x_max"]), int(d["n"]))
    _write_csv(out / "dist_table.csv", DIST_SCHEMA, cfg, ["x", "f", "F"], zip(x, table.density(x), table.cdf(x)))
    checks = {}
    f0 = float(table.cdf(0.0))
    checks["cdf_at_zero"] = {"value": f0, "exact": p.cdf_at_zero(), "error": abs(f0 - p.cdf_at_zero()), "tolerance": 1e-9}
    probe = np.linspace(-10.0, 10.0, 41)
    pdf, _, _, cdf, _ = sl.inversion(p, probe)
    err = max(np.max(np.abs(table.density(probe) - pdf)), np.max(np.abs(table.cdf(probe) - cdf)))
    checks["quadrature"] = {"points": probe.size, "error": float(err), "tolerance": 1e-9}
    if p.alpha == 1.0:
        kappa, sigma = math.cos(0.5 * math.pi * p.beta), math.sin(0.5 * math.pi * p.beta)
        xe = np.linspace(-30.0, 30.0, 1001)
        fe = 1.0 / (math.pi * kappa * (1.0 + ((xe - sigma) / kappa) ** 2))
        Fe = 0.5 + np.arctan((xe - sigma) / kappa) / math.pi
        err = max(np.max(np.abs(table.density(xe) - fe)), np.max(np.abs(table.cdf(xe) - Fe)))
        checks["closed_form"] = {"points": xe.size, "error": float(err), "tolerance": 1e-10}
    mass = table.integral_pdf()
    checks["mass"] = {"value": mass, "error": abs(mass - 1.0), "tolerance": 1e-6}
    passed = all(c["error"] <= c["tolerance"] for c in checks.values())
    _write_json(out / "dist_summary.json", DIST_SCHEMA, cfg, {"checks": checks, "passed": passed, "table": table.metadata()})
    for name, c in checks.items():
        _say(f"{name}: error {c['error']:.3e} (tolerance {c['tolerance']:g})")
    _say(f"F(0) = {f0:.12g}")
    return EXIT_OK if passed else EXIT_ACCURACY


def _example_rows() -> list[dict]:
    rows = []
    pair = wf.reaction_pair(sl.make_params(1.0, 0.0))
    rows.append({"case": "g0, alpha=1, beta=0, zeta=0.5", "expected": 1.0 / math.pi, "value": float(pair.g0(0.5))})
    pair = wf.reaction_pair(sl.make_params(1.0, 0.5))
    rows.append({"case": "g1, alpha=1, beta=0.5, zeta=0.75", "expected": 1.0 / math.pi, "value": float(pair.g1(0.75))})
    v = float(wf.wave_profile(sl.make_params(1.0, 0.0), wf.WaveParams(1.0, 16.0), 16.0))
    rows.append({"case": "profile, alpha=1, beta=0, tau=16, xi=16", "expected": 0.75, "value": v})
    for r in rows:
        r["error"] = abs(r["value"] - r["expected"])
    return rows


def cmd_wave(cfg: RunConfig, out: Path) -> int:
    w = cfg.raw["wave"]
    wave = wf.WaveParams(float(w["c"]), float(w["tau"]))
    pair = wf.reaction_pair(cfg.params)
    n = int(w["n"])
    wf.dump_csv(pair, wave, out / "wave.csv", n, comments=_header(WAVE_SCHEMA, cfg))
    zeta = np.arange(1, n + 1) / (n + 1)
    comb = pair.combination(wave, zeta)
    flips = np.flatnonzero(np.sign(comb[:-1]) != np.sign(comb[1:]))
    us = pair.u_star(wave)
    cell = [float(zeta[flips[0]]), float(zeta[flips[0] + 1])] if flips.size else None
    rows = _example_rows()
    payload = {
        "u_star": us,
        "coefficients": list(pair.coefficients(wave)),
        "sign_change_cell": cell,
        "u_star_in_cell": bool(cell is not None and cell[0] <= us <= cell[1]),
        "examples": rows,
    }
    _write_json(out / "wave_summary.json", WAVE_SCHEMA, cfg, payload)
    _say(f"u* = {us:.12g}; sign change cell {cell}")
    for r in rows:
        _say(f"{r['case']}: {r['value']:.12g} (expected {r['expected']:.12g})")
    return EXIT_OK


def _oracle(cfg: RunConfig, g: wf.ReactionSpec, u: ev.Field) -> dict | None:
    init = cfg.raw["initial"]
    x = cfg.grid.x
    if g.name == "combination" and init["kind"] == "wave":
        c = dict(g.coeffs)
        exact = wf.wave_profile(cfg.params, wf.WaveParams(c["c"], c["tau"]), x + c["c"] * u.time)
        kind = "travelling wave"
    elif g.name == "zero" and init["kind"] == "profile":
        exact = ev.Carrier(float(init["shift"]), float(init["tau"]) + u.time).profile(cfg.params, x)
        kind = "free evolution"
    elif g.name == "zero" and init["kind"] == "zero":
        exact, kind = np.zeros_like(x), "zero"
    else:
        return None
    return {"kind": kind, "max_error": float(np.max(np.abs(u.values - exact)))}


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    g = cfg.reaction()
    cfg.evolution.check_reaction(g)
    u0 = cfg.initial_field(g)
    start = time.perf_counter()
    error = None
    try:
        snaps = ev.evolve(u0, g, cfg.evolution, cfg.snapshot_times)
    except ev.InstabilityError as err:
        snaps, error = err.snapshots, err
    runtime = time.perf_counter() - start
    x = cfg.grid.x
    records = []
    for k, u in enumerate(snaps):
        name = f"snapshot_{k:04d}.csv"
        _write_csv(out / name, SNAPSHOT_SCHEMA, cfg, ["x", "u"], zip(x, u.values))
        records.append({"file": name, "time": u.time, "min": float(u.values.min()), "max": float(u.values.max()), "oracle": _oracle(cfg, g, u)})
    level = float(cfg.raw["experiment"]["level"])
    track_note = None
    try:
        track = sa.track_level(snaps, level) if snaps else None
        if track is not None:
            sa.write_track_csv(track, out / "track.csv")
    except sa.TrackingError as err:
        track_note = str(err)
    payload = {
        "params": asdict(cfg.params),
        "grid": {"half_width": cfg.grid.half_width, "n_points": cfg.grid.n_points, "dx": cfg.grid.dx},
        "reaction": g.describe(),
        "snapshots": records,
        "timings": {"evolve_seconds": runtime},
        "track": None if track_note else "track.csv",
        "track_note": track_note,
        "error": None if error is None else str(error),
    }
    _write_json(out / "manifest.json", MANIFEST_SCHEMA, cfg, payload)
    for r in records:
        extra = "" if r["oracle"] is None else f"  {r['oracle']['kind']} error {r['oracle']['max_error']:.3e}"
        _say(f"t={r['time']:.6g}  range [{r['min']:.6g}, {r['max']:.6g}]{extra}")
    if error is not None:
        raise error
    return EXIT_OK


def cmd_spread(cfg: RunConfig, out: Path) -> int:
    e = cfg.raw["experiment"]
    g = cfg.reaction()
    cfg.evolution.check_reaction(g)
    exp_cfg = cfg.experiment_config()
    if e["name"] == "theorem31":
        report = sa.theorem31_experiment(cfg.params, g, [float(c) for c in e["speeds"]], exp_cfg)
        for c, v in zip(report.speeds, report.infima):
            _say(f"c={c:g}: inf over x >= -ct of u = {v:.6f}")
    elif e["name"] == "theorem32":
        report = sa.theorem32_experiment(cfg.params, g, exp_cfg, float(e["c_start"]))
        _say(f"certified c={report.certificate.c:g} (tau={report.certificate.tau:g}): sup over x <= -ct of u = {report.supremum:.6f}")
    else:
        raise ConfigError(f"experiment.name must be theorem31 or theorem32, got {e['name']!r}")
    body = report.to_dict()
    body.pop("config")
    schema = body.pop("schema")
    _write_json(out / "spread_report.json", schema, cfg, body)
    if report.track is not None:
        sa.write_track_csv(report.track, out / "track.csv")
    fit = report.fit
    if fit is not None:
        _say(f"front: {fit.classification}, rate {fit.rate:.6g} over t in [{fit.window[0]:.4g}, {fit.window[1]:.4g}]")
    if report.stopped:
        _say(f"run ended early at t={report.horizon:.6g}: {report.stopped}")
    _say("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_ACCURACY


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    results = _suites.run_suites(int(cfg.raw["seed"]), bool(cfg.raw["smoke"]))
    passed = all(r["passed"] for r in results)
    _write_json(out / "verify.json", VERIFY_SCHEMA, cfg, {"passed": passed, "results": results})
    for r in results:
        _say(f"{'PASS' if r['passed'] else 'FAIL'}  {r['suite']}.{r['check']}  ({r['runtime']:.2f} s)")
    return EXIT_OK if passed else EXIT_ACCURACY


COMMANDS = {
    "dist": (cmd_dist, "tabulate the stable law and run its self-checks"),
    "wave": (cmd_wave, "dump g0, g1 and their combination for one wave"),
    "simulate": (cmd_simulate, "run the solver and write snapshots"),
    "spread": (cmd_spread, "run a spreading experiment (theorem31 or theorem32)"),
    "verify": (cmd_verify, "run the invariant suites"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracspread", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", default=".", help="output directory (created if missing)")
        sp.add_argument("--seed", type=int, help="random seed (overrides the configuration)")
        sp.add_argument("--smoke", action="store_true", help="reduced resolution")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn = COMMANDS[args.command][0]
    try:
        cfg = RunConfig.load(args.config, args.smoke, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return fn(cfg, out)
    except ev.InstabilityError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INSTABILITY
    except (sl.AccuracyError, ev.ConvergenceError, wf.SearchFailure, sa.TrackingError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ACCURACY
    except (ValueError, KeyError, TypeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
