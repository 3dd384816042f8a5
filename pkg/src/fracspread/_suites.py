"""Desk-scale invariant checks behind ``fracspread verify``.

Each check takes a random generator and a smoke flag and returns
``(passed, details)``.  Random draws only choose where invariants are
probed, so verdicts do not depend on the seed.
"""

from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np
from scipy.special import gamma as gamma_fn

from . import evolution as ev
from . import spread_analysis as sa
from . import stable_law as sl
from . import wave_family as wf


def _alpha_one(beta: float, n: int):
    kappa, sigma = math.cos(0.5 * math.pi * beta), math.sin(0.5 * math.pi * beta)
    x = np.linspace(-30.0, 30.0, n)
    zeta = np.linspace(0.0005, 0.9995, n)
    return x, zeta, kappa, sigma


def check_closed_form(rng, smoke):
    n = 100 if smoke else 1000
    worst = 0.0
    for beta in (-0.8, -0.5, 0.0, 0.5, 0.8):
        x, zeta, kappa, sigma = _alpha_one(beta, n)
        t = sl.default_table(sl.make_params(1.0, beta))
        f = 1.0 / (math.pi * kappa * (1.0 + ((x - sigma) / kappa) ** 2))
        F = 0.5 + np.arctan((x - sigma) / kappa) / math.pi
        q = sigma - kappa / np.tan(math.pi * zeta)
        worst = max(
            worst,
            np.max(np.abs(t.density(x) - f)),
            np.max(np.abs(t.cdf(x) - F)),
            np.max(np.abs(t.quantile(zeta) - q) / np.maximum(1.0, np.abs(q))),
        )
    return worst <= 1e-10, {"max_error": float(worst), "tolerance": 1e-10}


def check_symmetric_peak(rng, smoke):
    alphas = (0.8, 1.7) if smoke else (0.5, 0.8, 1.2, 1.7)
    errs = {}
    for a in alphas:
        exact = gamma_fn(1.0 + 1.0 / a) / math.pi
        errs[str(a)] = float(abs(sl.density(sl.make_params(a, 0.0), 0.0) / exact - 1.0))
    return max(errs.values()) < 1e-7, {"relative_errors": errs, "tolerance": 1e-7}


def _draws(rng, k):
    alpha = rng.uniform(0.5, 1.9, k)
    beta = rng.uniform(-0.8, 0.8, k)
    return [sl.make_params(float(a), float(b)) for a, b in zip(alpha, beta)]


def check_table_invariants(rng, smoke):
    bad = []
    for p in _draws(rng, 2 if smoke else 5):
        t = sl.default_table(p)
        x = np.linspace(-40.0, 40.0, 2001)
        F = t.cdf(x)
        z = rng.uniform(0.01, 0.99, 50)
        checks = {
            "cdf_at_zero": abs(float(t.cdf(0.0)) - p.cdf_at_zero()) < 1e-9,
            "monotone": bool(np.all(np.diff(F) > 0)),
            "positive": bool(np.all(t.density(x) > 0)),
            "round_trip": float(np.max(np.abs(t.cdf(t.quantile(z)) - z))) < 1e-10,
            "mass": abs(t.integral_pdf() - 1.0) < 1e-6,
        }
        failed = [k for k, ok in checks.items() if not ok]
        if failed:
            bad.append({"alpha": p.alpha, "beta": p.beta, "failed": failed})
    return not bad, {"failures": bad}


def check_pair_shape(rng, smoke):
    bad = []
    for p in _draws(rng, 3 if smoke else 10):
        pair = wf.reaction_pair(p)
        z0 = p.cdf_at_zero()
        zl = np.linspace(1e-4, z0 - 1e-3, 200)
        zr = np.linspace(z0 + 1e-3, 1 - 1e-4, 200)
        slope = float(pair.g1(1e-4)) / 1e-4
        c, tau = float(rng.uniform(0.1, 3.0)), float(10 ** rng.uniform(-1, 1))
        wave = wf.WaveParams(c, tau)
        us = pair.u_star(wave)
        h = 1e-6
        zero_ok = True
        if h < us < 1 - h:
            lo, hi = pair.combination(wave, np.array([us - h, us + h]))
            zero_ok = lo < 0 < hi
        checks = {
            "g0_positive": bool(np.all(pair.g0(zr) > 0) and np.all(pair.g0(zl) > 0)),
            "g1_signs": bool(np.all(pair.g1(zl) < 0) and np.all(pair.g1(zr) > 0)),
            "endpoint_slope": abs(slope / -p.alpha - 1.0) < 0.05,
            "u_star_zero": zero_ok,
        }
        failed = [k for k, ok in checks.items() if not ok]
        if failed:
            bad.append({"alpha": p.alpha, "beta": p.beta, "failed": failed})
    return not bad, {"failures": bad}


def check_semigroup(rng, smoke):
    p = _draws(rng, 1)[0]
    grid = ev.Grid(100.0, 1024 if smoke else 4096)
    x = grid.x
    bump = 0.1 * np.exp(-((x - rng.uniform(-5, 5)) ** 2))
    u = ev.Field(grid, p, ev.Field.profile(grid, p, 0.0, 1.0).values + bump, 0.0, 1.0, ev.Carrier(0.0, 1.0))
    s, t = 0.3, 0.5
    two = ev.apply_semigroup(ev.apply_semigroup(u, s), t)
    one = ev.apply_semigroup(u, s + t)
    err = float(np.max(np.abs(two.values - one.values)))
    return err < 1e-8, {"alpha": p.alpha, "beta": p.beta, "composition_error": err, "tolerance": 1e-8}


def check_travelling_wave(rng, smoke):
    p = sl.make_params(1.5, float(rng.uniform(-0.5, 0.5)))
    wave = wf.WaveParams(1.0, 1.0)
    g = wf.combination_reaction(wf.reaction_pair(p), wave)
    grid = ev.Grid(100.0, 1024 if smoke else 2048)
    T = 1.0 if smoke else 2.0
    u0 = ev.Field.profile(grid, p, 0.0, 1.0)
    u = ev.evolve(u0, g, ev.EvolutionConfig(0.01, T), [T])[-1]
    err = float(np.max(np.abs(u.values - wf.wave_profile(p, wave, grid.x + T))))
    return err <= 1e-4, {"beta": p.beta, "max_error": err, "tolerance": 1e-4}


def check_fit_synthetic(rng, smoke):
    t = np.linspace(1.0, 20.0, 80)
    c, r, k = float(rng.uniform(0.5, 5)), float(rng.uniform(0.2, 1.0)), float(rng.uniform(0.1, 10))
    lin = sa.fit_spread(sa.FrontTrack(0.5, t, -c * t))
    exp_ = sa.fit_spread(sa.FrontTrack(0.5, t, -np.exp(r * t)))
    lin_k = sa.fit_spread(sa.FrontTrack(0.5, t, -k * c * t))
    exp_k = sa.fit_spread(sa.FrontTrack(0.5, t, -k * np.exp(r * t)))
    checks = {
        "linear": lin.classification == "linear" and abs(lin.rate - c) < 1e-9 * c,
        "exponential": exp_.classification == "exponential" and abs(exp_.rate - r) < 1e-9,
        "linear_scaling": abs(lin_k.rate - k * lin.rate) < 1e-8 * k * c,
        "exponential_scaling": abs(exp_k.rate - exp_.rate) < 1e-9,
    }
    failed = [k for k, ok in checks.items() if not ok]
    return not failed, {"failed": failed}


SUITES: dict[str, list[tuple[str, Callable]]] = {
    "stable_law": [
        ("closed_form_alpha_one", check_closed_form),
        ("symmetric_peak", check_symmetric_peak),
        ("table_invariants", check_table_invariants),
    ],
    "wave_family": [("pair_shape", check_pair_shape)],
    "evolution": [
        ("semigroup_composition", check_semigroup),
        ("travelling_wave", check_travelling_wave),
    ],
    "spread_analysis": [("synthetic_fits", check_fit_synthetic)],
}


def run_suites(seed: int, smoke: bool) -> list[dict]:
    rng = np.random.default_rng(seed)
    out = []
    for suite, checks in SUITES.items():
        for name, fn in checks:
            start = time.perf_counter()
            try:
                passed, details = fn(rng, smoke)
            except (ArithmeticError, ValueError) as err:
                passed, details = False, {"error": f"{type(err).__name__}: {err}"}
            out.append(
                {
                    "suite": suite,
                    "check": name,
                    "passed": bool(passed),
                    "details": details,
                    "runtime": time.perf_counter() - start,
                }
            )
    return out
