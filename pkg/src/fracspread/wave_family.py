"""Traveling-wave profiles ``U_tau(xi) = F(xi * tau**(-1/alpha))`` and the
reaction terms they induce.

With ``g0 = f o F^-1`` and ``g1 = (x f) o F^-1`` the profile ``U_tau(x + ct)``
solves the reaction-diffusion equation exactly for the reaction
``c tau**(-1/alpha) g0 + g1 / (alpha tau)``.  :func:`tau_search` looks for
``tau`` (and, in upper mode, ``c``) such that a given reaction lies above or
below that combination on a verification grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import PPoly

from .stable_law import DistTable, DomainError, StableParams, _hermite, default_table

__all__ = [
    "HypothesisError",
    "ReactionPair",
    "ReactionSpec",
    "SearchFailure",
    "TauCertificate",
    "WaveParams",
    "bistable",
    "builtin_reaction",
    "check_hypotheses",
    "combination",
    "combination_reaction",
    "dump_csv",
    "g0",
    "g1",
    "kpp_logistic",
    "power_kpp",
    "reaction_pair",
    "tau_search",
    "threshold_kpp",
    "truncated",
    "u_star",
    "wave_profile",
]

TAU_MIN = 1e-6
TAU_MAX = 1e12


class HypothesisError(DomainError):
    """A reaction does not satisfy the hypotheses required by a search mode."""


class SearchFailure(ArithmeticError):
    """No admissible ``tau`` was found; carries the worst violation seen."""

    def __init__(self, message: str, worst_zeta: float, violation: float):
        super().__init__(f"{message} (worst zeta {worst_zeta:.6g}, violation {violation:.3g})")
        self.worst_zeta = worst_zeta
        self.violation = violation


@dataclass(frozen=True)
class WaveParams:
    c: float
    tau: float

    def __post_init__(self):
        if not math.isfinite(self.c):
            raise DomainError("wave speed c must be finite")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise DomainError(f"tau must be positive and finite, got {self.tau!r}")


# -- the reaction pair g0, g1 -------------------------------------------------


def _as_output(out):
    return out if out.ndim else float(out)


class ReactionPair:
    """``g0`` and ``g1`` for one stable law.

    :meth:`g0` and :meth:`g1` compose the table's quantile and density.  The
    ``*_fast`` variants evaluate quintic Hermite interpolants in ``zeta`` built
    from the exact ``zeta``-derivatives at the table nodes; they are meant for
    solver inner loops and accept any real input (zero outside ``(0, 1)``).
    """

    def __init__(self, table: DistTable):
        self.table = table
        self.params: StableParams = table.params
        self._build_interpolants()

    def _build_interpolants(self):
        t = self.table
        x = t.grid
        f, f1, f2 = t.pdf_values, t.dpdf_values, t.d2pdf_values
        d0 = f1 / f
        dd0 = (f2 * f - f1**2) / f**3
        v1 = x * f
        d1 = 1.0 + x * d0
        dd1 = f1 / f**2 + x * dd0
        k = int(np.argmin(np.abs(x)))
        self._zeta_split = float(t.cdf_values[k])
        left = slice(0, k + 1)
        right = slice(None, k - 1 if k > 0 else None, -1)
        # left branch in zeta, right branch in eta = 1 - zeta (d/d eta = -d/d zeta)
        zl = t.cdf_values[left]
        self._g0_left = _hermite(zl, f[left], d0[left], dd0[left])
        self._g1_left = _hermite(zl, v1[left], d1[left], dd1[left])
        er = t.sf_values[right]
        self._g0_right = _hermite(er, f[right], -d0[right], dd0[right])
        self._g1_right = _hermite(er, v1[right], -d1[right], dd1[right])
        self._zeta_lo = float(t.cdf_values[0])
        self._eta_lo = float(t.sf_values[-1])

    # exact composition

    def _x_of(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        if np.any(~((zeta > 0) & (zeta < 1))):
            raise DomainError("g0 and g1 are evaluated for 0 < zeta < 1")
        return self.table.quantile(zeta, isf=1.0 - zeta)

    def g0(self, zeta):
        """``f(F^-1(zeta))``."""
        return self.table.density(self._x_of(zeta))

    def g1(self, zeta):
        """``F^-1(zeta) f(F^-1(zeta))``."""
        x = self._x_of(zeta)
        return x * self.table.density(x)

    # interpolated variants

    def _fast(self, zeta, left_poly, right_poly, k0, k1):
        # k0 * g0 + k1 * g1 with matching polynomials already combined
        zeta = np.asarray(zeta, dtype=float)
        out = np.zeros(zeta.shape)
        a = self.params.alpha
        tl, tr = self.table._left, self.table._right
        eta = 1.0 - zeta
        lo_tail = (zeta > 0) & (zeta < self._zeta_lo)
        hi_tail = (eta > 0) & (eta < self._eta_lo)
        left = (zeta >= self._zeta_lo) & (zeta <= self._zeta_split)
        right = (zeta > self._zeta_split) & (eta >= self._eta_lo)
        out[left] = left_poly(zeta[left])
        out[right] = right_poly(eta[right])
        if np.any(lo_tail):
            xl = (tl.anchor_p / zeta[lo_tail]) ** (1.0 / a)
            out[lo_tail] = tl.anchor_f * xl ** (-1.0 - a) * (k0 - k1 * xl)
        if np.any(hi_tail):
            xr = (tr.anchor_p / eta[hi_tail]) ** (1.0 / a)
            out[hi_tail] = tr.anchor_f * xr ** (-1.0 - a) * (k0 + k1 * xr)
        return _as_output(out)

    def g0_fast(self, zeta):
        return self._fast(zeta, self._g0_left, self._g0_right, 1.0, 0.0)

    def g1_fast(self, zeta):
        return self._fast(zeta, self._g1_left, self._g1_right, 0.0, 1.0)

    def combination_fast(self, wave: WaveParams):
        """Vectorized ``zeta -> combination(wave, zeta)`` over combined interpolants."""
        k0, k1 = self.coefficients(wave)
        lp = PPoly(k0 * self._g0_left.c + k1 * self._g1_left.c, self._g0_left.x)
        rp = PPoly(k0 * self._g0_right.c + k1 * self._g1_right.c, self._g0_right.x)
        return lambda zeta: self._fast(zeta, lp, rp, k0, k1)

    # combination

    def coefficients(self, wave: WaveParams) -> tuple[float, float]:
        a = self.params.alpha
        return wave.c * wave.tau ** (-1.0 / a), 1.0 / (a * wave.tau)

    def combination(self, wave: WaveParams, zeta, fast: bool = False):
        k0, k1 = self.coefficients(wave)
        if fast:
            return self.combination_fast(wave)(zeta)
        return k0 * self.g0(zeta) + k1 * self.g1(zeta)

    def u_star(self, wave: WaveParams) -> float:
        return u_star(self.table, wave)


def reaction_pair(params: StableParams) -> ReactionPair:
    """Reaction pair over the process-wide cached table."""
    return ReactionPair(default_table(params))


def g0(pair: ReactionPair, zeta):
    return pair.g0(zeta)


def g1(pair: ReactionPair, zeta):
    return pair.g1(zeta)


def combination(pair: ReactionPair, wave: WaveParams, zeta):
    """``c tau**(-1/alpha) g0(zeta) + g1(zeta) / (alpha tau)``."""
    return pair.combination(wave, zeta)


def u_star(table: DistTable, wave: WaveParams) -> float:
    """Interior zero of the combination, ``F(-c alpha tau**(1 - 1/alpha))``."""
    a = table.params.alpha
    return table.cdf(-wave.c * a * wave.tau ** (1.0 - 1.0 / a))


def wave_profile(params: StableParams, wave: WaveParams, xi):
    """``U_tau(xi) = F(xi * tau**(-1/alpha))``."""
    return default_table(params).cdf(np.asarray(xi, dtype=float) * wave.tau ** (-1.0 / params.alpha))


def dump_csv(pair: ReactionPair, wave: WaveParams, path, n: int = 1001, comments=()) -> Path:
    """Write ``zeta, g0, g1, combination`` on a uniform interior grid.

    Each entry of ``comments`` becomes a leading ``#`` line.
    """
    path = Path(path)
    zeta = np.arange(1, n + 1) / (n + 1)
    v0, v1 = pair.g0(zeta), pair.g1(zeta)
    k0, k1 = pair.coefficients(wave)
    with path.open("w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["zeta", "g0", "g1", "combination"])
        for row in zip(zeta, v0, v1, k0 * v0 + k1 * v1):
            w.writerow([repr(float(v)) for v in row])
    return path


# -- reactions ----------------------------------------------------------------


def _one_sided_slope(func, at: float) -> float:
    h = 1e-6
    s = 1.0 if at == 0.0 else -1.0
    y = func(np.array([at, at + s * h, at + 2 * s * h]))
    return float(s * (-3 * y[0] + 4 * y[1] - y[2]) / (2 * h))


@dataclass(frozen=True)
class ReactionSpec:
    """A reaction ``g`` on ``[0, 1]`` with ``g(0) = g(1) = 0``.

    ``tag`` is one of ``KPP`` (``g >= 0``), ``Allen-Cahn`` (``g < 0`` near 0)
    or ``custom``.  Missing endpoint slopes are filled in by finite
    differences.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    tag: str = "custom"
    coeffs: tuple = ()
    dg0: float | None = None
    dg1: float | None = None

    def __post_init__(self):
        ends = np.asarray(self.func(np.array([0.0, 1.0])), dtype=float)
        if np.any(np.abs(ends) > 1e-12):
            raise DomainError(f"reaction {self.name!r} must vanish at 0 and 1, got {ends.tolist()}")
        if self.dg0 is None:
            object.__setattr__(self, "dg0", _one_sided_slope(self.func, 0.0))
        if self.dg1 is None:
            object.__setattr__(self, "dg1", _one_sided_slope(self.func, 1.0))

    def __call__(self, u):
        out = np.asarray(self.func(np.asarray(u, dtype=float)), dtype=float)
        return _as_output(out)

    def max_slope(self, n: int = 4001) -> float:
        """Estimate of ``max |g'|`` on ``[0, 1]``."""
        u = np.linspace(0.0, 1.0, n)
        return float(np.max(np.abs(np.gradient(self.func(u), u))))

    def describe(self) -> dict:
        return {"name": self.name, "tag": self.tag, "coeffs": dict(self.coeffs), "dg0": self.dg0, "dg1": self.dg1}


def kpp_logistic(r: float = 1.0) -> ReactionSpec:
    return ReactionSpec("kpp-logistic", lambda u: r * u * (1.0 - u), "KPP", (("r", r),), r, -r)


def power_kpp(c0: float = 1.0, gamma: float = 2.0) -> ReactionSpec:
    """``c0 u**gamma (1 - u)``, clipped at ``u < 0``; needs ``gamma >= 1``."""
    if gamma < 1:
        raise DomainError("power-kpp needs gamma >= 1 for a C^1 reaction")
    return ReactionSpec(
        "power-kpp",
        lambda u: c0 * np.maximum(u, 0.0) ** gamma * (1.0 - u),
        "KPP",
        (("c0", c0), ("gamma", gamma)),
        c0 if gamma == 1 else 0.0,
        -c0,
    )


def bistable(a: float = 0.3, scale: float = 1.0) -> ReactionSpec:
    """``scale * u (u - a) (1 - u)``."""
    if not 0 < a < 1:
        raise DomainError("bistable threshold must lie in (0, 1)")
    return ReactionSpec(
        "bistable",
        lambda u: scale * u * (u - a) * (1.0 - u),
        "Allen-Cahn",
        (("a", a), ("scale", scale)),
        -scale * a,
        -scale * (1.0 - a),
    )


def threshold_kpp(a: float = 0.2, r: float = 1.0) -> ReactionSpec:
    """Zero on ``[0, a]``, ``r (u - a)**2 (1 - u) / (1 - a)**2`` above."""
    if not 0 < a < 1:
        raise DomainError("threshold must lie in (0, 1)")
    return ReactionSpec(
        "threshold-kpp",
        lambda u: r * np.maximum(u - a, 0.0) ** 2 * (1.0 - u) / (1.0 - a) ** 2,
        "KPP",
        (("a", a), ("r", r)),
        0.0,
        -r,
    )


def _smoothstep_down(u, start, end):
    s = np.clip((u - start) / (end - start), 0.0, 1.0)
    return 1.0 - s * s * (3.0 - 2.0 * s)


def truncated(g: ReactionSpec, start: float = 0.8, end: float = 0.9) -> ReactionSpec:
    """``g`` multiplied by a C^1 cutoff that vanishes on ``[end, 1]``."""
    if not 0 < start < end <= 1:
        raise DomainError("cutoff needs 0 < start < end <= 1")
    return ReactionSpec(
        f"truncated-{g.name}",
        lambda u: g.func(u) * _smoothstep_down(u, start, end),
        g.tag,
        g.coeffs + (("cut_start", start), ("cut_end", end)),
        g.dg0,
        0.0,
    )


def combination_reaction(pair: ReactionPair, wave: WaveParams) -> ReactionSpec:
    """The reaction solved exactly by ``U_tau(x + ct)``; zero outside ``[0, 1]``."""
    return ReactionSpec(
        "combination",
        pair.combination_fast(wave),
        "Allen-Cahn",
        (("c", wave.c), ("tau", wave.tau)),
        -1.0 / wave.tau,
        -1.0 / wave.tau,
    )


def builtin_reaction(name: str, coeffs: dict | None = None, pair: ReactionPair | None = None) -> ReactionSpec:
    """Look up a library reaction by name (used by configuration files)."""
    coeffs = dict(coeffs or {})
    if name == "kpp-logistic":
        return kpp_logistic(**coeffs)
    if name == "power-kpp":
        return power_kpp(**coeffs)
    if name == "bistable":
        return bistable(**coeffs)
    if name == "threshold-kpp":
        return threshold_kpp(**coeffs)
    if name == "truncated-bistable":
        start = coeffs.pop("cut_start", 0.8)
        end = coeffs.pop("cut_end", 0.9)
        return truncated(bistable(**coeffs), start, end)
    if name == "zero":
        return ReactionSpec("zero", lambda u: np.zeros_like(u), "custom", (), 0.0, 0.0)
    if name == "combination":
        if pair is None:
            raise DomainError("the combination reaction needs stable-law parameters")
        return combination_reaction(pair, WaveParams(float(coeffs["c"]), float(coeffs["tau"])))
    raise DomainError(f"unknown reaction {name!r}")


# -- tau search -------------------------------------------------------------


@dataclass(frozen=True)
class TauCertificate:
    """Outcome of :func:`tau_search`.

    ``margin`` is the smallest relative slack ``d / (|g| + |combination|)``
    over both verification grids, attained at ``worst_zeta``.
    """

    mode: str
    c: float
    tau: float
    margin: float
    worst_zeta: float
    grid_points: int
    recheck_points: int


def _verification_grid(n: int) -> np.ndarray:
    edge = np.logspace(-12, -3, 200)
    return np.concatenate([edge, np.arange(1, n + 1) / (n + 1), 1.0 - edge[::-1]])


def _check(pair, g, c, tau, zeta, lower):
    """``(ok, relative margin, worst zeta)`` of one candidate."""
    comb = pair.combination(WaveParams(c, tau), zeta, fast=True)
    gv = g(zeta)
    d = gv - comb if lower else comb - gv
    rel = d / (np.abs(gv) + np.abs(comb) + 1e-300)
    k = int(np.argmin(rel))
    return bool(rel[k] >= -1e-10), float(rel[k]), float(zeta[k])


def _check_lower_hypotheses(params: StableParams, g: ReactionSpec, zeta: np.ndarray):
    a = params.alpha
    inner = zeta[(zeta > 0) & (zeta < 1)]
    gv = g(inner)
    if a > 1:
        if np.any(gv <= 0):
            raise HypothesisError("lower mode with alpha > 1 needs g > 0 on (0, 1)")
        lo, hi = g(np.array([1e-6, 1e-4]))
        if lo <= 0:
            raise HypothesisError("lower mode with alpha > 1 needs g > 0 near 0")
        gamma = math.log(hi / lo) / math.log(100.0)
        if gamma >= a / (a - 1):
            raise HypothesisError(
                f"lower mode with alpha > 1 needs g >= c0 zeta**gamma with gamma < {a / (a - 1):.4g};"
                f" local exponent near 0 is {gamma:.4g}"
            )
    elif a == 1:
        if np.any(gv <= 0):
            raise HypothesisError("lower mode with alpha = 1 needs g > 0 on (0, 1)")
    else:
        if np.any(gv < -1e-15):
            raise HypothesisError("lower mode with alpha < 1 needs g >= 0 on [0, 1]")
        upper = inner >= params.cdf_at_zero()
        if np.any(gv[upper] <= 0):
            raise HypothesisError("lower mode with alpha < 1 needs g > 0 on [(1 - beta)/2, 1)")


def _check_upper_hypotheses(g: ReactionSpec):
    if not g.dg0 < 0:
        raise HypothesisError(f"upper mode needs g'(0) < 0, got {g.dg0:.4g}")
    near_one = 1.0 - np.logspace(-8, -2, 50)
    if np.any(g(near_one) != 0):
        raise HypothesisError("upper mode needs g to vanish identically near 1")


def check_hypotheses(params: StableParams, g: ReactionSpec, mode: str = "lower", n_grid: int = 10_000):
    """Raise ``HypothesisError`` naming the first condition ``g`` violates for ``mode``.

    ``params`` is not used in upper mode and may be ``None`` there.
    """
    if mode == "lower":
        _check_lower_hypotheses(params, g, _verification_grid(n_grid))
    elif mode == "upper":
        _check_upper_hypotheses(g)
    else:
        raise DomainError(f"mode must be 'lower' or 'upper', got {mode!r}")


def _tau_ladder() -> np.ndarray:
    k = np.arange(math.ceil(math.log2(TAU_MIN)), math.floor(math.log2(TAU_MAX)) + 1)
    return 2.0 ** k.astype(float)


def tau_search(
    pair: ReactionPair,
    g: ReactionSpec,
    c: float,
    mode: str = "lower",
    n_grid: int = 10_000,
    c_max: float = 1e6,
    require_hypotheses: bool = True,
) -> TauCertificate:
    """Find ``tau`` with ``g >= combination`` (lower) or ``g <= combination``
    (upper) on a grid of ``n_grid`` interior points plus log-spaced points
    near both ends.

    In lower mode ``c > 0`` is fixed.  In upper mode ``c`` is the first speed
    of a geometric outer sweep (factor 2, up to ``c_max``).  Every returned
    certificate has been re-verified on a grid four times finer.  The lower
    mode refines ``tau`` to within 1% of the smallest verifying value.
    ``require_hypotheses=False`` skips the sign checks on ``g``.
    """
    if mode not in ("lower", "upper"):
        raise DomainError(f"mode must be 'lower' or 'upper', got {mode!r}")
    if not c > 0:
        raise DomainError("tau_search needs c > 0")
    zeta = _verification_grid(n_grid)
    fine = _verification_grid(4 * n_grid)
    lower = mode == "lower"
    # failures report the maximal-violation zeta of the closest attempt
    worst = (-math.inf, 0.5)

    def attempt(cc, tau):
        nonlocal worst
        ok, m, z = _check(pair, g, cc, tau, zeta, lower)
        if not ok and m > worst[0]:
            worst = (m, z)
        return ok

    def certify(cc, tau):
        ok, m, z = _check(pair, g, cc, tau, fine, lower)
        if not ok:
            return None
        _, m0, z0 = _check(pair, g, cc, tau, zeta, lower)
        return TauCertificate(mode, cc, tau, min(m, m0), z if m <= m0 else z0, zeta.size, fine.size)

    taus = _tau_ladder()
    if lower:
        if require_hypotheses:
            _check_lower_hypotheses(pair.params, g, zeta)
        i1 = int(np.flatnonzero(taus == 1.0)[0])
        if attempt(c, 1.0):
            ok_i = i1
            while ok_i > 0 and attempt(c, taus[ok_i - 1]):
                ok_i -= 1
        else:
            ok_i = next((i for i in range(i1 + 1, taus.size) if attempt(c, taus[i])), None)
            if ok_i is None:
                raise SearchFailure(f"no tau in [{TAU_MIN:g}, {TAU_MAX:g}] satisfies the lower bound", worst[1], worst[0])
        tau_ok = float(taus[ok_i])
        if ok_i > 0:
            # refine between the last failure and the first success, in log tau
            lo, hi = math.log(taus[ok_i - 1]), math.log(tau_ok)
            while hi - lo > math.log(1.01):
                mid = 0.5 * (lo + hi)
                if attempt(c, math.exp(mid)):
                    hi = mid
                else:
                    lo = mid
            if hi != math.log(tau_ok):
                tau_ok = math.exp(hi)
        cert = certify(c, tau_ok)
        k = 0
        while cert is None and tau_ok * 2 <= TAU_MAX and k < 8:
            tau_ok *= 2
            k += 1
            cert = certify(c, tau_ok) if attempt(c, tau_ok) else None
        if cert is None:
            raise SearchFailure("lower-mode candidate failed the fine-grid recheck", worst[1], worst[0])
        return cert

    if require_hypotheses:
        _check_upper_hypotheses(g)
    cc = c
    while cc <= c_max:
        for tau in map(float, taus):
            if attempt(cc, tau):
                cert = certify(cc, tau)
                if cert is not None:
                    return cert
        cc *= 2
    raise SearchFailure(f"no (c, tau) with c <= {c_max:g} satisfies the upper bound", worst[1], worst[0])
