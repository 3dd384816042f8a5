"""Mild solutions of ``u_t + A u = g(u)`` on a truncated grid.

A field is stored as ``carrier + remainder``.  The carrier
``l + (r - l) F((x - d) tau**(-1/alpha))`` is a step-like profile on which the
semigroup acts exactly (``tau -> tau + t``); it carries the limits at
``-inf`` and ``+inf`` and the slowly decaying tails.  The remainder decays
at both ends and is advanced with the Fourier multiplier of the semigroup on
a padded periodic box, where the padding continues each end by a power law.
Time stepping is Strang (or Lie) splitting with RK4 for the reaction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache

import numpy as np

from .stable_law import DomainError, StableParams, default_table
from .wave_family import ReactionSpec

__all__ = [
    "BoundaryProximityError",
    "Carrier",
    "ConvergenceError",
    "EvolutionConfig",
    "Field",
    "Grid",
    "InstabilityError",
    "PicardResult",
    "apply_generator",
    "apply_semigroup",
    "evolve",
    "front_position",
    "fundamental_solution",
    "heaviside_solution",
    "leftmost_crossing",
    "picard_solve",
    "step",
]

PAD = 4  # periodic box length in units of the physical box


class InstabilityError(ArithmeticError):
    """The numerical solution left its admissible range."""

    def __init__(self, message: str, time: float, low: float, high: float, where: float):
        super().__init__(f"{message} at t={time:.6g}: range [{low:.6g}, {high:.6g}] near x={where:.6g}")
        self.time = time
        self.low = low
        self.high = high
        self.where = where
        self.snapshots: list = []


class BoundaryProximityError(InstabilityError):
    """The front came closer to the end of the grid than allowed."""


class ConvergenceError(ArithmeticError):
    """A fixed-point iteration stopped contracting."""


# -- grid, carrier, field -------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[-L, L)`` with ``N`` points, ``N`` a power of two."""

    half_width: float
    n_points: int

    def __post_init__(self):
        n = self.n_points
        if not (isinstance(n, (int, np.integer)) and n >= 256 and n & (n - 1) == 0):
            raise DomainError(f"n_points must be a power of two >= 256, got {n!r}")
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise DomainError("half_width must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.half_width + self.dx * np.arange(self.n_points)
        x.flags.writeable = False
        return x


@dataclass(frozen=True)
class Carrier:
    """Reference profile ``F((x - shift) tau**(-1/alpha))``; ``tau = 0`` is ``H(x - shift)``."""

    shift: float
    tau: float

    def __post_init__(self):
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise DomainError("carrier tau must be finite and non-negative")

    def profile(self, params: StableParams, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.tau == 0:
            return np.where(x >= self.shift, 1.0, 0.0)
        return default_table(params).cdf((x - self.shift) * self.tau ** (-1.0 / params.alpha))

    def advanced(self, t: float) -> "Carrier":
        return Carrier(self.shift, self.tau + t)


@dataclass(frozen=True, eq=False)
class Field:
    """Grid values of ``u`` together with its limits at ``-inf`` and ``+inf``.

    ``values`` holds ``u`` itself; the remainder is ``values`` minus the carrier
    part.  Fields with different limits need a carrier.
    """

    grid: Grid
    params: StableParams
    values: np.ndarray
    left_limit: float = 0.0
    right_limit: float = 0.0
    carrier: Carrier | None = None
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise DomainError(f"values must have shape ({self.grid.n_points},), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if self.carrier is None and self.left_limit != self.right_limit:
            raise DomainError("a field with different limits needs a carrier")

    @classmethod
    def profile(
        cls,
        grid: Grid,
        params: StableParams,
        shift: float = 0.0,
        tau: float = 1.0,
        left: float = 0.0,
        right: float = 1.0,
    ) -> "Field":
        """The exact profile ``left + (right - left) F((x - shift) tau**(-1/alpha))``."""
        c = Carrier(shift, tau)
        return cls(grid, params, left + (right - left) * c.profile(params, grid.x), left, right, c)

    @classmethod
    def from_values(cls, grid: Grid, params: StableParams, values, left: float, right: float) -> "Field":
        """Wrap arbitrary grid data; a carrier is fitted when the limits differ."""
        if left == right:
            return cls(grid, params, values, left, right)
        seed = cls(grid, params, values, left, right, Carrier(0.0, 1.0))
        return _refit(seed)

    def base(self) -> np.ndarray:
        """Carrier part of the field (the constant limit if there is none)."""
        l, r = self.left_limit, self.right_limit
        if self.carrier is None:
            return np.full(self.grid.n_points, l)
        return l + (r - l) * self.carrier.profile(self.params, self.grid.x)

    def remainder(self) -> np.ndarray:
        return self.values - self.base()

    def edge_remainder(self, fraction: float = 0.05) -> float:
        """Largest ``|remainder|`` over the outermost ``fraction`` of cells."""
        w = self.remainder()
        k = max(1, int(fraction * w.size))
        return float(max(np.abs(w[:k]).max(), np.abs(w[-k:]).max()))


@dataclass(frozen=True)
class EvolutionConfig:
    """Time stepping controls; ``splitting`` is 1 (Lie) or 2 (Strang)."""

    dt: float
    T: float
    splitting: int = 2
    reaction_substeps: int = 1
    boundary_margin: float = 0.1

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise DomainError("dt and T must be positive")
        if self.dt > self.T:
            raise DomainError("dt must not exceed T")
        if self.splitting not in (1, 2):
            raise DomainError("splitting must be 1 (Lie) or 2 (Strang)")
        if self.reaction_substeps < 1:
            raise DomainError("reaction_substeps must be at least 1")
        if not 0 <= self.boundary_margin < 0.5:
            raise DomainError("boundary_margin must lie in [0, 0.5)")

    def check_reaction(self, g: ReactionSpec):
        budget = self.dt * g.max_slope()
        if budget > 0.5:
            raise DomainError(f"dt * max|g'| = {budget:.3g} exceeds the stability budget 0.5")


# -- exact solutions -------------------------------------------------------------


def fundamental_solution(params: StableParams, x, t: float):
    """``W(x, t) = t**(-1/alpha) f(x t**(-1/alpha))``."""
    if not t > 0:
        raise DomainError("the fundamental solution needs t > 0")
    s = t ** (-1.0 / params.alpha)
    return s * default_table(params).density(np.asarray(x, dtype=float) * s)


def heaviside_solution(params: StableParams, x, t: float, d: float = 0.0):
    """``F((x - d) t**(-1/alpha))``, the free evolution of ``H(x - d)``.

    ``t = 0`` returns the step itself.
    """
    if t < 0:
        raise DomainError("time must be non-negative")
    out = Carrier(d, t).profile(params, x)
    return out if out.ndim else float(out)


# -- spectral machinery ------------------------------------------------------------


@lru_cache(maxsize=32)
def _frequencies(n: int, dx: float) -> np.ndarray:
    return 2.0 * np.pi * np.fft.rfftfreq(n, dx)


def _conj_symbol(params: StableParams, lam: np.ndarray) -> np.ndarray:
    # numpy's forward transform uses exp(-i lam x); a mode exp(i lam x) is
    # multiplied by p(-lam) = conj(p(lam)) under A
    out = lam**params.alpha * np.exp(1j * params.theta)
    out[-1] = out[-1].real  # Nyquist bin of an even-length transform
    return out


@lru_cache(maxsize=64)
def _multiplier(params: StableParams, n: int, dx: float, t: float) -> np.ndarray:
    return np.exp(-t * _conj_symbol(params, _frequencies(n, dx)))


def _tail_exponent(w: np.ndarray, dist: np.ndarray, alpha: float) -> float:
    """Decay exponent of ``w`` towards a grid end, clipped to ``[alpha, alpha + 1]``."""
    a, b = w[0], w[-1]
    if a * b > 0 and dist[0] > dist[-1] > 0:
        p = math.log(b / a) / math.log(dist[0] / dist[-1])
        if math.isfinite(p):
            return min(max(p, alpha), alpha + 1.0)
    return alpha


def _padded(field: Field, w: np.ndarray) -> tuple[np.ndarray, int]:
    """Embed ``w`` in a periodic box ``PAD`` times longer, continuing each end
    by a power law that is tapered to zero before the far seam."""
    g = field.grid
    n, dx, L = g.n_points, g.dx, g.half_width
    m = PAD * n
    off = (m - n) // 2
    big = np.zeros(m)
    big[off : off + n] = w
    centre = field.carrier.shift if field.carrier is not None else 0.0
    alpha = field.params.alpha
    j = np.arange(1, off + 1)
    half = off // 2
    taper = np.where(j <= half, 1.0, 0.5 * (1.0 + np.cos(np.pi * (j - half) / (off - half))))
    k = max(2, n // 64)
    x = g.x
    for side in (-1, 1):
        idx = np.arange(k) if side < 0 else n - 1 - np.arange(k)
        dist = np.maximum(np.abs(x[idx] - centre), 0.1 * L)
        p = _tail_exponent(w[idx[[0, -1]]], dist[[0, -1]], alpha)
        ext = w[idx[0]] * (dist[0] / (dist[0] + j * dx)) ** p * taper
        if side < 0:
            big[off - j] = ext
        else:
            big[off + n - 1 + j] = ext
    return big, off


def _apply_multiplier(field: Field, w: np.ndarray, mult_of) -> np.ndarray:
    big, off = _padded(field, w)
    m = big.size
    spec = np.fft.rfft(big) * mult_of(m)
    return np.fft.irfft(spec, m)[off : off + field.grid.n_points]


def apply_semigroup(field: Field, t: float) -> Field:
    """Advance the free equation by ``t``: exact for the carrier, spectral for the remainder."""
    if t < 0:
        raise DomainError("semigroup time must be non-negative")
    if t == 0:
        return field
    dx = field.grid.dx
    w = field.remainder()
    if np.any(w != 0):
        w = _apply_multiplier(field, w, lambda m: _multiplier(field.params, m, dx, float(t)))
    carrier = field.carrier.advanced(t) if field.carrier is not None else None
    moved = replace(field, carrier=carrier, time=field.time + t)
    return replace(moved, values=moved.base() + w)


def apply_generator(field: Field) -> Field:
    """``A u``: closed form on the carrier, Fourier multiplier on the remainder."""
    dx = field.grid.dx
    params = field.params
    out = np.zeros(field.grid.n_points)
    w = field.remainder()
    if np.any(w != 0):
        out += _apply_multiplier(field, w, lambda m: _conj_symbol(params, _frequencies(m, dx)))
    c = field.carrier
    if c is not None:
        if c.tau == 0:
            raise DomainError("the generator of a step carrier is singular")
        a = params.alpha
        xi = (field.grid.x - c.shift) * c.tau ** (-1.0 / a)
        dens = default_table(params).density(xi)
        out += (field.right_limit - field.left_limit) * xi * dens / (a * c.tau)
    return Field(field.grid, params, out, 0.0, 0.0, None, field.time)


# -- reaction, refit, stepping ----------------------------------------------------


def _react(field: Field, g: ReactionSpec, h: float, substeps: int) -> Field:
    """RK4 for ``u' = g(u)`` on every grid value and on both limits."""
    if h == 0:
        return field
    y = np.concatenate([field.values, [field.left_limit, field.right_limit]])
    s = h / substeps
    for _ in range(substeps):
        k1 = g(y)
        k2 = g(y + 0.5 * s * k1)
        k3 = g(y + 0.5 * s * k2)
        k4 = g(y + s * k3)
        y = y + (s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return replace(field, values=y[:-2], left_limit=float(y[-2]), right_limit=float(y[-1]))


def _refit(field: Field) -> Field:
    """Move the carrier to the current front and rescale it to the end values.

    The shift places the level ``F(0)`` at the front; the scale is the
    geometric mean of the scales matching each end value.  Both are exact
    when the data are an ``F``-profile.  The field values are unchanged, only
    the carrier/remainder split moves.
    """
    c = field.carrier
    l, r = field.left_limit, field.right_limit
    if c is None or l == r:
        return field
    params = field.params
    table = default_table(params)
    x = field.grid.x
    q = (field.values - l) / (r - l)
    level = params.cdf_at_zero()
    hits = np.flatnonzero((q[:-1] < level) & (q[1:] >= level))
    if hits.size == 0:
        return field
    k = int(hits[0])
    d = x[k] + (level - q[k]) / (q[k + 1] - q[k]) * (x[k + 1] - x[k])
    j = k if level - q[k] < q[k + 1] - level else k + 1
    zj = table.quantile(q[j]) if 0 < q[j] < 1 else 0.0
    qa = q[0]
    eta = (r - field.values[-1]) / (r - l)
    za = table.quantile(qa) if 0 < qa < level else None
    zb = table.quantile(1.0 - eta, isf=eta) if 0 < eta < 1 - level else None
    sigma = c.tau ** (1.0 / params.alpha)
    for _ in range(2):
        scales = []
        if za is not None and x[0] < d:
            scales.append((x[0] - d) / za)
        if zb is not None and x[-1] > d:
            scales.append((x[-1] - d) / zb)
        scales = [s for s in scales if s > 0 and math.isfinite(s)]
        if scales:
            sigma = math.exp(sum(math.log(s) for s in scales) / len(scales))
        d = x[j] - sigma * zj
    return replace(field, carrier=Carrier(float(d), float(sigma**params.alpha)))


def _range_check(field: Field):
    lo = min(0.0, field.left_limit, field.right_limit) - 0.1
    hi = max(1.0, field.left_limit, field.right_limit) + 0.1
    v = field.values
    if v.min() < lo or v.max() > hi:
        k = int(np.argmax(np.maximum(lo - v, v - hi)))
        raise InstabilityError("solution left its admissible range", field.time, float(v.min()), float(v.max()), float(field.grid.x[k]))


def front_position(field: Field, level: float = 0.5) -> float | None:
    """Leftmost crossing of ``left + level (right - left)``; ``None`` if absent."""
    l, r = field.left_limit, field.right_limit
    if l == r:
        return None
    return leftmost_crossing(field.grid.x, (field.values - l) / (r - l), level)


def leftmost_crossing(x: np.ndarray, q: np.ndarray, level: float) -> float | None:
    """Leftmost upward crossing of ``level`` by the samples ``q``, linearly interpolated."""
    hits = np.flatnonzero((q[:-1] < level) & (q[1:] >= level))
    if hits.size == 0:
        return None
    k = int(hits[0])
    return float(x[k] + (level - q[k]) / (q[k + 1] - q[k]) * (x[k + 1] - x[k]))


def _boundary_check(field: Field, margin: float):
    m = front_position(field)
    L = field.grid.half_width
    if m is not None and abs(m) > (1.0 - margin) * L:
        v = field.values
        raise BoundaryProximityError("front reached the boundary layer", field.time, float(v.min()), float(v.max()), m)


def step(field: Field, dt: float, g: ReactionSpec, config: EvolutionConfig) -> Field:
    """One splitting step of length ``dt`` followed by a carrier refit."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    n = config.reaction_substeps
    if config.splitting == 2:
        u = _react(field, g, 0.5 * dt, n)
        u = apply_semigroup(u, dt)
        u = _react(u, g, 0.5 * dt, n)
    else:
        u = _react(field, g, dt, n)
        u = apply_semigroup(u, dt)
    u = _refit(u)
    _range_check(u)
    return u


def evolve(initial: Field, g: ReactionSpec, config: EvolutionConfig, snapshot_times) -> list[Field]:
    """Integrate to each snapshot time (relative to ``initial.time``).

    Between snapshots the step is shortened uniformly so snapshot times are
    hit exactly; consecutive Strang half steps of the reaction are fused.
    An ``InstabilityError`` carries the snapshots completed before it.
    """
    times = sorted(float(t) for t in snapshot_times)
    if times and (times[0] < 0 or times[-1] > config.T * (1 + 1e-12)):
        raise DomainError("snapshot times must lie in [0, T]")
    config.check_reaction(g)
    out: list[Field] = []
    try:
        _run(initial, g, config, times, out)
    except InstabilityError as err:
        err.snapshots = out
        raise
    return out


def _run(initial: Field, g: ReactionSpec, config: EvolutionConfig, times, out: list):
    n_sub = config.reaction_substeps
    u = initial
    t0 = initial.time
    now = 0.0
    for target in times:
        span = target - now
        if span > 0:
            n = max(1, math.ceil(span / config.dt - 1e-9))
            h = span / n
            if config.splitting == 2:
                u = _react(u, g, 0.5 * h, n_sub)
                for i in range(n):
                    u = apply_semigroup(u, h)
                    u = _react(u, g, h if i < n - 1 else 0.5 * h, n_sub)
                    u = _refit(u)
                    _range_check(u)
                    _boundary_check(u, config.boundary_margin)
            else:
                for _ in range(n):
                    u = step(u, h, g, config)
                    _boundary_check(u, config.boundary_margin)
            u = replace(u, time=t0 + target)
            now = target
        out.append(u)


# -- Picard iteration ---------------------------------------------------------------


@dataclass(frozen=True)
class PicardResult:
    field: Field
    distances: tuple[float, ...]


def _integrand(u: Field, g: ReactionSpec) -> Field:
    # g(u) shares u's carrier geometry, with limits g(l) and g(r)
    gl = float(g(u.left_limit))
    gr = float(g(u.right_limit))
    carrier = u.carrier if gl != gr else None
    return Field(u.grid, u.params, g(u.values), gl, gr, carrier, u.time)


def _simpson_weights(i: int, h: float) -> np.ndarray:
    """Quadrature weights on nodes ``0..i`` for an integral over ``[0, i h]``."""
    w = np.zeros(i + 1)
    if i == 0:
        return w
    if i == 1:
        w[:] = 0.5 * h
        return w
    even = i if i % 2 == 0 else i - 3
    if even > 0:
        w[0 : even + 1 : 2] += 2.0 * h / 3.0
        w[1:even:2] += 4.0 * h / 3.0
        w[0] -= h / 3.0
        w[even] -= h / 3.0
    if i % 2 == 1:
        w[i - 3 : i + 1] += 3.0 * h / 8.0 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


def picard_solve(initial: Field, g: ReactionSpec, T: float, iterations: int, nodes: int = 20) -> PicardResult:
    """Fixed-point iteration of the variation-of-constants formula on
    ``nodes`` equal time intervals (composite Simpson in time).

    Raises :class:`ConvergenceError` if the distance between successive
    iterates grows three times in a row.
    """
    if not T > 0:
        raise DomainError("T must be positive")
    if iterations < 1:
        raise DomainError("iterations must be at least 1")
    if nodes < 2 or nodes % 2:
        raise DomainError("nodes must be an even integer >= 2")
    h = T / nodes
    free = [apply_semigroup(initial, j * h) for j in range(nodes + 1)]
    current = free
    distances: list[float] = []
    growth = 0
    for it in range(iterations):
        forcing = [_integrand(u, g) for u in current]
        nxt = [free[0]]
        for i in range(1, nodes + 1):
            w = _simpson_weights(i, h)
            vals = free[i].values.copy()
            l, r = free[i].left_limit, free[i].right_limit
            for j in range(i + 1):
                if w[j] == 0:
                    continue
                s = apply_semigroup(forcing[j], (i - j) * h)
                vals += w[j] * s.values
                l += w[j] * s.left_limit
                r += w[j] * s.right_limit
            nxt.append(Field.from_values(initial.grid, initial.params, vals, l, r))
        nxt = [replace(u, time=initial.time + j * h) for j, u in enumerate(nxt)]
        dist = max(float(np.max(np.abs(a.values - b.values))) for a, b in zip(nxt, current))
        if distances and dist > distances[-1]:
            growth += 1
            if growth >= 3:
                raise ConvergenceError(f"Picard iterates stopped contracting (distances {distances + [dist]})")
        else:
            growth = 0
        distances.append(dist)
        current = nxt
        if dist == 0.0:
            break
    return PicardResult(current[-1], tuple(distances))
