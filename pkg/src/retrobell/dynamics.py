"""Particle trajectories under the local guidance law, and density transport.

Guidance velocity during the measurement coupling
-------------------------------------------------
While the coupling dominates, each eigenvalue branch of the wavepacket
translates rigidly at speed eigenvalue * g along x.  The probability current
of that rigid motion is uniform, so the guidance velocity is

    v = eigenvalue * g * xhat        (coupling regime),

not the gradient-of-phase of the initial packet (which is zero for a real
packet at rest).  This co-moving velocity is the unique choice under which
trajectories stay pinned to their branch and an ensemble distributed as
|chi|^2 remains distributed as the translated |chi|^2 — the equivariance
every equilibrium result rests on.  Only the x component evolves during
coupling; y and z are frozen.

In the optional free regime the velocity is the analytic spreading-Gaussian
current, v_x = k + (x - mu - k t) * t / (4 s^4 + t^2) per axis.

Densities are transported by advecting Monte Carlo samples along the same
trajectories (method of characteristics); the flow is piecewise uniform, so
characteristics are exact and introduce no numerical diffusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .packet import GaussianPacket

COUPLING = "coupling"
FREE = "free"


class IntegrationError(RuntimeError):
    """A non-finite velocity was encountered (configuration bug)."""


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Guidance velocity for one eigenvalue branch in one dynamical regime.

    The coupling regime is spatially uniform.  The free regime needs the
    branch's packet at the instant the coupling switched off; ``t`` is then
    measured from that instant.
    """

    eigenvalue: int
    g: float
    regime: str = COUPLING
    packet: GaussianPacket | None = None

    def __post_init__(self):
        if self.eigenvalue not in (1, -1):
            raise ValueError("eigenvalue must be +1 or -1")
        if self.regime not in (COUPLING, FREE):
            raise ValueError(f"unknown regime: {self.regime!r}")
        if self.regime == FREE and self.packet is None:
            raise ValueError("free regime requires the branch packet")


def guidance_velocity(field: VelocityField, r, t: float) -> np.ndarray:
    """Velocity at position(s) r and time t; r may be (3,) or (N, 3)."""
    pts = np.asarray(r, dtype=float)
    if field.regime == COUPLING:
        v = np.zeros_like(pts, dtype=float)
        v[..., 0] = field.eigenvalue * field.g
        return v
    p = field.packet
    s = p.width
    k = p.phase_gradient
    return k + (pts - p.center - k * t) * t / (4.0 * s**4 + t * t)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered samples of one particle's position."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        positions = np.asarray(self.positions, dtype=float)
        if times.ndim != 1 or positions.shape != (times.size, 3):
            raise ValueError("need times (M,) and positions (M, 3)")
        if times.size > 1 and not np.all(np.diff(times) > 0.0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)

    @property
    def endpoint(self) -> np.ndarray:
        return self.positions[-1]


def _rk4_step(field: VelocityField, r: np.ndarray, t: float, dt: float) -> np.ndarray:
    k1 = guidance_velocity(field, r, t)
    k2 = guidance_velocity(field, r + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = guidance_velocity(field, r + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = guidance_velocity(field, r + dt * k3, t + dt)
    step = (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(step)):
        raise IntegrationError(f"non-finite velocity near t={t!r}")
    return r + step


def integrate_trajectory(start, field: VelocityField, t0: float, t1: float,
                         step: float = 1e-2) -> Trajectory:
    """Integrate dr/dt = guidance_velocity with classic 4th-order Runge-Kutta.

    The final step is shortened to land exactly on t1.  In the uniform
    coupling regime the result is exact for any step size.
    """
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    if step <= 0.0:
        raise ValueError("step must be positive")
    r = np.array(start, dtype=float)
    if r.shape != (3,):
        raise ValueError("start must be a 3-vector")
    times = [t0]
    points = [r]
    t = t0
    while t < t1 - 1e-15 * max(1.0, abs(t1)):
        dt = min(step, t1 - t)
        r = _rk4_step(field, r, t, dt)
        t = min(t + dt, t1)
        times.append(t)
        points.append(r)
    return Trajectory(np.array(times), np.array(points))


def advect_positions(positions, field: VelocityField, t0: float, t1: float,
                     step: float = 1e-2) -> np.ndarray:
    """Endpoints at t1 of the trajectories seeded at ``positions`` (N, 3).

    The uniform coupling field is advanced in closed form (identical to what
    Runge-Kutta produces there, without per-step rounding); other fields get
    the vectorized Runge-Kutta loop.
    """
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    pts = np.array(positions, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("positions must be (N, 3)")
    if field.regime == COUPLING:
        out = pts
        out[:, 0] += field.eigenvalue * field.g * (t1 - t0)
        return out
    t = t0
    while t < t1 - 1e-15 * max(1.0, abs(t1)):
        dt = min(step, t1 - t)
        pts = _rk4_step(field, pts, t, dt)
        t += dt
    return pts


@dataclass(frozen=True, eq=False)
class DensityHistogram:
    """Uniform 1-D histogram: left edge ``origin``, ``bin_width``, bin weights."""

    origin: float
    bin_width: float
    weights: np.ndarray

    def __post_init__(self):
        if not (math.isfinite(self.origin) and self.bin_width > 0.0):
            raise ValueError("need finite origin and positive bin width")
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-D array")
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise ValueError("bin weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def edges(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(self.weights.size + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.origin + self.bin_width * (np.arange(self.weights.size) + 0.5)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def probabilities(self) -> np.ndarray:
        total = self.total
        if total <= 0.0:
            raise ValueError("histogram has zero total weight")
        return self.weights / total

    def density(self) -> np.ndarray:
        """Bin values normalized to integrate to one."""
        return self.probabilities() / self.bin_width

    def same_grid(self, other: "DensityHistogram") -> bool:
        return (
            self.weights.size == other.weights.size
            and abs(self.origin - other.origin) < 1e-9 * self.bin_width
            and abs(self.bin_width - other.bin_width) < 1e-12 * self.bin_width
        )


def grid_for(values: np.ndarray, bin_width: float,
             lo: float | None = None, hi: float | None = None) -> tuple[float, int]:
    """Bin-grid (origin, count) anchored at integer multiples of bin_width,
    covering [lo, hi] (data range by default)."""
    if bin_width <= 0.0:
        raise ValueError("bin width must be positive")
    values = np.asarray(values, dtype=float)
    lo = float(np.min(values)) if lo is None else float(lo)
    hi = float(np.max(values)) if hi is None else float(hi)
    first = math.floor(lo / bin_width)
    last = math.floor(hi / bin_width)
    return first * bin_width, int(last - first + 1)


def histogram_on_grid(values, origin: float, bin_width: float, count: int,
                      total_weight: float | None = None) -> DensityHistogram:
    """Histogram scalar samples onto an explicit uniform grid.

    Samples outside the grid are an error, never silently dropped, so total
    weight is conserved exactly.  A sample landing exactly on the last edge
    belongs to the last bin.
    """
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size == 0:
        raise ValueError("cannot histogram an empty sample")
    idx = np.floor((vals - origin) / bin_width).astype(np.int64)
    idx[idx == count] = count - 1
    if np.any(idx < 0) or np.any(idx >= count):
        raise ValueError("samples fall outside the requested histogram window")
    weights = np.bincount(idx, minlength=count).astype(float)
    if total_weight is not None:
        weights *= total_weight / vals.size
    return DensityHistogram(origin, bin_width, weights)


def histogram_values(values, bin_width: float, *, lo: float | None = None,
                     hi: float | None = None, total_weight: float | None = None
                     ) -> DensityHistogram:
    """Histogram scalar samples, sizing the grid from the data by default."""
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size == 0:
        raise ValueError("cannot histogram an empty sample")
    origin, count = grid_for(vals, bin_width, lo, hi)
    return histogram_on_grid(vals, origin, bin_width, count, total_weight)


def transport_density(branches, t: float, *, t0: float = 0.0, axis: int = 0,
                      bin_width: float = 0.1, step: float = 1e-2,
                      lo: float | None = None, hi: float | None = None
                      ) -> DensityHistogram:
    """Advect per-branch samples to time t and histogram the mixture.

    ``branches`` is an iterable of (weight, samples (N, 3), VelocityField);
    each branch rides its own field.  Total weight is conserved exactly:
    samples are neither created nor destroyed, and out-of-window samples
    raise rather than vanish.
    """
    moved = []
    for weight, samples, field in branches:
        if weight < 0.0:
            raise ValueError("branch weights must be nonnegative")
        endpoints = advect_positions(samples, field, t0, t, step=step)
        moved.append((float(weight), endpoints[:, axis]))
    if not moved:
        raise ValueError("no branches given")
    all_values = np.concatenate([v for _, v in moved])
    origin, count = grid_for(all_values, bin_width, lo, hi)
    weights = np.zeros(count)
    for weight, values in moved:
        part = histogram_on_grid(values, origin, bin_width, count,
                                 total_weight=weight)
        weights += part.weights
    return DensityHistogram(origin, bin_width, weights)
