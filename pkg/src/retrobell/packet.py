"""Analytic single-particle Gaussian wavepackets in 3-space.

A packet is separable over the axes,

    chi(r) = prod_k (2 pi s_k^2)^(-1/4) exp(-(r_k - mu_k)^2 / (4 s_k^2)
                                            + i k_k (r_k - mu_k)),

so |chi|^2 is the normal density with per-axis standard deviation ``width``
and every quantity needed here (density, inner products, min-overlaps,
free spreading) has a closed form.  Natural units hbar = m = 1 throughout;
the coupling strength g and the widths are the only scales.

During the impulsive measurement coupling each eigenvalue branch translates
rigidly along x at speed eigenvalue * g; widths and phases never change, so
branch evolution is exact center arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

_XHAT = np.array([1.0, 0.0, 0.0])


def _as_vec3(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.shape == ():
        arr = np.full(3, float(arr))
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a scalar or length-3 vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GaussianPacket:
    """Normalized Gaussian wavepacket: center, per-axis width (std of |chi|^2),
    and a uniform phase gradient (momentum, zero by default: packet at rest)."""

    center: np.ndarray = (0.0, 0.0, 0.0)
    width: np.ndarray = (1.0, 1.0, 1.0)
    phase_gradient: np.ndarray = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec3(self.center, "center"))
        width = _as_vec3(self.width, "width")
        if np.any(width <= 0.0):
            raise ValueError("width must be positive on every axis")
        object.__setattr__(self, "width", width)
        object.__setattr__(
            self, "phase_gradient", _as_vec3(self.phase_gradient, "phase_gradient")
        )


def density(p: GaussianPacket, r) -> np.ndarray | float:
    """|chi(r)|^2 for a single 3-vector or an (N, 3) array of points."""
    pts = np.asarray(r, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ValueError("points must have 3 components")
    z = (pts - p.center) / p.width
    norm = np.prod(p.width) * (2.0 * math.pi) ** 1.5
    out = np.exp(-0.5 * np.sum(z * z, axis=-1)) / norm
    return float(out[0]) if single else out


def sample_positions(p: GaussianPacket, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw n positions from |chi|^2."""
    return p.center + p.width * rng.standard_normal((n, 3))


def translate_under_coupling(p: GaussianPacket, eigenvalue: int, g: float,
                             dt: float) -> GaussianPacket:
    """Rigid branch translation by eigenvalue * g * dt along x.

    Exact while the coupling dominates the Hamiltonian: the evolution
    operator restricted to one eigenvalue branch is a pure x-translation.
    """
    if eigenvalue not in (1, -1):
        raise ValueError("eigenvalue must be +1 or -1")
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    return GaussianPacket(
        center=p.center + (eigenvalue * g * dt) * _XHAT,
        width=p.width,
        phase_gradient=p.phase_gradient,
    )


@dataclass(frozen=True, eq=False)
class PacketPairSnapshot:
    """The two single-particle packets of one pair at a common time."""

    packet1: GaussianPacket
    packet2: GaussianPacket
    time: float = 0.0


def epistemic_branch_centers(state, a, b, g: float, dt: float):
    """The four branches of the prepared state's configuration-space packet
    after coupling time dt: (weight, x-shift of particle 1, x-shift of
    particle 2), one entry per joint label in LABELS order.

    Branch weights coincide with ``born_weights`` for every input; the
    shifts are eigenvalue * g * dt along x for each particle.
    """
    from .spin import LABELS, born_weights

    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    w = born_weights(state, a, b)
    return [
        (w[(i1, i2)], (i1 * g * dt) * _XHAT, (i2 * g * dt) * _XHAT)
        for i1, i2 in LABELS
    ]


def amplitude_overlap(p: GaussianPacket, q: GaussianPacket) -> complex:
    """Inner product <chi_p | chi_q> of two packet amplitudes (closed form)."""
    out = 1.0 + 0.0j
    for axis in range(3):
        s1, s2 = p.width[axis], q.width[axis]
        m1, m2 = p.center[axis], q.center[axis]
        k1, k2 = p.phase_gradient[axis], q.phase_gradient[axis]
        alpha = 1.0 / (4.0 * s1 * s1) + 1.0 / (4.0 * s2 * s2)
        beta = m1 / (2.0 * s1 * s1) + m2 / (2.0 * s2 * s2) + 1j * (k2 - k1)
        gamma = (
            -m1 * m1 / (4.0 * s1 * s1)
            - m2 * m2 / (4.0 * s2 * s2)
            + 1j * (k1 * m1 - k2 * m2)
        )
        prefactor = (2.0 * math.pi * s1 * s2) ** -0.5
        out *= prefactor * math.sqrt(math.pi / alpha) * np.exp(
            beta * beta / (4.0 * alpha) + gamma
        )
    return complex(out)


def branch_overlap(p_plus: GaussianPacket, p_minus: GaussianPacket) -> float:
    """Integral of min(|chi_+|^2, |chi_-|^2) over 3-space, in [0, 1].

    Certifies that two branches are distinguishable by position readout.
    Equal-width packets admit a closed form: whitening the coordinates makes
    both densities unit isotropic Gaussians separated by the Mahalanobis
    distance d, whence the overlap is erfc(d / (2 sqrt 2)).  Unequal widths
    fall back to a tensor-grid quadrature.
    """
    if np.allclose(p_plus.width, p_minus.width, rtol=1e-12, atol=0.0):
        delta = (p_plus.center - p_minus.center) / p_plus.width
        d = float(np.sqrt(np.sum(delta * delta)))
        return float(erfc(d / (2.0 * math.sqrt(2.0))))
    return _overlap_quadrature(p_plus, p_minus)


def _overlap_quadrature(p: GaussianPacket, q: GaussianPacket, points: int = 161) -> float:
    axes = []
    for k in range(3):
        lo = min(p.center[k] - 8 * p.width[k], q.center[k] - 8 * q.width[k])
        hi = max(p.center[k] + 8 * p.width[k], q.center[k] + 8 * q.width[k])
        axes.append(np.linspace(lo, hi, points))
    # Separable densities: build each as an outer product of 1-D factors.
    def cube(packet):
        factors = [
            np.exp(-0.5 * ((ax - packet.center[k]) / packet.width[k]) ** 2)
            / (packet.width[k] * math.sqrt(2.0 * math.pi))
            for k, ax in enumerate(axes)
        ]
        return np.einsum("i,j,k->ijk", *factors)

    volume = np.prod([ax[1] - ax[0] for ax in axes])
    return float(np.minimum(cube(p), cube(q)).sum() * volume)


def spread_width(width, t: float) -> np.ndarray:
    """Per-axis width of a freely evolving packet: s(t) = sqrt(s^2 + (t/2s)^2)."""
    w = np.asarray(width, dtype=float)
    return np.sqrt(w * w + (t / (2.0 * w)) ** 2)


def freely_spread(p: GaussianPacket, t: float) -> GaussianPacket:
    """Density-level free evolution: center drifts with the phase gradient
    and the width spreads; the growing phase curvature is not stored (it is
    reconstructed analytically where the guidance velocity needs it)."""
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    return GaussianPacket(
        center=p.center + p.phase_gradient * t,
        width=spread_width(p.width, t),
        phase_gradient=p.phase_gradient,
    )
