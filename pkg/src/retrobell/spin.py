"""Two-qubit spin algebra.

Measurement directions, Pauli eigenbases, two-qubit states in the fixed
z-product basis, and the joint-outcome weights |c_{i1 i2}|^2 that drive all
hidden-variable sampling.  Everything here is exact finite-dimensional linear
algebra; no Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

#: Joint eigenvalue labels (i1, i2) in the fixed ordering used everywhere:
#: (+,+), (+,-), (-,+), (-,-).
LABELS: tuple[tuple[int, int], ...] = ((1, 1), (1, -1), (-1, 1), (-1, -1))

_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class UnitVector3:
    """A direction in 3-space, normalized on construction.

    The zero vector is rejected; any other input is scaled to unit length,
    so ``UnitVector3(0, 0, 2)`` equals ``UnitVector3(0, 0, 1)``.
    """

    x: float
    y: float
    z: float

    def __post_init__(self):
        norm = math.sqrt(self.x**2 + self.y**2 + self.z**2)
        if not math.isfinite(norm) or norm < _ZERO_TOL:
            raise ValueError("direction must be a finite nonzero vector")
        object.__setattr__(self, "x", self.x / norm)
        object.__setattr__(self, "y", self.y / norm)
        object.__setattr__(self, "z", self.z / norm)

    @classmethod
    def from_polar(cls, theta: float, phi: float = 0.0) -> "UnitVector3":
        """Direction at polar angle ``theta`` from +z, azimuth ``phi``."""
        st = math.sin(theta)
        return cls(st * math.cos(phi), st * math.sin(phi), math.cos(theta))

    @classmethod
    def from_plane_angle_deg(cls, angle: float) -> "UnitVector3":
        """Direction in the z-x plane at ``angle`` degrees from +z."""
        return cls.from_polar(math.radians(angle))

    def dot(self, other: "UnitVector3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def pauli_dot(axis: UnitVector3) -> np.ndarray:
    """The 2x2 Hermitian matrix sigma . axis."""
    return axis.x * SIGMA_X + axis.y * SIGMA_Y + axis.z * SIGMA_Z


@dataclass(frozen=True, eq=False)
class SpinEigenstate:
    """Eigenvector of sigma . axis with eigenvalue +1 or -1.

    Amplitudes are expressed in the fixed z-basis and carry the global-phase
    convention that the first amplitude above the zero threshold is real
    positive, so construction is bit-for-bit reproducible.
    """

    axis: UnitVector3
    eigenvalue: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.eigenvalue not in (1, -1):
            raise ValueError("eigenvalue must be +1 or -1")
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2,):
            raise ValueError("amplitudes must be a length-2 complex vector")
        if abs(np.vdot(amps, amps).real - 1.0) > 1e-12:
            raise ValueError("amplitudes must be normalized")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    for component in vec:
        if abs(component) > 1e-9:
            return vec * (component.conjugate() / abs(component))
    raise ValueError("cannot fix phase of a null vector")


def eigenstate(axis: UnitVector3, eigenvalue: int) -> SpinEigenstate:
    """Eigenvector of sigma . axis for the requested eigenvalue.

    Computed by exact diagonalization of the 2x2 matrix, which is robust at
    the poles where the closed-form half-angle expressions degenerate.
    """
    if eigenvalue not in (1, -1):
        raise ValueError("eigenvalue must be +1 or -1")
    evals, evecs = np.linalg.eigh(pauli_dot(axis))
    idx = int(np.argmin(np.abs(evals - eigenvalue)))
    return SpinEigenstate(axis, eigenvalue, _fix_phase(evecs[:, idx]))


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    """Spin part of a two-particle state, as 4 amplitudes in the product
    basis |up up>, |up down>, |down up>, |down down> of the reference z-axis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (4,):
            raise ValueError("amplitudes must be a length-4 complex vector")
        if abs(np.vdot(amps, amps).real - 1.0) > 1e-12:
            raise ValueError("amplitudes must be normalized")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)


def singlet() -> TwoQubitState:
    """The spin-singlet state (|up down> - |down up>)/sqrt(2)."""
    s = 1.0 / math.sqrt(2.0)
    return TwoQubitState(np.array([0.0, s, -s, 0.0], dtype=complex))


def triplet() -> TwoQubitState:
    """The symmetric m=0 triplet state (|up down> + |down up>)/sqrt(2)."""
    s = 1.0 / math.sqrt(2.0)
    return TwoQubitState(np.array([0.0, s, s, 0.0], dtype=complex))


@dataclass(frozen=True)
class BornWeights:
    """Probabilities over the four joint labels, in LABELS order."""

    values: tuple[float, float, float, float]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != 4:
            raise ValueError("expected exactly four weights")
        if any(not math.isfinite(v) or v < -1e-12 for v in vals):
            raise ValueError("weights must be finite and nonnegative")
        if abs(sum(vals) - 1.0) > 1e-10:
            raise ValueError(f"weights must sum to 1, got {sum(vals)!r}")
        object.__setattr__(self, "values", tuple(max(v, 0.0) for v in vals))

    @classmethod
    def from_mapping(cls, mapping) -> "BornWeights":
        return cls(tuple(mapping[label] for label in LABELS))

    def __getitem__(self, label: tuple[int, int]) -> float:
        return self.values[LABELS.index(label)]

    def as_dict(self) -> dict[tuple[int, int], float]:
        return dict(zip(LABELS, self.values))

    def as_array(self) -> np.ndarray:
        return np.array(self.values)

    def plus_rate(self, wing: int = 1) -> float:
        """Marginal probability of the +1 label at the given wing."""
        if wing not in (1, 2):
            raise ValueError("wing must be 1 or 2")
        pick = 0 if wing == 1 else 1
        return sum(v for label, v in zip(LABELS, self.values) if label[pick] == 1)


def joint_amplitude(state: TwoQubitState, a: UnitVector3, b: UnitVector3,
                    i1: int, i2: int) -> complex:
    """Overlap <(|i1>_a x |i2>_b) | state>."""
    product = np.kron(eigenstate(a, i1).amplitudes, eigenstate(b, i2).amplitudes)
    return complex(np.vdot(product, state.amplitudes))


def born_weights(state: TwoQubitState, a: UnitVector3, b: UnitVector3) -> BornWeights:
    """Joint label distribution |<state|(|i1>_a x |i2>_b)>|^2 over LABELS."""
    return BornWeights(tuple(
        abs(joint_amplitude(state, a, b, i1, i2)) ** 2 for i1, i2 in LABELS
    ))


def exact_correlator(state: TwoQubitState, a: UnitVector3, b: UnitVector3) -> float:
    """Expectation of the product of the two +-1 outcomes.

    For the singlet this equals -a.b for every setting pair.
    """
    w = born_weights(state, a, b)
    return sum(i1 * i2 * w[(i1, i2)] for i1, i2 in LABELS)


def support_labels(state: TwoQubitState, a: UnitVector3, b: UnitVector3,
                   tol: float = 1e-12) -> frozenset[tuple[int, int]]:
    """Joint labels that carry weight above ``tol``.

    Two preparations subjected to the same settings share this support
    whenever all four weights are nonzero for both, which is what makes the
    hidden-variable description independent of the prepared state.
    """
    w = born_weights(state, a, b)
    return frozenset(label for label in LABELS if w[label] > tol)
