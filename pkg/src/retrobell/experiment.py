"""One full Bell run: sampling, coupling evolution, advection, plate readout.

The causal order of the program mirrors the model: the future settings are
plain inputs to preparation-time sampling (no mechanism is modelled), the
sampled labels fix each particle's branch, the branch packet carries the
particle to one side of the plate, and readout infers the outcome from the
landing position alone.  Outcomes at one wing are a deterministic function
of that wing's label, packet, start position, and local inputs (a or b,
g, T) — never of anything at the other wing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ensemble as ens
from .dynamics import COUPLING, VelocityField, advect_positions
from .ensemble import EnsembleSpec, OnticEnsemble, branch_samplers
from .packet import branch_overlap, translate_under_coupling
from .spin import LABELS

#: Required clearance between a particle's possible start offsets and the
#: branch displacement g*T, in units of the packet x-width.
SEPARATION_WIDTHS = 6.0

#: Maximum tolerated min-density overlap of the two final branch packets.
OVERLAP_CEILING = 1e-6


class SeparationError(RuntimeError):
    """Raised when a run would end with ambiguous plate readout."""


@dataclass(frozen=True, eq=False)
class WingRecord:
    """Readout of one particle at one wing."""

    wing: int
    final_position: np.ndarray
    inferred_outcome: int
    true_label: int  # the sampled ontic label, kept for diagnostics only


@dataclass(frozen=True, eq=False)
class WingRecordBatch:
    """All records of one wing, column-wise."""

    wing: int
    final_positions: np.ndarray
    outcomes: np.ndarray
    true_labels: np.ndarray

    def __len__(self) -> int:
        return self.outcomes.size

    def record(self, k: int) -> WingRecord:
        return WingRecord(self.wing, self.final_positions[k].copy(),
                          int(self.outcomes[k]), int(self.true_labels[k]))

    def plus_rate(self) -> tuple[float, float]:
        """Fraction of +1 outcomes with its binomial standard error."""
        n = self.outcomes.size
        p = float(np.mean(self.outcomes == 1))
        return p, math.sqrt(max(p * (1.0 - p), 0.0) / n)


@dataclass(frozen=True, eq=False)
class RunDiagnostics:
    readout_errors: int
    branch_overlap_wing1: float
    branch_overlap_wing2: float


@dataclass(frozen=True, eq=False)
class RunResult:
    """Everything a completed run produces."""

    spec: EnsembleSpec
    wing1: WingRecordBatch
    wing2: WingRecordBatch
    diagnostics: RunDiagnostics

    @property
    def pair_count(self) -> int:
        return len(self.wing1)

    def records(self, k: int) -> tuple[WingRecord, WingRecord]:
        return self.wing1.record(k), self.wing2.record(k)

    def outcome_pairs(self) -> np.ndarray:
        """(N, 2) array of inferred outcomes, the input to all estimators."""
        return np.column_stack([self.wing1.outcomes, self.wing2.outcomes])

    def correlator(self) -> tuple[float, float]:
        return ens.estimate_correlator(self.outcome_pairs())

    def wing(self, which: int) -> WingRecordBatch:
        if which == 1:
            return self.wing1
        if which == 2:
            return self.wing2
        raise ValueError("wing must be 1 or 2")

    def spot_histogram(self, wing: int, condition: int | None = None, *,
                       bin_width: float = 0.25, lo: float | None = None,
                       hi: float | None = None):
        batch = self.wing(wing)
        return ens.marginal_position_density(
            batch.final_positions, batch.outcomes, condition,
            bin_width=bin_width, lo=lo, hi=hi)


def plate_readout(final_position, plane_x: float) -> int:
    """Outcome from where the particle struck the plate: the sign of its
    x-coordinate relative to the wing's decision plane (ties break to +1)."""
    x = np.asarray(final_position, dtype=float)
    value = x[..., 0] if x.ndim else float(x)
    return 1 if float(value) >= plane_x else -1


def _readout_batch(xs: np.ndarray, plane_x: float) -> np.ndarray:
    return np.where(xs >= plane_x, 1, -1).astype(np.int8)


def wing_outcomes(labels: np.ndarray, positions: np.ndarray, g: float,
                  duration: float, plane_x: float) -> tuple[np.ndarray, np.ndarray]:
    """Advect one wing's particles along their branch fields and read the
    plate.  Uses this wing's data only; returns (final_positions, outcomes)."""
    final = positions.copy()
    for eigenvalue in (1, -1):
        mask = labels == eigenvalue
        if not np.any(mask):
            continue
        field = VelocityField(eigenvalue, g, COUPLING)
        final[mask] = advect_positions(final[mask], field, 0.0, duration)
    return final, _readout_batch(final[:, 0], plane_x)


def _wing_margin(spec: EnsembleSpec, wing: int) -> float:
    """Worst-case |x - plane| a particle of this wing can start with, plus
    the Gaussian tail allowance where the support is unbounded."""
    packet = spec.packet1 if wing == 1 else spec.packet2
    plane = packet.center[0]
    margins = []
    for label in LABELS:
        sampler = branch_samplers(spec, label)[wing - 1]
        lo, hi = sampler.x_extent(tails=SEPARATION_WIDTHS)
        margins.append(max(abs(lo - plane), abs(hi - plane)))
    return max(margins)


def check_separation(spec: EnsembleSpec) -> None:
    """Refuse configurations whose readout would be ambiguous.

    Two certificates must hold per wing: the branch displacement g*T must
    exceed every possible start offset from the decision plane (with a
    6-width tail allowance for unbounded densities), and the two final
    branch packets must overlap by less than OVERLAP_CEILING.
    """
    displacement = spec.g * spec.duration
    for wing, packet in ((1, spec.packet1), (2, spec.packet2)):
        margin = _wing_margin(spec, wing)
        if displacement < margin:
            raise SeparationError(
                f"wing {wing}: branch displacement g*T = {spec.g!r} * "
                f"{spec.duration!r} = {displacement!r} is below the required "
                f"start-position margin {margin!r} (packet x-width "
                f"{packet.width[0]!r}); increase g or T, or narrow the "
                f"initial densities")
        plus = translate_under_coupling(packet, 1, spec.g, spec.duration)
        minus = translate_under_coupling(packet, -1, spec.g, spec.duration)
        overlap = branch_overlap(plus, minus)
        if overlap > OVERLAP_CEILING:
            raise SeparationError(
                f"wing {wing}: final branch packets overlap by {overlap:.3e} "
                f"(> {OVERLAP_CEILING}); g*T = {displacement!r} is too small "
                f"for packet x-width {packet.width[0]!r}")


def run_experiment(spec: EnsembleSpec) -> RunResult:
    """Run one complete ensemble and return per-pair records.

    Readout validity is certified up front (SeparationError otherwise).
    The prepared state's branch structure is never consulted to generate
    outcomes; it only fixes the sampling weights.
    """
    check_separation(spec)
    sampled: OnticEnsemble = ens.sample_ontic_states(spec)

    final1, out1 = wing_outcomes(sampled.i1, sampled.r1, spec.g, spec.duration,
                                 spec.packet1.center[0])
    final2, out2 = wing_outcomes(sampled.i2, sampled.r2, spec.g, spec.duration,
                                 spec.packet2.center[0])

    errors = int(np.sum(out1 != sampled.i1) + np.sum(out2 != sampled.i2))
    diagnostics = RunDiagnostics(
        readout_errors=errors,
        branch_overlap_wing1=branch_overlap(
            translate_under_coupling(spec.packet1, 1, spec.g, spec.duration),
            translate_under_coupling(spec.packet1, -1, spec.g, spec.duration)),
        branch_overlap_wing2=branch_overlap(
            translate_under_coupling(spec.packet2, 1, spec.g, spec.duration),
            translate_under_coupling(spec.packet2, -1, spec.g, spec.duration)),
    )
    wing1 = WingRecordBatch(1, final1, out1, sampled.i1.copy())
    wing2 = WingRecordBatch(2, final2, out2, sampled.i2.copy())
    return RunResult(spec, wing1, wing2, diagnostics)
