"""Hidden-variable ensembles: samplers and statistical estimators.

An ensemble is defined by a prepared two-qubit state, the two future
measurement directions, the initial packets, and optional non-equilibrium
overrides.  Settings enter the sampler as plain inputs: the label
distribution is conditioned on them, which is the whole point of the model.

Equilibrium draws joint labels from the Born weights of the prepared state
and positions from the packet densities.  Two override channels exist,
mirroring the two hidden-variable distributions:

* ``weight_override`` replaces the label distribution (outcome rates move,
  spot shapes do not);
* ``position_override`` replaces the per-branch position densities (spot
  shapes move, outcome rates do not).

Sampling is chunked, with one deterministic RNG substream per fixed-size
chunk, so results are bit-for-bit reproducible for a given seed no matter
how many worker threads merge the chunks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .dynamics import DensityHistogram, grid_for, histogram_on_grid, histogram_values
from .packet import GaussianPacket, PacketPairSnapshot, sample_positions
from .spin import (
    LABELS,
    BornWeights,
    TwoQubitState,
    UnitVector3,
    born_weights,
    exact_correlator,
)
from .stats import (
    bootstrap_tv,
    mean_and_stderr,
    perm_tv_replicates,
    tv_distance,
    tv_replicates,
)

_CHUNK = 1 << 16
_SAMPLE_TAG = 11
_RUN_TAG = 23
_BOOT_TAG = 37


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic child seed for sub-runs and bootstrap streams."""
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in key]])
    return int(ss.generate_state(1, np.uint64)[0])


def worker_count() -> int:
    """Worker threads from RETROBELL_THREADS (0 = auto, unset = 1)."""
    raw = os.environ.get("RETROBELL_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"RETROBELL_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise ValueError("RETROBELL_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Position sampler palette (declarative, so scenario files stay data)

@dataclass(frozen=True, eq=False)
class GaussianSampler:
    """Axis-aligned normal density."""

    center: np.ndarray = (0.0, 0.0, 0.0)
    width: np.ndarray = (1.0, 1.0, 1.0)

    def __post_init__(self):
        packet = GaussianPacket(self.center, self.width)
        object.__setattr__(self, "center", packet.center)
        object.__setattr__(self, "width", packet.width)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.center + self.width * rng.standard_normal((n, 3))

    def x_extent(self, tails: float = 8.0) -> tuple[float, float]:
        return (self.center[0] - tails * self.width[0],
                self.center[0] + tails * self.width[0])

    def x_density(self, x) -> np.ndarray:
        z = (np.asarray(x, dtype=float) - self.center[0]) / self.width[0]
        return np.exp(-0.5 * z * z) / (self.width[0] * math.sqrt(2.0 * math.pi))

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "center": list(self.center),
                "width": list(self.width)}


@dataclass(frozen=True, eq=False)
class BoxSampler:
    """Uniform density on an axis-aligned box."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float)
        hi = np.array(self.hi, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("box bounds must be 3-vectors")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("box bounds must be finite")
        if np.any(hi <= lo):
            raise ValueError("box must have positive extent on every axis")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random((n, 3))

    def x_extent(self, tails: float = 8.0) -> tuple[float, float]:
        return float(self.lo[0]), float(self.hi[0])

    def x_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo[0]) & (x <= self.hi[0])
        return np.where(inside, 1.0 / (self.hi[0] - self.lo[0]), 0.0)

    def to_dict(self) -> dict:
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True, eq=False)
class MixtureSampler:
    """Finite mixture of Gaussian components."""

    weights: tuple[float, ...]
    components: tuple[GaussianSampler, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if len(w) != len(self.components) or not w:
            raise ValueError("need one weight per component")
        if any(v < 0.0 for v in w) or abs(sum(w) - 1.0) > 1e-10:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", tuple(self.components))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        which = rng.choice(len(self.components), size=n, p=np.array(self.weights))
        out = np.empty((n, 3))
        for idx, comp in enumerate(self.components):
            mask = which == idx
            count = int(mask.sum())
            if count:
                out[mask] = comp.sample(rng, count)
        return out

    def x_extent(self, tails: float = 8.0) -> tuple[float, float]:
        spans = [c.x_extent(tails) for c in self.components]
        return min(s[0] for s in spans), max(s[1] for s in spans)

    def x_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return sum(w * c.x_density(x) for w, c in zip(self.weights, self.components))

    def to_dict(self) -> dict:
        return {
            "kind": "mixture",
            "weights": list(self.weights),
            "components": [c.to_dict() for c in self.components],
        }


PositionSampler = GaussianSampler | BoxSampler | MixtureSampler


def parse_sampler(spec: Mapping) -> PositionSampler:
    kind = spec.get("kind")
    if kind == "gaussian":
        return GaussianSampler(spec.get("center", (0.0, 0.0, 0.0)),
                               spec.get("width", (1.0, 1.0, 1.0)))
    if kind == "box":
        return BoxSampler(spec["lo"], spec["hi"])
    if kind == "mixture":
        return MixtureSampler(
            tuple(spec["weights"]),
            tuple(parse_sampler(c) for c in spec["components"]),
        )
    raise ValueError(f"unknown sampler kind: {kind!r}")


def cross_shifted_positions(shift: float, width=(1.0, 1.0, 1.0),
                            center=(0.0, 0.0, 0.0)) -> dict:
    """Per-branch shifted-Gaussian override: each wing's density is displaced
    along x by ``shift`` times the *other* wing's label.

    Outcome rates stay untouched (each wing's label marginal is unchanged)
    while the unconditioned spot shape at one wing becomes a label-weighted
    mixture that moves with the remote setting.
    """
    center = np.asarray(center, dtype=float)
    dx = np.array([shift, 0.0, 0.0])
    override = {}
    for i1, i2 in LABELS:
        override[(i1, i2)] = (
            GaussianSampler(center + i2 * dx, width),
            GaussianSampler(center + i1 * dx, width),
        )
    return override


# ---------------------------------------------------------------------------
# Ensemble specification and ontic sampling

@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    """Complete, reproducible description of one statistical ensemble."""

    state: TwoQubitState
    a: UnitVector3
    b: UnitVector3
    pairs: int
    seed: int
    packet1: GaussianPacket = GaussianPacket()
    packet2: GaussianPacket = GaussianPacket()
    g: float = 1.0
    duration: float = 10.0
    #: None for equilibrium, an explicit BornWeights table, or the named
    #: rule "outcome-bias" (re-derived from whatever settings are active,
    #: so setting scans keep the preset's meaning).
    weight_override: BornWeights | str | None = None
    position_override: Mapping[tuple[int, int],
                               tuple[PositionSampler, PositionSampler]] | None = None

    def __post_init__(self):
        if self.pairs < 1:
            raise ValueError("pairs must be >= 1")
        if not (math.isfinite(self.g) and self.g > 0.0):
            raise ValueError("coupling g must be positive")
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise ValueError("duration must be positive")
        if int(self.seed) < 0:
            raise ValueError("seed must be a nonnegative integer")
        object.__setattr__(self, "seed", int(self.seed))
        if isinstance(self.weight_override, str) and self.weight_override != "outcome-bias":
            raise ValueError(f"unknown weight rule: {self.weight_override!r}")
        if self.position_override is not None:
            override = dict(self.position_override)
            for label in override:
                if label not in LABELS:
                    raise ValueError(f"unknown branch label: {label!r}")
            object.__setattr__(self, "position_override", override)

    def with_updates(self, **changes) -> "EnsembleSpec":
        return replace(self, **changes)


def ontic_weights(spec: EnsembleSpec) -> BornWeights:
    """The label distribution the sampler actually uses."""
    if spec.weight_override is None:
        return born_weights(spec.state, spec.a, spec.b)
    if spec.weight_override == "outcome-bias":
        return outcome_bias_weights(born_weights(spec.state, spec.a, spec.b))
    return spec.weight_override


@dataclass(frozen=True, eq=False)
class OnticState:
    """The complete hidden-variable description of one pair."""

    i1: int
    i2: int
    packets: PacketPairSnapshot
    r1: np.ndarray
    r2: np.ndarray


@dataclass(frozen=True, eq=False)
class OnticEnsemble:
    """Column-wise store of sampled ontic states (one row per pair)."""

    i1: np.ndarray
    i2: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    packets: PacketPairSnapshot

    def __len__(self) -> int:
        return self.i1.size

    def state(self, k: int) -> OnticState:
        return OnticState(int(self.i1[k]), int(self.i2[k]), self.packets,
                          self.r1[k].copy(), self.r2[k].copy())

    def label_counts(self) -> np.ndarray:
        """Counts over LABELS order."""
        return np.array([
            int(np.sum((self.i1 == i1) & (self.i2 == i2))) for i1, i2 in LABELS
        ])


def branch_samplers(spec: EnsembleSpec, label) -> tuple[PositionSampler, PositionSampler]:
    if spec.position_override is not None and label in spec.position_override:
        return spec.position_override[label]
    return (GaussianSampler(spec.packet1.center, spec.packet1.width),
            GaussianSampler(spec.packet2.center, spec.packet2.width))


def _sample_chunk(spec: EnsembleSpec, probs: np.ndarray, chunk_index: int,
                  size: int):
    rng = np.random.default_rng(
        np.random.SeedSequence([spec.seed, _SAMPLE_TAG, chunk_index])
    )
    which = rng.choice(4, size=size, p=probs)
    i1 = np.array([lab[0] for lab in LABELS], dtype=np.int8)[which]
    i2 = np.array([lab[1] for lab in LABELS], dtype=np.int8)[which]
    if spec.position_override is None:
        r1 = sample_positions(spec.packet1, rng, size)
        r2 = sample_positions(spec.packet2, rng, size)
    else:
        r1 = np.empty((size, 3))
        r2 = np.empty((size, 3))
        for idx, label in enumerate(LABELS):
            mask = which == idx
            count = int(mask.sum())
            if count == 0:
                continue
            s1, s2 = branch_samplers(spec, label)
            r1[mask] = s1.sample(rng, count)
            r2[mask] = s2.sample(rng, count)
    return i1, i2, r1, r2


def sample_ontic_states(spec: EnsembleSpec) -> OnticEnsemble:
    """Draw the full ensemble: joint labels from the active weight
    distribution, positions from the per-branch densities.

    Deterministic given the seed; chunk substreams make the result
    independent of the worker-thread count.
    """
    probs = ontic_weights(spec).as_array()
    n = spec.pairs
    i1 = np.empty(n, dtype=np.int8)
    i2 = np.empty(n, dtype=np.int8)
    r1 = np.empty((n, 3))
    r2 = np.empty((n, 3))

    chunks = [(k, start, min(_CHUNK, n - start))
              for k, start in enumerate(range(0, n, _CHUNK))]

    def fill(chunk):
        k, start, size = chunk
        c1, c2, p1, p2 = _sample_chunk(spec, probs, k, size)
        i1[start:start + size] = c1
        i2[start:start + size] = c2
        r1[start:start + size] = p1
        r2[start:start + size] = p2

    workers = worker_count()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, chunks))
    else:
        for chunk in chunks:
            fill(chunk)

    snapshot = PacketPairSnapshot(spec.packet1, spec.packet2, 0.0)
    return OnticEnsemble(i1, i2, r1, r2, snapshot)


# ---------------------------------------------------------------------------
# Non-equilibrium weight preset

def outcome_bias_weights(equilibrium: BornWeights) -> BornWeights:
    """Non-equilibrium label weights that move two thirds of the (-,-) weight
    onto the two (+, .) branches:

        w'(+,+) = w(+,+) + w(-,-)/3        w'(+,-) = w(+,-) + w(-,-)/3
        w'(-,+) = w(-,+)                   w'(-,-) = w(-,-)/3

    The redistribution keeps the total at 1 and leaves the per-branch spot
    shapes untouched, but the wing-1 rate of +1 outcomes becomes
    w(+,+) + w(+,-) + 2 w(-,-)/3, which for the singlet is (4 - a.b)/6 and
    therefore depends on the remote setting.  Degrades gracefully to the
    input when w(-,-) = 0.
    """
    w = equilibrium
    third = w[(-1, -1)] / 3.0
    return BornWeights((
        w[(1, 1)] + third,
        w[(1, -1)] + third,
        w[(-1, 1)],
        third,
    ))


def biased_plus_rate(state: TwoQubitState, a: UnitVector3, b: UnitVector3) -> float:
    """Closed-form wing-1 +1 rate under the outcome-bias weights."""
    return outcome_bias_weights(born_weights(state, a, b)).plus_rate(wing=1)


# ---------------------------------------------------------------------------
# Estimators

def estimate_correlator(records) -> tuple[float, float]:
    """Sample mean of outcome products and its standard error.

    ``records`` is an (N, 2) array-like of +-1 outcome pairs, N >= 2.
    """
    arr = np.asarray(records, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("need at least two (outcome1, outcome2) records")
    return mean_and_stderr(arr[:, 0] * arr[:, 1])


def exact_chsh(state: TwoQubitState, a: UnitVector3, a2: UnitVector3,
               b: UnitVector3, b2: UnitVector3) -> float:
    """Closed-form E(a,b) + E(a,b2) + E(a2,b) - E(a2,b2)."""
    return (
        exact_correlator(state, a, b)
        + exact_correlator(state, a, b2)
        + exact_correlator(state, a2, b)
        - exact_correlator(state, a2, b2)
    )


def chsh(template: EnsembleSpec, a: UnitVector3, a2: UnitVector3,
         b: UnitVector3, b2: UnitVector3) -> tuple[float, float]:
    """Monte Carlo CHSH from four independent runs sharing the template.

    Returns the combination E(a,b) + E(a,b2) + E(a2,b) - E(a2,b2) and its
    pooled standard error.  Each run gets a deterministic child seed.
    """
    from .experiment import run_experiment

    total = 0.0
    variance = 0.0
    settings = [(a, b, 1.0), (a, b2, 1.0), (a2, b, 1.0), (a2, b2, -1.0)]
    for k, (sa, sb, sign) in enumerate(settings):
        spec = template.with_updates(a=sa, b=sb,
                                     seed=derive_seed(template.seed, _RUN_TAG, k))
        result = run_experiment(spec)
        value, se = estimate_correlator(result.outcome_pairs())
        total += sign * value
        variance += se * se
    return total, math.sqrt(variance)


def measurement_independence_divergence(state: TwoQubitState,
                                        settings1: tuple[UnitVector3, UnitVector3],
                                        settings2: tuple[UnitVector3, UnitVector3]
                                        ) -> float:
    """Total-variation distance between the joint-label distributions under
    two setting pairs.  Any positive value certifies that the hidden-variable
    distribution depends on the settings."""
    w1 = born_weights(state, *settings1).as_array()
    w2 = born_weights(state, *settings2).as_array()
    return tv_distance(w1, w2)


def predicted_spot_density(spec: EnsembleSpec, wing: int, xs,
                           condition: int | None = None) -> np.ndarray:
    """Closed-form x-density of the plate spot at one wing after the run:
    the label-weighted mixture of the branch start densities, each shifted by
    its branch displacement.  Optionally conditioned on the local outcome."""
    if wing not in (1, 2):
        raise ValueError("wing must be 1 or 2")
    xs = np.asarray(xs, dtype=float)
    weights = ontic_weights(spec)
    shift = spec.g * spec.duration
    total = np.zeros_like(xs)
    norm = 0.0
    for label in LABELS:
        i = label[wing - 1]
        if condition is not None and i != condition:
            continue
        sampler = branch_samplers(spec, label)[wing - 1]
        total = total + weights[label] * sampler.x_density(xs - i * shift)
        norm += weights[label]
    if norm <= 0.0:
        raise ValueError("conditioning selects zero total weight")
    return total / norm if condition is not None else total


def marginal_position_density(positions, outcomes=None, condition: int | None = None,
                              *, axis: int = 0, bin_width: float = 0.25,
                              lo: float | None = None, hi: float | None = None
                              ) -> DensityHistogram:
    """Histogram of final positions along one axis, optionally conditioned on
    the local outcome (the shape of the spot on the plate)."""
    pts = np.asarray(positions, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("positions must be (N, 3)")
    values = pts[:, axis]
    if condition is not None:
        if outcomes is None:
            raise ValueError("conditioning requires outcomes")
        if condition not in (1, -1):
            raise ValueError("condition must be +1 or -1")
        values = values[np.asarray(outcomes) == condition]
        if values.size == 0:
            raise ValueError("no records with the requested outcome")
    return histogram_values(values, bin_width, lo=lo, hi=hi)


# ---------------------------------------------------------------------------
# Signalling scan

@dataclass(frozen=True)
class SignallingReport:
    """Divergence of one wing-1 observable between a baseline and a probe
    remote setting, with a bootstrap standard error.

    ``outcome-rate`` compares the binary outcome distributions.
    ``spot-shape`` compares the *outcome-conditioned* position densities,
    i.e. the shapes proper: each spot's normalized profile, combined over
    the two outcomes with pooled outcome probabilities as weights.  Rate
    changes therefore never leak into the shape observable.
    """

    observable: str  # "outcome-rate" or "spot-shape"
    wing: int
    divergence: float
    std_error: float
    baseline_settings: tuple[UnitVector3, UnitVector3]
    probe_settings: tuple[UnitVector3, UnitVector3]

    def __post_init__(self):
        if self.observable not in ("outcome-rate", "spot-shape"):
            raise ValueError(f"unknown observable: {self.observable!r}")
        if not 0.0 <= self.divergence <= 1.0:
            raise ValueError("divergence must lie in [0, 1]")


def _centered_divergence(observed: float, boot_reps: np.ndarray,
                         null_reps: np.ndarray) -> tuple[float, float]:
    """Divergence relative to the permutation null: the observed TV minus the
    null mean (clipped into [0, 1]), with the bootstrap and null spreads
    combined in quadrature as the standard error."""
    divergence = min(max(observed - float(null_reps.mean()), 0.0), 1.0)
    se = math.hypot(float(boot_reps.std(ddof=1)), float(null_reps.std(ddof=1)))
    return divergence, se


def _shape_divergence(base_batch, probe_batch, bin_width: float, n_boot: int,
                      rng: np.random.Generator) -> tuple[float, float]:
    """Pooled-outcome-weighted TV between conditioned spot shapes."""
    observed = 0.0
    boot_reps = np.zeros(n_boot)
    null_reps = np.zeros(n_boot)
    total_weight = 0.0
    n_base = base_batch.outcomes.size
    n_probe = probe_batch.outcomes.size
    for outcome in (1, -1):
        in_base = base_batch.outcomes == outcome
        in_probe = probe_batch.outcomes == outcome
        if not np.any(in_base) or not np.any(in_probe):
            continue
        weight = (in_base.sum() + in_probe.sum()) / (n_base + n_probe)
        xs_base = base_batch.final_positions[in_base, 0]
        xs_probe = probe_batch.final_positions[in_probe, 0]
        origin, count = grid_for(np.concatenate([xs_base, xs_probe]), bin_width)
        counts_base = histogram_on_grid(xs_base, origin, bin_width, count).weights
        counts_probe = histogram_on_grid(xs_probe, origin, bin_width, count).weights
        tv, reps = tv_replicates(counts_base, counts_probe, n_boot=n_boot, rng=rng)
        nulls = perm_tv_replicates(counts_base, counts_probe, n_perm=n_boot, rng=rng)
        observed += weight * tv
        boot_reps += weight * reps
        null_reps += weight * nulls
        total_weight += weight
    if total_weight <= 0.0:
        raise ValueError("no outcome is populated in both runs")
    return _centered_divergence(observed / total_weight,
                                boot_reps / total_weight,
                                null_reps / total_weight)


def signalling_scan(template: EnsembleSpec, probes, *, bin_width: float = 0.25,
                    n_boot: int = 1000) -> list[SignallingReport]:
    """Compare wing-1 outcome rates and spot shapes against the template's
    baseline remote setting, for each probe setting.

    Divergences are bias-corrected total-variation distances (see
    ``stats.debiased``), so a truly setting-independent observable reads as
    zero within error.  Runs get deterministic child seeds of the template
    seed; equilibrium ensembles show no divergence in either column, and the
    two override channels each move exactly one column.
    """
    from .experiment import run_experiment

    probes = list(probes)
    if not probes:
        raise ValueError("need at least one probe setting")
    baseline_spec = template.with_updates(seed=derive_seed(template.seed, _RUN_TAG, 0))
    baseline = run_experiment(baseline_spec)
    base_rate_counts = _outcome_counts(baseline.wing1.outcomes)

    reports = []
    for k, probe_b in enumerate(probes, start=1):
        spec = template.with_updates(b=probe_b,
                                     seed=derive_seed(template.seed, _RUN_TAG, k))
        probe = run_experiment(spec)
        rng_rate = np.random.default_rng(
            np.random.SeedSequence([template.seed, _BOOT_TAG, k, 0]))
        rng_shape = np.random.default_rng(
            np.random.SeedSequence([template.seed, _BOOT_TAG, k, 1]))

        probe_rate_counts = _outcome_counts(probe.wing1.outcomes)
        rate_observed, rate_boot = tv_replicates(
            base_rate_counts, probe_rate_counts, n_boot=n_boot, rng=rng_rate)
        rate_nulls = perm_tv_replicates(
            base_rate_counts, probe_rate_counts, n_perm=n_boot, rng=rng_rate)
        rate_tv, rate_se = _centered_divergence(rate_observed, rate_boot, rate_nulls)
        shape_tv, shape_se = _shape_divergence(baseline.wing1, probe.wing1,
                                               bin_width, n_boot, rng_shape)

        base_settings = (template.a, template.b)
        probe_settings = (template.a, probe_b)
        reports.append(SignallingReport("outcome-rate", 1, rate_tv, rate_se,
                                        base_settings, probe_settings))
        reports.append(SignallingReport("spot-shape", 1, shape_tv, shape_se,
                                        base_settings, probe_settings))
    return reports


def _outcome_counts(outcomes: np.ndarray) -> np.ndarray:
    return np.array([int(np.sum(outcomes == 1)), int(np.sum(outcomes == -1))])
