"""Batch command-line front end.

Scenario files in (one JSON document per scenario), machine-readable results
out: a schema-versioned JSON summary embedding the fully resolved config,
CSV tables (records, histograms, sweeps), and report figures rendered next
to the delimited output.  No wall-clock seeding anywhere: the scenario seed
is mandatory and reruns are byte-identical.

    retrobell exact --config scenario.json [--out DIR] [--seed N]
    retrobell run   --config scenario.json [--out DIR] [--seed N]
    retrobell scan  --config scenario.json [--out DIR] [--seed N]

Exit codes: 0 success, 2 config error, 3 physics refusal (readout would be
ambiguous), 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ensemble as ens
from .dynamics import DensityHistogram
from .ensemble import (
    EnsembleSpec,
    derive_seed,
    measurement_independence_divergence,
    ontic_weights,
    outcome_bias_weights,
    parse_sampler,
    signalling_scan,
)
from .experiment import SeparationError, run_experiment
from .packet import GaussianPacket
from .spin import (
    LABELS,
    BornWeights,
    TwoQubitState,
    UnitVector3,
    born_weights,
    exact_correlator,
    singlet,
    support_labels,
    triplet,
)

SCENARIO_SCHEMA = "retrobell-scenario/1"
SUMMARY_SCHEMA = "retrobell-summary/1"
RECORDS_SCHEMA = "retrobell-records/1"
HISTOGRAM_SCHEMA = "retrobell-histogram/1"
SWEEP_SCHEMA = "retrobell-sweep/1"
SIGNAL_SCHEMA = "retrobell-signal/1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_IO = 4

_SWEEP_TAG = 51

LABEL_KEYS = {"++": (1, 1), "+-": (1, -1), "-+": (-1, 1), "--": (-1, -1)}
_KEY_OF_LABEL = {v: k for k, v in LABEL_KEYS.items()}


class ConfigError(ValueError):
    """Scenario file is malformed; the message names the offending field."""


# ---------------------------------------------------------------------------
# Field parsers (each returns resolved object + canonical JSON form)

def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{path}: {message}")


def _parse_vector(value, path: str) -> UnitVector3:
    if isinstance(value, dict) and "angle_deg" in value:
        _require(set(value) == {"angle_deg"}, path, "unexpected keys beside angle_deg")
        return UnitVector3.from_plane_angle_deg(float(value["angle_deg"]))
    _require(isinstance(value, (list, tuple)) and len(value) == 3, path,
             "expected [x, y, z] or {\"angle_deg\": degrees}")
    try:
        return UnitVector3(*[float(v) for v in value])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _vector_json(v: UnitVector3) -> list[float]:
    return [v.x, v.y, v.z]


def _parse_state(value, path: str) -> tuple[TwoQubitState, object]:
    if value == "singlet":
        return singlet(), "singlet"
    if value == "triplet":
        return triplet(), "triplet"
    _require(isinstance(value, (list, tuple)) and len(value) == 4, path,
             "expected \"singlet\", \"triplet\", or 4 [re, im] amplitude pairs")
    try:
        amps = np.array([complex(float(re), float(im)) for re, im in value])
        state = TwoQubitState(amps)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return state, [[float(c.real), float(c.imag)] for c in state.amplitudes]


def _parse_packet(value, path: str) -> GaussianPacket:
    _require(isinstance(value, dict), path, "expected an object")
    unknown = set(value) - {"center", "width"}
    _require(not unknown, path, f"unexpected keys: {sorted(unknown)}")
    try:
        return GaussianPacket(center=value.get("center", (0.0, 0.0, 0.0)),
                              width=value.get("width", (1.0, 1.0, 1.0)))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _packet_json(p: GaussianPacket) -> dict:
    return {"center": [float(v) for v in p.center],
            "width": [float(v) for v in p.width]}


def _parse_weights(value, path: str):
    if value == "equilibrium":
        return None
    if value == "outcome-bias":
        return "outcome-bias"
    _require(isinstance(value, dict), path,
             "expected \"equilibrium\", \"outcome-bias\", or per-label weights")
    _require(set(value) == set(LABEL_KEYS), path,
             "per-label weights need exactly the keys ++, +-, -+, --")
    try:
        return BornWeights(tuple(float(value[_KEY_OF_LABEL[lab]]) for lab in LABELS))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _weights_json(weights) -> object:
    if weights is None:
        return "equilibrium"
    if isinstance(weights, str):
        return weights
    return {_KEY_OF_LABEL[lab]: float(weights[lab]) for lab in LABELS}


def _parse_positions(value, path: str):
    if value == "equilibrium":
        return None
    _require(isinstance(value, dict), path,
             "expected \"equilibrium\", a preset object, or explicit branches")
    if "preset" in value:
        _require(value["preset"] == "cross-shift", f"{path}.preset",
                 "the only named preset is \"cross-shift\"")
        unknown = set(value) - {"preset", "shift", "width", "center"}
        _require(not unknown, path, f"unexpected keys: {sorted(unknown)}")
        try:
            return ens.cross_shifted_positions(
                float(value.get("shift", 1.0)),
                width=value.get("width", (1.0, 1.0, 1.0)),
                center=value.get("center", (0.0, 0.0, 0.0)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
    _require(set(value) == {"branches"}, path,
             "expected {\"preset\": ...} or {\"branches\": ...}")
    branches = value["branches"]
    _require(isinstance(branches, dict), f"{path}.branches", "expected an object")
    override = {}
    for key, entry in branches.items():
        branch_path = f"{path}.branches.{key}"
        _require(key in LABEL_KEYS, branch_path, "branch keys are ++, +-, -+, --")
        _require(isinstance(entry, dict) and set(entry) == {"wing1", "wing2"},
                 branch_path, "expected {\"wing1\": sampler, \"wing2\": sampler}")
        try:
            override[LABEL_KEYS[key]] = (parse_sampler(entry["wing1"]),
                                         parse_sampler(entry["wing2"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{branch_path}: {exc}") from None
    _require(bool(override), f"{path}.branches", "needs at least one branch")
    return override


def _positions_json(override) -> object:
    if override is None:
        return "equilibrium"
    return {"branches": {
        _KEY_OF_LABEL[lab]: {"wing1": pair[0].to_dict(), "wing2": pair[1].to_dict()}
        for lab, pair in sorted(override.items(), key=lambda kv: LABELS.index(kv[0]))
    }}


def _parse_scan(value, path: str):
    _require(isinstance(value, dict), path, "expected an object")
    mode = value.get("mode")
    if mode == "bell-curve":
        unknown = set(value) - {"mode", "points"}
        _require(not unknown, path, f"unexpected keys: {sorted(unknown)}")
        points = value.get("points", 37)
        _require(isinstance(points, int) and points >= 2, f"{path}.points",
                 "need an integer >= 2")
        return {"mode": "bell-curve", "points": points}
    if mode == "signal":
        unknown = set(value) - {"mode", "probes"}
        _require(not unknown, path, f"unexpected keys: {sorted(unknown)}")
        probes = value.get("probes")
        _require(isinstance(probes, list) and len(probes) >= 1, f"{path}.probes",
                 "need a nonempty list of directions")
        parsed = [_parse_vector(p, f"{path}.probes[{k}]") for k, p in enumerate(probes)]
        return {"mode": "signal", "probes": parsed}
    raise ConfigError(f"{path}.mode: expected \"bell-curve\" or \"signal\"")


_KNOWN_FIELDS = {
    "schema", "name", "state", "a", "b", "pairs", "seed", "g", "duration",
    "packets", "weights", "positions", "bin_width", "out_dir", "plots",
    "chsh", "mi_probe_b", "scan",
}

_DEFAULT_CHSH = {
    "a": {"angle_deg": 90.0}, "a2": {"angle_deg": 0.0},
    "b": {"angle_deg": 45.0}, "b2": {"angle_deg": 135.0},
}


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """A fully resolved scenario: every default filled in, every shorthand
    expanded.  ``canonical`` is the JSON form embedded in summaries; parsing
    it back yields an identical config."""

    name: str
    state: TwoQubitState
    a: UnitVector3
    b: UnitVector3
    pairs: int
    seed: int
    g: float
    duration: float
    packet1: GaussianPacket
    packet2: GaussianPacket
    weights: object  # None | "outcome-bias" | BornWeights
    positions: object  # None | {label: (sampler, sampler)}
    bin_width: float
    out_dir: str | None
    plots: bool
    chsh: dict  # keys a, a2, b, b2 -> UnitVector3
    mi_probe_b: UnitVector3 | None
    scan: dict | None
    canonical: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        _require(isinstance(raw, dict), "scenario", "top level must be an object")
        unknown = set(raw) - _KNOWN_FIELDS
        _require(not unknown, "scenario", f"unknown fields: {sorted(unknown)}")
        schema = raw.get("schema", SCENARIO_SCHEMA)
        _require(schema == SCENARIO_SCHEMA, "schema",
                 f"expected {SCENARIO_SCHEMA!r}, got {schema!r}")
        _require("seed" in raw, "seed",
                 "a seed is mandatory (there is no wall-clock seeding)")
        seed = raw["seed"]
        _require(isinstance(seed, int) and seed >= 0, "seed",
                 "must be a nonnegative integer")

        state, state_json = _parse_state(raw.get("state", "singlet"), "state")
        a = _parse_vector(raw.get("a", [0.0, 0.0, 1.0]), "a")
        b = _parse_vector(raw.get("b", [0.0, 0.0, 1.0]), "b")

        pairs = raw.get("pairs", 100_000)
        _require(isinstance(pairs, int) and pairs >= 1, "pairs",
                 "must be an integer >= 1")

        g = raw.get("g", 1.0)
        duration = raw.get("duration", 10.0)
        for field_name, value in (("g", g), ("duration", duration)):
            _require(isinstance(value, (int, float)) and math.isfinite(value)
                     and value > 0, field_name, "must be a positive finite number")

        packets = raw.get("packets", {})
        _require(isinstance(packets, dict), "packets", "expected an object")
        if "wing1" in packets or "wing2" in packets:
            unknown = set(packets) - {"wing1", "wing2"}
            _require(not unknown, "packets", f"unexpected keys: {sorted(unknown)}")
            packet1 = _parse_packet(packets.get("wing1", {}), "packets.wing1")
            packet2 = _parse_packet(packets.get("wing2", {}), "packets.wing2")
        else:
            packet1 = packet2 = _parse_packet(packets, "packets")

        weights = _parse_weights(raw.get("weights", "equilibrium"), "weights")
        positions = _parse_positions(raw.get("positions", "equilibrium"), "positions")

        bin_width = raw.get("bin_width", 0.25)
        _require(isinstance(bin_width, (int, float)) and math.isfinite(bin_width)
                 and bin_width > 0, "bin_width", "must be a positive finite number")

        out_dir = raw.get("out_dir")
        _require(out_dir is None or isinstance(out_dir, str), "out_dir",
                 "must be a string path")
        plots = raw.get("plots", True)
        _require(isinstance(plots, bool), "plots", "must be true or false")

        chsh_raw = raw.get("chsh", _DEFAULT_CHSH)
        _require(isinstance(chsh_raw, dict) and set(chsh_raw) == {"a", "a2", "b", "b2"},
                 "chsh", "expected the four directions a, a2, b, b2")
        chsh = {key: _parse_vector(chsh_raw[key], f"chsh.{key}")
                for key in ("a", "a2", "b", "b2")}

        mi_probe = raw.get("mi_probe_b")
        mi_probe_b = None if mi_probe is None else _parse_vector(mi_probe, "mi_probe_b")

        scan = None if "scan" not in raw else _parse_scan(raw["scan"], "scan")

        name = raw.get("name", "scenario")
        _require(isinstance(name, str) and name != "", "name",
                 "must be a nonempty string")

        canonical = {
            "schema": SCENARIO_SCHEMA,
            "name": name,
            "state": state_json,
            "a": _vector_json(a),
            "b": _vector_json(b),
            "pairs": pairs,
            "seed": seed,
            "g": float(g),
            "duration": float(duration),
            "packets": {"wing1": _packet_json(packet1),
                        "wing2": _packet_json(packet2)},
            "weights": _weights_json(weights),
            "positions": _positions_json(positions),
            "bin_width": float(bin_width),
            "plots": plots,
            "chsh": {key: _vector_json(vec) for key, vec in chsh.items()},
        }
        if out_dir is not None:
            canonical["out_dir"] = out_dir
        if mi_probe_b is not None:
            canonical["mi_probe_b"] = _vector_json(mi_probe_b)
        if scan is not None:
            canonical["scan"] = (
                {"mode": "bell-curve", "points": scan["points"]}
                if scan["mode"] == "bell-curve"
                else {"mode": "signal",
                      "probes": [_vector_json(p) for p in scan["probes"]]})

        return cls(name=name, state=state, a=a, b=b, pairs=pairs, seed=seed,
                   g=float(g), duration=float(duration), packet1=packet1,
                   packet2=packet2, weights=weights, positions=positions,
                   bin_width=float(bin_width), out_dir=out_dir, plots=plots,
                   chsh=chsh, mi_probe_b=mi_probe_b, scan=scan,
                   canonical=canonical)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.canonical))

    def ensemble_spec(self) -> EnsembleSpec:
        return EnsembleSpec(
            state=self.state, a=self.a, b=self.b, pairs=self.pairs,
            seed=self.seed, packet1=self.packet1, packet2=self.packet2,
            g=self.g, duration=self.duration, weight_override=self.weights,
            position_override=self.positions)


def load_config(path: Path) -> ScenarioConfig:
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: parse error at line {exc.lineno} column {exc.colno}: "
            f"{exc.msg}") from None
    return ScenarioConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# Output writers (deterministic byte-for-byte)

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8", newline="\n")


def _write_csv(path: Path, schema: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# schema: {schema}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_histogram_csv(path: Path, hist: DensityHistogram) -> None:
    edges = hist.edges
    rows = ((edges[k], edges[k + 1], hist.weights[k])
            for k in range(hist.weights.size))
    _write_csv(path, HISTOGRAM_SCHEMA, ["bin_lo", "bin_hi", "weight"], rows)


# ---------------------------------------------------------------------------
# Commands

def _exact_document(cfg: ScenarioConfig) -> dict:
    weights = born_weights(cfg.state, cfg.a, cfg.b)
    biased = outcome_bias_weights(weights)
    chsh_value = ens.exact_chsh(cfg.state, cfg.chsh["a"], cfg.chsh["a2"],
                                cfg.chsh["b"], cfg.chsh["b2"])
    doc = {
        "schema": SUMMARY_SCHEMA,
        "command": "exact",
        "config": cfg.canonical,
        "results": {
            "dot_ab": cfg.a.dot(cfg.b),
            "correlator": exact_correlator(cfg.state, cfg.a, cfg.b),
            "born_weights": {_KEY_OF_LABEL[lab]: weights[lab] for lab in LABELS},
            "active_weights": {_KEY_OF_LABEL[lab]: ontic_weights(cfg.ensemble_spec())[lab]
                               for lab in LABELS},
            "wing1_plus_rate": ontic_weights(cfg.ensemble_spec()).plus_rate(1),
            "outcome_bias": {
                "weights": {_KEY_OF_LABEL[lab]: biased[lab] for lab in LABELS},
                "wing1_plus_rate": biased.plus_rate(1),
                "spot_mixture": [biased.plus_rate(1), 1.0 - biased.plus_rate(1)],
            },
            "chsh": {
                "value": chsh_value,
                "abs": abs(chsh_value),
                "settings": {key: _vector_json(vec) for key, vec in cfg.chsh.items()},
            },
            "support_labels": sorted(
                _KEY_OF_LABEL[lab] for lab in support_labels(cfg.state, cfg.a, cfg.b)),
        },
    }
    if cfg.mi_probe_b is not None:
        doc["results"]["measurement_independence"] = {
            "baseline": [_vector_json(cfg.a), _vector_json(cfg.b)],
            "probe": [_vector_json(cfg.a), _vector_json(cfg.mi_probe_b)],
            "divergence": measurement_independence_divergence(
                cfg.state, (cfg.a, cfg.b), (cfg.a, cfg.mi_probe_b)),
        }
    return doc


def cmd_exact(cfg: ScenarioConfig, out_dir: Path) -> dict:
    doc = _exact_document(cfg)
    _write_json(out_dir / "exact.json", doc)
    return doc


def cmd_run(cfg: ScenarioConfig, out_dir: Path) -> dict:
    spec = cfg.ensemble_spec()
    result = run_experiment(spec)

    records_path = out_dir / "records.csv"
    header = ["pair", "outcome1", "true1", "x1", "y1", "z1",
              "outcome2", "true2", "x2", "y2", "z2"]
    w1, w2 = result.wing1, result.wing2

    def record_rows():
        for k in range(result.pair_count):
            p1, p2 = w1.final_positions[k], w2.final_positions[k]
            yield (k, int(w1.outcomes[k]), int(w1.true_labels[k]),
                   p1[0], p1[1], p1[2],
                   int(w2.outcomes[k]), int(w2.true_labels[k]),
                   p2[0], p2[1], p2[2])

    _write_csv(records_path, RECORDS_SCHEMA, header, record_rows())

    histogram_files = {}
    histograms = {}
    for wing in (1, 2):
        batch = result.wing(wing)
        panel = {}
        for tag, key, condition in (("all", "all", None), ("plus", "+1", 1),
                                    ("minus", "-1", -1)):
            if condition is not None and not np.any(batch.outcomes == condition):
                continue
            hist = result.spot_histogram(wing, condition, bin_width=cfg.bin_width)
            name = f"hist_wing{wing}_{tag}.csv"
            _write_histogram_csv(out_dir / name, hist)
            histogram_files[f"wing{wing}_{tag}"] = name
            panel[key] = hist
        histograms[wing] = panel

    figures = []
    if cfg.plots:
        from . import plots

        for wing in (1, 2):
            panel = histograms[wing]
            span = panel["all"]
            xs = np.linspace(span.edges[0], span.edges[-1], 400)
            overlay = (xs, ens.predicted_spot_density(spec, wing, xs))
            name = f"spot_wing{wing}.png"
            plots.spot_figure(out_dir / name, panel, overlay,
                              title=f"{cfg.name}: wing {wing} plate density")
            figures.append(name)

    corr, corr_se = result.correlator()
    rate1, rate1_se = result.wing1.plus_rate()
    rate2, rate2_se = result.wing2.plus_rate()
    counts = {key: int(n) for key, n in zip(
        ("++", "+-", "-+", "--"),
        np.array([np.sum((w1.true_labels == l1) & (w2.true_labels == l2))
                  for l1, l2 in LABELS]))}
    doc = {
        "schema": SUMMARY_SCHEMA,
        "command": "run",
        "config": cfg.canonical,
        "results": {
            "pair_count": result.pair_count,
            "correlator": {"value": corr, "std_error": corr_se},
            "exact_correlator": exact_correlator(cfg.state, cfg.a, cfg.b),
            "wing1_plus_rate": {"value": rate1, "std_error": rate1_se},
            "wing2_plus_rate": {"value": rate2, "std_error": rate2_se},
            "exact_wing1_plus_rate": ontic_weights(spec).plus_rate(1),
            "label_counts": counts,
            "diagnostics": {
                "readout_errors": result.diagnostics.readout_errors,
                "branch_overlap_wing1": result.diagnostics.branch_overlap_wing1,
                "branch_overlap_wing2": result.diagnostics.branch_overlap_wing2,
            },
        },
        "outputs": {"records": "records.csv", "histograms": histogram_files,
                    "figures": figures},
    }
    _write_json(out_dir / "summary.json", doc)
    return doc


def _perpendicular_in_plane(a: UnitVector3) -> np.ndarray:
    seed_axis = np.array([1.0, 0.0, 0.0]) if abs(a.x) <= 0.9 else np.array([0.0, 1.0, 0.0])
    av = a.as_array()
    u = seed_axis - np.dot(seed_axis, av) * av
    return u / np.linalg.norm(u)


def _cmd_scan_bell_curve(cfg: ScenarioConfig, out_dir: Path) -> dict:
    points = cfg.scan["points"]
    dots = np.linspace(-1.0, 1.0, points)
    u = _perpendicular_in_plane(cfg.a)
    av = cfg.a.as_array()
    template = cfg.ensemble_spec()

    rows = []
    estimates, errors, exacts = [], [], []
    for k, dot in enumerate(dots):
        direction = dot * av + math.sqrt(max(1.0 - dot * dot, 0.0)) * u
        b_k = UnitVector3(*direction)
        spec = template.with_updates(b=b_k, seed=derive_seed(cfg.seed, _SWEEP_TAG, k))
        result = run_experiment(spec)
        est, se = result.correlator()
        exact = exact_correlator(cfg.state, cfg.a, b_k)
        rows.append((k, float(dot), b_k.x, b_k.y, b_k.z, est, se, exact))
        estimates.append(est)
        errors.append(se)
        exacts.append(exact)

    _write_csv(out_dir / "sweep.csv", SWEEP_SCHEMA,
               ["index", "dot", "bx", "by", "bz", "estimate", "std_error", "exact"],
               rows)
    figures = []
    if cfg.plots:
        from . import plots

        plots.bell_curve_figure(out_dir / "bell_curve.png", dots, estimates,
                                errors, exacts)
        figures.append("bell_curve.png")

    def z_score(est, se, exact):
        gap = abs(est - exact)
        if se > 0.0:
            return gap / se
        return 0.0 if gap < 1e-9 else math.inf

    max_z = max(z_score(e, se, x) for e, se, x in zip(estimates, errors, exacts))
    doc = {
        "schema": SUMMARY_SCHEMA,
        "command": "scan",
        "mode": "bell-curve",
        "config": cfg.canonical,
        "results": {"points": points, "max_abs_z": max_z},
        "outputs": {"table": "sweep.csv", "figures": figures},
    }
    _write_json(out_dir / "summary.json", doc)
    return doc


def _cmd_scan_signal(cfg: ScenarioConfig, out_dir: Path) -> dict:
    template = cfg.ensemble_spec()
    probes = cfg.scan["probes"]
    reports = signalling_scan(template, probes, bin_width=cfg.bin_width)

    rows = []
    for k, probe in enumerate(probes):
        for report in reports[2 * k:2 * k + 2]:
            rows.append((k, probe.x, probe.y, probe.z, report.observable,
                         report.divergence, report.std_error))
    _write_csv(out_dir / "signal.csv", SIGNAL_SCHEMA,
               ["probe", "bx", "by", "bz", "observable", "divergence", "std_error"],
               rows)

    figures = []
    if cfg.plots:
        from . import plots

        labels = [f"probe {k}" for k in range(len(probes))]
        rate = [r for r in reports if r.observable == "outcome-rate"]
        shape = [r for r in reports if r.observable == "spot-shape"]
        plots.signal_figure(out_dir / "signal_scan.png", labels,
                            [r.divergence for r in rate],
                            [r.std_error for r in rate],
                            [r.divergence for r in shape],
                            [r.std_error for r in shape])
        figures.append("signal_scan.png")

    doc = {
        "schema": SUMMARY_SCHEMA,
        "command": "scan",
        "mode": "signal",
        "config": cfg.canonical,
        "results": {
            "reports": [
                {
                    "probe": k, "observable": r.observable, "wing": r.wing,
                    "divergence": r.divergence, "std_error": r.std_error,
                }
                for k, pair in enumerate(zip(reports[::2], reports[1::2]))
                for r in pair
            ],
        },
        "outputs": {"table": "signal.csv", "figures": figures},
    }
    _write_json(out_dir / "summary.json", doc)
    return doc


def cmd_scan(cfg: ScenarioConfig, out_dir: Path) -> dict:
    if cfg.scan is None:
        raise ConfigError("scan: this command needs a scan block in the scenario")
    if cfg.scan["mode"] == "bell-curve":
        return _cmd_scan_bell_curve(cfg, out_dir)
    return _cmd_scan_signal(cfg, out_dir)


# ---------------------------------------------------------------------------
# Entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retrobell",
        description="Hidden-variable Bell-experiment simulator: closed forms, "
                    "Monte Carlo runs, and setting scans from scenario files.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("exact", "closed-form predictions only, no sampling"),
        ("run", "one full Monte Carlo run with records and histograms"),
        ("scan", "angle sweep of the correlator or a signalling scan"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, type=Path,
                         metavar="PATH", help="scenario JSON file")
        cmd.add_argument("--out", type=Path, default=None, metavar="DIR",
                         help="output directory (overrides the scenario)")
        cmd.add_argument("--seed", type=int, default=None, metavar="N",
                         help="seed override")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            raw = cfg.to_dict()
            raw["seed"] = args.seed
            cfg = ScenarioConfig.from_dict(raw)
    except ConfigError as exc:
        print(f"retrobell: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"retrobell: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    if args.out is not None:
        out_dir = Path(args.out)
    elif cfg.out_dir is not None:
        out_dir = Path(cfg.out_dir)
    else:
        out_dir = Path("retrobell-out")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "exact":
            doc = cmd_exact(cfg, out_dir)
            print(json.dumps(doc["results"], indent=2, sort_keys=True))
        elif args.command == "run":
            doc = cmd_run(cfg, out_dir)
            results = doc["results"]
            corr = results["correlator"]
            print(f"correlator {corr['value']:+.5f} +- {corr['std_error']:.5f} "
                  f"(exact {results['exact_correlator']:+.5f}); "
                  f"outputs in {out_dir}")
        else:
            doc = cmd_scan(cfg, out_dir)
            print(f"scan ({doc['mode']}) written to {out_dir}")
    except ConfigError as exc:
        print(f"retrobell: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SeparationError as exc:
        print(f"retrobell: refusing to run: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except OSError as exc:
        print(f"retrobell: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
