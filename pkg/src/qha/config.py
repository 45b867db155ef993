"""Experiment configuration: one flat JSON document per run."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .groups import Region, annulus, box, clipped_box, disk, get_group
from .qrep import parse_window

__all__ = ["ExperimentConfig", "KINDS", "parse_region", "load_config"]

KINDS = ("accumulate", "folner", "traceid", "affine-counterexample", "oracle-antiwick")


def _pow2(n) -> bool:
    return isinstance(n, int) and n >= 1 and (n & (n - 1)) == 0


@dataclass
class ExperimentConfig:
    """Every knob of a run.  Unknown keys are rejected.

    Quadrature resolutions are per-axis node counts.  With
    ``scale_quadrature`` the counts apply to the base region and are
    multiplied by each scale, keeping the node spacing fixed as the region
    grows.
    """

    kind: str
    group: str = "phase-plane"
    representation: str = "schrodinger"
    window: str = "gaussian(1)"
    hermite_mixture: list = field(default_factory=list)
    region: str = "disk(1)"
    sequence: str = "dilation"
    scales: list = field(default_factory=lambda: [1.0])
    deltas: list = field(default_factory=lambda: [0.1, 0.25, 0.5])
    state_n: int = 512
    state_T: float = 24.0
    state_pad: float = 6.0
    quad_resolution: list = field(default_factory=lambda: [256, 256])
    scale_quadrature: bool = False
    compute_bound: bool = True
    hs_window: list = field(default_factory=lambda: [[-3.0, 3.0], [-3.0, 3.0]])
    hs_resolution: list = field(default_factory=lambda: [64, 64])
    overlap_resolution: list = field(default_factory=lambda: [128, 128])
    calibration_windows: list = field(default_factory=list)
    calibration_window: list = field(default_factory=list)
    calibration_resolution: list = field(default_factory=list)
    calibration_n: int = 1024
    leak_tol: float = 1e-10
    truncation_tol: float = 1e-3
    identity_rtol: float = 1e-2
    K_region: str = "disk(1)"
    K_resolution: list = field(default_factory=lambda: [32, 32])
    probes: list = field(default_factory=list)
    oracle_count: int = 25
    spectrum_rows: int = 0
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------------
    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        try:
            g = get_group(self.group)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
        if self.representation not in ("schrodinger", "wavelet", "none"):
            raise ConfigError(f"unknown representation {self.representation!r}")
        if self.representation == "schrodinger" and g.name != "phase-plane":
            raise ConfigError("the schrodinger representation acts on the phase-plane model")
        if self.representation == "wavelet" and g.name != "affine":
            raise ConfigError("the wavelet representation acts on the affine model")
        if self.representation != "none":
            w = parse_window(self.window)
            want = "time" if self.representation == "schrodinger" else "log-frequency"
            if w.domain != want:
                raise ConfigError(f"window {self.window} does not suit the {self.representation} model")
        if self.hermite_mixture:
            if self.representation != "schrodinger":
                raise ConfigError("hermite_mixture needs the schrodinger representation")
            if any(c < 0 for c in self.hermite_mixture) or not sum(self.hermite_mixture) > 0:
                raise ConfigError("hermite_mixture weights must be non-negative and not all zero")
        for d in self.deltas:
            if not 0 < d < 1:
                raise ConfigError(f"delta {d} outside (0, 1)")
        if not self.scales or any(not s > 0 for s in self.scales):
            raise ConfigError("scales must be a non-empty list of positive numbers")
        if self.sequence not in ("dilation", "convex-scaling", "none"):
            raise ConfigError(f"unknown sequence kind {self.sequence!r}")
        for name in ("quad_resolution", "hs_resolution", "overlap_resolution",
                     "K_resolution", "calibration_resolution"):
            res = getattr(self, name)
            if name == "calibration_resolution" and not res:
                continue
            if not res or not all(_pow2(n) for n in res):
                raise ConfigError(f"{name} must list powers of two, got {res}")
        for name in ("state_n", "calibration_n"):
            if not (_pow2(getattr(self, name)) and getattr(self, name) >= 2):
                raise ConfigError(f"{name} must be a power of two >= 2")
        if self.scale_quadrature and not all(_pow2(int(s)) and s == int(s) for s in self.scales):
            raise ConfigError("scale_quadrature needs scales that are powers of two")
        if not self.state_T > 0 or not self.state_pad > 0:
            raise ConfigError("state_T and state_pad must be positive")
        for name in ("leak_tol", "truncation_tol", "identity_rtol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        parse_region(self.region, g.chart_dim)
        if self.kind == "folner":
            parse_region(self.K_region, g.chart_dim)
        for p in self.probes:
            if len(p) != g.chart_dim:
                raise ConfigError(f"probe {p} does not have {g.chart_dim} coordinates")

    # ------------------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        if "kind" not in data:
            raise ConfigError("configuration needs a 'kind'")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON, ignoring the output directory."""
        d = self.to_dict()
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @property
    def group_model(self):
        return get_group(self.group)


def load_config(path: str, **overrides) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


_SPEC = re.compile(r"^\s*([a-z][a-z-]*)\s*\(([^()]*)\)\s*$")


def parse_region(spec: str, dim: int) -> Region:
    """Parse a region spec.

    ``box(lo1, hi1, lo2, hi2, ...)`` takes one interval per axis;
    ``disk(R[, cx, cy])``, ``annulus(r_in, r_out[, cx, cy])`` and
    ``clipped-box(lo1, hi1, lo2, hi2, n1, n2, c)`` (the box cut by
    ``n . x <= c``) are two-dimensional.
    """
    m = _SPEC.match(spec)
    if not m:
        raise ConfigError(f"malformed region spec {spec!r}")
    kind, args = m.group(1), m.group(2)
    try:
        vals = [float(a) for a in args.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"non-numeric argument in {spec!r}") from None
    try:
        if kind == "box":
            if len(vals) != 2 * dim:
                raise ConfigError(f"box needs {2 * dim} numbers for a {dim}-dimensional chart")
            lo, hi = vals[0::2], vals[1::2]
            if any(h <= l for l, h in zip(lo, hi)):
                raise ConfigError(f"box {spec} is empty")
            return box(lo, hi, label=spec)
        if dim != 2:
            raise ConfigError(f"{kind} regions are two-dimensional")
        if kind == "disk" and len(vals) in (1, 3):
            return disk(vals[0], vals[1:] or (0.0, 0.0), label=spec)
        if kind == "annulus" and len(vals) in (2, 4):
            return annulus(vals[0], vals[1], vals[2:] or (0.0, 0.0), label=spec)
        if kind == "clipped-box" and len(vals) == 7:
            return clipped_box(vals[0:4:2], vals[1:4:2], vals[4:6], vals[6], label=spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"cannot parse region spec {spec!r}")


def lebesgue_measure(spec: str) -> Optional[float]:
    """Closed-form chart-Lebesgue measure of a parsed shape, if there is one."""
    m = _SPEC.match(spec)
    kind, vals = m.group(1), [float(a) for a in m.group(2).split(",") if a.strip()]
    if kind == "box":
        return float(np.prod([h - l for l, h in zip(vals[0::2], vals[1::2])]))
    if kind == "disk":
        return math.pi * vals[0] ** 2
    if kind == "annulus":
        return math.pi * (vals[1] ** 2 - vals[0] ** 2)
    return None
