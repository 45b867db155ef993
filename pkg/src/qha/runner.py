"""Configuration-driven experiment pipeline.

``run(config)`` builds regions, operators and spectra for one experiment
kind, writes CSV/JSON results into ``config.out_dir`` and finishes with
``manifest.json``.  Numeric outputs depend only on the configuration, so two
runs of the same configuration produce byte-identical CSV and JSON files.
Wall-clock timings go to a separate ``timings.tsv`` for that reason.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig, lebesgue_measure, parse_region
from .errors import ConfigError, NumericalGuardError
from .folner import folner_profile, make_sequence
from .groups import QuadratureGrid, Region, measure
from .opconv import (
    fo_conv,
    normalize_density,
    overlap_integral,
    trace_identity,
    trace_of_square_identity,
)
from .oracle import antiwick_count, antiwick_disk_eigenvalues
from .qrep import (
    OperatorMatrix,
    SampleGrid,
    SchrodingerRepresentation,
    WaveletRepresentation,
    calibrate_duflo_moore,
    parse_window,
)
from .spectra import (
    accumulation_ratio,
    eigen,
    calculus_bound_check,
    m_delta,
    theta_identity_residual,
)

__all__ = ["RunManifest", "run", "format_number", "DEFAULT_AFFINE_CALIBRATION"]

#: four analysing vectors used to calibrate the wavelet model
DEFAULT_AFFINE_CALIBRATION = [
    "log-gaussian(1, 0.3)",
    "log-gaussian(1.3, 0.35)",
    "log-gaussian(0.8, 0.25)",
    "morlet-like(1.1, 0.3)",
]


def format_number(v) -> str:
    """CSV cell text: integers verbatim, floats with 17 significant digits."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_number(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _json_text(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class RunManifest:
    kind: str
    config_hash: str
    version: str
    out_dir: str
    config: dict
    calibration: dict = field(default_factory=dict)
    truncated_mass: list = field(default_factory=list)
    leakage: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tool": "qha",
            "kind": self.kind,
            "config_hash": self.config_hash,
            "version": self.version,
            "config": self.config,
            "calibration": self.calibration,
            "truncated_mass": self.truncated_mass,
            "leakage": self.leakage,
            "summary": self.summary,
            "files": self.files,
        }

    @classmethod
    def load(cls, out_dir) -> "RunManifest":
        d = json.loads((Path(out_dir) / "manifest.json").read_text(encoding="utf-8"))
        return cls(d["kind"], d["config_hash"], d["version"], str(out_dir), d["config"],
                   d["calibration"], d["truncated_mass"], d["leakage"], d["summary"], d["files"])


class _Writer:
    """Single serialising writer; records a checksum for every file."""

    def __init__(self, out_dir: Path):
        self.out = out_dir
        self.files = {}

    def text(self, name: str, content: str):
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
        self.files[name] = hashlib.sha256(content.encode()).hexdigest()


class _Timer:
    def __init__(self):
        self.stages = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0


@contextmanager
def _thread_cap():
    n = os.environ.get("QHA_THREADS")
    if not n:
        yield
        return
    try:
        limit = int(n)
    except ValueError:
        raise ConfigError(f"QHA_THREADS must be an integer, got {n!r}") from None
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=max(1, limit)):
        yield


# ---------------------------------------------------------------------------
# representation setup
# ---------------------------------------------------------------------------


class _Model:
    """Representation factory for one run, carrying the Duflo–Moore calibration."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.g = cfg.group_model
        self.window = parse_window(cfg.window)
        self.dm_scale = 1.0
        self.calibration = {}

    def rep_for(self, bboxes) -> object:
        cfg = self.cfg
        if cfg.representation == "schrodinger":
            grid = SampleGrid(cfg.state_n, cfg.state_T)
            return SchrodingerRepresentation(grid, self.dm_scale, cfg.leak_tol)
        c, sig = self.window.log_profile()
        logs = [math.log(v) for bb in bboxes for v in (bb[1][0], bb[1][1])]
        lo = c + min(min(logs), 0.0) - cfg.state_pad * sig
        hi = c + max(max(logs), 0.0) + cfg.state_pad * sig
        return WaveletRepresentation(SampleGrid(cfg.state_n, hi - lo, lo), self.dm_scale, cfg.leak_tol)

    def density(self, rep):
        cfg = self.cfg
        if cfg.hermite_mixture:
            states = [parse_window(f"hermite({k})").state(rep.grid) for k in range(len(cfg.hermite_mixture))]
            raw = OperatorMatrix.mixture(states, cfg.hermite_mixture)
        else:
            raw = OperatorMatrix.rank_one(self.window.state(rep.grid))
        return normalize_density(rep, raw)

    def calibrate(self):
        cfg = self.cfg
        if cfg.representation == "schrodinger":
            specs = cfg.calibration_windows or [f"hermite({k})" for k in range(4)]
            win = cfg.calibration_window or [[-6.0, 6.0], [-6.0, 6.0]]
            res = cfg.calibration_resolution or [64, 64]
            grid = SampleGrid(cfg.state_n, cfg.state_T)
            rep = SchrodingerRepresentation(grid)
        else:
            specs = cfg.calibration_windows or DEFAULT_AFFINE_CALIBRATION
            win = cfg.calibration_window or [[-12.0, 12.0], [math.exp(-2.2), math.exp(2.2)]]
            res = cfg.calibration_resolution or [256, 128]
            profiles = [parse_window(s).log_profile() for s in specs]
            L = max(abs(math.log(win[1][0])), abs(math.log(win[1][1])))
            lo = min(c - cfg.state_pad * s for c, s in profiles) - L
            hi = max(c + cfg.state_pad * s for c, s in profiles) + L
            rep = WaveletRepresentation(SampleGrid(cfg.calibration_n, hi - lo, lo))
        states = [parse_window(s).state(rep.grid) for s in specs]
        nodes = QuadratureGrid(tuple(res)).nodes(self.g, win)
        cal = calibrate_duflo_moore(rep, states, nodes)
        if cal.residual > cfg.identity_rtol:
            raise NumericalGuardError(
                f"Duflo-Moore calibration residual {cal.residual:.2e} exceeds {cfg.identity_rtol:.0e};"
                " widen the calibration window", guard="calibration")
        self.dm_scale = cal.dm_scale
        self.calibration = {
            "representation": cal.representation,
            "dm_scale": cal.dm_scale,
            "kappa": cal.kappa,
            "residual": cal.residual,
            "states": list(specs),
            "window": win,
            "resolution": list(res),
        }
        if cfg.representation == "schrodinger":
            self.calibration["d_constant"] = 1.0 / cal.dm_scale
        return self.calibration


def _sequence(cfg: ExperimentConfig, base: Region):
    g = cfg.group_model
    if cfg.sequence == "none":
        return make_sequence("explicit-list", g, regions=[base])
    kind = "homogeneous-dilation" if cfg.sequence == "dilation" else "convex-scaling"
    return make_sequence(kind, g, base, cfg.scales)


def _quad(cfg: ExperimentConfig, scale: float = 1.0) -> QuadratureGrid:
    res = [int(n * scale) if cfg.scale_quadrature else n for n in cfg.quad_resolution]
    return QuadratureGrid(tuple(res))


# ---------------------------------------------------------------------------
# experiment kinds
# ---------------------------------------------------------------------------


def _run_accumulate(cfg, model, out: _Writer, timer: _Timer, man: RunManifest):
    g = model.g
    base = parse_region(cfg.region, g.chart_dim)
    seq = _sequence(cfg, base)
    scales = list(seq.scales) if cfg.sequence != "none" else [1.0]
    with timer.stage("calibration"):
        man.calibration = model.calibrate()
    hs_q = QuadratureGrid(tuple(cfg.hs_resolution))
    ov_q = QuadratureGrid(tuple(cfg.overlap_resolution))
    recs, bounds, spec_rows, checks = [], [], [], []
    trace_S = None
    for i, r in enumerate(scales):
        E = seq[i]
        q = _quad(cfg, r)
        rep = model.rep_for([E.bbox] + ([cfg.hs_window] if cfg.compute_bound else []))
        S = model.density(rep)
        trace_S = S.trace
        with timer.stage("convolution"):
            A = fo_conv(rep, E, S, q)
        mu = measure(g, E, q)
        with timer.stage("eigen"):
            rec = eigen(A, k=r, label=E.label, mu_E=mu, trace_S=S.trace)
        recs.append(rec)
        man.leakage.append({"k": r, "wrap_energy": A.info["wrap_energy"],
                            "alias_energy": A.info["alias_energy"], "nodes": A.info["nodes"]})
        lam = rec.eigenvalues
        rows = len(lam) if not cfg.spectrum_rows else min(cfg.spectrum_rows, len(lam))
        spec_rows.extend((r, n, lam[n]) for n in range(rows))
        if cfg.compute_bound:
            with timer.stage("bound"):
                hs_nodes = hs_q.nodes(g, cfg.hs_window)
                integral, hs = overlap_integral(rep, E, S, hs_nodes, ov_q, cfg.truncation_tol)
            bounds.append(integral / mu)
            man.truncated_mass.append({"k": r, "stage": "h_S window",
                                       "truncated_mass": hs.info["truncated_mass"],
                                       "h_S_integral": hs.info["integral"]})
        else:
            bounds.append(None)
        for d in cfg.deltas:
            cb = calculus_bound_check(rec, d)
            checks.append({"k": r, "delta": d, "calculus_bound_lhs": cb.lhs, "calculus_bound_rhs": cb.rhs,
                           "calculus_bound_holds": cb.holds,
                           "theta_residual": theta_identity_residual(rec, d)})
    out.text("spectrum.csv", _csv_text(["k", "n", "lambda"], spec_rows))
    acc_rows, summary = [], {"trace_S": trace_S, "deltas": {}}
    for d in cfg.deltas:
        rhs = [None if b is None else m_delta(d) * (1.0 - b) for b in bounds]
        acc = accumulation_ratio(recs, d, trace_S, rhs)
        for k, mu, c, ratio, b in zip(acc.ks, acc.mu, acc.counts, acc.ratios, rhs):
            acc_rows.append((k, mu, d, c, ratio, b))
        entry = {"ratios": acc.ratios, "counts": acc.counts, "increasing": acc.increasing,
                 "final_gap": acc.final_gap, "ceiling": acc.ceiling,
                 "bound_holds": [None if b is None else abs(c - 1) <= b + cfg.identity_rtol
                                 for c, b in zip(acc.ratios, rhs)]}
        oracle = _oracle_gap(cfg, scales[-1], d)
        if oracle is not None:
            entry["oracle_gap"] = oracle
        summary["deltas"][repr(float(d))] = entry
    if 0.5 in cfg.deltas:
        ceiling = summary["deltas"]["0.5"]["ceiling"]
        summary["ceiling_0.5"] = ceiling
        summary["epsilon"] = 1.0 - ceiling
    summary["spectral_checks"] = {
        "calculus_bound_all_hold": all(c["calculus_bound_holds"] for c in checks),
        "theta_max_residual": max((c["theta_residual"] for c in checks), default=0.0),
    }
    summary["overlap_ratio"] = bounds
    out.text("accumulation.csv",
             _csv_text(["k", "mu_Ek", "delta", "count", "ratio", "bound_rhs"], acc_rows))
    out.text("checks.json", _json_text(checks))
    man.summary = summary


def _oracle_gap(cfg, r, delta) -> Optional[float]:
    """Predicted ``|C - 1|`` from the incomplete-gamma oracle, when it applies."""
    if cfg.representation != "schrodinger" or cfg.hermite_mixture:
        return None
    w = parse_window(cfg.window)
    if w.kind != "gaussian" or (w.params and w.params[0] != 1.0):
        return None
    if not cfg.region.replace(" ", "").startswith("disk(") or cfg.sequence != "dilation":
        return None
    vals = [float(v) for v in cfg.region.strip()[5:-1].split(",")]
    if len(vals) != 1:
        return None
    R = vals[0] * r
    return abs(antiwick_count(R, delta) / (math.pi * R * R) - 1.0)


def _run_folner(cfg, model, out, timer, man):
    g = model.g
    base = parse_region(cfg.region, g.chart_dim)
    seq = _sequence(cfg, base)
    K = parse_region(cfg.K_region, g.chart_dim)
    probes = np.array(cfg.probes, float).reshape(-1, g.chart_dim)
    with timer.stage("profile"):
        prof = folner_profile(g, seq, K, QuadratureGrid(tuple(cfg.quad_resolution)),
                              probes=probes, k_q=QuadratureGrid(tuple(cfg.K_resolution)))
    header = ["k", "mu_Ek", "sup_beta_K"] + [f"beta_at_probe_{i + 1}" for i in range(len(probes))]
    rows = [[k, mu, s] + list(pb) for k, mu, s, pb in zip(prof.ks, prof.mu, prof.sup_beta, prof.probe_beta)]
    out.text("folner.csv", _csv_text(header, rows))
    man.summary = {
        "k_nodes": prof.k_nodes,
        "sup_beta": prof.sup_beta,
        "nonincreasing_from_index": prof.nonincreasing_from,
        "probe_liminf": [float(np.min(prof.probe_beta[len(prof.ks) // 2:, j]))
                         for j in range(len(probes))],
    }


def _run_traceid(cfg, model, out, timer, man):
    g = model.g
    with timer.stage("calibration"):
        man.calibration = model.calibrate()
    E = parse_region(cfg.region, g.chart_dim)
    rep = model.rep_for([E.bbox, cfg.hs_window])
    S = model.density(rep)
    q = QuadratureGrid(tuple(cfg.quad_resolution))
    if g.abelian and lebesgue_measure(cfg.region) is not None:
        mu_ref = lebesgue_measure(cfg.region)
    else:
        mu_ref = measure(g, E, q.refined(4))
    records = []
    with timer.stage("convolution"):
        A = fo_conv(rep, E, S, q)
        A2 = fo_conv(rep, E, S, q.refined(2), check=False)
    records.append(trace_identity(rep, E, S, q, mu_ref, conv=A))
    records.append(trace_identity(rep, E, S, q.refined(2), mu_ref, conv=A2))
    with timer.stage("trace-of-square"):
        hs_nodes = QuadratureGrid(tuple(cfg.hs_resolution)).nodes(g, cfg.hs_window)
        rec = trace_of_square_identity(rep, E, S, q, hs_nodes, QuadratureGrid(tuple(cfg.overlap_resolution)),
                                       conv=A, max_truncation=cfg.truncation_tol)
    records.append(rec)
    man.truncated_mass.append({"stage": "h_S window", "truncated_mass": rec.truncated_mass})
    out.text("traceid.json", _json_text({"records": [r.to_dict() for r in records]}))
    man.summary = {
        "mu_reference": mu_ref,
        "trace_S": S.trace,
        "residuals": {f"{r.identity}@{r.resolution[0]}": r.residual for r in records},
        "within_tolerance": all(r.residual <= cfg.identity_rtol for r in records),
    }


def _run_oracle(cfg, model, out, timer, man):
    g = model.g
    w = parse_window(cfg.window)
    if cfg.representation != "schrodinger" or w.kind != "gaussian" or cfg.hermite_mixture:
        raise ConfigError("oracle-antiwick needs the schrodinger model with a gaussian window")
    spec = cfg.region.replace(" ", "")
    if not spec.startswith("disk(") or "," in spec:
        raise ConfigError("oracle-antiwick needs a centred disk region, e.g. disk(2)")
    R = float(spec[5:-1])
    with timer.stage("calibration"):
        man.calibration = model.calibrate()
    E = parse_region(cfg.region, g.chart_dim)
    rep = model.rep_for([E.bbox])
    S = model.density(rep)
    q = QuadratureGrid(tuple(cfg.quad_resolution))
    with timer.stage("convolution"):
        A = fo_conv(rep, E, S, q)
    with timer.stage("eigen"):
        rec = eigen(A, label=E.label, mu_E=measure(g, E, q), trace_S=S.trace)
    n = min(cfg.oracle_count, len(rec.eigenvalues))
    orc = antiwick_disk_eigenvalues(R / (w.params[0] if w.params else 1.0), n)
    diff = np.abs(rec.eigenvalues[:n] - orc)
    out.text("oracle.csv", _csv_text(["n", "numerical", "oracle", "abs_diff"],
                                     zip(range(n), rec.eigenvalues[:n], orc, diff)))
    out.text("spectrum.csv", _csv_text(["k", "n", "lambda"],
                                       ((1, i, v) for i, v in enumerate(rec.eigenvalues))))
    man.leakage.append({"wrap_energy": A.info["wrap_energy"], "alias_energy": A.info["alias_energy"],
                        "nodes": A.info["nodes"]})
    man.summary = {"radius": R, "max_abs_diff": float(diff.max()), "count": n}


_KINDS = {
    "accumulate": _run_accumulate,
    "affine-counterexample": _run_accumulate,
    "folner": _run_folner,
    "traceid": _run_traceid,
    "oracle-antiwick": _run_oracle,
}


def run(cfg: ExperimentConfig, report: bool = True) -> RunManifest:
    """Execute one experiment and write its outputs; returns the manifest."""
    cfg.validate()
    if cfg.kind == "affine-counterexample" and cfg.representation != "wavelet":
        raise ConfigError("affine-counterexample runs the wavelet model on the affine group")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = _Writer(out_dir)
    timer = _Timer()
    cfg_dict = cfg.to_dict()
    cfg_dict.pop("out_dir")
    man = RunManifest(cfg.kind, cfg.digest(), __version__, str(out_dir), cfg_dict)
    model = _Model(cfg)
    with _thread_cap():
        _KINDS[cfg.kind](cfg, model, writer, timer, man)
        if report:
            from .report import emit_report

            with timer.stage("report"):
                man.files.update(writer.files)
                emit_report(man, writer)
    man.files.update(writer.files)
    man.timings = dict(timer.stages)
    (out_dir / "timings.tsv").write_text(
        "".join(f"{k}\t{v:.3f}\n" for k, v in sorted(man.timings.items())), encoding="utf-8")
    writer.text("manifest.json", _json_text(man.to_dict()))
    return man
