"""Markdown summary and SVG plots for a finished run.

Reads the CSV/JSON records listed in the manifest, so a report can be
regenerated from an output directory alone.  SVG output carries no date
and uses a fixed hash salt, so plots are reproducible too.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import QHAError  # noqa: E402

__all__ = ["emit_report", "ReportError"]


class ReportError(QHAError, OSError):
    """A record the report needs is missing from the output directory."""


def _read_csv(path: Path):
    if not path.exists():
        raise ReportError(f"missing record {path.name}")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return [dict(zip(header, r)) for r in body]


def _num(s):
    return None if s == "" else float(s)


class _DirWriter:
    def __init__(self, out: Path):
        self.out = out
        self.files = {}

    def text(self, name, content):
        with open(self.out / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
        self.files[name] = hashlib.sha256(content.encode()).hexdigest()


def _save(fig, writer, name):
    import io

    plt.rcParams["svg.hashsalt"] = "qha"
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    writer.text(name, buf.getvalue())
    return name


def _plunge_plot(spec_rows, writer, title):
    fig, ax = plt.subplots(figsize=(6, 4))
    by_k = {}
    for r in spec_rows:
        by_k.setdefault(r["k"], []).append((int(r["n"]), float(r["lambda"])))
    for k, pts in by_k.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=f"k = {k}")
    ax.set_xlabel("n")
    ax.set_ylabel("eigenvalue")
    ax.set_title(title)
    ax.legend()
    return _save(fig, writer, "plunge.svg")


def _ratio_plots(acc_rows, writer):
    names = []
    deltas = []
    for r in acc_rows:
        if r["delta"] not in deltas:
            deltas.append(r["delta"])
    for d in deltas:
        rows = [r for r in acc_rows if r["delta"] == d]
        ks = [float(r["k"]) for r in rows]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(ks, [float(r["ratio"]) for r in rows], "o-", label="accumulation ratio")
        ax.axhline(1.0, color="grey", lw=0.8, ls="--")
        ax.set_xscale("log", base=2)
        ax.set_xlabel("k")
        ax.set_ylabel("ratio")
        ax.set_title(f"delta = {float(d):g}")
        ax.legend()
        names.append(_save(fig, writer, f"ratio_delta_{float(d):g}.svg"))
    return names


def _fmt(v):
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def emit_report(manifest, writer=None) -> dict:
    """Write ``report.md`` and SVG plots next to the run's records.

    Returns ``{file name: sha256}`` for everything written.
    """
    out = Path(manifest.out_dir)
    writer = writer or _DirWriter(out)
    before = set(writer.files)
    lines = [f"# {manifest.kind} run", "",
             f"- configuration hash: `{manifest.config_hash}`",
             f"- tool version: {manifest.version}", ""]
    cal = manifest.calibration
    if cal:
        lines += ["## Calibration", "",
                  f"- model: {cal.get('representation')}",
                  f"- Duflo-Moore scale: {_fmt(cal.get('dm_scale'))}",
                  f"- fit residual: {_fmt(cal.get('residual'))}", ""]
    kind = manifest.kind
    if kind in ("accumulate", "affine-counterexample"):
        spec = _read_csv(out / "spectrum.csv")
        acc = _read_csv(out / "accumulation.csv") if (out / "accumulation.csv").exists() else []
        plots = _ratio_plots(acc, writer) if acc else []
        plots.append(_plunge_plot(spec, writer, "spectrum by scale"))
        if acc:
            lines += ["## Accumulation ratios", "",
                      "| k | measure | delta | count | ratio | bound |",
                      "|---|---|---|---|---|---|"]
            for r in acc:
                lines.append(f"| {r['k']} | {_fmt(_num(r['mu_Ek']))} | {r['delta']} | {r['count']} "
                             f"| {_fmt(_num(r['ratio']))} | {_fmt(_num(r['bound_rhs']))} |")
            lines.append("")
        else:
            lines += ["No delta values were requested; spectra only.", ""]
        if "epsilon" in manifest.summary:
            lines += [f"Largest ratio at delta = 0.5: {_fmt(manifest.summary['ceiling_0.5'])}; "
                      f"gap to 1: {_fmt(manifest.summary['epsilon'])}.", ""]
    elif kind == "traceid":
        path = out / "traceid.json"
        if not path.exists():
            raise ReportError("missing record traceid.json")
        recs = json.loads(path.read_text(encoding="utf-8"))["records"]
        lines += ["## Identities", "", "| identity | lhs | rhs | residual | truncated mass |",
                  "|---|---|---|---|---|"]
        for r in recs:
            lines.append(f"| {r['identity']} | {_fmt(r['lhs'])} | {_fmt(r['rhs'])} "
                         f"| {_fmt(r['residual'])} | {_fmt(r['truncated_mass'])} |")
        lines.append("")
        plots = []
    elif kind == "folner":
        rows = _read_csv(out / "folner.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot([float(r["k"]) for r in rows], [float(r["sup_beta_K"]) for r in rows], "o-")
        ax.set_xlabel("k")
        ax.set_ylabel("sup of beta over K")
        plots = [_save(fig, writer, "folner.svg")]
        lines += ["## Folner profile", "", "| k | measure | sup beta |", "|---|---|---|"]
        for r in rows:
            lines.append(f"| {r['k']} | {_fmt(_num(r['mu_Ek']))} | {_fmt(_num(r['sup_beta_K']))} |")
        lines.append("")
    elif kind == "oracle-antiwick":
        rows = _read_csv(out / "oracle.csv")
        fig, ax = plt.subplots(figsize=(6, 4))
        n = [int(r["n"]) for r in rows]
        ax.plot(n, [float(r["numerical"]) for r in rows], "o", label="numerical")
        ax.plot(n, [float(r["oracle"]) for r in rows], "-", label="incomplete gamma")
        ax.set_xlabel("n")
        ax.set_ylabel("eigenvalue")
        ax.legend()
        plots = [_save(fig, writer, "plunge.svg")]
        lines += [f"Largest absolute difference: {_fmt(manifest.summary.get('max_abs_diff'))}", ""]
    else:
        raise ReportError(f"no report layout for kind {kind!r}")
    if plots:
        lines += ["## Plots", ""] + [f"- [{p}]({p})" for p in plots] + [""]
    writer.text("report.md", "\n".join(lines))
    return {k: v for k, v in writer.files.items() if k not in before or k == "report.md"}
