"""Eigenvalue lists of localisation operators and the quantities built on them.

Everything downstream of :func:`eigen` is exact arithmetic on a finite list of
eigenvalues: counts above a threshold, accumulation ratios, traces of
functions of the operator and the two inequalities that drive the
accumulation law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import SpectrumGuardError, ZeroMeasureError
from .qrep import OperatorMatrix

__all__ = [
    "TIE_EPS",
    "SpectrumRecord",
    "AccumulationRecord",
    "CalcFunction",
    "m_delta",
    "eigen",
    "count_above",
    "ties_at",
    "accumulation_ratio",
    "calc_trace",
    "bound_check",
    "calculus_bound_check",
    "theta_identity_residual",
]

#: eigenvalues this close below ``1 - delta`` still count as above it
TIE_EPS = 1e-12


@dataclass(frozen=True)
class SpectrumRecord:
    eigenvalues: np.ndarray
    k: Optional[float] = None
    label: str = ""
    mu_E: float = float("nan")
    trace_S: float = float("nan")
    residual: float = 0.0
    clamped: int = 0

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.size > 1 and np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be sorted in descending order")
        object.__setattr__(self, "eigenvalues", lam)

    @classmethod
    def from_values(cls, values, **meta) -> "SpectrumRecord":
        lam = np.asarray(values, dtype=float)
        order = np.argsort(-lam, kind="stable")
        return cls(lam[order], **meta)

    @property
    def total(self) -> float:
        return float(np.sum(self.eigenvalues))


def m_delta(delta: float) -> float:
    _check_delta(delta)
    return max(1.0 / delta, 1.0 / (1.0 - delta))


def _check_delta(delta):
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def eigen(op: OperatorMatrix, *, k=None, label: str = "", mu_E: float = float("nan"),
          trace_S: float = float("nan"), n_check: int = 8) -> SpectrumRecord:
    """Full spectrum of a Hermitian operator, sorted descending.

    The residual ``max ||A v - lambda v|| / ||A||`` is checked on ``n_check``
    evenly spaced eigenpairs.  For PSD operators, eigenvalues down to
    ``-1e-8 tr(A)`` are clamped to zero; anything lower aborts.
    """
    if not op.hermitian:
        raise ValueError("eigen needs an operator flagged Hermitian")
    A = op.entries
    lam, U = np.linalg.eigh(A)
    order = np.argsort(-lam, kind="stable")
    lam, U = lam[order], U[:, order]
    norm = max(float(np.max(np.abs(lam))), np.finfo(float).tiny)
    idx = np.unique(np.linspace(0, len(lam) - 1, min(n_check, len(lam))).round().astype(int))
    R = A @ U[:, idx] - U[:, idx] * lam[idx]
    resid = float(np.max(np.linalg.norm(R, axis=0))) / norm
    if resid > 1e-10:
        raise SpectrumGuardError(f"eigensolver residual {resid:.2e} exceeds 1e-10")
    clamped = 0
    if op.psd:
        floor = -1e-8 * max(float(np.sum(lam)), np.finfo(float).tiny)
        if lam[-1] < floor:
            raise SpectrumGuardError(
                f"eigenvalue {lam[-1]:.3e} below the PSD floor {floor:.3e}; quadrature failure?")
        neg = lam < 0
        clamped = int(np.count_nonzero(neg))
        lam = np.where(neg, 0.0, lam)
    return SpectrumRecord(lam, k=k, label=label, mu_E=mu_E, trace_S=trace_S,
                          residual=resid, clamped=clamped)


def count_above(rec: SpectrumRecord, delta: float) -> int:
    """``#{n : lambda_n > 1 - delta}``, with ties within ``TIE_EPS`` counted above."""
    _check_delta(delta)
    return int(np.count_nonzero(rec.eigenvalues > 1.0 - delta - TIE_EPS))


def ties_at(rec: SpectrumRecord, delta: float) -> int:
    """How many eigenvalues sit within ``TIE_EPS`` of the threshold."""
    return int(np.count_nonzero(np.abs(rec.eigenvalues - (1.0 - delta)) <= TIE_EPS))


@dataclass(frozen=True)
class AccumulationRecord:
    delta: float
    ks: list
    mu: list
    counts: list
    ratios: list
    bound_rhs: list = field(default_factory=list)
    ties: list = field(default_factory=list)

    @property
    def increasing(self) -> bool:
        r = self.ratios
        return all(b > a for a, b in zip(r, r[1:]))

    @property
    def final_gap(self) -> float:
        return abs(self.ratios[-1] - 1.0)

    @property
    def ceiling(self) -> float:
        return max(self.ratios)


def accumulation_ratio(recs: Sequence[SpectrumRecord], delta: float, trS: float,
                       bound_rhs: Optional[Sequence[float]] = None) -> AccumulationRecord:
    """``C_delta = count / (tr(S) mu(E_k))`` for each record."""
    _check_delta(delta)
    counts, ratios, mus, ks, ties = [], [], [], [], []
    for rec in recs:
        if not rec.mu_E > 0:
            raise ZeroMeasureError(f"record {rec.k}: mu(E_k) = {rec.mu_E}")
        c = count_above(rec, delta)
        counts.append(c)
        ratios.append(c / (trS * rec.mu_E))
        mus.append(rec.mu_E)
        ks.append(rec.k)
        ties.append(ties_at(rec, delta))
    return AccumulationRecord(delta, ks, mus, counts, ratios, list(bound_rhs or []), ties)


@dataclass(frozen=True)
class CalcFunction:
    """A real function on ``[0, 1]`` applied through the functional calculus.

    ``kind`` is ``theta``, ``sigma`` (both need ``delta``), ``rho``,
    ``identity`` or ``table``; a table is a pair of arrays ``(t, value)``
    interpolated linearly.
    """

    kind: str
    delta: Optional[float] = None
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("theta", "sigma", "rho", "identity", "table"):
            raise ValueError(f"unknown function kind {self.kind!r}")
        if self.kind in ("theta", "sigma"):
            _check_delta(self.delta)
        if self.kind == "table" and self.table is None:
            raise ValueError("table kind needs (t, values)")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "theta":
            return np.where(t > 1.0 - self.delta - TIE_EPS, 1.0 - t, -t)
        if self.kind == "sigma":
            return m_delta(self.delta) * t * (1.0 - t)
        if self.kind == "rho":
            return t * (1.0 - t)
        if self.kind == "identity":
            return t
        x, y = self.table
        return np.interp(t, x, y)

    def sup_above(self, delta: float) -> float:
        """``sup_{1 - delta < t <= 1} f(t)``."""
        _check_delta(delta)
        lo = 1.0 - delta
        if self.kind == "rho":
            return 0.25 if lo < 0.5 else lo * (1.0 - lo)
        t = np.linspace(lo, 1.0, 100_001)
        return float(np.max(self(t)))


def calc_trace(rec: SpectrumRecord, fn: CalcFunction, clamp: float = 1e-8) -> float:
    """``tr(fn(A)) = sum fn(lambda_n)`` for a spectrum inside ``[0, 1]``."""
    lam = rec.eigenvalues
    if lam.size and (lam.min() < -clamp or lam.max() > 1.0 + clamp):
        raise ValueError(f"spectrum [{lam.min():.3e}, {lam.max():.9f}] leaves [0, 1] beyond the clamp")
    if fn.kind != "theta":
        lam = np.clip(lam, 0.0, 1.0)
    return float(np.sum(fn(lam)))


def theta_identity_residual(rec: SpectrumRecord, delta: float) -> float:
    """``|tr(theta(A)) - (count - sum lambda)|``; zero up to rounding."""
    lhs = calc_trace(rec, CalcFunction("theta", delta), clamp=np.inf)
    return abs(lhs - (count_above(rec, delta) - rec.total))


@dataclass(frozen=True)
class BoundCheck:
    delta: float
    lhs: float
    rhs: float
    holds: bool


def bound_check(rec: SpectrumRecord, delta: float, overlap_ratio: float,
                slack: float = 1e-2) -> BoundCheck:
    """``|C_delta - 1| <= m_delta (1 - int h_S mu(E ∩ x^-1 E) / mu(E))``.

    ``overlap_ratio`` is the integral divided by ``mu(E)``; ``rec`` must carry
    ``mu_E`` and ``trace_S``.
    """
    c = count_above(rec, delta) / (rec.trace_S * rec.mu_E)
    lhs = abs(c - 1.0)
    rhs = m_delta(delta) * (1.0 - overlap_ratio)
    return BoundCheck(delta, lhs, rhs, lhs <= rhs + slack)


def calculus_bound_check(rec: SpectrumRecord, delta: float, fn: Optional[CalcFunction] = None,
                  slack: float = 1e-9) -> BoundCheck:
    """``tr(f(A))/tr(A) <= 1 - (count/tr(A)) (1 - delta - sup_{t > 1-delta} f)``.

    Requires ``|f(t)| <= t`` on ``[0, 1]``; the default is ``f(t) = t(1 - t)``.
    """
    fn = fn or CalcFunction("rho")
    tr = rec.total
    if not tr > 0:
        raise ValueError("the operator must be non-zero")
    lhs = calc_trace(rec, fn) / tr
    rhs = 1.0 - count_above(rec, delta) / tr * (1.0 - delta - fn.sup_above(delta))
    return BoundCheck(delta, lhs, rhs, lhs <= rhs + slack)
