"""Function-operator and operator-operator convolutions by quadrature.

Conventions: ``alpha_x(T) = pi(x)^* T pi(x)``,

* ``f * S = int f(x) alpha_x(S) dmu(x)`` (an operator),
* ``(S * T)(x) = tr(S alpha_x(T))`` (a function on the group),
* ``(f * g)(x) = int f(y) g(x y^{-1}) dmu(y)``.

Operators enter through their spectral factors, so ``f * S`` is a sum of
weighted outer products of orbit vectors ``pi(x_j)^* v_k`` accumulated with a
Hermitian rank-k update.  Integrals over the group are truncated to a node
window; the mass lost to truncation is estimated and reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import blas

from .errors import AdmissibilityError, SpectrumGuardError, TruncationError, ZeroMeasureError
from .groups import GroupModel, Nodes, QuadratureGrid, Region, region_weights
from .qrep import OperatorMatrix, Representation, WaveletRepresentation, _check_same

__all__ = [
    "SampledGroupFunction",
    "DensityOperator",
    "fo_conv",
    "oo_conv",
    "h_S",
    "normalize_density",
    "dm_trace",
    "overlap_measure",
    "IdentityRecord",
    "trace_identity",
    "trace_of_square_identity",
    "overlap_integral",
    "l1_identity",
    "associativity_check",
]

CHUNK = 4096


@dataclass(frozen=True)
class SampledGroupFunction:
    """Values of a function at quadrature nodes, with the nodes' Haar weights."""

    group: GroupModel
    points: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if np.any(np.asarray(self.weights) < 0):
            raise ValueError("quadrature weights must be non-negative")

    @classmethod
    def on_nodes(cls, group, nodes: Nodes, values, info=None):
        return cls(group, nodes.points, nodes.weights, np.asarray(values), info or {})

    def integral(self):
        total = np.sum(self.values * self.weights)
        return float(total.real) if np.isrealobj(self.values) else complex(total)

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.values) * self.weights))


@dataclass(frozen=True)
class DensityOperator:
    """A PSD operator rescaled so that ``tr(D^-1 S D^-1) = 1``."""

    op: OperatorMatrix
    scale: float
    trace_before: float
    trace_after: float
    dm_trace_before: float

    @property
    def trace(self) -> float:
        return self.trace_after


def _as_op(S) -> OperatorMatrix:
    return S.op if isinstance(S, DensityOperator) else S


def dm_trace(rep: Representation, S: OperatorMatrix) -> float:
    """``tr(D^-1 S D^-1)`` with the representation's calibrated multiplier."""
    m = rep.dm_inverse_multiplier()
    return float(np.real(np.sum(m * m * np.diag(S.entries))))


def normalize_density(rep: Representation, S_raw: OperatorMatrix, edge_tol: float = 1e-6) -> DensityOperator:
    """Rescale a PSD operator into a density operator."""
    _check_same(rep.grid, S_raw.grid)
    if not S_raw.psd:
        raise ValueError("density operators must be flagged PSD")
    tr = float(np.real(S_raw.trace()))
    if tr <= 0:
        raise ValueError("cannot normalise the zero operator")
    if isinstance(rep, WaveletRepresentation):
        coef, V = S_raw.factors()
        frac = max(rep.edge_fraction(V[:, k]) for k in range(V.shape[1]))
        if frac > edge_tol:
            raise AdmissibilityError(
                f"D^-1 S D^-1 puts {frac:.2e} of its trace at the low-frequency edge")
    tau = dm_trace(rep, S_raw)
    scale = 1.0 / tau
    op = S_raw.scaled(scale)
    return DensityOperator(op, scale, tr, float(np.real(op.trace())), tau)


def _weighted_nodes(rep: Representation, f, q: Optional[QuadratureGrid], rule: str):
    if isinstance(f, Region):
        if q is None:
            raise ValueError("a region needs a quadrature grid")
        nodes = q.nodes(rep.group, f.bbox)
        w = region_weights(rep.group, f, nodes, rule)
        keep = w > 0
        return nodes.points[keep], w[keep], nodes.shape
    if isinstance(f, SampledGroupFunction):
        vals = np.asarray(f.values)
        if np.iscomplexobj(vals) and np.any(np.abs(vals.imag) > 0):
            raise ValueError("fo_conv needs a real-valued function")
        w = np.real(vals) * f.weights
        keep = w != 0
        return f.points[keep], w[keep], None
    raise TypeError("f must be a Region or a SampledGroupFunction")


def fo_conv(rep: Representation, f, S, q: Optional[QuadratureGrid] = None, *,
            rule: str = "coverage", density: Optional[bool] = None,
            check: bool = True, chunk: int = CHUNK) -> OperatorMatrix:
    """``f * S`` by quadrature.

    ``f`` is a :class:`Region` (its indicator, integrated on ``q`` over the
    region's bounding box) or a real :class:`SampledGroupFunction`.  For a
    density ``S`` and non-negative ``f`` the result is checked to be PSD with
    eigenvalues in ``[-1e-8 tr, 1 + 1e-6]``.
    """
    is_density = isinstance(S, DensityOperator) if density is None else density
    S = _as_op(S)
    _check_same(rep.grid, S.grid)
    n, h = rep.grid.n, rep.grid.h
    pts, w, _ = _weighted_nodes(rep, f, q, rule)
    coef, V = S.factors()
    A = np.zeros((n, n), complex, order="F")
    leak = [0.0, 0.0]
    for k in range(len(coef)):
        wrap, alias = rep._guard(pts, V[:, k], adjoint=True)
        leak = [max(leak[0], wrap), max(leak[1], alias)]
        cw = coef[k] * w
        for sign in (1.0, -1.0):
            sel = np.flatnonzero(sign * cw > 0)
            for start in range(0, sel.size, chunk):
                idx = sel[start:start + chunk]
                B = rep.orbit(pts[idx], V[:, k], adjoint=True, guard=False)
                B *= np.sqrt(np.abs(cw[idx]))
                A = blas.zherk(sign * h, B, beta=1.0, c=A, lower=0, overwrite_c=1)
    A = np.triu(A) + np.triu(A, 1).conj().T
    nonneg = bool(S.psd and np.all(w >= 0))
    info = {"nodes": int(len(w)), "wrap_energy": leak[0], "alias_energy": leak[1],
            "weight_sum": float(np.sum(w))}
    if check and nonneg:
        lam = np.linalg.eigvalsh(A)
        tr = float(np.sum(lam))
        if lam[0] < -1e-8 * max(tr, np.finfo(float).tiny):
            raise SpectrumGuardError(f"f * S has eigenvalue {lam[0]:.3e} below the PSD floor")
        if is_density and lam[-1] > 1 + 1e-6:
            raise SpectrumGuardError(f"operator norm {lam[-1]:.9f} of f * S exceeds 1")
        info["eig_min"], info["eig_max"] = float(lam[0]), float(lam[-1])
    return OperatorMatrix.trusted(rep.grid, A, hermitian=True, psd=nonneg, info=info)


def oo_conv(rep: Representation, S, T, nodes: Union[Nodes, np.ndarray], chunk: int = CHUNK,
            guard: bool = True) -> SampledGroupFunction:
    """``(S * T)(x) = tr(S alpha_x(T))`` at the nodes."""
    S, T = _as_op(S), _as_op(T)
    _check_same(rep.grid, S.grid)
    _check_same(rep.grid, T.grid)
    h = rep.grid.h
    if isinstance(nodes, Nodes):
        pts, wts = nodes.points, nodes.weights
    else:
        pts = np.atleast_2d(np.asarray(nodes, float))
        wts = np.zeros(len(pts))
    herm = S.hermitian and T.hermitian
    out = np.zeros(len(pts), float if herm else complex)
    if not T.hermitian:
        raise ValueError("oo_conv needs a Hermitian second argument")
    tcoef, TV = T.factors()
    if S.hermitian:
        scoef, SV = S.factors()
        low_rank = len(scoef) <= rep.grid.n // 4
    else:
        low_rank = False
    for k in range(len(tcoef)):
        if guard:
            rep._guard(pts, TV[:, k], adjoint=True)
        for start in range(0, len(pts), chunk):
            sl = slice(start, start + chunk)
            W = rep.orbit(pts[sl], TV[:, k], adjoint=True, guard=False)
            if low_rank:
                P = h * (SV.conj().T @ W)            # <w, v_j>
                val = np.sum(scoef[:, None] * np.abs(P) ** 2, axis=0)
            else:
                val = h * np.sum(W.conj() * (S.entries @ W), axis=0)
                if herm:
                    val = val.real
            out[sl] += tcoef[k] * val
    return SampledGroupFunction(rep.group, pts, wts, out)


def h_S(rep: Representation, S, nodes: Nodes) -> SampledGroupFunction:
    """``h_S = tr(S)^{-1} (S * S)`` on the nodes.

    ``info`` records the windowed integral, ``h_S(e) = tr(S^2)/tr(S)``, the
    expected total ``tr(D^-1 S D^-1)`` and the relative mass outside the window.
    """
    op = _as_op(S)
    tr = float(np.real(op.trace()))
    if not tr > 0:
        raise ZeroMeasureError("h_S needs an operator with positive trace", guard="zero-trace")
    ss = oo_conv(rep, op, op, nodes)
    vals = ss.values / tr
    integral = float(np.sum(vals * nodes.weights))
    expected = dm_trace(rep, op)
    info = {
        "integral": integral,
        "expected_integral": expected,
        "h_e": float(np.real(np.sum(np.abs(op.entries) ** 2))) / tr,
        "truncated_mass": abs(expected - integral) / expected,
    }
    return SampledGroupFunction(rep.group, nodes.points, nodes.weights, vals, info)


def overlap_measure(g: GroupModel, E: Region, xs, q: QuadratureGrid, rule: str = "coverage",
                    batch: int = 2_000_000) -> np.ndarray:
    """``mu(E ∩ x^{-1} E)`` for each point ``x``.

    The first factor uses ``rule`` on a grid over ``E.bbox``; membership of
    ``x y`` in ``E`` is tested at the node.
    """
    xs = g.check(np.atleast_2d(xs))
    nodes = q.nodes(g, E.bbox)
    w = region_weights(g, E, nodes, rule)
    keep = w > 0
    y, w = nodes.points[keep], w[keep]
    out = np.empty(len(xs))
    step = max(1, batch // max(len(y), 1))
    for start in range(0, len(xs), step):
        xb = xs[start:start + step]
        prod = g._mul(xb[:, None, :], y[None, :, :])
        out[start:start + step] = E.indicator(prod) @ w
    return out


@dataclass(frozen=True)
class IdentityRecord:
    identity: str
    lhs: float
    rhs: float
    residual: float
    resolution: list
    truncated_mass: float

    def to_dict(self) -> dict:
        return {
            "identity": self.identity,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "resolution": list(self.resolution),
            "truncated_mass": self.truncated_mass,
        }


def _rel(lhs, rhs) -> float:
    return abs(lhs - rhs) / max(abs(rhs), np.finfo(float).tiny)


def trace_identity(rep: Representation, E: Region, S, q: QuadratureGrid, mu_E: float,
                   conv: Optional[OperatorMatrix] = None) -> IdentityRecord:
    """``tr(chi_E * S)`` against ``tr(S) mu(E)`` for a reference value of ``mu(E)``."""
    op = _as_op(S)
    A = conv if conv is not None else fo_conv(rep, E, S, q, check=False)
    lhs = float(np.real(np.trace(A.entries)))
    rhs = float(np.real(op.trace())) * mu_E
    return IdentityRecord("trace", lhs, rhs, _rel(lhs, rhs), list(q.per_axis(rep.group.chart_dim)), 0.0)


def overlap_integral(rep: Representation, E: Region, S, hs_nodes: Nodes, overlap_q: QuadratureGrid,
                     max_truncation: float = 1e-3):
    """``int h_S(x) mu(E ∩ x^{-1} E) dmu(x)`` over the node window, with the h_S record."""
    hs = h_S(rep, S, hs_nodes)
    if hs.info["truncated_mass"] > max_truncation:
        raise TruncationError(
            f"h_S window misses {hs.info['truncated_mass']:.2e} of its mass"
            f" (limit {max_truncation:.0e}); widen the h_S window")
    ov = overlap_measure(rep.group, E, hs_nodes.points, overlap_q)
    return float(np.sum(hs.values * ov * hs_nodes.weights)), hs


def trace_of_square_identity(rep: Representation, E: Region, S, q: QuadratureGrid, hs_nodes: Nodes,
                             overlap_q: Optional[QuadratureGrid] = None,
                             conv: Optional[OperatorMatrix] = None,
                             max_truncation: float = 1e-3) -> IdentityRecord:
    """``tr((E * S)^2)`` against ``tr(S) int h_S(x) mu(E ∩ x^{-1}E) dmu(x)``."""
    op = _as_op(S)
    A = conv if conv is not None else fo_conv(rep, E, S, q, check=False)
    lhs = float(np.sum(np.abs(A.entries) ** 2))
    integral, hs = overlap_integral(rep, E, S, hs_nodes, overlap_q or q, max_truncation)
    rhs = float(np.real(op.trace())) * integral
    return IdentityRecord("trace-of-square", lhs, rhs, _rel(lhs, rhs),
                          list(q.per_axis(rep.group.chart_dim)), hs.info["truncated_mass"])


def l1_identity(rep: Representation, S, A: OperatorMatrix, nodes: Nodes) -> IdentityRecord:
    """Windowed ``int S * A dmu`` against ``tr(S) tr(D^-1 A D^-1)``."""
    op = _as_op(S)
    sa = oo_conv(rep, op, A, nodes)
    lhs = float(np.real(sa.integral()))
    rhs = float(np.real(op.trace())) * dm_trace(rep, A)
    return IdentityRecord("l1", lhs, rhs, _rel(lhs, rhs), list(nodes.shape or [len(nodes)]),
                          _rel(lhs, rhs))


def associativity_check(rep: Representation, f: SampledGroupFunction, S, T, xs) -> float:
    """``max_x |((f * S) * T)(x) - (f * (S * T))(x)|`` over the points ``xs``."""
    g = rep.group
    xs = np.atleast_2d(np.asarray(xs, float))
    if not np.any(f.values):
        return 0.0
    fS = fo_conv(rep, f, S, check=False)
    left = oo_conv(rep, fS, T, xs).values
    yinv = g._inv(f.points)
    right = np.empty(len(xs), dtype=complex)
    for i, x in enumerate(xs):
        st = oo_conv(rep, S, T, g._mul(x[None, :], yinv)).values
        right[i] = np.sum(f.values * st * f.weights)
    return float(np.max(np.abs(left - right)))
