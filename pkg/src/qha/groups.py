"""Concrete locally compact groups in global chart coordinates.

Four models are built in: the abelian groups R^n (the phase plane
``phase-plane`` is R^2 viewed as the Heisenberg group modulo its centre),
the affine group of the line, and the full three dimensional Heisenberg
group.  Group points are plain float arrays whose last axis holds the chart
coordinates, so every group operation is vectorised over leading axes.

Measures are always *right* Haar measures.  Integrals over a region are
midpoint sums on a uniform grid in computational coordinates (chart
coordinates, or their logarithm on axes that are flagged as logarithmic),
optionally refined by fractional cell coverage at the region boundary.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, NotHomogeneousError, ZeroMeasureError

__all__ = [
    "GroupModel",
    "Euclidean",
    "AffineGroup",
    "HeisenbergGroup",
    "PHASE_PLANE",
    "AFFINE",
    "HEISENBERG",
    "get_group",
    "Region",
    "box",
    "disk",
    "annulus",
    "clipped_box",
    "intersect",
    "QuadratureGrid",
    "Nodes",
    "multiply",
    "modular",
    "measure",
    "region_weights",
    "translate_region",
    "dilate_region",
    "grid_tolerance",
]


# ---------------------------------------------------------------------------
# group models
# ---------------------------------------------------------------------------


class GroupModel:
    """A group in one global chart.

    Subclasses implement the vectorised primitives ``_mul``, ``_inv``,
    ``_density`` and ``_modular``; the public methods validate their input
    first.
    """

    name: str = ""
    chart_dim: int = 0
    abelian: bool = False
    homogeneous_dim: Optional[int] = None
    positive_axes: tuple = ()

    @property
    def identity(self) -> np.ndarray:
        return np.zeros(self.chart_dim)

    @property
    def log_axes(self) -> tuple:
        """Axes that quadrature grids space uniformly in log coordinates."""
        return tuple(i in self.positive_axes for i in range(self.chart_dim))

    @property
    def is_homogeneous(self) -> bool:
        return self.homogeneous_dim is not None

    @property
    def unimodular(self) -> bool:
        return True

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.chart_dim:
            raise DimensionError(
                f"{self.name}: expected {self.chart_dim} chart coordinates, got shape {x.shape}"
            )
        for ax in self.positive_axes:
            if np.any(x[..., ax] <= 0):
                raise ValueError(f"{self.name}: coordinate {ax} must be strictly positive")
        return x

    def multiply(self, x, y) -> np.ndarray:
        return self._mul(self.check(x), self.check(y))

    def invert(self, x) -> np.ndarray:
        return self._inv(self.check(x))

    def right_haar_density(self, x) -> np.ndarray:
        return self._density(self.check(x))

    def modular(self, x) -> np.ndarray:
        return self._modular(self.check(x))

    def dilate(self, r: float, x) -> np.ndarray:
        if not self.is_homogeneous:
            raise NotHomogeneousError(f"{self.name} carries no dilation family")
        if r <= 0:
            raise ValueError("dilation factor must be positive")
        return self._dilate(float(r), self.check(x))

    # primitives, overridden below
    def _mul(self, x, y):
        raise NotImplementedError

    def _inv(self, x):
        raise NotImplementedError

    def _density(self, x):
        return np.ones(x.shape[:-1])

    def _modular(self, x):
        return np.ones(x.shape[:-1])

    def _dilate(self, r, x):
        raise NotImplementedError

    def __repr__(self):
        return f"<GroupModel {self.name}>"


class Euclidean(GroupModel):
    """The additive group R^n with Lebesgue measure and dilations x -> r x."""

    abelian = True

    def __init__(self, dim: int, name: Optional[str] = None):
        if dim < 1:
            raise ValueError("dimension must be at least 1")
        self.chart_dim = dim
        self.homogeneous_dim = dim
        self.name = name or f"r{dim}"

    def _mul(self, x, y):
        return x + y

    def _inv(self, x):
        return -x

    def _dilate(self, r, x):
        return r * x


class AffineGroup(GroupModel):
    """The ax+b group in the chart (b, a), a > 0.

    Law ``(b, a)(b', a') = (b + a b', a a')``; right Haar measure
    ``db da / a``; modular function ``1/a``.  The dilations
    ``(b, a) -> (r b, a**r)`` scale the right Haar measure by ``r**2`` but are
    not group automorphisms.
    """

    name = "affine"
    chart_dim = 2
    homogeneous_dim = 2
    positive_axes = (1,)

    @property
    def identity(self):
        return np.array([0.0, 1.0])

    @property
    def unimodular(self):
        return False

    def _mul(self, x, y):
        b, a = x[..., 0], x[..., 1]
        b2, a2 = y[..., 0], y[..., 1]
        return np.stack(np.broadcast_arrays(b + a * b2, a * a2), axis=-1)

    def _inv(self, x):
        b, a = x[..., 0], x[..., 1]
        return np.stack([-b / a, 1.0 / a], axis=-1)

    def _density(self, x):
        return 1.0 / x[..., 1]

    def _modular(self, x):
        return 1.0 / x[..., 1]

    def _dilate(self, r, x):
        return np.stack([r * x[..., 0], x[..., 1] ** r], axis=-1)


class HeisenbergGroup(GroupModel):
    """H^1 = R^3 with ``(x, y, z)(x', y', z') = (x + x', y + y', z + z' + x y')``.

    Lebesgue measure is a two-sided Haar measure; the dilations
    ``(x, y, z) -> (r x, r y, r^2 z)`` give homogeneous dimension 4.
    """

    name = "heisenberg"
    chart_dim = 3
    homogeneous_dim = 4

    def _mul(self, p, q):
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        x2, y2, z2 = q[..., 0], q[..., 1], q[..., 2]
        return np.stack(np.broadcast_arrays(x + x2, y + y2, z + z2 + x * y2), axis=-1)

    def _inv(self, p):
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        return np.stack([-x, -y, -z + x * y], axis=-1)

    def _dilate(self, r, p):
        return p * np.array([r, r, r * r])


PHASE_PLANE = Euclidean(2, name="phase-plane")
AFFINE = AffineGroup()
HEISENBERG = HeisenbergGroup()

_REGISTRY = {
    "phase-plane": PHASE_PLANE,
    "affine": AFFINE,
    "heisenberg": HEISENBERG,
}


def get_group(name: str) -> GroupModel:
    """Look up a built-in model: ``phase-plane``, ``affine``, ``heisenberg``, ``r<n>``."""
    if name in _REGISTRY:
        return _REGISTRY[name]
    if name.startswith("r") and name[1:].isdigit():
        return Euclidean(int(name[1:]))
    raise KeyError(f"unknown group model {name!r}")


def multiply(g: GroupModel, x, y) -> np.ndarray:
    return g.multiply(x, y)


def modular(g: GroupModel, x) -> np.ndarray:
    return g.modular(x)


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------


def _as_bbox(bbox) -> np.ndarray:
    bbox = np.array(bbox, dtype=float).reshape(-1, 2)
    if np.any(bbox[:, 1] < bbox[:, 0]):
        raise ValueError(f"malformed bounding box {bbox.tolist()}")
    return bbox


@dataclass(frozen=True)
class Region:
    """A measurable subset of a chart, described by a level function.

    ``level(points) <= 0`` exactly on the set (within ``bbox``).  When
    ``smooth`` is true the level function is continuous, defined on the whole
    chart and non-positive only inside ``bbox``; quadrature then replaces the
    hard indicator by fractional cell coverage at the boundary.
    """

    level: Callable[[np.ndarray], np.ndarray]
    bbox: np.ndarray
    label: str = "region"
    smooth: bool = True

    def __post_init__(self):
        object.__setattr__(self, "bbox", _as_bbox(self.bbox))

    @property
    def dim(self) -> int:
        return self.bbox.shape[0]

    def in_bbox(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.all((pts >= self.bbox[:, 0]) & (pts <= self.bbox[:, 1]), axis=-1)

    def indicator(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            return self.in_bbox(pts) & (self.level(pts) <= 0)

    @classmethod
    def from_indicator(cls, fn, bbox, label="region"):
        """Wrap an arbitrary boolean indicator (no boundary refinement)."""
        return cls(lambda p: np.where(fn(p), -1.0, 1.0), bbox, label, smooth=False)

    def pullback(self, fn, bbox, label) -> "Region":
        """The region ``{y : fn(y) in self}``."""
        base = self
        if base.smooth:
            return Region(lambda p: base.level(fn(p)), bbox, label, smooth=True)

        def level(p):
            q = fn(p)
            return np.where(base.in_bbox(q), base.level(q), np.inf)

        return Region(level, bbox, label, smooth=self.smooth)


def box(lo, hi, label=None) -> Region:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    def level(p):
        return np.max(np.maximum(lo - p, p - hi), axis=-1)

    return Region(level, np.stack([lo, hi], axis=1), label or f"box{lo.tolist()}-{hi.tolist()}")


def disk(radius: float, center=(0.0, 0.0), label=None) -> Region:
    c = np.asarray(center, dtype=float)
    if radius <= 0:
        raise ValueError("radius must be positive")

    def level(p):
        return np.linalg.norm(p - c, axis=-1) - radius

    bbox = np.stack([c - radius, c + radius], axis=1)
    return Region(level, bbox, label or f"disk(r={radius:g})")


def annulus(r_in: float, r_out: float, center=(0.0, 0.0), label=None) -> Region:
    c = np.asarray(center, dtype=float)
    if not 0 <= r_in < r_out:
        raise ValueError("need 0 <= r_in < r_out")

    def level(p):
        r = np.linalg.norm(p - c, axis=-1)
        return np.maximum(r - r_out, r_in - r)

    bbox = np.stack([c - r_out, c + r_out], axis=1)
    return Region(level, bbox, label or f"annulus({r_in:g},{r_out:g})")


def clipped_box(lo, hi, normal, offset, label=None) -> Region:
    """The box ``[lo, hi]`` intersected with the half-space ``normal . x <= offset``."""
    b = box(lo, hi)
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)

    def level(p):
        return np.maximum(b.level(p), p @ n - offset)

    return Region(level, b.bbox, label or "clipped-box")


def intersect(A: Region, B: Region, label=None) -> Region:
    lo = np.maximum(A.bbox[:, 0], B.bbox[:, 0])
    hi = np.minimum(A.bbox[:, 1], B.bbox[:, 1])
    hi = np.maximum(hi, lo)

    def level(p):
        if A.smooth and B.smooth:
            return np.maximum(A.level(p), B.level(p))
        la = np.where(A.in_bbox(p), A.level(p), np.inf)
        lb = np.where(B.in_bbox(p), B.level(p), np.inf)
        return np.maximum(la, lb)

    return Region(level, np.stack([lo, hi], axis=1), label or f"{A.label}&{B.label}",
                  smooth=A.smooth and B.smooth)


def _corner_bbox(fn, bbox) -> np.ndarray:
    # Exact for the built-in maps: each is monotone along every chart axis.
    corners = np.array(list(itertools.product(*bbox)))
    img = fn(corners)
    lo, hi = img.min(axis=0), img.max(axis=0)
    pad = 1e-12 * np.maximum(np.abs(lo), np.abs(hi))
    return np.stack([lo - pad, hi + pad], axis=1)


_SIDES = ("left", "right", "left-inverse", "right-inverse")


def translate_region(g: GroupModel, E: Region, x, side: str = "right-inverse") -> Region:
    """Translate ``E`` by the group element ``x``.

    ``side`` selects the set: ``left`` is ``xE``, ``right`` is ``Ex``,
    ``left-inverse`` is ``x^-1 E`` and ``right-inverse`` is ``E x^-1``.
    """
    x = g.check(x)
    xi = g._inv(x)
    if side == "left":      # y in xE  <=>  x^-1 y in E
        pull, push = (lambda y: g._mul(xi, y)), (lambda y: g._mul(x, y))
    elif side == "right":   # y in Ex  <=>  y x^-1 in E
        pull, push = (lambda y: g._mul(y, xi)), (lambda y: g._mul(y, x))
    elif side == "left-inverse":
        pull, push = (lambda y: g._mul(x, y)), (lambda y: g._mul(xi, y))
    elif side == "right-inverse":
        pull, push = (lambda y: g._mul(y, x)), (lambda y: g._mul(y, xi))
    else:
        raise ValueError(f"side must be one of {_SIDES}")
    return E.pullback(pull, _corner_bbox(push, E.bbox), f"{E.label}@{side}")


def dilate_region(g: GroupModel, E: Region, r: float) -> Region:
    """``Gamma_r(E)``: the region with indicator ``y -> 1_E(dilate(1/r, y))``."""
    if not g.is_homogeneous:
        raise NotHomogeneousError(f"{g.name} carries no dilation family")
    if r <= 0:
        raise ValueError("dilation factor must be positive")
    if r == 1:
        return E
    return E.pullback(lambda y: g._dilate(1.0 / r, y),
                      _corner_bbox(lambda y: g._dilate(r, y), E.bbox),
                      f"{E.label}*{r:g}")


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Nodes:
    """Quadrature nodes of a tensor midpoint grid.

    ``comp`` holds computational coordinates (the logarithm on log axes),
    ``points`` the chart coordinates, and ``weights`` the right-Haar weight of
    every cell.  ``shape`` is the tensor layout of the nodes, or ``None`` once
    a subset has been selected.
    """

    points: np.ndarray
    weights: np.ndarray
    comp: np.ndarray
    spacing: np.ndarray
    log_axes: tuple
    shape: Optional[tuple] = None

    def __len__(self):
        return len(self.weights)

    def to_chart(self, comp):
        out = np.array(comp, dtype=float, copy=True)
        for ax, is_log in enumerate(self.log_axes):
            if is_log:
                out[..., ax] = np.exp(out[..., ax])
        return out

    def select(self, mask) -> "Nodes":
        mask = np.asarray(mask)
        return Nodes(self.points[mask], self.weights[mask], self.comp[mask],
                     self.spacing, self.log_axes, None)

    def with_weights(self, weights) -> "Nodes":
        return Nodes(self.points, np.asarray(weights, dtype=float), self.comp,
                     self.spacing, self.log_axes, self.shape)


@dataclass(frozen=True)
class QuadratureGrid:
    """Per-axis node counts of a midpoint rule on a chart box."""

    resolution: tuple = (512, 512)

    def __post_init__(self):
        res = self.resolution
        if isinstance(res, (int, np.integer)):
            res = (int(res),)
        res = tuple(int(n) for n in res)
        if not res or any(n < 1 for n in res):
            raise ValueError("quadrature resolution must be positive")
        object.__setattr__(self, "resolution", res)

    def per_axis(self, dim: int) -> tuple:
        if len(self.resolution) == 1:
            return self.resolution * dim
        if len(self.resolution) != dim:
            raise DimensionError(f"resolution {self.resolution} does not match dimension {dim}")
        return self.resolution

    def refined(self, factor: int = 2) -> "QuadratureGrid":
        return QuadratureGrid(tuple(n * factor for n in self.resolution))

    def nodes(self, g: GroupModel, bbox) -> Nodes:
        bbox = _as_bbox(bbox)
        if bbox.shape[0] != g.chart_dim:
            raise DimensionError("bounding box dimension does not match the group chart")
        if not np.all(np.isfinite(bbox)):
            raise ValueError("cannot build quadrature nodes on an unbounded box")
        if np.any(bbox[:, 1] <= bbox[:, 0]):
            raise ValueError("empty quadrature grid: degenerate bounding box")
        res = self.per_axis(g.chart_dim)
        axes, spacing = [], []
        for ax, (n, (lo, hi)) in enumerate(zip(res, bbox)):
            if g.log_axes[ax]:
                if lo <= 0:
                    raise ValueError(f"log axis {ax} needs a positive lower bound")
                lo, hi = np.log(lo), np.log(hi)
            step = (hi - lo) / n
            axes.append(lo + (np.arange(n) + 0.5) * step)
            spacing.append(step)
        mesh = np.meshgrid(*axes, indexing="ij")
        comp = np.stack([m.ravel() for m in mesh], axis=-1)
        nodes = Nodes(comp, np.empty(0), comp, np.array(spacing), g.log_axes, tuple(res))
        points = nodes.to_chart(comp)
        jac = np.prod(np.where(np.array(g.log_axes), points, 1.0), axis=-1)
        weights = g._density(points) * jac * np.prod(spacing)
        return Nodes(points, weights, comp, np.array(spacing), g.log_axes, tuple(res))


def _uniform_sum_cdf(t, a, b):
    """P(U1 + U2 <= t) for independent U1 ~ U[-a/2, a/2], U2 ~ U[-b/2, b/2]."""

    def q(z):
        z = np.maximum(z, 0.0)
        return 0.5 * z * z

    s, d = 0.5 * (a + b), 0.5 * (a - b)
    p = (q(t + s) - q(t + d) - q(t - d) + q(t - s)) / (a * b)
    return np.clip(p, 0.0, 1.0)


def _boundary_mask(inside: np.ndarray) -> np.ndarray:
    mark = np.zeros(inside.shape, dtype=bool)
    for ax in range(inside.ndim):
        sl_a = [slice(None)] * inside.ndim
        sl_b = [slice(None)] * inside.ndim
        sl_a[ax], sl_b[ax] = slice(1, None), slice(None, -1)
        change = inside[tuple(sl_a)] != inside[tuple(sl_b)]
        mark[tuple(sl_a)] |= change
        mark[tuple(sl_b)] |= change
        edge = [slice(None)] * inside.ndim
        for pos in (0, -1):
            edge[ax] = pos
            mark[tuple(edge)] |= inside[tuple(edge)]
    return mark


def _coverage(E: Region, nodes: Nodes) -> np.ndarray:
    """Fraction of each cell covered by ``E`` (midpoint indicator away from the boundary).

    Boundary cells use the level function linearised at the node, with the
    distance to the zero set corrected by one secant step so that curved
    level functions (such as ``1 - e^t`` on a log axis) still place the
    boundary to second order.
    """
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        if E.smooth:
            F = E.level(nodes.points)
        else:
            F = np.where(E.in_bbox(nodes.points), E.level(nodes.points), np.inf)
    inside = F <= 0
    frac = inside.astype(float)
    d = nodes.comp.shape[1]
    if not E.smooth or nodes.shape is None or d > 2:
        return frac
    mark = _boundary_mask(inside.reshape(nodes.shape)).ravel()
    idx = np.flatnonzero(mark)
    if idx.size == 0:
        return frac
    c = nodes.comp[idx]
    h = nodes.spacing
    grad = np.empty((idx.size, d))
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        for ax in range(d):
            eps = 1e-3 * h[ax]
            cp, cm = c.copy(), c.copy()
            cp[:, ax] += eps
            cm[:, ax] -= eps
            grad[:, ax] = (E.level(nodes.to_chart(cp)) - E.level(nodes.to_chart(cm))) / (2 * eps)
        F0 = F[idx]
        g2 = np.sum(grad * grad, axis=1)
        # secant correction of the signed distance along the gradient
        step = -(F0 / g2)[:, None] * grad
        F1 = E.level(nodes.to_chart(c + step))
        ratio = F0 / (F0 - F1)
        good = np.isfinite(ratio) & (ratio > 0.5) & (ratio < 2.0)
        t = np.where(good, -F0 * ratio, -F0)
    ok = np.all(np.isfinite(grad), axis=1) & np.isfinite(F0) & (g2 > 0)
    a = np.abs(grad[:, 0]) * h[0]
    if d == 1:
        f = np.clip((t + 0.5 * a) / a, 0.0, 1.0)
    else:
        b = np.abs(grad[:, 1]) * h[1]
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        thin = lo <= 1e-6 * hi
        with np.errstate(invalid="ignore", divide="ignore"):
            f = np.where(thin, np.clip((t + 0.5 * hi) / hi, 0.0, 1.0),
                         _uniform_sum_cdf(t, np.where(thin, 1.0, a), np.where(thin, 1.0, b)))
    frac[idx[ok]] = f[ok]
    return frac


def region_weights(g: GroupModel, E: Region, nodes: Nodes, rule: str = "coverage") -> np.ndarray:
    """Quadrature weights of ``1_E`` on ``nodes``.

    ``rule="midpoint"`` uses the hard indicator at the node; ``"coverage"``
    replaces it by the covered fraction of boundary cells, estimated from the
    linearised level function.
    """
    if rule == "midpoint":
        return nodes.weights * E.indicator(nodes.points)
    if rule == "coverage":
        return nodes.weights * _coverage(E, nodes)
    raise ValueError(f"unknown quadrature rule {rule!r}")


def measure(g: GroupModel, E: Region, q: QuadratureGrid, rule: str = "coverage") -> float:
    """Right Haar measure of ``E`` by quadrature on a grid spanning ``E.bbox``."""
    nodes = q.nodes(g, E.bbox)
    return float(np.sum(region_weights(g, E, nodes, rule)))


def grid_tolerance(g: GroupModel, E: Region, q: QuadratureGrid) -> float:
    """Relative measure of the cells straddling the boundary of ``E``.

    The midpoint rule cannot be off by more than this fraction of ``mu(E)``.
    """
    nodes = q.nodes(g, E.bbox)
    inside = E.indicator(nodes.points)
    mu = float(np.sum(nodes.weights * inside))
    if mu <= 0:
        raise ZeroMeasureError(f"{E.label} has zero measure on the grid")
    mark = _boundary_mask(inside.reshape(nodes.shape)).ravel()
    return float(np.sum(nodes.weights[mark])) / mu


def require_positive(mu: float, label: str) -> float:
    if not mu > 0:
        raise ZeroMeasureError(f"{label} has zero measure; ratios by mu(E) are undefined")
    return mu
