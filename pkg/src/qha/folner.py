"""Følner ratios, region sequences and amenability diagnostics.

``beta_E(x) = mu(E \\ E x^{-1}) / mu(E)`` measures how much of ``E`` is lost
under right translation by ``x``.  A sequence ``E_k`` is Følner when
``beta_{E_k} -> 0`` uniformly on compact sets; the profiles computed here
track the sup of ``beta`` over the nodes of a compact set and its value at
fixed probe points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, NotHomogeneousError, ZeroMeasureError
from .groups import (
    GroupModel,
    QuadratureGrid,
    Region,
    _coverage,
    dilate_region,
    intersect,
    translate_region,
)

__all__ = [
    "beta",
    "beta_many",
    "RegionSequence",
    "make_sequence",
    "FolnerProfile",
    "folner_profile",
    "inverse_region",
    "scale_region",
]


def _mass(E: Region, nodes) -> float:
    return float(np.sum(nodes.weights * _coverage(E, nodes)))


def beta_many(g: GroupModel, E: Region, xs, q: QuadratureGrid) -> np.ndarray:
    """``beta_E`` at each point of ``xs``.

    Both ``mu(E)`` and ``mu(E ∩ E x^{-1})`` are integrated on the same grid over
    ``E.bbox`` with the coverage rule, so ``beta_E(e) = 0`` exactly.
    """
    xs = g.check(np.atleast_2d(xs))
    nodes = q.nodes(g, E.bbox)
    mu = _mass(E, nodes)
    if not mu > 0:
        raise ZeroMeasureError(f"{E.label} has zero measure on the grid")
    out = np.empty(len(xs))
    for i, x in enumerate(xs):
        inter = intersect(E, translate_region(g, E, x, "right-inverse"))
        # E ∩ E x^{-1} lies inside E, so E's nodes cover it
        inter = Region(inter.level, E.bbox, inter.label, inter.smooth)
        out[i] = 1.0 - _mass(inter, nodes) / mu
    return np.clip(out, 0.0, 1.0)


def beta(g: GroupModel, E: Region, x, q: QuadratureGrid) -> float:
    return float(beta_many(g, E, np.atleast_2d(x), q)[0])


def scale_region(E: Region, r: float) -> Region:
    """``r E`` in a linear chart."""
    if r <= 0:
        raise ValueError("scale must be positive")
    return E.pullback(lambda y: y / r, E.bbox * r, f"{E.label}*{r:g}")


def inverse_region(g: GroupModel, E: Region) -> Region:
    """``E^{-1}`` with indicator ``y -> 1_E(y^{-1})``."""
    from .groups import _corner_bbox

    return E.pullback(g._inv, _corner_bbox(g._inv, E.bbox), f"{E.label}^-1")


@dataclass(frozen=True)
class RegionSequence:
    """Regions ``E_k = kind(E, r_k)`` indexed by position in ``scales``."""

    group: GroupModel
    kind: str
    base: Optional[Region]
    scales: tuple
    regions: Optional[tuple] = None

    def __len__(self):
        return len(self.regions) if self.kind == "explicit-list" else len(self.scales)

    def __getitem__(self, i: int) -> Region:
        if self.kind == "explicit-list":
            return self.regions[i]
        r = self.scales[i]
        if self.kind == "convex-scaling":
            return scale_region(self.base, r)
        return dilate_region(self.group, self.base, r)


def _symmetric(g: GroupModel, E: Region, n: int = 64) -> bool:
    rng = np.random.default_rng(0)
    pts = rng.uniform(E.bbox[:, 0], E.bbox[:, 1], size=(n * n, E.dim))
    return bool(np.array_equal(E.indicator(pts), E.indicator(g._inv(pts))))


def make_sequence(kind: str, g: GroupModel, E: Optional[Region] = None,
                  r: Sequence[float] = (), regions: Sequence[Region] = ()) -> RegionSequence:
    """Build a region sequence.

    ``convex-scaling`` gives ``r_k V`` (abelian models, symmetric ``V``);
    ``homogeneous-dilation`` gives ``Gamma_{r_k}(E)``; ``explicit-list`` wraps
    ready-made regions.
    """
    if kind == "explicit-list":
        if not regions:
            raise ConfigError("explicit-list needs at least one region")
        return RegionSequence(g, kind, None, tuple(range(len(regions))), tuple(regions))
    if E is None or not len(r):
        raise ConfigError(f"{kind} needs a base region and scales")
    if any(s <= 0 for s in r):
        raise ConfigError("scales must be positive")
    if kind == "convex-scaling":
        if not g.abelian:
            raise ConfigError(f"convex scaling is only supported on abelian models, not {g.name}")
        if not _symmetric(g, E):
            raise ConfigError(f"convex scaling needs a symmetric base region; {E.label} is not")
    elif kind in ("homogeneous-dilation", "dilation"):
        if not g.is_homogeneous:
            raise NotHomogeneousError(f"{g.name} carries no dilation family")
        kind = "homogeneous-dilation"
    else:
        raise ConfigError(f"unknown sequence kind {kind!r}")
    return RegionSequence(g, kind, E, tuple(float(s) for s in r))


@dataclass(frozen=True)
class FolnerProfile:
    ks: list
    mu: list
    sup_beta: list
    probe_beta: np.ndarray
    probes: np.ndarray
    k_nodes: int = 0

    @property
    def nonincreasing_from(self) -> Optional[int]:
        """Smallest index from which ``sup_beta`` never increases, or ``None``."""
        s = self.sup_beta
        for start in range(len(s)):
            if all(b <= a for a, b in zip(s[start:], s[start + 1:])):
                return start
        return None


def folner_profile(g: GroupModel, seq: RegionSequence, K, q: QuadratureGrid,
                   k_max: Optional[int] = None, probes=None, k_q: Optional[QuadratureGrid] = None) -> FolnerProfile:
    """``sup_{x in K} beta_{E_k}(x)`` and ``beta_{E_k}`` at probe points for each ``k``.

    ``K`` is a :class:`Region` (sampled on ``k_q``, default ``q``; the max over
    nodes is a lower bound for the true sup) or an explicit array of points.
    """
    if isinstance(K, Region):
        nodes = (k_q or q).nodes(g, K.bbox)
        kpts = nodes.points[K.indicator(nodes.points)]
    else:
        kpts = g.check(np.atleast_2d(K))
    if len(kpts) == 0:
        raise ZeroMeasureError("the compact set K has no quadrature nodes")
    probes = np.zeros((0, g.chart_dim)) if probes is None else g.check(np.atleast_2d(probes))
    n = len(seq) if k_max is None else min(int(k_max), len(seq))
    if n < 1:
        raise ConfigError("k_max must be at least 1")
    ks, mus, sups, pb = [], [], [], []
    allpts = np.concatenate([kpts, probes])
    for i in range(n):
        E = seq[i]
        nodes = q.nodes(g, E.bbox)
        mu = _mass(E, nodes)
        if not mu > 0:
            raise ZeroMeasureError(f"E_{i} has zero measure")
        b = beta_many(g, E, allpts, q)
        ks.append(seq.scales[i])
        mus.append(mu)
        sups.append(float(b[: len(kpts)].max()))
        pb.append(b[len(kpts):])
    return FolnerProfile(ks, mus, sups, np.array(pb).reshape(n, len(probes)), probes, len(kpts))
