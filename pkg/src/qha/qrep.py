"""Discretised representation spaces and unitary group actions.

States live on a uniform periodic grid of ``n`` samples with step ``h``.
Inner products carry the weight ``h`` and operator matrices act on raw sample
vectors, so the rank-one operator ``psi (x) phi`` is the matrix
``h * psi phi^H`` and its plain matrix trace equals ``<psi, phi>``.

Two representations are provided.

``SchrodingerRepresentation``
    The Schrödinger representation of the Heisenberg group on L^2(R),
    ``pi(x, y, z) psi(u) = exp(2 pi i (z + y u)) psi(u + x)``.  Points with two
    coordinates are read modulo the centre (``z = 0``).

``WaveletRepresentation``
    The affine group acting on the Hardy space of positive-frequency signals,
    ``pi(b, a) psi(t) = a^{-1/2} psi((t - b) / a)``.  States are stored on a
    logarithmic frequency grid, ``g(s) = e^{s/2} psi_hat(e^s)``, where the
    action becomes ``g(s) -> exp(-2 pi i b e^s) g(s + log a)``: a pointwise
    chirp times a translation, both exactly unitary on the grid.

Translations are band-limited fractional shifts (FFT phase ramps), so every
discrete ``pi(x)`` is an exact unitary matrix.  The price is periodicity: a
state shifted past the end of the grid wraps around, and a modulation past
the Nyquist frequency aliases.  Both leaks are measured and guarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import AdmissibilityError, ConfigError, GridMismatchError, WrapAroundError
from .groups import AFFINE, HEISENBERG, PHASE_PLANE, GroupModel

__all__ = [
    "SampleGrid",
    "StateVector",
    "OperatorMatrix",
    "Window",
    "parse_window",
    "Representation",
    "SchrodingerRepresentation",
    "WaveletRepresentation",
    "make_representation",
    "matrix_coefficient",
    "alpha",
    "duflo_moore_apply",
    "coefficient_gram",
    "calibrate_duflo_moore",
    "Calibration",
]


def _is_pow2(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SampleGrid:
    """``n`` samples ``u_j = origin + j h`` with ``h = T / n``.

    ``origin`` defaults to ``-T/2`` (a grid centred on zero).
    """

    n: int = 512
    T: float = 24.0
    origin: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not _is_pow2(int(self.n)):
            raise ConfigError(f"sample count must be a power of two >= 2, got {self.n}")
        if not self.T > 0:
            raise ConfigError("grid extent must be positive")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))
        if self.origin is None:
            object.__setattr__(self, "origin", -self.T / 2)
        else:
            object.__setattr__(self, "origin", float(self.origin))

    @property
    def h(self) -> float:
        return self.T / self.n

    @property
    def points(self) -> np.ndarray:
        return self.origin + self.h * np.arange(self.n)

    @property
    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, d=self.h)

    @property
    def nyquist(self) -> float:
        return 0.5 / self.h


def _check_same(a: SampleGrid, b: SampleGrid):
    if a != b:
        raise GridMismatchError(f"grids differ: {a} vs {b}")


@dataclass(frozen=True)
class StateVector:
    grid: SampleGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n,):
            raise GridMismatchError(f"state has {v.shape} samples, grid has {self.grid.n}")
        object.__setattr__(self, "values", v)

    def inner(self, other: "StateVector") -> complex:
        """``<self, other>``, linear in the first slot."""
        _check_same(self.grid, other.grid)
        return complex(self.grid.h * np.vdot(other.values, self.values))

    def norm(self) -> float:
        return math.sqrt(self.grid.h * float(np.sum(np.abs(self.values) ** 2)))

    def normalized(self) -> "StateVector":
        nrm = self.norm()
        if nrm == 0:
            raise ValueError("cannot normalise the zero state")
        return StateVector(self.grid, self.values / nrm)

    def scaled(self, c) -> "StateVector":
        return StateVector(self.grid, c * self.values)


@dataclass(frozen=True)
class OperatorMatrix:
    """An operator on the sampled space.

    ``hermitian`` and ``psd`` are promises checked at construction; ``info``
    carries diagnostics from whatever produced the matrix.
    """

    grid: SampleGrid
    entries: np.ndarray
    hermitian: bool = False
    psd: bool = False
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        A = np.asarray(self.entries, dtype=complex)
        if A.shape != (self.grid.n, self.grid.n):
            raise GridMismatchError(f"operator shape {A.shape} does not match grid size {self.grid.n}")
        object.__setattr__(self, "entries", A)
        if self.hermitian or self.psd:
            dev = np.max(np.abs(A - A.conj().T)) if A.size else 0.0
            # the largest entry bounds the operator norm from below
            if dev > 1e-10 * np.max(np.abs(A)) and dev > 1e-10 * self.op_norm():
                raise ValueError("operator flagged Hermitian is not Hermitian")
        if self.psd:
            lam = np.linalg.eigvalsh(A)
            if lam[0] < -1e-8 * max(float(np.sum(lam)), np.finfo(float).tiny):
                raise ValueError(f"operator flagged PSD has eigenvalue {lam[0]:.3e}")

    @classmethod
    def trusted(cls, grid, entries, hermitian=False, psd=False, info=None) -> "OperatorMatrix":
        """Build without re-verifying the flags (the caller has checked them)."""
        obj = object.__new__(cls)
        for name, value in (("grid", grid), ("entries", np.asarray(entries, dtype=complex)),
                            ("hermitian", hermitian), ("psd", psd), ("info", info or {})):
            object.__setattr__(obj, name, value)
        return obj

    @classmethod
    def rank_one(cls, psi: StateVector, phi: Optional[StateVector] = None) -> "OperatorMatrix":
        """``psi (x) phi``: the map ``chi -> <chi, phi> psi``."""
        phi = psi if phi is None else phi
        _check_same(psi.grid, phi.grid)
        A = psi.grid.h * np.outer(psi.values, phi.values.conj())
        if phi is psi:
            op = cls.trusted(psi.grid, A, hermitian=True, psd=True)
            nrm = psi.norm()
            if nrm > 0:
                object.__setattr__(op, "_factor_cache",
                                   (1e-14, np.array([nrm * nrm]), (psi.values / nrm)[:, None]))
            return op
        return cls(psi.grid, A)

    @classmethod
    def mixture(cls, states: Sequence[StateVector], weights) -> "OperatorMatrix":
        """``sum_k c_k psi_k (x) psi_k``; PSD when every weight is non-negative."""
        weights = np.asarray(weights, dtype=float)
        grid = states[0].grid
        V = np.stack([s.values for s in states], axis=1)
        A = grid.h * (V * weights) @ V.conj().T
        return cls.trusted(grid, 0.5 * (A + A.conj().T), hermitian=True,
                           psd=bool(np.all(weights >= 0)))

    @classmethod
    def zeros(cls, grid: SampleGrid) -> "OperatorMatrix":
        return cls(grid, np.zeros((grid.n, grid.n), complex), hermitian=True, psd=True)

    @classmethod
    def identity(cls, grid: SampleGrid) -> "OperatorMatrix":
        return cls(grid, np.eye(grid.n, dtype=complex), hermitian=True, psd=True)

    def trace(self) -> float | complex:
        t = complex(np.trace(self.entries))
        return t.real if self.hermitian else t

    def op_norm(self) -> float:
        if self.hermitian:
            lam = np.linalg.eigvalsh(self.entries)
            return float(max(abs(lam[0]), abs(lam[-1])))
        return float(np.linalg.norm(self.entries, 2))

    def trace_norm(self) -> float:
        return float(np.sum(np.linalg.svd(self.entries, compute_uv=False)))

    def apply(self, psi: StateVector) -> StateVector:
        _check_same(self.grid, psi.grid)
        return StateVector(self.grid, self.entries @ psi.values)

    def scaled(self, c: float) -> "OperatorMatrix":
        out = OperatorMatrix.trusted(self.grid, c * self.entries, self.hermitian,
                                     self.psd and c >= 0, dict(self.info))
        cache = self.__dict__.get("_factor_cache")
        if cache is not None and c != 0:
            object.__setattr__(out, "_factor_cache", (cache[0], c * cache[1], cache[2]))
        return out

    def factors(self, rtol: float = 1e-14):
        """Spectral factors ``(c_k, V)`` with ``self = sum_k c_k v_k (x) v_k``.

        Columns of ``V`` are unit vectors in the ``h``-weighted inner product;
        eigenvalues below ``rtol`` times the largest magnitude are dropped.
        """
        if not self.hermitian:
            raise ValueError("spectral factors need a Hermitian operator")
        cache = self.__dict__.get("_factor_cache")
        if cache is None or cache[0] != rtol:
            lam, U = np.linalg.eigh(self.entries)
            keep = np.abs(lam) > rtol * max(np.max(np.abs(lam)), np.finfo(float).tiny)
            cache = (rtol, lam[keep], U[:, keep] / math.sqrt(self.grid.h))
            object.__setattr__(self, "_factor_cache", cache)
        return cache[1], cache[2]


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Window:
    """A named analysing vector.

    Time-domain kinds (``gaussian``, ``hermite``) belong to the Schrödinger
    model; frequency-domain kinds (``morlet-like``, ``log-gaussian``) to the
    wavelet model.
    """

    kind: str
    params: tuple = ()

    TIME_KINDS = ("gaussian", "hermite")
    FREQ_KINDS = ("morlet-like", "log-gaussian")

    def __post_init__(self):
        arity = {"gaussian": (0, 1), "hermite": (1, 2), "morlet-like": (2,), "log-gaussian": (2,)}
        if self.kind not in arity:
            raise ConfigError(f"unknown window kind {self.kind!r}")
        if len(self.params) not in arity[self.kind]:
            raise ConfigError(f"window {self.kind} takes {arity[self.kind]} parameters")
        params = tuple(float(p) for p in self.params)
        if self.kind == "hermite":
            if params[0] < 0 or params[0] != int(params[0]):
                raise ConfigError(f"Hermite order must be a non-negative integer, got {params[0]:g}")
            scales = params[1:]
        else:
            scales = params
        if any(not (p > 0 and math.isfinite(p)) for p in scales):
            raise ConfigError(f"window {self.kind} needs positive finite parameters, got {params}")
        object.__setattr__(self, "params", params)

    @property
    def domain(self) -> str:
        return "time" if self.kind in self.TIME_KINDS else "log-frequency"

    def spec(self) -> str:
        return f"{self.kind}({', '.join(f'{p:.17g}' for p in self.params)})"

    def log_profile(self):
        """Centre and spread of ``|g(s)|^2`` on the log-frequency axis."""
        if self.kind == "log-gaussian":
            mean, sigma = self.params
            return math.log(mean) + sigma * sigma / 2, sigma
        if self.kind == "morlet-like":
            xi0, w = self.params
            return math.log(xi0), w / xi0
        raise ConfigError(f"{self.kind} is not a frequency-domain window")

    def state(self, grid: SampleGrid) -> StateVector:
        """The window sampled on ``grid`` and normalised to unit norm."""
        x = grid.points
        if self.kind == "gaussian":
            w = self.params[0] if self.params else 1.0
            v = np.exp(-math.pi * (x / w) ** 2)
        elif self.kind == "hermite":
            w = self.params[1] if len(self.params) > 1 else 1.0
            v = _hermite_function(int(self.params[0]), x / w)
        elif self.kind == "morlet-like":
            xi0, width = self.params
            v = np.exp(x / 2 - (np.exp(x) - xi0) ** 2 / (2 * width * width))
        else:
            mean, sigma = self.params
            m = math.log(mean) - sigma * sigma / 2
            v = np.exp(x / 2 - (x - m) ** 2 / (4 * sigma * sigma))
        return StateVector(grid, v.astype(complex)).normalized()


def _hermite_function(k: int, u: np.ndarray) -> np.ndarray:
    """Hermite function of order ``k`` adapted to ``exp(-pi u^2)`` (unnormalised on the grid)."""
    if k < 0:
        raise ConfigError("Hermite order must be non-negative")
    z = math.sqrt(2 * math.pi) * u
    prev = np.zeros_like(z)
    cur = np.pi ** -0.25 * np.exp(-z * z / 2)
    for j in range(k):
        prev, cur = cur, math.sqrt(2 / (j + 1)) * z * cur - math.sqrt(j / (j + 1)) * prev
    return cur


def parse_window(spec: str) -> Window:
    """Parse ``"kind(p1, p2)"``; a bare kind name means no parameters."""
    spec = spec.strip()
    if "(" not in spec:
        return Window(spec)
    if not spec.endswith(")"):
        raise ConfigError(f"malformed window spec {spec!r}")
    kind, args = spec[:-1].split("(", 1)
    try:
        params = tuple(float(a) for a in args.split(",") if a.strip())
    except ValueError as exc:
        raise ConfigError(f"malformed window parameters in {spec!r}") from exc
    return Window(kind.strip(), params)


# ---------------------------------------------------------------------------
# representations
# ---------------------------------------------------------------------------


def _tail_fractions(energy: np.ndarray):
    """Cumulative energy fractions from the left and from the right."""
    total = float(np.sum(energy))
    if total <= 0:
        raise ValueError("zero state")
    left = np.concatenate([[0.0], np.cumsum(energy)]) / total
    return left, total


class Representation:
    """Common machinery: batched orbits, leakage guards, Duflo–Moore data.

    Subclasses define ``_split(points, adjoint)``, which returns the shift
    applied to the sample index axis and a phase function, and the raw
    Duflo–Moore multiplier for ``D^{-1}``.
    """

    name = ""
    group: GroupModel
    point_dims: tuple = ()

    def __init__(self, grid: SampleGrid, dm_scale: float = 1.0, leak_tol: float = 1e-10):
        self.grid = grid
        self.dm_scale = float(dm_scale)
        self.leak_tol = float(leak_tol)

    def with_calibration(self, dm_scale: float) -> "Representation":
        return type(self)(self.grid, dm_scale=dm_scale, leak_tol=self.leak_tol)

    def on_grid(self, grid: SampleGrid) -> "Representation":
        return type(self)(grid, dm_scale=self.dm_scale, leak_tol=self.leak_tol)

    # --- points -----------------------------------------------------------
    def check_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] not in self.point_dims:
            raise ValueError(f"{self.name}: points need {self.point_dims} coordinates")
        if x.shape[-1] == self.group.chart_dim:
            self.group.check(x)
        return x

    # --- primitives -------------------------------------------------------
    def _split(self, pts, adjoint):
        """Write ``pi(x)`` (or ``pi(x)^*``) as ``exp(2 pi i c) T_shift M_mod``.

        ``M_mod v(s) = exp(2 pi i mod kappa(s)) v(s)`` and ``T_shift v(s) = v(s + shift)``;
        returns ``(shift, mod, c)`` arrays.
        """
        raise NotImplementedError

    def _kappa(self) -> np.ndarray:
        raise NotImplementedError

    def leakage(self, points, values, adjoint: bool = False):
        """Relative wrap-around and aliasing energy of each orbit vector."""
        pts = self.check_points(np.atleast_2d(points))
        shifts, mods, _ = self._split(pts, adjoint)
        v = np.asarray(values)
        left, _ = _tail_fractions(np.abs(v) ** 2)
        h, n = self.grid.h, self.grid.n
        # shifting by s > 0 pulls the first s/h samples round to the far end
        k = np.minimum(np.ceil(np.abs(shifts) / h - 1e-9).astype(int), n)
        wrap = np.where(shifts > 0, left[k], 1.0 - left[n - k])
        return wrap, self._alias(v, mods)

    def _alias(self, v, mods):
        raise NotImplementedError

    def _guard(self, points, values, adjoint):
        wrap, alias = self.leakage(points, values, adjoint)
        if wrap.size and wrap.max() > self.leak_tol:
            raise WrapAroundError(
                f"{self.name}: translation wraps {wrap.max():.2e} of the state energy round the grid"
                f" (tolerance {self.leak_tol:.1e}); enlarge the grid extent")
        if alias.size and alias.max() > self.leak_tol:
            raise WrapAroundError(
                f"{self.name}: modulation aliases {alias.max():.2e} of the state energy"
                f" (tolerance {self.leak_tol:.1e}); refine the grid", guard="aliasing")
        return (float(wrap.max()) if wrap.size else 0.0,
                float(alias.max()) if alias.size else 0.0)

    def orbit(self, points, psi, adjoint: bool = False, guard: bool = True) -> np.ndarray:
        """Matrix whose column ``j`` is ``pi(x_j) psi`` (or ``pi(x_j)^* psi``).

        Modulations and shifts are tabulated over their distinct values, so
        a tensor grid of ``p x q`` points costs ``p + q`` complex exponentials
        per sample plus one inverse FFT per point.
        """
        values = psi.values if isinstance(psi, StateVector) else np.asarray(psi, complex)
        pts = self.check_points(np.atleast_2d(points))
        if guard:
            self._guard(pts, values, adjoint)
        shifts, mods, const = self._split(pts, adjoint)
        um, im = np.unique(mods, return_inverse=True)
        us, js = np.unique(shifts, return_inverse=True)
        Fm = np.fft.fft(values[:, None] * np.exp(2j * np.pi * np.outer(self._kappa(), um)), axis=0)
        ramp = np.exp(2j * np.pi * np.outer(self.grid.freqs, us))
        out = np.fft.ifft(Fm[:, im] * ramp[:, js], axis=0)
        if np.any(const):
            out *= np.exp(2j * np.pi * const)
        return out

    def _post_split(self, pts):
        """Write ``pi(x)`` as ``exp(2 pi i c) M_p T_shift``; returns ``(shift, p, c)``."""
        raise NotImplementedError

    def coefficients(self, psi, phi, points) -> np.ndarray:
        """``<pi(x) psi, phi>`` at each point.

        The shift is done by FFT and the modulation sampled exactly, so the
        inner product is the periodic trapezoid rule for the coefficient
        integral.  Distinct shifts and modulation parameters are tabulated
        separately, which makes tensor grids of points cheap.
        """
        pv = psi.values if isinstance(psi, StateVector) else np.asarray(psi, complex)
        fv = phi.values if isinstance(phi, StateVector) else np.asarray(phi, complex)
        pts = self.check_points(np.atleast_2d(points))
        shifts, mods, const = self._post_split(pts)
        us, js = np.unique(shifts, return_inverse=True)
        um, im = np.unique(mods, return_inverse=True)
        F = np.fft.fft(pv)
        T = np.fft.ifft(F[:, None] * np.exp(2j * np.pi * np.outer(self.grid.freqs, us)), axis=0)
        Y = fv.conj()[:, None] * T
        P = np.empty((len(um), len(us)), complex)
        kappa = self._kappa()
        for start in range(0, len(um), 256):
            E = np.exp(2j * np.pi * np.outer(um[start:start + 256], kappa))
            P[start:start + 256] = self.grid.h * (E @ Y)
        return P[im, js] * np.exp(2j * np.pi * const)

    def apply(self, x, psi: StateVector, adjoint: bool = False) -> StateVector:
        _check_same(self.grid, psi.grid)
        col = self.orbit(np.atleast_2d(x), psi, adjoint=adjoint)[:, 0]
        return StateVector(self.grid, col)

    def unitary(self, x) -> np.ndarray:
        """The matrix of ``pi(x)``."""
        pts = self.check_points(np.atleast_2d(x))[:1]
        shift, mod, const = (v[0] for v in self._split(pts, False))
        M = np.diag(np.exp(2j * np.pi * mod * self._kappa()))
        ramp = np.exp(2j * np.pi * self.grid.freqs * shift)
        return np.fft.ifft(ramp[:, None] * np.fft.fft(M, axis=0), axis=0) * np.exp(2j * np.pi * const)

    # --- Duflo–Moore ------------------------------------------------------
    def dm_raw(self) -> np.ndarray:
        """Uncalibrated multiplier of ``D^{-1}`` on the sample axis."""
        return np.ones(self.grid.n)

    def dm_inverse_multiplier(self) -> np.ndarray:
        return self.dm_scale * self.dm_raw()


class SchrodingerRepresentation(Representation):
    """Schrödinger representation; two-coordinate points are read modulo the centre."""

    name = "schrodinger"
    group = PHASE_PLANE
    point_dims = (2, 3)

    @property
    def d_constant(self) -> float:
        """Formal dimension ``d`` with ``D = d * I``."""
        return 1.0 / self.dm_scale

    def check_points(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] not in self.point_dims:
            raise ValueError("schrodinger: points need 2 or 3 coordinates")
        return x

    def _kappa(self):
        return self.grid.points

    def _split(self, pts, adjoint):
        x, y = pts[:, 0], pts[:, 1]
        z = pts[:, 2] if pts.shape[1] == 3 else np.zeros_like(x)
        if adjoint:
            # pi(x)^* psi(u) = exp(-2 pi i (z + y (u - x))) psi(u - x)
            return -x, -y, -z
        # pi(x) psi(u) = exp(2 pi i (z + y u)) psi(u + x)
        return x, y, z - x * y

    def _post_split(self, pts):
        x, y = pts[:, 0], pts[:, 1]
        z = pts[:, 2] if pts.shape[1] == 3 else np.zeros_like(x)
        return x, y, z

    def _alias(self, v, mods):
        spec = np.abs(np.fft.fft(v)) ** 2
        order = np.argsort(self.grid.freqs, kind="stable")
        xi = self.grid.freqs[order]
        left, _ = _tail_fractions(spec[order])
        nyq = self.grid.nyquist
        # energy carried past +-nyquist by the frequency shift
        hi = np.searchsorted(xi, nyq - np.abs(mods), side="left")
        lo = np.searchsorted(xi, -nyq + np.abs(mods), side="right")
        return np.where(mods > 0, 1.0 - left[hi], np.where(mods < 0, left[lo], 0.0))


class WaveletRepresentation(Representation):
    """Affine group on positive-frequency signals, sampled on a log-frequency grid."""

    name = "wavelet"
    group = AFFINE
    point_dims = (2,)

    def _kappa(self):
        return np.exp(self.grid.points)

    def _split(self, pts, adjoint):
        b, a = pts[:, 0], pts[:, 1]
        zero = np.zeros_like(b)
        if adjoint:
            # pi(b, a)^* g(s) = exp(2 pi i (b/a) e^s) g(s - log a)
            return -np.log(a), b, zero
        # pi(b, a) g(s) = exp(-2 pi i b e^s) g(s + log a)
        return np.log(a), -b / a, zero

    def _post_split(self, pts):
        b, a = pts[:, 0], pts[:, 1]
        return np.log(a), -b, np.zeros_like(b)

    def _alias(self, v, mods):
        # the chirp exp(2 pi i m e^s) has local frequency |m| e^s; once that plus
        # the state's own bandwidth passes nyquist the samples alias
        spec = np.abs(np.fft.fft(v)) ** 2
        order = np.argsort(np.abs(self.grid.freqs), kind="stable")
        cum = np.cumsum(spec[order]) / spec.sum()
        band = np.abs(self.grid.freqs[order])[min(np.searchsorted(cum, 1 - 1e-6), len(cum) - 1)]
        room = self.grid.nyquist - band
        left, _ = _tail_fractions(np.abs(v) ** 2)
        out = np.zeros(mods.shape)
        nz = mods != 0
        if room <= 0:
            out[nz] = 1.0
            return out
        idx = np.searchsorted(self.grid.points, np.log(room / np.abs(mods[nz])), side="left")
        out[nz] = 1.0 - left[idx]
        return out

    def dm_raw(self):
        # D^{-1} multiplies psi_hat by xi^{-1/2}
        return np.exp(-self.grid.points / 2)

    def edge_fraction(self, values) -> float:
        """Share of ``||D^{-1} psi||^2`` in the lowest-frequency 1/64 of the grid."""
        w = np.abs(self.dm_raw() * values) ** 2
        m = max(1, self.grid.n // 64)
        return float(w[:m].sum() / max(w.sum(), np.finfo(float).tiny))

    # helpers between the time axis and the log-frequency axis
    def from_time(self, t: np.ndarray, samples: np.ndarray, neg_tol: float = 1e-8) -> StateVector:
        """Log-frequency state of a uniformly sampled analytic time signal."""
        t = np.asarray(t, dtype=float)
        samples = np.asarray(samples, dtype=complex)
        dt = t[1] - t[0]
        spec = np.abs(np.fft.fft(samples)) ** 2
        f = np.fft.fftfreq(len(t), d=dt)
        neg = spec[f < 0].sum() / max(spec.sum(), np.finfo(float).tiny)
        if neg > neg_tol:
            raise AdmissibilityError(
                f"signal carries {neg:.2e} of its energy at negative frequencies")
        xi = np.exp(self.grid.points)
        psi_hat = dt * np.exp(-2j * np.pi * np.outer(xi, t)) @ samples
        return StateVector(self.grid, np.exp(self.grid.points / 2) * psi_hat)

    def to_time(self, psi: StateVector, t: np.ndarray) -> np.ndarray:
        """Evaluate the time-domain signal of ``psi`` at the instants ``t``."""
        _check_same(self.grid, psi.grid)
        xi = np.exp(self.grid.points)
        psi_hat = psi.values * np.exp(-self.grid.points / 2)
        # d xi = xi ds on the log grid
        return self.grid.h * np.exp(2j * np.pi * np.outer(np.asarray(t, float), xi)) @ (psi_hat * xi)


_REPS = {"schrodinger": SchrodingerRepresentation, "wavelet": WaveletRepresentation}


def make_representation(name: str, grid: SampleGrid, **kw) -> Representation:
    try:
        return _REPS[name](grid, **kw)
    except KeyError:
        raise ConfigError(f"unknown representation {name!r}") from None


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def matrix_coefficient(rep: Representation, psi: StateVector, phi: StateVector, x) -> np.ndarray:
    """``C_{psi,phi}(x) = <pi(x) psi, phi>``, vectorised over points."""
    _check_same(psi.grid, phi.grid)
    _check_same(rep.grid, psi.grid)
    pts = np.asarray(x, dtype=float)
    c = rep.coefficients(psi, phi, np.atleast_2d(pts))
    return c[0] if pts.ndim == 1 else c


def alpha(rep: Representation, x, T: OperatorMatrix) -> OperatorMatrix:
    """``alpha_x(T) = pi(x)^* T pi(x)``."""
    _check_same(rep.grid, T.grid)
    U = rep.unitary(x)
    A = U.conj().T @ T.entries @ U
    if T.hermitian:
        A = 0.5 * (A + A.conj().T)
    return OperatorMatrix(T.grid, A, T.hermitian, T.psd)


def duflo_moore_apply(rep: Representation, psi: StateVector, power: int,
                      edge_tol: float = 1e-6) -> StateVector:
    """Apply ``D`` (``power=+1``) or ``D^{-1}`` (``power=-1``) as a multiplier."""
    _check_same(rep.grid, psi.grid)
    if power not in (1, -1):
        raise ValueError("power must be +1 or -1")
    m = rep.dm_inverse_multiplier()
    if power == -1:
        if isinstance(rep, WaveletRepresentation):
            frac = rep.edge_fraction(psi.values)
            if frac > edge_tol:
                raise AdmissibilityError(
                    f"D^-1 psi puts {frac:.2e} of its energy at the low-frequency edge;"
                    " the state is not admissible on this grid")
        return StateVector(psi.grid, m * psi.values)
    return StateVector(psi.grid, psi.values / m)


@dataclass(frozen=True)
class Calibration:
    """Least-squares fit of the Duflo–Moore scale."""

    representation: str
    dm_scale: float
    kappa: float
    residual: float
    n_states: int
    nodes: int


def coefficient_gram(rep: Representation, states: Sequence[StateVector], nodes) -> np.ndarray:
    """Gram matrix of matrix coefficients ``C_{psi_i, phi_j}`` over quadrature nodes.

    Entry ``[(i, j), (k, l)]`` approximates
    ``int C_{psi_i, phi_j} conj(C_{psi_k, phi_l}) dmu``.
    """
    m = len(states)
    W = np.asarray(nodes.weights)
    C = np.empty((m * m, len(W)), complex)
    for i in range(m):
        for j in range(m):
            C[i * m + j] = rep.coefficients(states[i], states[j], nodes.points)
    return (C * W) @ C.conj().T


def calibrate_duflo_moore(rep: Representation, states: Sequence[StateVector], nodes) -> Calibration:
    """Fit ``kappa = dm_scale^2`` so that the orthogonality relation holds on ``nodes``.

    The prediction uses the raw multiplier; the residual is the relative
    Frobenius misfit of the calibrated prediction.
    """
    m = len(states)
    L = coefficient_gram(rep, states, nodes)
    Vs = np.stack([s.values for s in states], axis=1)
    G = rep.grid.h * Vs.conj().T @ Vs              # G[k, i] = <psi_i, psi_k>
    Dv = Vs * rep.dm_raw()[:, None]
    H = rep.grid.h * Dv.conj().T @ Dv              # H[l, j] = <D^-1 phi_j, D^-1 phi_l>
    # R[(i,j),(k,l)] = <psi_i, psi_k> conj(<D^-1 phi_j, D^-1 phi_l>)
    R = np.einsum("ki,lj->ijkl", G, H.conj()).reshape(m * m, m * m)
    kappa = float(np.real(np.vdot(R, L)) / np.real(np.vdot(R, R)))
    resid = float(np.linalg.norm(L - kappa * R) / np.linalg.norm(L))
    return Calibration(rep.name, math.sqrt(kappa), kappa, resid, m, len(nodes.weights))
