"""Periodic grids, unitary Fourier transforms, multipliers and Littlewood-Paley pieces.

The box ``[-L, L)^d`` stands in for ``R^d``. Spectral coefficients are scaled so
that ``sum |coeffs|^2 == sum |values|^2 * dx^d``; every norm computed in
frequency space is therefore the continuous L2 norm of the sampled function.

All transforms go through :mod:`scipy.fft`, which keeps ``longdouble`` inputs in
extended precision (the ground-state solver relies on this).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridSpec",
    "PhysicalField",
    "SpectralField",
    "MultiplierSpec",
    "ZeroModeWarning",
    "to_spectral",
    "to_physical",
    "apply_multiplier",
    "fractional_derivative",
    "smoothstep",
    "bump",
    "lp_symbol",
    "lp_project",
    "dyadic_ladder",
    "bernstein_check",
    "BernsteinReport",
    "spectral_gradient",
    "interpolate",
]


class ZeroModeWarning(UserWarning):
    """A negative-order homogeneous derivative discarded a nonzero mean."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid with ``n`` points per axis on ``[-L, L)^d_sim``."""

    d_sim: int
    n: int
    L: float

    def __post_init__(self):
        if self.d_sim not in (1, 2):
            raise ValueError(f"d_sim must be 1 or 2, got {self.d_sim}")
        if not _is_power_of_two(int(self.n)) or self.n < 16:
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"L must be positive and finite, got {self.L}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def dV(self) -> float:
        """Quadrature weight of one grid cell."""
        return self.dx**self.d_sim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d_sim

    @property
    def volume(self) -> float:
        return (2.0 * self.L) ** self.d_sim

    @property
    def xi_max(self) -> float:
        """Nyquist frequency along one axis."""
        return math.pi / self.L * (self.n // 2)

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.d_sim), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """Distance of each grid point from the origin."""
        return np.sqrt(sum(c**2 for c in self.coords))

    @cached_property
    def axis_freq(self) -> np.ndarray:
        """Lattice frequencies (pi/L) k in FFT order."""
        return (math.pi / self.L) * np.fft.fftfreq(self.n, 1.0 / self.n)

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis_freq] * self.d_sim), indexing="ij"))

    @cached_property
    def xi2(self) -> np.ndarray:
        return sum(k**2 for k in self.xi)

    @cached_property
    def abs_xi(self) -> np.ndarray:
        return np.sqrt(self.xi2)

    @property
    def origin_index(self) -> tuple[int, ...]:
        return (self.n // 2,) * self.d_sim

    def point(self, index) -> np.ndarray:
        return np.array([self.axis[i] for i in np.atleast_1d(index)])

    def rescaled(self, lam: float) -> "GridSpec":
        return GridSpec(self.d_sim, self.n, self.L * lam)

    # raw-array transforms used on hot paths
    def fft(self, values: np.ndarray) -> np.ndarray:
        return sfft.fftn(values, norm="ortho") * math.sqrt(self.dV)

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.ifftn(coeffs, norm="ortho") / math.sqrt(self.dV)

    def integrate(self, density: np.ndarray) -> float:
        return float(np.sum(density) * self.dV)

    def to_dict(self) -> dict:
        return {"d_sim": self.d_sim, "n": self.n, "L": self.L}


def _check_grid_values(grid: GridSpec, values: np.ndarray, what: str):
    if values.shape != grid.shape:
        raise ValueError(f"{what} shape {values.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite entries")


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Samples of a complex (or real) field on ``grid``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values))
        _check_grid_values(self.grid, self.values, "field")

    def norm(self) -> float:
        return math.sqrt(self.grid.integrate(np.abs(self.values) ** 2))

    def __mul__(self, other: complex) -> "PhysicalField":
        return PhysicalField(self.grid, self.values * other)

    __rmul__ = __mul__

    def __add__(self, other: "PhysicalField") -> "PhysicalField":
        _require_same_grid(self.grid, other.grid)
        return PhysicalField(self.grid, self.values + other.values)

    def __sub__(self, other: "PhysicalField") -> "PhysicalField":
        _require_same_grid(self.grid, other.grid)
        return PhysicalField(self.grid, self.values - other.values)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients on the lattice of ``grid`` (FFT ordering)."""

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs))
        _check_grid_values(self.grid, self.coeffs, "spectrum")


def _require_same_grid(a: GridSpec, b: GridSpec):
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def to_spectral(f: PhysicalField) -> SpectralField:
    return SpectralField(f.grid, f.grid.fft(f.values))


def to_physical(F: SpectralField) -> PhysicalField:
    return PhysicalField(F.grid, F.grid.ifft(F.coeffs))


@dataclass(frozen=True)
class MultiplierSpec:
    """A Fourier symbol.

    ``symbol`` receives ``|xi|`` when ``radial`` is true, otherwise the tuple of
    frequency component arrays.
    """

    symbol: Callable
    radial: bool = True
    name: str = "multiplier"

    def evaluate(self, grid: GridSpec) -> np.ndarray:
        arr = self.symbol(grid.abs_xi) if self.radial else self.symbol(grid.xi)
        arr = np.broadcast_to(np.asarray(arr), grid.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"symbol '{self.name}' has non-finite values on the lattice")
        return arr


Symbol = Union[MultiplierSpec, np.ndarray]


def _symbol_array(m: Symbol, grid: GridSpec) -> np.ndarray:
    if isinstance(m, MultiplierSpec):
        return m.evaluate(grid)
    arr = np.broadcast_to(np.asarray(m), grid.shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError("symbol has non-finite values on the lattice")
    return arr


def apply_multiplier(f: PhysicalField, m: Symbol) -> PhysicalField:
    sym = _symbol_array(m, f.grid)
    return PhysicalField(f.grid, f.grid.ifft(sym * f.grid.fft(f.values)))


def fractional_derivative_symbol(grid: GridSpec, s: float, bracket: str) -> np.ndarray:
    if bracket == "homogeneous":
        out = np.zeros(grid.shape)
        nz = grid.abs_xi > 0
        out[nz] = grid.abs_xi[nz] ** s
        if s == 0:
            out[~nz] = 1.0
        elif s > 0:
            out[~nz] = 0.0
        return out
    if bracket == "inhomogeneous":
        return (1.0 + grid.xi2) ** (s / 2.0)
    raise ValueError(f"bracket must be 'homogeneous' or 'inhomogeneous', got {bracket!r}")


def fractional_derivative(f: PhysicalField, s: float, bracket: str = "homogeneous") -> PhysicalField:
    """Apply ``|grad|^s`` or ``<grad>^s``.

    For ``s < 0`` the homogeneous symbol sends the zero mode to 0; a
    :class:`ZeroModeWarning` is emitted when that discards a nonzero mean.
    """
    if not -4.0 <= s <= 4.0:
        raise ValueError(f"order s={s} outside the supported range [-4, 4]")
    coeffs = f.grid.fft(f.values)
    if bracket == "homogeneous" and s < 0:
        zero = (0,) * f.grid.d_sim
        if abs(coeffs[zero]) > 1e-14 * max(1.0, float(np.max(np.abs(coeffs)))):
            warnings.warn(
                f"|grad|^{s} annihilated a zero mode of size {abs(coeffs[zero]):.3e}",
                ZeroModeWarning,
                stacklevel=2,
            )
    sym = fractional_derivative_symbol(f.grid, s, bracket)
    return PhysicalField(f.grid, f.grid.ifft(sym * coeffs))


def spectral_gradient(grid: GridSpec, values: np.ndarray) -> list[np.ndarray]:
    coeffs = grid.fft(values)
    return [grid.ifft(1j * k * coeffs) for k in grid.xi]


# -- Littlewood-Paley ----------------------------------------------------------


def smoothstep(t):
    """Cubic ``3t^2 - 2t^3`` clamped to [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def bump(r):
    """Radial bump: 1 on ``r <= 1``, 0 on ``r >= 2``, cubic in ``log2 r`` between."""
    r = np.asarray(r, dtype=float)
    out = np.ones_like(r)
    out[r >= 2.0] = 0.0
    mid = (r > 1.0) & (r < 2.0)
    out[mid] = 1.0 - smoothstep(np.log2(r[mid]))
    return out


def lp_symbol(grid: GridSpec, M: float, mode: str) -> np.ndarray:
    r = grid.abs_xi / M
    if mode == "leq":
        return bump(r)
    if mode == "gt":
        return 1.0 - bump(r)
    if mode == "eq":
        return bump(r) - bump(2.0 * r)
    if mode == "geq":
        return 1.0 - bump(2.0 * r)
    if mode == "lt":
        return bump(2.0 * r)
    raise ValueError(f"unknown projector mode {mode!r}")


def _check_dyadic(M: float):
    if not (M > 0 and math.isfinite(M)):
        raise ValueError(f"dyadic scale must be positive, got {M}")
    k = math.log2(M)
    if abs(k - round(k)) > 1e-12:
        raise ValueError(f"M={M} is not a power of two")


def lp_project(f: PhysicalField, M: float, mode: str = "eq") -> PhysicalField:
    """Littlewood-Paley projection ``P_{<=M}``, ``P_{>M}`` or ``P_M`` (plus ``geq``/``lt``)."""
    _check_dyadic(M)
    return apply_multiplier(f, lp_symbol(f.grid, M, mode))


def dyadic_ladder(grid: GridSpec, M0: float) -> list[float]:
    """Dyadic scales ``2 M0, 4 M0, ...`` up to the first one covering every lattice frequency."""
    _check_dyadic(M0)
    top = float(np.max(grid.abs_xi))
    out, M = [], 2.0 * M0
    while True:
        out.append(M)
        if M >= top:
            return out
        M *= 2.0


@dataclass
class BernsteinReport:
    M: float
    s: float
    annulus_ratio: float
    high_ratio: float
    low_ratio: float
    annulus_bounds: tuple[float, float] = field(default=(0.0, 0.0))
    high_bound: float = 0.0
    low_bound: float = 0.0

    @property
    def ok(self) -> bool:
        lo, hi = self.annulus_bounds
        eps = 1e-12
        return (
            lo * (1 - eps) <= self.annulus_ratio <= hi * (1 + eps)
            and self.high_ratio <= self.high_bound * (1 + eps)
            and self.low_ratio <= self.low_bound * (1 + eps)
        )


def bernstein_check(f: PhysicalField, M: float, s: float) -> BernsteinReport:
    """L2 Bernstein ratios at scale ``M`` for a derivative of order ``s``.

    * annulus: ``||P_M |grad|^s f|| / (M^s ||P_M f||)``, forced into
      ``[2^-|s|, 2^|s|]`` by the support ``M/2 <= |xi| <= 2M``;
    * high: ``||P_{>=M} f|| / (M^-s || |grad|^s P_{>=M} f||)``; ``P_{>=M}`` lives on
      ``|xi| >= M/2`` so the sharp L2 bound is ``2^s``;
    * low: ``||P_{<=M} |grad|^s f|| / (M^s ||P_{<=M} f||)``, bounded by ``2^s``.
    """
    _check_dyadic(M)
    g = f.grid
    coeffs = g.fft(f.values)
    weight = fractional_derivative_symbol(g, s, "homogeneous") if s != 0 else np.ones(g.shape)

    def l2(c):
        return math.sqrt(float(np.sum(np.abs(c) ** 2)))

    ann = lp_symbol(g, M, "eq") * coeffs
    hi = lp_symbol(g, M, "geq") * coeffs
    lo = lp_symbol(g, M, "leq") * coeffs
    scale = l2(coeffs)
    for name, part in (("P_M", ann), ("P_{>=M}", hi), ("P_{<=M}", lo)):
        if l2(part) <= 1e-13 * scale:
            raise ValueError(f"{name} f vanishes to roundoff; Bernstein ratio undefined")
    ws = abs(s)
    return BernsteinReport(
        M=M,
        s=s,
        annulus_ratio=l2(weight * ann) / (M**s * l2(ann)),
        high_ratio=l2(hi) / (M ** (-s) * l2(weight * hi)) if s > 0 else float("nan"),
        low_ratio=l2(weight * lo) / (M**s * l2(lo)) if s > 0 else float("nan"),
        annulus_bounds=(2.0**-ws, 2.0**ws),
        high_bound=2.0**ws,
        low_bound=2.0**ws,
    )


def interpolate(grid: GridSpec, values: np.ndarray, points: list[np.ndarray]) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``values`` on a tensor product of axis points.

    ``points`` holds one 1D coordinate array per axis. Separable evaluation costs
    ``O(n * m)`` per axis, exact for band-limited data. The Nyquist mode is
    split symmetrically so real data stays real.
    """
    coeffs = sfft.fftn(values) / grid.n**grid.d_sim
    k = grid.axis_freq
    nyq = grid.n // 2
    out = coeffs
    for ax, pts in enumerate(points):
        pts = np.asarray(pts, dtype=float)
        phase = np.exp(1j * np.outer(pts + grid.L, k))
        # split the Nyquist column into +/- halves
        phase[:, nyq] = np.cos((math.pi / grid.L) * nyq * (pts + grid.L))
        out = np.moveaxis(np.tensordot(phase, np.moveaxis(out, ax, 0), axes=(1, 0)), 0, ax)
    return out
