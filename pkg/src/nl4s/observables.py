"""Nonlinearity, conserved functionals, Sobolev and spacetime norms, mass concentration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .spectral import GridSpec, PhysicalField, fractional_derivative_symbol

__all__ = [
    "NonlinearityParams",
    "ObservableSeries",
    "F_eval",
    "F_prime",
    "F_second_mag",
    "mass",
    "energy",
    "energy_parts",
    "sobolev_norm",
    "laplacian_norm",
    "bracket_delta_symbol",
    "lq_norm",
    "concentration",
    "spacetime_norm",
    "default_catalogue",
    "Z_I_estimate",
    "tail_fraction",
]


@dataclass(frozen=True)
class NonlinearityParams:
    """``i u_t + Delta^2 u + epsilon Delta u + mu |u|^p u = 0``; NL4S is ``mu = -1, epsilon = 0``."""

    p: float
    mu: int = -1
    epsilon: int = 0

    def __post_init__(self):
        if not (self.p > 0 and math.isfinite(self.p)):
            raise ValueError(f"p must be positive, got {self.p}")
        if self.mu not in (1, -1):
            raise ValueError(f"mu must be +1 or -1, got {self.mu}")
        if self.epsilon not in (0, 1, -1):
            raise ValueError(f"epsilon must be 0, +1 or -1, got {self.epsilon}")

    @classmethod
    def mass_critical(cls, d_sim: int, mu: int = -1, epsilon: int = 0) -> "NonlinearityParams":
        return cls(8.0 / d_sim, mu, epsilon)

    @property
    def d_equiv(self) -> float:
        """Dimension in which ``p`` is mass-critical."""
        return 8.0 / self.p

    def to_dict(self) -> dict:
        return {"p": self.p, "mu": self.mu, "epsilon": self.epsilon}


# -- pointwise nonlinearity ----------------------------------------------------


def _vals(u) -> np.ndarray:
    return u.values if isinstance(u, PhysicalField) else np.asarray(u)


def F_eval(u: PhysicalField, params: NonlinearityParams) -> PhysicalField:
    """``|u|^p u``."""
    v = u.values
    return PhysicalField(u.grid, np.abs(v) ** params.p * v)


def _phase_ratio(v: np.ndarray) -> np.ndarray:
    """``z / conj(z)`` with the value 0 at ``z = 0``."""
    out = np.zeros(v.shape, dtype=complex)
    nz = v != 0
    out[nz] = v[nz] / np.conj(v[nz])
    return out


def F_prime(u: PhysicalField, params: NonlinearityParams) -> tuple[PhysicalField, PhysicalField]:
    """Wirtinger derivatives ``(dF/dz, dF/dzbar)`` of ``F(z) = |z|^p z``."""
    v = u.values
    a = np.abs(v) ** params.p
    dz = (1.0 + params.p / 2.0) * a
    dzbar = (params.p / 2.0) * a * _phase_ratio(v)
    return PhysicalField(u.grid, dz.astype(complex)), PhysicalField(u.grid, dzbar)


def F_second_mag(u: PhysicalField, params: NonlinearityParams) -> PhysicalField:
    """Pointwise bound on the second derivatives, proportional to ``|z|^(p-1)``.

    Sum of the magnitudes of ``d^2F/dz^2``, ``d^2F/dz dzbar`` (twice) and
    ``d^2F/dzbar^2``.
    """
    p = params.p
    r = np.abs(u.values)
    with np.errstate(divide="ignore"):
        rp = np.where(r > 0, r ** (p - 1.0), 0.0)
    c = (1.0 + p / 2.0) * (p / 2.0) * 2.0 + (p / 2.0) * abs(p / 2.0 - 1.0)
    return PhysicalField(u.grid, c * rp)


def apply_chain_rule(u: PhysicalField, du: np.ndarray, params: NonlinearityParams) -> np.ndarray:
    """``F'(u) . du = F_z du + F_zbar conj(du)``."""
    dz, dzbar = F_prime(u, params)
    return dz.values * du + dzbar.values * np.conj(du)


# -- functionals ---------------------------------------------------------------


def mass(u: PhysicalField) -> float:
    return u.grid.integrate(np.abs(u.values) ** 2)


def _spectral_sq(grid: GridSpec, coeffs: np.ndarray, weight: np.ndarray) -> float:
    return float(np.sum(weight * np.abs(coeffs) ** 2))


def laplacian_norm(u: PhysicalField) -> float:
    """``||Delta u||_{L2}``."""
    c = u.grid.fft(u.values)
    return math.sqrt(_spectral_sq(u.grid, c, u.grid.xi2**2))


def energy_parts(u: PhysicalField, params: NonlinearityParams) -> dict:
    g = u.grid
    c = g.fft(u.values)
    kin = 0.5 * _spectral_sq(g, c, g.xi2**2)
    grad = -0.5 * params.epsilon * _spectral_sq(g, c, g.xi2) if params.epsilon else 0.0
    pot = params.mu / (params.p + 2.0) * g.integrate(np.abs(u.values) ** (params.p + 2.0))
    return {"kinetic": kin, "gradient": grad, "potential": pot}


def energy(u: PhysicalField, params: NonlinearityParams) -> float:
    """``1/2 ||Delta u||^2 - epsilon/2 ||grad u||^2 + mu/(p+2) ||u||_{p+2}^{p+2}``."""
    return float(sum(energy_parts(u, params).values()))


def sobolev_norm(u: PhysicalField, s: float, bracket: str = "inhomogeneous") -> float:
    """``H^s`` norm with weight ``(1+|xi|^2)^{s/2}`` or ``|xi|^s``."""
    c = u.grid.fft(u.values)
    w = fractional_derivative_symbol(u.grid, s, bracket)
    return math.sqrt(_spectral_sq(u.grid, c, w**2))


def bracket_delta_symbol(grid: GridSpec) -> np.ndarray:
    """Symbol of ``<Delta>`` taken as ``sqrt(1 + |xi|^4)``."""
    return np.sqrt(1.0 + grid.xi2**2)


def lq_norm(grid: GridSpec, values: np.ndarray, q: float) -> float:
    a = np.abs(values)
    if math.isinf(q):
        return float(np.max(a))
    return float((np.sum(a**q) * grid.dV) ** (1.0 / q))


def tail_fraction(grid: GridSpec, coeffs: np.ndarray) -> float:
    """Share of the L2 mass carried by the top octave ``|xi| > xi_max / 2``."""
    w = np.abs(coeffs) ** 2
    tot = float(np.sum(w))
    if tot == 0.0:
        return 0.0
    return float(np.sum(w[grid.abs_xi > grid.xi_max / 2.0])) / tot


def concentration(u: PhysicalField, alpha: float) -> tuple[float, tuple[int, ...]]:
    """Largest mass inside a ball of radius ``alpha`` and the grid index of its centre.

    Periodic distances are used so the ball wraps around the box. Ties go to
    the lexicographically smallest index.
    """
    g = u.grid
    if not (0 < alpha <= g.L):
        raise ValueError(f"alpha must lie in (0, L], got {alpha}")
    dens = np.abs(u.values) ** 2
    if not np.any(dens):
        return 0.0, g.origin_index
    # offsets in FFT order measured from index 0, wrapped to the nearest image
    k = np.arange(g.n)
    off = np.minimum(k, g.n - k) * g.dx
    r2 = sum(o**2 for o in np.meshgrid(*([off] * g.d_sim), indexing="ij"))
    ball = (r2 <= alpha * alpha * (1 + 1e-12)).astype(float)
    conv = sfft.ifftn(sfft.fftn(dens) * sfft.fftn(ball)).real * g.dV
    idx = np.unravel_index(int(np.argmax(conv)), conv.shape)
    return float(conv[idx]), tuple(int(i) for i in idx)


# -- time series ---------------------------------------------------------------


@dataclass
class ObservableSeries:
    """Per-record observables along a trajectory."""

    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    modified_energy: list = field(default_factory=list)
    hgamma: list = field(default_factory=list)
    delta_norm: list = field(default_factory=list)
    sup_norm: list = field(default_factory=list)
    tail: list = field(default_factory=list)
    concentration: list = field(default_factory=list)
    dt: list = field(default_factory=list)

    COLUMNS = (
        "times",
        "mass",
        "energy",
        "modified_energy",
        "hgamma",
        "delta_norm",
        "sup_norm",
        "tail",
        "concentration",
        "dt",
    )

    def append(self, **row):
        if self.times and not row["times"] > self.times[-1]:
            raise ValueError("observable times must be strictly increasing")
        for c in self.COLUMNS:
            getattr(self, c).append(float(row.get(c, float("nan"))))

    def __len__(self) -> int:
        return len(self.times)

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def rows(self):
        for i in range(len(self)):
            yield {c: getattr(self, c)[i] for c in self.COLUMNS}


def spacetime_norm(
    grid: GridSpec,
    times: Sequence[float],
    snapshots: Sequence[np.ndarray],
    p_t: float,
    q_x: float,
) -> float:
    """``||u||_{L^p_t L^q_x}`` with trapezoid quadrature over the stored snapshot times."""
    if len(snapshots) < 2 or len(times) != len(snapshots):
        raise ValueError("need at least two snapshots with matching times")
    t = np.asarray(times, dtype=float)
    f = np.array([lq_norm(grid, s, q_x) for s in snapshots])
    if math.isinf(p_t):
        return float(np.max(f))
    return float(np.trapezoid(f**p_t, t) ** (1.0 / p_t))


def default_catalogue(d: int) -> list[tuple[float, float]]:
    """Finite stand-in for the set of biharmonic admissible pairs in dimension ``d``.

    Candidates are ``(inf, 2)``, ``(2, 2d/(d-4))``, ``(16/d, 4)`` and
    ``(4, 2d/(d-2))``; only admissible ones are kept.
    """
    from .exponents import is_biharmonic_admissible

    cands = [(math.inf, 2)]
    if d > 4:
        cands.append((2, Fraction(2 * d, d - 4)))
    cands.append((Fraction(16, d), 4))
    if d > 2:
        cands.append((4, Fraction(2 * d, d - 2)))
    out = []
    for pt, qx in cands:
        if is_biharmonic_admissible(pt, qx, d):
            out.append((float(pt), float(qx)))
    return out


def Z_I_estimate(
    grid: GridSpec,
    times: Sequence[float],
    snapshots: Sequence[np.ndarray],
    m_lattice: np.ndarray,
    catalogue: Sequence[tuple[float, float]],
) -> float:
    """Max over ``catalogue`` of ``||<Delta> I u||_{L^p_t L^q_x}``."""
    if not catalogue:
        raise ValueError("empty pair catalogue")
    sym = bracket_delta_symbol(grid) * m_lattice
    filtered = [grid.ifft(sym * grid.fft(s)) for s in snapshots]
    return max(spacetime_norm(grid, times, filtered, pt, qx) for pt, qx in catalogue)
