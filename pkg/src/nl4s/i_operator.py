"""The smoothing multiplier ``I_N``, the modified energy and the almost-conservation sweep."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .observables import (
    NonlinearityParams,
    apply_chain_rule,
    energy,
    F_eval,
)
from .spectral import GridSpec, MultiplierSpec, PhysicalField, bump, smoothstep, spectral_gradient

__all__ = [
    "IMultiplier",
    "build_m",
    "apply_I",
    "modified_energy",
    "IPropertyReport",
    "check_I_properties",
    "property_symbols",
    "commutator_norm",
    "SweepResult",
    "almost_conservation_sweep",
    "loglog_slope",
]


@dataclass(frozen=True)
class IMultiplier:
    """Radial multiplier equal to 1 below ``N`` and ``(|xi|/N)^(gamma-2)`` above ``2N``.

    On ``N < |xi| < 2N`` it is ``(|xi|/N)^((gamma-2) s(t))`` with
    ``t = log2(|xi|/N)`` and ``s`` the cubic smoothstep, which matches both
    regimes with their first derivatives and is non-increasing.
    """

    N: float
    gamma: float

    def __post_init__(self):
        if not (self.N > 0 and math.isfinite(self.N)):
            raise ValueError(f"N must be positive, got {self.N}")
        if not (0 < self.gamma < 2):
            raise ValueError(f"gamma must lie in (0, 2), got {self.gamma}")
        object.__setattr__(self, "_lattice", {})

    def symbol(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        rho = r / self.N
        out = np.ones_like(rho)
        mid = (rho > 1.0) & (rho < 2.0)
        lr = np.log2(rho[mid])
        out[mid] = np.exp2((self.gamma - 2.0) * smoothstep(lr) * lr)
        tail = rho >= 2.0
        out[tail] = rho[tail] ** (self.gamma - 2.0)
        # vectorized pow can be off by one ulp; pin the junction to the correctly rounded value
        out[rho == 2.0] = math.pow(2.0, self.gamma - 2.0)
        return out

    def __call__(self, r) -> np.ndarray:
        return self.symbol(r)

    def on(self, grid: GridSpec) -> np.ndarray:
        """Symbol values on the lattice of ``grid`` (cached)."""
        cache = self._lattice
        if grid not in cache:
            arr = self.symbol(grid.abs_xi)
            arr.setflags(write=False)
            cache[grid] = arr
        return cache[grid]

    def spec(self) -> MultiplierSpec:
        return MultiplierSpec(self.symbol, radial=True, name=f"I_N(N={self.N}, gamma={self.gamma})")

    def is_identity_on(self, grid: GridSpec) -> bool:
        return bool(np.all(self.on(grid) == 1.0))


def build_m(N: float, gamma: float) -> IMultiplier:
    return IMultiplier(float(N), float(gamma))


def apply_I(u: PhysicalField, m: IMultiplier) -> PhysicalField:
    return PhysicalField(u.grid, u.grid.ifft(m.on(u.grid) * u.grid.fft(u.values)))


def modified_energy(u: PhysicalField, m: IMultiplier, params: NonlinearityParams) -> float:
    """``E(I_N u)``; exactly ``E(u)`` when the multiplier is 1 on the whole lattice."""
    if m.is_identity_on(u.grid):
        return energy(u, params)
    return energy(apply_I(u, m), params)


# -- mapping properties --------------------------------------------------------


def property_symbols(m: IMultiplier, sigma: float, r: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Numerator and denominator symbols of each L2 mapping inequality, evaluated at ``|xi| = r``."""
    N, g = m.N, m.gamma
    mv = m.symbol(r)
    r2 = r * r
    hom = lambda s: np.where(r > 0, np.abs(r) ** s, 0.0 if s > 0 else 1.0)
    return {
        "bounded": (mv, np.ones_like(r)),
        "high_frequency": (hom(sigma) * (1.0 - bump(r / N)), N ** (sigma - 2.0) * r2 * mv),
        "inhomogeneous": ((1.0 + r2) ** (sigma / 2.0), np.sqrt(1.0 + r2 * r2) * mv),
        "h2_lower": ((1.0 + r2) ** (g / 2.0), (1.0 + r2) * mv),
        "h2_upper": ((1.0 + r2) * mv, N ** (2.0 - g) * (1.0 + r2) ** (g / 2.0)),
        "homogeneous": (r2 * mv, N ** (2.0 - g) * hom(g)),
    }


def _sharp_constants(m: IMultiplier, sigma: float, lattice_r: np.ndarray) -> dict[str, float]:
    rmax = max(float(np.max(lattice_r)), 64.0 * m.N)
    dense = np.concatenate([np.linspace(0.0, 4.0 * m.N, 20001), np.geomspace(1e-3, rmax, 20001)])
    r = np.concatenate([dense, np.unique(lattice_r)])
    out = {}
    for name, (num, den) in property_symbols(m, sigma, r).items():
        ok = den > 0
        out[name] = float(np.max(num[ok] / den[ok])) if np.any(ok) else 0.0
    return out


@dataclass
class IPropertyReport:
    N: float
    gamma: float
    sigma: float
    raw: dict
    sharp_constant: dict
    normalized: dict

    def max_normalized(self) -> float:
        return max(self.normalized.values())

    def ok(self, tol: float = 1e-9) -> bool:
        return self.max_normalized() <= 1.0 + tol


def check_I_properties(u: PhysicalField, m: IMultiplier, sigma: float) -> IPropertyReport:
    """L2 ratios ``||A u|| / ||B u||`` for each mapping inequality of ``I_N``.

    ``raw`` holds the plain ratios; ``sharp_constant`` the supremum of the symbol
    ratio ``A/B`` (over a dense radial sample together with the lattice), which
    is the best constant in L2; ``normalized`` is ``raw / sharp_constant``.
    """
    if not (0 <= sigma <= m.gamma):
        raise ValueError(f"need 0 <= sigma <= gamma, got sigma={sigma}, gamma={m.gamma}")
    g = u.grid
    c2 = np.abs(g.fft(u.values)) ** 2
    raw = {}
    for name, (num, den) in property_symbols(m, sigma, g.abs_xi).items():
        a = math.sqrt(float(np.sum(num**2 * c2)))
        b = math.sqrt(float(np.sum(den**2 * c2)))
        if b == 0.0:
            raise ValueError(f"denominator of '{name}' vanishes for this field")
        raw[name] = a / b
    sharp = _sharp_constants(m, sigma, g.abs_xi.ravel())
    norm = {k: raw[k] / sharp[k] if sharp[k] > 0 else 0.0 for k in raw}
    return IPropertyReport(m.N, m.gamma, sigma, raw, sharp, norm)


# -- commutator ----------------------------------------------------------------


def commutator_norm(u: PhysicalField, m: IMultiplier, params: NonlinearityParams) -> float:
    """``|| grad I F(u) - F'(u) . I grad u ||_{L2}``."""
    g = u.grid
    mv = m.on(g)
    Fh = g.fft(F_eval(u, params).values)
    uh = g.fft(u.values)
    total = 0.0
    for k in g.xi:
        lhs = g.ifft(1j * k * mv * Fh)
        Igu = g.ifft(1j * k * mv * uh)
        total += g.integrate(np.abs(lhs - apply_chain_rule(u, Igu, params)) ** 2)
    return math.sqrt(total)


# -- almost conservation -------------------------------------------------------


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or len(x) < 2:
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class SweepResult:
    N_list: list
    sup_increment: list
    slope: float
    window: float
    gamma: float
    delta: float
    raw_energy_drift: float
    initial_modified_energy: list = field(default_factory=list)

    def strictly_decreasing(self) -> bool:
        s = self.sup_increment
        return all(b < a for a, b in zip(s, s[1:]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "sup_increment", "window", "gamma", "delta"])
            for N, inc in zip(self.N_list, self.sup_increment):
                w.writerow([repr(float(N)), repr(inc), repr(self.window), repr(self.gamma), repr(self.delta)])

    def fit_record(self) -> dict:
        return {
            "slope": self.slope,
            "strictly_decreasing": self.strictly_decreasing(),
            "raw_energy_drift": self.raw_energy_drift,
            "window": self.window,
            "gamma": self.gamma,
            "delta": self.delta,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({**self.fit_record(), "table": asdict(self)}, fh, indent=2)


class BlowupInWindowError(RuntimeError):
    pass


def almost_conservation_sweep(
    u0: PhysicalField,
    gamma: float,
    delta: float,
    N_list: Sequence[float],
    window: float,
    evolve_config,
) -> SweepResult:
    """Evolve once over ``[0, window]`` and track ``sup_t |E(I_N u(t)) - E(I_N u0)|`` for each ``N``."""
    from .evolution import strang_evolve

    g = u0.grid
    for N in N_list:
        k = math.log2(N)
        if abs(k - round(k)) > 1e-12:
            raise ValueError(f"N={N} is not dyadic")
        if not N < g.xi_max / 2:
            raise ValueError(f"N={N} must be below xi_max/2 = {g.xi_max / 2:g}; refine the grid")
    params = evolve_config.params
    ms = [build_m(N, gamma) for N in N_list]
    E0 = [modified_energy(u0, m, params) for m in ms]
    sup = [0.0] * len(ms)

    def on_record(t, u):
        for i, m in enumerate(ms):
            sup[i] = max(sup[i], abs(modified_energy(u, m, params) - E0[i]))

    cfg = evolve_config.replace(T_max=window)
    traj = strang_evolve(u0, cfg, on_record=on_record)
    if traj.stop_reason != "T_max":
        raise BlowupInWindowError(
            f"run stopped by '{traj.stop_reason}' at t={traj.t_final:g} inside the window; use a shorter window"
        )
    e = traj.series.array("energy")
    return SweepResult(
        N_list=[float(N) for N in N_list],
        sup_increment=sup,
        slope=loglog_slope(N_list, sup),
        window=window,
        gamma=gamma,
        delta=delta,
        raw_energy_drift=float(np.max(np.abs(e - e[0]))),
        initial_modified_energy=E0,
    )
