"""Strang split-step integration, blowup detection and the scaling test."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .i_operator import IMultiplier, build_m
from .observables import (
    NonlinearityParams,
    ObservableSeries,
    concentration,
    energy,
    energy_parts,
)
from .spectral import GridSpec, PhysicalField

__all__ = [
    "EvolveConfig",
    "Trajectory",
    "IntegrationFailure",
    "BlowupReport",
    "linear_step",
    "nonlinear_step",
    "strang_step",
    "strang_evolve",
    "fit_blowup_rate",
    "detect_blowup_fit",
    "rescale_field",
    "richardson_error",
    "ScalingReport",
    "scaling_test",
]

BLOWUP_REASONS = ("norm_threshold", "dt_underflow", "spectral_tail")


class IntegrationFailure(RuntimeError):
    def __init__(self, message: str, last_good: PhysicalField, t: float):
        super().__init__(message)
        self.last_good = last_good
        self.t = t


@dataclass(frozen=True)
class EvolveConfig:
    """Integrator settings.

    The step is ``min(dt0, c_dt / (1 + ||u||_inf^p))``, shortened to land on
    ``T_max``. ``c_dt`` defaults to ``0.1 * dt0``. Observables are recorded every
    ``record_every`` steps and a snapshot is kept every ``snapshot_every``
    records (0 disables snapshots).
    """

    params: NonlinearityParams
    dt0: float = 1e-3
    c_dt: Optional[float] = None
    T_max: float = 1.0
    gamma: float = 1.5
    N: Optional[float] = None
    record_every: int = 10
    snapshot_every: int = 0
    norm_factor: float = 1e3
    dt_min: float = 1e-12
    tail_stop: float = 1e-3
    tail_trust: float = 1e-6
    max_steps: int = 50_000_000

    def __post_init__(self):
        if not (self.dt0 > 0):
            raise ValueError("dt0 must be positive")
        if self.c_dt is not None and not (self.c_dt > 0):
            raise ValueError("c_dt must be positive")
        if not (self.T_max > 0):
            raise ValueError("T_max must be positive")
        for name in ("norm_factor", "dt_min", "tail_stop", "tail_trust"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.record_every < 1 or self.snapshot_every < 0:
            raise ValueError("record_every must be >= 1 and snapshot_every >= 0")

    @property
    def c(self) -> float:
        return 0.1 * self.dt0 if self.c_dt is None else self.c_dt

    def replace(self, **kw) -> "EvolveConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["params"] = self.params.to_dict()
        d["c_dt"] = self.c
        return d


@dataclass
class Trajectory:
    grid: GridSpec
    config: EvolveConfig
    series: ObservableSeries
    snapshots: list = field(default_factory=list)
    stop_reason: str = "T_max"
    final: Optional[PhysicalField] = None
    steps: int = 0
    initial_hgamma: float = float("nan")

    @property
    def t_final(self) -> float:
        return self.series.times[-1]

    @property
    def trusted(self) -> np.ndarray:
        return self.series.array("tail") <= self.config.tail_trust

    @property
    def blew_up(self) -> bool:
        return self.stop_reason in BLOWUP_REASONS


def linear_symbol(grid: GridSpec, tau: float, params: NonlinearityParams) -> np.ndarray:
    return np.exp(1j * tau * (grid.xi2**2 - params.epsilon * grid.xi2))


def linear_step(u: PhysicalField, tau: float, params: NonlinearityParams) -> PhysicalField:
    """Exact flow of ``i u_t + Delta^2 u + epsilon Delta u = 0`` over ``tau``."""
    g = u.grid
    return PhysicalField(g, g.ifft(linear_symbol(g, tau, params) * g.fft(u.values)))


def nonlinear_step(u: PhysicalField, tau: float, params: NonlinearityParams) -> PhysicalField:
    """Exact flow of ``i u_t + mu |u|^p u = 0``: a pointwise phase rotation."""
    v = u.values
    return PhysicalField(u.grid, v * np.exp(1j * tau * params.mu * np.abs(v) ** params.p))


def strang_step(u: PhysicalField, tau: float, params: NonlinearityParams) -> PhysicalField:
    """One symmetric step ``L(tau/2) N(tau) L(tau/2)``; a negative ``tau`` steps backwards."""
    return linear_step(nonlinear_step(linear_step(u, tau / 2.0, params), tau, params), tau / 2.0, params)


def _hg_weight(grid: GridSpec, gamma: float) -> np.ndarray:
    return (1.0 + grid.xi2) ** gamma


def strang_evolve(
    u0: PhysicalField,
    config: EvolveConfig,
    on_record: Optional[Callable[[float, PhysicalField], None]] = None,
    alpha: Optional[Callable[[float], float]] = None,
) -> Trajectory:
    """Integrate with ``L(dt/2) N(dt) L(dt/2)`` until ``T_max`` or a stop rule.

    ``alpha`` (a function of time) turns on the concentration observable.
    """
    g = u0.grid
    p = config.params
    c = config.c
    w_h = _hg_weight(g, config.gamma)
    w_d = g.xi2**2
    top = g.abs_xi > g.xi_max / 2.0
    m: Optional[IMultiplier] = build_m(config.N, config.gamma) if config.N else None
    mv = m.on(g) if m is not None else None

    series = ObservableSeries()
    traj = Trajectory(g, config, series)
    u = np.asarray(u0.values, dtype=complex).copy()
    uh = g.fft(u)
    half_cache: dict = {}

    def record(t: float, dt: float) -> tuple[float, float]:
        a2 = np.abs(uh) ** 2
        tot = float(np.sum(a2))
        f = PhysicalField(g, u)
        parts = energy_parts(f, p)
        hgam = math.sqrt(float(np.sum(w_h * a2)))
        tail = float(np.sum(a2[top])) / tot if tot > 0 else 0.0
        row = dict(
            times=t,
            mass=tot,
            energy=sum(parts.values()),
            hgamma=hgam,
            delta_norm=math.sqrt(float(np.sum(w_d * a2))),
            sup_norm=float(np.max(np.abs(u))),
            tail=tail,
            dt=dt,
        )
        if m is not None:
            row["modified_energy"] = energy(PhysicalField(g, g.ifft(mv * uh)), p)
        if alpha is not None:
            row["concentration"] = concentration(f, min(alpha(t), g.L))[0]
        series.append(**row)
        if config.snapshot_every and (len(series) - 1) % config.snapshot_every == 0:
            traj.snapshots.append((t, u.copy()))
        if on_record is not None:
            on_record(t, f)
        return hgam, tail

    t = 0.0
    H0, _ = record(0.0, float("nan"))
    traj.initial_hgamma = H0
    steps = 0
    reason = "T_max"
    last_dt = float("nan")
    while t < config.T_max:
        dt = min(config.dt0, c / (1.0 + float(np.max(np.abs(u))) ** p.p))
        if dt < config.dt_min:
            reason = "dt_underflow"
            break
        if t + dt > config.T_max:
            dt = config.T_max - t
        half = half_cache.get(dt)
        if half is None:
            half = linear_symbol(g, 0.5 * dt, p)
            if len(half_cache) > 4:
                half_cache.clear()
            half_cache[dt] = half
        prev = u
        v = g.ifft(half * uh)
        v = v * np.exp(1j * dt * p.mu * np.abs(v) ** p.p)
        uh = half * g.fft(v)
        u = g.ifft(uh)
        if not np.all(np.isfinite(uh)):
            raise IntegrationFailure(f"non-finite field after step at t={t:g}", PhysicalField(g, prev), t)
        t = t + dt
        steps += 1
        last_dt = dt
        if steps >= config.max_steps:
            reason = "max_steps"
            break
        final = t >= config.T_max
        if steps % config.record_every == 0 or final:
            hgam, tail = record(t, dt)
            if hgam > config.norm_factor * H0:
                reason = "norm_threshold"
                break
            if tail > config.tail_stop:
                reason = "spectral_tail"
                break
    if series.times[-1] < t:
        record(t, last_dt)
    traj.stop_reason = reason
    traj.final = PhysicalField(g, u)
    traj.steps = steps
    return traj


# -- blowup ----------------------------------------------------------------------


def fit_blowup_rate(times: Sequence[float], values: Sequence[float]) -> dict:
    """Fit ``log y = c - beta log(T* - t)`` with ``T*`` chosen to minimize the residual.

    ``T* = t_last + exp(s)`` where ``s`` is found by bounded Brent search;
    for each trial ``T*`` the pair ``(c, beta)`` is a linear least-squares fit.
    """
    t = np.asarray(times, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    if len(t) < 3:
        raise ValueError("need at least three samples to fit a blowup rate")
    span = float(t[-1] - t[0])
    if span <= 0:
        raise ValueError("samples must span a positive time interval")

    def lsq(s):
        x = np.log(t[-1] + math.exp(s) - t)
        A = np.vstack([np.ones_like(x), -x]).T
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        r = y - A @ coef
        return float(np.sum(r * r)), coef

    lo, hi = math.log(span * 1e-6), math.log(span * 10.0)
    opt = minimize_scalar(lambda s: lsq(s)[0], bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    res, coef = lsq(opt.x)
    return {
        "T_star": float(t[-1] + math.exp(opt.x)),
        "beta": float(coef[1]),
        "log_C": float(coef[0]),
        "residual": math.sqrt(res / len(t)),
        "at_upper_bound": bool(abs(opt.x - hi) < 1e-6),
    }


@dataclass
class BlowupReport:
    detected: bool
    T_star_estimate: float = float("nan")
    rate_exponent: float = float("nan")
    fit_residual: float = float("nan")
    lower_bound: float = float("nan")
    rate_ok: bool = False
    n_fit: int = 0
    fit_window: tuple = (float("nan"), float("nan"))
    stop_reason: str = ""
    reason: str = ""
    concentration: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def detect_blowup_fit(traj: Trajectory, threshold: float = 4.0, min_samples: int = 8, monotone_tol: float = 1e-3) -> BlowupReport:
    """Classify a trajectory and fit the ``H^gamma`` growth rate near the stop time.

    The fit uses trusted records (spectral tail below ``tail_trust``) whose
    norm exceeds ``threshold`` times the initial one. A series that is not
    monotone there (beyond ``monotone_tol`` relative dips) is classified as
    no blowup.
    """
    gamma = traj.config.gamma
    rep = BlowupReport(detected=False, stop_reason=traj.stop_reason, lower_bound=gamma / 4.0)
    if not traj.blew_up:
        rep.reason = f"run ended by '{traj.stop_reason}'"
        return rep
    s = traj.series
    t = s.array("times")
    h = s.array("hgamma")
    sel = (h >= threshold * traj.initial_hgamma) & traj.trusted
    # keep only the final contiguous stretch of selected records
    idx = np.flatnonzero(sel)
    if len(idx) < min_samples:
        rep.reason = f"only {len(idx)} trusted samples above {threshold}x initial norm"
        return rep
    breaks = np.flatnonzero(np.diff(idx) > 1)
    if len(breaks):
        idx = idx[breaks[-1] + 1 :]
    if len(idx) < min_samples:
        rep.reason = f"only {len(idx)} contiguous trusted samples above threshold"
        return rep
    hw = h[idx]
    running = np.maximum.accumulate(hw)
    if np.any(hw < running * (1 - monotone_tol)):
        rep.reason = "norm series is not monotone in the fit window"
        return rep
    fit = fit_blowup_rate(t[idx], hw)
    if fit["at_upper_bound"]:
        rep.reason = "fitted blowup time runs to the search limit"
        return rep
    rep.detected = True
    rep.T_star_estimate = fit["T_star"]
    rep.rate_exponent = fit["beta"]
    rep.fit_residual = fit["residual"]
    rep.rate_ok = fit["beta"] >= gamma / 4.0
    rep.n_fit = int(len(idx))
    rep.fit_window = (float(t[idx[0]]), float(t[idx[-1]]))
    return rep


# -- scaling -------------------------------------------------------------------


def rescale_field(u: PhysicalField, lam: float) -> PhysicalField:
    """``lam^{-d/2} u(x / lam)`` on the grid with half-width ``lam L`` (same samples, rescaled amplitude)."""
    g2 = u.grid.rescaled(lam)
    return PhysicalField(g2, u.values * lam ** (-u.grid.d_sim / 2.0))


def _rel_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def richardson_error(u0: PhysicalField, config: EvolveConfig, t: float) -> float:
    """Relative error estimate of the run at step factor ``c`` from a comparison with ``c/2``."""
    a = strang_evolve(u0, config.replace(T_max=t))
    b = strang_evolve(u0, config.replace(T_max=t, c_dt=config.c / 2.0, dt0=config.dt0 / 2.0))
    return _rel_l2(a.final.values, b.final.values) * 4.0 / 3.0


@dataclass
class ScalingReport:
    lam: float
    t: float
    discrepancy: float
    richardson: float
    mass_original: float
    mass_rescaled: float

    @property
    def ok(self) -> bool:
        return self.discrepancy == 0.0 if self.lam == 1 else self.discrepancy < 10.0 * self.richardson


def scaling_test(u0: PhysicalField, lam: float, config: EvolveConfig, t: float = 0.1) -> ScalingReport:
    """Compare the flow of ``u0`` with the flow of its mass-critical rescaling.

    The rescaled run lives on half-width ``lam L`` with the same ``n``, so grid
    samples correspond one to one. Its step parameters are multiplied by
    ``lam^4`` so both runs take comparable steps in their own time units.
    """
    if lam not in (0.5, 1, 1.0, 2, 2.0):
        raise ValueError(f"lambda must be 1/2, 1 or 2, got {lam}")
    d = u0.grid.d_sim
    p = config.params.p
    if abs(p - 8.0 / d) > 1e-12:
        raise ValueError("the scaling symmetry needs the mass-critical power p = 8/d")
    if config.params.epsilon != 0:
        raise ValueError("the scaling symmetry needs epsilon = 0")
    base = strang_evolve(u0, config.replace(T_max=t))
    ul = rescale_field(u0, lam)
    l4 = lam**4
    cfg_l = config.replace(T_max=l4 * t, dt0=config.dt0 * l4, c_dt=config.c * l4)
    run_l = strang_evolve(ul, cfg_l)
    back = run_l.final.values * lam ** (d / 2.0)
    disc = _rel_l2(back, base.final.values)
    rich = richardson_error(u0, config, t) if lam != 1 else 0.0
    return ScalingReport(
        lam=float(lam),
        t=t,
        discrepancy=disc,
        richardson=rich,
        mass_original=float(np.sum(np.abs(u0.values) ** 2) * u0.grid.dV),
        mass_rescaled=float(np.sum(np.abs(ul.values) ** 2) * ul.grid.dV),
    )
