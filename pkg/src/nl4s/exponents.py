"""Exponent calculus: Strichartz scaling gaps, admissibility and the regularity thresholds.

Rational inputs give exact :class:`fractions.Fraction` results. Threshold
formulas are evaluated with :mod:`mpmath` at 50 significant digits and
returned as floats.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from numbers import Rational
from typing import Union

import mpmath

__all__ = [
    "ExponentDomainError",
    "ExponentReport",
    "gamma_pq",
    "is_schrodinger_admissible",
    "is_biharmonic_admissible",
    "named_pairs",
    "gamma_lower_conc",
    "gamma_lower_gwp",
    "regularity_ok",
    "default_delta",
    "a_gamma",
    "a_dgamma",
    "compute_paper_exponents",
]

Number = Union[int, float, Fraction]
INF = math.inf
_DPS = 50


class ExponentDomainError(ValueError):
    """A formula was evaluated outside the range where its denominator is positive."""


def _recip(x: Number):
    """``1/x`` with ``1/inf = 0``; exact for rationals."""
    if isinstance(x, float) and math.isinf(x):
        return Fraction(0)
    if isinstance(x, Rational):
        return Fraction(1) / Fraction(x)
    return 1.0 / x


def _exact(*xs) -> bool:
    return all(isinstance(x, Rational) or (isinstance(x, float) and math.isinf(x)) for x in xs)


def gamma_pq(p_t: Number, q_x: Number, d_ana: int):
    """``d/2 - d/q - 4/p``; a :class:`Fraction` when every input is rational or infinite."""
    if d_ana < 1:
        raise ValueError(f"dimension must be >= 1, got {d_ana}")
    for x in (p_t, q_x):
        if not (x >= 1):
            raise ValueError(f"exponent {x} must lie in [1, inf]")
    val = Fraction(d_ana, 2) - d_ana * _recip(q_x) - 4 * _recip(p_t)
    return val if _exact(p_t, q_x) else float(val)


def _in_range(x: Number) -> bool:
    return x >= 2


def is_schrodinger_admissible(p_t: Number, q_x: Number, d_ana: int) -> bool:
    if not (_in_range(p_t) and _in_range(q_x)):
        return False
    if p_t == 2 and math.isinf(q_x) and d_ana == 2:
        return False
    lhs = 2 * _recip(p_t) + d_ana * _recip(q_x)
    return lhs <= Fraction(d_ana, 2) if _exact(p_t, q_x) else lhs <= d_ana / 2 + 1e-15


def is_biharmonic_admissible(p_t: Number, q_x: Number, d_ana: int) -> bool:
    if not (_in_range(p_t) and _in_range(q_x)) or math.isinf(q_x):
        return False
    if p_t == 2 and math.isinf(q_x) and d_ana == 2:
        return False
    g = gamma_pq(p_t, q_x, d_ana)
    return g == 0 if isinstance(g, Fraction) else abs(g) < 1e-12


def named_pairs(d: int, gamma: Fraction = Fraction(3, 2)) -> dict[str, tuple[Fraction, Fraction]]:
    """The biharmonic admissible pairs used by the modified local theory in dimension ``d``.

    Pairs depending on ``gamma`` are included only where both exponents are at
    least 2.
    """
    d = Fraction(d)
    g = Fraction(gamma)
    out = {
        "16/d,4": (16 / d, Fraction(4)),
        "32/11,8d/(4d-11)": (Fraction(32, 11), 8 * d / (4 * d - 11)),
        "16(8-d)/d,4(8-d)/(15-2d)": (16 * (8 - d) / d, 4 * (8 - d) / (15 - 2 * d)),
        "4(d-3),2d(d-3)/(d^2-3d-2)": (4 * (d - 3), 2 * d * (d - 3) / (d * d - 3 * d - 2)),
        "2(d+4)/(d-2g),2d(d+4)/(d^2+8g)": (2 * (d + 4) / (d - 2 * g), 2 * d * (d + 4) / (d * d + 8 * g)),
        "16(d-3)/d,4(d-3)/(2d-7)": (16 * (d - 3) / d, 4 * (d - 3) / (2 * d - 7)),
        "4(8-d)(d-3)/d,2(8-d)(d-3)/(-d^2+11d-26)": (
            4 * (8 - d) * (d - 3) / d,
            2 * (8 - d) * (d - 3) / (-d * d + 11 * d - 26),
        ),
    }
    if 4 * g < d:
        out["2(d+8)/(d-4g),2d(d+8)/(d^2+4d+16g)"] = (
            2 * (d + 8) / (d - 4 * g),
            2 * d * (d + 8) / (d * d + 4 * d + 16 * g),
        )
    return out


# -- thresholds ----------------------------------------------------------------


def _mp(x) -> mpmath.mpf:
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def gamma_lower_conc(d: int) -> float:
    """Lower regularity threshold for the concentration results."""
    with mpmath.workdps(_DPS):
        num = 56 - 3 * d + mpmath.sqrt(137 * d * d + 1712 * d + 3136)
        return float(num / (2 * (2 * d + 32)))


def gamma_lower_gwp(d: int) -> Fraction:
    """Lower regularity threshold ``8d/(3d+8)`` for global existence below the ground state."""
    return Fraction(8 * d, 3 * d + 8)


def regularity_ok(d: int, gamma: Number) -> bool:
    """``ceil(gamma) <= 1 + 8/d``."""
    return math.ceil(Fraction(gamma)) <= 1 + Fraction(8, d)


def default_delta(d: int, gamma: float) -> float:
    """Midpoint of the admissible range ``0 < delta < min(gamma + 8/d - 3, gamma - 1)``.

    Returns NaN when that range is empty.
    """
    top = min(gamma + 8.0 / d - 3.0, gamma - 1.0)
    return top / 2.0 if top > 0 else float("nan")


def _positivity(d, g) -> tuple[mpmath.mpf, mpmath.mpf]:
    q = 16 / d + 4 / g
    c1 = 8 / d - 1 - (2 - g) * q
    return c1, (2 + q) * (2 - g)


def a_gamma(d: int, gamma: Number, delta: Number) -> float:
    """Energy-growth exponent ``2(2+16/d+4/g)(2-g) / ((2-g+delta) - (2-g)(16/d+4/g))``."""
    with mpmath.workdps(_DPS):
        dd, g, de = mpmath.mpf(d), _mp(gamma), _mp(delta)
        q = 16 / dd + 4 / g
        den = (2 - g + de) - (2 - g) * q
        if den <= 0:
            c1, _ = _positivity(dd, g)
            raise ExponentDomainError(
                f"a(gamma) denominator (2-g+delta)-(2-g)(16/d+4/g) = {float(den):.6g} <= 0 "
                f"at d={d}, gamma={float(g)}, delta={float(de)}; requires "
                f"8/d - 1 - (2-g)(16/d+4/g) > 0 (currently {float(c1):.6g}) and delta close "
                f"to its upper end gamma + 8/d - 3"
            )
        return float(2 * (2 + q) * (2 - g) / den)


def a_dgamma(d: int, gamma: Number) -> float:
    """``(4d g^2 + (2d+48) g + 16d) / (16d + (56-3d) g - 16 g^2)``, evaluated as written."""
    with mpmath.workdps(_DPS):
        g = _mp(gamma)
        den = 16 * d + (56 - 3 * d) * g - 16 * g * g
        if den == 0:
            raise ExponentDomainError(f"a(d,gamma) denominator vanishes at d={d}, gamma={float(g)}")
        return float((4 * d * g * g + (2 * d + 48) * g + 16 * d) / den)


@dataclass
class ExponentReport:
    d_ana: int
    gamma: float
    delta: float
    a_gamma: float
    a_dgamma: float
    gamma_lower_conc: float
    gamma_lower_gwp: float
    N_of_T: float
    regularity_ok: bool
    positivity_ok: bool
    gwp_growth: float
    T_of_N: float
    N_of_lambda: float

    def to_dict(self) -> dict:
        return asdict(self)


def compute_paper_exponents(d_ana: int, gamma: Number, delta: Number | None = None, strict: bool = True) -> ExponentReport:
    """Evaluate every threshold and growth exponent at ``(d_ana, gamma, delta)``.

    ``N_of_T`` is the power of the running norm sup in the cutoff ``N(T)``;
    ``gwp_growth`` the power of ``T`` bounding ``||u(T)||_{H^gamma}^2``; ``T_of_N``
    the power of ``N`` reached by the iteration and ``N_of_lambda`` the power of
    the scaling parameter in ``N``. With ``strict=False`` an undefined
    ``a(gamma)`` becomes NaN instead of raising.
    """
    if d_ana < 1:
        raise ValueError(f"d_ana must be >= 1, got {d_ana}")
    if not (0 < gamma < 2):
        raise ValueError(f"gamma must lie in (0, 2), got {gamma}")
    if delta is None:
        delta = default_delta(d_ana, float(gamma))
    if not (delta >= 0):
        raise ValueError(f"delta must be >= 0, got {delta}")
    try:
        ag = a_gamma(d_ana, gamma, delta)
    except ExponentDomainError:
        if strict:
            raise
        ag = float("nan")
    with mpmath.workdps(_DPS):
        dd, g, de = mpmath.mpf(d_ana), _mp(gamma), _mp(delta)
        c1, c2 = _positivity(dd, g)
        pos_ok = bool(c1 > 0 and c2 < c1)
        gden = (2 - g + de) * g - 4 * (2 - g)
        growth = float(4 * (2 - g) / gden) if gden != 0 else float("nan")
        t_of_n = float(2 - g + de - 4 * (2 - g) / g)
        n_of_l = float((2 - g) / g)
    return ExponentReport(
        d_ana=d_ana,
        gamma=float(gamma),
        delta=float(delta),
        a_gamma=ag,
        a_dgamma=a_dgamma(d_ana, gamma),
        gamma_lower_conc=gamma_lower_conc(d_ana),
        gamma_lower_gwp=float(gamma_lower_gwp(d_ana)),
        N_of_T=ag / (2.0 * (2.0 - float(gamma))),
        regularity_ok=regularity_ok(d_ana, gamma),
        positivity_ok=pos_ok,
        gwp_growth=growth,
        T_of_N=t_of_n,
        N_of_lambda=n_of_l,
    )
