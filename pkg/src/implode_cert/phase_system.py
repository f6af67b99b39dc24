"""Vector fields in (Z, V) and (Y, U), the maps between them, root curves and regions.

All functions are generic over the scalar type: floats, mpmath numbers,
Fractions and field elements all work as long as the parameters are given
in a compatible type (see ``Params.num``).
"""

from __future__ import annotations

import enum
import math
from fractions import Fraction

import mpmath

__all__ = [
    "DomainError",
    "PoleAtRoot",
    "RegionTag",
    "field_ZV",
    "field_ZV_direct",
    "field_YU",
    "field_desingularized",
    "f_poly",
    "YU_of_ZV",
    "ZV_of_YU",
    "Y_of_ZV",
    "U_of_ZV",
    "Z_of_YU",
    "V_of_YU",
    "jacobian_M2",
    "U_dY",
    "U_dU",
    "U_g",
    "Z_V",
    "Z_plus",
    "Z_minus",
    "root_curves",
    "dZ_in_YU",
    "region_margins",
    "classify",
]


class DomainError(ValueError):
    """Point outside the region where the coordinate maps are bijective."""


class PoleAtRoot(ZeroDivisionError):
    """A root curve was evaluated at its pole."""


class RegionTag(enum.Enum):
    OmegaBf = "OmegaBf"
    OmegaTri1 = "OmegaTri1"
    OmegaTri2 = "OmegaTri2"
    OmegaFar = "OmegaFar"
    Outside = "Outside"


def _sqrt(x):
    if isinstance(x, Fraction):
        n, d = x.numerator, x.denominator
        if n >= 0:
            rn, rd = math.isqrt(n), math.isqrt(d)
            if rn * rn == n and rd * rd == d:
                return Fraction(rn, rd)
        return mpmath.sqrt(mpmath.mpf(n) / d)
    if isinstance(x, float):
        return math.sqrt(x)
    return mpmath.sqrt(x)


# ------------------------------------------------------------------ (Z, V)


def field_ZV(Z, V, params):
    """(Delta_V, Delta_Z) from the factored forms."""
    d, g, ell = params.d, params.gamma, params.ell
    one = 1 - V * V
    dV = (d - 1) * one * (one * Z / (g + 1) - V * (1 - V * Z))
    dZ = Z * ((1 - Z * V) ** 2 - ell * (V - Z) ** 2)
    return dV, dZ


def field_ZV_direct(Z, V, params):
    """Same field through the root-factored expressions (oracle for field_ZV)."""
    d, g, ell = params.d, params.gamma, params.ell
    zv = (1 + g) * V / (1 + g * V * V)
    dV = (d - 1) * (1 - V * V) * (1 + g * V * V) * (Z - zv) / (g + 1)
    s = _sqrt(ell)
    zp = (s * V + 1) / (V + s)
    zm = (-s * V + 1) / (V - s)
    dZ = Z * (V * V - ell) * (Z - zp) * (Z - zm)
    return dV, dZ


def Z_V(V, params):
    g = params.gamma
    return (1 + g) * V / (1 + g * V * V)


def Z_plus(V, params):
    s = params.sqrt_ell
    den = V + s
    if den == 0:
        raise PoleAtRoot("Z_+ at V = -sqrt(ell)")
    return (s * V + 1) / den


def Z_minus(V, params):
    s = params.sqrt_ell
    den = V - s
    if den == 0:
        raise PoleAtRoot("Z_- at V = sqrt(ell)")
    return (-s * V + 1) / den


# ------------------------------------------------------------------ (Y, U)


def f_poly(Y, params):
    return -params.eps - params.A * Y + params.B * Y * Y


def field_YU(Y, U, params):
    """(Delta_U, Delta_Y)."""
    f = f_poly(Y, params)
    dU = 2 * U * (U + f + (params.d - 1) * Y * (1 - Y))
    dY = (params.d * Y - 1) * U + (Y - 1) * f
    return dU, dY


def field_desingularized(Y, U, params):
    """(dY/dxi, dU/dxi) = (Delta_Y, Delta_U)."""
    dU, dY = field_YU(Y, U, params)
    return dY, dU


def U_dY(Y, params):
    den = params.d * Y - 1
    if den == 0:
        raise PoleAtRoot("U_dY at Y = 1/d")
    return -(Y - 1) * f_poly(Y, params) / den


def U_dU(Y, params):
    return -f_poly(Y, params) - (params.d - 1) * Y * (1 - Y)


def U_g(Y, params):
    return params.ell * (Y + params.gamma) ** 2 - (1 - Y) ** 2


def root_curves(x, params):
    """All root curves at Y = x (for U_*) and V = x (for Z_*); poles give None."""
    out = {}
    for name, fn in (("U_dY", U_dY), ("U_dU", U_dU), ("U_g", U_g),
                     ("Z_V", Z_V), ("Z_plus", Z_plus), ("Z_minus", Z_minus)):
        try:
            out[name] = fn(x, params)
        except PoleAtRoot:
            out[name] = None
    return out


# ------------------------------------------------------------------ maps


def _in_RZV(Z, V):
    return 0 < V < 1 and 0 < Z * V < 1


def Y_of_ZV(Z, V, params):
    g = params.gamma
    return ((1 - V * V) * Z - (g + 1) * V * (1 - V * Z)) / (Z * (1 - V * V))


def U_of_ZV(Z, V, params):
    g = params.gamma
    return (g + 1) ** 2 * (1 - V * Z) ** 2 / ((1 - V * V) * Z * Z)


def YU_of_ZV(Z, V, params, check=True):
    if check and not _in_RZV(Z, V):
        raise DomainError(f"(Z, V) = ({Z}, {V}) outside 0 < V < 1, 0 < ZV < 1")
    return Y_of_ZV(Z, V, params), U_of_ZV(Z, V, params)


def Z_of_YU(Y, U, params):
    g = params.gamma
    return _sqrt(U + (1 - Y) ** 2) / (U / (1 + g) + 1 - Y)


def V_of_YU(Y, U, params):
    return (1 - Y) / _sqrt(U + (1 - Y) ** 2)


def ZV_of_YU(Y, U, params, check=True):
    if check and not (U > 0 and Y < 1):
        raise DomainError(f"(Y, U) = ({Y}, {U}) outside U > 0, Y < 1")
    return Z_of_YU(Y, U, params), V_of_YU(Y, U, params)


def jacobian_M2(Z, V, params):
    """d(Y, U)/d(Z, V) as [[Y_Z, Y_V], [U_Z, U_V]] (closed form)."""
    g = params.gamma
    w = 1 - V * V
    # Y = 1 - (g+1) V (1 - VZ) / (Z w)
    Y_Z = (g + 1) * V / (Z * Z * w)
    Y_V = -(g + 1) * ((1 - 2 * V * Z) * w + 2 * V * V * (1 - V * Z)) / (Z * w * w)
    s = 1 - V * Z
    U_Z = (g + 1) ** 2 * (-2 * V * s * Z - 2 * s * s) / (w * Z ** 3)
    U_V = (g + 1) ** 2 * (-2 * Z * s * w + 2 * V * s * s) / (w * w * Z * Z)
    return [[Y_Z, Y_V], [U_Z, U_V]]


def dZ_in_YU(Y, U, params):
    """Delta_Z written in (Y, U)."""
    Z = Z_of_YU(Y, U, params)
    g = params.gamma
    num = Z * U * U * (U - U_g(Y, params))
    den = (U + (1 - Y) ** 2) * (U + (1 + g) * (1 - Y)) ** 2
    return num / den


# ------------------------------------------------------------------ regions


def region_margins(tag, state, params, barriers=None):
    """Signed margins; the point lies in the region iff every margin is > 0."""
    if tag is RegionTag.OmegaFar:
        Z, V = state
        return {
            "V_gt_-1": V + 1,
            "V_lt_1": 1 - V,
            "Z_gt_Zplus": Z - Z_plus(V, params),
            "Z_gt_ZV": Z - Z_V(V, params),
            "Z_gt_V": Z - V,
        }
    Y, U = state
    if tag is RegionTag.OmegaBf:
        if barriers is None:
            raise ValueError("OmegaBf needs the far barriers")
        return {
            "Y_gt_0": Y,
            "Y_lt_YO": params.Y_O - Y,
            "above_upper": U - barriers.upper(Y),
            "below_lower": barriers.lower(Y) - U,
        }
    common = {
        "Y_gt_-gamma": Y + params.gamma,
        "Y_lt_0": -Y,
        "U_gt_0": U,
        "below_U_g": U_g(Y, params) - U,
    }
    if tag is RegionTag.OmegaTri1:
        common["below_U_dU"] = U_dU(Y, params) - U
        common["above_U_dY"] = U - U_dY(Y, params)
        return common
    if tag is RegionTag.OmegaTri2:
        common["below_U_dY"] = U_dY(Y, params) - U
        return common
    raise ValueError(tag)


def in_region(tag, state, params, barriers=None):
    return all(m > 0 for m in region_margins(tag, state, params, barriers).values())


def classify(state, params, barriers=None, coords="YU"):
    """First matching region tag, or Outside."""
    if coords == "ZV":
        return RegionTag.OmegaFar if in_region(RegionTag.OmegaFar, state, params) else RegionTag.Outside
    tags = [RegionTag.OmegaTri1, RegionTag.OmegaTri2]
    if barriers is not None:
        tags.insert(0, RegionTag.OmegaBf)
    for tag in tags:
        if in_region(tag, state, params, barriers):
            return tag
    return RegionTag.Outside
