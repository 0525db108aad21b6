"""
Bookcover curves and their parallel (Fermi) coordinates.

The curve consists of two half-lines leaving the points (0, +rho) and
(0, -rho) with slopes +-tan(beta/2), joined on the left by the circular arc
tangent to both. Arc length ``s`` runs from the lower half-line (s < -s0)
through the arc (|s| <= s0, leftmost point at s = 0) to the upper half-line
(s > s0).

Normal convention: ``u > 0`` points toward the centre of curvature, i.e. into
the region enclosed by the book. The unit normal is ``(T_y, -T_x)`` for the
unit tangent ``T``; with this choice the area element is ``(1 - u*gamma) ds du``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Curve:
    """Bookcover curve with half-separation ``rho`` and opening ``beta``."""

    rho: float
    beta: float
    tail_length: float

    @property
    def arc_radius(self) -> float:
        return self.rho / math.cos(0.5 * self.beta)

    @property
    def arc_center(self) -> tuple[float, float]:
        return (self.rho * math.tan(0.5 * self.beta), 0.0)

    @property
    def s0(self) -> float:
        return 0.5 * self.arc_radius * (math.pi - self.beta)

    @property
    def min_x(self) -> float:
        """Leftmost x coordinate of the curve."""
        return self.arc_center[0] - self.arc_radius

    def half_gap(self, x):
        """Half the vertical distance between the two half-lines at abscissa ``x >= 0``."""
        return self.rho + np.asarray(x) * math.tan(0.5 * self.beta)


class FermiCoords(NamedTuple):
    s: float
    u: float


def build_bookcover(rho: float, beta: float, tail_length: float = 5.0) -> Curve:
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    if not 0.0 <= beta < 0.5 * math.pi:
        raise DomainError(f"beta must lie in [0, pi/2), got {beta}")
    if not tail_length > 0:
        raise DomainError(f"tail_length must be positive, got {tail_length}")
    return Curve(float(rho), float(beta), float(tail_length))


def curvature(c: Curve, s):
    """Signed curvature: 1/R on the arc (|s| <= s0, endpoints included), 0 elsewhere."""
    s = np.asarray(s, dtype=float)
    k = np.where(np.abs(s) <= c.s0, 1.0 / c.arc_radius, 0.0)
    return k if k.ndim else float(k)


def tangent_at(c: Curve, s):
    """Unit tangent, shape ``s.shape + (2,)``."""
    s = np.asarray(s, dtype=float)
    b = 0.5 * c.beta
    phi = math.pi - s / c.arc_radius
    tx = np.where(s > c.s0, math.cos(b), np.where(s < -c.s0, -math.cos(b), np.sin(phi)))
    ty = np.where(np.abs(s) > c.s0, math.sin(b), -np.cos(phi))
    return np.stack([tx, ty], axis=-1)


def point_at(c: Curve, s, u=0.0):
    """Cartesian point ``Gamma(s) + u N(s)``; vectorized over ``s`` and ``u``."""
    s, u = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(u, dtype=float))
    b = 0.5 * c.beta
    cb, sb = math.cos(b), math.sin(b)
    R = c.arc_radius
    cx, cy = c.arc_center

    phi = math.pi - s / R
    x_arc = cx + (R - u) * np.cos(phi)
    y_arc = cy + (R - u) * np.sin(phi)

    t_top = s - c.s0
    x_top = t_top * cb + u * sb
    y_top = c.rho + t_top * sb - u * cb

    t_bot = -s - c.s0
    x_bot = t_bot * cb + u * sb
    y_bot = -c.rho - t_bot * sb + u * cb

    top = s > c.s0
    bot = s < -c.s0
    x = np.where(top, x_top, np.where(bot, x_bot, x_arc))
    y = np.where(top, y_top, np.where(bot, y_bot, y_arc))
    out = np.stack([x, y], axis=-1)
    return out if out.ndim > 1 else (float(out[0]), float(out[1]))


def fermi_coords(c: Curve, x, y):
    """
    Nearest-point parallel coordinates for arbitrary points.

    Returns ``(s, u, dist)``. The pair (s, u) is the genuine chart value only
    where ``dist`` is below the tubular radius (any ``a < rho``); elsewhere it
    is the projection onto the nearest piece and carries no guarantee.
    """
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    b = 0.5 * c.beta
    cb, sb = math.cos(b), math.sin(b)
    R = c.arc_radius
    cx, cy = c.arc_center

    # arc wedge: angular range [pi/2 + b, 3pi/2 - b] around the centre, boundary rays included
    dx, dy = x - cx, y - cy
    ang = np.mod(np.arctan2(dy, dx), 2.0 * math.pi)
    in_wedge = (ang >= 0.5 * math.pi + b) & (ang <= 1.5 * math.pi - b)
    r = np.hypot(dx, dy)
    s_arc = R * (math.pi - ang)
    u_arc = R - r

    # upper half-line from (0, rho) along (cb, sb), inward normal (sb, -cb)
    px, py = x, y - c.rho
    t_top = px * cb + py * sb
    u_top = px * sb - py * cb
    d_top = np.where(t_top >= 0.0, np.abs(u_top), np.hypot(px, py))

    # lower half-line from (0, -rho) along (cb, -sb), inward normal (sb, cb)
    qx, qy = x, y + c.rho
    t_bot = qx * cb - qy * sb
    u_bot = qx * sb + qy * cb
    d_bot = np.where(t_bot >= 0.0, np.abs(u_bot), np.hypot(qx, qy))

    use_top = d_top <= d_bot
    s_lin = np.where(use_top, c.s0 + np.maximum(t_top, 0.0), -c.s0 - np.maximum(t_bot, 0.0))
    u_lin = np.where(use_top, u_top, u_bot)
    d_lin = np.where(use_top, d_top, d_bot)

    s = np.where(in_wedge, s_arc, s_lin)
    u = np.where(in_wedge, u_arc, u_lin)
    dist = np.where(in_wedge, np.abs(u_arc), d_lin)
    return s, u, dist


def fermi_project(c: Curve, p, a: float) -> Optional[FermiCoords]:
    """Chart value of ``p`` in the strip of half-width ``a``; ``None`` outside it."""
    if not 0 < a < c.rho:
        raise DomainError(f"need 0 < a < rho for the parallel chart, got a={a}, rho={c.rho}")
    s, u, dist = fermi_coords(c, p[0], p[1])
    if float(dist) < a:
        return FermiCoords(float(s), float(u))
    return None
