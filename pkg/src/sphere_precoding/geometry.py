"""Coordinate algebra for the planar array, mobile users, scatterers and zones.

Points are plain ``numpy`` arrays of shape ``(3,)`` (or ``(..., 3)`` for
batches) holding metres in a right-handed x-y-z frame. The array panel lies
on the y-z plane, facing +x, centred at ``(0, 0, height)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


def wavelength(frequency_hz: float) -> float:
    """Free-space wavelength in metres for a carrier frequency in Hz."""
    if frequency_hz <= 0:
        raise ValueError("carrier frequency must be positive")
    return SPEED_OF_LIGHT / frequency_hz


def as_point(point) -> np.ndarray:
    p = np.asarray(point, dtype=float)
    if p.shape[-1:] != (3,):
        raise ValueError(f"expected 3-vector(s), got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point has non-finite components")
    return p


def unit_direction(theta, phi) -> np.ndarray:
    """Unit vector(s) ``[sin(phi)cos(theta), sin(phi)sin(theta), cos(phi)]``.

    ``theta`` is the azimuth and ``phi`` the polar (elevation-from-zenith)
    angle. Angles are not required to be in their principal ranges; the
    trigonometric functions reduce them.
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    sin_phi = np.sin(phi)
    return np.stack([sin_phi * np.cos(theta), sin_phi * np.sin(theta), np.cos(phi)], axis=-1)


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array on the y-z plane.

    Attributes:
        n_v: number of rows (vertical elements).
        n_h: number of columns (horizontal elements).
        spacing: element spacing in metres.
        height: mount height of the array centre in metres.
    """

    n_v: int
    n_h: int
    spacing: float
    height: float = 0.0

    def __post_init__(self):
        if int(self.n_v) != self.n_v or int(self.n_h) != self.n_h:
            raise ValueError("element counts must be integers")
        if self.n_v < 1 or self.n_h < 1:
            raise ValueError("array needs at least one element per axis")
        if not self.spacing > 0:
            raise ValueError("element spacing must be positive")
        if self.height < 0:
            raise ValueError("mount height must be non-negative")

    @property
    def num_elements(self) -> int:
        return self.n_v * self.n_h

    @property
    def center(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.height])

    def positions(self) -> np.ndarray:
        """All element coordinates as an ``(N, 3)`` array in element order.

        Element ``n`` (1-based) sits in row ``v`` and column ``h`` with
        ``n = h + n_h * v + 1``, so the column index varies fastest.
        """
        v, h = np.divmod(np.arange(self.num_elements), self.n_h)
        y = (h - (self.n_h - 1) / 2.0) * self.spacing
        z = self.height + (v - (self.n_v - 1) / 2.0) * self.spacing
        return np.stack([np.zeros_like(y), y, z], axis=-1)

    def aperture(self) -> float:
        """Panel diagonal between the outermost element centres."""
        return float(np.hypot((self.n_h - 1) * self.spacing, (self.n_v - 1) * self.spacing))


def antenna_position(geom: ArrayGeometry, n: int) -> np.ndarray:
    """Coordinates of the ``n``-th element (1-based, row-major)."""
    if not 1 <= n <= geom.num_elements:
        raise IndexError(f"element index {n} outside 1..{geom.num_elements}")
    v, h = divmod(n - 1, geom.n_h)
    return np.array(
        [
            0.0,
            (h - (geom.n_h - 1) / 2.0) * geom.spacing,
            geom.height + (v - (geom.n_v - 1) / 2.0) * geom.spacing,
        ]
    )


def element_point_distance(geom: ArrayGeometry, n: int, point) -> float:
    return float(np.linalg.norm(antenna_position(geom, n) - as_point(point)))


def element_distances(geom: ArrayGeometry, points) -> np.ndarray:
    """Distances from every element to every point.

    Returns an ``(..., N)`` array for ``points`` of shape ``(..., 3)``.
    """
    pts = as_point(points)
    diff = pts[..., None, :] - geom.positions()
    return np.sqrt(np.einsum("...i,...i->...", diff, diff))


@dataclass(frozen=True)
class UserKinematics:
    """Initial position plus a straight-line motion over a time horizon."""

    initial: np.ndarray
    speed: float
    heading: float
    elevation: float
    horizon: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "initial", as_point(self.initial).copy())
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        if self.horizon < 0:
            raise ValueError("time horizon must be non-negative")

    @property
    def move_distance(self) -> float:
        return self.speed * self.horizon

    def final_position(self) -> np.ndarray:
        return displaced_position(self, self.move_distance, self.heading, self.elevation)


@dataclass(frozen=True)
class SphericalZone:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center).copy())
        if self.radius < 0:
            raise ValueError("zone radius must be non-negative")

    def contains(self, point, atol: float = 1e-12) -> bool:
        return bool(np.linalg.norm(as_point(point) - self.center) <= self.radius + atol)


def displaced_position(kin: UserKinematics, dx, theta, phi) -> np.ndarray:
    """Position after moving ``dx`` metres from ``kin.initial`` along (theta, phi).

    Broadcasts over array-valued ``dx``/``theta``/``phi``.
    """
    dx = np.asarray(dx, dtype=float)
    if np.any(dx < 0):
        raise ValueError("moving distance must be non-negative")
    return kin.initial + dx[..., None] * unit_direction(theta, phi)


def scatterer_position(q, r_s, theta_s, phi_s) -> np.ndarray:
    """Scatterer at range ``r_s`` and angles (theta_s, phi_s) around ``q``."""
    r_s = np.asarray(r_s, dtype=float)
    if np.any(r_s < 0):
        raise ValueError("scatterer range must be non-negative")
    return as_point(q) + r_s[..., None] * unit_direction(theta_s, phi_s)


def transmission_zone(kin: UserKinematics, scatter_radius: float) -> SphericalZone:
    """Sphere around the initial position covering user and scatterers during motion."""
    if scatter_radius < 0:
        raise ValueError("scatter radius must be non-negative")
    return SphericalZone(kin.initial, kin.move_distance + scatter_radius)


class NearFieldBounds(NamedTuple):
    fresnel: float
    fraunhofer: float
    degenerate: bool


def near_field_bounds(geom: ArrayGeometry, wavelength: float) -> NearFieldBounds:
    """Fresnel (0.62 sqrt(D^3/lambda)) and Fraunhofer (2 D^2/lambda) distances.

    ``D`` is the panel diagonal. A single-element array has no aperture and
    returns zero for both bounds with ``degenerate=True``.
    """
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    d = geom.aperture()
    if d == 0.0:
        return NearFieldBounds(0.0, 0.0, True)
    return NearFieldBounds(0.62 * np.sqrt(d**3 / wavelength), 2.0 * d**2 / wavelength, False)
