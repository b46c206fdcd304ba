"""One-sphere channel model.

The covariance of a user is the average of steering-vector outer products
``a(x) a(x)^H`` over points ``x`` drawn from its spherical zone. Points are
drawn uniformly over the spherical *parameters* ``(r, theta, phi)`` on
``[0, radius] x [0, 2pi] x [0, pi]`` by default, i.e. without the ``r^2
sin(phi)`` volume Jacobian; this concentrates density toward the zone centre
and the poles. ``measure="volume"`` switches to volume-uniform draws.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .geometry import ArrayGeometry, SphericalZone, UserKinematics, as_point, element_distances, unit_direction
from .numerics import hermitian_eig

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]

# Fixed accumulation block; keeps covariance sums independent of worker count.
_CHUNK = 256

CACHE_MAGIC = b"NFSC"
CACHE_VERSION = 1


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class ZoneSampling:
    """Monte-Carlo budget for a zone integral."""

    count: int = 100
    seed: SeedLike = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("sample count must be at least 1")


@dataclass(frozen=True)
class KLBasis:
    """Truncated eigenstructure of a covariance.

    Attributes:
        basis: ``(N, r)`` orthonormal columns, strongest first.
        weights: ``r`` positive eigenvalues in non-increasing order.
        residual_energy: covariance trace not captured by ``weights``.
        next_weight: largest discarded eigenvalue (0 when nothing was cut).
    """

    basis: np.ndarray
    weights: np.ndarray
    residual_energy: float
    next_weight: float = 0.0

    @property
    def rank(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def covariance(self) -> np.ndarray:
        return (self.basis * self.weights) @ self.basis.conj().T


def steering_vectors(geom: ArrayGeometry, points, wavelength: float) -> np.ndarray:
    """Spherical-wavefront responses ``exp(-j 2pi d_n / lambda)`` for one or many points.

    Returns shape ``(N,)`` for a single point or ``(..., N)`` for a batch.
    """
    dist = element_distances(geom, points)
    return np.exp(-2j * np.pi * dist / wavelength)


def steering_vector(geom: ArrayGeometry, point, wavelength: float) -> np.ndarray:
    p = as_point(point)
    if p.ndim != 1:
        raise ValueError("steering_vector takes a single point; use steering_vectors for batches")
    return steering_vectors(geom, p, wavelength)


def _spherical_offsets(radius: float, count: int, rng: np.random.Generator, measure: str) -> np.ndarray:
    u = rng.random((count, 3))
    if measure == "parameter":
        r = radius * u[:, 0]
        phi = np.pi * u[:, 2]
    elif measure == "volume":
        r = radius * np.cbrt(u[:, 0])
        phi = np.arccos(1.0 - 2.0 * u[:, 2])
    else:
        raise ValueError(f"unknown sampling measure {measure!r}")
    theta = 2.0 * np.pi * u[:, 1]
    return r[:, None] * unit_direction(theta, phi)


def sample_zone_points(zone: SphericalZone, count: int, rng: SeedLike = None, measure: str = "parameter") -> np.ndarray:
    """Draw ``count`` points from ``zone`` as an ``(count, 3)`` array."""
    rng = make_rng(rng)
    return zone.center + _spherical_offsets(zone.radius, count, rng, measure)


def sample_zone_point(zone: SphericalZone, rng: SeedLike = None, measure: str = "parameter") -> np.ndarray:
    return sample_zone_points(zone, 1, rng, measure)[0]


def _finalize(acc: np.ndarray) -> np.ndarray:
    # a a^H has |a_n|^2 = 1 on the diagonal; rounding in exp() would otherwise
    # leave it a few ulps off.
    r = 0.5 * (acc + acc.conj().T)
    np.fill_diagonal(r, 1.0)
    return r


def outer_covariance(a: np.ndarray) -> np.ndarray:
    """Rank-one covariance ``a a^H`` with the estimator's exact-diagonal convention."""
    return _finalize(np.outer(a, a.conj()))


def covariance_from_points(geom: ArrayGeometry, points: np.ndarray, wavelength: float, workers: Optional[int] = None) -> np.ndarray:
    """Sample mean of ``a(x) a(x)^H`` over ``points`` (shape ``(M, 3)``).

    Partial sums are taken over fixed blocks of samples and combined in block
    order, so the result does not depend on ``workers``.
    """
    points = as_point(points).reshape(-1, 3)
    m = points.shape[0]
    blocks = [points[i : i + _CHUNK] for i in range(0, m, _CHUNK)]

    def partial(block):
        a = steering_vectors(geom, block, wavelength)
        return a.T @ a.conj()

    if workers and workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(partial, blocks))
    else:
        parts = [partial(b) for b in blocks]
    acc = parts[0]
    for p in parts[1:]:
        acc = acc + p
    return _finalize(acc / m)


def covariance_zone(
    geom: ArrayGeometry,
    zone: SphericalZone,
    wavelength: float,
    sampling: ZoneSampling = ZoneSampling(),
    measure: str = "parameter",
    workers: Optional[int] = None,
) -> np.ndarray:
    """Monte-Carlo one-sphere covariance over a spherical zone.

    A zero-radius zone returns the rank-one outer product of the centre
    steering vector.
    """
    if zone.radius == 0.0:
        return outer_covariance(steering_vector(geom, zone.center, wavelength))
    pts = sample_zone_points(zone, sampling.count, sampling.seed, measure)
    return covariance_from_points(geom, pts, wavelength, workers)


def covariance_mobile_exact(
    geom: ArrayGeometry,
    kin: UserKinematics,
    scatter_radius: float,
    wavelength: float,
    sampling: ZoneSampling = ZoneSampling(),
    workers: Optional[int] = None,
) -> np.ndarray:
    """Covariance over user displacement and local scattering jointly.

    Draws ``(x, theta_k, phi_k)`` for the user's displacement and
    ``(r, theta_s, phi_s)`` for the scatterer, each uniformly over its
    parameter box, and places the scatterer at
    ``q + x*dir(theta_k, phi_k) + r*dir(theta_s, phi_s)``.
    """
    rng = make_rng(sampling.seed)
    m = sampling.count
    u = rng.random((m, 3))
    move = (kin.move_distance * u[:, 0])[:, None] * unit_direction(2 * np.pi * u[:, 1], np.pi * u[:, 2])
    scatter = _spherical_offsets(scatter_radius, m, rng, "parameter")
    return covariance_from_points(geom, kin.initial + move + scatter, wavelength, workers)


def check_covariance(r: np.ndarray, rtol: float = 1e-12) -> None:
    """Raise ``ValueError`` unless ``r`` is square and Hermitian within ``rtol``."""
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError(f"covariance must be square, got shape {r.shape}")
    scale = max(np.linalg.norm(r), 1.0)
    if np.linalg.norm(r - r.conj().T) > rtol * scale:
        raise ValueError("covariance is not Hermitian")


def kl_decompose(r: np.ndarray, truncation: float = 0.99) -> KLBasis:
    """Leading eigenvectors of ``r`` capturing ``truncation`` of its trace.

    The rank is the smallest count whose eigenvalue sum reaches
    ``truncation * trace(r)``; only strictly positive eigenvalues are kept.
    """
    if not 0.0 < truncation <= 1.0:
        raise ValueError("truncation must lie in (0, 1]")
    vecs, vals = hermitian_eig(r)
    trace = float(np.real(np.trace(r)))
    if trace <= 0:
        raise ValueError("covariance has no energy")
    if vals[-1] < -1e-8 * trace:
        raise ValueError(f"covariance is not positive semidefinite (min eigenvalue {vals[-1]:.3e})")
    cum = np.cumsum(vals)
    rank = int(np.searchsorted(cum, truncation * trace - 1e-12 * trace)) + 1
    positive = int(np.count_nonzero(vals > 1e-14 * trace))
    rank = max(1, min(rank, positive, len(vals)))
    weights = vals[:rank].copy()
    nxt = float(max(vals[rank], 0.0)) if rank < len(vals) else 0.0
    return KLBasis(vecs[:, :rank].copy(), weights, trace - float(weights.sum()), nxt)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric standard complex Gaussian draws (unit variance)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def kl_sample(basis: KLBasis, rng: SeedLike = None, size: Optional[int] = None) -> np.ndarray:
    """Draw ``U diag(sqrt(weights)) w`` with white complex Gaussian ``w``.

    Returns one ``(N,)`` vector, or ``(size, N)`` when ``size`` is given.
    """
    rng = make_rng(rng)
    n = 1 if size is None else size
    w = complex_normal(rng, (n, basis.rank))
    h = (w * np.sqrt(basis.weights)) @ basis.basis.T
    return h[0] if size is None else h


def geometric_realization(
    geom: ArrayGeometry,
    position,
    scatter_radius: float,
    scatterer_count: int,
    wavelength: float,
    rng: SeedLike = None,
    mode: str = "scatterers",
    los_weight: float = 1.0,
    size: Optional[int] = None,
    measure: str = "parameter",
    scatterers: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Multipath channel from ``scatterer_count`` point scatterers around ``position``.

    ``h = S^{-1/2} sum_s exp(j psi_s) a(g_s)`` with independent uniform
    phases ``psi_s``. ``mode="los"`` adds ``los_weight * a(position)``.

    ``position`` may be a single point or an ``(M, 3)`` batch; with ``size``
    a single point is repeated. Fixed scatterer coordinates can be passed
    through ``scatterers`` (shape ``(S, 3)``), in which case only the phases
    are redrawn.
    """
    if scatterer_count < 1:
        raise ValueError("need at least one scatterer")
    if mode not in ("scatterers", "los"):
        raise ValueError(f"unknown realization mode {mode!r}")
    rng = make_rng(rng)
    pos = as_point(position)
    single = pos.ndim == 1 and size is None
    pos = pos.reshape(-1, 3)
    if size is not None:
        pos = np.broadcast_to(pos, (size, 3)) if pos.shape[0] == 1 else pos
    m = pos.shape[0]
    s = scatterer_count
    if scatterers is None:
        offsets = _spherical_offsets(scatter_radius, m * s, rng, measure).reshape(m, s, 3)
        g = pos[:, None, :] + offsets
    else:
        g = np.broadcast_to(as_point(scatterers).reshape(1, -1, 3), (m, s, 3))
    psi = 2.0 * np.pi * rng.random((m, s))
    a = steering_vectors(geom, g, wavelength)
    h = np.einsum("ms,msn->mn", np.exp(1j * psi), a) / np.sqrt(s)
    if mode == "los":
        h = h + los_weight * steering_vectors(geom, pos, wavelength)
    return h[0] if single else h


def write_covariance_cache(path, r: np.ndarray) -> None:
    """Write ``r`` as ``NFSC | version:u8 | N:u32le | N*N complex128le`` (row-major)."""
    r = np.asarray(r)
    check_covariance(r, rtol=np.inf)
    n = r.shape[0]
    body = np.ascontiguousarray(r, dtype="<c16").tobytes()
    Path(path).write_bytes(CACHE_MAGIC + struct.pack("<BI", CACHE_VERSION, n) + body)


def read_covariance_cache(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != CACHE_MAGIC:
        raise ValueError("not a covariance cache (bad magic)")
    version, n = struct.unpack_from("<BI", data, 4)
    if version != CACHE_VERSION:
        raise ValueError(f"unsupported cache version {version}")
    body = data[9:]
    if len(body) != 16 * n * n:
        raise ValueError(f"cache body has {len(body)} bytes, expected {16 * n * n}")
    return np.frombuffer(body, dtype="<c16").reshape(n, n).astype(complex)
