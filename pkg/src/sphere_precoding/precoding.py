"""Sphere precoding and the baseline precoders it is compared against.

All precoders return an ``(N, K)`` matrix whose column ``k`` serves user
``k`` and has norm at most one. The received amplitude of user ``k`` from
column ``l`` is ``h_k^H f_l``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .channel import KLBasis, steering_vector, steering_vectors
from .geometry import ArrayGeometry, as_point
from .numerics import ConeProblem, ConeSolution, NumericalError, SolverTolerances, cone_solve, pseudo_inverse

METHODS = ("sphere", "eqproj", "conj", "eig", "zf")


class PrecodingError(NumericalError):
    def __init__(self, user: int, solution: ConeSolution):
        super().__init__(f"sphere precoding failed for user {user + 1}: solver status {solution.status.value} after {solution.iterations} iterations")
        self.user = user
        self.solution = solution


@dataclass(frozen=True)
class PrecoderConfig:
    target_level: float = 1.0
    interference_cap: float = 1e-3
    truncation: float = 0.99

    def __post_init__(self):
        if self.target_level < 0:
            raise ValueError("target level must be non-negative")
        if not self.interference_cap > 0:
            raise ValueError("interference cap must be positive")
        if not 0 < self.truncation <= 1:
            raise ValueError("truncation must lie in (0, 1]")


def sphere_problem(bases: Sequence[KLBasis], k: int, config: PrecoderConfig) -> ConeProblem:
    """Cone problem for user ``k``: equal projection on its own basis, capped leakage on the others."""
    blocks = [(b.basis.conj().T, config.interference_cap) for l, b in enumerate(bases) if l != k]
    return ConeProblem(bases[k].basis.conj().T, config.target_level, blocks, 1.0)


def sphere_precode(
    bases: Sequence[KLBasis],
    config: PrecoderConfig = PrecoderConfig(),
    tol: SolverTolerances = SolverTolerances(),
    workers: Optional[int] = None,
) -> np.ndarray:
    """Solve one cone problem per user and stack the solutions as columns.

    Raises :class:`PrecodingError` naming the user whose solve did not reach
    optimality.
    """
    if not bases:
        raise ValueError("need at least one user")
    n = bases[0].dim
    if any(b.dim != n for b in bases):
        raise ValueError("all bases must share the array dimension")

    def solve(k):
        return cone_solve(sphere_problem(bases, k, config), tol)

    users = range(len(bases))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sols = list(pool.map(solve, users))
    else:
        sols = [solve(k) for k in users]
    for k, sol in enumerate(sols):
        if not sol.optimal:
            raise PrecodingError(k, sol)
    return np.column_stack([s.vector for s in sols])


def equal_projection(basis: KLBasis, target_level: float = 1.0) -> np.ndarray:
    """Closed-form minimiser of ``||U^H f - C 1||`` over the unit ball.

    The coefficient vector is ``C 1`` when it fits inside the ball and its
    radial projection ``1 / sqrt(r)`` otherwise.
    """
    r = basis.rank
    level = target_level if target_level * np.sqrt(r) <= 1.0 else 1.0 / np.sqrt(r)
    return basis.basis @ np.full(r, level, dtype=complex)


def conjugate_beamforming(geom: ArrayGeometry, position, wavelength: float) -> np.ndarray:
    """Matched filter to the line-of-sight channel at ``position``.

    With the ``h^H f`` convention the coherent choice is ``f = h / ||h||``,
    so that the conjugate weights ``h^H`` act on the transmitted signal.
    """
    a = steering_vector(geom, position, wavelength)
    return a / np.linalg.norm(a)


def dominant_eigenvector(basis: KLBasis) -> np.ndarray:
    return basis.basis[:, 0].copy()


def zero_forcing(channels: np.ndarray) -> np.ndarray:
    """Unit-norm columns of ``H (H^H H)^{-1}`` for LoS channels ``H`` (N x K)."""
    h = np.asarray(channels)
    if h.ndim == 1:
        h = h[:, None]
    f = pseudo_inverse(h).conj().T
    return f / np.linalg.norm(f, axis=0)


def check_precoder(f: np.ndarray, atol: float = 1e-9) -> None:
    norms = np.linalg.norm(np.atleast_2d(f.T).T, axis=0)
    if np.any(norms > 1.0 + atol):
        raise ValueError(f"precoder column norms exceed one: {norms.max():.12g}")


def beam_gains(geom: ArrayGeometry, f: np.ndarray, points, wavelength: float) -> np.ndarray:
    """``|a(x)^H f|^2`` for every point in ``points`` (shape ``(..., 3)``)."""
    a = steering_vectors(geom, points, wavelength)
    return np.abs(a.conj() @ f) ** 2


def beam_gain(geom: ArrayGeometry, f: np.ndarray, point, wavelength: float) -> float:
    return float(beam_gains(geom, f, as_point(point), wavelength))


@dataclass
class GainGrid:
    """Beam gains over a regular grid; ``gains`` has shape ``shape`` (x, y, z order)."""

    axes: List[np.ndarray]
    gains: np.ndarray

    @property
    def shape(self):
        return self.gains.shape

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, 3)


def beampattern_grid(geom: ArrayGeometry, f: np.ndarray, lower, upper, resolution, wavelength: float) -> GainGrid:
    """Evaluate beam gains on a regular box grid.

    ``resolution`` gives the number of samples per axis (at least 2). An axis
    with ``lower == upper`` is a slice and is sampled once.
    """
    lower = as_point(lower)
    upper = as_point(upper)
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (3,))
    if np.any(upper < lower):
        raise ValueError("empty region: upper corner below lower corner")
    if np.all(upper == lower):
        raise ValueError("empty region: box has no extent")
    axes = []
    for lo, hi, n in zip(lower, upper, res):
        if lo == hi:
            axes.append(np.array([lo]))
        elif n < 2:
            raise ValueError("resolution must be at least 2 along each non-degenerate axis")
        else:
            axes.append(np.linspace(lo, hi, n))
    grid = GainGrid(axes, np.empty(tuple(len(a) for a in axes)))
    grid.gains[...] = beam_gains(geom, f, grid.points(), wavelength).reshape(grid.shape)
    return grid


def slice_region(center, half_width: float, plane: str = "horizontal"):
    """Corners of a square slice through ``center``.

    ``horizontal`` spans x-y at the centre's height; ``vertical`` spans x-z
    at the centre's y.
    """
    spans = {"horizontal": (1.0, 1.0, 0.0), "vertical": (1.0, 0.0, 1.0)}
    if plane not in spans:
        raise ValueError(f"unknown slice plane {plane!r}")
    span = half_width * np.array(spans[plane])
    c = as_point(center)
    return c - span, c + span


def to_db(x) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def write_beampattern_csv(path, grid: GainGrid) -> None:
    pts = grid.points()
    gains = grid.gains.reshape(-1)
    db = to_db(gains)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z", "gain_linear", "gain_db"])
        for p, g, gd in zip(pts, gains, db):
            w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), repr(float(g)), repr(float(gd))])
