"""Monte-Carlo evaluation of precoders for mobile near-field users.

Random streams
--------------
Every draw derives from the master seed through
``numpy.random.SeedSequence(master_seed, spawn_key=key)`` with the counter
keys

* ``(e, 0)``     user drop of experiment ``e``
* ``(e, 1, k)``  covariance samples of user ``k``
* ``(e, 2, k)``  evaluation positions and channels of user ``k``
* ``(e, 3, k)``  persistent scatterer map of user ``k`` (when enabled)

None of the keys involve the moving distance, so a mobility sweep reuses the
same drops and headings at every distance.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .channel import (
    KLBasis,
    ZoneSampling,
    covariance_zone,
    geometric_realization,
    kl_decompose,
    kl_sample,
    sample_zone_points,
    steering_vector,
    steering_vectors,
)
from .geometry import (
    ArrayGeometry,
    SphericalZone,
    UserKinematics,
    displaced_position,
    near_field_bounds,
    transmission_zone,
    wavelength,
)
from .numerics import NumericalError
from .precoding import (
    METHODS,
    PrecoderConfig,
    conjugate_beamforming,
    dominant_eigenvector,
    equal_projection,
    sphere_precode,
    to_db,
    zero_forcing,
)

log = logging.getLogger(__name__)

UPPER = "upper"


class SimulationError(NumericalError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that determines a simulation run besides the seed.

    Distances are metres, powers linear unless the name says ``_db``.
    """

    geometry: ArrayGeometry
    frequency_hz: float = 28e9
    user_count: int = 5
    noise_power: float = 1e-2
    scatter_radius: float = 0.05
    covariance_samples: int = 100
    scatterer_count: int = 10
    move_distance: float = 0.0
    sinr_target_db: Union[float, Tuple[float, ...]] = 20.0
    drop_r_min: float = 2.0
    drop_r_max: float = 20.0
    drop_sector_deg: float = 120.0
    user_height: float = 1.5
    min_separation: float = 0.5
    horizon_s: float = 1.0
    experiments: int = 100
    eval_samples: int = 100
    precoder: PrecoderConfig = PrecoderConfig()
    zone_measure: str = "parameter"
    evaluation_channel: str = "geometric"
    realization_mode: str = "scatterers"
    los_weight: float = 1.0
    evaluation_positions: str = "zone"
    persistent_scatterers: bool = False
    cdf_grid_db: Tuple[float, float, float] = (-20.0, 80.0, 0.5)
    methods: Tuple[str, ...] = METHODS
    workers: int = 1

    def __post_init__(self):
        if self.user_count < 1:
            raise ValueError("user_count must be at least 1")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        if self.scatter_radius < 0 or self.move_distance < 0:
            raise ValueError("scatter_radius and move_distance must be non-negative")
        if self.covariance_samples < 1 or self.scatterer_count < 1 or self.eval_samples < 1:
            raise ValueError("sample counts must be at least 1")
        if self.experiments < 1:
            raise ValueError("experiments must be at least 1")
        if not 0 <= self.drop_r_min <= self.drop_r_max:
            raise ValueError("drop annulus needs 0 <= r_min <= r_max")
        if not 0 <= self.drop_sector_deg <= 360:
            raise ValueError("drop sector must be within [0, 360] degrees")
        if np.any(np.asarray(self.sinr_target_db, dtype=float) == -np.inf):
            raise ValueError("SINR target must be positive in linear scale")
        if isinstance(self.sinr_target_db, tuple) and len(self.sinr_target_db) != self.user_count:
            raise ValueError("per-user SINR targets must list one value per user")
        for name, value, allowed in [
            ("zone_measure", self.zone_measure, ("parameter", "volume")),
            ("evaluation_channel", self.evaluation_channel, ("geometric", "kl", "los")),
            ("realization_mode", self.realization_mode, ("scatterers", "los")),
            ("evaluation_positions", self.evaluation_positions, ("zone", "endpoint")),
        ]:
            if value not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {value!r}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown precoding methods {sorted(unknown)}")

    @classmethod
    def reference(cls, **overrides) -> "ScenarioConfig":
        """16x64 half-wavelength panel at 3 m, 28 GHz, five users."""
        lam = wavelength(28e9)
        base = dict(geometry=ArrayGeometry(16, 64, lam / 2, 3.0))
        base.update(overrides)
        return cls(**base)

    @property
    def wavelength(self) -> float:
        return wavelength(self.frequency_hz)

    def sinr_targets(self) -> np.ndarray:
        """Linear SINR target per user."""
        db = np.broadcast_to(np.asarray(self.sinr_target_db, dtype=float), (self.user_count,))
        return 10.0 ** (db / 10.0)

    def cdf_grid(self) -> np.ndarray:
        lo, hi, step = self.cdf_grid_db
        count = int(round((hi - lo) / step)) + 1
        return lo + step * np.arange(count)

    def check_region(self) -> None:
        """Warn when the drop annulus leaves the near-field bracket of the array."""
        b = near_field_bounds(self.geometry, self.wavelength)
        if b.degenerate:
            warnings.warn("single-element array has no near-field region", stacklevel=2)
        elif self.drop_r_min < b.fresnel or self.drop_r_max > b.fraunhofer:
            warnings.warn(
                f"drop annulus [{self.drop_r_min}, {self.drop_r_max}] m exceeds the near-field bracket "
                f"[{b.fresnel:.3f}, {b.fraunhofer:.3f}] m of the array",
                stacklevel=2,
            )


def stream(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def drop_users(config: ScenarioConfig, rng: np.random.Generator) -> List[UserKinematics]:
    """Place users uniformly in distance and azimuth over the drop sector.

    Distance is measured from the array centre in 3-D; users sit at
    ``config.user_height``. Draws closer than ``min_separation`` to an
    earlier user are rejected and redrawn.
    """
    dz = config.user_height - config.geometry.height
    r_lo = max(config.drop_r_min, abs(dz))
    if r_lo > config.drop_r_max:
        raise ValueError(
            f"empty drop region: no point at height {config.user_height} m lies within {config.drop_r_max} m of the array"
        )
    half = np.deg2rad(config.drop_sector_deg) / 2.0
    speed = config.move_distance / config.horizon_s if config.horizon_s > 0 else 0.0
    users: List[UserKinematics] = []
    for _ in range(1000 * config.user_count):
        if len(users) == config.user_count:
            break
        r = rng.uniform(r_lo, config.drop_r_max)
        az = rng.uniform(-half, half)
        heading = rng.uniform(0.0, 2.0 * np.pi)
        elevation = rng.uniform(0.0, np.pi)
        rho = np.sqrt(max(r * r - dz * dz, 0.0))
        q = np.array([rho * np.cos(az), rho * np.sin(az), config.user_height])
        if any(np.linalg.norm(q - u.initial) < config.min_separation for u in users):
            continue
        users.append(UserKinematics(q, speed, heading, elevation, config.horizon_s))
    else:
        if len(users) < config.user_count:
            raise ValueError("could not place users with the requested minimum separation")
    return users


def evaluate_sinr(f: np.ndarray, h: np.ndarray, k: int, noise_power: float) -> np.ndarray:
    """SINR of user ``k`` for channel(s) ``h`` (``(N,)`` or ``(M, N)``) under precoder ``F``."""
    g = np.abs(np.asarray(h).conj() @ np.atleast_2d(f.T).T) ** 2
    signal = g[..., k]
    interference = g.sum(axis=-1) - signal
    return signal / (np.maximum(interference, 0.0) + noise_power)


def upper_bound_sinr(h: np.ndarray, noise_power: float) -> np.ndarray:
    """Interference-free matched-filter SINR ``||h||^2 / sigma^2``."""
    if not noise_power > 0:
        raise ValueError("noise power must be positive")
    return np.sum(np.abs(h) ** 2, axis=-1) / noise_power


def satisfaction_probability(samples, target: float) -> float:
    """Fraction of linear SINR samples at or above ``target``."""
    s = np.asarray(samples, dtype=float).reshape(-1)
    if s.size == 0:
        raise ValueError("no SINR samples")
    return float(np.count_nonzero(s >= target)) / s.size


def empirical_cdf(values_db: np.ndarray, grid_db: np.ndarray) -> np.ndarray:
    """``P(value <= x)`` at each grid point."""
    v = np.sort(np.asarray(values_db, dtype=float).reshape(-1))
    return np.searchsorted(v, grid_db, side="right") / v.size


@dataclass
class SinrSampleSet:
    """Linear SINR draws, indexed ``[experiment, user, sample]`` per method.

    ``displacement`` and ``direction`` record the moving distance and the
    (azimuth, polar) angles behind each draw.
    """

    move_distance: float
    sinr: Dict[str, np.ndarray]
    displacement: np.ndarray
    direction: np.ndarray

    @classmethod
    def concatenate(cls, parts: Sequence["SinrSampleSet"]) -> "SinrSampleSet":
        return cls(
            parts[0].move_distance,
            {m: np.concatenate([p.sinr[m] for p in parts]) for m in parts[0].sinr},
            np.concatenate([p.displacement for p in parts]),
            np.concatenate([p.direction for p in parts]),
        )


@dataclass
class MethodMetrics:
    avg_sinr_db: float
    sat_prob: float
    n_samples: int
    cdf: np.ndarray

    def fraction_above_db(self, grid_db: np.ndarray, level_db: float) -> float:
        """Fraction of samples strictly above ``level_db`` (a grid point)."""
        i = int(np.argmin(np.abs(grid_db - level_db)))
        if not np.isclose(grid_db[i], level_db):
            raise ValueError(f"{level_db} dB is not on the CDF grid")
        return float(1.0 - self.cdf[i])


@dataclass
class MetricsReport:
    """Aggregate statistics of one sample set.

    ``avg_sinr_db`` is the mean linear SINR expressed in dB. ``sat_prob`` is
    the minimum over users of each user's satisfaction probability, averaged
    over experiments.
    """

    move_distance: float
    cdf_grid_db: np.ndarray
    methods: Dict[str, MethodMetrics]
    samples: Optional[SinrSampleSet] = field(default=None, repr=False)


def summarize(samples: SinrSampleSet, config: ScenarioConfig) -> MetricsReport:
    grid = config.cdf_grid()
    targets = config.sinr_targets()
    out = {}
    for method, s in samples.sinr.items():
        per_user = (s >= targets[None, :, None]).mean(axis=2)
        out[method] = MethodMetrics(
            avg_sinr_db=float(to_db(s.mean())),
            sat_prob=float(per_user.min(axis=1).mean()),
            n_samples=int(s.size),
            cdf=empirical_cdf(to_db(s), grid),
        )
    return MetricsReport(samples.move_distance, grid, out, samples)


@dataclass
class DropState:
    """Everything the precoders see for one user drop."""

    users: List[UserKinematics]
    zones: List[SphericalZone]
    covariances: List[np.ndarray]
    bases: List[KLBasis]


def prepare_drop(config: ScenarioConfig, seed: int, experiment: int) -> DropState:
    lam = config.wavelength
    users = drop_users(config, stream(seed, experiment, 0))
    zones = [transmission_zone(u, config.scatter_radius) for u in users]
    covs = [
        covariance_zone(
            config.geometry,
            z,
            lam,
            ZoneSampling(config.covariance_samples, np.random.SeedSequence(seed, spawn_key=(experiment, 1, k))),
            config.zone_measure,
        )
        for k, z in enumerate(zones)
    ]
    bases = [kl_decompose(r, config.precoder.truncation) for r in covs]
    return DropState(users, zones, covs, bases)


def build_precoders(config: ScenarioConfig, drop: DropState, methods: Sequence[str] = METHODS) -> Dict[str, np.ndarray]:
    lam = config.wavelength
    geom = config.geometry
    out = {}
    for m in methods:
        if m == "sphere":
            out[m] = sphere_precode(drop.bases, config.precoder)
        elif m == "eqproj":
            out[m] = np.column_stack([equal_projection(b, config.precoder.target_level) for b in drop.bases])
        elif m == "conj":
            out[m] = np.column_stack([conjugate_beamforming(geom, u.initial, lam) for u in drop.users])
        elif m == "eig":
            out[m] = np.column_stack([dominant_eigenvector(b) for b in drop.bases])
        elif m == "zf":
            los = np.column_stack([steering_vector(geom, u.initial, lam) for u in drop.users])
            out[m] = zero_forcing(los)
        else:
            raise ValueError(f"unknown precoding method {m!r}")
    return out


def evaluation_channels(config: ScenarioConfig, drop: DropState, k: int, seed: int, experiment: int):
    """Channels of user ``k`` at its evaluation positions, plus the draws behind them."""
    rng = stream(seed, experiment, 2, k)
    n = config.eval_samples
    kin = drop.users[k]
    if config.evaluation_positions == "zone":
        u = rng.random((n, 3))
        dist = config.move_distance * u[:, 0]
        angles = np.column_stack([2.0 * np.pi * u[:, 1], np.pi * u[:, 2]])
    else:
        dist = np.full(n, kin.move_distance)
        angles = np.tile([kin.heading, kin.elevation], (n, 1))
    positions = displaced_position(kin, dist, angles[:, 0], angles[:, 1])

    if config.evaluation_channel == "kl":
        h = kl_sample(drop.bases[k], rng, size=n)
    elif config.evaluation_channel == "los":
        h = steering_vectors(config.geometry, positions, config.wavelength)
    else:
        fixed = None
        if config.persistent_scatterers:
            fixed = sample_zone_points(
                SphericalZone(kin.initial, config.scatter_radius),
                config.scatterer_count,
                stream(seed, experiment, 3, k),
                config.zone_measure,
            )
        h = geometric_realization(
            config.geometry,
            positions,
            config.scatter_radius,
            config.scatterer_count,
            config.wavelength,
            rng,
            mode=config.realization_mode,
            los_weight=config.los_weight,
            measure=config.zone_measure,
            scatterers=fixed,
        )
    return h, dist, angles


def simulate_experiment(config: ScenarioConfig, seed: int, experiment: int) -> SinrSampleSet:
    """One user drop: build all precoders and draw SINR samples for every user."""
    try:
        drop = prepare_drop(config, seed, experiment)
        precoders = build_precoders(config, drop, config.methods)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        raise SimulationError(f"experiment {experiment}: {exc}") from exc
    k_count = config.user_count
    n = config.eval_samples
    sinr = {m: np.empty((1, k_count, n)) for m in list(precoders) + [UPPER]}
    disp = np.empty((1, k_count, n))
    dirs = np.empty((1, k_count, n, 2))
    for k in range(k_count):
        h, dist, angles = evaluation_channels(config, drop, k, seed, experiment)
        disp[0, k] = dist
        dirs[0, k] = angles
        for m, f in precoders.items():
            sinr[m][0, k] = evaluate_sinr(f, h, k, config.noise_power)
        sinr[UPPER][0, k] = upper_bound_sinr(h, config.noise_power)
    return SinrSampleSet(config.move_distance, sinr, disp, dirs)


def simulate(config: ScenarioConfig, seed: int, workers: Optional[int] = None) -> SinrSampleSet:
    """All experiments of one seed, combined in experiment order."""
    workers = config.workers if workers is None else workers
    idx = range(config.experiments)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda e: simulate_experiment(config, seed, e), idx))
    else:
        parts = [simulate_experiment(config, seed, e) for e in idx]
    return SinrSampleSet.concatenate(parts)


def run_experiment(config: ScenarioConfig, seed: int, workers: Optional[int] = None) -> MetricsReport:
    return summarize(simulate(config, seed, workers), config)


@dataclass
class SweepResult:
    reports: List[MetricsReport]

    def table(self) -> List[Tuple[float, str, float, float, int]]:
        """Rows ``(dx_m, method, avg_sinr_db, sat_prob, n_samples)``."""
        return [
            (r.move_distance, m, mm.avg_sinr_db, mm.sat_prob, mm.n_samples)
            for r in self.reports
            for m, mm in r.methods.items()
        ]

    def cdf_rows(self) -> List[Tuple[str, float, float, float]]:
        """Rows ``(method, dx_m, sinr_db, cdf)``."""
        return [
            (m, r.move_distance, float(x), float(c))
            for r in self.reports
            for m, mm in r.methods.items()
            for x, c in zip(r.cdf_grid_db, mm.cdf)
        ]


def sweep_seeds(master_seed: int, count: int) -> List[int]:
    """Seeds of a multi-seed sweep: ``master_seed, master_seed + 1, ...``."""
    return [master_seed + i for i in range(count)]


def mobility_sweep(
    config: ScenarioConfig, move_distances: Sequence[float], seeds: Sequence[int], workers: Optional[int] = None
) -> SweepResult:
    """Run every seed at every moving distance and pool samples per distance."""
    if len(move_distances) == 0 or len(seeds) == 0:
        raise ValueError("need at least one moving distance and one seed")
    reports = []
    for dx in move_distances:
        cfg = replace(config, move_distance=float(dx))
        pooled = SinrSampleSet.concatenate([simulate(cfg, s, workers) for s in seeds])
        reports.append(summarize(pooled, cfg))
        log.info("dx=%g m done", dx)
    return SweepResult(reports)
