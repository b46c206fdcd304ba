"""Robust multi-user precoding for mobile users in the near field of a large planar array.

Each user's channel covariance is built over a sphere covering every position
it and its local scatterers can reach; the precoder then keeps the projection
onto the target user's covariance eigenvectors level while capping leakage
into every other user's eigenspace.
"""

__version__ = "0.1.0"

from .channel import KLBasis, ZoneSampling, covariance_zone, kl_decompose
from .geometry import ArrayGeometry, SphericalZone, UserKinematics, transmission_zone, wavelength
from .precoding import PrecoderConfig, sphere_precode
from .simulation import ScenarioConfig, mobility_sweep, run_experiment

__all__ = [
    "ArrayGeometry",
    "KLBasis",
    "PrecoderConfig",
    "ScenarioConfig",
    "SphericalZone",
    "UserKinematics",
    "ZoneSampling",
    "covariance_zone",
    "kl_decompose",
    "mobility_sweep",
    "run_experiment",
    "sphere_precode",
    "transmission_zone",
    "wavelength",
]
