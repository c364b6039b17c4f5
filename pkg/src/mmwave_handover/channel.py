"""Per-slot link realizations: blockage state, pathloss, clustered channel."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Point3, distance_3d

log = logging.getLogger(__name__)

REFERENCE_DISTANCE_M = 1.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Half-wavelength uniform planar array, n_horizontal x n_vertical elements."""

    n_horizontal: int
    n_vertical: int

    def __post_init__(self):
        if self.n_horizontal < 1 or self.n_vertical < 1:
            raise ValueError("array dimensions must be >= 1")

    @property
    def size(self) -> int:
        return self.n_horizontal * self.n_vertical


@dataclass(frozen=True)
class Subpath:
    """One ray of a cluster: complex gain plus arrival/departure angles (rad)."""

    gain: complex
    aoa_az: float
    aoa_el: float
    aod_az: float
    aod_el: float

    def __post_init__(self):
        for a in (self.aoa_az, self.aoa_el, self.aod_az, self.aod_el):
            if not -math.pi <= a <= math.pi:
                raise ValueError(f"angle {a} outside [-pi, pi]")


@dataclass
class ChannelRealization:
    """Channel between one UE and one BS, fixed for one coherence interval."""

    H: np.ndarray  # (N_UE, N_BS) complex
    los: bool
    pathloss_db: float
    n_clusters: int
    n_subpaths: int


def p_los(d: float) -> float:
    """Line-of-sight probability at 3D distance d meters.

    Empirical urban model: [min(27/d, 1) * (1 - exp(-d/71)) + exp(-d/71)]^2.
    Equal to 1 for d <= 27.
    """
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    decay = math.exp(-d / 71.0)
    return (min(27.0 / d, 1.0) * (1.0 - decay) + decay) ** 2


def p_nlos(d: float) -> float:
    return 1.0 - p_los(d)


def pathloss_db(
    d: float,
    los: bool,
    rng: np.random.Generator | None = None,
    *,
    wavelength_m: float = 3.0e8 / 28.0e9,
    exp_los: float = 3.0,
    exp_nlos: float = 4.0,
    shadow_sigma_los_db: float = 4.0,
    shadow_sigma_nlos_db: float = 7.8,
) -> float:
    """Close-in reference pathloss with log-distance exponent and shadow fading.

    PL(d) = 20 log10(4 pi d0 / lambda) + 10 n log10(d / d0) + X, X ~ N(0, sigma^2).
    Pass rng=None for the deterministic X = 0 value.
    """
    if d < REFERENCE_DISTANCE_M:
        log.warning("distance %.3f m below reference %.1f m, clamping", d, REFERENCE_DISTANCE_M)
        d = REFERENCE_DISTANCE_M
    exponent = exp_los if los else exp_nlos
    sigma = shadow_sigma_los_db if los else shadow_sigma_nlos_db
    pl = 20.0 * math.log10(4.0 * math.pi * REFERENCE_DISTANCE_M / wavelength_m)
    pl += 10.0 * exponent * math.log10(d / REFERENCE_DISTANCE_M)
    if rng is not None and sigma > 0.0:
        pl += sigma * rng.standard_normal()
    return pl


def array_response(az: float, el: float, geom: ArrayGeometry) -> np.ndarray:
    """Planar-array response vector; unit-modulus entries, first entry 1.

    Element (m, n) has phase pi * (m sin(az) cos(el) + n sin(az) sin(el)),
    flattened row-major over the horizontal index m and vertical index n.
    """
    a = math.sin(az) * math.cos(el)
    b = math.sin(az) * math.sin(el)
    m = np.arange(geom.n_horizontal)
    n = np.arange(geom.n_vertical)
    phase = math.pi * (m[:, None] * a + n[None, :] * b)
    return np.exp(1j * phase).ravel()


def array_response_many(az: np.ndarray, el: np.ndarray, geom: ArrayGeometry) -> np.ndarray:
    """Stack of response vectors, shape (n_angles, geom.size).

    The planar phase separates over the two array axes, so only
    n_horizontal + n_vertical complex exponentials are evaluated per angle.
    """
    sin_az = np.sin(az)
    a = sin_az * np.cos(el)
    b = sin_az * np.sin(el)
    m = np.arange(geom.n_horizontal)
    n = np.arange(geom.n_vertical)
    row = _unit_phasor(math.pi * a[:, None] * m)   # (n_angles, n_horizontal)
    col = _unit_phasor(math.pi * b[:, None] * n)   # (n_angles, n_vertical)
    return (row[:, :, None] * col[:, None, :]).reshape(az.shape[0], geom.size)


def _unit_phasor(phase: np.ndarray) -> np.ndarray:
    """exp(1j * phase) for real phase, without a complex-exp call."""
    out = np.empty(phase.shape, dtype=complex)
    np.cos(phase, out=out.real)
    np.sin(phase, out=out.imag)
    return out


def build_channel_matrix(
    gains: np.ndarray,
    aoa_az: np.ndarray,
    aoa_el: np.ndarray,
    aod_az: np.ndarray,
    aod_el: np.ndarray,
    ue_geom: ArrayGeometry,
    bs_geom: ArrayGeometry,
    subpaths_per_cluster: int,
) -> np.ndarray:
    """Assemble H = (1/sqrt(R)) * sum_s gain_s * u_ue(s) u_bs(s)^H, (N_UE, N_BS)."""
    gains = np.asarray(gains, dtype=complex)
    u_ue = array_response_many(np.asarray(aoa_az, float), np.asarray(aoa_el, float), ue_geom)
    u_bs = array_response_many(np.asarray(aod_az, float), np.asarray(aod_el, float), bs_geom)
    scale = 1.0 / math.sqrt(subpaths_per_cluster)
    return scale * ((gains[:, None] * u_ue).T @ u_bs.conj())


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    """Wrap to [-pi, pi]."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass
class LinkDraw:
    """All random decisions of one link realization, before matrix assembly."""

    los: bool
    pathloss_db: float
    n_clusters: int
    n_subpaths: int
    aoa_az: np.ndarray
    aoa_el: np.ndarray
    aod_az: np.ndarray
    aod_el: np.ndarray
    gains: np.ndarray


def draw_link(
    d: float,
    rng: np.random.Generator,
    *,
    wavelength_m: float = 3.0e8 / 28.0e9,
    exp_los: float = 3.0,
    exp_nlos: float = 4.0,
    shadow_sigma_los_db: float = 4.0,
    shadow_sigma_nlos_db: float = 7.8,
    cluster_mean: float = 1.8,
    subpaths_per_cluster: int = 10,
    cluster_elevation_rad: float = math.pi / 6.0,
    subpath_offset_deg: float = 5.0,
) -> LinkDraw:
    """Draw link state, pathloss, cluster geometry and subpath gains.

    Cluster count is max(1, Poisson(cluster_mean)); cluster powers follow an
    exponential profile normalized to one; subpath gains are circularly
    symmetric complex Gaussians calibrated so the mean per-subpath power sum
    (divided by R) equals the linear pathloss gain, i.e.
    E[||H||_F^2] = N_UE * N_BS * 10^(-PL/10).
    """
    los = bool(rng.random() < p_los(d))
    pl_db = pathloss_db(
        d,
        los,
        rng,
        wavelength_m=wavelength_m,
        exp_los=exp_los,
        exp_nlos=exp_nlos,
        shadow_sigma_los_db=shadow_sigma_los_db,
        shadow_sigma_nlos_db=shadow_sigma_nlos_db,
    )
    pl_lin = 10.0 ** (-pl_db / 10.0)

    n_clusters = max(1, int(rng.poisson(cluster_mean)))
    r = subpaths_per_cluster
    cluster_power = rng.exponential(size=n_clusters)
    cluster_power /= cluster_power.sum()

    centers = rng.uniform(-1.0, 1.0, size=(4, n_clusters))
    centers[0] *= math.pi
    centers[1] *= cluster_elevation_rad
    centers[2] *= math.pi
    centers[3] *= cluster_elevation_rad

    offset_scale = math.radians(subpath_offset_deg)
    n_paths = n_clusters * r
    angles = _wrap_angle(
        np.repeat(centers, r, axis=1) + rng.laplace(0.0, offset_scale, size=(4, n_paths))
    )

    # Per-subpath variance pi_c * pl_lin makes E[sum |h|^2 / R] = pl_lin.
    variance = np.repeat(cluster_power, r) * pl_lin
    normals = rng.standard_normal(2 * n_paths)
    gains = np.sqrt(variance / 2.0) * (normals[:n_paths] + 1j * normals[n_paths:])
    return LinkDraw(
        los=los,
        pathloss_db=pl_db,
        n_clusters=n_clusters,
        n_subpaths=r,
        aoa_az=angles[0],
        aoa_el=angles[1],
        aod_az=angles[2],
        aod_el=angles[3],
        gains=gains,
    )


def sample_channel(
    ue_pos: Point3,
    bs_pos: Point3,
    rng: np.random.Generator,
    *,
    ue_geom: ArrayGeometry = ArrayGeometry(4, 4),
    bs_geom: ArrayGeometry = ArrayGeometry(8, 8),
    **draw_kwargs,
) -> ChannelRealization:
    """Draw one coherence-interval channel realization for a UE-BS pair."""
    d = distance_3d(ue_pos, bs_pos)
    draw = draw_link(d, rng, **draw_kwargs)
    H = build_channel_matrix(
        draw.gains, draw.aoa_az, draw.aoa_el, draw.aod_az, draw.aod_el,
        ue_geom, bs_geom, draw.n_subpaths,
    )
    return ChannelRealization(
        H=H, los=draw.los, pathloss_db=draw.pathloss_db,
        n_clusters=draw.n_clusters, n_subpaths=draw.n_subpaths,
    )


def link_rng(seed_key) -> np.random.Generator:
    """Independent per-link generator from a counter key like (seed, ep, slot, ue, bs)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(tuple(seed_key))))
