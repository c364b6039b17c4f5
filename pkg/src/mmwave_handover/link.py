"""Beamforming/combining vectors and interference-limited link capacity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class BeamPair:
    """Top singular pair of a channel: BS beam f, UE combiner w, gain sigma_max."""

    f: np.ndarray  # (N_BS,) unit norm
    w: np.ndarray  # (N_UE,) unit norm
    gain: float


@dataclass
class LinkCapacity:
    capacity: float  # bits/s
    snr_linear: float
    interference_w: float


def svd_beamforming(H: np.ndarray) -> BeamPair:
    """Rank-1 transmit/receive pair from the dominant singular triplet of H.

    Solved through the receive-side Gram matrix: w is the top eigenvector of
    H H^H and f = H^H w / ||H^H w||, which reproduces the dominant singular
    pair exactly and keeps the eigensolve at the smaller array size.
    """
    H = np.asarray(H)
    if not np.all(np.isfinite(H)):
        raise ValueError("channel matrix contains non-finite entries")
    if not np.any(H):
        raise ValueError("zero channel matrix has no beam direction")
    gram = H @ H.conj().T
    eigvals, eigvecs = np.linalg.eigh(gram)
    w = eigvecs[:, -1]
    f = H.conj().T @ w
    norm = np.linalg.norm(f)
    if norm == 0.0:
        raise ValueError("degenerate channel matrix")
    f = f / norm
    return BeamPair(f=f, w=w, gain=float(norm))


def beamformed_gain(w: np.ndarray, H: np.ndarray, f: np.ndarray) -> float:
    """|w^H H f| for arbitrary unit vectors."""
    return float(abs(np.vdot(w, H @ f)))


def interference(
    ue: int,
    serving: np.ndarray,
    active: np.ndarray,
    channels,
    beams,
    p: float,
) -> float:
    """Received interference power (watts) at `ue` from all non-serving BSs.

    Each interfering BS j' beams toward every one of its active UEs i'
    (active[i'] true, serving[i'] == j'); the victim combines with the beam
    pair of its own serving link. channels[i][j] is the (N_UE, N_BS) matrix
    from BS j to UE i; beams[i][j] is the BeamPair of that link.
    """
    j_serving = int(serving[ue])
    w = beams[ue][j_serving].w
    total = 0.0
    for i_other, j_other in enumerate(serving):
        j_other = int(j_other)
        if j_other == j_serving or not active[i_other]:
            continue
        f = beams[i_other][j_other].f
        total += p * abs(np.vdot(w, channels[ue][j_other] @ f)) ** 2
    return total


def capacity(
    gain: float,
    interference_w: float,
    p: float,
    bandwidth_hz: float,
    noise_psd_w: float,
) -> float:
    """Shannon capacity W log2(1 + p g^2 / (sigma^2 W + I)) in bits/s."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    if p < 0:
        raise ValueError("transmit power must be non-negative")
    snr = p * gain * gain / (noise_psd_w * bandwidth_hz + interference_w)
    return bandwidth_hz * math.log2(1.0 + snr)


def link_budget(
    gain: float,
    interference_w: float,
    p: float,
    bandwidth_hz: float,
    noise_psd_w: float,
) -> LinkCapacity:
    """Capacity together with the SINR and interference that produced it."""
    snr = p * gain * gain / (noise_psd_w * bandwidth_hz + interference_w)
    return LinkCapacity(
        capacity=capacity(gain, interference_w, p, bandwidth_hz, noise_psd_w),
        snr_linear=snr,
        interference_w=interference_w,
    )
