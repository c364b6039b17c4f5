"""Slotted network MDP: state, handover detection, transition and reward.

One environment step covers a full slot boundary: data transmission at the
current locations, movement to the next trajectory point, capacity probing
toward the current serving BSs, the backup decision, handover execution,
next-slot resource allocation, and the per-slot reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .allocation import ShareRequest, allocate, required_share
from .channel import ArrayGeometry, array_response_many, draw_link, link_rng
from .config import ScenarioConfig
from .geometry import Point3, Trajectory, distance_3d, generate_trajectory

GBPS = 1.0e9

# Salts keeping the derived RNG streams of one episode disjoint.
_SALT_EPISODE = 11
_SALT_CHANNEL = 23


@dataclass
class NetworkState:
    """Agent-visible snapshot at the start of slot `slot`."""

    slot: int
    locations: list[Point3]
    serving: np.ndarray        # (n_ue,) BS index
    capacity_gbps: np.ndarray  # (n_ue,) toward the serving BS
    share: np.ndarray          # (n_ue,) allocated resource fraction
    rate_history: np.ndarray   # (n_ue, K-2); column 0 is the most recent rate


@dataclass
class BackupAction:
    """Backup BS per UE; entries for UEs outside the handover set are ignored."""

    backup_bs: np.ndarray


@dataclass
class SlotOutcome:
    slot: int
    rates_gbps: np.ndarray      # realized R^t
    handover_flags: np.ndarray  # serving changed between t and t+1
    outage_flags: np.ndarray    # K-window average (incl. next rate) at or below r_th
    reward: float
    rate_term: float
    outage_penalty: float       # lambda_t * outage count
    handover_penalty: float     # lambda_h * handover count


@dataclass
class _Transition:
    """Uncommitted result of completing the pending slot under one association."""

    alpha: np.ndarray
    capacity_gbps: np.ndarray
    rates_now: np.ndarray
    rates_next: np.ndarray
    outage: np.ndarray
    handover: np.ndarray
    reward: float
    rate_term: float
    outage_penalty: float
    handover_penalty: float


def handover_set(
    state: NetworkState,
    next_capacities_gbps: np.ndarray,
    r_th_gbps: np.ndarray,
    k: int,
) -> np.ndarray:
    """UEs whose K-window average would drop below threshold without a handover.

    The window mixes the realized rates of the last K-1 slots with a
    lookahead term: the probed next-slot capacity toward the current serving
    BS at the current share.
    """
    rates_now = state.capacity_gbps * state.share
    window = rates_now + state.rate_history.sum(axis=1)
    window = window + next_capacities_gbps * state.share
    return window / k < r_th_gbps


def outage_flags(
    rates_now: np.ndarray,
    rates_next: np.ndarray,
    rate_history: np.ndarray,
    r_th_gbps: np.ndarray,
    k: int,
) -> np.ndarray:
    """Rate-requirement misses counted by the reward: window of the next K rates."""
    window = (rates_next + rates_now + rate_history.sum(axis=1)) / k
    return window <= r_th_gbps


def slot_reward(
    rates_gbps: np.ndarray,
    outage: np.ndarray,
    handover: np.ndarray,
    lambda_t: float,
    lambda_h: float,
) -> tuple[float, float, float, float]:
    """Returns (reward, rate_term, outage_penalty, handover_penalty)."""
    rate_term = float(rates_gbps.sum())
    outage_penalty = lambda_t * float(np.count_nonzero(outage))
    handover_penalty = lambda_h * float(np.count_nonzero(handover))
    return rate_term - outage_penalty - handover_penalty, rate_term, outage_penalty, handover_penalty


class _SlotLinks:
    """All link quantities for one slot's locations.

    sigma[i, j] is the top singular value of H(i, j); cross[i, j, i2, j2] is
    p * |w(i,j)^H H(i,j2) f(i2,j2)|^2, the interference power UE i (combining
    for BS j) receives from BS j2 beaming at UE i2.
    """

    def __init__(self, env: "HandoverEnv", slot: int):
        cfg = env.cfg
        n_ue, n_bs = cfg.n_ue, cfg.n_bs
        n_rx, n_tx = env.ue_geom.size, env.bs_geom.size
        self.los = np.empty((n_ue, n_bs), dtype=bool)
        self.pathloss_db = np.empty((n_ue, n_bs))
        draws = []
        for i in range(n_ue):
            pos = env.location(i, slot)
            for j in range(n_bs):
                rng = link_rng((*env.stream_key, _SALT_CHANNEL, slot, i, j))
                d = distance_3d(pos, env.bs_positions[j])
                draw = draw_link(d, rng, **env.draw_kwargs)
                draws.append(draw)
                self.los[i, j] = draw.los
                self.pathloss_db[i, j] = draw.pathloss_db
        # Assemble every pair's matrix from two batched array-response passes;
        # identical arithmetic to channel.build_channel_matrix per pair.
        aoa_az = np.concatenate([d.aoa_az for d in draws])
        aoa_el = np.concatenate([d.aoa_el for d in draws])
        aod_az = np.concatenate([d.aod_az for d in draws])
        aod_el = np.concatenate([d.aod_el for d in draws])
        u_ue = array_response_many(aoa_az, aoa_el, env.ue_geom)
        u_bs_conj = array_response_many(aod_az, aod_el, env.bs_geom).conj()
        H = np.empty((n_ue, n_bs, n_rx, n_tx), dtype=complex)
        offset = 0
        for idx, draw in enumerate(draws):
            n = draw.gains.size
            scale = (1.0 / math.sqrt(draw.n_subpaths)) * draw.gains
            weighted = scale[:, None] * u_ue[offset:offset + n]
            H[idx // n_bs, idx % n_bs] = weighted.T @ u_bs_conj[offset:offset + n]
            offset += n
        # Dominant singular pairs of all links at once (same construction as
        # link.svd_beamforming: receive Gram eigenvector, f = H^H w / ||.||).
        gram = H @ H.conj().swapaxes(-1, -2)
        _, eigvecs = np.linalg.eigh(gram.reshape(-1, n_rx, n_rx))
        w = eigvecs[:, :, -1].reshape(n_ue, n_bs, n_rx)
        f = np.einsum("ijmn,ijm->ijn", H.conj(), w)
        self.sigma = np.linalg.norm(f, axis=-1)
        f = f / np.maximum(self.sigma, 1e-300)[..., None]
        # cross[i, j, i2, j2] = p |w(i,j)^H H(i,j2) f(i2,j2)|^2
        y = np.einsum("ijm,iJmn->ijJn", w.conj(), H)
        v = np.einsum("ijJn,IJn->ijIJ", y, f)
        self.cross = cfg.tx_power_w * (v.real ** 2 + v.imag ** 2)
        self._noise_w = cfg.noise_psd_w * cfg.bandwidth_hz
        self._p = cfg.tx_power_w
        self._bw = cfg.bandwidth_hz
        self._ue_idx = np.arange(n_ue)

    def capacities_gbps(self, assign: np.ndarray, active: np.ndarray) -> np.ndarray:
        """Capacity of every UE toward assign[i], with the given active set."""
        per_victim = self.cross[self._ue_idx, assign]          # (n_ue, n_ue, n_bs)
        pairwise = per_victim[:, self._ue_idx, assign]         # [i, i2]
        other_bs = assign[None, :] != assign[:, None]
        interf = (pairwise * (other_bs & active[None, :])).sum(axis=1)
        sig = self.sigma[self._ue_idx, assign]
        snr = self._p * sig * sig / (self._noise_w + interf)
        return self._bw * np.log2(1.0 + snr) / GBPS


class HandoverEnv:
    """One episode of the slotted handover MDP, deterministic under its seed key.

    stream_key identifies the episode, e.g. (config_seed, stream_id, episode);
    all channel, trajectory and threshold randomness derives from it.
    """

    def __init__(self, cfg: ScenarioConfig, stream_key: tuple[int, ...]):
        self.cfg = cfg
        self.stream_key = tuple(int(v) for v in stream_key)
        self.bs_positions = [Point3(*p) for p in cfg.bs_xyz]
        self.ue_geom = ArrayGeometry(*cfg.ue_array)
        self.bs_geom = ArrayGeometry(*cfg.bs_array)
        self.draw_kwargs = dict(
            wavelength_m=cfg.wavelength_m,
            exp_los=cfg.pathloss_exp_los,
            exp_nlos=cfg.pathloss_exp_nlos,
            shadow_sigma_los_db=cfg.shadow_sigma_los_db,
            shadow_sigma_nlos_db=cfg.shadow_sigma_nlos_db,
            cluster_mean=cfg.cluster_mean,
            subpaths_per_cluster=cfg.subpaths_per_cluster,
            cluster_elevation_rad=cfg.cluster_elevation_rad,
            subpath_offset_deg=cfg.subpath_offset_deg,
        )
        ep_rng = np.random.default_rng([*self.stream_key, _SALT_EPISODE])
        zone = cfg.zone()
        self.trajectories: list[Trajectory] = []
        for i, speed in enumerate(cfg.ue_speeds_kmh):
            traj_seed = int(ep_rng.integers(2**63))
            self.trajectories.append(
                generate_trajectory(
                    traj_seed, speed, zone, cfg.duration_s, cfg.slot_s, ue_id=i
                )
            )
        self.r_th_gbps = ep_rng.uniform(cfg.r_th_min_gbps, cfg.r_max_gbps, size=cfg.n_ue)
        self.n_slots = cfg.n_slots
        self.state: NetworkState | None = None
        self._pending: _SlotLinks | None = None
        self._probe_cache: tuple[np.ndarray, np.ndarray] | None = None

    # ---------- geometry helpers ----------

    def location(self, ue: int, slot: int) -> Point3:
        return self.trajectories[ue].positions[slot - 1]

    def locations(self, slot: int) -> list[Point3]:
        return [self.location(i, slot) for i in range(self.cfg.n_ue)]

    # ---------- episode control ----------

    def reset(self) -> NetworkState:
        cfg = self.cfg
        links = _SlotLinks(self, slot=1)
        # Strongest-link initial association, then the usual allocation with
        # an all-zero rate history.
        serving = np.argmax(links.sigma, axis=1)
        zero_hist = np.zeros((cfg.n_ue, cfg.window_k - 2))
        alpha, caps, _ = self._allocate_for(
            links, serving, zero_hist, rates_now=np.zeros(cfg.n_ue)
        )
        self.state = NetworkState(
            slot=1,
            locations=self.locations(1),
            serving=serving,
            capacity_gbps=caps,
            share=alpha,
            rate_history=zero_hist,
        )
        self._pending = None
        self._probe_cache = None
        return self.state

    def _require_state(self) -> NetworkState:
        if self.state is None:
            raise RuntimeError("environment not reset")
        return self.state

    def _pending_links(self) -> _SlotLinks:
        state = self._require_state()
        if self._pending is None:
            self._pending = _SlotLinks(self, slot=state.slot + 1)
        return self._pending

    @property
    def done(self) -> bool:
        return self._require_state().slot > self.n_slots

    def probe(self) -> tuple[np.ndarray, np.ndarray]:
        """Mini-slot S: (handover mask, next-slot capacity toward current serving).

        The probed capacity keeps the current association and activity
        pattern, i.e. "what happens if nothing changes".
        """
        if self._probe_cache is None:
            state = self._require_state()
            links = self._pending_links()
            caps = links.capacities_gbps(state.serving, state.share > 0.0)
            mask = handover_set(state, caps, self.r_th_gbps, self.cfg.window_k)
            self._probe_cache = (mask, caps)
        return self._probe_cache

    def capacities_under(self, assign: np.ndarray) -> np.ndarray:
        """Next-slot capacities for a hypothetical association (all UEs active)."""
        links = self._pending_links()
        assign = np.asarray(assign, dtype=int)
        return links.capacities_gbps(assign, np.ones(self.cfg.n_ue, dtype=bool))

    # ---------- transition core ----------

    def _allocate_for(self, links, assign, rate_history, rates_now):
        """Allocation for the slot whose links are given, under `assign`.

        The per-UE deficit window is the current realized rate plus the
        stored K-2 older rates. Returns (alpha, realized capacities, result).
        """
        cfg = self.cfg
        all_active = np.ones(cfg.n_ue, dtype=bool)
        caps_planning = links.capacities_gbps(assign, all_active)
        requests = []
        for i in range(cfg.n_ue):
            past = [rates_now[i], *rate_history[i]]
            share = required_share(past, self.r_th_gbps[i], caps_planning[i])
            requests.append(
                ShareRequest(ue=i, share=share, capacity=caps_planning[i], bs=int(assign[i]))
            )
        result = allocate(requests, cfg.n_bs, cfg.alloc_exhaustive_cap)
        alpha = np.array([result.share_of(i) for i in range(cfg.n_ue)])
        caps_real = links.capacities_gbps(assign, alpha > 0.0)
        return alpha, caps_real, result

    def _transition(self, backup: np.ndarray) -> "_Transition":
        """Everything that follows the handover decision, without committing."""
        cfg = self.cfg
        state = self._require_state()
        links = self._pending_links()
        rates_now = state.capacity_gbps * state.share
        alpha, caps_real, _ = self._allocate_for(
            links, backup, state.rate_history, rates_now
        )
        rates_next = caps_real * alpha
        out = outage_flags(
            rates_now, rates_next, state.rate_history, self.r_th_gbps, cfg.window_k
        )
        ho = backup != state.serving
        reward, rate_term, o_pen, h_pen = slot_reward(
            rates_now, out, ho, cfg.lambda_t, cfg.lambda_h
        )
        return _Transition(
            alpha=alpha, capacity_gbps=caps_real, rates_now=rates_now,
            rates_next=rates_next, outage=out, handover=ho, reward=reward,
            rate_term=rate_term, outage_penalty=o_pen, handover_penalty=h_pen,
        )

    def evaluate_assignment(self, backup: np.ndarray) -> float:
        """One-slot reward if the pending slot used this association (no commit)."""
        backup = np.asarray(backup, dtype=int)
        return self._transition(backup).reward

    def step(self, action: BackupAction) -> tuple[NetworkState, SlotOutcome]:
        cfg = self.cfg
        state = self._require_state()
        if state.slot > self.n_slots:
            raise RuntimeError("episode is over")
        backup = np.asarray(action.backup_bs, dtype=int)
        if backup.shape != (cfg.n_ue,):
            raise ValueError(f"action length {backup.shape} != ({cfg.n_ue},)")
        if np.any(backup < 0) or np.any(backup >= cfg.n_bs):
            raise ValueError("backup BS index out of range")
        mask, _ = self.probe()
        # Non-handover UEs keep their serving BS regardless of the raw action.
        backup = np.where(mask, backup, state.serving)
        tr = self._transition(backup)

        outcome = SlotOutcome(
            slot=state.slot,
            rates_gbps=tr.rates_now,
            handover_flags=tr.handover,
            outage_flags=tr.outage,
            reward=tr.reward,
            rate_term=tr.rate_term,
            outage_penalty=tr.outage_penalty,
            handover_penalty=tr.handover_penalty,
        )
        if cfg.window_k > 2:
            new_hist = np.column_stack([tr.rates_now, state.rate_history[:, :-1]])
        else:
            new_hist = state.rate_history
        next_state = NetworkState(
            slot=state.slot + 1,
            locations=self.locations(state.slot + 1),
            serving=backup.copy(),
            capacity_gbps=tr.capacity_gbps,
            share=tr.alpha,
            rate_history=new_hist,
        )
        # Structural constraint: per-BS shares within budget, one BS per UE.
        for j in range(cfg.n_bs):
            assert tr.alpha[backup == j].sum() <= 1.0 + 1e-9
        self.state = next_state
        self._pending = None
        self._probe_cache = None
        return next_state, outcome
