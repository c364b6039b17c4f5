"""Episode logs and the three objective counters (sum rate, outages, handovers)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .env import NetworkState, SlotOutcome

LOG_COLUMNS = (
    "slot", "ue", "capacity_gbps", "share", "rate_gbps", "serving_bs",
    "handover", "outage", "r_th_gbps", "reward_rate", "reward_outage_pen",
    "reward_ho_pen",
)


@dataclass
class EpisodeLog:
    """One row per (slot, ue) for slots 1..T+1.

    Slot T+1 carries the final realized capacities/shares/rates (needed to
    audit the last slot's outage window) with zeroed flags and reward
    components.
    """

    n_slots: int  # decision slots T
    n_ue: int
    slot: np.ndarray
    ue: np.ndarray
    capacity_gbps: np.ndarray
    share: np.ndarray
    rate_gbps: np.ndarray
    serving_bs: np.ndarray
    handover: np.ndarray
    outage: np.ndarray
    r_th_gbps: np.ndarray
    reward_rate: np.ndarray
    reward_outage_pen: np.ndarray
    reward_ho_pen: np.ndarray

    @classmethod
    def from_episode(
        cls,
        states: list[NetworkState],
        outcomes: list[SlotOutcome],
        final_state: NetworkState,
        r_th_gbps: np.ndarray,
        lambda_t: float,
        lambda_h: float,
    ) -> "EpisodeLog":
        """Assemble from the per-slot states seen before each step."""
        n_slots = len(outcomes)
        n_ue = r_th_gbps.shape[0]
        rows = {name: [] for name in LOG_COLUMNS}
        for state, out in zip(states, outcomes):
            for i in range(n_ue):
                rows["slot"].append(out.slot)
                rows["ue"].append(i)
                rows["capacity_gbps"].append(state.capacity_gbps[i])
                rows["share"].append(state.share[i])
                rows["rate_gbps"].append(out.rates_gbps[i])
                rows["serving_bs"].append(int(state.serving[i]))
                rows["handover"].append(int(out.handover_flags[i]))
                rows["outage"].append(int(out.outage_flags[i]))
                rows["r_th_gbps"].append(r_th_gbps[i])
                rows["reward_rate"].append(out.rates_gbps[i])
                rows["reward_outage_pen"].append(-lambda_t * out.outage_flags[i])
                rows["reward_ho_pen"].append(-lambda_h * out.handover_flags[i])
        for i in range(n_ue):
            rows["slot"].append(final_state.slot)
            rows["ue"].append(i)
            rows["capacity_gbps"].append(final_state.capacity_gbps[i])
            rows["share"].append(final_state.share[i])
            rows["rate_gbps"].append(final_state.capacity_gbps[i] * final_state.share[i])
            rows["serving_bs"].append(int(final_state.serving[i]))
            rows["handover"].append(0)
            rows["outage"].append(0)
            rows["r_th_gbps"].append(r_th_gbps[i])
            rows["reward_rate"].append(0.0)
            rows["reward_outage_pen"].append(0.0)
            rows["reward_ho_pen"].append(0.0)
        return cls(
            n_slots=n_slots,
            n_ue=n_ue,
            slot=np.array(rows["slot"], dtype=int),
            ue=np.array(rows["ue"], dtype=int),
            capacity_gbps=np.array(rows["capacity_gbps"]),
            share=np.array(rows["share"]),
            rate_gbps=np.array(rows["rate_gbps"]),
            serving_bs=np.array(rows["serving_bs"], dtype=int),
            handover=np.array(rows["handover"], dtype=int),
            outage=np.array(rows["outage"], dtype=int),
            r_th_gbps=np.array(rows["r_th_gbps"]),
            reward_rate=np.array(rows["reward_rate"]),
            reward_outage_pen=np.array(rows["reward_outage_pen"]),
            reward_ho_pen=np.array(rows["reward_ho_pen"]),
        )

    # ---------- CSV round trip ----------

    def write_csv(self, fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for idx in range(self.slot.shape[0]):
            writer.writerow([
                int(self.slot[idx]),
                int(self.ue[idx]),
                repr(float(self.capacity_gbps[idx])),
                repr(float(self.share[idx])),
                repr(float(self.rate_gbps[idx])),
                int(self.serving_bs[idx]),
                int(self.handover[idx]),
                int(self.outage[idx]),
                repr(float(self.r_th_gbps[idx])),
                repr(float(self.reward_rate[idx])),
                repr(float(self.reward_outage_pen[idx])),
                repr(float(self.reward_ho_pen[idx])),
            ])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    @classmethod
    def read_csv(cls, fh) -> "EpisodeLog":
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != LOG_COLUMNS:
            raise ValueError(f"unexpected log header {header}")
        cols = {name: [] for name in LOG_COLUMNS}
        for row in reader:
            if len(row) != len(LOG_COLUMNS):
                raise ValueError("malformed log row")
            for name, value in zip(LOG_COLUMNS, row):
                cols[name].append(value)
        slot = np.array(cols["slot"], dtype=int)
        ue = np.array(cols["ue"], dtype=int)
        if slot.size == 0:
            raise ValueError("empty episode log")
        n_ue = int(ue.max()) + 1
        n_slots = int(slot.max()) - 1
        return cls(
            n_slots=n_slots,
            n_ue=n_ue,
            slot=slot,
            ue=ue,
            capacity_gbps=np.array(cols["capacity_gbps"], dtype=float),
            share=np.array(cols["share"], dtype=float),
            rate_gbps=np.array(cols["rate_gbps"], dtype=float),
            serving_bs=np.array(cols["serving_bs"], dtype=int),
            handover=np.array(cols["handover"], dtype=int),
            outage=np.array(cols["outage"], dtype=int),
            r_th_gbps=np.array(cols["r_th_gbps"], dtype=float),
            reward_rate=np.array(cols["reward_rate"], dtype=float),
            reward_outage_pen=np.array(cols["reward_outage_pen"], dtype=float),
            reward_ho_pen=np.array(cols["reward_ho_pen"], dtype=float),
        )


@dataclass
class MetricsRecord:
    """Per-episode objectives plus bookkeeping."""

    episode: int
    seed_key: tuple[int, ...]
    f1_gbps: float     # sum of realized rates over slots and UEs
    f2_count: int      # rate-requirement misses
    f3_count: int      # handovers
    reward_sum: float  # sum of logged per-slot rewards
    wall_s: float = 0.0


def compute_metrics(
    log: EpisodeLog,
    window_k: int,
    lambda_t: float,
    lambda_h: float,
    episode: int = 0,
    seed_key: tuple[int, ...] = (),
) -> MetricsRecord:
    """Recompute F1/F2/F3 from raw log columns (not the stored flags).

    The outage window for slot t spans rates R^{t+1} down to R^{t-K+2},
    mirroring the reward; rates at non-positive slots count as zero.
    """
    t_max = int(log.slot.max())
    n_ue = int(log.ue.max()) + 1
    n_slots = t_max - 1
    if n_slots < 1:
        raise ValueError("log must cover at least one decision slot")
    expected = (n_slots + 1) * n_ue
    if log.slot.shape[0] != expected:
        raise ValueError(
            f"truncated log: {log.slot.shape[0]} rows, expected {expected}"
        )
    # index rates and serving as [slot, ue]
    rate = np.zeros((t_max + 1, n_ue))
    serving = np.zeros((t_max + 1, n_ue), dtype=int)
    seen = np.zeros((t_max + 1, n_ue), dtype=bool)
    rate[log.slot, log.ue] = log.rate_gbps
    serving[log.slot, log.ue] = log.serving_bs
    seen[log.slot, log.ue] = True
    if not seen[1:].all():
        raise ValueError("truncated log: missing (slot, ue) rows")
    r_th = np.zeros(n_ue)
    r_th[log.ue] = log.r_th_gbps

    f1 = float(rate[1:n_slots + 1].sum())
    f2 = 0
    f3 = 0
    for t in range(1, n_slots + 1):
        window = rate[t + 1] + rate[t]
        for back in range(1, window_k - 1):
            if t - back >= 1:
                window = window + rate[t - back]
        f2 += int(np.count_nonzero(window / window_k <= r_th))
        f3 += int(np.count_nonzero(serving[t + 1] != serving[t]))
    reward_sum = float(
        log.reward_rate.sum() + log.reward_outage_pen.sum() + log.reward_ho_pen.sum()
    )
    return MetricsRecord(
        episode=episode,
        seed_key=tuple(seed_key),
        f1_gbps=f1,
        f2_count=f2,
        f3_count=f3,
        reward_sum=reward_sum,
    )
