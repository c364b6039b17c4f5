"""Per-slot resource sharing: deficit shares, subset selection, remainders.

Each BS splits its unit resource among its assigned UEs: first cover the
rate deficits of the largest satisfiable subset, then hand whatever is left
to the UE with the highest capacity. `oracle_allocate` re-derives the same
policy by brute force over all subsets and exists purely as a test oracle.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

log = logging.getLogger(__name__)

# Slack for floating-point subset sums against the unit budget.
SHARE_TOL = 1e-12

UNSATISFIABLE = math.inf


@dataclass(frozen=True)
class ShareRequest:
    """One UE's demand at a BS: deficit share, capacity toward it (bits/s or Gbps)."""

    ue: int
    share: float
    capacity: float
    bs: int


@dataclass
class AllocationResult:
    shares: dict[int, float]                    # ue -> alpha in [0, 1]
    satisfied: dict[int, tuple[int, ...]]       # bs -> I*_j (ue ids)
    n_satisfied: dict[int, int]                 # bs -> N_S(j)

    def share_of(self, ue: int) -> float:
        return self.shares.get(ue, 0.0)


def required_share(past_rates, r_th: float, capacity: float) -> float:
    """Resource fraction needed so the K-window average reaches r_th.

    past_rates holds the K-1 most recent realized rates (same units as r_th
    and capacity); K is inferred from its length. Returns inf when the UE
    still needs rate but the link capacity is zero.
    """
    k = len(past_rates) + 1
    deficit = max(0.0, k * r_th - sum(past_rates))
    if deficit == 0.0:
        return 0.0
    if capacity <= 0.0:
        return UNSATISFIABLE
    return deficit / capacity


def max_satisfiable(
    requests: list[ShareRequest],
    exhaustive_cap: int = 16,
) -> tuple[int, tuple[int, ...]]:
    """Largest subset of one BS's UEs whose deficit shares fit the unit budget.

    Returns (N_S, I*) where I* is, among all feasible subsets of maximum
    cardinality, the one maximizing sum(share * capacity); ties go to the
    lexicographically lowest UE-index tuple. Beyond `exhaustive_cap` UEs the
    smallest-share greedy subset is used directly (logged).
    """
    if not requests:
        return 0, ()
    by_share = sorted(requests, key=lambda r: (r.share, r.ue))
    total = 0.0
    n_s = 0
    for req in by_share:
        if total + req.share <= 1.0 + SHARE_TOL:
            total += req.share
            n_s += 1
        else:
            break
    if n_s == 0:
        return 0, ()
    if len(requests) > exhaustive_cap:
        log.warning(
            "BS %d has %d UEs, above exhaustive cap %d; using greedy subset",
            requests[0].bs, len(requests), exhaustive_cap,
        )
        return n_s, tuple(sorted(r.ue for r in by_share[:n_s]))

    by_ue = sorted(requests, key=lambda r: r.ue)
    best_score = -math.inf
    best: tuple[int, ...] = ()
    for combo in itertools.combinations(by_ue, n_s):
        load = sum(r.share for r in combo)
        if load > 1.0 + SHARE_TOL:
            continue
        score = sum(r.share * r.capacity for r in combo)
        ues = tuple(r.ue for r in combo)
        if score > best_score or (score == best_score and ues < best):
            best_score = score
            best = ues
    return n_s, best


def allocate(
    requests: list[ShareRequest],
    n_bs: int,
    exhaustive_cap: int = 16,
) -> AllocationResult:
    """Split each BS's unit resource among its UEs for the next slot.

    A BS with a single UE gives it everything. Otherwise UEs in the best
    satisfiable subset get exactly their deficit share and the UE with the
    highest capacity at that BS (lowest index on ties) receives the unused
    remainder on top.
    """
    shares: dict[int, float] = {r.ue: 0.0 for r in requests}
    satisfied: dict[int, tuple[int, ...]] = {j: () for j in range(n_bs)}
    n_satisfied: dict[int, int] = {j: 0 for j in range(n_bs)}
    for j in range(n_bs):
        group = [r for r in requests if r.bs == j]
        if not group:
            continue
        n_s, istar = max_satisfiable(group, exhaustive_cap)
        satisfied[j] = istar
        n_satisfied[j] = n_s
        if len(group) == 1:
            shares[group[0].ue] = 1.0
            continue
        used = 0.0
        for r in group:
            if r.ue in istar:
                shares[r.ue] = r.share
                used += r.share
        remainder = max(0.0, 1.0 - used)
        top = min(group, key=lambda r: (-r.capacity, r.ue))
        shares[top.ue] += remainder
    return AllocationResult(shares=shares, satisfied=satisfied, n_satisfied=n_satisfied)


def oracle_allocate(requests: list[ShareRequest], n_bs: int) -> AllocationResult:
    """Brute-force re-derivation of `allocate` for small instances (tests only).

    Enumerates every subset of every BS's UEs via bitmasks; refuses more
    than 10 UEs on one BS.
    """
    shares: dict[int, float] = {r.ue: 0.0 for r in requests}
    satisfied: dict[int, tuple[int, ...]] = {j: () for j in range(n_bs)}
    n_satisfied: dict[int, int] = {j: 0 for j in range(n_bs)}
    for j in range(n_bs):
        group = sorted((r for r in requests if r.bs == j), key=lambda r: r.ue)
        n = len(group)
        if n > 10:
            raise ValueError(f"oracle limited to 10 UEs per BS, got {n}")
        if n == 0:
            continue
        best_size = 0
        candidates: list[tuple[float, tuple[int, ...], float]] = []
        for mask in range(1 << n):
            members = [group[b] for b in range(n) if mask >> b & 1]
            load = sum(r.share for r in members)
            if load > 1.0 + SHARE_TOL:
                continue
            size = len(members)
            if size > best_size:
                best_size = size
                candidates = []
            if size == best_size:
                score = sum(r.share * r.capacity for r in members)
                candidates.append((score, tuple(r.ue for r in members), load))
        top_score = max(c[0] for c in candidates)
        winners = [c for c in candidates if c[0] == top_score]
        _, istar, used = min(winners, key=lambda c: c[1])
        satisfied[j] = istar
        n_satisfied[j] = best_size
        if n == 1:
            shares[group[0].ue] = 1.0
            continue
        for r in group:
            if r.ue in istar:
                shares[r.ue] = r.share
        best_cap = max(r.capacity for r in group)
        recipient = min(r.ue for r in group if r.capacity == best_cap)
        shares[recipient] += max(0.0, 1.0 - used)
    return AllocationResult(shares=shares, satisfied=satisfied, n_satisfied=n_satisfied)
