"""Reference backup-selection policies: random choice and swap search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import HandoverEnv, NetworkState
from .geometry import Point3, distance_3d


@dataclass(frozen=True)
class VicinityRule:
    """Candidate BSs for a UE: all within radius_m, or every BS when None.

    Falls back to the nearest BS so the candidate set is never empty.
    """

    radius_m: float | None = None

    def candidates(self, ue_loc: Point3, bs_positions: list[Point3]) -> list[int]:
        if self.radius_m is None:
            return list(range(len(bs_positions)))
        dists = [distance_3d(ue_loc, p) for p in bs_positions]
        inside = [j for j, d in enumerate(dists) if d <= self.radius_m]
        if inside:
            return inside
        return [int(np.argmin(dists))]


def random_backup(
    state: NetworkState,
    handover_mask: np.ndarray,
    next_locations: list[Point3],
    bs_positions: list[Point3],
    rng: np.random.Generator,
    vicinity: VicinityRule = VicinityRule(),
) -> np.ndarray:
    """Uniform pick among vicinity BSs, avoiding the serving BS when possible."""
    backup = state.serving.copy()
    for i in np.flatnonzero(handover_mask):
        cands = vicinity.candidates(next_locations[i], bs_positions)
        pool = [j for j in cands if j != state.serving[i]] or cands
        backup[i] = pool[int(rng.integers(len(pool)))]
    return backup


def _improvement_passes(
    env: HandoverEnv,
    assign: np.ndarray,
    handover_ues: np.ndarray,
    reward: float,
    max_moves: int,
) -> tuple[np.ndarray, float, bool]:
    """Local search: repeatedly move the worst-connected handover UE to the
    BS that maximizes the one-slot reward, until no move improves or the
    move budget runs out."""
    n_bs = env.cfg.n_bs
    improved = False
    for _ in range(max_moves):
        caps = env.capacities_under(assign)
        order = sorted(handover_ues, key=lambda i: (caps[i], i))
        moved = False
        for i in order:
            best_j = int(assign[i])
            best_r = reward
            for j in range(n_bs):
                if j == assign[i]:
                    continue
                cand = assign.copy()
                cand[i] = j
                r = env.evaluate_assignment(cand)
                if r > best_r:
                    best_r = r
                    best_j = j
            if best_j != assign[i]:
                assign[i] = best_j
                reward = best_r
                moved = True
                improved = True
                break
        if not moved:
            break
    return assign, reward, improved


def wcs_backup(
    state: NetworkState,
    handover_mask: np.ndarray,
    env: HandoverEnv,
    rng: np.random.Generator,
) -> np.ndarray:
    """Worst-connection swapping over the handover set.

    Starts from "keep every serving BS"; when that incumbent is already a
    local optimum, one handover UE is reassigned at random and a second
    improvement round runs; the perturbed result is kept only if strictly
    better. Never returns an assignment worse than the starting one.
    """
    assign = state.serving.copy()
    handover_ues = np.flatnonzero(handover_mask)
    if handover_ues.size == 0:
        return assign
    start_reward = env.evaluate_assignment(assign)
    max_moves = env.cfg.wcs_iter_factor * env.cfg.n_ue
    assign, reward, improved = _improvement_passes(
        env, assign, handover_ues, start_reward, max_moves
    )
    if not improved:
        i = int(handover_ues[int(rng.integers(handover_ues.size))])
        others = [j for j in range(env.cfg.n_bs) if j != assign[i]]
        if others:
            perturbed = assign.copy()
            perturbed[i] = others[int(rng.integers(len(others)))]
            pert_reward = env.evaluate_assignment(perturbed)
            perturbed, pert_reward, _ = _improvement_passes(
                env, perturbed, handover_ues, pert_reward, max_moves
            )
            if pert_reward > reward:
                return perturbed
    return assign
