"""Multi-user mobile mmWave downlink simulator with load-balancing handover.

Slotted-time network simulation (clustered MIMO channels, SVD beamforming,
interference-limited link capacities) plus a deterministic-policy-gradient
learner that picks backup base stations for users about to hand over, a
per-BS resource allocation heuristic, and random / swap-search baselines.
"""

__version__ = "0.1.0"
