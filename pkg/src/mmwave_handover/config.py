"""Scenario configuration: physical constants, learning knobs, persistence."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

from .geometry import ConfigError, Point3, Zone, default_bs_grid, generate_trajectory

SPEED_OF_LIGHT = 3.0e8  # m/s


@dataclass
class ScenarioConfig:
    """Fully resolved run configuration; defaults are the desk-scale scenario."""

    # Zone and mobility
    zone_width_m: float = 100.0
    zone_depth_m: float = 100.0
    bs_xyz: list[tuple[float, float, float]] = field(default_factory=list)
    ue_speeds_kmh: list[float] = field(
        default_factory=lambda: [5.0, 5.0, 5.0, 5.0, 60.0, 60.0, 60.0]
    )
    duration_s: float = 20.0
    slot_s: float = 0.1
    seed: int = 1

    # Radio and channel
    carrier_hz: float = 28.0e9
    bandwidth_hz: float = 500.0e6
    tx_power_dbm: float = 30.0
    noise_dbm_hz: float = -174.0
    bs_array: tuple[int, int] = (8, 8)
    ue_array: tuple[int, int] = (4, 4)
    pathloss_exp_los: float = 3.0
    pathloss_exp_nlos: float = 4.0
    shadow_sigma_los_db: float = 4.0
    shadow_sigma_nlos_db: float = 7.8
    cluster_mean: float = 1.8
    subpaths_per_cluster: int = 10
    cluster_elevation_rad: float = math.pi / 6.0
    subpath_offset_deg: float = 5.0

    # Rate requirement and reward (rates in Gbps)
    window_k: int = 2
    r_th_min_gbps: float = 0.2
    r_max_gbps: float = 1.0
    lambda_t: float = 20.0
    lambda_h: float = 10.0

    # Learner
    gamma: float = 0.99
    batch_size: int = 32
    buffer_capacity: int = 100_000
    actor_lr: float = 1.0e-4
    critic_lr: float = 1.0e-3
    tau: float = 0.001
    actor_hidden: tuple[int, int] = (256, 128)
    critic_hidden: tuple[int, int] = (256, 128)
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_sigma_final: float = 0.05
    reward_scale: float = 0.01
    warmup_steps: int = 200
    grad_clip_actor: float = 5.0
    grad_clip_critic: float = 1.0
    snapshot_window: int = 25
    train_episodes: int = 500
    eval_episodes: int = 200

    # State normalization references
    ref_capacity_gbps: float = 20.0
    ref_rate_gbps: float = 20.0

    # Baselines and allocation
    vicinity_radius_m: float | None = None
    wcs_iter_factor: int = 3
    alloc_exhaustive_cap: int = 16

    # Execution
    workers: int = 1

    def __post_init__(self):
        if not self.bs_xyz:
            self.bs_xyz = [
                (p.x, p.y, p.z) for p in default_bs_grid(self.zone_width_m, self.zone_depth_m)
            ]
        self.bs_xyz = [tuple(float(v) for v in p) for p in self.bs_xyz]
        self.bs_array = tuple(int(v) for v in self.bs_array)
        self.ue_array = tuple(int(v) for v in self.ue_array)
        self.actor_hidden = tuple(int(v) for v in self.actor_hidden)
        self.critic_hidden = tuple(int(v) for v in self.critic_hidden)
        self.validate()

    # ---------- derived quantities ----------

    @property
    def n_bs(self) -> int:
        return len(self.bs_xyz)

    @property
    def n_ue(self) -> int:
        return len(self.ue_speeds_kmh)

    @property
    def n_slots(self) -> int:
        return int(math.floor(self.duration_s / self.slot_s))

    @property
    def tx_power_w(self) -> float:
        return 10.0 ** ((self.tx_power_dbm - 30.0) / 10.0)

    @property
    def noise_psd_w(self) -> float:
        return 10.0 ** ((self.noise_dbm_hz - 30.0) / 10.0)

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    def zone(self) -> Zone:
        return Zone(
            width=self.zone_width_m,
            depth=self.zone_depth_m,
            bs_positions=tuple(Point3(*p) for p in self.bs_xyz),
        )

    # ---------- validation ----------

    def validate(self):
        positive = {
            "zone_width_m": self.zone_width_m,
            "zone_depth_m": self.zone_depth_m,
            "duration_s": self.duration_s,
            "slot_s": self.slot_s,
            "carrier_hz": self.carrier_hz,
            "bandwidth_hz": self.bandwidth_hz,
            "r_th_min_gbps": self.r_th_min_gbps,
            "r_max_gbps": self.r_max_gbps,
            "gamma": self.gamma,
            "tau": self.tau,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if not self.lambda_t > self.lambda_h > 0:
            raise ConfigError(
                f"penalty weights must satisfy lambda_t > lambda_h > 0, "
                f"got lambda_t={self.lambda_t} lambda_h={self.lambda_h}"
            )
        if self.window_k < 2:
            raise ConfigError(f"window_k must be >= 2, got {self.window_k}")
        if self.r_max_gbps < self.r_th_min_gbps:
            raise ConfigError("r_max_gbps must be >= r_th_min_gbps")
        if not self.ue_speeds_kmh:
            raise ConfigError("at least one UE required")
        if self.n_bs < 1:
            raise ConfigError("at least one BS required")
        zone = self.zone()
        for speed in self.ue_speeds_kmh:
            if speed <= 0:
                raise ConfigError(f"UE speed must be positive, got {speed}")
            # Raises ConfigError when the zone cannot hold one step.
            generate_trajectory(0, speed, zone, self.slot_s, self.slot_s)
        if self.n_slots < 1:
            raise ConfigError("duration_s must cover at least one slot")

    # ---------- persistence ----------
    # File schema keeps zone / BS / UE entries nested:
    #   {"zone": {"width": ..., "depth": ...},
    #    "bs": [{"xyz": [x, y, z]}, ...],
    #    "ue": [{"speed_kmh": ...}, ...],
    #    "duration_s": ..., "slot_s": ..., "seed": ..., <flat knobs>}

    _NESTED_FIELDS = ("zone_width_m", "zone_depth_m", "bs_xyz", "ue_speeds_kmh")

    def to_dict(self) -> dict:
        flat = dataclasses.asdict(self)
        for name in self._NESTED_FIELDS:
            flat.pop(name)
        flat["zone"] = {"width": self.zone_width_m, "depth": self.zone_depth_m}
        flat["bs"] = [{"xyz": list(p)} for p in self.bs_xyz]
        flat["ue"] = [{"speed_kmh": s} for s in self.ue_speeds_kmh]
        return flat

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        kwargs = {}
        try:
            zone = data.pop("zone", None)
            if zone is not None:
                kwargs["zone_width_m"] = zone["width"]
                kwargs["zone_depth_m"] = zone["depth"]
            bs = data.pop("bs", None)
            if bs is not None:
                kwargs["bs_xyz"] = [tuple(entry["xyz"]) for entry in bs]
            ue = data.pop("ue", None)
            if ue is not None:
                kwargs["ue_speeds_kmh"] = [entry["speed_kmh"] for entry in ue]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed zone/bs/ue section: {exc}") from exc
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        overlap = set(data) & set(kwargs)
        if overlap:
            raise ConfigError(f"config keys given both nested and flat: {sorted(overlap)}")
        kwargs.update(data)
        try:
            return cls(**kwargs)
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(data)
