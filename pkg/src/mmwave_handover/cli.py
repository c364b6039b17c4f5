"""Command-line entry point: train, eval, bench, probe-channel."""

from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from .channel import ArrayGeometry, link_rng, p_los, p_nlos, pathloss_db, sample_channel
from .config import ScenarioConfig
from .geometry import ConfigError, Point3
from .harness import POLICY_NAMES, run_bench, run_evaluation, run_training


def _load_config(path: str | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    return ScenarioConfig.from_json(path)


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    ckpt = run_training(cfg, args.out)
    print(f"checkpoint written to {ckpt}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    records = run_evaluation(cfg, args.policy, args.checkpoint, args.out)
    f1 = np.mean([r.f1_gbps for r in records])
    f2 = np.mean([r.f2_count for r in records])
    f3 = np.mean([r.f3_count for r in records])
    print(
        f"{args.policy}: {len(records)} episodes, "
        f"mean F1 {f1:.3f} Gbps, mean F2 {f2:.3f}, mean F3 {f3:.3f}"
    )
    return 0


def _cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    result = run_bench(cfg, args.out, checkpoint=args.checkpoint)
    with open(f"{args.out}/summary.txt") as fh:
        sys.stdout.write(fh.read())
    return 0


def _cmd_probe_channel(args) -> int:
    cfg = _load_config(args.config)
    d = args.d
    print(f"distance {d:.3f} m")
    print(f"  p_los  = {p_los(d):.6f}")
    print(f"  p_nlos = {p_nlos(d):.6f}")
    kwargs = dict(
        wavelength_m=cfg.wavelength_m,
        exp_los=cfg.pathloss_exp_los,
        exp_nlos=cfg.pathloss_exp_nlos,
    )
    print(f"  pathloss LoS  (no shadowing) = {pathloss_db(d, True, None, **kwargs):.3f} dB")
    print(f"  pathloss NLoS (no shadowing) = {pathloss_db(d, False, None, **kwargs):.3f} dB")
    if args.samples > 0:
        bs_height, ue_height = 10.0, 1.5
        dz = bs_height - ue_height
        if d < dz:
            print(
                f"error: cannot place BS/UE pair at 3D distance {d} m "
                f"with height offset {dz} m",
                file=sys.stderr,
            )
            return 2
        planar = math.sqrt(max(d * d - dz * dz, 0.0))
        ue_pos = Point3(0.0, 0.0, ue_height)
        bs_pos = Point3(planar, 0.0, bs_height)
        out = open(args.out, "w") if args.out else sys.stdout
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["sample", "d_m", "los", "pathloss_db", "frobenius_norm"])
        draw_kwargs = dict(
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
        for k in range(args.samples):
            rng = link_rng((cfg.seed, 97, k))
            real = sample_channel(
                ue_pos, bs_pos, rng,
                ue_geom=ArrayGeometry(*cfg.ue_array),
                bs_geom=ArrayGeometry(*cfg.bs_array),
                **draw_kwargs,
            )
            writer.writerow(
                [k, repr(float(d)), int(real.los), repr(float(real.pathloss_db)),
                 repr(float(np.linalg.norm(real.H)))]
            )
        if args.out:
            out.close()
            print(f"wrote {args.samples} link records to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmwave-handover",
        description="Mobile mmWave downlink simulator with learned load-balancing handover",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the backup-selection policy")
    p_train.add_argument("--config", help="scenario JSON (defaults: desk scale)")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a policy on held-out episodes")
    p_eval.add_argument("--policy", required=True, choices=POLICY_NAMES)
    p_eval.add_argument("--checkpoint", help="policy checkpoint (ddpg only)")
    p_eval.add_argument("--config", help="scenario JSON")
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=_cmd_eval)

    p_bench = sub.add_parser("bench", help="train + evaluate all policies + summary")
    p_bench.add_argument("--config", help="scenario JSON")
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--checkpoint", help="reuse an existing checkpoint")
    p_bench.set_defaults(func=_cmd_bench)

    p_probe = sub.add_parser("probe-channel", help="audit blockage/pathloss/channel stats")
    p_probe.add_argument("--d", type=float, required=True, help="3D distance in meters")
    p_probe.add_argument("--samples", type=int, default=0, help="also dump N sampled links")
    p_probe.add_argument("--out", help="CSV path for sampled links")
    p_probe.add_argument("--config", help="scenario JSON")
    p_probe.set_defaults(func=_cmd_probe_channel)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
