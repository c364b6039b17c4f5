import io
import json
import os

import numpy as np
import pytest

from mmwave_handover.config import ScenarioConfig
from mmwave_handover.env import HandoverEnv
from mmwave_handover.geometry import ConfigError
from mmwave_handover.harness import (
    make_policy,
    run_bench,
    run_episode,
    run_evaluation,
    run_training,
    summarize,
    train_agent,
)
from mmwave_handover.metrics import EpisodeLog, compute_metrics


class TestConfig:
    def test_round_trip(self, tmp_path, tiny_cfg):
        path = tmp_path / "cfg.json"
        tiny_cfg.to_json(path)
        loaded = ScenarioConfig.from_json(path)
        assert loaded == tiny_cfg

    def test_nested_schema_keys(self, tmp_path, tiny_cfg):
        path = tmp_path / "cfg.json"
        tiny_cfg.to_json(path)
        data = json.loads(path.read_text())
        assert data["zone"] == {"width": 100.0, "depth": 100.0}
        assert [e["xyz"] for e in data["bs"]] == [list(p) for p in tiny_cfg.bs_xyz]
        assert [e["speed_kmh"] for e in data["ue"]] == tiny_cfg.ue_speeds_kmh
        assert "duration_s" in data and "slot_s" in data and "seed" in data

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({"definitely_not_a_knob": 1})

    def test_penalty_ordering_enforced(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(lambda_t=5.0, lambda_h=10.0)
        with pytest.raises(ConfigError):
            ScenarioConfig(lambda_t=10.0, lambda_h=0.0)

    def test_physical_positivity(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(bandwidth_hz=-1.0)
        with pytest.raises(ConfigError):
            ScenarioConfig(slot_s=0.0)

    def test_table_defaults(self):
        cfg = ScenarioConfig()
        assert cfg.tx_power_dbm == 30.0
        assert cfg.noise_dbm_hz == -174.0
        assert cfg.bandwidth_hz == 500e6
        assert cfg.bs_array == (8, 8)
        assert cfg.ue_array == (4, 4)
        assert cfg.pathloss_exp_los == 3.0
        assert cfg.pathloss_exp_nlos == 4.0
        assert cfg.gamma == 0.99
        assert cfg.batch_size == 32
        assert cfg.lambda_t == 20.0
        assert cfg.lambda_h == 10.0
        assert cfg.tx_power_w == pytest.approx(1.0)


class TestMetrics:
    def test_empty_log_rejected(self):
        with pytest.raises(ValueError):
            EpisodeLog.read_csv(io.StringIO("slot,ue\n"))

    def test_hand_built_two_slot_log(self):
        """2 UEs, 2 decision slots, hand-counted objectives."""
        csv_text = "\n".join(
            [
                "slot,ue,capacity_gbps,share,rate_gbps,serving_bs,handover,"
                "outage,r_th_gbps,reward_rate,reward_outage_pen,reward_ho_pen",
                # slot 1: ue0 rate 1.0 on bs0; ue1 rate 0.1 on bs1
                "1,0,2.0,0.5,1.0,0,0,0,0.4,1.0,-0.0,-0.0",
                "1,1,0.2,0.5,0.1,1,1,1,0.4,0.1,-20.0,-10.0",
                # slot 2: ue0 rate 1.0 stays; ue1 moved to bs0, rate 0.9
                "2,0,2.0,0.5,1.0,0,0,0,0.4,1.0,-0.0,-0.0",
                "2,1,1.8,0.5,0.9,0,0,0,0.4,0.9,-0.0,-0.0",
                # slot 3 (final): rates for the last outage window
                "3,0,2.0,0.5,1.0,0,0,0,0.4,0.0,-0.0,-0.0",
                "3,1,1.8,0.5,0.9,0,0,0,0.4,0.0,-0.0,-0.0",
                "",
            ]
        )
        log = EpisodeLog.read_csv(io.StringIO(csv_text))
        rec = compute_metrics(log, window_k=2, lambda_t=20.0, lambda_h=10.0)
        # F1 = 1.0 + 0.1 + 1.0 + 0.9 = 3.0
        assert rec.f1_gbps == pytest.approx(3.0)
        # windows: t=1 ue0 (1.0+1.0)/2 ok; ue1 (0.1+0.9)/2=0.5 > 0.4 ok...
        # t=1 ue1 window uses rate(2)=0.9: (0.9+0.1)/2 = 0.5 > 0.4 -> no outage
        # NOTE the stored flag says outage=1 but compute_metrics REPLAYS rates:
        # replay finds 0 outages at t=1 (flags are not trusted)
        assert rec.f2_count == 0
        # handovers: ue1 moves bs1 -> bs0 between slots 1 and 2 -> 1
        assert rec.f3_count == 1

    def test_truncated_log_rejected(self):
        csv_text = "\n".join(
            [
                "slot,ue,capacity_gbps,share,rate_gbps,serving_bs,handover,"
                "outage,r_th_gbps,reward_rate,reward_outage_pen,reward_ho_pen",
                "1,0,2.0,0.5,1.0,0,0,0,0.4,1.0,-0.0,-0.0",
                "2,0,2.0,0.5,1.0,0,0,0,0.4,1.0,-0.0,-0.0",
                "3,0,2.0,0.5,1.0,0,0,0,0.4,0.0,-0.0,-0.0",
                "3,1,1.8,0.5,0.9,0,0,0,0.4,0.0,-0.0,-0.0",  # ue1 missing earlier
                "",
            ]
        )
        log = EpisodeLog.read_csv(io.StringIO(csv_text))
        with pytest.raises(ValueError):
            compute_metrics(log, 2, 20.0, 10.0)


class TestTraining:
    def test_zero_episodes_still_saves_checkpoint(self, tmp_path):
        cfg = ScenarioConfig(duration_s=2.0, train_episodes=0)
        out = str(tmp_path / "t0")
        ckpt = run_training(cfg, out)
        assert os.path.exists(ckpt)
        curve = (tmp_path / "t0" / "training_curve.csv").read_text().splitlines()
        assert len(curve) == 1  # header only

    def test_fixed_seed_reproducible_curve(self, tmp_path):
        cfg = ScenarioConfig(duration_s=2.0, train_episodes=3, warmup_steps=30)
        _, curve1 = train_agent(cfg)
        _, curve2 = train_agent(cfg)
        assert [r["reward"] for r in curve1] == [r["reward"] for r in curve2]

    def test_config_echo_written(self, tmp_path):
        cfg = ScenarioConfig(duration_s=2.0, train_episodes=1, warmup_steps=20)
        out = str(tmp_path / "t1")
        run_training(cfg, out)
        echoed = ScenarioConfig.from_json(os.path.join(out, "config.json"))
        assert echoed == cfg


class TestEvaluation:
    def test_missing_checkpoint_errors(self, tmp_path, tiny_cfg):
        with pytest.raises(FileNotFoundError):
            run_evaluation(tiny_cfg, "ddpg", str(tmp_path / "nope.ckpt"), str(tmp_path / "o"))

    def test_unknown_policy_errors(self, tmp_path, tiny_cfg):
        with pytest.raises(ValueError):
            run_evaluation(tiny_cfg, "oracle", None, str(tmp_path / "o"))

    def test_eval_writes_episode_and_slot_csv(self, tmp_path, tiny_cfg):
        out = str(tmp_path / "ev")
        records = run_evaluation(tiny_cfg, "rand", None, out)
        assert len(records) == tiny_cfg.eval_episodes
        assert os.path.exists(os.path.join(out, "episodes.csv"))
        assert os.path.exists(os.path.join(out, "slots_ep0000.csv"))
        assert os.path.exists(os.path.join(out, "config.json"))

    def test_lambda_zero_reward_reduces_to_sum_rate(self, tmp_path):
        cfg = ScenarioConfig(
            duration_s=2.0, eval_episodes=2, lambda_t=2e-12, lambda_h=1e-12
        )
        policy = make_policy("rand", cfg)
        env = HandoverEnv(cfg, (cfg.seed, 1, 0))
        log, total = run_episode(env, policy, np.random.default_rng(1))
        rec = compute_metrics(log, cfg.window_k, cfg.lambda_t, cfg.lambda_h)
        assert total == pytest.approx(rec.f1_gbps, rel=1e-9)

    def test_same_seed_policies_share_channels(self, tiny_cfg):
        """All policies see identical channel draws for the same episode key."""
        caps = {}
        for name in ("rand", "wcs"):
            policy = make_policy(name, tiny_cfg)
            env = HandoverEnv(tiny_cfg, (tiny_cfg.seed, 1, 0))
            state = env.reset()
            caps[name] = state.capacity_gbps.copy()
        assert np.array_equal(caps["rand"], caps["wcs"])

    def test_single_ue_single_bs_never_hands_over(self):
        """With one UE and one BS there is nowhere to go: F3 = 0."""
        cfg = ScenarioConfig(
            duration_s=3.0, ue_speeds_kmh=[5.0], bs_xyz=[(50.0, 50.0, 10.0)],
            eval_episodes=3,
        )
        policy = make_policy("rand", cfg)
        for ep in range(3):
            env = HandoverEnv(cfg, (cfg.seed, 1, ep))
            log, _ = run_episode(env, policy, np.random.default_rng(ep))
            rec = compute_metrics(log, cfg.window_k, cfg.lambda_t, cfg.lambda_h)
            assert rec.f3_count == 0
            assert rec.f2_count <= cfg.n_slots  # bounded by T * |U|

    def test_parallel_workers_match_sequential(self, tmp_path):
        cfg_seq = ScenarioConfig(duration_s=1.5, eval_episodes=4, workers=1)
        cfg_par = ScenarioConfig(duration_s=1.5, eval_episodes=4, workers=2)
        rec_seq = run_evaluation(cfg_seq, "rand", None, str(tmp_path / "seq"))
        rec_par = run_evaluation(cfg_par, "rand", None, str(tmp_path / "par"))
        for a, b in zip(rec_seq, rec_par):
            assert a.f1_gbps == b.f1_gbps
            assert a.f2_count == b.f2_count
            assert a.f3_count == b.f3_count
        seq_csv = (tmp_path / "seq" / "episodes.csv").read_bytes()
        par_csv = (tmp_path / "par" / "episodes.csv").read_bytes()
        assert seq_csv == par_csv


class TestBench:
    def test_bench_outputs_and_determinism(self, tmp_path):
        cfg = ScenarioConfig(
            duration_s=1.5, train_episodes=2, eval_episodes=2, warmup_steps=20
        )
        out1 = str(tmp_path / "b1")
        out2 = str(tmp_path / "b2")
        res1 = run_bench(cfg, out1)
        res2 = run_bench(cfg, out2)
        for root, _dirs, files in os.walk(out1):
            for name in files:
                if not name.endswith(".csv"):
                    continue
                rel = os.path.relpath(os.path.join(root, name), out1)
                with open(os.path.join(out1, rel), "rb") as fh:
                    b1 = fh.read()
                with open(os.path.join(out2, rel), "rb") as fh:
                    b2 = fh.read()
                assert b1 == b2, f"bench outputs differ in {rel}"
        assert set(res1["summaries"]) == {"ddpg", "rand", "wcs"}
        assert os.path.exists(os.path.join(out1, "summary.txt"))

    def test_summarize_means(self):
        from mmwave_handover.metrics import MetricsRecord

        records = [
            MetricsRecord(0, (), 10.0, 2, 1, 0.0),
            MetricsRecord(1, (), 20.0, 4, 3, 0.0),
        ]
        s = summarize(records, "x")
        assert s.mean_f1 == 15.0
        assert s.mean_f2 == 3.0
        assert s.mean_f3 == 2.0
