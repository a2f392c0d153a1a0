"""Actor tests: readout quantization, fusion, ablations, and gradient oracle."""

import numpy as np
import pytest
import torch

from spikenav.actor import (
    ActorConfig,
    Observation,
    SpikingActor,
    ablation_config,
    decode_action,
    fuse,
    load_actor,
    save_actor,
)

from oracles import _RectSpike


def small_config(**kw):
    defaults = dict(multimodal=True, threshold_mode="learnable", threshold_init=0.5,
                    pop_size=10, hidden=(16, 16, 16), timesteps=5)
    defaults.update(kw)
    return ActorConfig(**defaults)


def random_obs(rng, config, lead=()):
    return rng.uniform(0, 1, size=lead + (config.n_states,))


class TestFuse:
    def test_zero_plus_zero(self):
        assert not fuse(np.zeros(20), np.zeros(20)).any()

    def test_addition_values(self):
        a = np.zeros(20)
        b = np.zeros(20)
        a[0] = b[0] = 1.0
        out = fuse(a, b)
        assert out[0] == 2.0 and not out[1:].any()

    def test_commutative(self):
        rng = np.random.default_rng(0)
        a = rng.integers(0, 2, 20).astype(float)
        b = rng.integers(0, 2, 20).astype(float)
        np.testing.assert_array_equal(fuse(a, b), fuse(b, a))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fuse(np.zeros(20), np.zeros(19))


class TestDecodeAction:
    def test_extremes(self):
        assert decode_action(np.array([0.0, 0.0]), 0.0, 1.0) == (0.0, 0.0)
        assert decode_action(np.array([1.0, 1.0]), 0.0, 1.0) == (1.0, 1.0)

    def test_affine(self):
        vl, vr = decode_action(np.array([0.6, 0.2]), 0.05, 1.0)
        assert vl == pytest.approx(0.62)
        assert vr == pytest.approx(0.24)


class TestForward:
    def test_action_quantization(self):
        config = small_config()
        actor = SpikingActor(config, np.random.default_rng(1))
        rng = np.random.default_rng(2)
        states = actor.new_episode_state()
        for _ in range(10):
            obs = random_obs(rng, config)
            action, counts, states, _ = actor.forward(obs, states, rng)
            assert np.all(action >= 0) and np.all(action <= 1)
            np.testing.assert_array_equal(action * config.timesteps,
                                          np.round(action * config.timesteps))

    def test_zero_observation_zero_weights_silent(self):
        config = small_config()
        actor = SpikingActor(config, np.random.default_rng(3))
        for layer in actor.layers():
            layer.weight[:] = 0.0
        # population neurons still fire, but zero weights keep v below the
        # positive threshold everywhere downstream
        action, _, _, _ = actor.forward(np.zeros(config.n_states),
                                        actor.new_episode_state(),
                                        np.random.default_rng(4))
        np.testing.assert_array_equal(action, [0.0, 0.0])

    def test_determinism_same_seed_same_state(self):
        config = small_config()
        actor = SpikingActor(config, np.random.default_rng(5))
        obs = random_obs(np.random.default_rng(6), config)
        a1, _, _, _ = actor.forward(obs, actor.new_episode_state(), np.random.default_rng(7))
        a2, _, _, _ = actor.forward(obs, actor.new_episode_state(), np.random.default_rng(7))
        np.testing.assert_array_equal(a1, a2)

    def test_state_carries_between_control_steps(self):
        config = small_config()
        actor = SpikingActor(config, np.random.default_rng(8))
        obs = random_obs(np.random.default_rng(9), config)
        _, _, states, _ = actor.forward(obs, actor.new_episode_state(), np.random.default_rng(10))
        assert any(st.voltage.any() or st.current.any() for st in states)

    def test_observation_dataclass_vector(self):
        obs = Observation(np.full(4, 0.5), np.full(18, 1.0), np.full(64, 0.2))
        v = obs.vector()
        assert v.shape == (86,)
        assert v[0] == 0.5 and v[4] == 1.0 and v[-1] == 0.2

    def test_wrong_size_rejected(self):
        config = small_config()
        actor = SpikingActor(config, np.random.default_rng(11))
        with pytest.raises(ValueError, match="observation"):
            actor.forward(np.zeros(10), actor.new_episode_state(), np.random.default_rng(0))


class TestAblation:
    def test_laser_only_has_no_dvs_parameters(self):
        actor = SpikingActor(ablation_config("laser-only", hidden=(16, 16, 16)),
                             np.random.default_rng(12))
        assert actor.dvs_branch is None
        assert not any(k.startswith("dvs.") for k in actor.params())
        assert actor.config.n_states == 22

    def test_fixed_threshold_has_no_r_and_zero_grads(self):
        config = small_config(threshold_mode="fixed")
        actor = SpikingActor(config, np.random.default_rng(13))
        assert all(layer.r is None for layer in actor.layers())
        rng = np.random.default_rng(14)
        obs = random_obs(rng, config)
        _, _, _, trace = actor.forward(obs, actor.new_episode_state(), rng, record=True)
        grads, _ = actor.backward(trace, np.array([1.0, -1.0]))
        assert not any(k.endswith(".r") for k in grads)

    def test_multimodal_learnable_is_default(self):
        config = ablation_config("multimodal")
        assert config.multimodal and config.threshold_mode == "learnable"

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            ablation_config("sonar-only")

    def test_zeroed_dvs_branch_equals_laser_only(self):
        cfg_mm = small_config()
        mm = SpikingActor(cfg_mm, np.random.default_rng(15))
        mm.dvs_branch.weight[:] = 0.0
        mm.dvs_branch.bias[:] = 0.0
        lo = SpikingActor(small_config(multimodal=False), np.random.default_rng(16))
        # identical laser-side and decision parameters
        lo.pop.means[:] = mm.pop.means[:22]
        lo.pop.stds[:] = mm.pop.stds[:22]
        lo.laser_branch.weight[:] = mm.laser_branch.weight
        lo.laser_branch.bias[:] = mm.laser_branch.bias
        for a, b in zip(lo.decision, mm.decision):
            a.weight[:] = b.weight
            a.bias[:] = b.bias
        rng = np.random.default_rng(17)
        obs_mm = random_obs(rng, cfg_mm)
        a_mm, _, _, _ = mm.forward(obs_mm, mm.new_episode_state(), np.random.default_rng(18))
        a_lo, _, _, _ = lo.forward(obs_mm[:22], lo.new_episode_state(), np.random.default_rng(18))
        np.testing.assert_array_equal(a_mm, a_lo)


class TestThresholds:
    def test_one_shared_threshold_per_layer(self):
        actor = SpikingActor(small_config(), np.random.default_rng(19))
        ths = actor.thresholds()
        assert set(ths) == {"laser", "dvs", "dm0", "dm1", "dm2", "dm3"}
        for v in ths.values():
            assert -1.0 < v < 1.0
            assert v == pytest.approx(0.5, abs=1e-12)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        actor = SpikingActor(small_config(), np.random.default_rng(20))
        save_actor(tmp_path / "actor.ckpt", actor)
        back = load_actor(tmp_path / "actor.ckpt")
        rng1, rng2 = np.random.default_rng(21), np.random.default_rng(21)
        obs = random_obs(np.random.default_rng(22), actor.config)
        a1, _, _, _ = actor.forward(obs, actor.new_episode_state(), rng1)
        a2, _, _, _ = back.forward(obs, back.new_episode_state(), rng2)
        np.testing.assert_allclose(a1, a2)


class TorchActor:
    """Autograd replica of the actor fed with the recorded spike trains."""

    def __init__(self, actor: SpikingActor):
        self.actor = actor
        self.mu = torch.tensor(actor.pop.means, dtype=torch.float64, requires_grad=True)
        self.sig = torch.tensor(actor.pop.stds, dtype=torch.float64, requires_grad=True)
        self.layers = []
        for name, layer in zip(actor.layer_names(), actor.layers()):
            entry = {
                "name": name,
                "w": torch.tensor(layer.weight, dtype=torch.float64, requires_grad=True),
                "b": torch.tensor(layer.bias, dtype=torch.float64, requires_grad=True),
                "d_c": layer.lif.current_decay, "d_v": layer.lif.voltage_decay,
                "hw": layer.lif.surrogate_halfwidth,
            }
            if layer.r is not None:
                entry["r"] = torch.tensor(float(layer.r), dtype=torch.float64,
                                          requires_grad=True)
            else:
                entry["theta"] = torch.tensor(float(layer.threshold), dtype=torch.float64)
            self.layers.append(entry)

    def run(self, obs, laser_trains, dvs_trains, d_action):
        cfg = self.actor.config
        T = cfg.timesteps
        obs_t = torch.tensor(obs, dtype=torch.float64)
        z = (obs_t[:, None] - self.mu) / self.sig
        a = torch.exp(-0.5 * z * z).reshape(-1)
        n_laser = cfg.laser_neurons

        def straight_through(sampled, strengths):
            s = torch.tensor(sampled, dtype=torch.float64)
            return strengths + (s - strengths).detach()

        cells = {e["name"]: {"c": torch.zeros(e["b"].shape, dtype=torch.float64),
                             "v": torch.zeros(e["b"].shape, dtype=torch.float64),
                             "s": torch.zeros(e["b"].shape, dtype=torch.float64)}
                 for e in self.layers}

        def step(entry, x):
            st = cells[entry["name"]]
            c = entry["d_c"] * st["c"] + x @ entry["w"].T + entry["b"]
            v = entry["d_v"] * st["v"] * (1 - st["s"]) + c
            theta = torch.tanh(entry["r"]) if "r" in entry else entry["theta"]
            s = _RectSpike.apply(v, theta, entry["hw"])
            st["c"], st["v"], st["s"] = c, v, s
            return s

        count = torch.zeros(2, dtype=torch.float64)
        by_name = {e["name"]: e for e in self.layers}
        for t in range(T):
            sl = step(by_name["laser"], straight_through(laser_trains[t], a[:n_laser]))
            if "dvs" in by_name:
                sd = step(by_name["dvs"], straight_through(dvs_trains[t], a[n_laser:]))
                h = sl + sd
            else:
                h = sl
            for i in range(len(self.actor.decision)):
                h = step(by_name[f"dm{i}"], h)
            count = count + h
        action = count / T
        loss = (torch.tensor(d_action, dtype=torch.float64) * action).sum()
        loss.backward()
        grads = {"pop.means": self.mu.grad.numpy(), "pop.stds": self.sig.grad.numpy()}
        for e in self.layers:
            grads[f"{e['name']}.weight"] = e["w"].grad.numpy()
            grads[f"{e['name']}.bias"] = e["b"].grad.numpy()
            if "r" in e:
                grads[f"{e['name']}.r"] = np.array(e["r"].grad.item())
        return action.detach().numpy(), grads


class TestBackwardOracle:
    @pytest.mark.parametrize("mode,threshold", [
        ("multimodal", "learnable"),
        ("multimodal", "fixed"),
        ("laser-only", "learnable"),
    ])
    def test_full_path_gradients_match_autograd(self, mode, threshold):
        config = ablation_config(mode, threshold, hidden=(8, 8, 8), pop_size=3)
        actor = SpikingActor(config, np.random.default_rng(30))
        # spread weights so spikes actually flow
        wrng = np.random.default_rng(31)
        for layer in actor.layers():
            layer.weight[:] = wrng.normal(scale=0.8, size=layer.weight.shape)
            layer.bias[:] = wrng.normal(scale=0.1, size=layer.bias.shape)
        rng = np.random.default_rng(32)
        obs = random_obs(rng, config)
        action, _, _, trace = actor.forward(obs, actor.new_episode_state(),
                                            np.random.default_rng(33), record=True)
        d_action = np.array([0.7, -1.3])
        grads, _ = actor.backward(trace, d_action)

        laser_trains = [np.asarray(x) for x in trace["laser"].inputs]
        dvs_trains = ([np.asarray(x) for x in trace["dvs"].inputs]
                      if trace["dvs"] is not None else None)
        ref_action, ref_grads = TorchActor(actor).run(obs, laser_trains, dvs_trains, d_action)
        np.testing.assert_allclose(action, ref_action, atol=1e-12)
        for key, ref in ref_grads.items():
            np.testing.assert_allclose(grads[key], ref, atol=1e-9, rtol=0, err_msg=key)

    def test_zero_upstream_zero_grads(self):
        config = small_config(hidden=(8, 8, 8), pop_size=3)
        actor = SpikingActor(config, np.random.default_rng(34))
        rng = np.random.default_rng(35)
        obs = random_obs(rng, config)
        _, _, _, trace = actor.forward(obs, actor.new_episode_state(), rng, record=True)
        grads, dobs = actor.backward(trace, np.zeros(2))
        for arr in grads.values():
            assert not np.any(arr)
        assert not np.any(dobs)

    def test_fusion_backward_copies_gradient_to_both_branches(self):
        config = small_config(hidden=(8, 8, 8), pop_size=3)
        actor = SpikingActor(config, np.random.default_rng(36))
        rng = np.random.default_rng(37)
        obs = random_obs(rng, config)
        _, _, _, trace = actor.forward(obs, actor.new_episode_state(), rng, record=True)
        # capture the gradients the decision stack sends into the fused input
        up = [np.full(2, 0.5)] * config.timesteps
        for i in range(len(actor.decision) - 1, -1, -1):
            _, up = actor.decision[i].backward(trace["dm"][i], up)
        _, d_laser = actor.laser_branch.backward(trace["laser"], up)
        _, d_dvs = actor.dvs_branch.backward(trace["dvs"], up)
        # both branches saw the identical upstream list (addition rule)
        assert len(d_laser) == len(d_dvs) == config.timesteps
