import hashlib

import numpy as np
import pytest

from faircast.config import TrainConfig
from faircast.data import MinMaxNormalizer, WindowBatch, make_windows, synth_two_group
from faircast.grouping import clustering_loss
from faircast.autodiff import Tensor
from faircast.metrics import collect_predictions
from faircast.training import (
    CheckpointError,
    TrainingDiverged,
    apply_best,
    discriminator_step,
    fit,
    generator_step,
    init_training_state,
    load_checkpoint,
    save_checkpoint,
    validation_mae,
)


def tiny_cfg(**overrides):
    base = dict(
        window=4, horizon=2, hidden_dim=4, embed_dim=3, n_clusters=2,
        batch_size=8, epochs=2, seed=11, lr_generator=3e-3, lr_discriminator=5e-2,
        grad_clip=None,
    )
    base.update(overrides)
    return TrainConfig(**base)


def tiny_batch(seed=0, n_vars=3, n_windows=12, w=4, h=2):
    rng = np.random.default_rng(seed)
    return WindowBatch(
        rng.uniform(0, 1, size=(n_windows, w, n_vars)),
        rng.uniform(0, 1, size=(n_windows, h, n_vars)),
    )


def checksum(arrays) -> str:
    digest = hashlib.sha256()
    for name in sorted(arrays):
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(arrays[name]).tobytes())
    return digest.hexdigest()


def param_checksum(params) -> str:
    return checksum({name: p.data for name, p in params.items()})


class TestGeneratorStep:
    def test_flags_off_total_is_forecast_loss(self):
        cfg = tiny_cfg(use_adversary=False, use_clustering_loss=False, use_orthogonality_loss=False)
        state = init_training_state(3, cfg)
        bundle = generator_step(tiny_batch(), state, cfg)
        assert bundle.total_generator == bundle.l_forecast

    def test_objective_composition(self):
        cfg = tiny_cfg(lambda_adv=0.3)
        state = init_training_state(3, cfg)
        b = generator_step(tiny_batch(), state, cfg)
        recomposed = b.l_forecast + b.l_cluster + b.l_ortho - cfg.lambda_adv * b.l_adv
        assert abs(b.total_generator - recomposed) < 1e-12

    def test_discriminator_parameters_untouched(self):
        cfg = tiny_cfg()
        state = init_training_state(3, cfg)
        before = param_checksum(state.model.named_discriminator_parameters())
        generator_step(tiny_batch(), state, cfg)
        assert param_checksum(state.model.named_discriminator_parameters()) == before

    def test_lambda_zero_total_independent_of_discriminator(self):
        cfg = tiny_cfg(lambda_adv=0.0)
        state = init_training_state(3, cfg)
        batch = tiny_batch()

        def total():
            out = state.model.forward(batch.inputs, training=False)
            from faircast.training import _generator_losses

            return _generator_losses(state.model, out, batch.targets, cfg)[1].total_generator

        base = total()
        for p in state.model.named_discriminator_parameters().values():
            p.data = p.data + 0.37
        assert total() == base

    def test_single_step_bit_reproducible(self):
        cfg = tiny_cfg()
        results = []
        for _ in range(2):
            state = init_training_state(3, cfg)
            bundle = generator_step(tiny_batch(), state, cfg)
            results.append((bundle.total_generator, param_checksum(state.model.named_parameters())))
        assert results[0] == results[1]

    def test_nonfinite_loss_names_component(self):
        cfg = tiny_cfg(use_adversary=False)
        state = init_training_state(3, cfg)
        state.model.predictor.kernel.data = np.full_like(
            state.model.predictor.kernel.data, 1e200
        )
        with np.errstate(over="ignore"), pytest.raises(TrainingDiverged, match="l_forecast"):
            generator_step(tiny_batch(), state, cfg)

    def test_gradient_clipping_bounds_update(self):
        cfg = tiny_cfg(grad_clip=1e-9)
        state = init_training_state(3, cfg)
        before = {n: p.data.copy() for n, p in state.model.named_generator_parameters().items()}
        generator_step(tiny_batch(), state, cfg)
        # clip makes the gradient norm tiny; Adam still normalizes per-parameter,
        # so just check every parameter moved by at most the learning rate.
        for n, p in state.model.named_generator_parameters().items():
            assert np.abs(p.data - before[n]).max() <= cfg.lr_generator + 1e-12


class TestDiscriminatorStep:
    def test_generator_parameters_untouched(self):
        cfg = tiny_cfg()
        state = init_training_state(3, cfg)
        before = param_checksum(state.model.named_generator_parameters())
        indicator_before = state.model.indicator.matrix.copy()
        discriminator_step(tiny_batch(), state, cfg)
        assert param_checksum(state.model.named_generator_parameters()) == before
        np.testing.assert_array_equal(state.model.indicator.matrix, indicator_before)

    def test_repeated_steps_reduce_adversarial_loss(self):
        cfg = tiny_cfg(lr_discriminator=5e-2)
        state = init_training_state(3, cfg)
        batch = tiny_batch(seed=4)
        losses = [discriminator_step(batch, state, cfg) for _ in range(21)]
        assert losses[-1] <= losses[0]

    def test_zero_initialized_mappers_noop(self):
        cfg = tiny_cfg()
        state = init_training_state(3, cfg)
        disc = state.model.discriminator
        for layer in disc.mapper_hidden + disc.mapper_assign:
            layer.weight.data = np.zeros_like(layer.weight.data)
            layer.bias.data = np.zeros_like(layer.bias.data)
        before = param_checksum(state.model.named_discriminator_parameters())
        loss = discriminator_step(tiny_batch(), state, cfg)
        assert loss == 0.0
        assert param_checksum(state.model.named_discriminator_parameters()) == before

    def test_requires_adversary(self):
        cfg = tiny_cfg(use_adversary=False)
        state = init_training_state(3, cfg)
        with pytest.raises(RuntimeError):
            discriminator_step(tiny_batch(), state, cfg)


def make_training_data(seed=3, n_easy=2, n_hard=2, t=120, w=4, h=2):
    series = synth_two_group(n_easy, n_hard, t, 0.01, 0.1, seed=seed)
    norm = MinMaxNormalizer().fit(series)
    return make_windows(norm.apply_series(series), w, h), norm


class TestFit:
    def test_zero_epochs_identity(self):
        cfg = tiny_cfg(epochs=0)
        train, _ = make_training_data()
        state, history = fit(train, None, cfg)
        assert history == []
        fresh = init_training_state(train.n_variables, cfg)
        assert param_checksum(state.model.named_parameters()) == param_checksum(
            fresh.model.named_parameters()
        )

    def test_indicator_orthonormal_after_every_update(self):
        cfg = tiny_cfg(epochs=3, indicator_update_every=2)
        train, _ = make_training_data()
        state = init_training_state(train.n_variables, cfg)

        deviations = []
        from faircast import training as tr_mod

        original = tr_mod.update_indicator

        def spying_update(ref, k):
            out = original(ref, k)
            f = out.matrix
            deviations.append(np.linalg.norm(f.T @ f - np.eye(f.shape[1])))
            return out

        tr_mod.update_indicator = spying_update
        try:
            fit(train, None, cfg, state=state)
        finally:
            tr_mod.update_indicator = original
        assert deviations, "indicator never updated"
        assert max(deviations) < 1e-5

    def test_monotone_indicator_improvement(self):
        cfg = tiny_cfg(epochs=1, indicator_update_every=1)
        train, _ = make_training_data()
        state = init_training_state(train.n_variables, cfg)
        batch = train.subset(np.arange(8))
        generator_step(batch, state, cfg)
        ref = Tensor(state.last_projected_ref.reshape(1, *state.last_projected_ref.shape))
        before = clustering_loss(ref, state.model.indicator).item()
        from faircast.grouping import update_indicator

        state.model.indicator = update_indicator(state.last_projected_ref, cfg.n_clusters)
        after = clustering_loss(ref, state.model.indicator).item()
        assert after <= before + 1e-12

    def test_two_runs_identical_histories(self):
        cfg = tiny_cfg(epochs=2)
        train, _ = make_training_data()
        _, hist_a = fit(train, None, cfg)
        _, hist_b = fit(train, None, cfg)
        assert hist_a == hist_b

    def test_best_checkpoint_tracks_validation(self):
        cfg = tiny_cfg(epochs=3)
        train, _ = make_training_data(t=140)
        val = train.subset(np.arange(20))
        state, _ = fit(train, val, cfg)
        assert state.best_arrays is not None
        assert state.best_val_mae == min(m for _, m in state.val_history)
        apply_best(state)
        np.testing.assert_allclose(
            validation_mae(state.model, val, cfg.batch_size), state.best_val_mae, atol=1e-12
        )

    def test_empty_training_data_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            fit(None, None, tiny_cfg())

    def test_k_larger_than_n_rejected(self):
        cfg = tiny_cfg(n_clusters=5)
        train, _ = make_training_data()
        with pytest.raises(ValueError, match="n_clusters"):
            fit(train, None, cfg)

    def test_history_columns(self):
        cfg = tiny_cfg(epochs=1)
        train, _ = make_training_data()
        _, history = fit(train, None, cfg)
        assert set(history[0]) == {"iteration", "l_forecast", "l_cluster", "l_ortho", "l_adv", "total"}
        assert [h["iteration"] for h in history] == list(range(1, len(history) + 1))

    def test_overfit_noiseless_sinusoids(self):
        # 4 noiseless sinusoids, w=8, h=2, o=16, K=2, 300 epochs:
        # final forecasting loss < 1e-2 (normalized), >=100x decrease,
        # and final training MAE < 1e-1.
        series = synth_two_group(2, 2, 160, 0.0, 0.0, seed=1, jump_scale=0.0)
        norm = MinMaxNormalizer().fit(series)
        train = make_windows(norm.apply_series(series), 8, 2)
        cfg = TrainConfig(
            window=8, horizon=2, hidden_dim=16, embed_dim=4, n_clusters=2,
            batch_size=64, epochs=300, seed=1, metric_scale="normalized",
        )
        state, history = fit(train, None, cfg)
        assert history[-1]["l_forecast"] < 1e-2
        assert history[-1]["l_forecast"] * 100 <= history[0]["l_forecast"]
        preds = collect_predictions(state.model, train, cfg.batch_size)
        assert np.abs(train.targets - preds).mean() < 1e-1


class TestCheckpoint:
    def _trained_state(self, epochs=1):
        cfg = tiny_cfg(epochs=epochs)
        train, norm = make_training_data(t=140)
        val = train.subset(np.arange(10))
        state, _ = fit(train, val, cfg)
        state.normalizer = norm
        return state, train, val, cfg

    def test_roundtrip_byte_identical(self, tmp_path):
        state, *_ = self._trained_state()
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(state, p1)
        loaded = load_checkpoint(p1)
        save_checkpoint(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_roundtrip_restores_everything(self, tmp_path):
        state, *_ = self._trained_state()
        path = tmp_path / "s.ckpt"
        save_checkpoint(state, path)
        loaded = load_checkpoint(path)
        assert param_checksum(loaded.model.named_parameters()) == param_checksum(
            state.model.named_parameters()
        )
        assert checksum(loaded.model.named_buffers()) == checksum(state.model.named_buffers())
        np.testing.assert_array_equal(loaded.model.indicator.matrix, state.model.indicator.matrix)
        assert loaded.iteration == state.iteration
        assert loaded.epoch == state.epoch
        assert loaded.gen_opt.t == state.gen_opt.t
        assert loaded.history == state.history
        assert loaded.val_history == state.val_history
        assert loaded.best_val_mae == state.best_val_mae
        np.testing.assert_array_equal(
            loaded.normalizer.per_variable_min, state.normalizer.per_variable_min
        )

    def test_resume_matches_uninterrupted(self, tmp_path):
        cfg = tiny_cfg(epochs=4)
        train, _ = make_training_data(t=140)
        val = train.subset(np.arange(10))

        half_cfg = TrainConfig(**{**cfg.to_dict(), "epochs": 2})
        state_half, _ = fit(train, val, half_cfg)
        path = tmp_path / "half.ckpt"
        save_checkpoint(state_half, path)
        resumed = load_checkpoint(path)
        resumed.cfg = cfg
        state_resumed, hist_resumed = fit(train, val, cfg, state=resumed)

        state_full, hist_full = fit(train, val, cfg)
        assert hist_resumed == hist_full
        assert param_checksum(state_resumed.model.named_parameters()) == param_checksum(
            state_full.model.named_parameters()
        )

    def test_mid_epoch_resume_matches(self, tmp_path):
        # interrupt after a partial epoch: counters restore batch position
        cfg = tiny_cfg(epochs=2)
        train, _ = make_training_data(t=140)
        state = init_training_state(train.n_variables, cfg)
        n_batches = -(-train.n_windows // cfg.batch_size)
        assert n_batches >= 2

        from faircast import training as tr_mod

        order = tr_mod._epoch_order(cfg.seed, 0, train.n_windows)
        for b in range(2):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            generator_step(train.subset(idx), state, cfg)
            state.iteration += 1
            if state.iteration % cfg.indicator_update_every == 0:
                from faircast.grouping import update_indicator

                state.model.indicator = update_indicator(state.last_projected_ref, cfg.n_clusters)
            discriminator_step(train.subset(idx), state, cfg)
            state.history.append({"iteration": state.iteration, "l_forecast": 0.0,
                                  "l_cluster": 0.0, "l_ortho": 0.0, "l_adv": 0.0, "total": 0.0})
            state.iter_in_epoch = b + 1
        path = tmp_path / "mid.ckpt"
        save_checkpoint(state, path)
        resumed = load_checkpoint(path)
        assert resumed.iter_in_epoch == 2
        state_resumed, _ = fit(train, None, cfg, state=resumed)
        state_full, _ = fit(train, None, cfg)
        assert param_checksum(state_resumed.model.named_parameters()) == param_checksum(
            state_full.model.named_parameters()
        )

    def test_version_mismatch_rejected(self, tmp_path):
        state, *_ = self._trained_state()
        path = tmp_path / "v.ckpt"
        save_checkpoint(state, path)
        raw = path.read_bytes()
        tampered = raw.replace(b'"format_version":1', b'"format_version":2', 1)
        assert tampered != raw
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(tampered)
        with pytest.raises(CheckpointError, match="version 2"):
            load_checkpoint(bad)

    def test_truncated_file_rejected(self, tmp_path):
        state, *_ = self._trained_state()
        path = tmp_path / "t.ckpt"
        save_checkpoint(state, path)
        raw = path.read_bytes()
        (tmp_path / "trunc.ckpt").write_bytes(raw[: len(raw) - 100])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(tmp_path / "trunc.ckpt")

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"hello world, definitely not a checkpoint")
        with pytest.raises(CheckpointError, match="not a checkpoint"):
            load_checkpoint(path)
