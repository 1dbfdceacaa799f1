import json
import math

import numpy as np
import pytest

from structgen.autodiff import Tape, Tensor
from structgen.data import build_vocabularies, make_batch, make_example
from structgen.model import Seq2SeqModel
from structgen.toydata import make_toy_corpus
from structgen.training import (Adam, ConfigError, TrainConfig, TrainingError,
                                clip_grad_norm, load_checkpoint,
                                sequence_loss, train)


def toy_setup(n=6, seed=0, **config_kw):
    pairs = make_toy_corpus(n, seed)
    wv, fv = build_vocabularies(pairs, word_limit=500, field_min_count=0)
    examples = [make_example(t, d, wv, fv) for t, d in pairs]
    defaults = dict(word_dim=6, field_dim=4, pos_dim=2, hidden=8, att_dim=6,
                    batch_size=3, learning_rate=0.002, epochs=2, seed=seed,
                    word_limit=500, field_min_count=0)
    defaults.update(config_kw)
    return TrainConfig(**defaults), wv, fv, examples


class TestTrainConfig:
    def test_defaults_match_full_scale_setup(self):
        cfg = TrainConfig()
        assert (cfg.word_dim, cfg.field_dim, cfg.pos_dim, cfg.hidden) == (400, 50, 5, 500)
        assert (cfg.batch_size, cfg.learning_rate, cfg.optimizer) == (32, 0.0005, "adam")

    def test_validation_lists_all_problems(self):
        cfg = TrainConfig(hidden=0, learning_rate=-1.0, encoder_mode="nope")
        problems = cfg.validate()
        assert len(problems) == 3
        with pytest.raises(ConfigError) as exc:
            cfg.check()
        assert "hidden" in str(exc.value)
        assert "learning_rate" in str(exc.value)
        assert "encoder_mode" in str(exc.value)

    def test_dict_round_trip(self):
        cfg = TrainConfig(hidden=12, epochs=3)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"hiden": 3})


class TestAdam:
    def test_first_step_magnitude_is_about_lr(self):
        from structgen.params import ModelParams
        p = ModelParams()
        theta = p.add("theta", Tensor([0.0]))
        theta.grad = np.array([1.0])
        adam = Adam(p, lr=0.01)
        adam.step()
        assert abs(abs(theta.data[0]) - 0.01) < 1e-6

    def test_zero_gradient_keeps_parameters(self):
        from structgen.params import ModelParams
        p = ModelParams()
        theta = p.add("theta", Tensor([1.5, -2.0]))
        before = theta.data.copy()
        adam = Adam(p, lr=0.1)
        theta.grad = np.zeros(2)
        adam.step()
        assert np.array_equal(theta.data, before)

    def test_quadratic_bowl_converges(self):
        # scripted run: minimize f(theta) = theta^2 from theta0 = 1
        from structgen.params import ModelParams
        p = ModelParams()
        theta = p.add("theta", Tensor([1.0]))
        adam = Adam(p, lr=0.05)
        for _ in range(200):
            theta.grad = 2.0 * theta.data
            adam.step()
        assert abs(theta.data[0]) < 1e-2

    def test_nan_gradient_aborts_naming_parameter(self):
        from structgen.params import ModelParams
        p = ModelParams()
        theta = p.add("bad_weight", Tensor([1.0]))
        theta.grad = np.array([float("nan")])
        adam = Adam(p, lr=0.1)
        with pytest.raises(TrainingError) as exc:
            adam.step()
        assert "bad_weight" in str(exc.value)


class TestClipGradNorm:
    def test_post_clip_norm_bounded(self):
        from structgen.params import ModelParams
        rng = np.random.default_rng(0)
        p = ModelParams()
        for i in range(3):
            t = p.add(f"w{i}", Tensor(rng.normal(size=(4, 4))))
            t.grad = rng.normal(scale=10.0, size=(4, 4))
        pre = clip_grad_norm(p, 5.0)
        assert pre > 5.0
        post = math.sqrt(sum(float((t.grad ** 2).sum()) for _, t in p.items()))
        assert post <= 5.0 + 1e-12

    def test_no_clip_below_threshold(self):
        from structgen.params import ModelParams
        p = ModelParams()
        t = p.add("w", Tensor([1.0]))
        t.grad = np.array([0.5])
        clip_grad_norm(p, 5.0)
        assert t.grad[0] == 0.5


class TestSequenceLoss:
    def test_zeroed_model_gives_log_vocab(self):
        cfg, wv, fv, examples = toy_setup(n=2)
        model = Seq2SeqModel(cfg.model_config(), wv, fv, seed=0)
        for _, p in model.params.items():
            p.data[:] = 0.0
        batch = make_batch(examples)
        loss, _ = sequence_loss(Tape(record=False), model, batch)
        assert abs(loss.item() - math.log(len(wv))) < 1e-12

    def test_loss_invariant_to_padding_amount(self):
        import dataclasses
        cfg, wv, fv, examples = toy_setup(n=3)
        model = Seq2SeqModel(cfg.model_config(), wv, fv, seed=1)
        batch = make_batch(examples)
        loss_a, count_a = sequence_loss(Tape(record=False), model, batch)
        padded = dataclasses.replace(
            batch,
            dec_input=np.pad(batch.dec_input, ((0, 0), (0, 4))),
            target=np.pad(batch.target, ((0, 0), (0, 4))),
            loss_mask=np.pad(batch.loss_mask, ((0, 0), (0, 4))),
        )
        loss_b, count_b = sequence_loss(Tape(record=False), model, padded)
        assert loss_a.item() == loss_b.item()
        assert count_a == count_b

    def test_all_pad_batch_rejected(self):
        import dataclasses
        cfg, wv, fv, examples = toy_setup(n=2)
        model = Seq2SeqModel(cfg.model_config(), wv, fv, seed=2)
        batch = make_batch(examples)
        empty = dataclasses.replace(batch, loss_mask=np.zeros_like(batch.loss_mask))
        with pytest.raises(ValueError):
            sequence_loss(Tape(record=False), model, empty)


class TestTrainLoop:
    def test_loss_decreases_on_toy_corpus(self):
        cfg, wv, fv, examples = toy_setup(n=6, epochs=8)
        result = train(cfg, wv, fv, examples)
        assert result.history[-1]["train_loss"] < result.history[0]["train_loss"]

    def test_determinism_same_seed_same_losses(self):
        cfg, wv, fv, examples = toy_setup(n=5, epochs=3)
        a = train(cfg, wv, fv, examples)
        b = train(cfg, wv, fv, examples)
        assert [h["train_loss"] for h in a.history] == [h["train_loss"] for h in b.history]

    def test_zero_learning_rate_freezes_parameters(self):
        from structgen.params import ModelParams
        p = ModelParams()
        t = p.add("w", Tensor([1.0, 2.0]))
        before = t.data.copy()
        adam = Adam(p, lr=0.0)
        t.grad = np.array([3.0, -4.0])
        for _ in range(5):
            adam.step()
        assert np.array_equal(t.data, before)

    def test_metrics_log_and_checkpoints_written(self, tmp_path):
        cfg, wv, fv, examples = toy_setup(n=4, epochs=2)
        out = tmp_path / "run"
        result = train(cfg, wv, fv, examples, valid_examples=examples[:2], out_dir=str(out))
        lines = (out / "metrics.jsonl").read_text().strip().split("\n")
        assert len(lines) == 2
        rec = json.loads(lines[0])
        assert set(rec) == {"epoch", "step", "train_loss", "valid_loss"}
        assert (out / "ckpt_last.bin").exists()
        assert (out / "ckpt_best.bin").exists()
        assert result.best_epoch >= 1

    def test_early_stop_on_train_loss(self):
        cfg, wv, fv, examples = toy_setup(n=3, epochs=50, stop_at_train_loss=100.0)
        result = train(cfg, wv, fv, examples)
        assert len(result.history) == 1  # any real loss is under 100


class TestCheckpointing:
    def test_round_trip_restores_everything(self, tmp_path):
        cfg, wv, fv, examples = toy_setup(n=4, epochs=2)
        out = tmp_path / "run"
        result = train(cfg, wv, fv, examples, out_dir=str(out))
        ckpt = load_checkpoint(str(out / "ckpt_last.bin"))
        model = ckpt.build_model()
        assert ckpt.epoch == 2
        assert ckpt.config == cfg
        for name, p in result.model.params.items():
            assert np.array_equal(p.data, model.params[name].data), name
        wv2, fv2 = ckpt.build_vocabs()
        assert wv2.tokens() == wv.tokens()
        assert fv2.tokens() == fv.tokens()

    def test_resume_reproduces_trajectory(self, tmp_path):
        cfg, wv, fv, examples = toy_setup(n=5, epochs=6)
        full = train(cfg, wv, fv, examples, out_dir=str(tmp_path / "full"))

        cfg_half = TrainConfig.from_dict({**cfg.to_dict(), "epochs": 3})
        half = train(cfg_half, wv, fv, examples, out_dir=str(tmp_path / "half"))
        resumed = train(cfg, wv, fv, examples, out_dir=str(tmp_path / "resumed"),
                        resume=str(tmp_path / "half" / "ckpt_last.bin"))
        full_tail = [h["train_loss"] for h in full.history[3:]]
        resumed_losses = [h["train_loss"] for h in resumed.history]
        assert resumed_losses == full_tail
        for name, p in full.model.params.items():
            assert np.array_equal(p.data, resumed.model.params[name].data), name

    def test_resume_shape_mismatch_rejected(self, tmp_path):
        cfg, wv, fv, examples = toy_setup(n=3, epochs=1)
        train(cfg, wv, fv, examples, out_dir=str(tmp_path / "run"))
        other = TrainConfig.from_dict({**cfg.to_dict(), "hidden": 16})
        with pytest.raises(ConfigError):
            train(other, wv, fv, examples, resume=str(tmp_path / "run" / "ckpt_last.bin"))

    def test_byte_identical_reruns(self, tmp_path):
        cfg, wv, fv, examples = toy_setup(n=4, epochs=2)
        train(cfg, wv, fv, examples, valid_examples=examples[:2], out_dir=str(tmp_path / "a"))
        train(cfg, wv, fv, examples, valid_examples=examples[:2], out_dir=str(tmp_path / "b"))
        for fname in ("ckpt_last.bin", "ckpt_best.bin", "metrics.jsonl"):
            assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()
