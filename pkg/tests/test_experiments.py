import pytest

from structgen.experiments import (run_ablation, run_disorder_experiment,
                                   shuffle_corpus, train_ablation)
from structgen.toydata import make_toy_corpus
from structgen.training import TrainConfig


def tiny_config(**kw):
    base = dict(word_dim=6, field_dim=4, pos_dim=2, hidden=8, att_dim=6,
                batch_size=4, learning_rate=0.003, epochs=2,
                word_limit=500, field_min_count=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def corpus():
    train_pairs = make_toy_corpus(8, seed=0)
    valid_pairs = make_toy_corpus(3, seed=1)
    test_pairs = make_toy_corpus(3, seed=2)
    return train_pairs, valid_pairs, test_pairs


@pytest.fixture(scope="module")
def configs():
    return {
        "word-only": tiny_config(encoder_mode="word", attention_mode="word"),
        "structure-aware": tiny_config(encoder_mode="fieldgate", attention_mode="dual"),
    }


@pytest.fixture(scope="module")
def trained(configs, corpus):
    train_pairs, valid_pairs, _ = corpus
    return train_ablation(configs, train_pairs, valid_pairs, seeds=(0, 1))


class TestAblation:
    def test_report_has_all_configs_with_scores_in_range(self, trained, corpus):
        _, _, test_pairs = corpus
        report = run_ablation(trained, test_pairs, beam_size=1, max_len=16)
        assert [r.name for r in report.rows] == ["word-only", "structure-aware"]
        for row in report.rows:
            assert 0.0 <= row.bleu.mean <= 100.0
            assert 0.0 <= row.rouge.mean <= 100.0
            assert len(row.bleu.values) == 2

    def test_text_report_mentions_stddev(self, trained, corpus):
        _, _, test_pairs = corpus
        text = run_ablation(trained, test_pairs, max_len=16).format()
        assert "±" in text
        assert "word-only" in text

    def test_missing_checkpoints_error_names_config(self, corpus):
        _, _, test_pairs = corpus
        with pytest.raises(ValueError) as exc:
            run_ablation({"fieldgate": []}, test_pairs)
        assert "fieldgate" in str(exc.value)


class TestDisorder:
    def test_shuffle_corpus_keeps_descriptions(self, corpus):
        train_pairs, _, _ = corpus
        shuffled = shuffle_corpus(train_pairs, seed=4)
        assert [d for _, d in shuffled] == [d for _, d in train_pairs]
        assert all(sorted(map(repr, a.records)) == sorted(map(repr, b.records))
                   for (a, _), (b, _) in zip(shuffled, train_pairs))

    def test_report_carries_deltas(self, configs, corpus, trained):
        train_pairs, valid_pairs, test_pairs = corpus
        report = run_disorder_experiment(
            configs, train_pairs, valid_pairs, test_pairs,
            seeds=(0, 1), shuffle_seed=3, ordered_models=trained, max_len=16)
        assert len(report.rows) == 2
        text = report.format()
        assert "(" in text and ")" in text  # delta column
        d = report.to_dict()
        for row in d.values():
            assert row["bleu_delta"] == pytest.approx(
                row["shuffled_bleu"] - row["ordered_bleu"])

    def test_missing_ordered_models_error(self, configs, corpus):
        train_pairs, valid_pairs, test_pairs = corpus
        with pytest.raises(ValueError) as exc:
            run_disorder_experiment(
                configs, train_pairs, valid_pairs, test_pairs,
                seeds=(0,), ordered_models={"word-only": []})
        assert "word-only" in str(exc.value)
