
import numpy as np
import pytest
from scripted import ScriptedModel, exhaustive_best

from catmt.inference import DecodeConfig, Hypothesis, Translator, beam_decode, greedy_decode, rescore
from catmt.model import ModelConfig, Transformer
from catmt.tokenizer import BOS, EOS

A, B = 3, 4  # content tokens in a 5-symbol vocabulary


def test_greedy_stops_on_eos():
    m = ScriptedModel(5, {}, default={EOS: 0.9})
    hyp = greedy_decode([BOS, EOS], m)
    assert hyp.ids == [BOS, EOS]
    assert hyp.content == [] and hyp.finished


def test_greedy_stops_at_max_len():
    m = ScriptedModel(5, {}, default={A: 0.9})
    hyp = greedy_decode([BOS, EOS], m)
    assert hyp.content == [A] * 16
    assert len(hyp.ids) == 17 and hyp.finished


def test_greedy_follows_script():
    m = ScriptedModel(
        5,
        {(BOS,): {B: 0.7, A: 0.2}, (BOS, B): {A: 0.5, B: 0.4}, (BOS, B, A): {EOS: 0.8}},
        default={A: 1.0},
    )
    hyp = greedy_decode([BOS], m)
    assert hyp.ids == [BOS, B, A, EOS]


def test_greedy_ties_go_to_lowest_id():
    m = ScriptedModel(5, {(BOS,): {A: 0.45, B: 0.45}}, default={EOS: 1.0})
    assert greedy_decode([BOS], m).ids == [BOS, A, EOS]


TRAP = ScriptedModel(
    5,
    {
        (BOS,): {A: 0.6, B: 0.4},
        (BOS, A): {EOS: 0.34, A: 0.33, B: 0.33},
        (BOS, B): {EOS: 0.9, A: 0.1},
    },
    default={EOS: 1.0},
)


def test_beam_escapes_greedy_trap():
    cfg = DecodeConfig("beam", beam_size=2, max_len=2, length_norm_alpha=0.0)
    greedy = greedy_decode([BOS], TRAP, cfg)
    beam = beam_decode([BOS], TRAP, cfg)
    best, best_lp = exhaustive_best(TRAP, 2)
    assert greedy.ids == [BOS, A, EOS]
    assert beam.best.ids == best == [BOS, B, EOS]
    assert beam.best.log_prob == pytest.approx(best_lp, abs=1e-12)
    assert beam.best.log_prob > greedy.log_prob
    assert len(beam.n_best) <= 2


def test_beam_one_equals_greedy_on_scripts():
    rng = np.random.default_rng(0)
    for _ in range(30):
        table = {}
        for prefix in [(BOS,), (BOS, A), (BOS, B), (BOS, A, A), (BOS, A, B), (BOS, B, A), (BOS, B, B)]:
            probs = rng.dirichlet(np.ones(3))
            table[prefix] = {EOS: probs[0], A: probs[1], B: probs[2]}
        m = ScriptedModel(5, table, default={EOS: 1.0})
        cfg = DecodeConfig("beam", beam_size=1, max_len=3)
        assert beam_decode([BOS], m, cfg).best.ids == greedy_decode([BOS], m, cfg).ids


def test_wide_beam_is_exhaustive_on_three_symbol_vocab():
    rng = np.random.default_rng(1)
    for _ in range(40):
        table = {(BOS,): dict(enumerate(rng.dirichlet(np.ones(3))))}
        for first in range(3):
            table[(BOS, first)] = dict(enumerate(rng.dirichlet(np.ones(3))))
        m = ScriptedModel(3, table, default={EOS: 1.0}, floor=0.0)
        best, best_lp = exhaustive_best(m, 2)
        hyp = beam_decode([BOS], m, DecodeConfig("beam", beam_size=3, max_len=2, length_norm_alpha=0.0)).best
        assert hyp.log_prob == pytest.approx(best_lp, abs=1e-12)


def test_alpha_zero_ranks_by_log_prob():
    cfg = DecodeConfig("beam", beam_size=5, max_len=2, length_norm_alpha=0.0)
    res = beam_decode([BOS], TRAP, cfg)
    lps = [h.log_prob for h in res.n_best]
    assert lps == sorted(lps, reverse=True)


def test_length_normalization_prefers_longer_when_alpha_positive():
    h_short = Hypothesis([BOS, A, EOS], -1.0, True)
    h_long = Hypothesis([BOS, A, A, A, A, EOS], -1.6, True)
    assert h_short.score(0) > h_long.score(0)
    assert h_long.score(1.0) > h_short.score(1.0)


def test_decode_config_validation():
    with pytest.raises(ValueError):
        DecodeConfig(beam_size=0)
    with pytest.raises(ValueError):
        DecodeConfig(strategy="sample")


def test_hypothesis_log_prob_rescores():
    cfg = ModelConfig.tiny(12, 12)
    m = Transformer(cfg, seed=4)
    src = [BOS, 5, 6, EOS]
    for hyp in (greedy_decode(src, m), beam_decode(src, m, DecodeConfig("beam", 3)).best):
        assert hyp.log_prob <= 0
        assert rescore(src, m, hyp.ids) == pytest.approx(hyp.log_prob, abs=1e-5)


# -- translation pipeline (uses the session-wide overfit model) -----------------------


@pytest.fixture(scope="module")
def translator(overfit):
    return Translator(overfit.checkpoint)


def test_translate_training_source(translator, toy):
    pair = toy.pairs[1]
    assert translator.translate(pair.source) == pair.target == "Lịch sử Oslo"


def test_translate_empty_input(translator):
    out = translator.translate("")
    assert isinstance(out, str)


def test_translate_unknown_word(translator):
    out = translator.translate("Books about quasars")
    assert isinstance(out, str) and "@" not in out


def test_translate_is_deterministic(translator):
    assert translator.translate("Culture of Japan") == translator.translate("Culture of Japan")


def test_beam_translation_on_overfit_model(overfit, toy):
    tr = Translator(overfit.checkpoint, DecodeConfig("beam", beam_size=3))
    hits = sum(tr.translate(p.source) == p.target for p in toy.pairs[:16])
    assert hits >= 15
