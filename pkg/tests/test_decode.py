import numpy as np
import pytest

from oracles import best_sequence, collapse
from trlab.decode import (
    SATURATING, DecodeConfig, DecodeStats, ThresholdConfig, alsd_search, ctc_blank_filter,
    decode_corpus, decode_utterance, greedy_ctc_decode, hat_blank_gate, keep_mask,
    keep_mask_from_probs,
)
from trlab.errors import ConfigError, UnsupportedOperation
from trlab.model import Model, ModelConfig
from trlab import numkit as nk


def tiny(mode="hat", head="iam", K=4, seed=0):
    cfg = ModelConfig(mode=mode, ctc_head=head, vocab_size=K, feat_dim=3, hidden_dim=5,
                      joint_dim=5, enc_layers=1, stride=1)
    return Model(cfg, seed=seed)


EXHAUSTIVE = {
    "alsd": DecodeConfig("alsd", beam=64, max_symbols=2),
    "tsd": DecodeConfig("tsd", beam=64, max_symbols=2, tsd_max_expansions_per_frame=2),
}


@pytest.mark.parametrize("algorithm", ["alsd", "tsd"])
@pytest.mark.parametrize("mode", ["hat", "rnnt"])
def test_wide_beam_finds_global_best(algorithm, mode):
    rng = np.random.default_rng(11)
    for i in range(12):
        K = int(rng.integers(2, 5))
        m = tiny(mode, "iam", K=K, seed=i)
        # scale weights up so distributions are peaked and informative
        for p in m.params.values():
            p *= 3.0
        x = rng.normal(size=(int(rng.integers(1, 4)), 3))
        best, score = best_sequence(m, x, 2)
        res = decode_utterance(m, x, EXHAUSTIVE[algorithm])
        assert res.transcript == best
        assert res.nbest[0].log_score == pytest.approx(score, abs=1e-9)


def test_filter_example_from_probabilities():
    probs = np.array([0.9, 0.3, 0.99])
    keep = keep_mask_from_probs(probs, 0.0)
    assert keep.tolist() == [False, True, False]
    assert keep.mean() == pytest.approx(1 / 3)


def test_threshold_boundary_counts_as_blank():
    # blank_prob exactly sigmoid(lam) is treated as blank
    assert keep_mask(np.array([2.0, 1.999]), 2.0).tolist() == [False, True]


def test_ctc_filter_saturating_keeps_everything(rng):
    m = tiny()
    enc = m.encode(rng.normal(size=(6, 3)))
    kept, stats = ctc_blank_filter(m, enc, SATURATING)
    assert kept.tolist() == list(range(6)) and stats.nbp == 100.0


def test_ctc_filter_very_low_threshold_drops_everything(rng):
    m = tiny()
    enc = m.encode(rng.normal(size=(6, 3)))
    kept, stats = ctc_blank_filter(m, enc, -SATURATING)
    assert len(kept) == 0 and stats.nbp == 0.0


def test_all_frames_filtered_gives_empty_transcript(rng):
    m = tiny()
    res = decode_utterance(m, rng.normal(size=(6, 3)), DecodeConfig(),
                           ThresholdConfig("ctc", lambda_ctc=-SATURATING))
    assert res.transcript == ()
    assert res.stats.kept_frames == 0 and res.stats.label_head_calls == 0


def test_hat_gate(rng):
    m = tiny()
    h_enc = rng.normal(size=5)
    state = m.start_state()
    s = float(m.blank_logit(m.joint_hidden(m.project_enc(h_enc), m.project_pred(state.h))))
    skipped = hat_blank_gate(m, h_enc, state, s)
    assert skipped.forced_blank and skipped.label_head_calls == 0
    opened = hat_blank_gate(m, h_enc, state, s + 1e-9)
    assert not opened.forced_blank and opened.label_head_calls == 1
    np.testing.assert_allclose(np.exp(opened.log_probs).sum(), 1.0, atol=1e-14)
    assert opened.log_blank == pytest.approx(nk.log_sigmoid(s))


def test_hat_gate_rejects_rnnt(rng):
    m = tiny("rnnt")
    with pytest.raises(UnsupportedOperation):
        hat_blank_gate(m, rng.normal(size=5), m.start_state(), 0.0)
    with pytest.raises(UnsupportedOperation):
        decode_utterance(m, rng.normal(size=(3, 3)), DecodeConfig(), ThresholdConfig("hat", 0.0))


def test_fctc_source_requires_fctc_head(rng):
    with pytest.raises(UnsupportedOperation):
        decode_utterance(tiny(), rng.normal(size=(3, 3)), DecodeConfig(),
                         ThresholdConfig("ctc", lambda_ctc=0.0, blank_source="fctc"))


@pytest.mark.parametrize("algorithm", ["alsd", "tsd"])
def test_saturating_thresholds_identical_to_none(rng, algorithm):
    m = tiny(K=5)
    x = rng.normal(size=(7, 3))
    dcfg = DecodeConfig(algorithm, beam=4)
    base = decode_utterance(m, x, dcfg)
    dual = decode_utterance(m, x, dcfg, ThresholdConfig("dual", SATURATING, SATURATING))
    assert [(h.tokens, h.log_score) for h in base.nbest] == [(h.tokens, h.log_score) for h in dual.nbest]


def test_every_step_gated_emits_nothing(rng):
    m = tiny()
    res = decode_utterance(m, rng.normal(size=(5, 3)), DecodeConfig(),
                           ThresholdConfig("hat", lambda_hat=-SATURATING))
    assert res.transcript == () and res.stats.label_head_calls == 0 and res.stats.jcr == 0.0


def test_mode_none_counts_every_call(rng):
    res = decode_utterance(tiny(), rng.normal(size=(5, 3)), DecodeConfig())
    assert res.stats.nbp == 100.0 and res.stats.jcr == 100.0


def test_greedy_ctc_collapse():
    frames = np.log(np.array([
        [0.1, 0.8, 0.1], [0.1, 0.8, 0.1], [0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8],
    ]))
    assert greedy_ctc_decode(frames) == (1, 1, 2)


def test_greedy_ctc_matches_collapse_oracle(rng):
    lp = rng.normal(size=(20, 4))
    assert greedy_ctc_decode(lp) == collapse(np.argmax(lp, -1).tolist())


def test_greedy_ctc_rejects_thresholds(rng):
    with pytest.raises(UnsupportedOperation):
        decode_utterance(tiny(), rng.normal(size=(3, 3)), DecodeConfig("greedy_ctc"),
                         ThresholdConfig("ctc", lambda_ctc=0.0))


def test_decode_deterministic_and_jobs_preserve_order(rng):
    from trlab.data import Utterance

    m = tiny(K=5)
    utts = [Utterance(f"u{i}", rng.normal(size=(int(rng.integers(2, 8)), 3)), ()) for i in range(5)]
    serial = decode_corpus(m, utts, DecodeConfig("tsd", beam=3))
    again = decode_corpus(m, utts, DecodeConfig("tsd", beam=3))
    parallel = decode_corpus(m, utts, DecodeConfig("tsd", beam=3), jobs=2)
    tokens = [r.transcript for r in serial]
    assert tokens == [r.transcript for r in again] == [r.transcript for r in parallel]
    assert [r.nbest[0].log_score for r in serial] == [r.nbest[0].log_score for r in parallel]


def test_alsd_output_cap(rng):
    m = tiny(K=4)
    for p in m.params.values():
        p *= 3.0
    hyps = alsd_search(m, m.encode(rng.normal(size=(4, 3))).frames, DecodeConfig(beam=8, max_symbols=1))
    assert all(len(h.tokens) <= 1 for h in hyps)


def test_stats_addition_and_ratios():
    a = DecodeStats(10, 4, 8, 2, 0.5, 1.0)
    b = DecodeStats(10, 6, 2, 2, 0.5, 1.0)
    total = a + b
    assert total.nbp == 50.0 and total.jcr == 40.0 and total.rtf == 0.5
    assert DecodeStats().jcr == 0.0 and DecodeStats().nbp == 0.0


@pytest.mark.parametrize("kwargs", [{"algorithm": "beam"}, {"beam": 0}, {"alsd_max_symbols": 0}])
def test_decode_config_validation(kwargs):
    with pytest.raises(ConfigError):
        DecodeConfig(**kwargs)


def test_threshold_config_validation():
    with pytest.raises(ConfigError):
        ThresholdConfig("both")
    with pytest.raises(ConfigError):
        ThresholdConfig("hat", lambda_hat=float("inf"))
