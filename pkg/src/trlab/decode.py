"""Beam-search decoding with HAT-, CTC- and dual blank thresholding.

Threshold semantics: a frame (CTC-blank filtering) or a decoder step
(HAT-blank gating) is treated as blank when its blank posterior is at least
``sigmoid(lam)``.  Because the sigmoid is monotone this is evaluated on
logits (``blank_logit >= lam``), which stays exact for large ``lam``.

Search conventions shared by ALSD and TSD:

* identical token sequences reaching the same lattice node are merged by
  log-sum-exp, so with an unbounded beam a hypothesis score is the full
  alignment-summed log-probability of its token sequence;
* beams are ordered by score (descending), then token count, then the token
  sequence itself, which makes every run deterministic.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from trlab import numkit as nk
from trlab.data import FRAME_SHIFT
from trlab.errors import ConfigError, UnsupportedOperation
from trlab.model import PredictionState

THRESHOLD_MODES = ("none", "hat", "ctc", "dual")
ALGORITHMS = ("greedy_ctc", "alsd", "tsd")
BLANK_SOURCES = ("iam", "fctc")
SATURATING = 40.0
LAMBDA_GRID = tuple(range(0, 17, 2))


@dataclass(frozen=True)
class ThresholdConfig:
    mode: str = "none"
    lambda_hat: float = SATURATING
    lambda_ctc: float = SATURATING
    blank_source: str | None = None  # None: fctc for FCTC models, iam otherwise

    def __post_init__(self):
        if self.mode not in THRESHOLD_MODES:
            raise ConfigError(f"unknown threshold mode {self.mode!r}")
        if not (np.isfinite(self.lambda_hat) and np.isfinite(self.lambda_ctc)):
            raise ConfigError("thresholds must be finite")
        if self.blank_source is not None and self.blank_source not in BLANK_SOURCES:
            raise ConfigError(f"unknown blank source {self.blank_source!r}")

    @property
    def gates_hat(self):
        return self.mode in ("hat", "dual")

    @property
    def filters_frames(self):
        return self.mode in ("ctc", "dual")

    def source_for(self, model):
        if self.blank_source is not None:
            return self.blank_source
        return "fctc" if model.config.ctc_head == "fctc" else "iam"

    def check(self, model):
        if self.gates_hat and model.config.mode != "hat":
            raise UnsupportedOperation("HAT-blank gating needs a HAT model")
        if self.filters_frames and self.source_for(model) == "fctc":
            if model.config.ctc_head != "fctc":
                raise UnsupportedOperation("blank source 'fctc' needs an FCTC head")


@dataclass(frozen=True)
class DecodeConfig:
    algorithm: str = "alsd"
    beam: int = 8
    alsd_max_symbols: float = 1.0
    tsd_max_expansions_per_frame: int = 3
    max_symbols: int | None = None  # absolute output-length cap, overrides the ALSD factor

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.beam < 1 or self.tsd_max_expansions_per_frame < 1:
            raise ConfigError("beam and expansion limits must be >= 1")
        if self.alsd_max_symbols <= 0:
            raise ConfigError("alsd_max_symbols must be > 0")
        if self.max_symbols is not None and self.max_symbols < 0:
            raise ConfigError("max_symbols must be >= 0")


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple
    log_score: float
    pred_state: object = None


@dataclass
class DecodeStats:
    encoder_frames: int = 0
    kept_frames: int = 0
    blank_head_calls: int = 0
    label_head_calls: int = 0
    wall_decode_seconds: float = 0.0
    audio_seconds: float = 0.0

    def __add__(self, other):
        return DecodeStats(
            self.encoder_frames + other.encoder_frames,
            self.kept_frames + other.kept_frames,
            self.blank_head_calls + other.blank_head_calls,
            self.label_head_calls + other.label_head_calls,
            self.wall_decode_seconds + other.wall_decode_seconds,
            self.audio_seconds + other.audio_seconds,
        )

    @property
    def nbp(self):
        return 100.0 * self.kept_frames / self.encoder_frames if self.encoder_frames else 0.0

    @property
    def jcr(self):
        # no decoder steps at all (every frame filtered) counts as no label work
        return 100.0 * self.label_head_calls / self.blank_head_calls if self.blank_head_calls else 0.0

    @property
    def rtf(self):
        return self.wall_decode_seconds / self.audio_seconds if self.audio_seconds else 0.0


@dataclass
class DecodeResult:
    transcript: tuple
    nbest: list
    stats: DecodeStats = field(default_factory=DecodeStats)


# -- CTC-blank filtering ----------------------------------------------------------


def keep_mask(blank_logits, lam):
    """Frames survive iff blank_prob < sigmoid(lam), i.e. blank_logit < lam."""
    return np.asarray(blank_logits) < lam


def keep_mask_from_probs(blank_probs, lam):
    return np.asarray(blank_probs, dtype=np.float64) < nk.sigmoid(float(lam))


def ctc_blank_filter(model, enc, lambda_ctc, blank_source="iam"):
    """Indices of encoder frames passed to the transducer decoder, plus stats."""
    logits = model.frame_blank_logits(enc, source=blank_source)
    kept = np.flatnonzero(keep_mask(logits, lambda_ctc))
    stats = DecodeStats(encoder_frames=len(logits), kept_frames=len(kept))
    return kept, stats


# -- HAT-blank gating ---------------------------------------------------------------


@dataclass(frozen=True)
class GateResult:
    forced_blank: bool
    log_probs: np.ndarray | None  # full K log-distribution when the label head ran
    log_blank: float
    blank_head_calls: int = 1
    label_head_calls: int = 0


def hat_blank_gate(model, h_enc, pred_state, lambda_hat):
    """Blank head first; the label head runs only when blank is not confident."""
    if model.config.mode != "hat":
        raise UnsupportedOperation("HAT-blank gating needs a HAT model")
    hidden = model.joint_hidden(model.project_enc(h_enc), model.project_pred(pred_state.h))
    s = float(model.blank_logit(hidden))
    log_blank = nk.log_sigmoid(s)
    if s >= lambda_hat:
        return GateResult(True, None, log_blank)
    log_probs = np.concatenate([[log_blank], nk.log_sigmoid(-s) + model.label_log_probs(hidden)])
    return GateResult(False, log_probs, log_blank, 1, 1)


class _Scorer:
    """Batched joint evaluation with per-prefix prediction-network caching."""

    def __init__(self, model, frames, gate_lambda, stats):
        self.model = model
        self.enc_proj = model.project_enc(frames) if len(frames) else np.zeros((0, 0))
        self.gate = gate_lambda
        self.stats = stats
        h0 = model.start_state().h
        self.states = {(): (h0, model.project_pred(h0))}

    def _ensure(self, prefixes):
        missing = [p for p in dict.fromkeys(prefixes) if p not in self.states]
        if not missing:
            return
        h_prev = np.stack([self.states[p[:-1]][0] for p in missing])
        h = self.model.extend_batch(h_prev, [p[-1] for p in missing])
        proj = self.model.project_pred(h)
        for i, p in enumerate(missing):
            self.states[p] = (h[i], proj[i])

    def state(self, prefix):
        self._ensure([prefix])
        return PredictionState(self.states[prefix][0], prefix)

    def score(self, t_idx, prefixes):
        """Returns (log_blank (N,), label log-probs (N, K-1) with NaN rows when gated)."""
        model = self.model
        self._ensure(prefixes)
        pred = np.stack([self.states[p][1] for p in prefixes])
        hidden = model.joint_hidden(self.enc_proj[np.asarray(t_idx)], pred)
        n = len(prefixes)
        self.stats.blank_head_calls += n
        if model.config.mode == "rnnt":
            self.stats.label_head_calls += n
            lp, _ = model._head(hidden)
            return lp[:, 0], lp[:, 1:], np.zeros(n, dtype=bool)
        s = model.blank_logit(hidden)
        log_blank = nk.log_sigmoid(s)
        forced = s >= self.gate if self.gate is not None else np.zeros(n, dtype=bool)
        labels = np.full((n, model.config.num_labels), np.nan)
        if forced.any():
            open_rows = np.flatnonzero(~forced)
            if len(open_rows):
                labels[open_rows] = (
                    nk.log_sigmoid(-s[open_rows])[:, None]
                    + model.label_log_probs(hidden[open_rows])
                )
        else:
            open_rows = np.arange(n)
            labels = nk.log_sigmoid(-s)[:, None] + model.label_log_probs(hidden)
        self.stats.label_head_calls += len(open_rows)
        return np.asarray(log_blank), labels, forced


def _merge(pool, tokens, score):
    old = pool.get(tokens)
    pool[tokens] = score if old is None else float(np.logaddexp(old, score))


def _order(item):
    tokens, score = item
    return (-score, len(tokens), tokens)


def _prune(pool, beam):
    return sorted(pool.items(), key=_order)[:beam]


def _top_labels(row, k):
    return np.argsort(-row, kind="stable")[:k]


def _finish(scorer, pool, nbest=None):
    items = sorted(pool.items(), key=_order)
    if nbest is not None:
        items = items[:nbest]
    return [Hypothesis(tokens, score, scorer.state(tokens)) for tokens, score in items]


def _output_cap(dcfg, T):
    if dcfg.max_symbols is not None:
        return dcfg.max_symbols
    return int(np.ceil(dcfg.alsd_max_symbols * T))


def alsd_search(model, frames, dcfg, gate_lambda=None, stats=None):
    """Alignment-length synchronous beam search over (possibly filtered) frames.

    At step i every hypothesis with u labels sits on frame t = i - u; a
    blank on the last frame completes it.
    """
    stats = stats if stats is not None else DecodeStats()
    scorer = _Scorer(model, frames, gate_lambda, stats)
    T = len(frames)
    if T == 0:
        return [Hypothesis((), 0.0, model.start_state())]
    u_max = _output_cap(dcfg, T)
    n_labels = min(dcfg.beam, model.config.num_labels)
    beam = [((), 0.0)]
    final = {}
    for i in range(T + u_max):
        live = [(y, s) for y, s in beam if i - len(y) < T]
        if not live:
            break
        t_idx = [i - len(y) for y, _ in live]
        log_blank, labels, forced = scorer.score(t_idx, [y for y, _ in live])
        pool = {}
        for n, (y, s) in enumerate(live):
            _merge(final if t_idx[n] == T - 1 else pool, y, s + log_blank[n])
            if forced[n] or len(y) >= u_max:
                continue
            for k in _top_labels(labels[n], n_labels):
                _merge(pool, y + (int(k) + 1,), s + labels[n, k])
        beam = _prune(pool, dcfg.beam)
    return _finish(scorer, final or dict(beam))


def tsd_search(model, frames, dcfg, gate_lambda=None, stats=None):
    """Time-synchronous beam search with bounded label expansions per frame."""
    stats = stats if stats is not None else DecodeStats()
    scorer = _Scorer(model, frames, gate_lambda, stats)
    T = len(frames)
    if T == 0:
        return [Hypothesis((), 0.0, model.start_state())]
    u_max = dcfg.max_symbols if dcfg.max_symbols is not None else np.inf
    expansions = dcfg.tsd_max_expansions_per_frame
    n_labels = min(dcfg.beam, model.config.num_labels)
    beam = [((), 0.0)]
    for t in range(T):
        ended = {}
        current = beam
        for v in range(expansions + 1):
            if not current:
                break
            log_blank, labels, forced = scorer.score([t] * len(current), [y for y, _ in current])
            grown = {}
            for n, (y, s) in enumerate(current):
                _merge(ended, y, s + log_blank[n])
                if v == expansions or forced[n] or len(y) >= u_max:
                    continue
                for k in _top_labels(labels[n], n_labels):
                    _merge(grown, y + (int(k) + 1,), s + labels[n, k])
            current = _prune(grown, dcfg.beam)
        beam = _prune(ended, dcfg.beam)
    return _finish(scorer, dict(beam))


def greedy_ctc_decode(frame_dists, blank=0):
    """Frame-wise argmax, collapse repeats, drop blanks."""
    best = np.argmax(np.asarray(frame_dists), axis=-1)
    out = []
    prev = None
    for k in best:
        k = int(k)
        if k != prev and k != blank:
            out.append(k)
        prev = k
    return tuple(out)


# -- utterance / corpus drivers ------------------------------------------------------


def decode_utterance(model, x, dcfg=DecodeConfig(), tcfg=ThresholdConfig()):
    """encode -> optional CTC-blank filter -> ALSD/TSD with optional HAT gate.

    Wall time covers encoder, thresholding and search only.
    """
    tcfg.check(model)
    start = time.perf_counter()
    enc = model.encode(x)
    T = enc.length
    stats = DecodeStats(encoder_frames=T, kept_frames=T, audio_seconds=len(x) * FRAME_SHIFT)
    if dcfg.algorithm == "greedy_ctc":
        if tcfg.mode != "none":
            raise UnsupportedOperation("greedy CTC search takes no blank thresholding")
        transcript = greedy_ctc_decode(model.frame_log_probs(enc), model.config.blank_id)
        stats.blank_head_calls = stats.label_head_calls = T
        stats.wall_decode_seconds = time.perf_counter() - start
        return DecodeResult(transcript, [Hypothesis(transcript, 0.0)], stats)
    frames = enc.frames
    if tcfg.filters_frames:
        kept, part = ctc_blank_filter(model, enc, tcfg.lambda_ctc, tcfg.source_for(model))
        frames = frames[kept]
        stats.kept_frames = part.kept_frames
    gate = tcfg.lambda_hat if tcfg.gates_hat else None
    search = alsd_search if dcfg.algorithm == "alsd" else tsd_search
    nbest = search(model, frames, dcfg, gate, stats)
    stats.wall_decode_seconds = time.perf_counter() - start
    return DecodeResult(nbest[0].tokens, nbest, stats)


def _decode_chunk(args):
    model, feats, dcfg, tcfg = args
    return [decode_utterance(model, x, dcfg, tcfg) for x in feats]


def decode_corpus(model, utterances, dcfg=DecodeConfig(), tcfg=ThresholdConfig(), jobs=1):
    """Decode many utterances; results keep input order for any ``jobs``."""
    feats = [u.features for u in utterances]
    if jobs <= 1 or len(feats) < 2:
        return _decode_chunk((model, feats, dcfg, tcfg))
    chunks = [feats[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_decode_chunk, [(model, c, dcfg, tcfg) for c in chunks]))
    out = [None] * len(feats)
    for i, part in enumerate(parts):
        out[i::jobs] = part
    return out
