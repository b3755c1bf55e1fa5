"""Synthetic template-based speech-like corpus and its binary container.

Every non-blank token owns a fixed random feature template.  An utterance
repeats each token's template for a random number of frames, optionally
separated by silence (all-zero) segments, plus Gaussian noise.  Silences and
the tails of long token segments give the blank-dominated frame structure
that blank thresholding exploits.
"""

import hashlib
import io
import json
import struct
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from trlab.errors import ConfigError, FormatError
from trlab.loss import ctc_min_frames
from trlab.metrics import oracle_nbp

MAGIC = b"TRLDS"
VERSION = 1
SPLITS = ("train", "dev", "test")
FRAME_SHIFT = 0.01  # seconds per input frame


@dataclass(frozen=True)
class SyntheticTaskConfig:
    vocab_size: int = 17
    feat_dim: int = 8
    dur_min: int = 3
    dur_max: int = 8
    noise: float = 0.1
    min_tokens: int = 2
    max_tokens: int = 6
    silence_prob: float = 0.3
    silence_min: int = 2
    silence_max: int = 8
    stride: int = 2
    n_train: int = 400
    n_dev: int = 50
    n_test: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.dur_min < 1 or self.dur_max < self.dur_min:
            raise ConfigError("need 1 <= dur_min <= dur_max")
        if self.vocab_size < 3:
            raise ConfigError("vocab_size must be >= 3")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        if self.min_tokens < 0 or self.max_tokens < self.min_tokens:
            raise ConfigError("need 0 <= min_tokens <= max_tokens")
        if not 0.0 <= self.silence_prob <= 1.0:
            raise ConfigError("silence_prob must be in [0, 1]")
        if self.silence_min < 1 or self.silence_max < self.silence_min:
            raise ConfigError("need 1 <= silence_min <= silence_max")


@dataclass(eq=False)
class Utterance:
    id: str
    features: np.ndarray  # (T', D)
    reference: tuple

    @property
    def num_frames(self):
        return self.features.shape[0]

    @property
    def audio_seconds(self):
        return self.num_frames * FRAME_SHIFT

    def __eq__(self, other):
        if not isinstance(other, Utterance):
            return NotImplemented
        return (
            self.id == other.id
            and tuple(self.reference) == tuple(other.reference)
            and self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
        )

    def checksum(self):
        h = hashlib.sha256(self.id.encode())
        h.update(np.asarray(self.reference, dtype="<u4").tobytes())
        h.update(np.ascontiguousarray(self.features, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(eq=False)
class Dataset:
    vocab_size: int
    feat_dim: int
    splits: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __getitem__(self, split):
        return self.splits[split]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.vocab_size == other.vocab_size
            and self.feat_dim == other.feat_dim
            and self.meta == other.meta
            and list(self.splits) == list(other.splits)
            and all(self.splits[k] == other.splits[k] for k in self.splits)
        )

    def manifest(self, stride=2):
        rows = {}
        for name, utts in self.splits.items():
            rows[name] = {
                "utterances": len(utts),
                "tokens": sum(len(u.reference) for u in utts),
                "audio_seconds": round(sum(u.audio_seconds for u in utts), 2),
                "oracle_nbp": round(oracle_nbp(utts, stride), 2),
            }
        return rows


def token_templates(config):
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    templates = rng.normal(size=(config.vocab_size, config.feat_dim))
    templates[0] = 0.0  # row 0 doubles as the silence template
    return templates


def _sample_tokens(rng, config):
    n = int(rng.integers(config.min_tokens, config.max_tokens + 1))
    tokens = []
    for _ in range(n):
        # no immediate repeats: adjacent identical segments would be inseparable
        choices = [k for k in range(1, config.vocab_size) if not tokens or k != tokens[-1]]
        tokens.append(int(rng.choice(choices)))
    return tokens


def _sample_utterance(rng, config, templates):
    tokens = _sample_tokens(rng, config)
    segments = []

    def silence():
        if rng.random() < config.silence_prob:
            segments.append((0, int(rng.integers(config.silence_min, config.silence_max + 1))))

    for tok in tokens:
        silence()
        segments.append((tok, int(rng.integers(config.dur_min, config.dur_max + 1))))
    silence()
    if not segments:
        segments.append((0, config.silence_min))
    frames = np.concatenate([np.repeat(templates[k][None], d, axis=0) for k, d in segments])
    if config.noise > 0:
        frames = frames + config.noise * rng.normal(size=frames.shape)
    return frames, tuple(tokens)


def generate(config, max_retries=10):
    """Build train/dev/test splits; deterministic for a given config."""
    templates = token_templates(config)
    counts = {"train": config.n_train, "dev": config.n_dev, "test": config.n_test}
    splits = {}
    for split_index, split in enumerate(SPLITS):
        utts = []
        for i in range(counts[split]):
            seq = np.random.SeedSequence([config.seed, split_index + 1, i])
            rng = np.random.default_rng(seq)
            for _ in range(max_retries):
                feats, ref = _sample_utterance(rng, config, templates)
                T = -(-feats.shape[0] // config.stride)
                if T >= ctc_min_frames(ref):
                    break
            else:
                raise ConfigError(f"could not generate an admissible utterance {split}/{i}")
            utts.append(Utterance(f"{split}-{config.seed}-{i:05d}", feats, ref))
        splits[split] = utts
    return Dataset(config.vocab_size, config.feat_dim, splits, {"task": asdict(config)})


# -- container -------------------------------------------------------------

_HEADER = struct.Struct("<5sHIII")


def _put_str(buf, text):
    data = text.encode("utf-8")
    buf.write(struct.pack("<I", len(data)))
    buf.write(data)


def dumps(dataset):
    buf = io.BytesIO()
    records = [(split, u) for split, utts in dataset.splits.items() for u in utts]
    buf.write(_HEADER.pack(MAGIC, VERSION, dataset.vocab_size, dataset.feat_dim, len(records)))
    _put_str(buf, json.dumps(dataset.meta, sort_keys=True))
    _put_str(buf, json.dumps(list(dataset.splits)))
    for split, u in records:
        feats = np.ascontiguousarray(u.features, dtype="<f8")
        if feats.ndim != 2 or feats.shape[1] != dataset.feat_dim:
            raise ValueError(f"{u.id}: feature shape {feats.shape}")
        _put_str(buf, split)
        _put_str(buf, u.id)
        buf.write(struct.pack("<II", feats.shape[0], len(u.reference)))
        buf.write(np.asarray(u.reference, dtype="<u4").tobytes())
        buf.write(feats.tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError("truncated dataset file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def string(self):
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def loads(data):
    if len(data) < _HEADER.size + 4:
        raise FormatError("truncated dataset file")
    magic, version, vocab, feat_dim, n_records = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    body, trailer = data[:-4], data[-4:]
    if struct.unpack("<I", trailer)[0] != zlib.crc32(body):
        raise FormatError("checksum mismatch (truncated or corrupted file)")
    r = _Reader(body)
    r.take(_HEADER.size)
    meta = json.loads(r.string())
    splits = {name: [] for name in json.loads(r.string())}
    for _ in range(n_records):
        split = r.string()
        uid = r.string()
        n_frames, n_tokens = r.unpack("<II")
        ref = tuple(int(t) for t in np.frombuffer(r.take(4 * n_tokens), dtype="<u4"))
        feats = np.frombuffer(r.take(8 * n_frames * feat_dim), dtype="<f8")
        if split not in splits:
            raise FormatError(f"record in undeclared split {split!r}")
        splits[split].append(Utterance(uid, feats.reshape(n_frames, feat_dim).astype(np.float64), ref))
    if r.pos != len(body):
        raise FormatError("trailing bytes after last record")
    return Dataset(vocab, feat_dim, splits, meta)


def save(dataset, path):
    with open(path, "wb") as f:
        f.write(dumps(dataset))


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())
