"""Encoder, prediction and joint networks for RNNT/HAT transducers.

The same parameter set also serves the CTC-style views:

* ``ctc_head_eval`` - a separate linear (CTC) or factorized linear (FCTC)
  head stacked on the encoder.
* ``iam_eval`` - the joint network evaluated with a zero prediction vector,
  which gives a frame-wise blank/label model with no extra parameters.
* ``ilm_eval`` - the joint network evaluated with a zero encoder vector,
  giving a label-only autoregressive distribution.

All forward computations go through :func:`trlab.numkit.affine` so a lattice
slice is bit-identical to the corresponding standalone evaluation.
Gradients are written out by hand in :meth:`Model.backward`.
"""

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from trlab import numkit as nk
from trlab.errors import ConfigError, UnsupportedOperation

MODES = ("rnnt", "hat")
CTC_HEADS = ("none", "ctc", "fctc", "iam")


@dataclass(frozen=True)
class ModelConfig:
    mode: str = "hat"
    ctc_head: str = "iam"
    vocab_size: int = 17
    feat_dim: int = 8
    hidden_dim: int = 32
    joint_dim: int = 32
    enc_layers: int = 2
    stride: int = 2
    causal: bool = False
    blank_id: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.ctc_head not in CTC_HEADS:
            raise ConfigError(f"unknown ctc_head {self.ctc_head!r}")
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be >= 2")
        if self.blank_id != 0:
            raise ConfigError("only blank_id=0 is supported")
        for name in ("feat_dim", "hidden_dim", "joint_dim", "enc_layers", "stride"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def num_labels(self):
        return self.vocab_size - 1

    @property
    def context(self):
        # stacked windows per encoder step: previous + current (+ next if non-causal)
        return 2 if self.causal else 3

    @property
    def enc_input_dim(self):
        return self.context * self.stride * self.feat_dim


@dataclass(frozen=True)
class Vocabulary:
    size: int
    blank_id: int = 0
    token_names: tuple = ()

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("vocabulary needs blank plus at least one label")
        if not 0 <= self.blank_id < self.size:
            raise ValueError("blank_id out of range")
        if not self.token_names:
            object.__setattr__(self, "token_names", default_token_names(self.size))
        if len(self.token_names) != self.size or len(set(self.token_names)) != self.size:
            raise ValueError("token names must be unique, one per token")

    def to_names(self, tokens):
        return [self.token_names[k] for k in tokens]

    def to_ids(self, names):
        index = {n: i for i, n in enumerate(self.token_names)}
        return [index[n] for n in names]


def default_token_names(size):
    letters = "abcdefghijklmnopqrstuvwxyz"
    labels = [letters[i] if size - 1 <= 26 else f"t{i + 1}" for i in range(size - 1)]
    return ("<b>", *labels)


@dataclass(frozen=True)
class EncoderOutput:
    frames: np.ndarray  # (T, hidden)
    subsample_ratio: float

    @property
    def length(self):
        return self.frames.shape[0]


@dataclass(frozen=True)
class PredictionState:
    h: np.ndarray
    tokens: tuple = ()


@dataclass(frozen=True)
class JointOutput:
    probs: np.ndarray  # (K,), blank first
    log_probs: np.ndarray
    blank_prob: float
    blank_logit: float | None = None  # HAT only
    label_probs: np.ndarray | None = None  # HAT only, (K-1,)


@dataclass
class ForwardCache:
    """Everything :meth:`Model.backward` needs from one utterance."""

    tokens: np.ndarray
    enc_in: np.ndarray
    enc_acts: list
    pred_steps: list
    pred_states: np.ndarray  # (U+1, H)
    enc_proj: np.ndarray  # (T, J)
    pred_proj: np.ndarray  # (U+1, J)
    lattice_hidden: np.ndarray  # (T, U+1, J)
    lattice_head: dict
    lattice: np.ndarray  # (T, U+1, K) log-probs
    frame_hidden: np.ndarray | None = None
    frame_head: dict | None = None
    frames: np.ndarray | None = None  # (T, K) log-probs
    ilm_hidden: np.ndarray | None = None
    ilm_head: dict | None = None
    ilm: np.ndarray | None = None  # (U, K-1) log-probs
    extra: dict = field(default_factory=dict)


# bias -> weight whose fan-in sets its init range
_BIAS_OWNER = {"pred.b": "pred.W_x", "joint.b": "joint.W_enc"}


def _uniform(rng, shape, fan_in):
    r = fan_in ** -0.5
    return rng.uniform(-r, r, size=shape)


class Model:
    """Parameter container plus forward/backward passes."""

    def __init__(self, config, params=None, seed=0):
        self.config = config
        self.params = self._init_params(seed) if params is None else OrderedDict(params)
        expected = self.param_shapes()
        if list(self.params) != list(expected):
            raise ConfigError(f"parameter names {list(self.params)} != {list(expected)}")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ConfigError(f"{name}: shape {self.params[name].shape} != {shape}")

    # -- parameters ---------------------------------------------------------

    def param_shapes(self):
        c = self.config
        H, J, K = c.hidden_dim, c.joint_dim, c.vocab_size
        shapes = OrderedDict()
        d_in = c.enc_input_dim
        for layer in range(c.enc_layers):
            shapes[f"enc.W{layer}"] = (H, d_in)
            shapes[f"enc.b{layer}"] = (H,)
            d_in = H
        shapes["pred.embed"] = (K, H)
        shapes["pred.W_x"] = (3 * H, H)
        shapes["pred.W_h"] = (3 * H, H)
        shapes["pred.b"] = (3 * H,)
        shapes["joint.W_enc"] = (J, H)
        shapes["joint.W_pred"] = (J, H)
        shapes["joint.b"] = (J,)
        if c.mode == "rnnt":
            shapes["joint.W_out"] = (K, J)
            shapes["joint.b_out"] = (K,)
        else:
            shapes["joint.W_blank"] = (1, J)
            shapes["joint.b_blank"] = (1,)
            shapes["joint.W_label"] = (K - 1, J)
            shapes["joint.b_label"] = (K - 1,)
        if c.ctc_head == "ctc":
            shapes["ctc.W"] = (K, H)
            shapes["ctc.b"] = (K,)
        elif c.ctc_head == "fctc":
            shapes["ctc.W_blank"] = (1, H)
            shapes["ctc.b_blank"] = (1,)
            shapes["ctc.W_label"] = (K - 1, H)
            shapes["ctc.b_label"] = (K - 1,)
        return shapes

    def _init_params(self, seed):
        rng = np.random.default_rng(seed)
        params = OrderedDict()
        shapes = self.param_shapes()
        for name, shape in shapes.items():
            if name == "pred.embed":
                fan_in = 1
            elif len(shape) == 2:
                fan_in = shape[1]
            else:
                fan_in = shapes[_BIAS_OWNER.get(name, name.replace(".b", ".W", 1))][1]
            params[name] = _uniform(rng, shape, fan_in)
        return params

    def num_parameters(self):
        return sum(p.size for p in self.params.values())

    def copy(self):
        return Model(self.config, OrderedDict((k, v.copy()) for k, v in self.params.items()))

    # -- encoder ------------------------------------------------------------

    def encoder_length(self, num_frames):
        return -(-num_frames // self.config.stride)

    def _encoder_input(self, x):
        c = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != c.feat_dim:
            raise ValueError(f"features must be (T', {c.feat_dim}), got {x.shape}")
        if x.shape[0] < 1:
            raise ValueError("empty feature sequence")
        T = self.encoder_length(x.shape[0])
        padded = np.zeros((T * c.stride, c.feat_dim))
        padded[: x.shape[0]] = x
        windows = padded.reshape(T, c.stride * c.feat_dim)
        zero = np.zeros((1, windows.shape[1]))
        parts = [np.vstack([zero, windows[:-1]]), windows]
        if not c.causal:
            parts.append(np.vstack([windows[1:], zero]))
        return np.hstack(parts)

    def _encode(self, x):
        h = self._encoder_input(x)
        acts = [h]
        for layer in range(self.config.enc_layers):
            h = np.tanh(nk.affine(h, self.params[f"enc.W{layer}"], self.params[f"enc.b{layer}"]))
            acts.append(h)
        return acts

    def encode(self, x):
        acts = self._encode(x)
        frames = acts[-1]
        return EncoderOutput(frames, np.asarray(x).shape[0] / frames.shape[0])

    # -- prediction network -------------------------------------------------

    def _gru_step(self, tokens, h_prev):
        """One gated recurrent step for a batch; returns (h, step cache)."""
        p = self.params
        H = self.config.hidden_dim
        e = p["pred.embed"][tokens]
        a = nk.affine(e, p["pred.W_x"], p["pred.b"])
        g = nk.affine(h_prev, p["pred.W_h"])
        z = nk.sigmoid(a[..., :H] + g[..., :H])
        r = nk.sigmoid(a[..., H : 2 * H] + g[..., H : 2 * H])
        n = np.tanh(a[..., 2 * H :] + r * g[..., 2 * H :])
        h = (1.0 - z) * n + z * h_prev
        return h, (tokens, e, h_prev, g, z, r, n)

    def start_state(self):
        h0 = np.zeros(self.config.hidden_dim)
        h, _ = self._gru_step(np.array(self.config.blank_id), h0)
        return PredictionState(h, ())

    def extend(self, state, token):
        token = int(token)
        self._check_label(token)
        h, _ = self._gru_step(np.array(token), state.h)
        return PredictionState(h, state.tokens + (token,))

    def extend_batch(self, h_prev, tokens):
        """Advance a stack of states (N, H) by one token each."""
        return self._gru_step(np.asarray(tokens, dtype=np.int64), h_prev)[0]

    def predict(self, prefix):
        state = self.start_state()
        for token in prefix:
            state = self.extend(state, token)
        return state

    def _check_label(self, token):
        if token == self.config.blank_id or not 0 <= token < self.config.vocab_size:
            raise ValueError(f"invalid label token {token}")

    def _predict_all(self, tokens):
        inputs = np.concatenate([[self.config.blank_id], tokens]).astype(np.int64)
        h = np.zeros(self.config.hidden_dim)
        states, steps = [], []
        for tok in inputs:
            h, cache = self._gru_step(np.array(tok), h)
            states.append(h)
            steps.append(cache)
        return np.array(states), steps

    # -- joint network ------------------------------------------------------

    def project_enc(self, h_enc):
        return nk.affine(h_enc, self.params["joint.W_enc"])

    def project_pred(self, h_pred):
        return nk.affine(h_pred, self.params["joint.W_pred"])

    def joint_hidden(self, enc_proj, pred_proj):
        return np.tanh(enc_proj + pred_proj + self.params["joint.b"])

    def blank_logit(self, hidden):
        """HAT blank-head logit for hidden (..., J) -> (...)."""
        if self.config.mode != "hat":
            raise UnsupportedOperation("blank head exists only in HAT mode")
        return nk.affine(hidden, self.params["joint.W_blank"], self.params["joint.b_blank"])[..., 0]

    def label_log_probs(self, hidden):
        """HAT label-head log-distribution over the K-1 labels."""
        return nk.log_softmax(
            nk.affine(hidden, self.params["joint.W_label"], self.params["joint.b_label"])
        )

    def _head(self, hidden):
        """Joint head on hidden (..., J); returns (log-probs (..., K), cache)."""
        p = self.params
        if self.config.mode == "rnnt":
            logits = nk.affine(hidden, p["joint.W_out"], p["joint.b_out"])
            return nk.log_softmax(logits), {"logits": logits}
        s = self.blank_logit(hidden)
        label_lp = self.label_log_probs(hidden)
        return _combine(s, label_lp), {"s": s, "label_lp": label_lp}

    def joint_log_probs(self, h_enc, h_pred):
        hidden = self.joint_hidden(self.project_enc(h_enc), self.project_pred(h_pred))
        return self._head(hidden)[0]

    def joint_eval(self, h_enc, h_pred):
        c = self.config
        h_enc = np.asarray(h_enc, dtype=np.float64)
        h_pred = np.asarray(h_pred, dtype=np.float64)
        if h_enc.shape != (c.hidden_dim,) or h_pred.shape != (c.hidden_dim,):
            raise ValueError(f"joint inputs must be ({c.hidden_dim},) vectors")
        hidden = self.joint_hidden(self.project_enc(h_enc), self.project_pred(h_pred))
        log_probs, cache = self._head(hidden)
        probs = np.exp(log_probs)
        if c.mode == "rnnt":
            return JointOutput(probs, log_probs, float(probs[c.blank_id]))
        s = float(cache["s"])
        return JointOutput(
            probs, log_probs, nk.sigmoid(s), s, np.exp(cache["label_lp"])
        )

    # -- lattice and frame-level views ----------------------------------------

    def lattice(self, x, y):
        """(T, U+1, K) log-probabilities for features x and labels y."""
        tokens = self._tokens(y)
        H = self.encode(x).frames
        P, _ = self._predict_all(tokens)
        hidden = self.joint_hidden(self.project_enc(H)[:, None, :], self.project_pred(P)[None])
        return self._head(hidden)[0]

    def _tokens(self, y):
        tokens = np.asarray(list(y), dtype=np.int64)
        for tok in tokens:
            self._check_label(int(tok))
        return tokens

    def _ctc_logits(self, H):
        p = self.params
        head = self.config.ctc_head
        if head == "ctc":
            logits = nk.affine(H, p["ctc.W"], p["ctc.b"])
            return nk.log_softmax(logits), {"logits": logits}
        if head == "fctc":
            s = nk.affine(H, p["ctc.W_blank"], p["ctc.b_blank"])[..., 0]
            label_lp = nk.log_softmax(nk.affine(H, p["ctc.W_label"], p["ctc.b_label"]))
            return _combine(s, label_lp), {"s": s, "label_lp": label_lp}
        raise UnsupportedOperation(f"no separate CTC head for ctc_head={head!r}")

    def ctc_head_eval(self, enc):
        return np.exp(self._ctc_logits(_frames(enc))[0])

    def _iam(self, H):
        hidden = self.joint_hidden(self.project_enc(H), self.project_pred(np.zeros_like(H)))
        lp, cache = self._head(hidden)
        return lp, hidden, cache

    def iam_eval(self, enc):
        """Joint network with the prediction output replaced by zeros, per frame."""
        return np.exp(self._iam(_frames(enc))[0])

    def _ilm(self, P):
        hidden = self.joint_hidden(self.project_enc(np.zeros_like(P)), self.project_pred(P))
        p = self.params
        if self.config.mode == "hat":
            return self.label_log_probs(hidden), hidden, None
        # blank dropped, renormalized over labels
        logits = nk.affine(hidden, p["joint.W_out"], p["joint.b_out"])
        return nk.log_softmax(logits[..., 1:]), hidden, logits

    def ilm_eval(self, prefix):
        """Label distribution (K-1,) given a prefix, with the encoder output zeroed."""
        state = self.predict(prefix)
        return np.exp(self._ilm(state.h)[0])

    def frame_log_probs(self, enc):
        """(T, K) log-probs from the configured CTC-style branch."""
        H = _frames(enc)
        if self.config.ctc_head == "iam":
            return self._iam(H)[0]
        return self._ctc_logits(H)[0]

    def frame_blank_logits(self, enc, source=None):
        """Per-frame blank logit, i.e. log(p/(1-p)) of the blank posterior.

        ``source`` is "iam" (zero-prediction joint view, always available),
        "fctc"/"ctc" (the separate head) or None for the configured head.
        ``blank_prob >= sigmoid(lam)`` holds iff ``logit >= lam``.
        """
        H = _frames(enc)
        source = self.config.ctc_head if source is None else source
        if source == "iam":
            _, _, cache = self._iam(H)
            if self.config.mode == "hat":
                return cache["s"]
            logits = cache["logits"]
        elif source in ("ctc", "fctc") and source == self.config.ctc_head:
            _, cache = self._ctc_logits(H)
            if source == "fctc":
                return cache["s"]
            logits = cache["logits"]
        else:
            raise UnsupportedOperation(f"no blank source {source!r} in this model")
        # single softmax: log p_blank - log(1 - p_blank)
        return logits[:, 0] - nk.log_sum_exp(logits[:, 1:])

    # -- training forward / backward -------------------------------------------

    def forward(self, x, y, with_frames=True, with_ilm=True):
        tokens = self._tokens(y)
        acts = self._encode(x)
        H = acts[-1]
        P, steps = self._predict_all(tokens)
        A = self.project_enc(H)
        B = self.project_pred(P)
        hidden = self.joint_hidden(A[:, None, :], B[None])
        lattice, head = self._head(hidden)
        cache = ForwardCache(tokens, acts[0], acts, steps, P, A, B, hidden, head, lattice)
        if with_frames and self.config.ctc_head != "none":
            if self.config.ctc_head == "iam":
                cache.frames, cache.frame_hidden, cache.frame_head = self._iam(H)
            else:
                cache.frames, cache.frame_head = self._ctc_logits(H)
        if with_ilm and len(tokens) > 0:
            cache.ilm, cache.ilm_hidden, logits = self._ilm(P[:-1])
            cache.ilm_head = {"logits": logits}
        return cache

    def forward_ilm(self, y):
        """Prediction network plus zero-encoder joint only (no acoustics)."""
        tokens = self._tokens(y)
        P, steps = self._predict_all(tokens)
        empty = np.zeros((0, 0))
        cache = ForwardCache(
            tokens, empty, [], steps, P, empty, self.project_pred(P), empty, {}, empty
        )
        if len(tokens) > 0:
            cache.ilm, cache.ilm_hidden, logits = self._ilm(P[:-1])
            cache.ilm_head = {"logits": logits}
        return cache

    def backward(self, cache, d_lattice=None, d_frames=None, d_ilm=None):
        """Parameter gradients given upstream gradients on log-probabilities.

        ``d_lattice`` is (T, U+1, K), ``d_frames`` (T, K) and ``d_ilm``
        (U, K-1); any may be None.  Gradients from every path accumulate into
        shared parameters (the IAM view reuses the joint network).
        """
        if cache is None:
            raise RuntimeError("backward called without a forward cache")
        p = self.params
        c = self.config
        grads = OrderedDict((k, np.zeros_like(v)) for k, v in p.items())
        H = cache.enc_acts[-1] if cache.enc_acts else None
        P = cache.pred_states
        dH = np.zeros_like(H) if H is not None else None
        dP = np.zeros_like(P)

        def joint_back(d_hidden, hidden, enc_side, pred_side):
            dpre = d_hidden * (1.0 - hidden**2)
            grads["joint.b"] += dpre.reshape(-1, dpre.shape[-1]).sum(0)
            if enc_side is not None:
                inp, dinp, axes = enc_side
                d_a = dpre.sum(axis=axes) if axes is not None else dpre
                grads["joint.W_enc"] += d_a.T @ inp
                dinp += d_a @ p["joint.W_enc"]
            if pred_side is not None:
                inp, dinp, axes = pred_side
                d_b = dpre.sum(axis=axes) if axes is not None else dpre
                grads["joint.W_pred"] += d_b.T @ inp
                dinp += d_b @ p["joint.W_pred"]

        if d_lattice is not None:
            d_hidden = self._head_back(d_lattice, cache.lattice_hidden, cache.lattice_head, grads)
            joint_back(d_hidden, cache.lattice_hidden, (H, dH, 1), (P, dP, 0))

        if d_frames is not None:
            if cache.frames is None:
                raise RuntimeError("forward cache has no frame outputs")
            if c.ctc_head == "iam":
                d_hidden = self._head_back(d_frames, cache.frame_hidden, cache.frame_head, grads)
                joint_back(d_hidden, cache.frame_hidden, (H, dH, None), None)
            else:
                self._ctc_head_back(d_frames, H, dH, cache.frame_head, grads)

        if d_ilm is not None and len(cache.tokens) > 0:
            hidden = cache.ilm_hidden
            if c.mode == "hat":
                d_l = _log_softmax_back(d_ilm, cache.ilm)
                grads["joint.W_label"] += _wgrad(d_l, hidden)
                grads["joint.b_label"] += d_l.sum(0)
                d_hidden = d_l @ p["joint.W_label"]
            else:
                d_logits = np.zeros((d_ilm.shape[0], c.vocab_size))
                d_logits[:, 1:] = _log_softmax_back(d_ilm, cache.ilm)
                grads["joint.W_out"] += _wgrad(d_logits, hidden)
                grads["joint.b_out"] += d_logits.sum(0)
                d_hidden = d_logits @ p["joint.W_out"]
            dP_ilm = np.zeros_like(P)
            joint_back(d_hidden, hidden, None, (P[:-1], dP_ilm[:-1], None))
            dP += dP_ilm

        self._pred_back(dP, cache, grads)
        if H is not None:
            self._enc_back(dH, cache, grads)
        return grads

    def _head_back(self, d_lp, hidden, head, grads):
        """Backprop through a joint head; returns gradient w.r.t. hidden."""
        p = self.params
        if self.config.mode == "rnnt":
            d_logits = _log_softmax_back(d_lp, nk.log_softmax(head["logits"]))
            grads["joint.W_out"] += _wgrad(d_logits, hidden)
            grads["joint.b_out"] += d_logits.reshape(-1, d_logits.shape[-1]).sum(0)
            return d_logits @ p["joint.W_out"]
        d_s, d_l = _combine_back(d_lp, head["s"], head["label_lp"])
        grads["joint.W_blank"] += _wgrad(d_s[..., None], hidden)
        grads["joint.b_blank"] += d_s.sum()
        grads["joint.W_label"] += _wgrad(d_l, hidden)
        grads["joint.b_label"] += d_l.reshape(-1, d_l.shape[-1]).sum(0)
        return d_s[..., None] * p["joint.W_blank"][0] + d_l @ p["joint.W_label"]

    def _ctc_head_back(self, d_lp, H, dH, head, grads):
        p = self.params
        if self.config.ctc_head == "ctc":
            d_logits = _log_softmax_back(d_lp, nk.log_softmax(head["logits"]))
            grads["ctc.W"] += d_logits.T @ H
            grads["ctc.b"] += d_logits.sum(0)
            dH += d_logits @ p["ctc.W"]
            return
        d_s, d_l = _combine_back(d_lp, head["s"], head["label_lp"])
        grads["ctc.W_blank"] += d_s[None] @ H
        grads["ctc.b_blank"] += d_s.sum()
        grads["ctc.W_label"] += d_l.T @ H
        grads["ctc.b_label"] += d_l.sum(0)
        dH += d_s[:, None] * p["ctc.W_blank"][0] + d_l @ p["ctc.W_label"]

    def _pred_back(self, dP, cache, grads):
        p = self.params
        H = self.config.hidden_dim
        dh_next = np.zeros(H)
        for u in range(len(cache.pred_steps) - 1, -1, -1):
            tok, e, h_prev, g, z, r, n = cache.pred_steps[u]
            dh = dP[u] + dh_next
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            dh_prev = dh * z
            dn_pre = dn * (1.0 - n**2)
            dz_pre = dz * z * (1.0 - z)
            dr_pre = dn_pre * g[2 * H :] * r * (1.0 - r)
            da = np.concatenate([dz_pre, dr_pre, dn_pre])
            dg = np.concatenate([dz_pre, dr_pre, dn_pre * r])
            grads["pred.W_x"] += np.outer(da, e)
            grads["pred.b"] += da
            grads["pred.embed"][tok] += da @ p["pred.W_x"]
            grads["pred.W_h"] += np.outer(dg, h_prev)
            dh_next = dh_prev + dg @ p["pred.W_h"]

    def _enc_back(self, dH, cache, grads):
        dh = dH
        for layer in range(self.config.enc_layers - 1, -1, -1):
            out = cache.enc_acts[layer + 1]
            inp = cache.enc_acts[layer]
            dpre = dh * (1.0 - out**2)
            grads[f"enc.W{layer}"] += dpre.T @ inp
            grads[f"enc.b{layer}"] += dpre.sum(0)
            dh = dpre @ self.params[f"enc.W{layer}"]


def _frames(enc):
    return enc.frames if isinstance(enc, EncoderOutput) else np.asarray(enc, dtype=np.float64)


def _combine(blank_logit, label_lp):
    """[log sigmoid(s); log(1 - sigmoid(s)) + label log-probs]."""
    blank_logit = np.asarray(blank_logit)
    log_blank = nk.log_sigmoid(blank_logit)
    log_rest = nk.log_sigmoid(-blank_logit)
    return np.concatenate(
        [np.asarray(log_blank)[..., None], np.asarray(log_rest)[..., None] + label_lp], axis=-1
    )


def _combine_back(d_lp, s, label_lp):
    sig = nk.sigmoid(s)
    d_labels = d_lp[..., 1:]
    total = d_labels.sum(-1)
    d_s = d_lp[..., 0] * (1.0 - sig) - sig * total
    d_l = d_labels - np.exp(label_lp) * total[..., None]
    return d_s, d_l


def _log_softmax_back(d_lp, lp):
    return d_lp - np.exp(lp) * d_lp.sum(-1, keepdims=True)


def _wgrad(d_out, inp):
    return d_out.reshape(-1, d_out.shape[-1]).T @ inp.reshape(-1, inp.shape[-1])
