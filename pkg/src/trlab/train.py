"""Mini-batch training with Adam on the weighted joint objective."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from trlab.errors import ConfigError
from trlab.loss import joint_loss

log = logging.getLogger(__name__)

TRACE_HEADER = ("epoch", "split", "L_RNNT", "L_CTC", "L_ILM", "L_Joint")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.75
    beta: float = 0.1
    lr: float = 3e-3
    epochs: int = 20
    batch_size: int = 8
    seed: int = 0
    warmup_steps: int = 0
    clip_norm: float = 5.0
    adam_b1: float = 0.9
    adam_b2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if self.lr < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("need lr >= 0, epochs >= 0, batch_size >= 1")


class Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8, warmup_steps=0):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.warmup_steps = warmup_steps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step_count = 0

    def rate(self):
        if self.warmup_steps and self.step_count < self.warmup_steps:
            return self.lr * self.step_count / self.warmup_steps
        return self.lr

    def step(self, params, grads):
        self.step_count += 1
        lr = self.rate()
        if lr == 0.0:
            return
        c1 = 1.0 - self.b1**self.step_count
        c2 = 1.0 - self.b2**self.step_count
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class TrainResult:
    model: object
    trace: list  # rows matching TRACE_HEADER
    best_epoch: int


def _mean_report(reports):
    arr = np.array([r.row() for r in reports])
    return tuple(float(v) for v in arr.mean(axis=0))


def evaluate_loss(model, utterances, alpha, beta):
    reports = [
        joint_loss(model, u.features, u.reference, alpha, beta, need_grad=False)[0]
        for u in utterances
    ]
    usable = [r for r in reports if alpha == 0 or r.ctc_admissible]
    return _mean_report(usable or reports)


def train(model, train_set, config, dev_set=None):
    """Train in place on a copy of ``model``; returns the best-by-validation model.

    Validation is mean dev L_Joint when a dev set is given, training loss
    otherwise.  Utterances whose CTC target does not fit are skipped when
    alpha > 0.
    """
    if not train_set:
        raise ValueError("empty training set")
    model = model.copy()
    rng = np.random.default_rng(config.seed)
    opt = Adam(
        model.params, config.lr, config.adam_b1, config.adam_b2, config.adam_eps,
        config.warmup_steps,
    )
    trace = []
    best = (math.inf, model.copy(), 0)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        reports = []
        for start in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[start : start + config.batch_size]]
            acc = None
            used = 0
            for utt in batch:
                report, grads = joint_loss(
                    model, utt.features, utt.reference, config.alpha, config.beta
                )
                if config.alpha > 0 and not report.ctc_admissible:
                    log.warning("skipping %s: CTC target does not fit", utt.id)
                    continue
                if not math.isfinite(report.joint):
                    raise TrainingError(f"non-finite loss {report.joint} on utterance {utt.id}")
                reports.append(report)
                used += 1
                if acc is None:
                    acc = grads
                else:
                    for k in acc:
                        acc[k] += grads[k]
            if not used:
                continue
            for k in acc:
                acc[k] /= used
            _clip(acc, config.clip_norm)
            opt.step(model.params, acc)
        if not reports:
            raise TrainingError("every training utterance was skipped")
        train_row = _mean_report(reports)
        trace.append((epoch, "train", *train_row))
        score = train_row[3]
        if dev_set:
            dev_row = evaluate_loss(model, dev_set, config.alpha, config.beta)
            trace.append((epoch, "dev", *dev_row))
            score = dev_row[3]
        log.info("epoch %d train L_Joint %.4f valid %.4f", epoch, train_row[3], score)
        if score < best[0]:
            best = (score, model.copy(), epoch)
    if config.epochs == 0:
        return TrainResult(model, trace, 0)
    return TrainResult(best[1], trace, best[2])


def _clip(grads, max_norm):
    if not max_norm:
        return
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
