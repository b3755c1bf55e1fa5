"""Token error rate and corpus-level efficiency metrics."""

from dataclasses import dataclass
from typing import NamedTuple

from trlab import kernels


class EditCounts(NamedTuple):
    substitutions: int
    insertions: int
    deletions: int

    @property
    def errors(self):
        return self.substitutions + self.insertions + self.deletions


def edit_distance(ref, hyp):
    """Minimal Levenshtein alignment counts (S, I, D) of hyp against ref.

    Among equal-cost alignments, substitutions are preferred over an
    insertion/deletion pair.
    """
    s, i, d = kernels.edit_counts(list(ref), list(hyp))
    return EditCounts(int(s), int(i), int(d))


def oracle_nbp(utterances, stride):
    """Reference tokens over encoder frames, in percent."""
    tokens = sum(len(u.reference) for u in utterances)
    frames = sum(-(-u.num_frames // stride) for u in utterances)
    return 100.0 * tokens / frames if frames else 0.0


@dataclass(frozen=True)
class EvalSummary:
    wer: float
    substitutions: int
    insertions: int
    deletions: int
    ref_tokens: int
    nbp: float
    jcr: float
    rtf: float
    oracle_nbp: float
    label_head_calls: int = 0
    blank_head_calls: int = 0


def aggregate(stats, pairs):
    """Corpus summary from per-utterance DecodeStats and (ref, hyp) pairs.

    Ratios are taken over corpus sums, not averaged per utterance.
    """
    stats = list(stats)
    pairs = list(pairs)
    if not stats or len(stats) != len(pairs):
        raise ValueError("need one DecodeStats per (ref, hyp) pair and at least one utterance")
    s = i = d = n = 0
    for ref, hyp in pairs:
        c = edit_distance(ref, hyp)
        s, i, d = s + c.substitutions, i + c.insertions, d + c.deletions
        n += len(ref)
    total = stats[0]
    for st in stats[1:]:
        total = total + st
    enc_frames = total.encoder_frames
    return EvalSummary(
        wer=100.0 * (s + i + d) / n if n else 0.0,
        substitutions=s,
        insertions=i,
        deletions=d,
        ref_tokens=n,
        nbp=total.nbp,
        jcr=total.jcr,
        rtf=total.rtf,
        oracle_nbp=100.0 * n / enc_frames if enc_frames else 0.0,
        label_head_calls=total.label_head_calls,
        blank_head_calls=total.blank_head_calls,
    )


SUMMARY_HEADER = ("WER", "algorithm", "lambda_ctc", "lambda_hat", "NBP", "JCR", "RTF")


def summary_row(summary, algorithm, lambda_ctc=None, lambda_hat=None):
    fmt = lambda v: "-" if v is None else f"{v:g}"  # noqa: E731
    return (
        f"{summary.wer:.2f}",
        algorithm,
        fmt(lambda_ctc),
        fmt(lambda_hat),
        f"{summary.nbp:.1f}",
        f"{summary.jcr:.1f}",
        f"{summary.rtf:.4f}",
    )
