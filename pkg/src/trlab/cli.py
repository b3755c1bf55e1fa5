"""``trlab`` command line: gen-data, train, decode, bench, sweep.

All subcommands read one YAML experiment file (``--config``); flags override
the threshold and decoding sections.  Outputs are written to ``*.partial``
files and renamed only after the command succeeds, so a failed run leaves
nothing behind.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys

from trlab import checkpoint, config as cfgmod, data, kernels
from trlab.decode import (
    ALGORITHMS, BLANK_SOURCES, LAMBDA_GRID, THRESHOLD_MODES, decode_corpus,
)
from trlab.errors import ConfigError
from trlab.metrics import SUMMARY_HEADER, aggregate, summary_row
from trlab.model import Model, Vocabulary
from trlab.train import TRACE_HEADER, train

log = logging.getLogger("trlab")

UTTERANCE_HEADER = (
    "utt_id", "hypothesis", "reference", "algorithm", "mode", "lambda_ctc",
    "lambda_hat", "NBP", "JCR", "wall_seconds", "audio_seconds",
)
CURVE_HEADER = (
    "mode", "lambda_ctc", "lambda_hat", "WER", "NBP", "JCR", "RTF",
    "label_head_calls", "blank_head_calls",
)
BENCH_HEADER = ("mode", "algorithm", "lambda_ctc", "lambda_hat", "repeat", "wall_seconds", "audio_seconds", "RTF")


class _Outputs:
    """Collects output files; renamed into place on commit, deleted otherwise."""

    def __init__(self):
        self.pending = []

    def path(self, final):
        parent = os.path.dirname(final)
        if parent:
            os.makedirs(parent, exist_ok=True)
        tmp = final + ".partial"
        self.pending.append((tmp, final))
        return tmp

    def commit(self):
        for tmp, final in self.pending:
            os.replace(tmp, final)
        self.pending = []

    def discard(self):
        for tmp, _ in self.pending:
            if os.path.exists(tmp):
                os.remove(tmp)
        self.pending = []


def _write_tsv(path, config_hash, header, rows):
    with open(path, "w") as f:
        f.write(f"# config_hash={config_hash}\n")
        f.write("\t".join(header) + "\n")
        for row in rows:
            f.write("\t".join(str(v) for v in row) + "\n")


def _fmt_lambda(tcfg, which):
    if which == "ctc" and tcfg.filters_frames:
        return f"{tcfg.lambda_ctc:g}"
    if which == "hat" and tcfg.gates_hat:
        return f"{tcfg.lambda_hat:g}"
    return "-"


# -- experiment plumbing ------------------------------------------------------------


def _resolve(args):
    cfg = cfgmod.load(args.config)
    tfields, dfields = {}, {}
    for flag, key in (("mode", "mode"), ("lambda_ctc", "lambda_ctc"),
                      ("lambda_hat", "lambda_hat"), ("blank_source", "blank_source")):
        if getattr(args, flag, None) is not None:
            tfields[key] = getattr(args, flag)
    for flag in ("algorithm", "beam"):
        if getattr(args, flag, None) is not None:
            dfields[flag] = getattr(args, flag)
    paths = {}
    for flag, key in (("data", "data"), ("checkpoint", "checkpoint"), ("out_dir", "out_dir")):
        if getattr(args, flag, None) is not None:
            paths[key] = getattr(args, flag)
    cfg = dataclasses.replace(
        cfg,
        threshold=dataclasses.replace(cfg.threshold, **tfields),
        decode=dataclasses.replace(cfg.decode, **dfields),
        paths=dataclasses.replace(cfg.paths, **paths),
    )
    log.info("resolved config (hash %s):\n%s", cfg.config_hash(), json.dumps(cfg.to_dict(), indent=2))
    return cfg


def _load_model_and_data(cfg, split):
    model, meta = checkpoint.load(cfg.paths.checkpoint)
    dataset = data.load(cfg.paths.data)
    if (dataset.vocab_size, dataset.feat_dim) != (model.config.vocab_size, model.config.feat_dim):
        raise ConfigError("dataset vocabulary/feature size does not match the checkpoint")
    if split not in dataset.splits:
        raise ConfigError(f"dataset has no split {split!r}")
    return model, meta, dataset[split]


def _decode_and_score(model, utts, dcfg, tcfg, jobs):
    results = decode_corpus(model, utts, dcfg, tcfg, jobs=jobs)
    summary = aggregate([r.stats for r in results], [(u.reference, r.transcript) for u, r in zip(utts, results)])
    return results, summary


# -- subcommands --------------------------------------------------------------------


def cmd_gen_data(args, cfg, out):
    dataset = data.generate(cfg.data)
    dataset.meta["config_hash"] = cfg.config_hash()
    data.save(dataset, out.path(cfg.paths.data))
    manifest = dataset.manifest(cfg.data.stride)
    print(json.dumps({"path": cfg.paths.data, "config_hash": cfg.config_hash(), "splits": manifest}, indent=2))


def cmd_train(args, cfg, out):
    dataset = data.load(cfg.paths.data)
    tcfg = cfg.train if args.epochs is None else dataclasses.replace(cfg.train, epochs=args.epochs)
    model = Model(cfg.model, seed=cfg.model_seed)
    result = train(model, dataset["train"], tcfg, dataset.splits.get("dev"))
    meta = {
        "config_hash": cfg.config_hash(),
        "config": {k: v for k, v in cfg.to_dict().items() if k != "paths"},
        "best_epoch": result.best_epoch,
    }
    checkpoint.save(result.model, out.path(cfg.paths.checkpoint), meta)
    trace = args.trace or os.path.join(cfg.paths.out_dir, "loss_trace.tsv")
    rows = [(e, s, *(f"{v:.6f}" for v in vals)) for e, s, *vals in result.trace]
    _write_tsv(out.path(trace), cfg.config_hash(), TRACE_HEADER, rows)
    print(f"checkpoint {cfg.paths.checkpoint} (best epoch {result.best_epoch}), trace {trace}")


def cmd_decode(args, cfg, out):
    model, _, utts = _load_model_and_data(cfg, args.split)
    dcfg, tcfg = cfg.decode, cfg.threshold
    results, summary = _decode_and_score(model, utts, dcfg, tcfg, args.jobs)
    vocab = Vocabulary(model.config.vocab_size)
    h = cfg.config_hash()
    lc, lh = _fmt_lambda(tcfg, "ctc"), _fmt_lambda(tcfg, "hat")
    out_dir = cfg.paths.out_dir
    _write_tsv(
        out.path(os.path.join(out_dir, "transcripts.tsv")), h, ("utt_id", "hypothesis", "reference"),
        [(u.id, " ".join(vocab.to_names(r.transcript)), " ".join(vocab.to_names(u.reference)))
         for u, r in zip(utts, results)],
    )
    _write_tsv(
        out.path(os.path.join(out_dir, "utterances.tsv")), h, UTTERANCE_HEADER,
        [(u.id, " ".join(vocab.to_names(r.transcript)), " ".join(vocab.to_names(u.reference)),
          dcfg.algorithm, tcfg.mode, lc, lh, f"{r.stats.nbp:.2f}", f"{r.stats.jcr:.2f}",
          f"{r.stats.wall_decode_seconds:.6f}", f"{r.stats.audio_seconds:.2f}")
         for u, r in zip(utts, results)],
    )
    row = summary_row(summary, dcfg.algorithm, *_lambdas(tcfg))
    _write_tsv(out.path(os.path.join(out_dir, "summary.tsv")), h, SUMMARY_HEADER, [row])
    print("\t".join(SUMMARY_HEADER))
    print("\t".join(row))


def _lambdas(tcfg):
    return (
        tcfg.lambda_ctc if tcfg.filters_frames else None,
        tcfg.lambda_hat if tcfg.gates_hat else None,
    )


def cmd_bench(args, cfg, out):
    model, _, utts = _load_model_and_data(cfg, args.split)
    utts = utts[: args.limit] if args.limit else utts
    modes = args.modes.split(",") if args.modes else [cfg.threshold.mode]
    rows = []
    print(f"kernel backend: {kernels.BACKEND}")
    for mode in modes:
        tcfg = dataclasses.replace(cfg.threshold, mode=mode)
        for _ in range(args.warmup):
            decode_corpus(model, utts, cfg.decode, tcfg, jobs=1)
        rtfs = []
        for rep in range(args.repeats):
            results = decode_corpus(model, utts, cfg.decode, tcfg, jobs=1)
            wall = sum(r.stats.wall_decode_seconds for r in results)
            audio = sum(r.stats.audio_seconds for r in results)
            rtfs.append(wall / audio)
            rows.append((mode, cfg.decode.algorithm, _fmt_lambda(tcfg, "ctc"), _fmt_lambda(tcfg, "hat"),
                         rep, f"{wall:.6f}", f"{audio:.2f}", f"{wall / audio:.6f}"))
        print(f"{mode:>5}  RTF mean {sum(rtfs) / len(rtfs):.5f}  min {min(rtfs):.5f}  ({args.repeats} runs)")
    target = args.out or os.path.join(cfg.paths.out_dir, "bench.tsv")
    _write_tsv(out.path(target), cfg.config_hash(), BENCH_HEADER, rows)


def sweep_points(kind, grid, lambda_ctc=None, lambda_hat=None):
    """(mode, lambda_ctc, lambda_hat) triples; a fixed value pins that axis."""
    if kind == "ctc":
        return [("ctc", lam, None) for lam in grid]
    if kind == "hat":
        return [("hat", None, lam) for lam in grid]
    ctc_axis = [lambda_ctc] if lambda_ctc is not None else list(grid)
    hat_axis = [lambda_hat] if lambda_hat is not None else list(grid)
    return [("dual", c, h) for c in ctc_axis for h in hat_axis]


def cmd_sweep(args, cfg, out):
    model, _, utts = _load_model_and_data(cfg, args.split)
    grid = [float(v) for v in args.grid.split(",")] if args.grid else [float(v) for v in LAMBDA_GRID]
    rows = []
    for mode, lc, lh in sweep_points(args.sweep, grid, args.fix_lambda_ctc, args.fix_lambda_hat):
        tcfg = dataclasses.replace(
            cfg.threshold, mode=mode,
            lambda_ctc=cfg.threshold.lambda_ctc if lc is None else lc,
            lambda_hat=cfg.threshold.lambda_hat if lh is None else lh,
        )
        _, s = _decode_and_score(model, utts, cfg.decode, tcfg, args.jobs)
        rows.append((mode, "-" if lc is None else f"{lc:g}", "-" if lh is None else f"{lh:g}",
                     f"{s.wer:.2f}", f"{s.nbp:.2f}", f"{s.jcr:.2f}", f"{s.rtf:.5f}",
                     s.label_head_calls, s.blank_head_calls))
        log.info("%s", "\t".join(str(v) for v in rows[-1]))
    target = args.out or os.path.join(cfg.paths.out_dir, f"curve_{args.sweep}.tsv")
    _write_tsv(out.path(target), cfg.config_hash(), CURVE_HEADER, rows)
    print(f"{len(rows)} rows -> {target}")


# -- argument parsing ---------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment file (defaults apply when omitted)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging with tracebacks")

    def decoding(p):
        p.add_argument("--checkpoint")
        p.add_argument("--data")
        p.add_argument("--out-dir")
        p.add_argument("--split", default="test")
        p.add_argument("--algorithm", choices=ALGORITHMS)
        p.add_argument("--beam", type=int)
        p.add_argument("--mode", choices=THRESHOLD_MODES)
        p.add_argument("--lambda-ctc", type=float)
        p.add_argument("--lambda-hat", type=float)
        p.add_argument("--blank-source", choices=BLANK_SOURCES)

    parser = argparse.ArgumentParser(prog="trlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate the synthetic corpus")
    p.add_argument("--data", help="output dataset file")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train a model, write checkpoint and loss trace")
    p.add_argument("--data")
    p.add_argument("--checkpoint", help="output checkpoint file")
    p.add_argument("--out-dir")
    p.add_argument("--trace", help="loss trace file (default: <out_dir>/loss_trace.tsv)")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", parents=[common], help="decode a split, write transcripts and summary")
    decoding(p)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench", parents=[common], help="time decoding (single job, warm-up excluded)")
    decoding(p)
    p.add_argument("--modes", help="comma-separated threshold modes to compare")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--limit", type=int, help="only the first N utterances")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", parents=[common], help="threshold sweep, write a curve file")
    decoding(p)
    p.add_argument("--sweep", choices=("ctc", "hat", "dual"), required=True)
    p.add_argument("--grid", help="comma-separated lambda values (default 0,2,...,16)")
    p.add_argument("--fix-lambda-ctc", type=float, help="dual only: hold lambda_ctc fixed")
    p.add_argument("--fix-lambda-hat", type=float, help="dual only: hold lambda_hat fixed")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)
    out = _Outputs()
    try:
        cfg = _resolve(args)
        args.func(args, cfg, out)
        out.commit()
    except Exception as exc:  # noqa: BLE001 - every failure becomes a clean non-zero exit
        out.discard()
        log.debug("traceback", exc_info=True)
        print(f"trlab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
