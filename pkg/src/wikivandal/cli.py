"""Command-line entry point: ``wikivandal <subcommand> [flags]``.

Exit status is 0 on success, 1 on a usage error and 2 on a data error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import VandalError
from .features import FAMILIES
from .learner import (
    DEFAULT_CANDIDATES,
    TrainConfig,
    fit_stack,
    grid_search_c,
    load_model,
    predict_matrix,
    save_model,
    train_l1svm,
)
from .metrics import DEFAULT_SPLIT, SplitSpec, evaluate, fraction_split_spec, roc_auc, time_split
from .pipeline import FAMILY_C, FAMILY_MODEL_NAMES, family_datasets, hashed_dataset, labeled, latest_timestamp
from .serve import DEFAULT_WINDOW, serve, stream_client
from .synth import SynthConfig, generate, read_corpus, validate
from .vectorizer import DEFAULT_BITS, MAX_BITS, MIN_BITS

log = logging.getLogger("wikivandal")

USAGE_ERROR = 1
DATA_ERROR = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _bits(text: str) -> int:
    value = int(text)
    if not MIN_BITS <= value <= MAX_BITS:
        raise argparse.ArgumentTypeError(f"bits must be in [{MIN_BITS}, {MAX_BITS}]")
    return value


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _candidates(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad candidate list {text!r}") from None
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("candidates must be a non-empty list of positive numbers")
    return values


def _fraction(text: str):
    try:
        value = float(text)
    except ValueError:
        return None
    return value if 0 < value < 1 else None


def _split(args, records) -> SplitSpec:
    """Dates, or cumulative fractions of the labeled revisions (``0.8``/``0.9``)."""
    a, b = _fraction(args.train_end), _fraction(args.valid_end)
    try:
        if a is not None and b is not None:
            if not a < b:
                raise ValueError("--train-end must be below --valid-end")
            return fraction_split_spec([r.timestamp for r in records], a, b - a)
        if a is not None or b is not None:
            raise ValueError("--train-end and --valid-end must both be dates or both be fractions")
        return SplitSpec(args.train_end, args.valid_end)
    except ValueError as exc:
        raise UsageError(f"wikivandal: {exc}") from None


def _train_config(args, c: float) -> TrainConfig:
    return TrainConfig(c=c, max_epochs=args.max_epochs, tol=args.tol, seed=args.seed, solver=args.solver)


def _slices(args):
    records = labeled(read_corpus(args.corpus))
    train, valid, test = time_split(records, _split(args, records))
    log.info("corpus %s: %d train / %d valid / %d test labeled revisions", args.corpus, len(train), len(valid), len(test))
    return train, valid, test


def _out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="")


# --------------------------------------------------------------------------


def cmd_gen(args) -> int:
    config = SynthConfig(
        n_revisions=args.n,
        positive_rate=args.positive_rate,
        signal_strength=args.signal,
        anon_rate=args.anon_rate,
        seed=args.seed,
        **({"start": args.start} if args.start else {}),
        **({"end": args.end} if args.end else {}),
    )
    generate(config, args.out)
    summary = validate(args.out)
    print(" ".join(f"{k}={v}" for k, v in summary.items()))
    return 0


def cmd_train(args) -> int:
    train, _, _ = _slices(args)
    data = hashed_dataset(train, args.bits)
    model = train_l1svm(data, _train_config(args, args.c), trained_at=latest_timestamp(train))
    save_model(model, args.model)
    print(f"trained on {len(data)} revisions ({data.n_positive} positive): "
          f"{model.nnz} non-zero weights, {len(model.history) - 1} iterations -> {args.model}")
    return 0


def cmd_gridsearch(args) -> int:
    train, valid, _ = _slices(args)
    dtrain, dvalid = hashed_dataset(train, args.bits), hashed_dataset(valid, args.bits)
    best_c, rows = grid_search_c(dtrain, dvalid, args.candidates, _train_config(args, 1.0), workers=args.workers)
    with _out(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["c", "auc", "nonzero_weights"])
        for row in rows:
            writer.writerow([repr(row.c), "" if row.auc is None else f"{row.auc:.6f}", row.nnz])
    # wall times vary run to run, so they stay out of the report artifact
    for row in rows:
        auc = "failed" if row.auc is None else f"{row.auc:.4f}"
        print(f"C={row.c:<8g} time={row.wall_time:8.2f}s  AUC={auc}", file=sys.stderr)
    print(f"best C={best_c:g}", file=sys.stderr)
    if args.model:
        model = train_l1svm(dtrain, _train_config(args, best_c), trained_at=latest_timestamp(train))
        save_model(model, args.model)
    return 0


def cmd_eval(args) -> int:
    train, valid, test = _slices(args)
    records = {"train": train, "valid": valid, "test": test, "all": train + valid + test}[args.slice]
    model = load_model(args.model)
    bits = model.bits if model.bits is not None else args.bits
    data = hashed_dataset(records, bits)
    report = evaluate(predict_matrix(model, data.X), data.y, args.threshold)
    print(report.to_text())
    if args.out:
        with _out(args.out) as fh:
            fh.write(report.csv_header() + "\n" + report.to_csv_line() + "\n")
    return 0


def cmd_stack(args) -> int:
    train, _, test = _slices(args)
    configs = [_train_config(args, FAMILY_C[f]) for f in FAMILIES]
    ensemble, _ = fit_stack(family_datasets(train, args.bits), configs, args.l2, seed=args.seed,
                            trained_at=latest_timestamp(train))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for family, model in zip(FAMILIES, ensemble.base):
        save_model(model, out / f"{FAMILY_MODEL_NAMES[family]}.bin")
    save_model(ensemble.stacker, out / "stacker.bin")
    test_sets = family_datasets(test, args.bits)
    y = test_sets[0].y
    rows = [(FAMILY_MODEL_NAMES[f], roc_auc(predict_matrix(m, d.X), y))
            for f, m, d in zip(FAMILIES, ensemble.base, test_sets)]
    rows.append(("stacked", roc_auc(ensemble.score([d.X for d in test_sets]), y)))
    with open(out / "report.csv", "w", newline="") as fh:
        fh.write("model,test_auc\n" + "".join(f"{name},{auc:.6f}\n" for name, auc in rows))
    for name, auc in rows:
        print(f"{name:<22} {auc:.4f}")
    return 0


def cmd_serve(args) -> int:
    model = load_model(args.model)
    bits = args.bits if args.bits is not None else model.bits
    if bits is None:
        raise UsageError("model has no hashing bits; pass --bits")
    serve(model, bits, args.listen, ready=lambda addr: print(f"listening on {addr[0]}:{addr[1]}", flush=True))
    return 0


def cmd_score_stream(args) -> int:
    records = read_corpus(args.corpus)
    results = stream_client(args.connect, records, window=args.window)
    with _out(args.out) as fh:
        for line in results:
            fh.write(f"{line}\n")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wikivandal", description="Vandalism detection for Wikidata-style revision dumps.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    def corpus_flags(p, split=True):
        p.add_argument("--corpus", required=True, help="directory with dump.xml, meta.csv, labels.csv")
        p.add_argument("--bits", type=_bits, default=DEFAULT_BITS)
        p.add_argument("--seed", type=int, default=0)
        if split:
            p.add_argument("--train-end", default=DEFAULT_SPLIT.train_end.date().isoformat())
            p.add_argument("--valid-end", default=DEFAULT_SPLIT.valid_end.date().isoformat())

    def solver_flags(p):
        p.add_argument("--solver", choices=["owlqn", "cd"], default="owlqn")
        p.add_argument("--max-epochs", type=int, default=TrainConfig.max_epochs)
        p.add_argument("--tol", type=_positive, default=TrainConfig.tol)

    p = add("gen", cmd_gen, "generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--positive-rate", type=float, default=0.0025)
    p.add_argument("--signal", type=float, default=0.9)
    p.add_argument("--anon-rate", type=float, default=0.1)
    p.add_argument("--start")
    p.add_argument("--end")

    p = add("train", cmd_train, "train the combined hashed L1 SVM on the training slice")
    corpus_flags(p)
    solver_flags(p)
    p.add_argument("--c", type=_positive, default=0.5)
    p.add_argument("--model", required=True)

    p = add("gridsearch", cmd_gridsearch, "pick C by validation AUC")
    corpus_flags(p)
    solver_flags(p)
    p.add_argument("--candidates", type=_candidates, default=list(DEFAULT_CANDIDATES))
    p.add_argument("--out", help="CSV report path (default: standard output)")
    p.add_argument("--model", help="also save the model trained with the best C")
    p.add_argument("--workers", type=int, default=1)

    p = add("eval", cmd_eval, "score a labeled slice with a model and report metrics")
    corpus_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--slice", choices=["train", "valid", "test", "all"], default="test")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--out", help="also write the report as CSV here")

    p = add("stack", cmd_stack, "train per-family models and a logistic stacker")
    corpus_flags(p)
    solver_flags(p)
    p.add_argument("--l2", type=_positive, default=1.0)
    p.add_argument("--out", required=True, help="directory for the models and report")

    p = add("serve", cmd_serve, "serve scores over TCP")
    p.add_argument("--model", required=True)
    p.add_argument("--listen", default="127.0.0.1:8765")
    p.add_argument("--bits", type=_bits)

    p = add("score-stream", cmd_score_stream, "stream a corpus to a running server")
    p.add_argument("--corpus", required=True)
    p.add_argument("--connect", default="127.0.0.1:8765")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--out", help="output path (default: standard output)")
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("wikivandal: a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(levelname)s %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return USAGE_ERROR
    except (VandalError, OSError, ValueError) as exc:
        print(f"wikivandal: error: {exc}", file=sys.stderr)
        return DATA_ERROR


def main() -> None:
    sys.exit(run())
