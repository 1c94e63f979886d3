"""Command-line front door: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error (unknown command/flag, bad invocation),
2 data error (any toolkit error; the message names the failing stage where
applicable). Each successful command prints exactly one key=value summary
line to stdout.

FTDA_THREADS caps BLAS parallelism; it is applied to the usual thread-count
environment variables before numpy is imported, which is why all numeric
imports in this module live inside the command handlers.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import ToolkitError, UnknownTask

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _apply_thread_cap() -> None:
    cap = os.environ.get("FTDA_THREADS")
    if not cap:
        return
    for var in _THREAD_VARS:
        os.environ.setdefault(var, cap)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this toolkit reserves 2 for data
    errors, so usage failures are remapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _summary(**kv) -> None:
    print(" ".join(f"{k}={v}" for k, v in kv.items()))


def _norm_flag(value: str) -> bool:
    return value == "on"


def _label_set_from_records(records, task: str) -> list[str]:
    """Unique label texts for a task; first spelling wins, sorted output."""
    from .textproc import normalize_for_matching

    derived: dict[str, str] = {}
    for r in records:
        if r.task == task:
            derived.setdefault(normalize_for_matching(r.text), r.text)
    return sorted(derived.values())


def _cmd_synth(args) -> int:
    from . import synth

    spec = synth.SynthSpec(
        n_classes=args.classes,
        n_texts=args.texts,
        n_images=args.images,
        d_latent=args.d_latent,
        d_img=args.d_img,
        d_txt=args.d_txt,
        noise_sigma=args.noise,
        gap_offset=args.gap_offset,
        seed=args.seed,
        task=args.task,
    )
    if args.multitask:
        data = synth.make_multitask(spec, n_classes_b=args.classes_b)
    else:
        data = synth.make(spec)
    paths = synth.save(data, args.out)
    _summary(
        images=paths["images"],
        texts=paths["texts"],
        labels=paths["labels"],
        truth=paths["truth"],
        classes=len(data.names),
    )
    return 0


def _cmd_sample(args) -> int:
    from .embedding_io import l2_normalize, read_embeddings
    from .sampler import FPS, KMEANS, fps, select_anchors_kmeans, write_anchors

    emb = read_embeddings(args.inp)
    if _norm_flag(args.normalize):
        emb = l2_normalize(emb)
    method = args.method.upper()
    if method == FPS:
        anchors = fps(emb, args.k)
    else:
        anchors = select_anchors_kmeans(emb, args.k, args.seed)
    write_anchors(anchors, args.out)
    _summary(method=method, k=anchors.k, seed=anchors.seed, out=args.out)
    return 0


def _cmd_gap(args) -> int:
    from .embedding_io import l2_normalize, read_embeddings
    from .gap import modality_gap, project_2d, write_gap_csv

    images = read_embeddings(args.images)
    texts = read_embeddings(args.texts)
    if _norm_flag(args.normalize):
        images = l2_normalize(images)
        texts = l2_normalize(texts)
    report = modality_gap(images, texts)
    projections = None
    if args.points:
        pts = project_2d([images, texts])
        projections = {"images": (images, pts[0]), "texts": (texts, pts[1])}
    write_gap_csv({"all": report}, args.out, projections=projections)
    _summary(
        centroid_gap=repr(report.centroid_gap),
        mean_pair_gap=repr(report.mean_pair_gap),
        n_pairs=report.n_pairs,
        out=args.out,
    )
    return 0


def _cmd_train_align(args) -> int:
    from .aligner import AlignTrainConfig, save_aligner, train_aligner, write_loss_csv
    from .embedding_io import l2_normalize, read_embeddings, read_labels
    from .pipeline import anchor_pairs_for_task, build_label_map
    from .sampler import read_anchors

    images = read_embeddings(args.images)
    texts = read_embeddings(args.texts)
    if _norm_flag(args.normalize):
        images = l2_normalize(images)
        texts = l2_normalize(texts)
    labels = build_label_map(read_labels(args.labels))
    anchors = read_anchors(args.anchors)
    x, y = anchor_pairs_for_task(images, texts, labels, anchors.indices, args.task)
    cfg = AlignTrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        hidden=args.hidden,
        init_seed=args.seed,
        shuffle_seed=args.seed,
    )
    params, history = train_aligner(x, y, cfg)
    save_aligner(params, args.out)
    write_loss_csv(history, str(args.out) + ".loss.csv")
    _summary(
        task=args.task,
        pairs=x.shape[0],
        epochs=cfg.epochs,
        final_loss=repr(history[-1]),
        out=args.out,
    )
    return 0


def _cmd_train_decoder(args) -> int:
    import numpy as np

    from .decoder import DecoderTrainConfig, build_vocab, save_decoder, save_vocab, train_decoder
    from .embedding_io import l2_normalize, read_embeddings, read_labels
    from .pipeline import build_label_map, task_corpus

    texts = read_embeddings(args.texts)
    if _norm_flag(args.normalize):
        texts = l2_normalize(texts)
    labels = build_label_map(read_labels(args.labels))
    rows: list = []
    corpus: list[str] = []
    for task in args.task:
        t_rows, t_texts, _ = task_corpus(texts, labels, task)
        rows.extend(t_rows)
        corpus.extend(t_texts)
    vocab = build_vocab(corpus)
    cfg = DecoderTrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch,
        max_len=args.max_len,
        init_seed=args.seed,
        shuffle_seed=args.seed,
    )
    params, history = train_decoder(np.asarray(rows, dtype=np.float64), corpus, vocab, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_decoder(params, out / "decoder.dec1")
    save_vocab(vocab, out / "vocab.txt")
    _summary(
        tasks=",".join(args.task),
        rows=len(corpus),
        vocab=vocab.size,
        epochs=cfg.epochs,
        final_loss=repr(history[-1]),
        out=out,
    )
    return 0


def _cmd_infer(args) -> int:
    from .aligner import load_aligner
    from .decoder import load_decoder, load_vocab
    from .embedding_io import l2_normalize, read_embeddings, read_labels
    from .errors import IoFailure
    from .pipeline import TaskSpec, infer_task, write_predictions

    images = read_embeddings(args.images)
    if _norm_flag(args.normalize):
        images = l2_normalize(images)
    try:
        aligner = load_aligner(args.aligner)
    except IoFailure as e:
        if args.task:
            raise UnknownTask(f"no aligner for task {args.task!r}: {e}") from e
        raise
    decoder = load_decoder(args.decoder)
    vocab = load_vocab(args.vocab)
    label_set = None
    if args.labels:
        if not args.task:
            raise UnknownTask("--labels requires --task to derive a label set")
        label_set = _label_set_from_records(read_labels(args.labels), args.task)
        if not label_set:
            raise UnknownTask(f"no label records for task {args.task!r}")
    task = TaskSpec(
        name=args.task or "default",
        label_set=tuple(label_set) if label_set else None,
        aligner=aligner,
    )
    preds = infer_task(images, task, decoder, vocab, args.max_len)
    write_predictions(preds, args.out)
    _summary(task=task.name, rows=len(preds), out=args.out)
    return 0


def _cmd_eval(args) -> int:
    from .embedding_io import read_labels
    from .metrics import bleu, classification_report, map_text_to_label, write_report
    from .pipeline import read_predictions

    preds = read_predictions(args.predictions)
    truth = [r for r in read_labels(args.truth) if r.task == args.task]
    gold_by_id = {r.id: r.text for r in truth}
    missing = [p.id for p in preds if p.id not in gold_by_id]
    if missing:
        raise UnknownTask(
            f"{len(missing)} predicted ids have no gold record for task {args.task!r}"
        )
    label_set = _label_set_from_records(truth, args.task)
    pred_labels = []
    gold_labels = []
    hyps = []
    refs = []
    for p in preds:
        gold = gold_by_id[p.id]
        mapped = p.mapped_label
        if mapped is None:
            mapped = map_text_to_label(p.text, label_set)
        pred_labels.append(mapped)
        gold_labels.append(map_text_to_label(gold, label_set))
        hyps.append(p.text)
        refs.append(gold)
    report = classification_report(pred_labels, gold_labels, label_set)
    scores = bleu(hyps, refs, max_n=args.max_n)
    report = type(report)(
        accuracy=report.accuracy,
        macro_precision=report.macro_precision,
        macro_recall=report.macro_recall,
        macro_f1=report.macro_f1,
        per_class=report.per_class,
        unmatched_count=report.unmatched_count,
        bleu=scores,
    )
    if args.out:
        write_report(report, args.out)
    _summary(
        task=args.task,
        n=len(preds),
        accuracy=repr(report.accuracy),
        macro_f1=repr(report.macro_f1),
        **{f"bleu{n}": repr(s) for n, s in scores.items()},
    )
    return 0


def _cmd_run(args) -> int:
    from .pipeline import load_run_config, run

    cfg = load_run_config(args.config, out_dir=args.out)
    result = run(cfg)
    _summary(
        out=cfg.out_dir,
        tasks=",".join(t.name for t in cfg.tasks),
        method=cfg.method,
        k=cfg.k,
        seed=cfg.seed,
        decoder_loss=repr(result.decoder_history[-1]),
    )
    return 0


def _add_normalize(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--normalize",
        choices=("on", "off"),
        default="on",
        help="l2-normalize embedding rows before use (default: on)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ftda", description="Few-shot text-driven adaptation toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic paired-embedding dataset")
    p.add_argument("--classes", type=int, default=10, help="number of classes (default: 10)")
    p.add_argument("--texts", type=int, default=200, help="text rows (default: 200)")
    p.add_argument("--images", type=int, default=200, help="image rows (default: 200)")
    p.add_argument("--d-latent", type=int, default=16, help="latent dim (default: 16)")
    p.add_argument("--d-img", type=int, default=32, help="image embedding dim (default: 32)")
    p.add_argument("--d-txt", type=int, default=32, help="text embedding dim (default: 32)")
    p.add_argument("--noise", type=float, default=0.05, help="noise sigma (default: 0.05)")
    p.add_argument(
        "--gap-offset", type=float, default=1.0, help="cross-space offset norm (default: 1.0)"
    )
    p.add_argument("--task", default="classify", help="task name (default: classify)")
    p.add_argument("--multitask", action="store_true", help="emit a two-task dataset")
    p.add_argument(
        "--classes-b", type=int, default=None, help="second-task classes (default: --classes)"
    )
    p.add_argument("--seed", type=int, required=True, help="RNG seed (required)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("sample", help="select anchor rows from an embedding file")
    p.add_argument("--in", dest="inp", required=True, help="EMB1 input path")
    p.add_argument("--out", required=True, help="anchors output path")
    p.add_argument(
        "--method",
        choices=("kmeans", "fps"),
        default="kmeans",
        help="selection method (default: kmeans)",
    )
    p.add_argument("--k", type=int, required=True, help="number of anchors (required)")
    p.add_argument(
        "--seed", type=int, default=None, help="RNG seed (required for kmeans)"
    )
    _add_normalize(p)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("gap", help="measure the gap between two paired embedding sets")
    p.add_argument("--images", required=True, help="EMB1 path, first set")
    p.add_argument("--texts", required=True, help="EMB1 path, second set (paired rows)")
    p.add_argument("--out", required=True, help="gap CSV output path")
    p.add_argument(
        "--points", action="store_true", help="also write shared-basis 2-D projections"
    )
    _add_normalize(p)
    p.set_defaults(func=_cmd_gap)

    p = sub.add_parser("train-align", help="train an image-to-text aligner on anchor pairs")
    p.add_argument("--images", required=True, help="image EMB1 path")
    p.add_argument("--texts", required=True, help="text EMB1 path")
    p.add_argument("--labels", required=True, help="label JSONL path")
    p.add_argument("--anchors", required=True, help="anchors file from `sample`")
    p.add_argument("--task", required=True, help="task name to pair labels for")
    p.add_argument("--out", required=True, help="aligner output path (.aln1)")
    p.add_argument("--epochs", type=int, default=15, help="training epochs (default: 15)")
    p.add_argument("--lr", type=float, default=0.001, help="learning rate (default: 0.001)")
    p.add_argument("--batch", type=int, default=16, help="batch size (default: 16)")
    p.add_argument("--hidden", type=int, default=128, help="hidden width (default: 128)")
    p.add_argument("--seed", type=int, required=True, help="init/shuffle seed (required)")
    _add_normalize(p)
    p.set_defaults(func=_cmd_train_align)

    p = sub.add_parser("train-decoder", help="train the text decoder on text embeddings only")
    p.add_argument("--texts", required=True, help="text EMB1 path")
    p.add_argument("--labels", required=True, help="label JSONL path")
    p.add_argument(
        "--task",
        action="append",
        required=True,
        help="task name whose texts join the corpus (repeatable)",
    )
    p.add_argument("--out", required=True, help="output directory (decoder.dec1, vocab.txt)")
    p.add_argument("--epochs", type=int, default=10, help="training epochs (default: 10)")
    p.add_argument("--lr", type=float, default=2e-5, help="learning rate (default: 2e-5)")
    p.add_argument("--batch", type=int, default=34, help="batch size (default: 34)")
    p.add_argument("--max-len", type=int, default=16, help="token budget (default: 16)")
    p.add_argument("--seed", type=int, required=True, help="init/shuffle seed (required)")
    _add_normalize(p)
    p.set_defaults(func=_cmd_train_decoder)

    p = sub.add_parser("infer", help="decode aligned image embeddings to text")
    p.add_argument("--images", required=True, help="image EMB1 path")
    p.add_argument("--aligner", required=True, help="aligner .aln1 path")
    p.add_argument("--decoder", required=True, help="decoder .dec1 path")
    p.add_argument("--vocab", required=True, help="vocab.txt path")
    p.add_argument("--out", required=True, help="predictions JSONL output path")
    p.add_argument("--task", default=None, help="task name for the prediction records")
    p.add_argument(
        "--labels", default=None, help="label JSONL; with --task, maps generations to labels"
    )
    p.add_argument("--max-len", type=int, default=16, help="generation budget (default: 16)")
    _add_normalize(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("--predictions", required=True, help="predictions JSONL path")
    p.add_argument("--truth", required=True, help="gold label JSONL path")
    p.add_argument("--task", required=True, help="task name to evaluate")
    p.add_argument("--out", default=None, help="report output path (text + CSV)")
    p.add_argument("--max-n", type=int, default=4, help="highest BLEU order (default: 4)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("run", help="full adaptation + inference from a config file")
    p.add_argument("--config", required=True, help="JSON run config path")
    p.add_argument("--out", default=None, help="output directory (overrides config out_dir)")
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.command == "sample" and args.method == "kmeans" and args.seed is None:
            raise _UsageError("--seed is required with --method kmeans")
        return args.func(args)
    except _UsageError as e:
        print(f"ftda: error: {e}", file=sys.stderr)
        return 1
    except (ToolkitError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


class _UsageError(Exception):
    pass


if __name__ == "__main__":
    sys.exit(main())
