"""End-to-end orchestration: anchors, per-task aligners, one shared decoder.

The adaptation core is deliberately file-free and takes label lookups through
a plain mapping keyed by (row id, task name). Label access is lazy: the only
image ids ever probed are the selected anchors, which makes the text-only
training discipline observable from the outside (tests pass a logging map).

Every stage failure is re-raised as StageError so callers see which stage
broke. Artifact filenames under the output directory are fixed:
anchors.txt, aligner.<task>.aln1, decoder.dec1, vocab.txt, gap.csv,
predictions.<task>.jsonl, manifest.json.
"""

from __future__ import annotations

import hashlib
import json
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .aligner import (
    AlignerParams,
    AlignTrainConfig,
    align_forward,
    save_aligner,
    train_aligner,
)
from .decoder import (
    DecoderParams,
    DecoderTrainConfig,
    Vocabulary,
    build_vocab,
    generate_batch,
    save_decoder,
    save_vocab,
    train_decoder,
)
from .embedding_io import EmbeddingSet, l2_normalize, read_embeddings, read_labels
from .errors import (
    DuplicateId,
    IoFailure,
    MalformedLine,
    MissingLabel,
    StageError,
    UnknownTask,
)
from .gap import GapReport, modality_gap, write_gap_csv
from .metrics import map_text_to_label
from .sampler import FPS, KMEANS, AnchorSet, fps, select_anchors_kmeans, write_anchors
from .textproc import normalize, normalize_for_matching


@dataclass(frozen=True)
class TaskSpec:
    """A named task with an optional closed label set and a trained aligner."""

    name: str
    label_set: tuple[str, ...] | None = None
    aligner: AlignerParams | None = None

    def __post_init__(self):
        if self.label_set is not None:
            if not self.label_set:
                raise ValueError(f"task {self.name!r}: empty label set")
            if len(set(self.label_set)) != len(self.label_set):
                raise ValueError(f"task {self.name!r}: duplicate labels")


@dataclass(frozen=True)
class TaskConfig:
    """Task entry in a run config.

    label_set None + map_labels True derives the closed set from the task's
    own text corpus; map_labels False leaves generations unmapped (captioning).
    """

    name: str
    label_set: tuple[str, ...] | None = None
    map_labels: bool = True


@dataclass(frozen=True)
class RunConfig:
    images: str
    texts: str
    labels: str
    out_dir: str
    tasks: tuple[TaskConfig, ...]
    method: str = KMEANS
    k: int = 100
    seed: int = 0
    normalize: bool = True
    align: AlignTrainConfig = field(default_factory=AlignTrainConfig)
    decode: DecoderTrainConfig = field(default_factory=DecoderTrainConfig)

    def __post_init__(self):
        if not self.tasks:
            raise ValueError("at least one task is required")
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ValueError("task names must be unique")
        if self.method not in (KMEANS, FPS):
            raise ValueError(f"unknown sampling method {self.method!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class AdaptationResult:
    anchors: AnchorSet
    aligners: dict[str, AlignerParams]
    align_history: dict[str, list[float]]
    decoder: DecoderParams
    vocab: Vocabulary
    decoder_history: list[float]
    gaps: dict[str, GapReport]
    label_sets: dict[str, tuple[str, ...] | None]


@dataclass(frozen=True)
class Prediction:
    id: str
    text: str
    mapped_label: str | None


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e


def _wrap_rows(rows: np.ndarray) -> EmbeddingSet:
    data = np.ascontiguousarray(rows, dtype=np.float32)
    return EmbeddingSet(data, tuple(f"r{i:06d}" for i in range(data.shape[0])))


def anchor_pairs_for_task(
    images: EmbeddingSet,
    texts: EmbeddingSet,
    labels: Mapping[tuple[str, str], str],
    anchor_indices,
    task_name: str,
) -> tuple[np.ndarray, np.ndarray]:
    """Pair each anchor image row with the first text row sharing its label.

    Only anchor image ids are looked up in labels; a missing anchor label or
    a label string with no text row fails fast with MissingLabel.
    """
    row_by_text: dict[str, int] = {}
    for row, tid in enumerate(texts.ids):
        lab = labels.get((tid, task_name))
        if lab is not None:
            key = normalize(lab)
            if key not in row_by_text:
                row_by_text[key] = row
    img_rows: list[int] = []
    txt_rows: list[int] = []
    for idx in anchor_indices:
        img_id = images.ids[idx]
        lab = labels.get((img_id, task_name))
        if lab is None:
            raise MissingLabel(f"anchor {img_id!r} has no label for task {task_name!r}")
        row = row_by_text.get(normalize(lab))
        if row is None:
            raise MissingLabel(f"no text row carries label {lab!r} for task {task_name!r}")
        img_rows.append(idx)
        txt_rows.append(row)
    x = images.data[np.asarray(img_rows)].astype(np.float64)
    y = texts.data[np.asarray(txt_rows)].astype(np.float64)
    return x, y


def task_corpus(
    texts: EmbeddingSet,
    labels: Mapping[tuple[str, str], str],
    task_name: str,
) -> tuple[list[np.ndarray], list[str], tuple[str, ...]]:
    """Text rows labeled for a task: embedding rows, label texts, and the
    derived label inventory (first spelling wins, sorted)."""
    rows: list[np.ndarray] = []
    row_texts: list[str] = []
    derived: dict[str, str] = {}
    for row, tid in enumerate(texts.ids):
        lab = labels.get((tid, task_name))
        if lab is None:
            continue
        rows.append(texts.data[row])
        row_texts.append(lab)
        derived.setdefault(normalize_for_matching(lab), lab)
    return rows, row_texts, tuple(sorted(derived.values()))


def run_adaptation_data(
    images: EmbeddingSet,
    texts: EmbeddingSet,
    labels: Mapping[tuple[str, str], str],
    cfg: RunConfig,
) -> AdaptationResult:
    """In-memory adaptation; writes nothing. labels maps (row id, task) -> text."""
    with _stage("normalize"):
        if cfg.normalize:
            images = l2_normalize(images)
            texts = l2_normalize(texts)

    with _stage("sample"):
        if cfg.method == FPS:
            anchors = fps(images, cfg.k)
        else:
            anchors = select_anchors_kmeans(images, cfg.k, cfg.seed)

    aligners: dict[str, AlignerParams] = {}
    align_history: dict[str, list[float]] = {}
    anchor_pairs: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    with _stage("align"):
        for task in cfg.tasks:
            x, y = anchor_pairs_for_task(images, texts, labels, anchors.indices, task.name)
            params, history = train_aligner(x, y, cfg.align)
            aligners[task.name] = params
            align_history[task.name] = history
            anchor_pairs[task.name] = (x, y)

    with _stage("decode"):
        corpus_rows: list[np.ndarray] = []
        corpus_texts: list[str] = []
        label_sets: dict[str, tuple[str, ...] | None] = {}
        for task in cfg.tasks:
            rows, row_texts, derived = task_corpus(texts, labels, task.name)
            corpus_rows.extend(rows)
            corpus_texts.extend(row_texts)
            if task.label_set is not None:
                label_sets[task.name] = task.label_set
            elif task.map_labels:
                label_sets[task.name] = derived
            else:
                label_sets[task.name] = None
        vocab = build_vocab(corpus_texts)
        decoder, decoder_history = train_decoder(
            np.asarray(corpus_rows, dtype=np.float64), corpus_texts, vocab, cfg.decode
        )

    gaps: dict[str, GapReport] = {}
    with _stage("gap"):
        for task in cfg.tasks:
            x, y = anchor_pairs[task.name]
            aligned = align_forward(aligners[task.name], x)
            gaps[f"{task.name}.before"] = modality_gap(
                _wrap_rows(x), _wrap_rows(y), subset="anchors"
            )
            gaps[f"{task.name}.after"] = modality_gap(
                _wrap_rows(aligned), _wrap_rows(y), subset="anchors"
            )

    return AdaptationResult(
        anchors=anchors,
        aligners=aligners,
        align_history=align_history,
        decoder=decoder,
        vocab=vocab,
        decoder_history=decoder_history,
        gaps=gaps,
        label_sets=label_sets,
    )


def build_label_map(records) -> dict[tuple[str, str], str]:
    """Index label records by (id, task); at most one record per key."""
    out: dict[tuple[str, str], str] = {}
    for r in records:
        key = (r.id, r.task)
        if key in out:
            raise DuplicateId(f"two label records for id {r.id!r}, task {r.task!r}")
        out[key] = r.text
    return out


def run_adaptation(cfg: RunConfig) -> AdaptationResult:
    """File-level adaptation: load, adapt, persist artifacts and manifest."""
    with _stage("load"):
        images = read_embeddings(cfg.images)
        texts = read_embeddings(cfg.texts)
        labels = build_label_map(read_labels(cfg.labels))
    result = run_adaptation_data(images, texts, labels, cfg)
    with _stage("write"):
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_anchors(result.anchors, out / "anchors.txt")
        for name in sorted(result.aligners):
            save_aligner(result.aligners[name], out / f"aligner.{name}.aln1")
        save_decoder(result.decoder, out / "decoder.dec1")
        save_vocab(result.vocab, out / "vocab.txt")
        write_gap_csv(result.gaps, out / "gap.csv")
        write_manifest(cfg, out)
    return result


def infer(
    images: EmbeddingSet,
    aligner: AlignerParams,
    decoder: DecoderParams,
    vocab: Vocabulary,
    max_len: int,
) -> list[tuple[str, str]]:
    """Aligned greedy decoding per row; id order preserved."""
    if images.count == 0:
        return []
    aligned = align_forward(aligner, images.data.astype(np.float64))
    outputs = generate_batch(decoder, vocab, aligned, max_len)
    return list(zip(images.ids, outputs))


def infer_task(
    images: EmbeddingSet,
    task: TaskSpec,
    decoder: DecoderParams,
    vocab: Vocabulary,
    max_len: int,
) -> list[Prediction]:
    if task.aligner is None:
        raise UnknownTask(f"task {task.name!r} has no trained aligner")
    label_set = list(task.label_set) if task.label_set is not None else None
    preds = []
    for row_id, text in infer(images, task.aligner, decoder, vocab, max_len):
        mapped = map_text_to_label(text, label_set) if label_set else None
        preds.append(Prediction(id=row_id, text=text, mapped_label=mapped))
    return preds


def write_predictions(preds: list[Prediction], path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for p in preds:
                fh.write(
                    json.dumps({"id": p.id, "text": p.text, "mapped_label": p.mapped_label})
                    + "\n"
                )
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def read_predictions(path) -> list[Prediction]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    preds = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedLine(line_no, str(e)) from e
        if set(obj) != {"id", "text", "mapped_label"}:
            raise MalformedLine(line_no, "expected keys id, text, mapped_label")
        preds.append(Prediction(id=obj["id"], text=obj["text"], mapped_label=obj["mapped_label"]))
    return preds


def run(cfg: RunConfig) -> AdaptationResult:
    """Adaptation plus per-task inference over the full image set."""
    result = run_adaptation(cfg)
    with _stage("infer"):
        images = read_embeddings(cfg.images)
        if cfg.normalize:
            images = l2_normalize(images)
        out = Path(cfg.out_dir)
        for task in cfg.tasks:
            spec = TaskSpec(
                name=task.name,
                label_set=result.label_sets[task.name],
                aligner=result.aligners[task.name],
            )
            preds = infer_task(images, spec, result.decoder, result.vocab, cfg.decode.max_len)
            write_predictions(preds, out / f"predictions.{task.name}.jsonl")
        write_manifest(cfg, out)
    return result


def canonical_config(cfg: RunConfig) -> dict:
    """Plain-dict view of a config; out_dir excluded so runs into different
    directories hash identically."""
    return {
        "images": cfg.images,
        "texts": cfg.texts,
        "labels": cfg.labels,
        "normalize": cfg.normalize,
        "sampling": {"method": cfg.method, "k": cfg.k, "seed": cfg.seed},
        "aligner": asdict(cfg.align),
        "decoder": asdict(cfg.decode),
        "tasks": [
            {
                "name": t.name,
                "label_set": list(t.label_set) if t.label_set is not None else None,
                "map_labels": t.map_labels,
            }
            for t in cfg.tasks
        ],
    }


def write_manifest(cfg: RunConfig, out_dir) -> Path:
    out = Path(out_dir)
    conf = canonical_config(cfg)
    conf_bytes = json.dumps(conf, sort_keys=True).encode("utf-8")
    artifacts = {}
    for p in sorted(out.iterdir()):
        if p.name == "manifest.json" or p.is_dir():
            continue
        artifacts[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "config": conf,
        "config_sha256": hashlib.sha256(conf_bytes).hexdigest(),
        "artifacts": artifacts,
    }
    path = out / "manifest.json"
    try:
        path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e
    return path


_TOP_KEYS = {
    "images",
    "texts",
    "labels",
    "out_dir",
    "tasks",
    "sampling",
    "normalize",
    "aligner",
    "decoder",
}
_SAMPLING_KEYS = {"method", "k", "seed"}
_TASK_KEYS = {"name", "label_set", "map_labels"}


def _sub_config(cls, obj: dict, section: str):
    allowed = set(cls.__dataclass_fields__)
    unknown = set(obj) - allowed
    if unknown:
        raise ValueError(f"unknown {section} keys: {sorted(unknown)}")
    return cls(**obj)


def load_run_config(path, out_dir: str | None = None) -> RunConfig:
    """Parse a JSON run config; unknown keys are rejected.

    out_dir may come from the file or be supplied by the caller (CLI --out);
    the caller's value wins.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read config {path}: {e}") from e
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as e:
        raise MalformedLine(e.lineno, f"config is not valid JSON: {e.msg}") from e
    if not isinstance(obj, dict):
        raise ValueError("config root must be a JSON object")
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key in ("images", "texts", "labels"):
        if key not in obj:
            raise ValueError(f"config is missing required key {key!r}")
    if "tasks" not in obj or not obj["tasks"]:
        raise ValueError("config must name at least one task")

    sampling = obj.get("sampling", {})
    unknown = set(sampling) - _SAMPLING_KEYS
    if unknown:
        raise ValueError(f"unknown sampling keys: {sorted(unknown)}")
    method = str(sampling.get("method", "kmeans")).upper()

    tasks = []
    for entry in obj["tasks"]:
        if isinstance(entry, str):
            tasks.append(TaskConfig(name=entry))
            continue
        if not isinstance(entry, dict):
            raise ValueError("each task must be a name or an object")
        unknown = set(entry) - _TASK_KEYS
        if unknown:
            raise ValueError(f"unknown task keys: {sorted(unknown)}")
        label_set = entry.get("label_set")
        tasks.append(
            TaskConfig(
                name=entry["name"],
                label_set=tuple(label_set) if label_set is not None else None,
                map_labels=bool(entry.get("map_labels", True)),
            )
        )

    resolved_out = out_dir if out_dir is not None else obj.get("out_dir")
    if resolved_out is None:
        raise ValueError("config needs out_dir (or pass --out)")
    return RunConfig(
        images=obj["images"],
        texts=obj["texts"],
        labels=obj["labels"],
        out_dir=str(resolved_out),
        tasks=tuple(tasks),
        method=method,
        k=int(sampling.get("k", 100)),
        seed=int(sampling.get("seed", 0)),
        normalize=bool(obj.get("normalize", True)),
        align=_sub_config(AlignTrainConfig, obj.get("aligner", {}), "aligner"),
        decode=_sub_config(DecoderTrainConfig, obj.get("decoder", {}), "decoder"),
    )
