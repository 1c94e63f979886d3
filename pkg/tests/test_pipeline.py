"""Pipeline orchestration tests.

A deliberately small synthetic dataset keeps each full adaptation under a
second while still exercising anchors, per-task aligners, the shared
decoder, gap reporting, artifact writing, and config parsing.
"""

import json

import numpy as np
import pytest

from ftda.aligner import AlignTrainConfig
from ftda.decoder import DecoderTrainConfig
from ftda.embedding_io import EmbeddingSet, read_labels
from ftda.errors import (
    DuplicateId,
    MalformedLine,
    MissingLabel,
    StageError,
    UnknownTask,
)
from ftda.metrics import UNMATCHED
from ftda.pipeline import (
    Prediction,
    RunConfig,
    TaskConfig,
    TaskSpec,
    anchor_pairs_for_task,
    build_label_map,
    canonical_config,
    infer,
    infer_task,
    load_run_config,
    read_predictions,
    run,
    run_adaptation,
    run_adaptation_data,
    task_corpus,
    write_predictions,
)
from ftda.synth import SynthSpec, make, make_multitask, save

FAST_ALIGN = AlignTrainConfig(learning_rate=0.003, epochs=60, batch_size=8)
FAST_DECODE = DecoderTrainConfig(
    epochs=30,
    learning_rate=3e-3,
    batch_size=8,
    max_len=8,
    prefix_len=2,
    model_dim=16,
    n_layers=1,
    n_heads=2,
    ffn_dim=16,
)

SPEC = SynthSpec(
    n_classes=3, n_texts=30, n_images=40, d_latent=4, d_img=8, d_txt=8,
    noise_sigma=0.02, seed=0,
)


def fast_cfg(paths, out_dir, **over) -> RunConfig:
    base = dict(
        images=str(paths["images"]),
        texts=str(paths["texts"]),
        labels=str(paths["labels"]),
        out_dir=str(out_dir),
        tasks=(TaskConfig(name="classify"),),
        method="KMEANS",
        k=6,
        seed=0,
        align=FAST_ALIGN,
        decode=FAST_DECODE,
    )
    base.update(over)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def synth_files(tmp_path_factory):
    data = make(SPEC)
    paths = save(data, tmp_path_factory.mktemp("synth"))
    return paths, data


@pytest.fixture(scope="module")
def finished_run(synth_files, tmp_path_factory):
    paths, data = synth_files
    out = tmp_path_factory.mktemp("run")
    cfg = fast_cfg(paths, out)
    result = run(cfg)
    return cfg, result, out


def test_run_writes_all_artifacts(finished_run):
    _, _, out = finished_run
    names = sorted(p.name for p in out.iterdir())
    assert names == [
        "aligner.classify.aln1",
        "anchors.txt",
        "decoder.dec1",
        "gap.csv",
        "manifest.json",
        "predictions.classify.jsonl",
        "vocab.txt",
    ]


def test_run_result_populated(finished_run):
    cfg, result, _ = finished_run
    assert len(result.anchors.indices) == cfg.k
    assert set(result.aligners) == {"classify"}
    assert len(result.align_history["classify"]) == FAST_ALIGN.epochs
    assert len(result.decoder_history) == FAST_DECODE.epochs
    assert result.label_sets["classify"] is not None
    assert list(result.label_sets["classify"]) == sorted(result.label_sets["classify"])


def test_gap_shrinks_after_alignment(finished_run):
    _, result, _ = finished_run
    before = result.gaps["classify.before"].centroid_gap
    after = result.gaps["classify.after"].centroid_gap
    assert after < before


def test_predictions_cover_every_image(finished_run):
    _, _, out = finished_run
    preds = read_predictions(out / "predictions.classify.jsonl")
    assert [p.id for p in preds] == [f"img{i:06d}" for i in range(SPEC.n_images)]
    for p in preds:
        assert p.mapped_label is not None


def test_manifest_lists_artifacts(finished_run):
    cfg, _, out = finished_run
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) == {"config", "config_sha256", "artifacts"}
    assert "manifest.json" not in manifest["artifacts"]
    assert "predictions.classify.jsonl" in manifest["artifacts"]
    for digest in manifest["artifacts"].values():
        assert len(digest) == 64
    assert manifest["config"]["sampling"]["k"] == cfg.k
    assert "out_dir" not in manifest["config"]


def test_adaptation_deterministic(synth_files):
    paths, data = synth_files
    labels = build_label_map(read_labels(paths["labels"]))
    cfg = fast_cfg(paths, "unused")
    r1 = run_adaptation_data(data.images, data.texts, labels, cfg)
    r2 = run_adaptation_data(data.images, data.texts, labels, cfg)
    assert r1.anchors.indices == r2.anchors.indices
    for t1, t2 in zip(r1.aligners["classify"].tensors(), r2.aligners["classify"].tensors()):
        assert np.array_equal(t1, t2)
    assert r1.decoder_history == r2.decoder_history


def test_two_tasks_share_one_decoder(tmp_path):
    data = make_multitask(
        SynthSpec(
            n_classes=2, n_texts=24, n_images=24, d_latent=3, d_img=8, d_txt=8,
            noise_sigma=0.02, seed=1,
        ),
        n_classes_b=3,
        tasks=("phase", "tool"),
    )
    paths = save(data, tmp_path / "mt")
    cfg = fast_cfg(
        paths, tmp_path / "out",
        tasks=(TaskConfig(name="phase"), TaskConfig(name="tool")),
        k=4,
    )
    result = run_adaptation(cfg)
    assert set(result.aligners) == {"phase", "tool"}
    assert len(result.label_sets["phase"]) == 2
    assert len(result.label_sets["tool"]) == 3
    # one decoder, one vocabulary covering both corpora
    for name in result.label_sets["phase"] + result.label_sets["tool"]:
        for word in name.split():
            assert word in result.vocab.tokens
    files = {p.name for p in (tmp_path / "out").iterdir()}
    assert {"aligner.phase.aln1", "aligner.tool.aln1", "decoder.dec1"} <= files


def test_k_larger_than_rows_fails_in_sample_stage(synth_files):
    paths, data = synth_files
    labels = build_label_map(read_labels(paths["labels"]))
    cfg = fast_cfg(paths, "unused", k=SPEC.n_images + 1)
    with pytest.raises(StageError) as exc:
        run_adaptation_data(data.images, data.texts, labels, cfg)
    assert exc.value.stage == "sample"
    assert "sample" in str(exc.value)


class _LoggingLabels(dict):
    def __init__(self, real):
        super().__init__(real)
        self.probed: set[tuple[str, str]] = set()

    def get(self, key, default=None):
        self.probed.add(key)
        return super().get(key, default)


def test_only_anchor_image_labels_are_read(synth_files):
    paths, data = synth_files
    labels = _LoggingLabels(build_label_map(read_labels(paths["labels"])))
    cfg = fast_cfg(paths, "unused")
    result = run_adaptation_data(data.images, data.texts, labels, cfg)
    probed_images = {i for (i, _) in labels.probed if i.startswith("img")}
    anchor_ids = {data.images.ids[i] for i in result.anchors.indices}
    assert probed_images == anchor_ids


def test_anchor_pairs_first_matching_text_row():
    images = EmbeddingSet(np.eye(2, 4, dtype=np.float32), ("i0", "i1"))
    texts = EmbeddingSet(
        np.arange(12, dtype=np.float32).reshape(4, 3), ("t0", "t1", "t2", "t3")
    )
    labels = {
        ("i0", "job"): "Red Tool",
        ("i1", "job"): "blue tool",
        ("t0", "job"): "blue tool",
        ("t2", "job"): "red tool",
        ("t3", "job"): "red tool",
    }
    x, y = anchor_pairs_for_task(images, texts, labels, [0, 1], "job")
    assert np.array_equal(y[0], texts.data[2].astype(np.float64))
    assert np.array_equal(y[1], texts.data[0].astype(np.float64))
    assert np.array_equal(x, images.data.astype(np.float64))


def test_anchor_pairs_missing_anchor_label():
    images = EmbeddingSet(np.eye(2, 4, dtype=np.float32), ("i0", "i1"))
    texts = EmbeddingSet(np.ones((1, 3), dtype=np.float32), ("t0",))
    labels = {("i0", "job"): "a", ("t0", "job"): "a"}
    with pytest.raises(MissingLabel):
        anchor_pairs_for_task(images, texts, labels, [0, 1], "job")


def test_anchor_pairs_label_without_text_row():
    images = EmbeddingSet(np.eye(1, 4, dtype=np.float32), ("i0",))
    texts = EmbeddingSet(np.ones((1, 3), dtype=np.float32), ("t0",))
    labels = {("i0", "job"): "missing label", ("t0", "job"): "other"}
    with pytest.raises(MissingLabel):
        anchor_pairs_for_task(images, texts, labels, [0], "job")


def test_task_corpus_first_spelling_wins():
    texts = EmbeddingSet(np.ones((3, 2), dtype=np.float32), ("t0", "t1", "t2"))
    labels = {
        ("t0", "job"): "Phase One",
        ("t1", "job"): "phase one!",
        ("t2", "job"): "zed",
    }
    rows, row_texts, derived = task_corpus(texts, labels, "job")
    assert len(rows) == 3
    assert row_texts == ["Phase One", "phase one!", "zed"]
    assert derived == ("Phase One", "zed")


def test_infer_empty_images(finished_run):
    _, result, _ = finished_run
    empty = EmbeddingSet(np.zeros((0, SPEC.d_img), dtype=np.float32), ())
    aligner = result.aligners["classify"]
    assert infer(empty, aligner, result.decoder, result.vocab, 8) == []


def test_infer_task_requires_aligner(finished_run):
    _, result, _ = finished_run
    task = TaskSpec(name="classify", label_set=("a",), aligner=None)
    empty = EmbeddingSet(np.zeros((0, SPEC.d_img), dtype=np.float32), ())
    with pytest.raises(UnknownTask):
        infer_task(empty, task, result.decoder, result.vocab, 8)


def test_infer_task_label_mapping_modes(synth_files, finished_run):
    paths, data = synth_files
    _, result, _ = finished_run
    from ftda.embedding_io import l2_normalize

    images = l2_normalize(data.images)
    mapped_task = TaskSpec(
        name="classify",
        label_set=result.label_sets["classify"],
        aligner=result.aligners["classify"],
    )
    open_task = TaskSpec(
        name="classify", label_set=None, aligner=result.aligners["classify"]
    )
    mapped = infer_task(images, mapped_task, result.decoder, result.vocab, 8)
    opened = infer_task(images, open_task, result.decoder, result.vocab, 8)
    allowed = set(result.label_sets["classify"]) | {UNMATCHED}
    for p in mapped:
        assert p.mapped_label in allowed
    for p in opened:
        assert p.mapped_label is None
    assert [p.text for p in mapped] == [p.text for p in opened]


def test_predictions_roundtrip(tmp_path):
    preds = [
        Prediction(id="a", text="one two", mapped_label="one two"),
        Prediction(id="b", text="", mapped_label=None),
    ]
    path = tmp_path / "p.jsonl"
    write_predictions(preds, path)
    assert read_predictions(path) == preds


def test_predictions_malformed_json(tmp_path):
    path = tmp_path / "p.jsonl"
    path.write_text('{"id": "a", "text": "x", "mapped_label": null}\n{broken\n')
    with pytest.raises(MalformedLine) as exc:
        read_predictions(path)
    assert exc.value.line_no == 2


def test_predictions_wrong_keys(tmp_path):
    path = tmp_path / "p.jsonl"
    path.write_text('{"id": "a", "text": "x"}\n')
    with pytest.raises(MalformedLine):
        read_predictions(path)


def test_build_label_map_duplicate():
    from ftda.embedding_io import LabelRecord

    a = LabelRecord(id="x", text="t", task="job")
    with pytest.raises(DuplicateId):
        build_label_map([a, a])
    # same id under two tasks is legal
    b = LabelRecord(id="x", text="t", task="other")
    assert len(build_label_map([a, b])) == 2


def test_canonical_config_ignores_out_dir(synth_files):
    paths, _ = synth_files
    c1 = fast_cfg(paths, "/tmp/a")
    c2 = fast_cfg(paths, "/tmp/b")
    assert canonical_config(c1) == canonical_config(c2)


def test_load_run_config_full(tmp_path, synth_files):
    paths, _ = synth_files
    conf = {
        "images": str(paths["images"]),
        "texts": str(paths["texts"]),
        "labels": str(paths["labels"]),
        "out_dir": str(tmp_path / "out"),
        "tasks": [
            "classify",
            {"name": "open", "map_labels": False},
            {"name": "closed", "label_set": ["a", "b"]},
        ],
        "sampling": {"method": "fps", "k": 7, "seed": 3},
        "normalize": False,
        "aligner": {"epochs": 2},
        "decoder": {"epochs": 1, "model_dim": 16, "n_heads": 2},
    }
    p = tmp_path / "run.json"
    p.write_text(json.dumps(conf))
    cfg = load_run_config(p)
    assert cfg.method == "FPS"
    assert cfg.k == 7
    assert cfg.seed == 3
    assert cfg.normalize is False
    assert cfg.align.epochs == 2
    assert cfg.decode.epochs == 1
    assert cfg.tasks[0] == TaskConfig(name="classify")
    assert cfg.tasks[1].map_labels is False
    assert cfg.tasks[2].label_set == ("a", "b")
    # caller-supplied out_dir wins over the file
    assert load_run_config(p, out_dir="/elsewhere").out_dir == "/elsewhere"


def test_load_run_config_defaults(tmp_path, synth_files):
    paths, _ = synth_files
    conf = {
        "images": str(paths["images"]),
        "texts": str(paths["texts"]),
        "labels": str(paths["labels"]),
        "tasks": ["classify"],
    }
    p = tmp_path / "run.json"
    p.write_text(json.dumps(conf))
    cfg = load_run_config(p, out_dir=str(tmp_path / "o"))
    assert cfg.method == "KMEANS"
    assert cfg.k == 100
    assert cfg.seed == 0
    assert cfg.normalize is True


def test_load_run_config_rejects_unknown_keys(tmp_path, synth_files):
    paths, _ = synth_files
    base = {
        "images": str(paths["images"]),
        "texts": str(paths["texts"]),
        "labels": str(paths["labels"]),
        "out_dir": "o",
        "tasks": ["classify"],
    }
    cases = [
        {**base, "bogus": 1},
        {**base, "sampling": {"method": "fps", "bogus": 1}},
        {**base, "tasks": [{"name": "t", "bogus": 1}]},
        {**base, "aligner": {"bogus": 1}},
        {**base, "decoder": {"bogus": 1}},
        {k: v for k, v in base.items() if k != "images"},
        {**base, "tasks": []},
    ]
    for i, conf in enumerate(cases):
        p = tmp_path / f"c{i}.json"
        p.write_text(json.dumps(conf))
        with pytest.raises(ValueError):
            load_run_config(p)


def test_load_run_config_requires_out_dir(tmp_path, synth_files):
    paths, _ = synth_files
    conf = {
        "images": str(paths["images"]),
        "texts": str(paths["texts"]),
        "labels": str(paths["labels"]),
        "tasks": ["classify"],
    }
    p = tmp_path / "c.json"
    p.write_text(json.dumps(conf))
    with pytest.raises(ValueError):
        load_run_config(p)


def test_load_run_config_invalid_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(MalformedLine):
        load_run_config(p)
