"""Few-shot text-driven adaptation for frozen paired-encoder embeddings.

Select a handful of anchor images, learn a small MLP that carries image
embeddings into the text embedding space, train a text decoder on text
embeddings alone, then decode aligned image embeddings with it. Everything
is seeded and artifacts are byte-stable across identical runs.
"""

from .aligner import (
    AlignerParams,
    AlignTrainConfig,
    align_forward,
    align_gradient,
    identity_aligner,
    init_aligner,
    load_aligner,
    mse_loss,
    save_aligner,
    train_aligner,
)
from .decoder import (
    BOS,
    EOS,
    PAD,
    UNK,
    DecoderConfig,
    DecoderParams,
    DecoderTrainConfig,
    Vocabulary,
    build_vocab,
    cross_entropy_loss,
    decoder_forward,
    generate,
    generate_batch,
    load_decoder,
    load_vocab,
    save_decoder,
    save_vocab,
    train_decoder,
)
from .embedding_io import (
    EmbeddingSet,
    LabelRecord,
    l2_normalize,
    read_embeddings,
    read_labels,
    write_embeddings,
    write_labels,
)
from .errors import ToolkitError
from .gap import GapReport, modality_gap, project_2d, write_gap_csv
from .metrics import (
    UNMATCHED,
    EvalReport,
    bleu,
    classification_report,
    map_text_to_label,
    write_report,
)
from .pipeline import (
    AdaptationResult,
    Prediction,
    RunConfig,
    TaskConfig,
    TaskSpec,
    infer,
    infer_task,
    load_run_config,
    run,
    run_adaptation,
    run_adaptation_data,
)
from .sampler import FPS, KMEANS, AnchorSet, fps, kmeans, read_anchors, select_anchors_kmeans, write_anchors
from .synth import SynthData, SynthSpec, make, make_multitask
from .textproc import detokenize, normalize, normalize_for_matching, tokenize

__version__ = "0.1.0"

__all__ = [
    "AdaptationResult",
    "AlignTrainConfig",
    "AlignerParams",
    "AnchorSet",
    "BOS",
    "DecoderConfig",
    "DecoderParams",
    "DecoderTrainConfig",
    "EOS",
    "EmbeddingSet",
    "EvalReport",
    "FPS",
    "GapReport",
    "KMEANS",
    "LabelRecord",
    "PAD",
    "Prediction",
    "RunConfig",
    "SynthData",
    "SynthSpec",
    "TaskConfig",
    "TaskSpec",
    "ToolkitError",
    "UNK",
    "UNMATCHED",
    "Vocabulary",
    "align_forward",
    "align_gradient",
    "bleu",
    "build_vocab",
    "classification_report",
    "cross_entropy_loss",
    "decoder_forward",
    "detokenize",
    "fps",
    "generate",
    "generate_batch",
    "identity_aligner",
    "infer",
    "infer_task",
    "init_aligner",
    "kmeans",
    "l2_normalize",
    "load_aligner",
    "load_decoder",
    "load_run_config",
    "load_vocab",
    "make",
    "make_multitask",
    "map_text_to_label",
    "modality_gap",
    "mse_loss",
    "normalize",
    "normalize_for_matching",
    "project_2d",
    "read_anchors",
    "read_embeddings",
    "read_labels",
    "run",
    "run_adaptation",
    "run_adaptation_data",
    "save_aligner",
    "save_decoder",
    "save_vocab",
    "select_anchors_kmeans",
    "tokenize",
    "train_aligner",
    "train_decoder",
    "write_anchors",
    "write_embeddings",
    "write_gap_csv",
    "write_labels",
    "write_report",
]
