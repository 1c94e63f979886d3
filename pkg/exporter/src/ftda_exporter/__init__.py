"""Turn image files and text lines into interchange embedding files."""

from .encoders import (
    ClipEncoder,
    HashEncoder,
    PluginAdapter,
    resolve_encoder,
)
from .errors import (
    DuplicateManifestId,
    ExporterError,
    ExportFailure,
    MalformedManifest,
    ModelUnavailable,
    UnreadableInput,
)
from .export import ExportJob, ExportResult, export_embeddings
from .formats import write_embedding_file, write_label_file
from .manifest import ManifestRecord, read_manifest

__version__ = "0.1.0"

__all__ = [
    "ClipEncoder",
    "DuplicateManifestId",
    "ExportFailure",
    "ExportJob",
    "ExportResult",
    "ExporterError",
    "HashEncoder",
    "MalformedManifest",
    "ManifestRecord",
    "ModelUnavailable",
    "PluginAdapter",
    "UnreadableInput",
    "export_embeddings",
    "read_manifest",
    "resolve_encoder",
    "write_embedding_file",
    "write_label_file",
]
