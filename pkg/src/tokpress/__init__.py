"""tokpress: graph-based extractive token compression with feedback control.

The pipeline scores token importance by propagating attention-style base
scores over a sparse interdependency graph, selects a budgeted keep-set under
a coverage constraint, and grows the budget until a semantic retention target
(and, for paired text/visual documents, an alignment floor) is met. The
package also ships a deterministic synthetic corpus generator, a curriculum
hill-climb trainer for the pipeline tunables, and reporting tools.
"""

__version__ = "0.1.0"

from .compress import (
    SelectionParams,
    compress_document,
    compression_percent,
    select,
)
from .core import (
    CompressionResult,
    ConfigError,
    CorpusFormatError,
    Document,
    DocumentError,
    EmbeddedToken,
    ImportanceVector,
    PipelineConfig,
    TokenGraph,
    TokpressError,
    validate_document,
)
from .datagen import GenSpec, generate, inject_noise
from .graph import build_graph, cross_modal_edges, edge_weight, row_normalize
from .metrics import (
    CorpusReport,
    ErrorProfile,
    build_report,
    classify_errors,
    pool,
    retention_curve,
    retention_score,
)
from .multimodal import alignment_score, compress_multimodal, extended_graph
from .scoring import (
    PropagationTrace,
    base_scores,
    propagate,
    propagation_steps,
    score_entropy,
)
from .trainer import (
    Checkpoint,
    RewardBreakdown,
    bucket_curriculum,
    curriculum_order,
    reward,
    train,
)

__all__ = [
    "Checkpoint",
    "CompressionResult",
    "ConfigError",
    "CorpusFormatError",
    "CorpusReport",
    "Document",
    "DocumentError",
    "EmbeddedToken",
    "ErrorProfile",
    "GenSpec",
    "ImportanceVector",
    "PipelineConfig",
    "PropagationTrace",
    "RewardBreakdown",
    "SelectionParams",
    "TokenGraph",
    "TokpressError",
    "alignment_score",
    "base_scores",
    "bucket_curriculum",
    "build_graph",
    "build_report",
    "classify_errors",
    "compress_document",
    "compress_multimodal",
    "compression_percent",
    "cross_modal_edges",
    "curriculum_order",
    "edge_weight",
    "extended_graph",
    "generate",
    "inject_noise",
    "pool",
    "propagate",
    "propagation_steps",
    "retention_curve",
    "retention_score",
    "reward",
    "row_normalize",
    "score_entropy",
    "select",
    "train",
    "validate_document",
]
