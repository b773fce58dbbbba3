"""Duplication auditing and memorization mitigation for text-to-image corpora."""

__version__ = "0.1.0"

from .store import (  # noqa: F401
    CaptionRecord,
    EmbeddingMatrix,
    StoreError,
    normalize_rows,
    read_captions,
    read_embeddings,
    tokenize,
    write_captions,
    write_embeddings,
)
from .simgraph import (  # noqa: F401
    ClusterConfig,
    DuplicateCluster,
    MatchReport,
    SimGraphError,
    blocked_topk,
    connected_components,
    filter_clusters,
    threshold_edges,
)
from .metrics import (  # noqa: F401
    MetricError,
    SimilarityReport,
    build_similarity_report,
    caption_cluster_similarity,
    dataset_similarity,
    flag_replications,
    pearson_with_pvalue,
    self_similarity_baseline,
    spearman_with_pvalue,
    unigram_jaccard,
)
from .complexity import (  # noqa: F401
    ComplexityError,
    ComplexityScore,
    complexity_correlation,
    histogram_entropy,
    jpeg_compressibility,
    preprocess_image,
    score_image,
)
from .mitigate import (  # noqa: F401
    MitigateError,
    TransformSpec,
    caption_scheme,
    caption_word_repeat,
    gaussian_noise,
    multiple_captions_sample,
    random_caption_replace,
    random_number_add,
    random_token_replace,
)
from .manifest import (  # noqa: F401
    ManifestError,
    ManifestRow,
    TrainingManifest,
    build_manifest,
    sample_epoch,
)
