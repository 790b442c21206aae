"""Shape-based clustering of climate-scenario time series.

Representations (mean, Haar, Fourier, PCA, identity), dissimilarities (L2,
max lagged Pearson correlation, dynamic time warping), K-Medoids with
restarts, and quality indices that trade cluster compactness against how
faithfully a representation preserves neighbourhoods of the original data.
"""

from .clustering import (
    ClusteringResult,
    Representative,
    extract_representative,
    kmedoids,
    kmedoids_restarts,
)
from .data import (
    Dataset,
    PlantedSpec,
    SyntheticSpec,
    TimeSeriesRecord,
    center_global,
    generate_planted,
    generate_synthetic,
    load_csv,
    write_csv,
    zscore,
)
from .distances import (
    DistanceMatrix,
    DistanceSpec,
    distance_matrix,
    dist_dtw,
    dist_l2,
    dist_mlpc,
)
from .errors import (
    BisectionError,
    ClimclustError,
    ConfigError,
    DataError,
    DegenerateDataError,
    PairError,
    ParseError,
    ZeroVarianceError,
)
from .evaluation import (
    IndexReport,
    adjusted_rand_index,
    affinities,
    combined_index,
    consensus_index,
    fidelity,
    js_divergence,
    within_index,
)
from .experiments import (
    PipelineSpec,
    cmd_cluster_report,
    cmd_compare_pipelines,
    cmd_group_experiment,
    named_pipeline,
)
from .transforms import Representation, reconstruct, transform

__version__ = "0.1.0"

__all__ = [
    "BisectionError",
    "ClimclustError",
    "ClusteringResult",
    "ConfigError",
    "DataError",
    "Dataset",
    "DegenerateDataError",
    "DistanceMatrix",
    "DistanceSpec",
    "IndexReport",
    "PairError",
    "ParseError",
    "PipelineSpec",
    "PlantedSpec",
    "Representation",
    "Representative",
    "SyntheticSpec",
    "TimeSeriesRecord",
    "ZeroVarianceError",
    "adjusted_rand_index",
    "affinities",
    "center_global",
    "cmd_cluster_report",
    "cmd_compare_pipelines",
    "cmd_group_experiment",
    "combined_index",
    "consensus_index",
    "dist_dtw",
    "dist_l2",
    "dist_mlpc",
    "distance_matrix",
    "extract_representative",
    "fidelity",
    "generate_planted",
    "generate_synthetic",
    "js_divergence",
    "kmedoids",
    "kmedoids_restarts",
    "load_csv",
    "named_pipeline",
    "reconstruct",
    "transform",
    "within_index",
    "write_csv",
    "zscore",
]
