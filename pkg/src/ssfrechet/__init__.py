"""Semi-supervised Fréchet regression on metric-space responses."""
from .errors import FrechetError
from .manifold_graph import (
    DistanceField,
    FeatureMatrix,
    GraphContext,
    KnnGraph,
    NeighborGraph,
    RGraph,
    build_graph,
    default_radius,
    pairwise_labeled_distances,
    query_distances,
)
from .metric_space import (
    MetricPoint,
    WeightedSample,
    distance,
    frechet_mean,
    sphere_exp,
    sphere_log,
    sym_matrix_exp,
    sym_matrix_log,
)
from .regression import (
    FittedRegressor,
    GraphParams,
    LabeledSet,
    RegressorSpec,
    default_bandwidth_grid,
    fit,
    fit_cv,
    kernel_eval,
    loocv_select,
    predict_knn,
    predict_nw,
)

__version__ = "0.1.0"

__all__ = [
    "FrechetError",
    "DistanceField", "FeatureMatrix", "GraphContext", "KnnGraph", "NeighborGraph", "RGraph",
    "build_graph", "default_radius", "pairwise_labeled_distances", "query_distances",
    "MetricPoint", "WeightedSample", "distance", "frechet_mean", "sphere_exp", "sphere_log",
    "sym_matrix_exp", "sym_matrix_log",
    "FittedRegressor", "GraphParams", "LabeledSet", "RegressorSpec", "default_bandwidth_grid",
    "fit", "fit_cv", "kernel_eval", "loocv_select", "predict_knn", "predict_nw",
]
