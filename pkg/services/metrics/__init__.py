from services.metrics.distances import (
    GaussianSummary,
    KernelConfig,
    Mi1dResult,
    PairedCosine,
    as_samples,
    cosine_similarity_paired,
    frechet_distance,
    gaussian_fd_closed_form,
    kernel_distance,
    median_heuristic_gamma,
    mi_1d_gauss,
    summarize,
)
from services.metrics.suite import METRICS, MetricValue, metric_suite, parse_metric_names
