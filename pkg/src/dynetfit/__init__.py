"""Estimation and inference for multilayer dynamic networks.

The model: every vertex has an outgoing and an incoming latent position
(rows of two shared column-orthonormal factor matrices), and each layer has
a small core matrix varying smoothly over time as a kernel expansion.  Edge
probabilities are the logistic transform of factor-core-factor products.
Fitting is projected gradient descent on the Bernoulli likelihood under a
trilinear norm budget, warm-started by aggregated spectral decompositions.
"""

from ._backend import BACKEND
from .data import (
    GroundTruth,
    ObservationSet,
    SbmSpec,
    from_unaligned,
    generate_dynamic_multilayer_sbm,
    generate_layer_clusters,
    load_edge_list,
    normalize_times,
    sample_from_model,
    sample_truth,
    write_edge_list,
)
from .errors import DataError, IterationLimit, NumericalError
from .estimation import (
    FitConfig,
    FitReport,
    SelectionResult,
    bic_score,
    fit,
    gradient,
    orthogonalize_output,
    rescale_to_constraint,
    select_model,
    solve_coeffs,
    spectral_init,
)
from .inference import (
    classical_mds,
    cluster_layers,
    clustering_accuracy,
    core_accuracy,
    evaluate_against_truth,
    hierarchical_cluster,
    kmeans,
    layer_features,
    matrix_corr,
    offline_coeffs,
    pair_subspace_error,
    procrustes,
    subspace_error,
    trajectory_distance_matrix,
    vertex_communities,
)
from .kernels import GramMatrix, KernelSpec, cross_gram, gram, kernel_eval, rkhs_norm_sq
from .model import (
    ModelParams,
    core_matrix,
    core_values,
    edge_logits,
    edge_probs,
    load_params,
    neg_log_likelihood,
    save_params,
    trilinear_norm,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
