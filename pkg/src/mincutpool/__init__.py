"""Differentiable graph pooling by relaxed normalized minCUT, with a tape
autodiff engine, classical spectral clustering, and pooling baselines."""

from .errors import (ContractError, DataError, DegenerateInputError, MincutError, NumericError,
                     ParameterError, ParseError, ShapeError)
from .graph import (Graph, NormalizedAdjacency, generate_community_graph, generate_grid_graph,
                    generate_ring_graph, load_citation_network, load_graph, normalize_adjacency,
                    parse_generator, save_graph)
from .metrics import ContingencyTable, accuracy, completeness_score, mse, nmi
from .mincut import (PoolModel, PooledGraph, SoftAssignment, coarsen, compute_assignments,
                     cut_loss, cut_loss_ratio_trace, load_model, ortho_loss, ratio_trace,
                     save_model, unpool, unsupervised_loss)
from .sparse import SparseMatrix
from .spectral import HardAssignment, kmeans, spectral_clustering, symmetric_eigendecomposition
from .training import (Adam, ClassifierConfig, ClusteringConfig, TrainReport, train_autoencoder,
                       train_classifier, train_clustering)

__version__ = "0.1.0"

__all__ = [
    "Adam", "ClassifierConfig", "ClusteringConfig", "ContingencyTable", "ContractError",
    "DataError", "DegenerateInputError", "Graph", "HardAssignment", "MincutError",
    "NormalizedAdjacency", "NumericError", "ParameterError", "ParseError", "PoolModel",
    "PooledGraph", "ShapeError", "SoftAssignment", "SparseMatrix", "TrainReport", "accuracy",
    "coarsen", "completeness_score", "compute_assignments", "cut_loss", "cut_loss_ratio_trace",
    "generate_community_graph", "generate_grid_graph", "generate_ring_graph", "kmeans",
    "load_citation_network", "load_graph", "load_model", "mse", "nmi", "normalize_adjacency",
    "ortho_loss", "parse_generator", "ratio_trace", "save_graph", "save_model",
    "spectral_clustering", "symmetric_eigendecomposition", "train_autoencoder",
    "train_classifier", "train_clustering", "unpool", "unsupervised_loss",
]
