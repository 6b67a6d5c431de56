"""Infection source estimation from partial timestamps on networks."""

from .diffusion import DiffusionParams, Observations, sample_observations, simulate
from .evaluation import delta_metric, error_distance, rank_accuracy, run_benchmark
from .graph import Graph, bfs_tree, generate, graph_stats, load_edge_list, save_edge_list
from .gromov import gromov_matrix, reconstruct_base, target_matrix
from .multi import msr, observation_cluster, scce, ssse
from .single import bfs_mle, gssi, mle_tree, naive_gssi

__version__ = "0.1.0"

__all__ = [
    "DiffusionParams",
    "Graph",
    "Observations",
    "bfs_mle",
    "bfs_tree",
    "delta_metric",
    "error_distance",
    "generate",
    "graph_stats",
    "gromov_matrix",
    "gssi",
    "load_edge_list",
    "mle_tree",
    "msr",
    "naive_gssi",
    "observation_cluster",
    "rank_accuracy",
    "reconstruct_base",
    "run_benchmark",
    "sample_observations",
    "save_edge_list",
    "scce",
    "simulate",
    "ssse",
    "target_matrix",
]
