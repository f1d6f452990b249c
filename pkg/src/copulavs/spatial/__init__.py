"""Spatial selection of activated voxels with an Ising prior."""
from .ising import (DIAG_WEIGHT, THETA_MAX, IsingPrior, LogPartitionTable, Neighbors,
                    build_neighbors, ising_conditional, log_unnormalized, tabulate_log_partition)
from .model import (DEFAULT_D, FmriDataset, VoxelKernels, fit_voxel_margins, fourier_basis,
                    voxel_log_kernel)
from .sampler import (DEFAULT_THRESHOLD, ActivationMaps, SpatialConfig, SpatialState, SpatialTrace,
                      activation_maps, activation_threshold, mls_breakdown, run_spatial,
                      spatial_sweep)
from .synthetic import boxcar_stimulus, planted_block, synthetic_dataset

__all__ = [
    "DIAG_WEIGHT", "THETA_MAX", "IsingPrior", "LogPartitionTable", "Neighbors", "build_neighbors",
    "ising_conditional", "log_unnormalized", "tabulate_log_partition", "DEFAULT_D", "FmriDataset",
    "VoxelKernels", "fit_voxel_margins", "fourier_basis", "voxel_log_kernel", "DEFAULT_THRESHOLD",
    "ActivationMaps", "SpatialConfig", "SpatialState", "SpatialTrace", "activation_maps",
    "activation_threshold", "mls_breakdown", "run_spatial", "spatial_sweep", "boxcar_stimulus",
    "planted_block", "synthetic_dataset",
]
