"""Pseudo-spectral LLB solver with a Littlewood-Paley toolkit."""
from .spectral import (
    Grid,
    NonRealOutput,
    PhysicalField,
    SpectralField,
    apply_laplacian,
    forward_transform,
    heat_propagate,
    inverse_transform,
    pointwise_cross_with_laplacian,
    pointwise_cubic,
    read_checkpoint,
    spectral_cutoff,
    write_checkpoint,
)
from .littlewood_paley import (
    BesovParams,
    DyadicPartition,
    NormReport,
    besov_norm,
    block_commutator,
    build_partition,
    dyadic_block,
    lebesgue_norm,
    low_freq_cutoff,
    paraproduct,
    remainder,
    sobolev_norm,
)
from .solver import LLBParams, Solver, SolverSettings, SolverState, initial_state, rhs_friedrichs, rhs_full, step

__version__ = "0.1.0"
