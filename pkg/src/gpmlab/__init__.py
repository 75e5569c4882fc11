"""Intermittent interval maps: invariant densities, the ν-kernel and its
dependence coefficients, orbit and reversed-chain simulation, limit-theorem
diagnostics and explicit deviation bounds."""

__version__ = "0.1.0"

from .maps import GpmMap, MapDomainError, make_doubling, make_lsv, make_pm, map_from_config
from .density import DensityModel, invariant_density, model_grid, anchor_grid
from .kernel import KernelModel, AlphaSequence, kernel_matrix, alpha_estimate
from .observables import ObservableSpec, TailSpec, check_condition
from .simulate import simulate_chain, simulate_orbit

__all__ = ["GpmMap", "MapDomainError", "make_lsv", "make_pm", "make_doubling",
           "map_from_config", "DensityModel", "invariant_density", "model_grid",
           "anchor_grid", "KernelModel", "AlphaSequence", "kernel_matrix", "alpha_estimate",
           "ObservableSpec", "TailSpec", "check_condition", "simulate_chain",
           "simulate_orbit", "__version__"]
