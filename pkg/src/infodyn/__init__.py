"""Information-entropic analysis of dynamical systems.

Modules
-------
kernel, kernelspec
    Abstract and causal systems: trajectories, events, causal decompositions,
    information bonds and sub-systems.
hodgepodge
    Noisy hodgepodge machine producing frame series.
pdg
    Renyi entropy, point divergence gain, I_alpha / P_alpha spectra.
clustering
    k-means segmentation of spectra series, decimation, adjusted Rand index.
zstack
    Point divergence gain transform of z-stacks and LIL 8-bit rescale.
lcms
    Noise / ridge / signal decomposition of LC-MS grids.
"""
from .pdg import DEFAULT_ALPHAS

__version__ = "0.1.0"
__all__ = ["DEFAULT_ALPHAS", "__version__"]
