"""Entropic graph spectra: maximum-entropy spectral densities of large graphs.

The pipeline is graph -> rescaled normalised Laplacian -> stochastic trace
estimates of its spectral moments -> maximum-entropy density, which then
supports cluster counting, graph similarity and random-graph model fitting.
"""

__version__ = "0.1.0"

from .graph import (GraphParseError, SparseGraph, SpectralOperator, degrees, from_edges,
                    load_csr_cache, make_operator, parse_edge_list, read_edge_list,
                    save_csr_cache, write_edge_list)
from .moments import (CHEBYSHEV, POWER, MomentVector, ProbeConfig, basis_convert, exact_moments,
                      ste_moments)
from .maxent import (EntropicSpectrum, MaxEntConvergenceError, QuadratureOverflowError,
                     SolverConfig, density_derivatives, density_eval, differential_entropy,
                     kl_divergence, maxent_fit, symmetric_kl)
from .baselines import (DiracSpectrum, SmoothedSpectrum, UnsupportedKernelError,
                        dirac_divergence_pathology, exact_spectrum, lanczos_spectrum, smooth,
                        smoothed_moment_bias)
from .generators import (ModelSpec, SemicircleSpec, barabasi_albert, erdos_renyi, generate,
                         planted_clusters, semicircle_density, semicircle_moments,
                         watts_strogatz)
from .analysis import (ClusterEstimate, NoSpectralGapError, PerturbationBound, SearchConfig,
                       SimilarityMatrix, classify_network, estimate_clusters, first_order_shift,
                       fit_graph, infer_parameter, perturbation_bound, similarity_matrix)
