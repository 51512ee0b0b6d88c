"""Bayesian space-time cluster detection on street networks.

The package fits a Dirichlet-process mixture of network-corrected Gaussian
kernels to point events that live on a linear network (streets), using a
blocked Gibbs sampler with Metropolis steps, then summarizes the posterior
partition and checks model fit with cube proportions and second-order
statistics (space-time K-function, multitype pair correlation).
"""

__version__ = "0.1.0"

from .errors import (ConsistencyError, DegeneratePointsError, InputError,
                     IsolatedCenterError, NetclustError, NumericalError)
from .network import (Event, EventSet, LinearNetwork, NetPoint, NetPointSet,
                      PixelGrid, Window, build_network, equidistant_counts,
                      make_grid_network, pixelate, project_event,
                      sample_uniform, shortest_path_dist)
from .kernels import (KernelConfig, correction_term, log_corrections,
                      log_spatial_matrix, log_temporal_matrix, planar_gaussian,
                      spatial_kernel, temporal_kernel)
from .model import (ChainState, FitConfig, ModelContext, PointEstimate,
                    PosteriorRun, dahl_select, log_likelihood, membership_probs,
                    mixture_log_density, point_estimate, run_mcmc,
                    sample_state_from_prior, stick_breaking)
from .sim import SyntheticTruth, sim_mixture, sim_poisson
from .assess import (AssessSummary, CellTable, GridSpec, assess,
                     assess_scatter, observed_props, theoretical_props)
from .sumstats import (AmenityMixTable, EnvelopeResult, KSurface, PcfCurve,
                       amenity_mix, envelope_pvalue, kfunction, multitype_pcf,
                       scott_bandwidth)
from .io import (read_amenities_csv, read_events_csv, read_manifest,
                 read_run_outputs, write_manifest, write_run_outputs)
from .estimator import NetworkDPMixture

__all__ = [
    "__version__",
    # errors
    "NetclustError", "InputError", "ConsistencyError", "NumericalError",
    "IsolatedCenterError", "DegeneratePointsError",
    # network geometry
    "Window", "NetPoint", "Event", "NetPointSet", "EventSet", "LinearNetwork",
    "PixelGrid", "build_network", "make_grid_network", "project_event",
    "sample_uniform", "shortest_path_dist", "pixelate", "equidistant_counts",
    # kernels
    "KernelConfig", "planar_gaussian", "temporal_kernel", "spatial_kernel",
    "correction_term", "log_corrections", "log_spatial_matrix",
    "log_temporal_matrix",
    # model
    "FitConfig", "ModelContext", "ChainState", "PosteriorRun", "PointEstimate",
    "run_mcmc", "log_likelihood", "stick_breaking", "membership_probs",
    "dahl_select", "point_estimate", "mixture_log_density",
    "sample_state_from_prior",
    # simulation
    "SyntheticTruth", "sim_poisson", "sim_mixture",
    # assessment
    "GridSpec", "CellTable", "AssessSummary", "assess", "assess_scatter",
    "theoretical_props", "observed_props",
    # second-order statistics
    "KSurface", "EnvelopeResult", "PcfCurve", "AmenityMixTable", "kfunction",
    "envelope_pvalue", "multitype_pcf", "amenity_mix", "scott_bandwidth",
    # io
    "read_events_csv", "read_amenities_csv", "read_manifest",
    "read_run_outputs", "write_manifest", "write_run_outputs",
    # estimator
    "NetworkDPMixture",
]
