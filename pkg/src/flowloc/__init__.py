"""Flow-guided in-body localization workbench."""

from .vasculature import (
    AnchorSpec, BloodstreamGraph, CardioPath, GraphError, RegionNode,
    RegionType, VesselEdge, builtin_24_region, cardiovascular_paths, load_graph,
)
from .analytic_model import (
    DistributionTable, ModelParams, RawDatum, enumerate_distribution,
    multinomial_coefficient, mse_vs_count, params_from_graph, prob_detected,
    prob_not_detected, sample_raw_data, sample_raw_data_direct,
)
from .mobility_sim import (
    EnergyConfig, EventSpec, NanodeviceState, SimConfig, SimTrace,
    attempt_transmission, energy_update, run,
)
from .stats import (
    ValidationReport, ecdf_max_distance, kl_bernoulli, mann_whitney_u, validate,
)
from .features import (
    AnchorFeatureVector, GmmParams, build_dataset, export_dataset,
    extract_features, fit_gmm,
)
from .anchor_filter import (
    CoverSet, RegionPrediction, allowed_regions, apply_filter,
    cover_sets_for_anchors, dfs_all_paths,
)

__version__ = "0.1.0"
