from l0cert._internal.cover import CoverPlan, CoverParams, build_cover, cover_verify, naive_complete_verify
from l0cert._internal.geometry import (
    corner_count,
    enumerate_corners,
    in_ball0,
    in_ball0_batch,
    in_hull,
    in_hull_batch,
    in_scaled_l1,
    in_scaled_l1_batch,
    irwin_hall_cdf,
    iter_corners,
    relative_excess_volumes,
    scaled_distance,
    scaled_distance_multi,
    volume_hull,
    volume_hull_multichannel,
    volume_scaled_l1,
    volume_scaled_l1_multichannel,
)
from l0cert._internal.network import (
    AffineStage,
    Network,
    ReLUStage,
    classify,
    classify_batch,
    conv2d_direct,
    forward,
    forward_batch,
    forward_trace,
    load_input,
    load_model,
    save_model,
)
from l0cert._internal.oracles import (
    hull_distance_fw,
    mc_volume,
    min_linear_over_ball0,
    sample_ball0_batch,
    sample_in_ball0,
)
from l0cert._internal.propagation import (
    back_substitute,
    compute_bounds,
    concretize,
    concretize_box,
    concretize_topt,
    concretize_ttimestop,
    contributions,
    relax_relu,
    topt_minimizer,
)
from l0cert._internal.seeding import DEFAULT_SEED, derive_seed
from l0cert._internal.types.bounds import (
    AffineExpr,
    Contribution,
    LayerBounds,
    LinearBounds,
    NetworkBounds,
    NeuronBounds,
    Strategy,
)
from l0cert._internal.types.document import InputDocument, ModelDocument
from l0cert._internal.types.domain import Ball0Spec, BoxDomain, LabeledInput
from l0cert._internal.types.estimates import FrankWolfeResult, McEstimate
from l0cert._internal.types.report import (
    CoverStats,
    LayerBoundSummary,
    Query,
    SuccessRates,
    VerdictReport,
    VerdictStatus,
)
from l0cert._internal.verifier import find_counterexample, success_rate_experiment, verify

__all__ = [
    "scaled_distance",
    "scaled_distance_multi",
    "in_ball0",
    "in_ball0_batch",
    "in_scaled_l1",
    "in_scaled_l1_batch",
    "in_hull",
    "in_hull_batch",
    "corner_count",
    "iter_corners",
    "enumerate_corners",
    "irwin_hall_cdf",
    "volume_hull",
    "volume_hull_multichannel",
    "volume_scaled_l1",
    "volume_scaled_l1_multichannel",
    "relative_excess_volumes",
    "mc_volume",
    "min_linear_over_ball0",
    "hull_distance_fw",
    "sample_in_ball0",
    "sample_ball0_batch",
    "Network",
    "AffineStage",
    "ReLUStage",
    "forward",
    "forward_batch",
    "forward_trace",
    "classify",
    "classify_batch",
    "conv2d_direct",
    "load_model",
    "load_input",
    "save_model",
    "contributions",
    "concretize",
    "concretize_box",
    "concretize_topt",
    "concretize_ttimestop",
    "topt_minimizer",
    "relax_relu",
    "back_substitute",
    "compute_bounds",
    "verify",
    "find_counterexample",
    "success_rate_experiment",
    "build_cover",
    "cover_verify",
    "naive_complete_verify",
    "derive_seed",
    "DEFAULT_SEED",
    "AffineExpr",
    "Ball0Spec",
    "BoxDomain",
    "Contribution",
    "CoverParams",
    "CoverPlan",
    "CoverStats",
    "FrankWolfeResult",
    "InputDocument",
    "LabeledInput",
    "LayerBoundSummary",
    "LayerBounds",
    "LinearBounds",
    "McEstimate",
    "ModelDocument",
    "NetworkBounds",
    "NeuronBounds",
    "Query",
    "Strategy",
    "SuccessRates",
    "VerdictReport",
    "VerdictStatus",
]
