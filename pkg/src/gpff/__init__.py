"""Generative pseudo-force-field sampling toolkit."""

from .geometry import (
    Frame,
    ShapePoint,
    Structure,
    center,
    centroid,
    covariance3,
    max_pairwise_distance,
    perturb,
    principal_frame,
    rmsd,
    shape_point,
)
from .xyz import XyzParseError, load_xyz, read_xyz, save_xyz, write_xyz
from .alignment import Permutation, align_permutation, solve_assignment
from .schedules import (
    NoiseSchedule,
    ScheduleParams,
    build_schedule,
    clamp_terminal,
    next_sigma,
    observed_step_size,
)
from .pes import (
    BOLTZMANN_K,
    boltzmann_temperature,
    lognormal_sigma,
    pseudo_energy,
    pseudo_forces,
    score_from_forces,
    sigma_estimate,
    x0_from_forces,
)
from .providers import (
    ForceEvaluation,
    ForceProvider,
    OracleForceProvider,
    ProviderError,
    ProviderSchemaError,
    ProviderShapeError,
    ProviderTransportError,
    ReferenceSet,
    RemoteForceProvider,
    mixture_denoiser,
)
from .loss import FORCE_WEIGHT_CAP, simple_loss
from .samplers import (
    ChurnParams,
    PriorSpec,
    SamplerConfig,
    SamplerError,
    ShapeConstraint,
    StepRecord,
    TrajectoryTrace,
    build_prior,
    run_batch,
    run_sampler,
    trajectory_rng,
)
from .shapes import (
    ShapeModel,
    absolute_target,
    cov_to_vec,
    fit_shape_model,
    named_targets,
    sample_conditioned,
    vec_to_cov,
)
from .metrics import (
    EnsembleReport,
    ValidityEntry,
    ensemble_report,
    js_divergence,
    perceive_bonds,
    validity,
    write_report_csv,
    write_report_json,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Frame",
    "ShapePoint",
    "Structure",
    "center",
    "centroid",
    "covariance3",
    "max_pairwise_distance",
    "perturb",
    "principal_frame",
    "rmsd",
    "shape_point",
    "XyzParseError",
    "load_xyz",
    "read_xyz",
    "save_xyz",
    "write_xyz",
    "Permutation",
    "align_permutation",
    "solve_assignment",
    "NoiseSchedule",
    "ScheduleParams",
    "build_schedule",
    "clamp_terminal",
    "next_sigma",
    "observed_step_size",
    "BOLTZMANN_K",
    "boltzmann_temperature",
    "lognormal_sigma",
    "pseudo_energy",
    "pseudo_forces",
    "score_from_forces",
    "sigma_estimate",
    "x0_from_forces",
    "ForceEvaluation",
    "ForceProvider",
    "OracleForceProvider",
    "ProviderError",
    "ProviderSchemaError",
    "ProviderShapeError",
    "ProviderTransportError",
    "ReferenceSet",
    "RemoteForceProvider",
    "mixture_denoiser",
    "FORCE_WEIGHT_CAP",
    "simple_loss",
    "ChurnParams",
    "PriorSpec",
    "SamplerConfig",
    "SamplerError",
    "ShapeConstraint",
    "StepRecord",
    "TrajectoryTrace",
    "build_prior",
    "run_batch",
    "run_sampler",
    "trajectory_rng",
    "ShapeModel",
    "absolute_target",
    "cov_to_vec",
    "fit_shape_model",
    "named_targets",
    "sample_conditioned",
    "vec_to_cov",
    "EnsembleReport",
    "ValidityEntry",
    "ensemble_report",
    "js_divergence",
    "perceive_bonds",
    "validity",
    "write_report_csv",
    "write_report_json",
]
