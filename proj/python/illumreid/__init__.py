"""Illumination-aware synthetic-to-real adaptation for person re-identification."""

from ._illumreid import (  # noqa: F401
    NumericalError,
    StaleCheckpoint,
    TrainingDiverged,
    ValidationError,
    adversarial_loss,
    cmc,
    cycle_loss,
    derive_seed,
    full_objective,
    identity_mapping_loss,
    masked_reg_loss,
    read_dataset,
    ref_loss,
    run_pipeline,
    select_domain,
    soft_matte,
    stats_distance,
    validate_config,
)

__version__ = "0.1.0"
