"""Distributed vector quantization of compressed-sensing measurements of two
correlated sparse sources: exact Bayesian MMSE reconstruction at a fusion
center, iterative design of locally optimal encoder/decoder pairs, an
asymptotic lower bound, and a seeded experiment harness."""

from .bounds import dq_lower_bound, end_to_end_lower_bound, rate_offset
from .config import ConfigError, ExperimentSpec, load_config, parse_config
from .dvq import (
    DecoderCodebook,
    EncoderTable,
    EvalResult,
    TrainedSystem,
    TrainingTables,
    build_tables,
    build_training_set,
    decode,
    encode,
    evaluate_end_to_end,
    train,
    training_cost,
    update_decoder,
    update_encoder,
)
from .estimator import (
    MixtureEstimator,
    NumericalError,
    PosteriorMixture,
    SupportContext,
    build_support_context,
    enumerate_supports,
    estimate_dcs,
    log_support_weight,
    mmse_estimate,
    oracle_estimate,
    support_conditional_mean,
)
from .experiments import ExperimentError, ExperimentResult, run_experiment
from .model import (
    BatchRealization,
    SensingPair,
    SourceRealization,
    SystemConfig,
    build_sensing_pair,
    dct_matrix,
    measure,
    measure_batch,
    noise_variance_from_smnr,
    sample_batch,
    sample_realization,
    substream,
)
from .sq import (
    ScalarCodebook,
    cell_of,
    cell_space_size,
    cells_of_batch,
    lbg_train,
    quantize_entry,
    train_measurement_codebooks,
    unpack_cell,
)
from .sysio import SystemFileError, load_system, save_system

__version__ = "0.1.0"
