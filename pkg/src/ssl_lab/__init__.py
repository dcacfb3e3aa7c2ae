"""Desk-scale laboratory for contrastive vs non-contrastive representation
learning on a sparse-coding data model: exact losses and hand-derived
gradients, population-dynamics oracles, landscape certification, training
loops, and a preset-driven CLI.
"""

from .backend import name as backend_name
from .config import RunSetup, dump_config, parse_config, parse_config_text, \
    write_config
from .data import (DictionaryMatrix, LatentSpec, apply_masks,
                   default_noise_variance, generate_dictionary, rng_streams,
                   sample_latents, sample_mask_pairs, sample_observations)
from .encoders import (BatchNormState, EncoderState, PredictorState,
                       fresh_batch_norm, normalize_batch_rows,
                       normalize_columns, normalize_rows)
from .errors import (AssumptionError, ConvergenceError, DegenerateInputError,
                     DimensionError, DivergenceError, ParameterError,
                     SslLabError)
from .losses import (EncoderBlock, GradientSet, LossSpec, ModelParams,
                     cl_infinite_batch_gradient, cl_infinite_batch_loss,
                     empirical_gradient, loss_and_gradient, loss_value,
                     per_sample_loss, population_gradient_linear,
                     population_gradient_srelu_warm, population_loss_linear,
                     population_loss_srelu_warm, verify_gradients)
from .metrics import MaxCosineStats, max_cosine_stats, support_separation
from .oracles import (AssumptionReport, CertRow, DynamicsPrediction,
                      LandscapeVerdict, check_assumptions,
                      cl_landscape_certify, closed_form_linear_dynamics,
                      exact_loss_enumeration, lemma_a1_contraction_factor,
                      lemma_a1_fixed_point, lemma_a1_iterate,
                      ncl_landscape_certify, subspace_residual,
                      write_certification_csv)
from .presets import PRESETS, Preset, evaluate_bands, get_preset
from .trainer import (AlternatingResult, DataConfig, ModelConfig, TrainConfig,
                      TrainRecord, TrainResult, alternating_optimize,
                      init_random, init_warm, load_run_csv, prepare_data,
                      simulate_linear_population_gd, train, write_run_csv)

__version__ = "0.1.0"
