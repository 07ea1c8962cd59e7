"""Shared-codebook model compression with relative-entropy encoders and bound checks."""
from ._backend import backend_name
from .bounds import (AppendixDiagnostics, BoundConfig, BoundReport, EncodingStats, TauResult,
                     appendix_claim_check, b_w, calibrate_vq_radius, emp_risk_bound_rhs,
                     gen_bound_decoded_rhs, gen_bound_expectation_rhs, gen_bound_oneshot_rhs, tau_eps)
from .codebook import Codebook, Prior, SharedRandomness, derive_codeword, derive_seed, materialize
from .encoders import (EncodingResult, GumbelStream, PrecisionPayload, decode, decode_message, delta_u,
                       encode_message, encode_mrc, encode_orc, encode_vq, quantize_residual)
from .errors import (CapExceededError, ConfigError, DecodeError, DegenerateKernelError, DivergenceError,
                     MincommError, NumericUnderflowError, QuantizerContractError)
from .harness import ExperimentConfig, TrialRecord, run_pipeline
from .hypothesis import (Dataset, LossSpec, Sample, empirical_risk, gen_error, loss,
                         population_risk_mc)
from .index_codec import IndexCode, comm_budget, decode_index, encode_index
from .quantkernel import (QuantKernel, kl_to_prior, log_density_ratio, log_ratio_tail,
                          sample_kernel)
from .trainer import SyntheticTask, TrainConfig, make_synthetic_task, sgd_train

__version__ = "0.1.0"
