"""Mirror-contrastive sliding-window transformer for motor imagery EEG.

A from-scratch, numpy-backed implementation: reverse-mode autodiff tensor
engine, signal preprocessing, mirror augmentation, windowed-attention
transformer, contrastive training, and evaluation with mirrored-prediction
fusion.  See the ``mclswt`` command-line tool for the end-to-end workflows.
"""

from .data import (LEFT, RIGHT, SynthConfig, TrialSet, generate_synthetic_erd,
                   read_trialset, split_new_subject, write_trialset)
from .errors import (ConfigurationError, DataFormatError, DimensionError,
                     NumericError, OptimizerError)
from .losses import (LossBreakdown, MclWeights, cross_entropy,
                     mirror_contrastive_loss, total_loss)
from .mirror import (ChannelMirrorMap, Pair, PairList, build_pairs,
                     default_mirror_map, mirror_trial)
from .model import (ModelParams, SwtConfig, conformance_report, feature_extract,
                    forward, fuse_mirror_predictions, init_model,
                    load_checkpoint, mlp_block, param_report, save_checkpoint,
                    stw_msa, tw_msa, windowed_attention)
from .optim import Adam
from .preprocess import (ContinuousRecording, Trial, bandpass, extract_epoch,
                         sliding_standardize)
from .tensor import DTYPE, Tensor
from .train import (EvalResult, MetricsReport, TrainConfig, bench_inference,
                    cohen_kappa, evaluate, flops_estimate, hyper_sweep, train)

__version__ = "0.1.0"

__all__ = [
    "Adam", "ChannelMirrorMap", "ConfigurationError", "ContinuousRecording",
    "DTYPE", "DataFormatError", "DimensionError", "EvalResult", "LEFT",
    "LossBreakdown", "MclWeights", "MetricsReport", "ModelParams",
    "NumericError", "OptimizerError", "Pair", "PairList", "RIGHT",
    "SwtConfig", "SynthConfig", "Tensor", "TrainConfig", "Trial", "TrialSet",
    "bandpass", "bench_inference", "build_pairs", "cohen_kappa",
    "conformance_report", "cross_entropy", "default_mirror_map", "evaluate",
    "extract_epoch", "feature_extract", "flops_estimate", "forward",
    "fuse_mirror_predictions", "generate_synthetic_erd", "hyper_sweep",
    "init_model", "load_checkpoint", "mirror_contrastive_loss", "mirror_trial",
    "mlp_block", "param_report", "read_trialset", "save_checkpoint",
    "sliding_standardize", "split_new_subject", "stw_msa", "total_loss",
    "train", "tw_msa", "windowed_attention", "write_trialset",
]
