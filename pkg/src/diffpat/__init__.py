"""Class-differential conjunctive pattern discovery on binary data."""

__version__ = "0.1.0"

from .data import (BinaryDataset, LabeledDataset, Pattern, DataError, ParseError,
                   load_sparse, save_sparse, support, support_in_class,
                   prob_pattern_given_class, prob_class_given_pattern,
                   is_differential, density)
from .model import (ModelParams, ForwardTrace, init_params, stochastic_binarize,
                    deterministic_binarize, encode, decode, classify, forward,
                    save_checkpoint, load_checkpoint)
from .train import (TrainConfig, TrainReport, Gradients, recon_loss, class_loss,
                    reg_pattern_length, reg_w_shape, offset_weights, total_loss,
                    backward, train)
from .extract import (DifferentialPatterns, extract_patterns, assign_classes,
                      discretized_error, grid_search_thresholds, default_grid)
from .synth import SyntheticSpec, GroundTruth, generate, low_dim_variant
from .evaluate import (EvalReport, soft_f1, multiclass_soft_f1, filter_spurious,
                       coverage, auc_specificity_coverage, mean_log_odds,
                       summarize, jaccard)

__all__ = [name for name in dir() if not name.startswith("_")]
