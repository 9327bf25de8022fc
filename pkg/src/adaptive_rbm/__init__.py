"""Binary RBMs whose hidden layer grows and shrinks during CD training."""
from ._validation import CapacityError, DimensionError
from .adaptive import (AdaptiveConfig, StructuralEvent, adaptive_epoch_hook,
                       annihilate, annihilation_candidates,
                       generation_candidates, generate_neuron)
from .classifier import SoftmaxHead, accuracy, features, train_head
from .core import (RbmModel, energy, exact_marginal, exact_partition,
                   free_energy, gibbs_sample, hidden_conditional,
                   log_partition, sample_binary, visible_conditional)
from .estimators import AdaptiveRBM, RBMClassifier
from .rng import make_rng
from .trainer import TrainResult, train
from .training import (BoundGaps, GradientStats, RunMetrics, TrainConfig,
                       WalkingDistance, bound_gaps, cd_gradients, sgd_epoch,
                       spectral_norm, walking_distance_step)

__version__ = "0.1.0"
