"""scikit-learn compatible wrappers."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin, clone
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y
from scipy.special import softmax

from . import classifier as clf
from . import rng as rngmod
from .adaptive import AdaptiveConfig
from .core import free_energy_unchecked, hidden_probs, visible_probs
from .trainer import train
from .training import TrainConfig


def _check_binary(X, n_features=None):
    X = check_array(X, dtype=np.float64)
    if not np.all((X == 0.0) | (X == 1.0)):
        raise ValueError("RBM inputs must be binary (0/1)")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, but the model was "
                         f"fitted with {n_features}")
    return X


class AdaptiveRBM(TransformerMixin, BaseEstimator):
    """Bernoulli RBM whose hidden layer can grow and shrink during training.

    Parameters
    ----------
    n_components : int, default=10
        Initial number of hidden units.
    learning_rate, batch_size, cd_k, n_iter
        Plain SGD with CD-k gradients for ``n_iter`` epochs.
    adaptive : bool, default=True
        When False the hidden layer keeps ``n_components`` units.
    theta_g, theta_a, alpha_c, alpha_w, gen_start_epoch, max_hidden,
    annihilation_start_epoch, patience, max_generations_per_epoch, child_noise
        Growth/pruning controls, see :class:`~adaptive_rbm.adaptive.AdaptiveConfig`.
    random_state : int, default=0
        Seed of every random stream used during training.

    Attributes
    ----------
    model_ : RbmModel
    components_ : ndarray of shape (n_hidden, n_features)
    intercept_hidden_, intercept_visible_ : ndarray
    history_ : list of RunMetrics, one per epoch
    events_ : list of StructuralEvent
    walking_distance_ : ndarray of shape (n_hidden,)
    """

    def __init__(self, n_components=10, *, learning_rate=0.1, batch_size=100,
                 cd_k=1, n_iter=10, ema_decay=0.9, wd_decay=0.9, adaptive=True,
                 theta_g=0.005, theta_a=0.3, alpha_c=1.0, alpha_w=1.0,
                 gen_start_epoch=10, max_hidden=1000,
                 annihilation_start_epoch=None, patience=20,
                 max_generations_per_epoch=3, child_noise=None,
                 random_state=0):
        self.n_components = n_components
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.cd_k = cd_k
        self.n_iter = n_iter
        self.ema_decay = ema_decay
        self.wd_decay = wd_decay
        self.adaptive = adaptive
        self.theta_g = theta_g
        self.theta_a = theta_a
        self.alpha_c = alpha_c
        self.alpha_w = alpha_w
        self.gen_start_epoch = gen_start_epoch
        self.max_hidden = max_hidden
        self.annihilation_start_epoch = annihilation_start_epoch
        self.patience = patience
        self.max_generations_per_epoch = max_generations_per_epoch
        self.child_noise = child_noise
        self.random_state = random_state

    def _configs(self):
        cfg = TrainConfig(learning_rate=self.learning_rate,
                          batch_size=self.batch_size, cd_k=self.cd_k,
                          epochs=self.n_iter, seed=int(self.random_state or 0),
                          ema_decay=self.ema_decay, wd_decay=self.wd_decay)
        acfg = None
        if self.adaptive:
            acfg = AdaptiveConfig(
                theta_g=self.theta_g, theta_a=self.theta_a,
                alpha_c=self.alpha_c, alpha_w=self.alpha_w,
                gen_start_epoch=self.gen_start_epoch,
                max_hidden=self.max_hidden,
                annihilation_start_epoch=self.annihilation_start_epoch,
                patience=self.patience,
                max_generations_per_epoch=self.max_generations_per_epoch,
                child_noise=self.child_noise)
        return cfg, acfg

    def fit(self, X, y=None):
        X = _check_binary(X)
        cfg, acfg = self._configs()
        result = train(X, cfg, n_hidden=self.n_components, adaptive=acfg)
        self.model_ = result.model
        self.history_ = result.history
        self.events_ = result.events
        self.walking_distance_ = result.walking.wd
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def components_(self):
        return self.model_.W.T

    @property
    def intercept_hidden_(self):
        return self.model_.c

    @property
    def intercept_visible_(self):
        return self.model_.b

    def transform(self, X):
        """Hidden-unit activation probabilities."""
        check_is_fitted(self, "model_")
        X = _check_binary(X, self.n_features_in_)
        return hidden_probs(self.model_, X)

    def score_samples(self, X):
        """Unnormalised log-probability, i.e. minus the free energy."""
        check_is_fitted(self, "model_")
        X = _check_binary(X, self.n_features_in_)
        return -free_energy_unchecked(self.model_, X)

    def gibbs(self, v):
        """One block-Gibbs sweep v -> h -> v'."""
        check_is_fitted(self, "model_")
        v = _check_binary(np.atleast_2d(v), self.n_features_in_)
        rng = rngmod.make_rng(int(self.random_state or 0), rngmod.SAMPLER)
        h = rng.random((v.shape[0], self.model_.n_hidden)) < hidden_probs(self.model_, v)
        pv = visible_probs(self.model_, h.astype(np.float64))
        return (rng.random(pv.shape) < pv).astype(np.float64)


class RBMClassifier(ClassifierMixin, BaseEstimator):
    """Softmax output layer trained on top of an :class:`AdaptiveRBM`.

    An unfitted ``rbm`` is cloned and fitted on ``X`` first; a fitted one is
    used as-is.  With ``fine_tune=True`` the RBM weights and hidden biases
    are refined by backpropagation together with the head (on a copy).
    """

    def __init__(self, rbm=None, *, epochs=100, learning_rate=0.1,
                 batch_size=100, fine_tune=False, random_state=0):
        self.rbm = rbm
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.fine_tune = fine_tune
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        X = _check_binary(X)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes")
        rbm = AdaptiveRBM() if self.rbm is None else self.rbm
        try:
            check_is_fitted(rbm, "model_")
        except NotFittedError:
            rbm = clone(rbm).fit(X)
        self.rbm_ = rbm
        self.head_, self.model_ = clf.train_head(
            rbm.model_, X, codes, epochs=self.epochs, lr=self.learning_rate,
            batch_size=self.batch_size, fine_tune=self.fine_tune,
            seed=int(self.random_state or 0), n_classes=self.classes_.size)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "head_")
        X = _check_binary(X, self.n_features_in_)
        return clf.scores(self.model_, self.head_, X)

    def predict_proba(self, X):
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
