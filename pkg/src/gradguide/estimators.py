"""scikit-learn style front ends for the attacks.

Each attack is an estimator whose constructor arguments are its
hyperparameters, so ``get_params``/``set_params``/``clone`` work as usual::

    attack = GradientGuidedAttack(clf, kappa=0.0, c_steps=1)
    X_adv = attack.generate(X, y_target)
    results = attack.attack(X, y_target)   # per-example AttackResult

``classifier`` may be a fitted :class:`~gradguide.nn.MLPClassifier` or a
bare :class:`~gradguide.nn.MlpModel`.
"""

from dataclasses import fields

import numpy as np
from sklearn.base import BaseEstimator

from .attacks import AttackConfig, ifgsm_l2_attack, run_c_search
from .exceptions import UsageError
from .nn import MlpModel

_CONFIG_FIELDS = {f.name for f in fields(AttackConfig)}


def _as_model(classifier):
    if isinstance(classifier, MlpModel):
        return classifier
    model = getattr(classifier, "model_", None)
    if model is None:
        raise UsageError("classifier must be an MlpModel or a fitted MLPClassifier")
    return model


def check_attack_inputs(model, X, y_target):
    """Validate a batch of inputs and targets against ``model``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y_target = np.atleast_1d(np.asarray(y_target, dtype=np.int64))
    if X.shape[1] != model.input_dim:
        raise UsageError(f"X has {X.shape[1]} features, model expects {model.input_dim}")
    if y_target.shape != (X.shape[0],):
        raise UsageError("need exactly one target per row of X")
    if y_target.min() < 0 or y_target.max() >= model.num_classes:
        raise UsageError("target class out of range")
    if not np.all(np.isfinite(X)):
        raise UsageError("X contains non-finite values")
    return X, y_target


class _BaseAttack(BaseEstimator):
    _family = None

    def _config(self):
        params = {k: v for k, v in self.get_params(deep=False).items() if k in _CONFIG_FIELDS}
        return AttackConfig(**params)

    def fit(self, X=None, y=None):
        """Validate hyperparameters; the attacks themselves are not trained."""
        self.config_ = self._config()
        self.model_ = _as_model(self.classifier)
        return self

    def _attack_one(self, model, x, t, cfg):
        return run_c_search(model, x, t, cfg, self._family)

    def attack(self, X, y_target):
        """Attack each row of ``X``; returns a list of AttackResult."""
        self.fit()
        X, y_target = check_attack_inputs(self.model_, X, y_target)
        return [self._attack_one(self.model_, x, int(t), self.config_)
                for x, t in zip(X, y_target)]

    def generate(self, X, y_target):
        """Adversarial examples as an array shaped like ``X``."""
        return np.stack([r.adversarial for r in self.attack(X, y_target)])


class GradientGuidedAttack(_BaseAttack):
    """Search along the normalized gradient with per-feature magnitudes.

    Parameters
    ----------
    classifier : MLPClassifier or MlpModel
    kappa : float, default=0.0
        Required logit margin of the target class.
    c_init, c_steps : float, int
        Initial constant and number of constants tried.
    theta0 : float, default=0.01
        Initial magnitude of every feature's step.
    lr : float, default=0.01
        Adam learning rate for the magnitudes.
    max_iterations : int, default=100
        Adam steps per outer step.
    out_step : int, default=20
        Maximum number of outer steps.
    """

    _family = "grad_guided"

    def __init__(self, classifier=None, kappa=0.0, c_init=10.0, c_steps=1, theta0=0.01,
                 lr=0.01, max_iterations=100, out_step=20, abort_early=True,
                 box_lo=0.0, box_hi=1.0):
        self.classifier = classifier
        self.kappa = kappa
        self.c_init = c_init
        self.c_steps = c_steps
        self.theta0 = theta0
        self.lr = lr
        self.max_iterations = max_iterations
        self.out_step = out_step
        self.abort_early = abort_early
        self.box_lo = box_lo
        self.box_hi = box_hi


class CarliniWagnerL2(_BaseAttack):
    """Carlini-Wagner L2 with a search over the constant ``c``."""

    _family = "cw"

    def __init__(self, classifier=None, kappa=0.0, c_init=10.0, c_steps=1, lr=0.01,
                 max_iterations=100, abort_early=True, box_lo=0.0, box_hi=1.0):
        self.classifier = classifier
        self.kappa = kappa
        self.c_init = c_init
        self.c_steps = c_steps
        self.lr = lr
        self.max_iterations = max_iterations
        self.abort_early = abort_early
        self.box_lo = box_lo
        self.box_hi = box_hi


class LBFGSAttack(_BaseAttack):
    """Projected L-BFGS on the same objective as CW."""

    _family = "lbfgs"

    def __init__(self, classifier=None, kappa=0.0, c_init=10.0, c_steps=1,
                 max_iterations=100, box_lo=0.0, box_hi=1.0):
        self.classifier = classifier
        self.kappa = kappa
        self.c_init = c_init
        self.c_steps = c_steps
        self.max_iterations = max_iterations
        self.box_lo = box_lo
        self.box_hi = box_hi


class IterativeFGSML2(_BaseAttack):
    """L2 iterative gradient steps inside a ball of radius ``epsilon``."""

    def __init__(self, classifier=None, kappa=0.0, epsilon=1.0, max_iterations=100,
                 box_lo=0.0, box_hi=1.0):
        self.classifier = classifier
        self.kappa = kappa
        self.epsilon = epsilon
        self.max_iterations = max_iterations
        self.box_lo = box_lo
        self.box_hi = box_hi

    def _attack_one(self, model, x, t, cfg):
        return ifgsm_l2_attack(model, x, t, cfg)
