"""Gradient-guided targeted L2 adversarial attacks with CW, I-FGSM and L-BFGS baselines."""

from .attacks import (
    AttackConfig,
    AttackResult,
    cw_l2_attack,
    grad_guided_attack,
    ifgsm_eps_sweep,
    ifgsm_l2_attack,
    lbfgs_attack,
    run_c_search,
)
from .data import LabeledDataset, gen_synthetic_2d, pick_targets, read_cifar10_bin, read_idx
from .estimators import CarliniWagnerL2, GradientGuidedAttack, IterativeFGSML2, LBFGSAttack
from .exceptions import DegenerateGradientError, LineSearchError, ParseError, UsageError
from .nn import MLPClassifier, MlpModel, classify, forward_logits, hinge_loss_f, grad_input_hinge

__version__ = "0.1.0"
