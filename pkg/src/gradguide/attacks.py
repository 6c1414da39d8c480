"""Targeted L2 attacks on :class:`~gradguide.nn.MlpModel` classifiers.

All attacks minimize (or, for I-FGSM, descend) the hinge loss
``f(x', t) = max(max_{i != t} Z_i - Z_t, -kappa)`` and work on one example
at a time. A candidate counts as reaching the target once the model
predicts ``t`` with a logit margin of at least ``kappa``; the reported
``success`` flag is the plain ``classify == t`` check.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import UsageError
from .nn import argmax_lowest, forward_logits, hinge_value_and_grad, target_margin
from .optimizers import AdamState, adam_step, project_box, projected_lbfgs

STATUS_OK = "ok"
STATUS_DEGENERATE = "degenerate_gradient"
STATUS_LINE_SEARCH = "line_search_failed"
STATUS_STALLED = "stalled"


@dataclass(frozen=True)
class AttackConfig:
    """Hyperparameters shared by all attacks.

    ``max_iterations`` is the inner Adam budget per value of ``c`` (per outer
    step for the gradient-guided attack). ``abort_early_window`` of ``None``
    means ``max_iterations // 10``.
    """

    kappa: float = 0.0
    c_init: float = 10.0
    c_steps: int = 1
    theta0: float = 0.01
    lr: float = 0.01
    max_iterations: int = 100
    out_step: int = 20
    abort_early: bool = True
    abort_early_window: int = None
    abort_early_min_improve: float = 1e-4
    box_lo: float = 0.0
    box_hi: float = 1.0
    epsilon: float = 1.0
    record_trajectory: bool = False

    def __post_init__(self):
        if self.kappa < 0:
            raise UsageError("kappa must be non-negative")
        if not self.box_lo < self.box_hi:
            raise UsageError("box_lo must be below box_hi")
        if min(self.c_steps, self.max_iterations, self.out_step) < 1:
            raise UsageError("iteration counts must be positive")
        if min(self.c_init, self.theta0, self.lr, self.epsilon) <= 0:
            raise UsageError("c_init, theta0, lr and epsilon must be positive")

    @property
    def window(self):
        if self.abort_early_window is not None:
            return max(1, int(self.abort_early_window))
        return max(1, self.max_iterations // 10)


@dataclass
class AttackResult:
    adversarial: np.ndarray
    success: bool
    l2_distance: float
    iterations: int
    c_used: float
    status: str = STATUS_OK
    margin: float = 0.0
    trajectory: list = None
    # gradient-guided only: unit gradient at each committed iterate, and the
    # uniform-theta point x_i - theta0 * g_hat taken right after each reset
    directions: list = field(default=None, repr=False)
    initial_steps: list = field(default=None, repr=False)


def _finish(m, x, t, adv, iterations, c, status=STATUS_OK, trajectory=None, directions=None,
            initial_steps=None):
    """Build a result, recomputing success and distance from scratch."""
    z = forward_logits(m, adv)
    return AttackResult(
        adversarial=adv,
        success=argmax_lowest(z) == t,
        l2_distance=float(np.linalg.norm(adv - x)),
        iterations=int(iterations),
        c_used=float(c),
        status=status,
        margin=target_margin(z, t),
        trajectory=trajectory,
        directions=directions,
        initial_steps=initial_steps,
    )


def reached_target(m, x, t, kappa):
    """True once ``x`` is classified as ``t`` with margin ``>= kappa``."""
    z = forward_logits(m, x)
    return argmax_lowest(z) == t and target_margin(z, t) >= kappa


class _AbortEarly:
    """Stops a loop whose best loss has not improved enough within a window."""

    def __init__(self, cfg):
        self.enabled = cfg.abort_early
        self.window = cfg.window
        self.min_improve = cfg.abort_early_min_improve
        self.checkpoint = np.inf

    def should_stop(self, step, best_loss):
        if not self.enabled or step % self.window:
            return False
        prev, self.checkpoint = self.checkpoint, best_loss
        if not np.isfinite(prev):
            return False
        return prev - best_loss <= self.min_improve * abs(prev)


def _check_args(m, x, t):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.input_dim,):
        raise UsageError(f"input of shape {x.shape} does not match input_dim {m.input_dim}")
    if not 0 <= int(t) < m.num_classes:
        raise UsageError(f"target {t} out of range")
    return x, int(t)


def _objective(m, x, xc, t, c, kappa):
    """Value, gradient w.r.t. ``xc`` and logits of ``||xc - x||^2 + c f(xc, t)``."""
    delta = xc - x
    f, gf = hinge_value_and_grad(m, xc, t, kappa)
    return float(delta @ delta) + c * f, 2.0 * delta + c * gf


class _BestTracker:
    """Keeps the closest candidate that reaches the target."""

    def __init__(self, m, x, t, kappa):
        self.m, self.x, self.t, self.kappa = m, x, t, kappa
        self.adv = None
        self.dist = np.inf

    def offer(self, cand):
        dist = float(np.linalg.norm(cand - self.x))
        if dist < self.dist and reached_target(self.m, cand, self.t, self.kappa):
            self.adv, self.dist = cand.copy(), dist
            return True
        return False


def grad_guided_attack(m, x, t, cfg=AttackConfig()):
    """Search along the normalized hinge gradient with a per-feature magnitude.

    Each outer step freezes ``g`` at the current iterate, resets the
    magnitudes ``theta`` to ``theta0`` and runs up to ``max_iterations``
    Adam steps on ``||x_i - theta*g_hat - x||^2 + c f(x_i - theta*g_hat, t)``.
    The iterate advances with the lowest-loss ``theta``, clamped to the box.
    The loop ends once the iterate reaches the target or after ``out_step``
    outer steps. The closest target-reaching candidate seen anywhere is
    returned. Uses ``cfg.c_init`` as the constant; see :func:`run_c_search`.
    """
    x, t = _check_args(m, x, t)
    c, kappa = cfg.c_init, cfg.kappa
    lo, hi = cfg.box_lo, cfg.box_hi
    record = cfg.record_trajectory
    trajectory = [x.copy()] if record else None
    directions = [] if record else None
    initial_steps = [] if record else None
    best = _BestTracker(m, x, t, kappa)
    current = x.copy()
    iterations = 0
    status = STATUS_OK

    for _ in range(cfg.out_step):
        if reached_target(m, current, t, kappa):
            break
        _, g = hinge_value_and_grad(m, current, t, kappa)
        g_norm = np.linalg.norm(g)
        if g_norm == 0.0:
            status = STATUS_DEGENERATE
            break
        g_hat = g / g_norm
        if record:
            directions.append(g_hat)
            initial_steps.append(current - cfg.theta0 * g_hat)

        theta = np.full_like(x, cfg.theta0)
        state = AdamState.zeros_like(theta, lr=cfg.lr)
        abort = _AbortEarly(cfg)
        best_loss, best_theta = np.inf, theta
        for step in range(cfg.max_iterations + 1):
            if step:
                state, theta = adam_step(state, theta, grad_theta)
                iterations += 1
            cand = current - theta * g_hat
            loss, grad_x = _objective(m, x, cand, t, c, kappa)
            best.offer(project_box(cand, lo, hi))
            if loss < best_loss:
                best_loss, best_theta = loss, theta
            if step and abort.should_stop(step, best_loss):
                break
            grad_theta = -g_hat * grad_x

        current = project_box(current - best_theta * g_hat, lo, hi)
        best.offer(current)
        if record:
            trajectory.append(current.copy())

    adv = best.adv if best.adv is not None else current
    return _finish(m, x, t, adv, iterations, c, status, trajectory, directions, initial_steps)


def _to_tanh_space(x, lo, hi, eps=1e-6):
    unit = (x - lo) / (hi - lo) * 2.0 - 1.0
    return np.arctanh(np.clip(unit, -1.0 + eps, 1.0 - eps))


def _from_tanh_space(w, lo, hi):
    return (hi - lo) * (np.tanh(w) + 1.0) / 2.0 + lo


def cw_l2_attack(m, x, t, cfg=AttackConfig()):
    """Carlini-Wagner L2 for a single constant ``cfg.c_init``.

    Adam runs on ``w`` with ``x' = (hi - lo) (tanh(w) + 1) / 2 + lo``,
    starting from the ``w`` that maps back onto ``x``.
    """
    x, t = _check_args(m, x, t)
    c, kappa = cfg.c_init, cfg.kappa
    lo, hi = cfg.box_lo, cfg.box_hi
    w = _to_tanh_space(x, lo, hi)
    state = AdamState.zeros_like(w, lr=cfg.lr)
    best = _BestTracker(m, x, t, kappa)
    abort = _AbortEarly(cfg)
    trajectory = [x.copy()] if cfg.record_trajectory else None
    best_loss = np.inf
    iterations = 0
    for step in range(cfg.max_iterations + 1):
        if step:
            state, w = adam_step(state, w, grad_w)
            iterations += 1
        tw = np.tanh(w)
        cand = (hi - lo) * (tw + 1.0) / 2.0 + lo
        if trajectory is not None and step:
            trajectory.append(cand.copy())
        loss, grad_x = _objective(m, x, cand, t, c, kappa)
        best.offer(cand)
        best_loss = min(best_loss, loss)
        if step and abort.should_stop(step, best_loss):
            break
        grad_w = grad_x * (hi - lo) / 2.0 * (1.0 - tw * tw)
    adv = best.adv if best.adv is not None else project_box(cand, lo, hi)
    return _finish(m, x, t, adv, iterations, c, trajectory=trajectory)


def run_c_search(m, x, t, cfg=AttackConfig(), attack="cw"):
    """Run an attack for ``cfg.c_steps`` values of the constant ``c``.

    ``c`` starts at ``c_init``; it grows tenfold after failures until some
    value succeeds, then bisects between the largest failing and smallest
    succeeding value. The closest success over all runs is returned;
    ``iterations`` is the total across runs.
    """
    attack_fn = ATTACKS[attack] if isinstance(attack, str) else attack
    c = cfg.c_init
    c_lo, c_hi = 0.0, None
    best = last = None
    total = 0
    for _ in range(cfg.c_steps):
        res = attack_fn(m, x, t, replace(cfg, c_init=c))
        total += res.iterations
        last = res
        if res.success and res.margin >= cfg.kappa:
            if best is None or res.l2_distance < best.l2_distance:
                best = res
            c_hi = c
            c = (c_lo + c_hi) / 2.0
        else:
            c_lo = c
            c = c * 10.0 if c_hi is None else (c_lo + c_hi) / 2.0
    out = best if best is not None else last
    return replace(out, iterations=total)


def ifgsm_l2_attack(m, x, t, cfg=AttackConfig()):
    """Iterative L2 gradient steps on the hinge loss within an L2 ball.

    Steps have length ``epsilon / 10`` along the normalized gradient and
    are projected onto the ball ``||x' - x|| <= epsilon`` and the box. The
    run stops once the target is reached with margin ``kappa``, when a step
    no longer moves the iterate (budget exhausted), on a zero gradient, or
    after ``10 * max_iterations`` steps.
    """
    x, t = _check_args(m, x, t)
    eps, kappa = cfg.epsilon, cfg.kappa
    alpha = eps / 10.0
    current = x.copy()
    trajectory = [x.copy()] if cfg.record_trajectory else None
    status = STATUS_OK
    steps = 0
    while steps < 10 * cfg.max_iterations:
        if reached_target(m, current, t, kappa):
            break
        _, g = hinge_value_and_grad(m, current, t, kappa)
        g_norm = np.linalg.norm(g)
        if g_norm == 0.0:
            status = STATUS_DEGENERATE
            break
        nxt = current - alpha * g / g_norm
        delta = nxt - x
        d_norm = np.linalg.norm(delta)
        if d_norm > eps:
            nxt = x + delta * (eps / d_norm)
        nxt = project_box(nxt, cfg.box_lo, cfg.box_hi)
        steps += 1
        moved = np.linalg.norm(nxt - current)
        current = nxt
        if trajectory is not None:
            trajectory.append(current.copy())
        if moved <= 1e-9 * alpha:
            status = STATUS_STALLED
            break
    return _finish(m, x, t, current, steps, 0.0, status, trajectory)


def ifgsm_eps_sweep(m, X, targets, cfg=AttackConfig(), max_doublings=10):
    """Double ``epsilon`` from ``cfg.epsilon`` until every example succeeds.

    Returns
    -------
    epsilon : float
        The first budget with full success, or the last one tried when the
        cap of ``2**max_doublings * cfg.epsilon`` is hit.
    results : list of AttackResult
        Results at that budget.
    history : list of (epsilon, n_successes)
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.int64)
    if X.shape[0] == 0 or targets.shape != (X.shape[0],):
        raise UsageError("need one target per example and at least one example")
    eps = cfg.epsilon
    history = []
    best = None
    for _ in range(max_doublings + 1):
        run_cfg = replace(cfg, epsilon=eps)
        results = [ifgsm_l2_attack(m, x, t, run_cfg) for x, t in zip(X, targets)]
        wins = sum(r.success for r in results)
        history.append((eps, wins))
        if best is None or wins > best[2]:
            best = (eps, results, wins)
        if wins == len(results):
            return eps, results, history
        eps *= 2.0
    return best[0], best[1], history


def lbfgs_attack(m, x, t, cfg=AttackConfig()):
    """Minimize ``||x' - x||^2 + c f(x', t)`` over the box with projected L-BFGS.

    Starts at ``x``; runs at most ``max_iterations`` L-BFGS iterations and
    stops early on convergence or a failed line search.
    """
    x, t = _check_args(m, x, t)
    c, kappa = cfg.c_init, cfg.kappa
    best = _BestTracker(m, x, t, kappa)
    trajectory = [x.copy()] if cfg.record_trajectory else None

    def fun_and_grad(xc):
        return _objective(m, x, xc, t, c, kappa)

    def track(xc, _):
        best.offer(xc)
        if trajectory is not None:
            trajectory.append(xc.copy())
        return False

    best.offer(x)
    res = projected_lbfgs(fun_and_grad, x, cfg.box_lo, cfg.box_hi,
                          max_iter=cfg.max_iterations, tol=1e-6, callback=track)
    status = STATUS_LINE_SEARCH if res.line_search_failed else STATUS_OK
    adv = best.adv if best.adv is not None else res.x
    return _finish(m, x, t, adv, res.iterations, c, status, trajectory)


ATTACKS = {
    "grad_guided": grad_guided_attack,
    "cw": cw_l2_attack,
    "lbfgs": lbfgs_attack,
}
