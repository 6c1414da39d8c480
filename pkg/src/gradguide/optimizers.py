"""Adam, L-BFGS and box projection.

Adam is written as a pure function over an immutable state so that the
attacks can restart it cheaply (fresh state per inner loop) and so that
trajectories are reproducible bit for bit.
"""

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import LineSearchError, UsageError


@dataclass(frozen=True)
class AdamState:
    """Moment estimates and step counter for one parameter array."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **hyper):
        params = np.asarray(params, dtype=np.float64)
        return cls(m=np.zeros_like(params), v=np.zeros_like(params), **hyper)


def adam_step(state, params, grad):
    """One bias-corrected Adam update.

    Returns
    -------
    (AdamState, ndarray)
        The advanced state and the updated parameters. Inputs are not
        modified.
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise UsageError(
            f"adam_step shape mismatch: params {params.shape}, grad {grad.shape}, "
            f"state {state.m.shape}"
        )
    t = state.step_count + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, step_count=t), new_params


@dataclass
class LbfgsState:
    """Ring buffer of curvature pairs ``(s, y)``, newest last."""

    m_hist: int = 10
    curvature_eps: float = 1e-10
    history: deque = field(default=None)

    def __post_init__(self):
        if self.history is None:
            self.history = deque(maxlen=self.m_hist)

    def update(self, s, y):
        """Store the pair if ``s.y > curvature_eps``; return whether it was kept."""
        s = np.asarray(s, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if float(s @ y) <= self.curvature_eps:
            return False
        self.history.append((s.copy(), y.copy()))
        return True

    def clear(self):
        self.history.clear()


def lbfgs_direction(state, grad):
    """Two-loop recursion: approximate ``-H @ grad``.

    With an empty history this is steepest descent. A zero gradient yields
    a zero direction.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if not np.any(grad):
        return np.zeros_like(grad)
    q = grad.copy()
    pairs = list(state.history)
    alphas = []
    for s, y in reversed(pairs):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((a, rho))
    if pairs:
        s, y = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (a, rho) in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def armijo_line_search(f, p, d, g, *, c1=1e-4, shrink=0.5, max_halvings=30, f0=None):
    """Backtracking search for a step satisfying sufficient decrease.

    Starts from ``alpha = 1`` and halves until
    ``f(p + alpha*d) <= f(p) + c1*alpha*d.g``.

    Raises
    ------
    UsageError
        If ``d`` is not a descent direction.
    LineSearchError
        If no step is accepted after ``max_halvings`` halvings.
    """
    p = np.asarray(p, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    slope = float(np.asarray(g, dtype=np.float64) @ d)
    if not slope < 0.0:
        raise UsageError(f"line search needs a descent direction (d.g = {slope})")
    fp = f(p) if f0 is None else f0
    alpha = 1.0
    for _ in range(max_halvings + 1):
        if f(p + alpha * d) <= fp + c1 * alpha * slope:
            return alpha
        alpha *= shrink
    raise LineSearchError(f"no admissible step after {max_halvings} halvings")


def project_box(t, lo, hi):
    if lo > hi:
        raise UsageError(f"box bounds reversed: lo={lo} > hi={hi}")
    return np.clip(np.asarray(t, dtype=np.float64), lo, hi)


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    line_search_failed: bool = False


def projected_lbfgs(fun_and_grad, x0, lo=-np.inf, hi=np.inf, *, max_iter=100,
                    tol=1e-6, m_hist=10, callback=None):
    """Minimize a smooth function over a box with projected L-BFGS.

    Each iteration takes the L-BFGS direction, backtracks along the
    projected path ``proj(x + alpha*d)`` and clamps the accepted point. The
    curvature history is reset whenever the direction fails to descend.

    Parameters
    ----------
    fun_and_grad : callable
        ``x -> (value, gradient)``.
    callback : callable, optional
        Called as ``callback(x, value)`` after every accepted iterate.
        Returning ``True`` stops the run.
    """
    x = project_box(x0, lo, hi)
    fx, gx = fun_and_grad(x)
    state = LbfgsState(m_hist=m_hist)

    def value(z):
        return fun_and_grad(project_box(z, lo, hi))[0]

    it = 0
    while it < max_iter:
        if np.linalg.norm(project_box(x - gx, lo, hi) - x) < tol:
            return LbfgsResult(x, fx, it, converged=True)
        d = lbfgs_direction(state, gx)
        if not d @ gx < 0.0:
            state.clear()
            d = -gx
        try:
            alpha = armijo_line_search(value, x, d, gx, f0=fx)
        except LineSearchError:
            return LbfgsResult(x, fx, it, converged=False, line_search_failed=True)
        x_new = project_box(x + alpha * d, lo, hi)
        f_new, g_new = fun_and_grad(x_new)
        state.update(x_new - x, g_new - gx)
        x, fx, gx = x_new, f_new, g_new
        it += 1
        if callback is not None and callback(x, fx):
            break
    converged = bool(np.linalg.norm(project_box(x - gx, lo, hi) - x) < tol)
    return LbfgsResult(x, fx, it, converged=converged)
