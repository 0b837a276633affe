"""Optimizers over flat parameter vectors.

Both optimizers treat the objective as a closure mapping a flat float64
vector to (loss, gradient), so the same code drives the physics loss and
plain test functions.  Adam handles the stochastic stage with a geometric
learning-rate decay; the L-BFGS stage runs full batch with a step guard
that restores a checkpoint whenever a proposal raises the loss, instead
of a line search.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, StallDetected


def geometric_lr(start: float = 1e-3, end: float = 1e-4,
                 decay_steps: int = 1500):
    """Step-indexed learning rate: geometric decay to `end`, then constant.

    lr(0) = start, lr(decay_steps) = end, flat afterwards.
    """
    if start <= 0.0 or end <= 0.0:
        raise ConfigError("learning rates must be positive")
    if end > start:
        raise ConfigError("decayed learning rate must not exceed the start")
    if decay_steps <= 0:
        raise ConfigError("decay_steps must be positive")
    ratio = end / start

    def lr(step: int) -> float:
        frac = min(step / decay_steps, 1.0)
        return start * ratio ** frac
    return lr


class Adam:
    """Adam with bias correction over a flat vector.

    The learning rate may be a constant or a callable of the 0-based step
    index; `step` returns the updated vector without mutating its input.
    """

    def __init__(self, n: int, lr=None, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if n <= 0:
            raise ConfigError("parameter count must be positive")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError("Adam betas must lie in [0, 1)")
        lr = geometric_lr() if lr is None else lr
        self.lr = lr if callable(lr) else (lambda step, v=float(lr): v)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        g = np.asarray(grad, dtype=float)
        if g.shape != self.m.shape:
            raise ConfigError("gradient size does not match optimizer state")
        rate = self.lr(self.t)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return x - rate * m_hat / (np.sqrt(v_hat) + self.eps)


def run_adam(x0: np.ndarray, closure, steps: int, lr=None,
             callback=None) -> tuple[np.ndarray, np.ndarray]:
    """Drive Adam for `steps` closure evaluations; returns (x, loss trace)."""
    x = np.asarray(x0, dtype=float).copy()
    opt = Adam(x.size, lr=lr)
    history = np.empty(steps)
    for k in range(steps):
        f, g = closure(x)
        history[k] = f
        x = opt.step(x, g)
        if callback is not None:
            callback(k, x, f)
    return x, history


@dataclass
class LbfgsResult:
    """Outcome of a guarded L-BFGS stage."""

    x: np.ndarray                 # best parameters seen
    loss: float                   # loss at x
    history: np.ndarray           # retained loss after each iteration
    n_steps: int = 0              # iterations consumed (accepts + rejects)
    accepted: int = 0
    rejections: int = 0
    stalled: bool = False
    pairs: deque = field(default_factory=deque, repr=False)


def _two_loop(grad: np.ndarray, pairs) -> np.ndarray:
    """Standard two-loop recursion; H0 = gamma * I from the newest pair."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * s.dot(q)
        alphas.append(a)
        q -= a * y
    s, y, _ = pairs[-1]
    q *= s.dot(y) / y.dot(y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        q += (a - rho * y.dot(q)) * s
    return q


def lbfgs_minimize(x0: np.ndarray, closure, steps: int = 10000,
                   history_size: int = 50, warm_start: int = 50,
                   warm_scale: float = 0.1, grow: float = 1.5,
                   max_rejects: int = 50, grad_tol: float = 1e-14,
                   raise_on_stall: bool = False, callback=None,
                   state: LbfgsResult | None = None) -> LbfgsResult:
    """Limited-memory BFGS with a checkpoint guard instead of a line search.

    Each iteration proposes x + scale * d along the two-loop direction.  If
    the proposal's loss is higher (or non-finite) the checkpoint is kept, the
    step scale is halved and the iteration is spent; on acceptance the scale
    ramps back toward 1.  During the first `warm_start` iterations the scale
    is capped at `warm_scale` so early steps build curvature pairs without
    large moves.  After `max_rejects` consecutive rejections the stage stops
    and the best iterate seen is returned (or StallDetected is raised when
    `raise_on_stall`).  Passing a previous result as `state` resumes with its
    curvature pairs.
    """
    if steps < 0 or history_size <= 0 or warm_start < 0:
        raise ConfigError("lbfgs step counts must be non-negative")
    x = np.asarray(x0, dtype=float).copy()
    f, g = closure(x)
    if not np.isfinite(f):
        raise StallDetected("initial loss is non-finite")
    pairs = deque(state.pairs, maxlen=history_size) if state is not None \
        else deque(maxlen=history_size)

    best_x, best_f = x.copy(), f
    scale = 1.0
    consecutive = 0
    accepted = rejections = 0
    history = np.empty(steps)
    stalled = False
    n_done = 0

    for k in range(steps):
        if np.max(np.abs(g)) < grad_tol:
            history = history[:k]
            break
        d = -_two_loop(g, pairs) if pairs \
            else -g * min(1.0, 1.0 / max(np.linalg.norm(g), 1e-30))
        cap = warm_scale if k < warm_start else 1.0
        step_scale = min(scale, cap)
        x_new = x + step_scale * d
        f_new, g_new = closure(x_new)
        n_done = k + 1
        if np.isfinite(f_new) and f_new <= f:
            s_vec = x_new - x
            y_vec = g_new - g
            sy = s_vec.dot(y_vec)
            if sy > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
                pairs.append((s_vec, y_vec, 1.0 / sy))
            x, f, g = x_new, f_new, g_new
            accepted += 1
            consecutive = 0
            scale = min(1.0, scale * grow)
            if f < best_f:
                best_f, best_x = f, x.copy()
        else:
            rejections += 1
            consecutive += 1
            scale *= 0.5
            if consecutive >= max_rejects:
                history = history[:k + 1]
                history[k] = f
                stalled = True
                break
        history[k] = f
        if callback is not None:
            callback(k, x, f)

    if stalled and raise_on_stall:
        raise StallDetected(
            f"{consecutive} consecutive rejected steps at loss {f:.3e}")
    return LbfgsResult(x=best_x, loss=best_f, history=history,
                       n_steps=n_done, accepted=accepted,
                       rejections=rejections, stalled=stalled, pairs=pairs)
