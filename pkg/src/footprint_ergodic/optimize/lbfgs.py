"""Limited-memory BFGS with a strong-Wolfe line search.

The line search itself is scipy's (``scipy.optimize.line_search``); this module
owns the two-loop recursion, the fallbacks and the bookkeeping the solver
needs (Armijo checks per accepted step, stall handling).
"""
from __future__ import annotations

import logging
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import line_search
from scipy.optimize._linesearch import LineSearchWarning

logger = logging.getLogger(__name__)

C1 = 1e-4
C2 = 0.9


@dataclass
class LBFGSResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    iterations: int
    evaluations: int
    converged: bool
    armijo_ok: list = field(default_factory=list)
    message: str = ""


class _Cached:
    """Memoize the last few (f, g) pairs so scipy's split f/fprime calls share work."""

    def __init__(self, fun):
        self.fun = fun
        self.count = 0
        self._cache = {}

    def __call__(self, x):
        key = x.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            self.count += 1
            f, g = self.fun(x)
            hit = (float(f), np.asarray(g, dtype=float))
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def f(self, x):
        return self(x)[0]

    def g(self, x):
        return self(x)[1]


def two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho))
        q -= a * y
    if S:
        s, y = S[-1], Y[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (a, rho) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += s * (a - b)
    return -q


def _backtrack(fun, x, f, g, d, alpha=1.0, shrink=0.5, tries=40):
    slope = g @ d
    for _ in range(tries):
        xn = x + alpha * d
        fn, gn = fun(xn)
        if np.isfinite(fn) and fn <= f + C1 * alpha * slope:
            return alpha, fn, gn
        alpha *= shrink
    return None, None, None


def minimize(fun, x0, memory=10, max_iter=500, gtol=1e-6, stall_tol=1e-10, stall_iters=5):
    """Minimize ``fun(x) -> (f, grad)`` from x0.

    Stops when ||grad||_inf < gtol or after max_iter iterations. If the relative
    decrease stays below ``stall_tol`` for ``stall_iters`` iterations the memory
    is dropped and one steepest-descent step is tried; a second stall ends the run.
    """
    fc = _Cached(fun)
    x = np.asarray(x0, dtype=float).copy()
    f, g = fc(x)
    if not np.isfinite(f):
        return LBFGSResult(x, f, g, 0, fc.count, False, message="non-finite start")
    S, Y = deque(maxlen=memory), deque(maxlen=memory)
    armijo = []
    stalled, restarted = 0, False
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < gtol:
            return LBFGSResult(x, f, g, it - 1, fc.count, True, armijo, "gradient tolerance")
        d = two_loop(g, S, Y)
        if g @ d >= 0:
            S.clear(), Y.clear()
            d = -g
        with warnings.catch_warnings():
            # a failed search is handled below, no need for scipy's warning
            warnings.simplefilter("ignore", LineSearchWarning)
            alpha, _, _, fn, _, _ = line_search(fc.f, fc.g, x, d, gfk=g, old_fval=f,
                                                c1=C1, c2=C2)
        gn = None
        if alpha is None or fn is None or not np.isfinite(fn):
            # scipy gave up on the strong Wolfe search, fall back to Armijo backtracking
            S.clear(), Y.clear()
            d = -g
            alpha, fn, gn = _backtrack(fc, x, f, g, d, alpha=1.0 / max(1.0, np.linalg.norm(g)))
            if alpha is None:
                return LBFGSResult(x, f, g, it, fc.count, False, armijo, "line search failed")
        if gn is None:
            gn = fc.g(x + alpha * d)
        step = alpha * d
        armijo.append(bool(fn <= f + C1 * alpha * (g @ d) + 1e-15 * abs(f)))
        xn = x + step
        y = gn - g
        if y @ step > 1e-12 * np.linalg.norm(y) * np.linalg.norm(step):
            S.append(step)
            Y.append(y)
        rel = (f - fn) / max(abs(f), abs(fn), 1e-300)
        x, f, g = xn, fn, gn
        if rel < stall_tol:
            stalled += 1
            if stalled >= stall_iters:
                if restarted:
                    return LBFGSResult(x, f, g, it, fc.count, False, armijo, "stalled")
                logger.debug("lbfgs stalled at iteration %d, restarting from steepest descent", it)
                S.clear(), Y.clear()
                restarted, stalled = True, 0
        else:
            stalled = 0
    return LBFGSResult(x, f, g, max_iter, fc.count, np.max(np.abs(g)) < gtol, armijo,
                       "iteration cap")
