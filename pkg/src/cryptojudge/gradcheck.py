"""Central finite-difference gradient checking for the hand-written backprop."""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

DEFAULT_H = 1e-5
_TINY = 1e-12


def numeric_grad(f: Callable[[np.ndarray], float], theta: np.ndarray, h: float = DEFAULT_H) -> np.ndarray:
    """(f(theta + h e_i) - f(theta - h e_i)) / 2h for every coordinate."""
    theta = np.array(theta, dtype=float)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        orig = theta.flat[i]
        theta.flat[i] = orig + h
        f_plus = f(theta)
        theta.flat[i] = orig - h
        f_minus = f(theta)
        theta.flat[i] = orig
        grad.flat[i] = (f_plus - f_minus) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a|| + ||n||, tiny)."""
    a = np.asarray(analytic, dtype=float).ravel()
    n = np.asarray(numeric, dtype=float).ravel()
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), _TINY))


@dataclass(frozen=True)
class GradCheck:
    analytic: np.ndarray
    numeric: np.ndarray
    error: float

    def ok(self, tol: float = 1e-5) -> bool:
        return self.error <= tol


def check_grad(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    theta: np.ndarray,
    h: float = DEFAULT_H,
) -> GradCheck:
    """Compare an analytic gradient against central differences at ``theta``."""
    analytic = np.asarray(grad(np.array(theta, dtype=float)), dtype=float)
    numeric = numeric_grad(f, theta, h)
    return GradCheck(analytic=analytic, numeric=numeric, error=relative_error(analytic, numeric))
