"""Dense numeric primitives and a finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonFiniteInput


def _check_finite(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if not np.isfinite(m).all():
        raise NonFiniteInput("input contains NaN or infinite entries")
    return m


def softmax_rows(m: np.ndarray) -> np.ndarray:
    m = _check_finite(m)
    e = np.exp(m - m.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(m: np.ndarray) -> np.ndarray:
    m = _check_finite(m)
    shifted = m - m.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softplus(x):
    """ln(1 + e^x), evaluated without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


def softplus_grad(x):
    """Derivative of :func:`softplus`, i.e. the logistic function."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def leaky_relu(x, slope: float = 0.2):
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= 0, x, slope * x)
    return out if out.ndim else float(out)


def normalize_and_sort_logits(z: np.ndarray, sort: bool = True) -> np.ndarray:
    """Min-max scale each row to [0, 1], then sort it in descending order.

    Constant rows become all zeros. ``sort=False`` keeps class order.
    """
    z = np.asarray(z, dtype=np.float64)
    lo = z.min(axis=-1, keepdims=True)
    span = z.max(axis=-1, keepdims=True) - lo
    out = np.divide(z - lo, span, out=np.zeros_like(z), where=span > 0)
    if sort:
        out = -np.sort(-out, axis=-1, kind="stable")
    return out


@dataclass(frozen=True)
class GradCheckReport:
    max_relative_error: float
    parameter_index_of_max: int
    analytic: np.ndarray
    numeric: np.ndarray


def check_gradient(
    f: Callable[[np.ndarray], float],
    grad_f: Callable[[np.ndarray], np.ndarray],
    at,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare ``grad_f`` against central differences of ``f`` at ``at``.

    Per-coordinate error is |a - n| / max(1, |a|, |n|).
    """
    x0 = np.atleast_1d(np.asarray(at, dtype=np.float64)).copy()
    analytic = np.atleast_1d(np.asarray(grad_f(x0.copy()), dtype=np.float64))
    numeric = np.empty_like(x0)
    for k in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[k] += step
        xm[k] -= step
        fp, fm = float(f(xp)), float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteInput(f"objective not finite near coordinate {k}")
        numeric[k] = (fp - fm) / (2.0 * step)
    if not np.isfinite(analytic).all():
        raise NonFiniteInput("analytic gradient not finite")
    rel = np.abs(analytic - numeric) / np.maximum.reduce([np.ones_like(x0), np.abs(analytic), np.abs(numeric)])
    k = int(np.argmax(rel)) if rel.size else 0
    return GradCheckReport(float(rel[k]) if rel.size else 0.0, k, analytic, numeric)
