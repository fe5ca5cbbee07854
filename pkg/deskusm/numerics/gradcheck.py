from __future__ import annotations

import logging
from typing import Callable, List, Mapping, Sequence, Tuple, Union

import numpy as np

from .models import GradReport
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

NamedParams = Union[Mapping[str, Tensor], Sequence[Tuple[str, Tensor]]]


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric)) / scale


def grad_check(loss_fn: Callable[[], Tensor], params: NamedParams, step: float = 1e-5) -> GradReport:
    """Compare autodiff gradients with central finite differences, parameter by parameter."""
    if step <= 0:
        raise ValueError(f"finite-difference step must be positive, got {step}")
    named = list(params.items()) if isinstance(params, Mapping) else list(params)

    for _, p in named:
        p.grad = None
        p.data = np.ascontiguousarray(p.data)
    loss = loss_fn()
    nonfinite: List[str] = []
    if not np.isfinite(loss.data).all():
        nonfinite.append("<loss>")
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in named}

    errors: List[Tuple[str, float]] = []
    with no_grad():
        for name, p in named:
            numeric = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            bad = False
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                f_plus = float(loss_fn().data)
                flat[i] = orig - step
                f_minus = float(loss_fn().data)
                flat[i] = orig
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    nonfinite.append(f"{name}[{i}]")
                    bad = True
                    continue
                numeric.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * step)
            err = float("inf") if bad else _relative_error(analytic[name], numeric)
            errors.append((name, err))

    if nonfinite:
        log.warning("grad_check: non-finite loss at %d probe points (first: %s)", len(nonfinite), nonfinite[0])
    if "<loss>" in nonfinite:
        errors.append(("<loss>", float("inf")))
    worst = max((e for _, e in errors), default=0.0)
    return GradReport(max_relative_error=worst, per_parameter_errors=tuple(errors), nonfinite_probes=tuple(nonfinite))
