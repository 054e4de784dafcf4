"""Central finite differences with per-coordinate relative steps."""

import numpy as np

from .errors import EvaluationError

#: Optimal relative step for O(h^2) central differences.
DEFAULT_STEP_SCALE = float(np.finfo(float).eps ** (1.0 / 3.0))
#: Optimal relative step for the O(h^4) five-point stencil.
FIVE_POINT_STEP_SCALE = float(np.finfo(float).eps ** (1.0 / 5.0))

_STENCILS = {
    2: ((-1, 1), (-0.5, 0.5)),
    4: ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
}


def _steps(x, step_scale):
    return step_scale * np.maximum(1.0, np.abs(x))


def _column(F, x, i, h, order):
    offsets, weights = _STENCILS[order]
    acc = 0.0
    for k, w in zip(offsets, weights):
        xs = x.copy()
        xs[i] += k * h
        f = np.atleast_1d(np.asarray(F(xs), dtype=float))
        if not np.all(np.isfinite(f)):
            raise EvaluationError(f"non-finite function value near x[{i}]")
        acc = acc + w * f
    return acc / h


def fd_gradient(f, x, step_scale=None, order=2):
    """Central-difference gradient of a scalar function of ``len(x)`` reals.

    The step for coordinate ``i`` is ``step_scale * max(1, |x_i|)``;
    ``order`` selects the 3-point (2) or 5-point (4) stencil.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if step_scale is None:
        step_scale = DEFAULT_STEP_SCALE if order == 2 else FIVE_POINT_STEP_SCALE
    h = _steps(x, step_scale)
    return np.array([_column(f, x, i, h[i], order)[0] for i in range(x.size)])


def fd_jacobian(F, x, step_scale=None, f0=None, order=2, steps=None):
    """Central-difference Jacobian ``J[j, i] = dF_j / dx_i``.

    ``steps`` overrides the relative rule with absolute per-coordinate steps.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if steps is not None:
        h = np.broadcast_to(np.asarray(steps, dtype=float), x.shape)
    else:
        if step_scale is None:
            step_scale = DEFAULT_STEP_SCALE if order == 2 else FIVE_POINT_STEP_SCALE
        h = _steps(x, step_scale)
    cols = [_column(F, x, i, h[i], order) for i in range(x.size)]
    if not cols:
        m = 0 if f0 is None else np.size(f0)
        return np.zeros((m, 0))
    return np.column_stack(cols)
