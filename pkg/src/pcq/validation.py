"""Input validation helpers shared by the estimator wrappers."""

import numpy as np
from sklearn.utils.validation import check_array

from .coefficient import PC2Coefficient
from .exceptions import ValidationError


def check_fields(X, n_nodes, name="X"):
    """Return ``X`` as a float array of shape ``(n_samples, n_nodes)``.

    A single nodal vector is accepted and promoted to one row.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=float, ensure_all_finite=True, input_name=name)
    if X.shape[1] != n_nodes:
        raise ValidationError(f"{name} has {X.shape[1]} columns, mesh has {n_nodes} nodes")
    return X


def check_positive(value, name):
    value = float(value)
    if not (np.isfinite(value) and value > 0):
        raise ValidationError(f"{name} must be positive, got {value}")
    return value


def check_coefficient(coef):
    if coef is None:
        return PC2Coefficient.zero()
    if isinstance(coef, PC2Coefficient):
        return coef
    if isinstance(coef, dict):
        return PC2Coefficient.from_dict(coef)
    raise ValidationError(f"coefficient must be a PC2Coefficient or dict, got {type(coef).__name__}")


def check_extents(dim, extents):
    """Normalize extents; in 2D a single ``(lo, hi)`` pair means the square."""
    try:
        if dim == 1:
            lo, hi = (float(v) for v in extents)
            return (lo, hi)
        if len(extents) == 2 and np.isscalar(extents[0]):
            pair = (float(extents[0]), float(extents[1]))
            return (pair, pair)
        return tuple(tuple(float(v) for v in e) for e in extents)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"cannot read extents {extents!r} for dim={dim}") from exc
