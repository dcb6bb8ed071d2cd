"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numbers
import os

import numpy as np


def check_points(points, name="points", allow_empty=True):
    """Return ``points`` as a finite float array of shape (n, 3)."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not allow_empty and arr.shape[0] == 0:
        raise ValueError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or inf")
    return arr


def check_vector3(v, name="vector"):
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be a finite 3-vector")
    return arr


def check_covariances(cov, n, default_sigma, name="noise_cov"):
    """Broadcast ``cov`` to (n, 3, 3); ``None`` gives ``sigma^2 I`` per point."""
    if cov is None:
        out = np.zeros((n, 3, 3))
        out[:, [0, 1, 2], [0, 1, 2]] = default_sigma**2
        return out
    arr = np.asarray(cov, dtype=float)
    if arr.shape == (3, 3):
        arr = np.broadcast_to(arr, (n, 3, 3)).copy()
    if arr.shape != (n, 3, 3):
        raise ValueError(f"{name} must have shape ({n}, 3, 3), got {arr.shape}")
    if n and np.abs(arr - np.swapaxes(arr, 1, 2)).max() > 1e-12:
        raise ValueError(f"{name} must be symmetric")
    return arr


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (strict and value == 0):
        raise ValueError(f"{name} must be {'>' if strict else '>='} 0, got {value!r}")
    return value


def check_int(value, name, minimum=0):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def check_is_fitted(estimator, attributes):
    """Raise ``sklearn.exceptions.NotFittedError`` when ``attributes`` are missing."""
    from sklearn.exceptions import NotFittedError

    if isinstance(attributes, str):
        attributes = [attributes]
    if not all(hasattr(estimator, a) for a in attributes):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet. Call 'fit' first."
        )


def thread_count():
    """Worker threads from ``ROLO_THREADS`` (unset or 0 means all cores)."""
    try:
        n = int(os.environ.get("ROLO_THREADS", "0") or 0)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def uniform_isotropic(covs):
    """Common variance when every covariance equals ``s^2 I``, else None."""
    if len(covs) == 0:
        return None
    s2 = covs[0, 0, 0]
    if np.allclose(covs, s2 * np.eye(3), rtol=0, atol=1e-9 * max(s2, 1e-12)):
        return float(s2)
    return None
