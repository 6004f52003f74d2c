"""Input checks shared by the estimator wrappers; failures raise ValidationError."""
from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import ValidationError


def check_edges(X) -> np.ndarray:
    """1-D array of strictly positive, finite edge lengths."""
    try:
        arr = check_array(X, ensure_2d=False, dtype=float).ravel()
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    if np.any(arr <= 0):
        raise ValidationError("edge lengths must be positive")
    return arr


def check_boxes(X) -> np.ndarray:
    """(n, 4) center-form boxes with positive width and height; empty input allowed."""
    arr = np.asarray(X, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 4)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValidationError(f"boxes must have shape (n, 4), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("boxes contain NaN or infinity")
    if np.any(arr[:, 2:] <= 0):
        raise ValidationError("box widths and heights must be positive")
    return arr


def check_image_size(size) -> tuple[float, float]:
    try:
        w, h = (float(v) for v in size)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"image_size must be a (width, height) pair, got {size!r}") from exc
    if not (w > 0 and h > 0):
        raise ValidationError("image_size entries must be positive")
    return w, h


def check_fitted(estimator, attributes) -> None:
    try:
        check_is_fitted(estimator, attributes)
    except NotFittedError as exc:
        raise ValidationError(str(exc)) from exc
