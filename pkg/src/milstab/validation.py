"""Input checks shared by the estimators."""
import numpy as np


def check_bags(bags, n_features=None):
    """Validate a sequence of bags and return a list of float 2-D arrays.

    A ``Dataset`` is accepted as well. Each bag must be non-empty, finite and
    share one feature dimension (``n_features`` if given).
    """
    if hasattr(bags, "bags") and hasattr(bags, "d"):
        bags = bags.instances
    if isinstance(bags, np.ndarray) and bags.ndim == 2:
        raise ValueError("expected a sequence of bags, got a single 2-D array; "
                         "wrap instances as [[x], ...] to pass singleton bags")
    out = []
    for i, X in enumerate(bags):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError(f"bag {i} must be a non-empty 2-D array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError(f"bag {i} contains NaN or infinite values")
        out.append(X)
    if not out:
        raise ValueError("no bags given")
    dims = {X.shape[1] for X in out}
    if len(dims) > 1:
        raise ValueError(f"bags disagree on dimensionality: {sorted(dims)}")
    if n_features is not None and dims != {n_features}:
        raise ValueError(f"expected {n_features} features, got {dims.pop()}")
    return out


def check_bag_labels(y, n_bags=None, require_both=True):
    """Validate binary bag labels in {0, 1}."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("bag labels must be a 1-D array")
    if n_bags is not None and len(y) != n_bags:
        raise ValueError(f"got {len(y)} labels for {n_bags} bags")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("bag labels must be 0 or 1")
    y = y.astype(int)
    if require_both and len(np.unique(y)) < 2:
        raise ValueError("training data must contain both positive and negative bags")
    return y


def check_signed_labels(y):
    """Map binary labels given as {0, 1} or {-1, +1} onto {-1, +1}."""
    y = np.asarray(y)
    values = set(np.unique(y).tolist())
    if values <= {0, 1}:
        y = 2 * y.astype(int) - 1
    elif not values <= {-1, 1}:
        raise ValueError(f"labels must be binary, got values {sorted(values)}")
    y = y.astype(int)
    if len(np.unique(y)) < 2:
        raise ValueError("both classes must be present")
    return y


def bag_offsets(bags):
    """Start offsets of each bag in the stacked instance matrix (length n_bags + 1)."""
    return np.concatenate([[0], np.cumsum([len(X) for X in bags])]).astype(int)
