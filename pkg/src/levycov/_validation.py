import numpy as np
from sklearn.utils.validation import check_array


def check_increments(sample, min_n=1) -> np.ndarray:
    """Return the ``(n, 2)`` float increment array of a sample or array-like."""
    x = getattr(sample, "increments", sample)
    x = check_array(x, dtype=np.float64, ensure_min_samples=min_n, ensure_2d=True,
                    ensure_all_finite=True)
    if x.shape[1] != 2:
        raise ValueError(f"expected 2 columns of increments, got {x.shape[1]}")
    return x
