"""Pure-numpy fallback for the compiled top-k kernel."""

import numpy as np


def mark_row_topk(absval, observed, k, out):
    """Same contract as the compiled ``mark_row_topk``.

    A stable sort on the negated magnitudes ranks ties by position, which is
    exactly the smaller-index-wins rule.
    """
    if absval.shape[1] == 0 or not np.any(k):
        return
    key = np.where(observed.astype(bool), -absval, np.inf)
    order = np.argsort(key, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(absval.shape[0])[:, None]
    ranks[rows, order] = np.arange(absval.shape[1])[None, :]
    hit = (ranks < np.asarray(k)[:, None]) & observed.astype(bool)
    out[hit] = 1
