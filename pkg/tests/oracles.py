"""Independent reference implementations used as test oracles.

These deliberately avoid the package's own index and projection code.
"""
import math

import numpy as np


def linear_scan_nearest(points, ids, query):
    """Nearest stored point to ``query`` by exhaustive search; ties go to the smaller id."""
    pts = np.asarray(points, dtype=np.int64)
    d2 = ((pts - np.asarray(query, dtype=np.int64)) ** 2).sum(axis=1)
    best = d2.min()
    return int(np.asarray(ids)[d2 == best].min()), int(best)


def brute_force_calibrate(grad, mask, tau):
    """Propagation by comparing every free texel with every sampled texel."""
    sampled = np.any(grad != 0, axis=2) & mask
    out = np.where(sampled[..., None], grad, 0.0)
    sv, su = np.nonzero(sampled)  # row-major order, so ids ascend
    fv, fu = np.nonzero(mask & ~sampled)
    if len(sv) == 0 or len(fv) == 0:
        return out
    d2 = (fu[:, None] - su[None, :]) ** 2 + (fv[:, None] - sv[None, :]) ** 2
    j = np.argmin(d2, axis=1)  # first minimum = smallest row-major id
    ok = d2[np.arange(len(fv)), j] <= tau * tau
    out[fv[ok], fu[ok]] = grad[sv[j[ok]], su[j[ok]]]
    return out


def gram_schmidt(vectors, threshold):
    """Classical Gram-Schmidt with correctly rounded (fsum) inner products.

    Coefficients use the raw input vector.  Outputs whose squared norm falls
    below ``threshold`` are zeroed and excluded as later directions.  The
    first output is the first input.
    """
    outs, usable = [], []
    for i, g in enumerate(vectors):
        r = np.array(g, dtype=np.float64)
        for j in usable:
            b = outs[j]
            r = r - (math.fsum(g * b) / math.fsum(b * b)) * b
        if i == 0:
            outs.append(np.array(g, dtype=np.float64))
            if math.fsum(r * r) >= threshold and math.fsum(r * r) > 0:
                usable.append(0)
            continue
        if math.fsum(r * r) >= threshold and math.fsum(r * r) > 0:
            usable.append(i)
        else:
            r = np.zeros_like(r)
        outs.append(r)
    return outs
