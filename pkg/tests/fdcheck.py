"""Finite-difference helpers shared by the gradient tests.

The surrogate is piecewise linear in its input, so a central difference is
exact (up to rounding) whenever no ReLU switches state between the two probe
points.  Probes that straddle a kink measure a different linear piece and are
reported as unusable instead of compared.
"""
import numpy as np


def gate_pattern(surrogate, image):
    _, cache = surrogate.forward(image)
    return np.concatenate([(cache.z1 > 0).ravel(), (cache.z2 > 0).ravel()])


def central_difference(surrogate, render, base, index, h=1e-3):
    """Central difference of ``surrogate.score(render(x))`` along ``index`` of ``base``.

    Returns ``None`` when a ReLU gate differs between ``base`` and either probe.
    """
    plus, minus = base.copy(), base.copy()
    plus[index] += h
    minus[index] -= h
    img_p, img_m = render(plus), render(minus)
    ref = gate_pattern(surrogate, render(base))
    if not (np.array_equal(gate_pattern(surrogate, img_p), ref)
            and np.array_equal(gate_pattern(surrogate, img_m), ref)):
        return None
    return (surrogate.score(img_p) - surrogate.score(img_m)) / (2 * h)


def close(fd, analytic, rel=1e-3, floor=1e-6):
    return abs(fd - analytic) <= max(rel * abs(analytic), floor)
