"""Shared test helpers: the central finite-difference gradient oracle."""

import numpy as np


def finite_difference_check(params, forward, eps=1e-6, rtol=1e-4, floor=1e-7,
                            sample_per_param=None, rng=None):
    """Compare analytic gradients (already in ``p.grad``) against central
    finite differences of ``forward`` (a pure recompute of the scalar loss).

    Checks every coordinate unless ``sample_per_param`` limits it. The match
    criterion is |analytic - fd| <= max(floor, rtol * max(|analytic|, |fd|));
    the absolute floor absorbs cancellation noise on near-zero gradients.
    Returns the number of coordinates checked.
    """
    checked = 0
    for p in params:
        flat = p.data.reshape(-1)
        grad = p.grad.reshape(-1)
        indices = np.arange(flat.size)
        if sample_per_param is not None and flat.size > sample_per_param:
            assert rng is not None, "sampling requires an rng"
            indices = rng.choice(flat.size, size=sample_per_param, replace=False)
        for idx in indices:
            original = flat[idx]
            flat[idx] = original + eps
            up = forward()
            flat[idx] = original - eps
            down = forward()
            flat[idx] = original
            fd = (up - down) / (2.0 * eps)
            analytic = grad[idx]
            tol = max(floor, rtol * max(abs(analytic), abs(fd)))
            assert abs(analytic - fd) <= tol, (
                f"{p.name}[{idx}]: analytic {analytic:.10g} vs finite difference {fd:.10g}"
            )
            checked += 1
    return checked
