"""Central-difference gradient verification shared by the test modules.

Closures must rebuild the scalar from scratch on every call so that
in-place parameter perturbations are observed. Everything runs in double
precision; step 1e-5 keeps truncation and round-off error both well under
the 1e-4 relative tolerance.
"""

import numpy as np
import torch

EPS = 1e-5
RTOL = 1e-4
FLOOR = 1e-7


def check_gradients(closure, params, seed=0, coords_per_param=3):
    """Compare autograd gradients of closure() against central differences.

    Checks up to coords_per_param randomly chosen coordinates of every
    parameter. Returns the largest relative error seen; raises AssertionError
    on the first coordinate outside tolerance.
    """
    params = list(params)
    for p in params:
        p.grad = None
    value = closure()
    assert value.dim() == 0, "closure must return a scalar"
    assert value.dtype == torch.float64, "gradient checks run in double precision"
    value.backward()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p_index, p in enumerate(params):
        grad = p.grad
        flat = p.data.view(-1)
        grad_flat = grad.view(-1) if grad is not None else torch.zeros_like(flat)
        count = min(coords_per_param, flat.numel())
        for idx in rng.choice(flat.numel(), size=count, replace=False):
            original = flat[idx].item()
            flat[idx] = original + EPS
            upper = closure().item()
            flat[idx] = original - EPS
            lower = closure().item()
            flat[idx] = original
            numeric = (upper - lower) / (2 * EPS)
            analytic = grad_flat[idx].item()
            scale = max(abs(numeric), abs(analytic))
            if scale >= FLOOR:
                rel = abs(numeric - analytic) / scale
                assert rel < RTOL, (
                    f"param {p_index} coord {idx}: analytic {analytic:.10g} vs "
                    f"numeric {numeric:.10g} (rel {rel:.3g})"
                )
                worst = max(worst, rel)
            else:
                assert abs(numeric - analytic) < FLOOR
    return worst
