"""
Univariate slice sampler with stepping-out and shrinkage.

Used for the variance ratio eta, whose full conditional is known only up to a constant.
The sampler works on u = log(eta), so the target handed to ``slice_sample`` must already
include the Jacobian term u.
"""
from typing import Callable, Optional

import numpy as np

from preprocess.errors import SliceFailure
from mcmc.random_streams import RngStream

STEP_WIDTH = 1.0
MAX_STEPS = 50
MAX_SHRINK = 500


def slice_sample(log_density: Callable[[float], float], x0: float, stream: RngStream,
                 width: float = STEP_WIDTH, max_steps: int = MAX_STEPS,
                 lower: Optional[float] = None, max_shrink: int = MAX_SHRINK) -> float:
    """One slice-sampling transition from ``x0``.

    Args:
        log_density: unnormalized log target; may return -inf outside the support.
        x0: current point, must have a finite log density.
        stream: random stream.
        width: initial bracket width.
        max_steps: total stepping-out budget shared by both ends.
        lower: hard lower bound of the support; the bracket is clipped there.
        max_shrink: shrinkage iterations allowed before giving up.

    Returns:
        The new point.
    """
    f0 = log_density(x0)
    if not np.isfinite(f0):
        raise SliceFailure(f'log density is not finite at the current point {x0!r}')
    level = f0 - stream.generator.standard_exponential()

    left = x0 - width * stream.uniform()
    right = left + width
    j = int(np.floor(max_steps * stream.uniform()))
    k = max_steps - 1 - j
    if lower is not None:
        left = max(left, lower)
    while j > 0 and (lower is None or left > lower) and log_density(left) > level:
        left -= width
        j -= 1
        if lower is not None:
            left = max(left, lower)
    while k > 0 and log_density(right) > level:
        right += width
        k -= 1

    for _ in range(max_shrink):
        x1 = left + stream.uniform() * (right - left)
        f1 = log_density(x1)
        if f1 > level:
            return float(x1)
        if x1 < x0:
            left = x1
        else:
            right = x1
    raise SliceFailure(f'no acceptable point after {max_shrink} shrinkage steps '
                       f'(bracket [{left:.6g}, {right:.6g}], start {x0:.6g})')
