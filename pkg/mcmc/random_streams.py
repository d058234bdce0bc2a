"""
Seeded random streams and the elementary random-variate primitives.

A stream is keyed by (base seed, chain index, replicate index, purpose). Identical keys give
bit-identical sequences; distinct keys are independent ``SeedSequence`` children.
Gamma variates are parameterized by (shape, rate) everywhere: mean = shape / rate.
"""
from typing import Optional

import numpy as np
from scipy import stats

from preprocess.errors import DegenerateState, InvalidParameter

PURPOSE_CHAIN = 0
PURPOSE_POPULATION = 1
PURPOSE_SAMPLE = 2
PURPOSE_COVARIATES = 3


class RngStream:
    """A ``numpy.random.Generator`` (PCG64) derived from a four-part key."""

    def __init__(self, seed: int, chain: int = 0, replicate: int = 0,
                 purpose: int = PURPOSE_CHAIN):
        self.key = (int(seed), int(chain), int(replicate), int(purpose))
        seq = np.random.SeedSequence(entropy=int(seed),
                                     spawn_key=(int(purpose), int(replicate), int(chain)))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f'RngStream(seed={self.key[0]}, chain={self.key[1]}, ' \
               f'replicate={self.key[2]}, purpose={self.key[3]})'

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def gamma(self, shape: float, rate: float, size=None):
        return self.generator.gamma(shape, 1.0 / rate, size)

    def beta(self, a: float, b: float, size=None):
        return self.generator.beta(a, b, size)

    def bernoulli(self, p, size=None):
        p = np.asarray(p, dtype=float)
        if size is None:
            size = p.shape
        return (self.generator.random(size) < p).astype(np.int8)


def draw_standard(stream: RngStream, dist: str, *params, size=None):
    """One variate (or ``size`` variates) from an elementary distribution.

    Args:
        stream: random stream.
        dist: 'normal' (mean, sd), 'gamma' (shape, rate), 'beta' (a, b),
            'bernoulli' (p), 'uniform' (low, high).

    Returns:
        float, or ndarray when ``size`` is given.
    """
    dist = dist.lower()
    if dist == 'normal':
        mean, sd = params
        if not sd >= 0:
            raise InvalidParameter(f'normal sd must be >= 0, got {sd}')
        out = stream.normal(mean, sd, size)
    elif dist == 'gamma':
        shape, rate = params
        if not (shape > 0 and rate > 0):
            raise InvalidParameter(f'gamma needs shape > 0 and rate > 0, got ({shape}, {rate})')
        out = stream.gamma(shape, rate, size)
    elif dist == 'beta':
        a, b = params
        if not (a > 0 and b > 0):
            raise InvalidParameter(f'beta needs a > 0 and b > 0, got ({a}, {b})')
        out = stream.beta(a, b, size)
    elif dist == 'bernoulli':
        (p,) = params
        if not 0.0 <= p <= 1.0:
            raise InvalidParameter(f'bernoulli p must lie in [0, 1], got {p}')
        out = stream.bernoulli(p, size=() if size is None else size)
    elif dist == 'uniform':
        low, high = params
        if not low < high:
            raise InvalidParameter(f'uniform needs low < high, got ({low}, {high})')
        out = stream.uniform(low, high, size)
    else:
        raise InvalidParameter(f'unknown distribution {dist}')
    if size is None:
        return int(out) if dist == 'bernoulli' else float(out)
    return out


def draw_truncated_beta(stream: RngStream, a: float, b: float, lower: float,
                        size: Optional[int] = None):
    """Beta(a, b) restricted to (lower, 1), by inversion of the upper-tail CDF.

    Works on the survival function so that a region above ``lower`` holding almost no
    mass is still sampled accurately. When even that underflows the draw comes from a
    rejection sampler on the full Beta kernel.
    """
    if not (a > 0 and b > 0):
        raise InvalidParameter(f'beta needs a > 0 and b > 0, got ({a}, {b})')
    if not 0.0 <= lower < 1.0:
        raise InvalidParameter(f'lower truncation point must lie in [0, 1), got {lower}')
    dist = stats.beta(a, b)
    if lower == 0.0:
        return draw_standard(stream, 'beta', a, b, size=size)
    tail = dist.sf(lower)
    if tail > 0.0:
        x = dist.isf(stream.uniform(0.0, 1.0, size) * tail)
    else:
        x = _beta_tail_by_rejection(stream, a, b, lower, 1 if size is None else int(size))
        if size is None:
            x = x[0]
    x = np.clip(x, np.nextafter(lower, 1.0), np.nextafter(1.0, 0.0))
    if size is None:
        return float(x)
    return x


def _beta_tail_by_rejection(stream: RngStream, a: float, b: float, lower: float, count: int,
                            max_rounds: int = 1000) -> np.ndarray:
    """Beta(a, b) on (lower, 1) when the mass above ``lower`` underflows.

    The envelope is the tangent of log f(x) = (a-1) log x + (b-1) log(1-x) at ``lower``, a
    truncated exponential in x - lower. It bounds f from above when both shapes are >= 1;
    otherwise the envelope is flat in the shape below one and the acceptance step keeps the
    draw exact with the bound exp(max log-ratio).
    """
    width = 1.0 - lower
    slope = 0.0
    if a >= 1.0:
        slope += (a - 1.0) / lower
    if b >= 1.0:
        slope -= (b - 1.0) / width

    def log_kernel(x):
        return (a - 1.0) * (np.log(x) - np.log(lower)) + (b - 1.0) * (np.log1p(-x) - np.log1p(-lower))

    # a factor with shape below one is left out of the slope; a < 1 only lowers the kernel
    # above lower, b < 1 raises it most at the upper end
    ends = np.array([np.nextafter(lower, 1.0), np.nextafter(1.0, 0.0)])
    bound = max(0.0, float(np.max(log_kernel(ends) - slope * (ends - lower))))

    out = np.empty(count)
    filled = 0
    for _ in range(max_rounds):
        n = count - filled
        u = stream.uniform(0.0, 1.0, n)
        if slope == 0.0:
            t = width * u
        else:
            t = np.log1p(u * np.expm1(slope * width)) / slope
        x = np.clip(lower + t, np.nextafter(lower, 1.0), np.nextafter(1.0, 0.0))
        log_accept = log_kernel(x) - slope * (x - lower) - bound
        keep = x[np.log(stream.uniform(0.0, 1.0, n)) < log_accept]
        out[filled:filled + keep.size] = keep
        filled += keep.size
        if filled == count:
            return out
    raise DegenerateState(f'truncated Beta({a}, {b}) above {lower}: rejection sampler stalled')
