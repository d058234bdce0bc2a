"""
Full conditional distributions of the DG, CDM and GDM nested-error regression models.

The mixture models are parametrized by (sigma1_sq, eta) with sigma2_sq = eta * sigma1_sq.
With w_ij = z_ij / sigma1_sq + (1 - z_ij) / (eta * sigma1_sq) the unnormalized log joint
posterior is

    -1/2 sum w r^2 - (n/2 + 1) log sigma1_sq - B log eta
    - (m/2) log sigma_v_sq - sum v^2 / (2 sigma_v_sq)
    + sum z log p_e + sum (1 - z) log(1 - p_e) + log prior(eta)

where r_ij = y_ij - x_ij'beta - v_i and B = sum(1 - z) / 2. The eta prior term is
-2 log(1 + eta) for GDM (with 1/2 < p_e < 1) and -2 log(eta), eta > 1 for CDM. DG is the
case z = 1, eta = 1 with no p_e.

Every ``draw_*`` function reads the current state through a ``ConditionalContext`` and
returns the new value; the caller writes it back into the state.
"""
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import linalg, special, stats

from preprocess.data_types import ChainState, Dataset, Variant
from preprocess.errors import DegenerateState, InvalidParameter, SingularPrecision, \
    VariantMismatch
from mcmc.random_streams import RngStream, draw_standard, draw_truncated_beta
from mcmc.slice_sampler import slice_sample

PRECISION_FLOOR = 1e-300
GDM_PE_LOWER = 0.5


class ClampCounter:
    """Counts how often a precision had to be raised to ``PRECISION_FLOOR``."""

    def __init__(self):
        self.counts: Dict[str, int] = {}

    def clamp(self, name: str, value):
        value = np.asarray(value, dtype=float)
        low = value < PRECISION_FLOOR
        if np.any(low):
            self.counts[name] = self.counts.get(name, 0) + int(np.count_nonzero(low))
            value = np.where(low, PRECISION_FLOOR, value)
        return value if value.ndim else float(value)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def merge(self, other: 'ClampCounter') -> None:
        for k, v in other.counts.items():
            self.counts[k] = self.counts.get(k, 0) + v


class ConditionalContext:
    """Read-only view of the data and the current Gibbs state.

    Residuals and weights are recomputed from the state on each access, so the view stays
    consistent while the engine overwrites one parameter at a time.
    """

    def __init__(self, dataset: Dataset, state: ChainState,
                 clamp: Optional[ClampCounter] = None):
        self.dataset = dataset
        self.state = state
        self.clamp = clamp if clamp is not None else ClampCounter()

    def fixed_part(self) -> np.ndarray:
        return self.dataset.X @ self.state.beta

    def residuals(self) -> np.ndarray:
        """r_ij = y_ij - x_ij'beta - v_i."""
        return self.dataset.y - self.fixed_part() - self.state.v[self.dataset.area_index]

    def weights(self) -> np.ndarray:
        """Precision weights w_ij = z/sigma1_sq + (1 - z)/(eta sigma1_sq)."""
        s = self.state
        z = s.z.astype(float)
        return z / s.sigma1_sq + (1.0 - z) / (s.eta * s.sigma1_sq)


# ----------------------------------------------------------------- beta
def beta_moments(ctx: ConditionalContext) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and lower Cholesky factor of the precision of the beta conditional."""
    ds = ctx.dataset
    w = ctx.weights()
    precision = ds.X.T @ (w[:, None] * ds.X)
    rhs = ds.X.T @ (w * (ds.y - ctx.state.v[ds.area_index]))
    try:
        chol = linalg.cholesky(precision, lower=True)
    except linalg.LinAlgError:
        raise SingularPrecision('sum of w x x\' is not positive definite')
    if not np.all(np.isfinite(chol)) or np.min(np.diag(chol)) <= 0:
        raise SingularPrecision('sum of w x x\' is numerically singular')
    mean = linalg.cho_solve((chol, True), rhs)
    return mean, chol


def draw_beta_coeff(ctx: ConditionalContext, stream: RngStream) -> np.ndarray:
    """beta ~ N_q(S sum w (y - v) x, S) with S = (sum w x x')^-1."""
    mean, chol = beta_moments(ctx)
    eps = stream.standard_normal(mean.shape[0])
    # chol chol' = S^-1, so chol'^-1 eps has covariance S
    return mean + linalg.solve_triangular(chol, eps, lower=True, trans='T')


# ----------------------------------------------------------------- v
def area_effect_moments(ctx: ConditionalContext,
                        prior_precision: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-area conditional mean and variance phi_i of the random effects.

    ``prior_precision`` overrides 1/sigma_v_sq (0 gives the flat-prior limit).
    """
    ds = ctx.dataset
    w = ctx.weights()
    partial = ds.y - ctx.fixed_part()
    sum_w = np.bincount(ds.area_index, weights=w, minlength=ds.m)
    sum_wr = np.bincount(ds.area_index, weights=w * partial, minlength=ds.m)
    if prior_precision is None:
        prior_precision = 1.0 / ctx.state.sigma_v_sq
    precision = ctx.clamp.clamp('area_effects', prior_precision + sum_w)
    phi = 1.0 / np.asarray(precision, dtype=float)
    return phi * sum_wr, phi


def draw_area_effects(ctx: ConditionalContext, stream: RngStream) -> np.ndarray:
    """Independent v_i ~ N(phi_i sum_j w (y - x'beta), phi_i); areas with n_i = 0 get the prior."""
    mean, phi = area_effect_moments(ctx)
    return mean + np.sqrt(phi) * stream.standard_normal(mean.shape[0])


# ----------------------------------------------------------------- z
def indicator_log_odds(residuals, sigma1_sq: float, eta: float, p_e: float) -> np.ndarray:
    """log of p_e phi_1 / ((1 - p_e) eta^-1/2 phi_2), elementwise."""
    r2 = np.square(np.asarray(residuals, dtype=float))
    log1 = np.log(p_e) - r2 / (2.0 * sigma1_sq)
    log2 = np.log1p(-p_e) - 0.5 * np.log(eta) - r2 / (2.0 * eta * sigma1_sq)
    return log1 - log2


def indicator_probabilities(residuals, sigma1_sq: float, eta: float, p_e: float) -> np.ndarray:
    """p*_ij = P(z_ij = 1 | rest), evaluated in log space."""
    return special.expit(indicator_log_odds(residuals, sigma1_sq, eta, p_e))


def draw_indicators(ctx: ConditionalContext, stream: RngStream) -> np.ndarray:
    s = ctx.state
    p_star = indicator_probabilities(ctx.residuals(), s.sigma1_sq, s.eta, s.p_e)
    return stream.bernoulli(p_star)


# ----------------------------------------------------------------- p_e
def pe_shapes(z: np.ndarray) -> Tuple[float, float]:
    ones = float(np.sum(z))
    return ones + 1.0, float(len(z)) - ones + 1.0


def draw_pe(ctx: ConditionalContext, stream: RngStream, variant: Variant) -> float:
    """GDM: Beta(sum z + 1, sum(1 - z) + 1) on (1/2, 1). CDM: the same Beta on (0, 1)."""
    variant = Variant.parse(variant)
    if variant is Variant.DG:
        raise VariantMismatch('the DG model has no mixing proportion')
    a, b = pe_shapes(ctx.state.z)
    lower = GDM_PE_LOWER if variant is Variant.GDM else 0.0
    p = draw_truncated_beta(stream, a, b, lower)
    # keep p strictly inside the open support
    return float(np.clip(p, np.nextafter(lower, 1.0), np.nextafter(1.0, 0.0)))


# ----------------------------------------------------------------- sigma_v_sq
def sigma_v_shape_rate(ctx: ConditionalContext) -> Tuple[float, float]:
    v = ctx.state.v
    return ctx.dataset.m / 2.0 - 1.0, 0.5 * float(np.dot(v, v))


def draw_sigma_v(ctx: ConditionalContext, stream: RngStream) -> float:
    """1/sigma_v_sq ~ Gamma(m/2 - 1, sum v^2 / 2); returns sigma_v_sq."""
    shape, rate = sigma_v_shape_rate(ctx)
    if shape <= 0:
        raise InvalidParameter(f'{ctx.dataset.m} areas leave the random effect variance improper')
    if rate <= 0:
        raise DegenerateState('all area effects are exactly zero')
    precision = ctx.clamp.clamp('sigma_v_sq', draw_standard(stream, 'gamma', shape, rate))
    return 1.0 / precision


# ----------------------------------------------------------------- sigma1_sq
def sigma1_shape_rate(ctx: ConditionalContext) -> Tuple[float, float]:
    s = ctx.state
    r2 = np.square(ctx.residuals())
    z = s.z.astype(float)
    return ctx.dataset.n / 2.0, 0.5 * float(np.sum(r2 * (z + (1.0 - z) / s.eta)))


def draw_sigma1(ctx: ConditionalContext, stream: RngStream, variant: Variant) -> float:
    """1/sigma1_sq ~ Gamma(n/2, 1/2 sum r^2 (z + (1 - z)/eta)); the same form serves all variants."""
    Variant.parse(variant)
    shape, rate = sigma1_shape_rate(ctx)
    if rate <= 0:
        raise DegenerateState('all residuals are exactly zero')
    precision = ctx.clamp.clamp('sigma1_sq', draw_standard(stream, 'gamma', shape, rate))
    return 1.0 / precision


# ----------------------------------------------------------------- eta
def eta_terms(ctx: ConditionalContext) -> Tuple[float, float]:
    """(A, B) with A = sum (1 - z) r^2 / (2 sigma1_sq) and B = sum (1 - z) / 2."""
    z = ctx.state.z.astype(float)
    r2 = np.square(ctx.residuals())
    return float(np.sum((1.0 - z) * r2)) / (2.0 * ctx.state.sigma1_sq), 0.5 * float(np.sum(1.0 - z))


def eta_log_density(variant: Variant, A: float, B: float) -> Callable[[float], float]:
    """Unnormalized log conditional density of eta (not of log eta)."""
    variant = Variant.parse(variant)
    if variant is Variant.GDM:
        def logf(eta):
            if not eta > 0:
                return -np.inf
            return -A / eta - B * np.log(eta) - 2.0 * np.log1p(eta)
    elif variant is Variant.CDM:
        def logf(eta):
            if not eta > 1.0:
                return -np.inf
            return -A / eta - (B + 2.0) * np.log(eta)
    else:
        raise VariantMismatch('the DG model has no variance ratio')
    return logf


def sample_eta(A: float, B: float, variant: Variant, eta0: float, stream: RngStream) -> float:
    """One slice-sampling update of eta given (A, B), performed on log eta."""
    variant = Variant.parse(variant)
    logf = eta_log_density(variant, A, B)

    def log_target(u):
        if u > 700.0:
            return -np.inf
        return logf(np.exp(u)) + u

    lower = 0.0 if variant is Variant.CDM else None
    u = slice_sample(log_target, float(np.log(eta0)), stream, lower=lower)
    return float(np.exp(u))


def draw_eta(ctx: ConditionalContext, stream: RngStream, variant: Variant) -> float:
    A, B = eta_terms(ctx)
    return sample_eta(A, B, variant, ctx.state.eta, stream)


# ----------------------------------------------------------------- densities
def log_joint_density(state: ChainState, dataset: Dataset, variant: Variant) -> float:
    """Unnormalized log joint posterior (-inf outside the parameter space)."""
    variant = Variant.parse(variant)
    s = state
    if s.sigma1_sq <= 0 or s.sigma_v_sq <= 0 or s.eta <= 0:
        return -np.inf
    ctx = ConditionalContext(dataset, s)
    r = ctx.residuals()
    out = -0.5 * dataset.m * np.log(s.sigma_v_sq) - float(np.dot(s.v, s.v)) / (2.0 * s.sigma_v_sq)
    if variant is Variant.DG:
        out += -(dataset.n / 2.0 + 1.0) * np.log(s.sigma1_sq) - float(np.dot(r, r)) / (2.0 * s.sigma1_sq)
        return float(out)

    if variant is Variant.GDM and not GDM_PE_LOWER < s.p_e < 1.0:
        return -np.inf
    if variant is Variant.CDM and not (0.0 < s.p_e < 1.0 and s.eta > 1.0):
        return -np.inf
    z = s.z.astype(float)
    B = 0.5 * float(np.sum(1.0 - z))
    out += -0.5 * float(np.sum(ctx.weights() * r * r))
    out += -(dataset.n / 2.0 + 1.0) * np.log(s.sigma1_sq) - B * np.log(s.eta)
    out += float(np.sum(z)) * np.log(s.p_e) + float(np.sum(1.0 - z)) * np.log1p(-s.p_e)
    if variant is Variant.GDM:
        out += -2.0 * np.log1p(s.eta)
    else:
        out += -2.0 * np.log(s.eta)
    return float(out)


def _variance_logpdf(value: float, shape: float, rate: float) -> float:
    # density of a variance whose reciprocal is Gamma(shape, rate)
    if not value > 0:
        return -np.inf
    return float(stats.gamma.logpdf(1.0 / value, shape, scale=1.0 / rate) - 2.0 * np.log(value))


def log_conditional_density(name: str, value, ctx: ConditionalContext, variant: Variant) -> float:
    """Log full-conditional density of parameter ``name`` at ``value``.

    Densities are in the parametrization of ``log_joint_density``. The eta density is
    unnormalized; all others are normalized.
    """
    variant = Variant.parse(variant)
    if name == 'beta':
        mean, chol = beta_moments(ctx)
        cov = linalg.cho_solve((chol, True), np.eye(mean.shape[0]))
        return float(stats.multivariate_normal.logpdf(np.asarray(value), mean, cov))
    if name == 'v':
        mean, phi = area_effect_moments(ctx)
        return float(np.sum(stats.norm.logpdf(np.asarray(value), mean, np.sqrt(phi))))
    if name == 'z':
        if variant is Variant.DG:
            raise VariantMismatch('the DG model has no indicators')
        s = ctx.state
        log_odds = indicator_log_odds(ctx.residuals(), s.sigma1_sq, s.eta, s.p_e)
        z = np.asarray(value, dtype=float)
        return float(np.sum(z * special.log_expit(log_odds) +
                            (1.0 - z) * special.log_expit(-log_odds)))
    if name == 'p_e':
        if variant is Variant.DG:
            raise VariantMismatch('the DG model has no mixing proportion')
        a, b = pe_shapes(ctx.state.z)
        if variant is Variant.GDM:
            if not GDM_PE_LOWER < value < 1.0:
                return -np.inf
            return float(stats.beta.logpdf(value, a, b) - stats.beta.logsf(GDM_PE_LOWER, a, b))
        return float(stats.beta.logpdf(value, a, b))
    if name == 'sigma_v_sq':
        return _variance_logpdf(value, *sigma_v_shape_rate(ctx))
    if name == 'sigma1_sq':
        return _variance_logpdf(value, *sigma1_shape_rate(ctx))
    if name == 'eta':
        A, B = eta_terms(ctx)
        return float(eta_log_density(variant, A, B)(value))
    raise InvalidParameter(f'unknown parameter {name}')
