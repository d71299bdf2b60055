"""Fading primitives and the distribution of the combined reflected channel.

A surface with N elements produces the co-phased sum G = sum_i h_i * g_i of
products of two independent Nakagami-m envelopes.  Moment matching fits a
Gamma distribution to a single product term; the sum is then Gamma with the
shape scaled by N, and the received power after energy harvesting enters the
SNR through G**4.  Everything downstream (outage, throughput, AoI) consumes
the fitted parameters produced here.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass(frozen=True)
class NakagamiParams:
    """Nakagami-m envelope parameters.

    m      shape (m >= 0.5), integer values give the usual multipath model
    omega  spread E[X^2] (> 0)
    """

    m: float
    omega: float

    def __post_init__(self):
        if not (self.m >= 0.5):
            raise ValueError(f"Nakagami shape m must be >= 0.5, got {self.m}")
        if not (self.omega > 0):
            raise ValueError(f"Nakagami spread omega must be > 0, got {self.omega}")


@dataclass(frozen=True)
class GammaApprox:
    """Gamma fit for one product term h*g of the cascaded channel.

    k           shape of the single-term fit (> 0)
    theta       rate of the fit, i.e. the density is ~ x^(k-1) e^(-theta x)
    n_elements  number of surface elements N; the co-phased sum has shape N*k
    nk_int      max(1, round(N*k)), the integer shape used by the series forms
    """

    k: float
    theta: float
    n_elements: int
    nk_int: int

    def __post_init__(self):
        if not (self.k > 0 and np.isfinite(self.k)):
            raise ValueError(f"fitted shape k must be positive and finite, got {self.k}")
        if not (self.theta > 0 and np.isfinite(self.theta)):
            raise ValueError(f"fitted rate theta must be positive and finite, got {self.theta}")
        if self.n_elements < 1:
            raise ValueError(f"n_elements must be >= 1, got {self.n_elements}")
        if self.nk_int < 1:
            raise ValueError(f"nk_int must be >= 1, got {self.nk_int}")

    @property
    def sum_shape(self) -> float:
        """Continuous shape N*k of the co-phased sum."""
        return self.n_elements * self.k


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a Gauss-Hermite rule (weight e^(-x^2) on R)."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray


def nakagami_sample(params: NakagamiParams, count: int, seed: int) -> np.ndarray:
    """Draw `count` iid Nakagami-m envelopes, deterministically in `seed`.

    The square of a Nakagami-m envelope is Gamma(m, omega/m), so we draw the
    power and take the square root.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    power = rng.gamma(shape=params.m, scale=params.omega / params.m, size=count)
    return np.sqrt(power)


def cascade_moment(n: float, link1: NakagamiParams, link2: NakagamiParams) -> float:
    """E[(h*g)^n] for independent Nakagami envelopes h and g.

    Each envelope has E[X^n] = Gamma(m + n/2) / Gamma(m) * (omega/m)^(n/2);
    the product moment factorizes.  Evaluated in log space so large n and
    large m stay finite.
    """
    lam = np.sqrt(link1.m * link2.m / (link1.omega * link2.omega))
    log_mom = (
        special.gammaln(link1.m + n / 2.0)
        - special.gammaln(link1.m)
        + special.gammaln(link2.m + n / 2.0)
        - special.gammaln(link2.m)
    )
    return float(np.exp(log_mom - n * np.log(lam)))


def gamma_fit(link1: NakagamiParams, link2: NakagamiParams, n_elements: int) -> GammaApprox:
    """Moment-match a Gamma(k, rate theta) to one product term h*g.

    k and theta are chosen so the first two moments of the fit equal the
    exact cascade moments.  A degenerate (zero variance) cascade cannot be
    matched and is rejected.
    """
    if n_elements < 1:
        raise ValueError(f"n_elements must be >= 1, got {n_elements}")
    mu1 = cascade_moment(1.0, link1, link2)
    mu2 = cascade_moment(2.0, link1, link2)
    var = mu2 - mu1 * mu1
    if var <= 0:
        raise ValueError("cascade has nonpositive variance, moment match impossible")
    k = mu1 * mu1 / var
    theta = mu1 / var
    nk_int = max(1, int(round(n_elements * k)))
    return GammaApprox(k=k, theta=theta, n_elements=n_elements, nk_int=nk_int)


def quartic_gain_cdf(fit: GammaApprox, x) -> np.ndarray:
    """CDF of G^4 where G is the co-phased sum, continuous-shape form.

    Pr[G^4 <= x] = P(N*k, theta * x^(1/4)) with P the regularized lower
    incomplete gamma function.  Vectorized in x; negative x maps to 0.
    """
    x = np.asarray(x, dtype=float)
    z = fit.theta * np.power(np.maximum(x, 0.0), 0.25)
    return special.gammainc(fit.sum_shape, z)


def quartic_gain_cdf_series(fit: GammaApprox, x) -> np.ndarray:
    """CDF of G^4 evaluated through the finite series at integer shape nk_int.

    Pr[G^4 <= x] = 1 - e^(-z) * sum_{j=0}^{nk-1} z^j / j!  with
    z = theta * x^(1/4).  The sum is done with logsumexp so large z (deep
    right tail) cannot overflow.  This is the integer-shape form every
    closed-form expression downstream is built on.
    """
    x = np.asarray(x, dtype=float)
    z = fit.theta * np.power(np.maximum(x, 0.0), 0.25)
    nk = fit.nk_int
    j = np.arange(nk, dtype=float)
    # log of z^j / j!, broadcast to (points, nk); guard log(0) for z == 0
    with np.errstate(divide="ignore"):
        log_z = np.where(z > 0, np.log(np.maximum(z, 1e-300)), -np.inf)
    log_terms = j * log_z[..., None] - special.gammaln(j + 1.0)
    tail = np.exp(special.logsumexp(log_terms, axis=-1) - z)
    return np.clip(1.0 - tail, 0.0, 1.0)


def quartic_gain_pdf(fit: GammaApprox, x) -> np.ndarray:
    """Density of G^4 at integer shape nk_int.

    f(x) = theta^nk / (4 Gamma(nk)) * x^((nk-4)/4) * e^(-theta x^(1/4)),
    the change of variables of a Gamma(nk, theta) density under t -> t^4.
    """
    return np.exp(log_quartic_gain_pdf(fit, x))


def log_quartic_gain_pdf(fit: GammaApprox, x) -> np.ndarray:
    """Log of quartic_gain_pdf, safe for extreme arguments (x > 0)."""
    x = np.asarray(x, dtype=float)
    nk = fit.nk_int
    xs = np.maximum(x, 1e-300)
    return (
        nk * np.log(fit.theta)
        - fit.theta * np.power(xs, 0.25)
        + (nk - 4.0) / 4.0 * np.log(xs)
        - np.log(4.0)
        - special.gammaln(nk)
    )


def gauss_hermite_rule(order: int) -> QuadratureRule:
    """Gauss-Hermite nodes/weights of the given order (1 <= order <= 200)."""
    if not (1 <= order <= 200):
        raise ValueError(f"Gauss-Hermite order must be in [1, 200], got {order}")
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    return QuadratureRule(order=order, nodes=nodes, weights=weights)


def combined_gain_sample(
    link1: NakagamiParams,
    link2: NakagamiParams,
    n_elements: int,
    count: int,
    seed: int,
) -> np.ndarray:
    """Draw `count` realizations of the co-phased sum G = sum_i h_i g_i.

    Exact simulation of the cascade (no Gamma approximation); used to
    validate the fitted distribution.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    shape = (count, n_elements)
    h = np.sqrt(rng.gamma(link1.m, link1.omega / link1.m, size=shape))
    g = np.sqrt(rng.gamma(link2.m, link2.omega / link2.m, size=shape))
    return (h * g).sum(axis=1)
