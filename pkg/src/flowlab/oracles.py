"""Closed-form reference values used by tests and the oracle gate.

Everything here is independent of the simulation code paths it is used to
check: plain Gaussian calculus, special functions, and 1d adaptive
quadrature.  The translate field (σ = Id, b = 0) admits a fully explicit
push-forward density, which drives most of the checks:

    log K(X(x)) = <x, Δw> + |Δw|^2 / 2,      Δw = w_t - w_s,

so that ||K||_{L^p(P x γ_1)} = (1 - p(p-1) τ)^{-1/(2p)} for τ = t - s with
p(p-1) τ < 1.
"""

import math

import numpy as np
from scipy import integrate
from scipy.special import erf, gammaln, ndtr


def gaussian_abs_moment(d):
    """M_1 = ∫ |y| dγ_d(y)  (mean of the chi distribution with d dof)."""
    return math.sqrt(2.0) * math.exp(gammaln((d + 1) / 2.0) - gammaln(d / 2.0))


def gaussian_exp_quadratic(a, d=1):
    """∫ exp(a |x|^2) dγ_d = (1 - 2a)^{-d/2} for a < 1/2."""
    if a >= 0.5:
        return math.inf
    return (1.0 - 2.0 * a) ** (-d / 2.0)


def m2_exponential_moment(d=1):
    """M_2 = ∫ exp((1+|x|)^2/4) dγ_d, closed form in d=1, radial quadrature else."""
    if d == 1:
        # 2 e^{1/2} / sqrt(2π) * ∫_0^∞ e^{-(x-1)^2/4} dx = e^{1/2} sqrt(2) (1+erf(1/2)) sqrt(π)/sqrt(2π)
        return math.exp(0.5) * math.sqrt(math.pi) * (1.0 + erf(0.5)) * 2.0 / math.sqrt(2.0 * math.pi)

    def radial(r):
        # chi_d density times the radial integrand, exponents combined first
        log_dens = (d - 1) * math.log(r) - r * r / 2.0 - (d / 2.0 - 1) * math.log(2.0) - gammaln(d / 2.0)
        return math.exp((1.0 + r) ** 2 / 4.0 + log_dens)

    value, _ = integrate.quad(radial, 0.0, 60.0, limit=200)
    return value


def translate_lp_norm(p, tau):
    """||K||_{L^p(P x γ_1)} for the translate field at horizon τ."""
    c = p * (p - 1) * tau
    if c >= 1.0:
        return math.inf
    return (1.0 - c) ** (-1.0 / (2.0 * p))


def translate_bound_rhs(p, tau, d=1):
    """The L^p a-priori bound evaluated in closed form for the translate field.

    Integrand exponent p τ [0 + d + 0 + 2(p-1)|x|^2]; the Gaussian integral is
    (1 - 4 p (p-1) τ)^{-d/2}; outer exponent (p-1)/(p(2p-1)).
    """
    c = 2.0 * p * (p - 1) * tau
    if 2.0 * c >= 1.0:
        return math.inf
    inner = math.exp(p * tau * d) * (1.0 - 2.0 * c) ** (-d / 2.0)
    return inner ** ((p - 1.0) / (p * (2.0 * p - 1.0)))


def ou_pushforward_variance(a, tau):
    """Var of the OU flow value at time τ started from x ~ N(0,1), σ = 1."""
    decay = math.exp(-2.0 * a * tau)
    return decay + (1.0 - decay) / (2.0 * a)


def heat_variance(t):
    """Variance of the heat evolution of γ_1 (translate field) at time t."""
    return 1.0 + t


def ou_exact_log_density(a, tau, x0, x_end):
    """Per-path log K~ for the 1d OU field given the realized endpoint.

    For a fixed noise realization the flow is affine, X(x) = α x + g with
    α = e^{-aτ}, so the push-forward of γ_1 under the inverse flow is
    N(-g/α, 1/α^2) and log K~(x) = log α - X(x)^2/2 + x^2/2.
    """
    alpha = math.exp(-a * tau)
    return math.log(alpha) - x_end**2 / 2.0 + x0**2 / 2.0


def krylov_translate_functional(x, lam, T, lo=0.0, hi=1.0, t1=1.0):
    """E ∫_0^T e^{-λt} 1_{[0,t1]x[lo,hi]}(t, x + w_t) dt for the translate field."""
    upper = min(T, t1)

    def integrand(t):
        if t <= 0:
            return 1.0 if lo <= x <= hi else 0.0
        rt = math.sqrt(t)
        return math.exp(-lam * t) * (ndtr((hi - x) / rt) - ndtr((lo - x) / rt))

    value, _ = integrate.quad(integrand, 0.0, upper, limit=200)
    return value


def scipy_gaussian_integral(f, lo=-40.0, hi=40.0):
    """1d adaptive quadrature of f against γ_1 (independent of GH rules)."""
    dens = lambda x: f(x) * math.exp(-x * x / 2.0) / math.sqrt(2.0 * math.pi)
    value, _ = integrate.quad(dens, lo, hi, limit=400)
    return value


def translate_lp_mc(p, tau, n, seed=123):
    """Direct Monte-Carlo of the translate L^p norm (independent of the flow code)."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    x = rng.standard_normal(n)
    dw = rng.standard_normal(n) * math.sqrt(tau)
    logk = x * dw + dw * dw / 2.0  # log K at push-forward points
    vals = np.exp((p - 1.0) * logk)
    mean = vals.mean()
    stderr = vals.std(ddof=1) / math.sqrt(n)
    return mean ** (1.0 / p), stderr * (mean ** (1.0 / p - 1.0)) / p


def translate_entropy_mc(tau, n, seed=321):
    """Direct Monte-Carlo of E|x Δw + Δw^2/2| under x ~ γ_1, Δw ~ N(0, τ)."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 1], dtype=np.uint64)))
    x = rng.standard_normal(n)
    dw = rng.standard_normal(n) * math.sqrt(tau)
    vals = np.abs(x * dw + dw * dw / 2.0)
    return vals.mean(), vals.std(ddof=1) / math.sqrt(n)
