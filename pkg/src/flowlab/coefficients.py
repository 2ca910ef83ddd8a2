"""Time-dependent coefficient pairs (σ, b).

A ``CoefficientField`` bundles the diffusion matrix σ(t, x) in R^{d x m}, the
drift b(t, x) in R^d, optional analytic derivative access, and the growth /
ellipticity / exponential-integrability metadata the bound machinery needs.
All evaluation maps are vectorized over points: ``sigma(t, X)`` takes
X of shape (..., d) and returns (..., d, m).

The regularization pipeline produces smooth approximations:

* ``regularize_sigma``: x-cutoff times OU smoothing,  σ^n = φ_n · P_{1/n} σ_t;
* ``regularize_drift``: time mollification then OU smoothing,
  b^n_t = P_{1/n}[(b_.(x) * χ_n)(t)], with b extended by zero to t < 0.

Both keep analytic derivative access whenever the input field has it: the
smoothing commutes with differentiation up to an explicit e^{-ε} factor, and
δ(b^n_t) = e^{ε} P_ε[(δ(b_.) * χ_n)(t)].
"""

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import logsumexp

from .errors import CapabilityError
from .gaussian import fd_jacobian, ou_smooth, ou_smooth_grad, refined_quadrature
from .oracles import gaussian_abs_moment

__all__ = [
    "CoefficientField",
    "HypothesisReport",
    "RegularizationLevel",
    "builtin_coefficients",
    "cutoff",
    "cutoff_grad",
    "drift_divergence_identity",
    "mollifier_mass_below",
    "regularize",
    "regularize_drift",
    "regularize_sigma",
    "time_mollifier",
    "validate_hypotheses",
]


# ---------------------------------------------------------------------------
# smooth bump, cutoff and time mollifier
# ---------------------------------------------------------------------------

def _bump_raw(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
    return out


@lru_cache(maxsize=1)
def _bump_tables():
    # normalization and cumulative table of the standard bump on [-1, 1]
    x, w = np.polynomial.legendre.leggauss(501)
    norm = float(np.sum(w * _bump_raw(x)))
    grid = np.linspace(-1.0, 1.0, 65537)
    vals = _bump_raw(grid) / norm
    cdf = np.concatenate([[0.0], np.cumsum((vals[1:] + vals[:-1]) / 2.0) * (grid[1] - grid[0])])
    cdf /= cdf[-1]
    return norm, grid, cdf


def _bump(u):
    """Normalized smooth bump: support [-1, 1], unit mass."""
    norm, _, _ = _bump_tables()
    return _bump_raw(u) / norm


def _bump_cdf(u):
    """∫_{-1}^{u} of the normalized bump (0 below -1, 1 above 1)."""
    _, grid, cdf = _bump_tables()
    return np.interp(np.asarray(u, dtype=float), grid, cdf)


def cutoff(n, x):
    """Radial cutoff φ_n: equal to 1 on |x| <= n, 0 on |x| >= n+2, |∇φ_n| <= 1."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(np.atleast_2d(x), axis=-1)
    val = 1.0 - _bump_cdf(r - (n + 1.0))
    return val[0] if x.ndim == 1 else val.reshape(x.shape[:-1])


def cutoff_grad(n, x):
    """Gradient of φ_n; the radial slope is -bump(r-n-1), bounded by 1."""
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    r = np.linalg.norm(pts, axis=-1)
    slope = -_bump(r - (n + 1.0))
    direction = pts / np.maximum(r, 1e-300)[..., None]
    grad = slope[..., None] * direction
    return grad[0] if x.ndim == 1 else grad.reshape(x.shape)


def time_mollifier(n, t):
    """χ_n(t) = n χ(n t): smooth, supported in [-1/n, 1/n], unit mass."""
    return n * _bump(np.asarray(t, dtype=float) * n)


def mollifier_mass_below(n, t):
    """∫_{-∞}^{t} χ_n: the ramp a constant-in-time drift picks up near t = 0."""
    return _bump_cdf(np.asarray(t, dtype=float) * n)


# ---------------------------------------------------------------------------
# coefficient fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoefficientField:
    """Immutable coefficient pair with derivative access and metadata.

    ``sigma_jac(t, X)[..., j, a, b]`` is ∂σ^{aj}/∂x_b (Jacobian of column j);
    ``b_jac(t, X)[..., a, b]`` is ∂b^a/∂x_b.  ``delta_b_fn`` overrides the
    Gaussian divergence of the drift (needed for merely measurable drifts,
    where the a.e. pointwise representative is supplied explicitly).

    ``growth_const`` is the linear-growth constant L_T on the intended
    horizon; ``exp_const`` the declared exponential-integrability constant
    λ_T; ``c1`` the uniform ellipticity constant of σσ* when one is claimed.
    """

    d: int
    m: int
    sigma: object
    b: object
    sigma_jac: object = None
    b_jac: object = None
    delta_b_fn: object = None
    c1: float = None
    growth_const: float = 1.0
    exp_const: float = 0.25
    sigma_continuous: bool = True
    b_measurable_only: bool = False
    sigma_time_dependent: bool = False
    b_time_dependent: bool = False
    name: str = "custom"

    # -- derivative access ---------------------------------------------------

    def sigma_jacobian(self, t, X):
        """Column Jacobians (..., m, d, d), analytic or central differences."""
        if self.sigma_jac is not None:
            return np.asarray(self.sigma_jac(t, X), dtype=float)
        if not self.sigma_continuous:
            raise CapabilityError(f"sigma of '{self.name}' has no derivative access")
        raw = fd_jacobian(lambda P: self.sigma(t, P), X)   # (..., a, j, b)
        return np.moveaxis(raw, -2, -3)

    def b_jacobian(self, t, X):
        if self.b_jac is not None:
            return np.asarray(self.b_jac(t, X), dtype=float)
        if self.b_measurable_only:
            raise CapabilityError(
                f"drift of '{self.name}' is measurable-only and has no Jacobian"
            )
        return fd_jacobian(lambda P: self.b(t, P), X)

    def delta_sigma(self, t, X):
        """δ(σ_t)(x) in R^m: component j is <σ^{.j}, x> - trace ∇σ^{.j}."""
        X = np.asarray(X, dtype=float)
        sig = np.asarray(self.sigma(t, X), dtype=float)
        jac = self.sigma_jacobian(t, X)
        inner = np.einsum("...am,...a->...m", sig, X)
        return inner - np.trace(jac, axis1=-2, axis2=-1)

    def delta_b(self, t, X):
        """δ(b_t)(x) = <b, x> - div b, with explicit override when supplied."""
        X = np.asarray(X, dtype=float)
        if self.delta_b_fn is not None:
            return np.asarray(self.delta_b_fn(t, X), dtype=float)
        bval = np.asarray(self.b(t, X), dtype=float)
        jac = self.b_jacobian(t, X)
        return np.einsum("...a,...a->...", bval, X) - np.trace(jac, axis1=-2, axis2=-1)

    # -- scalar diagnostics ---------------------------------------------------

    def sigma_hs2(self, t, X):
        sig = np.asarray(self.sigma(t, X), dtype=float)
        return np.einsum("...am,...am->...", sig, sig)

    def grad_sigma_hs2(self, t, X):
        """|∇σ|^2: squared Hilbert-Schmidt norm of the full gradient tensor."""
        jac = self.sigma_jacobian(t, X)
        return np.einsum("...jab,...jab->...", jac, jac)

    def column_grad_pairing(self, t, X):
        """Σ_j trace(∇σ^{.j} · ∇σ^{.j}), the column-gradient pairing term."""
        jac = self.sigma_jacobian(t, X)
        return np.einsum("...jab,...jba->...", jac, jac)


@dataclass(frozen=True)
class RegularizationLevel:
    """Index n of the regularization pipeline: smoothing 1/n, cutoff radius n."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("regularization level must satisfy n >= 1")

    @property
    def eps(self):
        return 1.0 / self.n

    @property
    def time_scale(self):
        return 1.0 / self.n

    @property
    def cutoff_radius(self):
        return float(self.n)


# ---------------------------------------------------------------------------
# regularization pipeline
# ---------------------------------------------------------------------------

def regularize_sigma(field, level, quad):
    """Smooth compactly-supported diffusion:  σ^n_t = φ_n · P_{1/n} σ_t."""
    n, eps = level.n, level.eps
    decay = math.exp(-eps)

    def new_sigma(t, X):
        ph = cutoff(n, X)
        sm = ou_smooth(lambda P: field.sigma(t, P), eps, X, quad)
        return np.asarray(ph)[..., None, None] * sm

    new_jac = None
    if field.sigma_jac is not None:
        def new_jac(t, X):
            ph = np.asarray(cutoff(n, X))
            gph = cutoff_grad(n, X)                                    # (..., b)
            psig = ou_smooth(lambda P: field.sigma(t, P), eps, X, quad)    # (..., a, j)
            pjac = ou_smooth(lambda P: field.sigma_jac(t, P), eps, X, quad)
            term1 = np.einsum("...b,...aj->...jab", gph, psig)
            return term1 + ph[..., None, None, None] * (decay * pjac)

    return replace(
        field,
        sigma=new_sigma,
        sigma_jac=new_jac,
        c1=None,
        growth_const=field.growth_const * (1.0 + gaussian_abs_moment(field.d)),
        name=f"{field.name}|sigma_n{n}",
    )


def _time_convolved(field, level, values_fn, time_dependent):
    """(g_.(x) * χ_n)(t) with g extended by zero to negative times."""
    n = level.n

    if not time_dependent:
        def conv(t, X):
            ramp = float(mollifier_mass_below(n, t))
            return ramp * np.asarray(values_fn(max(t, 0.0), X), dtype=float)
        return conv

    # composite Simpson with 65 nodes on the mollifier support
    k = 64
    offsets = np.linspace(-1.0 / n, 1.0 / n, k + 1)
    simp = np.ones(k + 1)
    simp[1:-1:2] = 4.0
    simp[2:-1:2] = 2.0
    simp *= (offsets[1] - offsets[0]) / 3.0

    def conv(t, X):
        total = None
        for off, w in zip(offsets, simp):
            s = t - off
            if s < 0:
                continue
            term = w * float(time_mollifier(n, off)) * np.asarray(values_fn(s, X), dtype=float)
            total = term if total is None else total + term
        if total is None:
            probe = np.asarray(values_fn(0.0, X), dtype=float)
            total = np.zeros_like(probe)
        return total

    return conv


def drift_divergence_identity(field, level, quad):
    """δ(b^n_t) through the commutation identity e^{1/n} P_{1/n}[(δ(b) * χ_n)(t)].

    Valid only when the input field's δ(b) is the full adjoint-sense
    divergence.  For drifts whose pointwise representative drops a singular
    part (the sign drift: div(sign) carries a Dirac mass the a.e.
    representative |x| cannot see) this route and the true divergence of the
    smoothed field differ by the smoothed singular part; the pipeline
    therefore never uses it, it exists as a cross-check for smooth inputs.
    """
    eps = level.eps
    db_conv = _time_convolved(field, level, field.delta_b, field.b_time_dependent)

    def delta_b(t, X):
        return math.exp(eps) * ou_smooth(lambda P: db_conv(t, P), eps, X, quad)

    return delta_b


def regularize_drift(field, level, quad):
    """Smooth drift  b^n_t = P_{1/n}[(b_.(x) * χ_n)(t)]  (σ left untouched).

    Derivative access comes from the smoothing kernel itself (Gaussian
    integration by parts), so no derivative of the input drift is needed and
    merely measurable drifts are handled exactly: δ(b^n) is the divergence
    of the actual smooth field, singular parts of div b included.
    """
    eps = level.eps
    b_conv = _time_convolved(field, level, field.b, field.b_time_dependent)
    # the kernel-gradient integrand is one derivative rougher than b itself
    # (for a jump drift it is a step function), so it gets a finer rule
    grad_quad = refined_quadrature(quad, factor=4) if field.b_measurable_only else quad

    def new_b(t, X):
        return ou_smooth(lambda P: b_conv(t, P), eps, X, quad)

    def new_b_jac(t, X):
        grad = ou_smooth_grad(lambda P: b_conv(t, P), eps, X, grad_quad)
        return grad  # (..., a, b)

    def new_delta_b(t, X):
        X = np.asarray(X, dtype=float)
        bval = new_b(t, X)
        jac = new_b_jac(t, X)
        return np.einsum("...a,...a->...", bval, X) - np.trace(jac, axis1=-2, axis2=-1)

    return replace(
        field,
        b=new_b,
        b_jac=new_b_jac,
        delta_b_fn=new_delta_b,
        growth_const=field.growth_const * (1.0 + gaussian_abs_moment(field.d)),
        exp_const=field.exp_const / (2.0 * math.e),
        b_measurable_only=False,
        b_time_dependent=True,
        name=f"{field.name}|drift_n{level.n}",
    )


def regularize(field, level, quad):
    """Full pipeline: cutoff/smooth the diffusion, mollify/smooth the drift."""
    return regularize_drift(regularize_sigma(field, level, quad), level, quad)


# ---------------------------------------------------------------------------
# hypothesis validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisReport:
    """Measured hypothesis diagnostics over a (t, x) sample set."""

    min_eigenvalue: float
    growth_ratio: float
    sigma_T: float
    divergent: bool
    grad_norm_sup: float
    ellipticity_ok: bool
    growth_ok: bool

    def summary(self):
        return {
            "min_eigenvalue": self.min_eigenvalue,
            "growth_ratio": self.growth_ratio,
            "sigma_T": self.sigma_T,
            "divergent": self.divergent,
            "grad_norm_sup": self.grad_norm_sup,
            "ellipticity_ok": self.ellipticity_ok,
            "growth_ok": self.growth_ok,
        }


def validate_hypotheses(field, T, quad, tgrid=17, log_cap=700.0):
    """Measure ellipticity, growth and the exponential-integrability integral.

    Σ_T = ∫_0^T ∫ exp[λ_T (|∇σ_t|^2 + |δ(σ_t)|^2 + |δ(b_t)|)] dγ_d dt is
    accumulated in log space per time node; if any node exceeds ``log_cap``
    the integral is flagged divergent and reported as +inf.
    """
    times = np.linspace(0.0, T, tgrid) if np.isscalar(tgrid) else np.asarray(tgrid, float)
    X = quad.nodes
    logw = quad.log_weights
    lam = field.exp_const

    min_eig = math.inf
    growth_ratio = 0.0
    grad_norm_sup = 0.0
    log_inner = np.empty(times.shape[0])
    norm_radius = 1.0 + np.linalg.norm(X, axis=-1)
    p_grad = 2 * (field.d + 1)

    for i, t in enumerate(times):
        sig = np.asarray(field.sigma(t, X), dtype=float)
        a = np.einsum("kam,kbm->kab", sig, sig)
        min_eig = min(min_eig, float(np.linalg.eigvalsh(a)[:, 0].min()))

        hs = np.sqrt(np.einsum("kam,kam->k", sig, sig))
        bval = np.asarray(field.b(t, X), dtype=float)
        growth_ratio = max(
            growth_ratio, float((np.maximum(hs, np.linalg.norm(bval, axis=-1)) / norm_radius).max())
        )

        grad2 = np.asarray(field.grad_sigma_hs2(t, X), dtype=float)
        dsig = field.delta_sigma(t, X)
        db = np.asarray(field.delta_b(t, X), dtype=float)
        if grad2.max() > 0:
            grad_norm_sup = max(
                grad_norm_sup,
                float(np.exp(logsumexp(logw + (p_grad / 2.0) * np.log(np.maximum(grad2, 1e-300))) / p_grad)),
            )
        g = lam * (grad2 + np.einsum("km,km->k", dsig, dsig) + np.abs(db))
        log_inner[i] = logsumexp(logw + g)

    divergent = bool(np.any(log_inner > log_cap))
    sigma_T = math.inf if divergent else float(trapezoid(np.exp(log_inner), times))

    ellipticity_ok = True if field.c1 is None else min_eig >= field.c1 - 1e-9
    growth_ok = growth_ratio <= field.growth_const + 1e-9
    return HypothesisReport(
        min_eigenvalue=min_eig,
        growth_ratio=growth_ratio,
        sigma_T=sigma_T,
        divergent=divergent,
        grad_norm_sup=grad_norm_sup,
        ellipticity_ok=ellipticity_ok,
        growth_ok=growth_ok,
    )


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

def _const_matrix(A):
    A = np.asarray(A, dtype=float)

    def sigma(t, X):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(A, X.shape[:-1] + A.shape)

    return sigma


def _zero_jac(m, d):
    def jac(t, X):
        X = np.asarray(X, dtype=float)
        return np.zeros(X.shape[:-1] + (m, d, d))

    return jac


def _zero_drift(d):
    def b(t, X):
        X = np.asarray(X, dtype=float)
        return np.zeros(X.shape[:-1] + (d,))

    return b


def builtin_coefficients(key, d=1, **params):
    """Catalog of test coefficient pairs with analytic derivatives.

    Keys: ``translate`` (σ = Id, b = 0), ``ou_linear`` (σ = Id, b = -a x),
    ``sign_drift`` (σ = Id, b = β sign(x_1) e_1, measurable-only),
    ``anisotropic`` (constant matrix σ, b = 0), ``custom`` (params forwarded
    to ``CoefficientField``).
    """
    if key == "custom":
        params.setdefault("d", d)
        return CoefficientField(**params)

    if key == "translate":
        lam = params.pop("lam", 0.25)
        if params:
            raise ValueError(f"unknown translate parameters: {sorted(params)}")
        eye = np.eye(d)
        return CoefficientField(
            d=d, m=d,
            sigma=_const_matrix(eye),
            b=_zero_drift(d),
            sigma_jac=_zero_jac(d, d),
            b_jac=lambda t, X: np.zeros(np.shape(X)[:-1] + (d, d)),
            delta_b_fn=lambda t, X: np.zeros(np.shape(X)[:-1]),
            c1=1.0,
            growth_const=math.sqrt(d),
            exp_const=lam,
            name="translate",
        )

    if key == "ou_linear":
        a = float(params.pop("a", 1.0))
        lam = params.pop("lam", 1.0 / (4.0 * (1.0 + a)))
        if params:
            raise ValueError(f"unknown ou_linear parameters: {sorted(params)}")
        eye = np.eye(d)

        def drift(t, X):
            return -a * np.asarray(X, dtype=float)

        def drift_jac(t, X):
            X = np.asarray(X, dtype=float)
            return np.broadcast_to(-a * eye, X.shape[:-1] + (d, d))

        def delta_b(t, X):
            X = np.asarray(X, dtype=float)
            return a * (d - np.einsum("...a,...a->...", X, X))

        return CoefficientField(
            d=d, m=d,
            sigma=_const_matrix(eye),
            b=drift,
            sigma_jac=_zero_jac(d, d),
            b_jac=drift_jac,
            delta_b_fn=delta_b,
            c1=1.0,
            growth_const=max(math.sqrt(d), a),
            exp_const=lam,
            name=f"ou_linear(a={a:g})",
        )

    if key == "sign_drift":
        beta = float(params.pop("beta", 1.0))
        lam = params.pop("lam", 0.25)
        if params:
            raise ValueError(f"unknown sign_drift parameters: {sorted(params)}")
        eye = np.eye(d)

        def drift(t, X):
            X = np.asarray(X, dtype=float)
            out = np.zeros_like(X)
            out[..., 0] = beta * np.sign(X[..., 0])
            return out

        def delta_b(t, X):
            # <b, x> - div b with div b = 0 a.e.; the kink at x_1 = 0 is null
            X = np.asarray(X, dtype=float)
            return beta * np.abs(X[..., 0])

        return CoefficientField(
            d=d, m=d,
            sigma=_const_matrix(eye),
            b=drift,
            sigma_jac=_zero_jac(d, d),
            delta_b_fn=delta_b,
            c1=1.0,
            growth_const=max(math.sqrt(d), beta),
            exp_const=lam,
            b_measurable_only=True,
            name=f"sign_drift(beta={beta:g})",
        )

    if key == "anisotropic":
        A = np.asarray(params.pop("matrix"), dtype=float)
        if A.ndim != 2 or A.shape[0] != d:
            raise ValueError("anisotropic matrix must have shape (d, m)")
        m = A.shape[1]
        smax = float(np.linalg.svd(A, compute_uv=False)[0])
        lam = params.pop("lam", 0.25 / max(smax**2, 1e-12))
        if params:
            raise ValueError(f"unknown anisotropic parameters: {sorted(params)}")
        c1 = float(np.linalg.eigvalsh(A @ A.T)[0])
        return CoefficientField(
            d=d, m=m,
            sigma=_const_matrix(A),
            b=_zero_drift(d),
            sigma_jac=_zero_jac(m, d),
            b_jac=lambda t, X: np.zeros(np.shape(X)[:-1] + (d, d)),
            delta_b_fn=lambda t, X: np.zeros(np.shape(X)[:-1]),
            c1=c1 if c1 > 0 else None,
            growth_const=float(np.linalg.norm(A)),
            exp_const=lam,
            name="anisotropic",
        )

    raise ValueError(f"unknown catalog key: {key!r}")
