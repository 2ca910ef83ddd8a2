"""Gaussian reference-measure primitives.

The standard Gaussian measure γ_d is the reference measure throughout the
package.  This module provides quadrature against γ_d, the Gaussian
divergence operator δ (the adjoint of the gradient under γ_d) and the
Ornstein-Uhlenbeck smoothing semigroup P_ε.

Sign convention: δ(B)(x) = <B(x), x> - div B(x), which is the unique choice
satisfying the adjoint identity ∫ <B, ∇f> dγ_d = ∫ f δ(B) dγ_d.  In
particular δ of the constant field e_j is the coordinate x_j.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import CapabilityError, EvaluationError
from .rng import MC_QUAD_STREAM, standard_normals

__all__ = [
    "GaussianQuadrature",
    "VectorFieldHandle",
    "default_quadrature",
    "fd_jacobian",
    "gauss_divergence",
    "gauss_expectation",
    "gauss_log_expectation",
    "matrix_divergence",
    "ou_smooth",
]

FD_STEP_SCALE = 1e-5


@dataclass(frozen=True)
class GaussianQuadrature:
    """Nodes and weights integrating against γ_d.

    ``exactness`` is the largest total polynomial degree integrated exactly
    (0 for the Monte-Carlo fallback, which is exact for nothing but carries a
    declared sample count instead).
    """

    d: int
    nodes: np.ndarray      # (K, d)
    weights: np.ndarray    # (K,), positive, summing to one
    exactness: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be positive")
        if self.nodes.shape != (self.weights.shape[0], self.d):
            raise ValueError("nodes/weights shape mismatch")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("quadrature weights must sum to 1 within 1e-12")
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def log_weights(self):
        return np.log(self.weights)

    @classmethod
    def gauss_hermite(cls, d, order):
        """Tensorized Gauss-Hermite rule for γ_d, ``order`` nodes per axis."""
        x, w = np.polynomial.hermite.hermgauss(order)
        x = x * math.sqrt(2.0)
        w = w / math.sqrt(math.pi)
        if d == 1:
            nodes = x[:, None]
            weights = w
        else:
            grids = np.meshgrid(*([x] * d), indexing="ij")
            nodes = np.stack([g.ravel() for g in grids], axis=-1)
            wgrids = np.meshgrid(*([w] * d), indexing="ij")
            weights = np.prod(np.stack([g.ravel() for g in wgrids]), axis=0)
        weights = weights / weights.sum()
        return cls(d=d, nodes=nodes, weights=weights, exactness=2 * order - 1)

    @classmethod
    def monte_carlo(cls, d, n_samples, seed):
        """Equal-weight γ_d sample rule, for d where tensor rules are too large."""
        nodes = standard_normals(seed, MC_QUAD_STREAM, (n_samples, d))
        weights = np.full(n_samples, 1.0 / n_samples)
        return cls(d=d, nodes=nodes, weights=weights, exactness=0)


def default_quadrature(d, order=None, mc_samples=4096, seed=0):
    """Default rule: GH(32) in d=1, GH(16 per axis) in d=2, MC beyond."""
    if d == 1:
        return GaussianQuadrature.gauss_hermite(1, order or 32)
    if d == 2:
        return GaussianQuadrature.gauss_hermite(2, order or 16)
    return GaussianQuadrature.monte_carlo(d, mc_samples, seed)


def refined_quadrature(quad, factor=2, max_order=None):
    """Same-family Gauss-Hermite rule with ``factor`` times the per-axis order.

    Used where an integrand is rougher than the caller's rule anticipates
    (order-doubling divergence checks, kernel gradients of discontinuous
    fields).  Monte-Carlo rules are returned unchanged.
    """
    if quad.exactness < 1:
        return quad
    order = (quad.exactness + 1) // 2
    cap = max_order if max_order is not None else (256 if quad.d == 1 else 64)
    new_order = min(cap, order * factor)
    if new_order <= order:
        return quad
    return GaussianQuadrature.gauss_hermite(quad.d, new_order)


def _check_finite(values, quad):
    if np.all(np.isfinite(values)):
        return
    flat = np.asarray(values).reshape(values.shape[0], -1)
    bad = np.where(~np.isfinite(flat).all(axis=1))[0]
    node = quad.nodes[bad[0]]
    raise EvaluationError(f"non-finite integrand value at node {node}", node=node)


def gauss_expectation(g, quad):
    """∫ g dγ_d by quadrature.  ``g`` maps (K, d) node arrays to (K, ...)."""
    values = np.asarray(g(quad.nodes), dtype=float)
    _check_finite(values, quad)
    return np.tensordot(quad.weights, values, axes=(0, 0))


def gauss_log_expectation(log_g, quad):
    """log ∫ e^{log_g} dγ_d, accumulated with a max-shift (never overflows)."""
    values = np.asarray(log_g(quad.nodes), dtype=float)
    if np.any(np.isnan(values)):
        bad = int(np.where(np.isnan(values))[0][0])
        raise EvaluationError(
            f"NaN log-integrand at node {quad.nodes[bad]}", node=quad.nodes[bad]
        )
    return logsumexp(values + quad.log_weights)


@dataclass(frozen=True)
class VectorFieldHandle:
    """A vector field x -> R^d with optional analytic Jacobian.

    ``jac(x)[..., a, b]`` is ∂B^a/∂x_b.  ``differentiable=False`` marks fields
    for which finite differencing is meaningless (e.g. jump functions); asking
    for derivatives of such a field raises ``CapabilityError``.
    """

    fn: object
    jac: object = None
    differentiable: bool = True
    name: str = field(default="field")

    def __call__(self, x):
        return self.fn(x)


def fd_jacobian(fn, x, step_scale=FD_STEP_SCALE):
    """Central-difference Jacobian with scale-aware step h = scale*(1+|x|)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    n, d = pts.shape
    h = step_scale * (1.0 + np.linalg.norm(pts, axis=-1))  # (n,)
    cols = []
    for b in range(d):
        shift = np.zeros_like(pts)
        shift[:, b] = h
        hi = np.asarray(fn(pts + shift), dtype=float)
        lo = np.asarray(fn(pts - shift), dtype=float)
        denom = (2.0 * h).reshape((n,) + (1,) * (hi.ndim - 1))
        cols.append((hi - lo) / denom)
    jac = np.stack(cols, axis=-1)  # (n, ..., d)
    return jac[0] if single else jac


def _handle_jacobian(handle, x):
    if handle.jac is not None:
        return np.asarray(handle.jac(x), dtype=float)
    if not handle.differentiable:
        raise CapabilityError(
            f"field '{handle.name}' has no Jacobian and finite differences are disabled"
        )
    return fd_jacobian(handle.fn, x)


def gauss_divergence(B, x):
    """δ(B)(x) = <B(x), x> - trace(∇B(x)) for a VectorFieldHandle B."""
    x = np.asarray(x, dtype=float)
    values = np.asarray(B(x), dtype=float)
    jac = _handle_jacobian(B, x)
    inner = np.einsum("...a,...a->...", values, x)
    return inner - np.trace(jac, axis1=-2, axis2=-1)


def matrix_divergence(sigma_fn, x, column_jacs=None, differentiable=True):
    """Componentwise Gaussian divergence of a matrix field.

    ``sigma_fn`` maps (..., d) to (..., d, m); component j of the result is
    δ of the j-th column.  ``column_jacs(x)[..., j, a, b]`` = ∂σ^{aj}/∂x_b.
    """
    x = np.asarray(x, dtype=float)
    sig = np.asarray(sigma_fn(x), dtype=float)
    if column_jacs is not None:
        jac = np.asarray(column_jacs(x), dtype=float)
    elif differentiable:
        raw = fd_jacobian(sigma_fn, x)          # (..., d, m, b)
        jac = np.moveaxis(raw, -2, -3)          # (..., m, d, b)
    else:
        raise CapabilityError("matrix field has no Jacobian access")
    inner = np.einsum("...am,...a->...m", sig, x)
    return inner - np.trace(jac, axis1=-2, axis2=-1)


def ou_smooth(f, eps, x, quad):
    """Ornstein-Uhlenbeck smoothing P_ε f(x) by quadrature.

    P_ε f(x) = ∫ f(e^{-ε} x + sqrt(1-e^{-2ε}) y) dγ_d(y).  ``f`` must accept
    stacked points of shape (..., d); scalar- or tensor-valued outputs are
    both supported.  ``x`` may be a single point (d,) or a batch (n, d).
    """
    if eps <= 0:
        raise ValueError("smoothing parameter must be positive")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    n, d = pts.shape
    decay = math.exp(-eps)
    spread = math.sqrt(max(1.0 - decay * decay, 0.0))
    shifted = decay * pts[None, :, :] + spread * quad.nodes[:, None, :]  # (K, n, d)
    values = np.asarray(f(shifted.reshape(-1, d)), dtype=float)
    values = values.reshape((quad.nodes.shape[0], n) + values.shape[1:])
    _check_finite(values, quad)
    out = np.tensordot(quad.weights, values, axes=(0, 0))
    return out[0] if single else out


def ou_smooth_grad(f, eps, x, quad):
    """Gradient of P_ε f without differentiating f.

    Uses the Gaussian integration-by-parts kernel:
    ∇P_ε f(x) = e^{-ε}/sqrt(1-e^{-2ε}) ∫ f(e^{-ε}x + r y) y dγ_d(y).
    Output shape is f-output shape with a trailing d axis.
    """
    if eps <= 0:
        raise ValueError("smoothing parameter must be positive")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    n, d = pts.shape
    decay = math.exp(-eps)
    spread = math.sqrt(max(1.0 - decay * decay, 0.0))
    shifted = decay * pts[None, :, :] + spread * quad.nodes[:, None, :]
    values = np.asarray(f(shifted.reshape(-1, d)), dtype=float)
    values = values.reshape((quad.nodes.shape[0], n) + values.shape[1:])
    _check_finite(values, quad)
    weighted = quad.weights[:, None] * quad.nodes  # (K, d)
    out = np.tensordot(weighted, values, axes=(0, 0))  # (d, n, ...)
    out = np.moveaxis(out, 0, -1) * (decay / spread)   # (n, ..., d)
    return out[0] if single else out
