"""Empirical limit-theorem studies.

Three experiments, all driven by common-noise coupling on one probability
space: the occupation-measure (Krylov-type) functional and its stability on
thin space-time sets, convergence of stochastic integrals with varying
integrands against a shared Brownian path, and the convergence of solutions
under coefficient regularization, where every level n shares the trajectory's
Brownian substream and is compared pathwise against the finest level.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coefficients import regularize
from .density import Estimate, batch_statistic
from .errors import ConfigError
from .rng import brownian_increments
from .sde import _chunk_edges, _resolve_initials, make_grid, simulate_ensemble

__all__ = [
    "CouplingReport",
    "CouplingRun",
    "IntegralConvergenceReport",
    "KrylovAccumulator",
    "KrylovReport",
    "SpaceTimeBox",
    "coupling_convergence",
    "integral_convergence",
    "krylov_ratio",
]


# ---------------------------------------------------------------------------
# occupation functional
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpaceTimeBox:
    """Indicator of [t0, t1] x Π [lo_i, hi_i], with an exact L^{d+1} norm."""

    t0: float
    t1: float
    lo: tuple
    hi: tuple

    def __call__(self, t, X):
        X = np.asarray(X, dtype=float)
        inside = np.full(X.shape[:-1], self.t0 <= t <= self.t1)
        for i, (a, b) in enumerate(zip(self.lo, self.hi)):
            inside &= (X[..., i] >= a) & (X[..., i] <= b)
        return inside.astype(float)

    @property
    def volume(self):
        vol = self.t1 - self.t0
        for a, b in zip(self.lo, self.hi):
            vol *= b - a
        return vol

    def norm_d1(self, d):
        return self.volume ** (1.0 / (d + 1))


class KrylovAccumulator:
    """Streaming left-point accumulation of ∫ e^{-λt} f(t, X_t) dt."""

    def __init__(self, f, lam, dt):
        self.f = f
        self.lam = lam
        self.dt = dt
        self.values = None

    def alloc(self, n_traj):
        self.values = np.zeros(n_traj)

    def step(self, sl, k, t, X, dW):
        self.values[sl] += math.exp(-self.lam * t) * np.asarray(self.f(t, X), dtype=float) * self.dt

    def finalize(self):
        return {"krylov": self.values}


@dataclass(frozen=True)
class KrylovReport:
    functional: Estimate
    norm: float
    ratio: float


def krylov_ratio(field, f, lam, s, T, x0, dt, seed, n_traj, threads=1, f_norm=None):
    """Monte-Carlo occupation functional, its L^{d+1} norm and their ratio.

    The ratio is an empirical lower bound on the constant in the occupation
    estimate; no value of that constant is certified.  ``f_norm`` must be
    supplied for general integrands; ``SpaceTimeBox`` carries its own.
    """
    if f_norm is None:
        if isinstance(f, SpaceTimeBox):
            f_norm = f.norm_d1(field.d)
        else:
            raise ConfigError("krylov_ratio needs f_norm (or a SpaceTimeBox integrand)")
    acc = KrylovAccumulator(f, lam, dt)
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    simulate_ensemble(
        field, s, T, x0, dt, seed,
        replicas=n_traj, threads=threads, accumulators=(acc,),
    )
    functional = batch_statistic(acc.values, lambda v: float(np.mean(v)))
    ratio = functional.value / f_norm if f_norm > 0 else 0.0
    return KrylovReport(functional=functional, norm=f_norm, ratio=ratio)


# ---------------------------------------------------------------------------
# stochastic-integral convergence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntegralConvergenceReport:
    labels: tuple
    deviations: tuple        # Estimate of E sup_t |I^n_t - I_t|^2 per integrand
    moments: tuple           # E ∫ ||η||^{2+α} dt per integrand (limit last)
    isometry: tuple          # (E|I_T|^2 estimate, ∫||η||^2 dt) for the limit
    warnings: tuple

    def rows(self):
        return list(zip(self.labels, self.deviations))


def integral_convergence(etas, eta_limit, T, dt, m, seed, n_traj, alpha=1.0, threads=1):
    """E sup_{t<=T} |I^n_t - I_t|^2 against a common Brownian path per trajectory.

    Integrands are callables (t, w) -> (..., d, m) of time and the current
    Brownian value.  The 2+α moment of each integrand is estimated and a
    non-finite (or wildly large) value attaches a warning to the report.
    """
    n_steps = make_grid(0.0, T, dt)
    probe = np.asarray(eta_limit(0.0, np.zeros((1, m))), dtype=float)
    d = probe.shape[-2]
    all_etas = list(etas) + [eta_limit]
    n_eta = len(all_etas)

    sup_dev = np.zeros((len(etas), n_traj))
    moments = np.zeros((n_eta, n_traj))
    final_sq = np.zeros(n_traj)
    sq_int = 0.0

    def run_chunk(lo, hi):
        nonlocal sq_int
        nc = hi - lo
        inc = np.empty((nc, n_steps, m))
        for j in range(nc):
            inc[j] = brownian_increments(seed, lo + j, n_steps, m, dt)
        W = np.zeros((nc, m))
        I = np.zeros((n_eta, nc, d))
        running = np.zeros((len(etas), nc))
        local_sq = 0.0
        for k in range(n_steps):
            t = k * dt
            dW = inc[:, k, :]
            for e_idx, eta in enumerate(all_etas):
                vals = np.asarray(eta(t, W), dtype=float)
                if vals.ndim == 2:
                    vals = np.broadcast_to(vals, (nc,) + vals.shape)
                I[e_idx] += np.einsum("nam,nm->na", vals, dW)
                hs = np.einsum("nam,nam->n", vals, vals)
                moments[e_idx, lo:hi] += hs ** ((2.0 + alpha) / 2.0) * dt
                if e_idx == n_eta - 1:
                    local_sq += float(hs.mean()) * dt
            diff = I[:-1] - I[-1][None]
            running = np.maximum(running, np.einsum("ena,ena->en", diff, diff))
            W = W + dW
        sup_dev[:, lo:hi] = running
        final_sq[lo:hi] = np.einsum("na,na->n", I[-1], I[-1])
        sq_int += local_sq * nc

    for lo, hi in _chunk_edges(n_traj, n_steps, m):
        run_chunk(lo, hi)

    labels = tuple(getattr(e, "__name__", f"eta_{i}") for i, e in enumerate(etas))
    deviations = tuple(batch_statistic(sup_dev[i], lambda v: float(np.mean(v))) for i in range(len(etas)))
    moment_means = tuple(float(moments[i].mean()) for i in range(n_eta))
    warnings = tuple(
        f"{lab}: 2+alpha moment not finite"
        for lab, mo in zip(labels + ("limit",), moment_means)
        if not math.isfinite(mo)
    )
    isometry = (batch_statistic(final_sq, lambda v: float(np.mean(v))), sq_int / n_traj)
    return IntegralConvergenceReport(
        labels=labels,
        deviations=deviations,
        moments=moment_means,
        isometry=isometry,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# coupling of regularization levels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingRun:
    levels: tuple
    n_ref: int
    seed: int


@dataclass(frozen=True)
class CouplingReport:
    run: CouplingRun
    deviations: tuple        # Estimate of E sup_t |X^n - X^{ref}| per level
    monotone_steps: int      # count of strict decreases between consecutive levels
    final_over_first: float

    def rows(self):
        return list(zip(self.run.levels, self.deviations))


def coupling_convergence(
    field, n_list, n_ref, s, T, initials, dt, seed, quad,
    replicas=1, threads=1, regularizer=regularize,
):
    """Pathwise deviation of regularization levels from the finest level.

    All levels of one trajectory share the same Brownian increments (one
    substream per trajectory index), realizing the limit statement on a
    single probability space; the finest level stands in for the true
    solution.  Returns per-level E sup_{t<=T} |X^n_t - X^{ref}_t|.
    """
    levels = sorted(n_list)
    if levels and levels[-1] > n_ref:
        raise ConfigError("reference level must be the finest")
    n_steps = make_grid(s, T, dt)
    x_init = _resolve_initials(initials, field.d, seed)
    x0 = np.repeat(x_init, replicas, axis=0)
    n_traj = x0.shape[0]

    fields = [regularizer(field, _level(n), quad) for n in levels]
    fields.append(regularizer(field, _level(n_ref), quad))
    n_lvl = len(fields)

    sup_dev = np.zeros((len(levels), n_traj))

    def run_chunk(lo, hi):
        nc = hi - lo
        inc = np.empty((nc, n_steps, field.m))
        for j in range(nc):
            inc[j] = brownian_increments(seed, lo + j, n_steps, field.m, dt)
        states = [x0[lo:hi].copy() for _ in range(n_lvl)]
        running = np.zeros((len(levels), nc))
        for k in range(n_steps):
            t = s + k * dt
            dW = inc[:, k, :]
            for li in range(n_lvl):
                fl = fields[li]
                sig = np.asarray(fl.sigma(t, states[li]), dtype=float)
                drift = np.asarray(fl.b(t, states[li]), dtype=float)
                states[li] = states[li] + np.einsum("nam,nm->na", sig, dW) + drift * dt
            ref = states[-1]
            for li in range(len(levels)):
                dev = np.linalg.norm(states[li] - ref, axis=-1)
                np.maximum(running[li], dev, out=running[li])
        sup_dev[:, lo:hi] = running

    chunks = _chunk_edges(n_traj, n_steps, field.m)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda c: run_chunk(*c), chunks))
    else:
        for lo, hi in chunks:
            run_chunk(lo, hi)

    deviations = tuple(
        batch_statistic(sup_dev[i], lambda v: float(np.mean(v))) for i in range(len(levels))
    )
    values = [e.value for e in deviations]
    monotone = sum(1 for a, b in zip(values[:-1], values[1:]) if b < a)
    ratio = values[-1] / values[0] if values and values[0] > 0 else 0.0
    return CouplingReport(
        run=CouplingRun(levels=tuple(levels), n_ref=n_ref, seed=seed),
        deviations=deviations,
        monotone_steps=monotone,
        final_over_first=ratio,
    )


def _level(n):
    from .coefficients import RegularizationLevel

    return RegularizationLevel(n=n)
