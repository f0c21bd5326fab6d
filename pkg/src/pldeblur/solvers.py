"""Iterative reconstruction: three- and two-operator Plug-and-Play,
Richardson-Lucy and Anscombe utilities."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.sparse import linalg as sparse_linalg

from .core import EPS_LOG, SolverConfig, SolverState, check_alpha, log_likelihood_terms
from .linops import FreqPlan, _plan, wiener_init
from .prox import poisson_prox_value, z_prox

log = logging.getLogger(__name__)

RHO_TABLE_ALPHA = (5.0, 10.0, 20.0, 40.0)
RHO_TABLE_VALUE = (200.0, 400.0, 800.0, 1000.0)
SURROGATE_TAU = 1e-4


class Termination(enum.Enum):
    DELTA_TOL = "delta_tol"
    MAX_ITERS = "max_iters"


@dataclass
class RunReport:
    final: np.ndarray
    iters_run: int
    delta_history: list
    data_term_history: list
    terminated_by: Termination
    rho_history: list = field(default_factory=list)
    raw: Optional[np.ndarray] = None
    state: object = None
    diagnostics: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "iters": self.iters_run,
            "terminated_by": self.terminated_by.value,
            "delta_history": [float(d) for d in self.delta_history],
            "data_term_history": [float(d) for d in self.data_term_history],
            "rho_history": [float(r) for r in self.rho_history],
            "diagnostics": list(self.diagnostics),
        }


def default_rho_init(alpha: float) -> float:
    """Initial penalty for a photon level: tabulated at 5/10/20/40, linear in between, flat outside."""
    alpha = check_alpha(alpha)
    return float(np.interp(alpha, RHO_TABLE_ALPHA, RHO_TABLE_VALUE))


def adaptive_rho(rho: float, delta_k: float, delta_km1: Optional[float], cfg: Optional[SolverConfig] = None) -> float:
    """Grow the penalty by ``gamma`` when the iterate change stalls."""
    if delta_km1 is None:
        return rho
    gamma = 1.01 if cfg is None else cfg.gamma
    threshold = 0.99 if cfg is None else cfg.decay_threshold
    return rho * gamma if delta_k > threshold * delta_km1 else rho


def delta3(prev: SolverState, new: SolverState) -> float:
    return (
        np.linalg.norm(new.x - prev.x)
        + np.linalg.norm(new.z - prev.z)
        + np.linalg.norm(new.v - prev.v)
        + np.linalg.norm(new.u1 - prev.u1)
        + np.linalg.norm(new.u2 - prev.u2)
    ) / 5.0


@dataclass
class PnP2State:
    x: np.ndarray
    z: np.ndarray
    u: np.ndarray


def delta2(prev: PnP2State, new: PnP2State) -> float:
    return (
        np.linalg.norm(new.x - prev.x)
        + np.linalg.norm(new.z - prev.z)
        + np.linalg.norm(new.u - prev.u)
    ) / 3.0


def _rho_pair(cfg: SolverConfig):
    rho0 = default_rho_init(cfg.alpha)
    rho1 = cfg.rho1_init if cfg.rho1_init is not None else rho0
    rho2 = cfg.rho2_init if cfg.rho2_init is not None else rho1
    return float(rho1), float(rho2)


def _as_counts(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError(f"y must be 2-D, got shape {y.shape}")
    if not np.all(np.isfinite(y)) or np.any(y < 0):
        raise ValueError("photon counts y must be finite and nonnegative")
    return y


def pnp3_step(state: SolverState, y, h, cfg: SolverConfig, rho1: float, rho2: float) -> SolverState:
    """One sweep of x, z, v, u1, u2 updates (Gauss-Seidel order); returns a new state."""
    plan = _plan(h, state.x.shape)
    x = plan.deblur(state.z - state.u1, state.v - state.u2, rho2 / rho1)
    hx = plan.convolve(x)
    z = z_prox(x + state.u1, cfg.denoiser)
    v = poisson_prox_value(hx + state.u2, y, cfg.alpha, rho2)
    u1 = state.u1 + x - z
    u2 = state.u2 + hx - v
    return SolverState(x, z, v, u1, u2, state.iter + 1, list(state.delta_history))


def initial_state(y: np.ndarray, plan, cfg: SolverConfig) -> SolverState:
    x0 = wiener_init(y, plan, cfg.alpha)
    v0 = y / cfg.alpha if cfg.v_init == "scaled" else y.copy()
    zeros = np.zeros_like(x0)
    return SolverState(x0, x0.copy(), v0, zeros, zeros.copy())


def pnp3_run(y, h, cfg: SolverConfig) -> RunReport:
    """Three-operator Plug-and-Play from a Wiener start until the iterate change drops below tolerance."""
    y = _as_counts(y)
    plan = FreqPlan(h, y.shape)
    state = initial_state(y, plan, cfg)
    rho1, rho2 = _rho_pair(cfg)
    deltas, fits, rhos = [], [], []
    terminated = Termination.MAX_ITERS
    for _ in range(cfg.max_iters):
        rhos.append(rho1)
        new = pnp3_step(state, y, plan, cfg, rho1, rho2)
        d = delta3(state, new)
        new.delta_history.append(d)
        deltas.append(d)
        fits.append(float(log_likelihood_terms(plan.convolve(new.x), y, cfg.alpha, cfg.eps_log).sum()))
        state = new
        if d < cfg.delta_tol:
            terminated = Termination.DELTA_TOL
            break
        if cfg.adaptive and len(deltas) > 1:
            grown = adaptive_rho(rho1, deltas[-1], deltas[-2], cfg)
            rho2 *= grown / rho1
            rho1 = grown
    return RunReport(
        final=np.clip(state.x, 0.0, 1.0), iters_run=len(deltas), delta_history=deltas,
        data_term_history=fits, terminated_by=terminated, rho_history=rhos,
        raw=state.x, state=state,
    )


@dataclass(frozen=True)
class InnerSolveInfo:
    grad_norm: float
    iters: int
    converged: bool
    message: str


def _surrogate_objective(x_flat, shape, xt, y, plan, alpha, rho, tau):
    x = x_flat.reshape(shape)
    s = plan.convolve(x)
    near = s < tau
    s_safe = np.where(near, tau, s)
    ds = s - tau
    log_part = np.where(near, np.log(alpha * tau) + ds / tau - ds * ds / (2 * tau * tau), np.log(alpha * s_safe))
    dlog = np.where(near, 1.0 / tau - ds / (tau * tau), 1.0 / s_safe)
    diff = x - xt
    f = alpha * s.sum() - np.sum(np.where(y > 0, y * log_part, 0.0)) + 0.5 * rho * np.sum(diff * diff)
    g = plan.correlate(alpha - y * dlog) + rho * diff
    return f, g.ravel()


def _newton_direction(x, g, y, plan, rho, tau):
    s = plan.convolve(x)
    curv = y / np.maximum(s, tau) ** 2

    def hessp(d):
        d = d.reshape(x.shape)
        return (rho * d + plan.correlate(curv * plan.convolve(d))).ravel()

    op = sparse_linalg.LinearOperator((x.size, x.size), matvec=hessp, dtype=np.float64)
    d, _ = sparse_linalg.cg(op, -g.ravel(), rtol=1e-12, atol=0.0, maxiter=200)
    return d.reshape(x.shape)


def inner_x_solve(xt, y, h, alpha: float, rho: float, grad_tol: float = 1e-5,
                  max_inner: int = 200, tau: float = SURROGATE_TAU, x0=None, return_info: bool = False,
                  polish_steps: int = 5):
    """Approximately solve the Poisson-likelihood x-subproblem with L-BFGS.

    Pixels with ``Hx < tau`` use a quadratic expansion of the log term at
    ``tau``. Stops when the Euclidean gradient norm falls below ``grad_tol``.
    """
    xt = np.asarray(xt, dtype=np.float64)
    y = _as_counts(y)
    alpha = check_alpha(alpha)
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho!r}")
    plan = _plan(h, xt.shape)
    start = xt if x0 is None else np.asarray(x0, dtype=np.float64)
    args = (xt.shape, xt, y, plan, alpha, float(rho), tau)
    res = optimize.minimize(
        _surrogate_objective, start.ravel(), args=args, jac=True, method="L-BFGS-B",
        options={"maxiter": max_inner, "gtol": grad_tol / np.sqrt(xt.size), "ftol": 0.0, "maxcor": 20},
    )
    x = res.x.reshape(xt.shape)
    _, g = _surrogate_objective(res.x, *args)
    gnorm = float(np.linalg.norm(g))
    # L-BFGS line searches stall once objective changes fall below rounding;
    # finish with Newton steps, which only need gradients and curvature.
    for _ in range(polish_steps):
        if gnorm < grad_tol:
            break
        x_new = x + _newton_direction(x, g.reshape(xt.shape), y, plan, float(rho), tau)
        _, g_new = _surrogate_objective(x_new.ravel(), *args)
        g_new_norm = float(np.linalg.norm(g_new))
        if not g_new_norm < gnorm:
            break
        x, g, gnorm = x_new, g_new, g_new_norm
    info = InnerSolveInfo(gnorm, int(res.nit), gnorm < grad_tol, str(res.message))
    if not info.converged:
        log.debug("inner x-solve stopped at gradient norm %.3g: %s", gnorm, res.message)
    return (x, info) if return_info else x


def pnp2_run(y, h, cfg: SolverConfig, grad_tol: float = 1e-5, max_inner: int = 200) -> RunReport:
    """Conventional two-operator Plug-and-Play with an iterative likelihood sub-solver."""
    y = _as_counts(y)
    plan = FreqPlan(h, y.shape)
    x0 = wiener_init(y, plan, cfg.alpha)
    state = PnP2State(x0, x0.copy(), np.zeros_like(x0))
    rho, _ = _rho_pair(cfg)
    deltas, fits, rhos, diagnostics = [], [], [], []
    terminated = Termination.MAX_ITERS
    for k in range(cfg.max_iters):
        rhos.append(rho)
        x, info = inner_x_solve(state.z - state.u, y, plan, cfg.alpha, rho, grad_tol, max_inner,
                                x0=state.x, return_info=True)
        if not info.converged:
            diagnostics.append(f"iter {k + 1}: inner solve stopped at |grad|={info.grad_norm:.3g}")
        z = z_prox(x + state.u, cfg.denoiser)
        new = PnP2State(x, z, state.u + x - z)
        d = delta2(state, new)
        deltas.append(d)
        fits.append(float(log_likelihood_terms(plan.convolve(x), y, cfg.alpha, cfg.eps_log).sum()))
        state = new
        if d < cfg.delta_tol:
            terminated = Termination.DELTA_TOL
            break
        if cfg.adaptive and len(deltas) > 1:
            rho = adaptive_rho(rho, deltas[-1], deltas[-2], cfg)
    return RunReport(
        final=np.clip(state.x, 0.0, 1.0), iters_run=len(deltas), delta_history=deltas,
        data_term_history=fits, terminated_by=terminated, rho_history=rhos,
        raw=state.x, state=state, diagnostics=diagnostics,
    )


def richardson_lucy_run(y, h, alpha: float, iters: int, eps: float = EPS_LOG) -> RunReport:
    """Multiplicative EM updates on the count-normalized data ``y/alpha``."""
    y = _as_counts(y)
    alpha = check_alpha(alpha)
    if iters < 0:
        raise ValueError("iters must be >= 0")
    plan = FreqPlan(h, y.shape)
    target = y / alpha
    x = np.maximum(target, eps)
    fits, deltas = [], []
    for _ in range(iters):
        x_new = x * plan.correlate(target / np.maximum(plan.convolve(x), eps))
        deltas.append(float(np.linalg.norm(x_new - x)))
        x = x_new
        fits.append(float(log_likelihood_terms(plan.convolve(x), y, alpha).sum()))
    return RunReport(
        final=np.clip(x, 0.0, 1.0), iters_run=iters, delta_history=deltas, data_term_history=fits,
        terminated_by=Termination.MAX_ITERS, raw=x,
    )


def richardson_lucy(y, h, alpha: float, iters: int) -> np.ndarray:
    return richardson_lucy_run(y, h, alpha, iters).final


def anscombe(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if np.any(y < 0):
        raise ValueError("anscombe input must be nonnegative")
    return 2.0 * np.sqrt(y + 0.375)


def anscombe_inverse(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return np.maximum((t / 2.0) ** 2 - 0.375, 0.0)
