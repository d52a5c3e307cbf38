"""Time integration of the opinion dynamics, convergence and period detection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, InsufficientData, StepUnderflow
from .model import InfluenceNetwork, vector_field

METHODS = ("adaptive_embedded", "fixed_rk4")

# Dormand-Prince 5(4) tableau; the last row is also the propagating weights
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY = 0.9
_FAC_MIN, _FAC_MAX = 0.2, 10.0
_ALPHA, _BETA = 0.7 / 5, 0.4 / 5


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "adaptive_embedded"
    step: float = 1e-2
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    t_end: float = 100.0
    record_every: float = 0.1
    max_steps: int = 5_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not (self.t_end > 0):
            raise ValueError("t_end must be positive")
        if not (0 < self.step <= self.t_end):
            raise ValueError("step must lie in (0, t_end]")
        if not (self.record_every > 0):
            raise ValueError("record_every must be positive")
        for name in ("abs_tol", "rel_tol"):
            v = getattr(self, name)
            if not (0 < v < 1):
                raise ValueError(f"{name} must lie in (0, 1), got {v}")

    def replace(self, **changes) -> "IntegratorConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class IntegrationStats:
    method: str
    n_steps: int
    n_rejected: int
    n_evals: int
    final_time: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    stats: IntegrationStats

    def __post_init__(self):
        self.times.setflags(write=False)
        self.states.setflags(write=False)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def tail(self, fraction: float) -> tuple[np.ndarray, np.ndarray]:
        k = _tail_start(len(self.times), fraction)
        return self.times[k:], self.states[k:]


@dataclass(frozen=True)
class ConvergenceVerdict:
    converged: bool
    equilibrium: Optional[np.ndarray]
    residual: float
    settling_time: Optional[float]


@dataclass(frozen=True)
class PeriodEstimate:
    per_component_period: tuple
    amplitude: np.ndarray
    oscillating: bool
    cycles: tuple = ()
    sustain_ratio: tuple = ()

    @property
    def period(self) -> Optional[float]:
        known = [T for T in self.per_component_period if T is not None]
        return float(np.mean(known)) if known else None


def _tail_start(m: int, fraction: float) -> int:
    return min(m - 1, max(0, int(np.floor(m * (1.0 - fraction)))))


def _sample_times(cfg: IntegratorConfig) -> np.ndarray:
    k = int(np.floor(cfg.t_end / cfg.record_every + 1e-9))
    ts = np.arange(k + 1) * cfg.record_every
    if cfg.t_end - ts[-1] > 1e-12 * cfg.t_end:
        ts = np.append(ts, cfg.t_end)
    else:
        ts[-1] = cfg.t_end
    return ts


def _error_norm(err, y, y_new, cfg) -> float:
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    per_member = np.sqrt(np.mean((err / scale) ** 2, axis=-1))
    return float(np.max(per_member))


def _rk4_step(fun, y, h):
    k1 = fun(y)
    k2 = fun(y + 0.5 * h * k1)
    k3 = fun(y + 0.5 * h * k2)
    k4 = fun(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _dopri_step(fun, y, k1, h):
    """One Dormand-Prince step; returns (5th-order solution, f at it, error estimate)."""
    k2 = fun(y + h * (_A[1][0] * k1))
    k3 = fun(y + h * (_A[2][0] * k1 + _A[2][1] * k2))
    k4 = fun(y + h * (_A[3][0] * k1 + _A[3][1] * k2 + _A[3][2] * k3))
    k5 = fun(y + h * (_A[4][0] * k1 + _A[4][1] * k2 + _A[4][2] * k3 + _A[4][3] * k4))
    a = _A[5]
    k6 = fun(y + h * (a[0] * k1 + a[1] * k2 + a[2] * k3 + a[3] * k4 + a[4] * k5))
    b = _A[6]
    y_new = y + h * (b[0] * k1 + b[2] * k3 + b[3] * k4 + b[4] * k5 + b[5] * k6)
    k7 = fun(y_new)
    e = _E
    err = h * (e[0] * k1 + e[2] * k3 + e[3] * k4 + e[4] * k5 + e[5] * k6 + e[6] * k7)
    return y_new, k7, err


def _initial_step(fun, y0, f0, cfg) -> float:
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(cfg.step, h0 if np.isfinite(h0) and h0 > 0 else cfg.step)


def integrate(fun: Callable[[np.ndarray], np.ndarray], y0, cfg: IntegratorConfig):
    """Integrate the autonomous system ``y' = fun(y)`` on ``[0, cfg.t_end]``.

    Steps are truncated so that every recording time is hit exactly. Returns
    ``(times, states, stats)``; ``states`` has shape ``(len(times),) + y0.shape``.
    """
    y = np.array(y0, dtype=float)
    ts = _sample_times(cfg)
    out = np.empty((len(ts),) + y.shape)
    out[0] = y
    t = 0.0
    n_steps = n_rej = n_evals = 0
    h_min = 1e-14 * cfg.t_end

    if cfg.method == "fixed_rk4":
        for j in range(1, len(ts)):
            while t < ts[j]:
                h = min(cfg.step, ts[j] - t)
                if ts[j] - (t + h) < 1e-12 * cfg.step:
                    h = ts[j] - t
                y = _rk4_step(fun, y, h)
                t = ts[j] if h == ts[j] - t else t + h
                n_steps += 1
                n_evals += 4
            out[j] = y
        return ts, out, IntegrationStats(cfg.method, n_steps, 0, n_evals, float(t))

    f = fun(y)
    n_evals += 1
    h = _initial_step(fun, y, f, cfg)
    err_old = 1e-4
    j = 1
    while j < len(ts):
        if n_steps + n_rej >= cfg.max_steps:
            raise StepUnderflow(f"step budget {cfg.max_steps} exhausted at t={t:.6g}")
        gap = ts[j] - t
        lands = h >= gap * (1 - 1e-12)
        h_try = gap if lands else h
        # trial steps may overflow; such steps are rejected below
        with np.errstate(all="ignore"):
            y_new, f_new, err_vec = _dopri_step(fun, y, f, h_try)
            err = _error_norm(err_vec, y, y_new, cfg)
        n_evals += 6
        if np.isfinite(err) and err <= 1.0 and np.all(np.isfinite(y_new)):
            t = ts[j] if lands else t + h_try
            y, f = y_new, f_new
            n_steps += 1
            err = max(err, 1e-10)
            fac = _SAFETY * err ** (-_ALPHA) * err_old**_BETA
            fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            err_old = err
            # a step shortened to land on a sample time should not shrink h
            h = max(h, h_try * fac) if lands and h_try < h else h_try * fac
            if lands:
                out[j] = y
                j += 1
        else:
            n_rej += 1
            if np.isfinite(err):
                fac = max(_FAC_MIN, _SAFETY * err ** (-_ALPHA))
            else:
                fac = _FAC_MIN
            h = h_try * min(1.0, fac)
            if h < h_min:
                raise StepUnderflow(f"adaptive step {h:.3g} below {h_min:.3g} at t={t:.6g}")
    return ts, out, IntegrationStats(cfg.method, n_steps, n_rej, n_evals, float(t))


def simulate(net: InfluenceNetwork, z0, cfg: Optional[IntegratorConfig] = None) -> Trajectory:
    """Integrate the opinion dynamics from ``z0``."""
    cfg = cfg or IntegratorConfig()
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (net.n,):
        raise DimensionMismatch(f"z0 has shape {z0.shape}, expected ({net.n},)")
    ts, zs, stats = integrate(lambda z: vector_field(net, z), z0, cfg)
    return Trajectory(ts, zs, stats)


def simulate_ensemble(net: InfluenceNetwork, starts, cfg: Optional[IntegratorConfig] = None) -> list[Trajectory]:
    """Integrate several initial conditions as one stacked system.

    Error control uses the worst member, so each trajectory is at least as
    accurate as when integrated alone.
    """
    cfg = cfg or IntegratorConfig()
    Z0 = np.atleast_2d(np.asarray(starts, dtype=float))
    if Z0.shape[-1] != net.n:
        raise DimensionMismatch(f"starts have shape {Z0.shape}, expected (m, {net.n})")
    ts, zs, stats = integrate(lambda z: vector_field(net, z), Z0, cfg)
    return [Trajectory(ts.copy(), np.ascontiguousarray(zs[:, b]), stats) for b in range(Z0.shape[0])]


def detect_convergence(net: InfluenceNetwork, traj: Trajectory, tol: float = 1e-6) -> ConvergenceVerdict:
    if len(traj.times) == 0:
        raise InsufficientData("empty trajectory")
    z_final = traj.final
    residual = float(np.max(np.abs(vector_field(net, z_final))))
    dev = np.max(np.abs(traj.states - z_final), axis=1)
    k = _tail_start(len(traj.times), 0.1)
    settled_tail = bool(np.all(dev[k:] <= tol))
    converged = residual <= tol and settled_tail
    above = np.flatnonzero(dev > tol)
    if len(above) == 0:
        settling = float(traj.times[0])
    elif above[-1] + 1 < len(traj.times):
        settling = float(traj.times[above[-1] + 1])
    else:
        settling = None
    return ConvergenceVerdict(
        converged=converged,
        equilibrium=np.array(z_final) if converged else None,
        residual=residual,
        settling_time=settling if converged else None,
    )


def _upward_crossings(t: np.ndarray, x: np.ndarray, level: float) -> np.ndarray:
    below = x[:-1] < level
    above = x[1:] >= level
    idx = np.flatnonzero(below & above)
    frac = (level - x[idx]) / (x[idx + 1] - x[idx])
    return t[idx] + frac * (t[idx + 1] - t[idx])


def estimate_periods(
    traj: Trajectory,
    tail_fraction: float = 0.5,
    amplitude_floor: float = 1e-6,
    min_cycles: int = 3,
    min_sustain: float = 0.9,
    strict: bool = False,
) -> PeriodEstimate:
    """Per-component period from upward mean-crossings over the tail.

    A component counts as oscillating when its half peak-to-trough amplitude
    exceeds ``amplitude_floor``, it completes ``min_cycles`` cycles, and the
    last cycle's amplitude is at least ``min_sustain`` times the first one
    (decaying ringing around a stable focus is rejected). With ``strict`` a
    component with fewer than ``min_cycles`` crossings raises
    :class:`InsufficientData`.
    """
    if not (0 < tail_fraction < 1):
        raise ValueError("tail_fraction must lie in (0, 1)")
    t, Z = traj.tail(tail_fraction)
    if Z.ndim == 1:
        Z = Z[:, None]
    if len(t) < 4:
        raise InsufficientData("tail holds fewer than 4 samples")
    periods, amps, cycles, sustain = [], [], [], []
    any_osc = False
    for c in range(Z.shape[1]):
        x = Z[:, c]
        amp = 0.5 * float(x.max() - x.min())
        amps.append(amp)
        cross = _upward_crossings(t, x, float(x.mean())) if amp > 0 else np.empty(0)
        n_cyc = max(0, len(cross) - 1)
        cycles.append(n_cyc)
        if strict and len(cross) < min_cycles:
            raise InsufficientData(f"component {c}: only {len(cross)} mean-crossings in tail")
        if n_cyc >= 1:
            periods.append(float(np.mean(np.diff(cross))))
        else:
            periods.append(None)
        ratio = None
        if n_cyc >= 2:
            first = (t >= cross[0]) & (t <= cross[1])
            last = (t >= cross[-2]) & (t <= cross[-1])
            a0 = np.ptp(x[first])
            a1 = np.ptp(x[last])
            ratio = float(a1 / a0) if a0 > 0 else 0.0
        sustain.append(ratio)
        if amp > amplitude_floor and n_cyc >= min_cycles and ratio is not None and ratio >= min_sustain:
            any_osc = True
    return PeriodEstimate(tuple(periods), np.array(amps), any_osc, tuple(cycles), tuple(sustain))
