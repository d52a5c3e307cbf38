"""Contraction certificates, equilibrium solving and structural checks."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import AssumptionViolated, NoConvergence
from .integrate import IntegratorConfig, Trajectory, simulate
from .model import (
    ROOT_EQUALITY_TOL,
    InfluenceNetwork,
    invariant_interval,
    jacobian,
    preferred_roots,
    roots_equal,
    vector_field,
)


@dataclass(frozen=True, eq=False)
class ContractionCertificate:
    satisfies_A2: bool
    per_agent_margin: np.ndarray
    rate_bound: float


@dataclass(frozen=True, eq=False)
class ConsensusReport:
    consensus_exists: bool
    xi: Optional[float]
    dominance_weights: np.ndarray
    deviations: Optional[np.ndarray]
    dominance_order: tuple
    sigma_delta: Optional[np.ndarray] = None
    sigma_delta_spread: Optional[float] = None
    dominance_consistent: Optional[bool] = None


@dataclass(frozen=True, eq=False)
class EquilibriumReport:
    z_star: np.ndarray
    residual: float
    jacobian_eigen_max_real: float
    in_interior_of_M: Optional[bool]
    method: str = "newton"
    iterations: int = 0
    classification: object = None

    def with_classification(self, classification) -> "EquilibriumReport":
        return replace(self, classification=classification)


class InteriorTest(NamedTuple):
    holds: bool
    explanation: str
    unreached_max: frozenset
    unreached_min: frozenset


def mu_inf(M) -> float:
    """Log-norm induced by the infinity norm: max row of ``a_ii + sum_{j!=i} |a_ij|``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"square matrix required, got shape {M.shape}")
    off = np.abs(M).sum(axis=1) - np.abs(np.diag(M))
    return float(np.max(np.diag(M) + off))


def contraction_certificate(net: InfluenceNetwork) -> ContractionCertificate:
    """Weak-antagonism margins and the z-independent bound on ``mu_inf(J(z))``.

    The ``-3 z_i^2 / r_i`` diagonal term is never positive, so the supremum
    over z is attained at z = 0.
    """
    enemy = np.where(net.coupling < 0, -net.coupling, 0.0).sum(axis=1)
    margins = net.stubbornness - 2.0 * enemy
    return ContractionCertificate(bool(np.all(margins > 0)), margins, float(-margins.min()))


def _tol(z, scale):
    return scale * (1.0 + float(np.max(np.abs(z))))


def _newton(net, z, tol_scale, max_iter):
    """Damped Newton on f(z) = 0 with backtracking on the 2-norm of f."""
    F = vector_field(net, z)
    for it in range(max_iter + 1):
        if np.max(np.abs(F)) <= _tol(z, tol_scale):
            return z, it, True
        if it == max_iter:
            break
        J = jacobian(net, z)
        try:
            dz = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            dz = np.linalg.lstsq(J, -F, rcond=None)[0]
        if not np.all(np.isfinite(dz)):
            break
        phi0 = float(np.linalg.norm(F))
        lam = 1.0
        while lam > 2.0**-40:
            z_try = z + lam * dz
            F_try = vector_field(net, z_try)
            if np.linalg.norm(F_try) < phi0:
                break
            lam *= 0.5
        else:
            break
        z, F = z_try, F_try
    return z, it, False


def _report(net, z, method, iters) -> EquilibriumReport:
    residual = float(np.max(np.abs(vector_field(net, z))))
    eig = float(np.max(np.linalg.eigvals(jacobian(net, z)).real))
    interior = None
    if not net.has_enemies:
        lo, hi, _, _ = invariant_interval(net)
        interior = bool(lo < hi and np.all(z > lo) and np.all(z < hi))
    return EquilibriumReport(np.array(z), residual, eig, interior, method, iters)


def find_equilibrium(
    net: InfluenceNetwork,
    guess,
    tol_scale: float = 1e-10,
    max_iter: int = 60,
    fallback: bool = True,
    cfg: Optional[IntegratorConfig] = None,
) -> EquilibriumReport:
    """Solve f(z) = 0 from ``guess``.

    Damped Newton first; if it stagnates, integrate the dynamics from the
    guess and polish the end state with Newton. Raises :class:`NoConvergence`
    when both fail (oscillatory dynamics, typically).
    """
    z0 = np.array(guess, dtype=float)
    z, iters, ok = _newton(net, z0, tol_scale, max_iter)
    if ok:
        return _report(net, z, "newton", iters)
    if not fallback:
        raise NoConvergence(f"Newton stagnated after {iters} iterations (residual "
                            f"{np.max(np.abs(vector_field(net, z))):.3g})")
    cert = contraction_certificate(net)
    horizon = 10.0 / abs(cert.rate_bound) if cert.satisfies_A2 else 500.0
    cfg = (cfg or IntegratorConfig()).replace(t_end=horizon, record_every=horizon / 10, step=min(0.01, horizon))
    traj = simulate(net, z0, cfg)
    z, more, ok = _newton(net, traj.final, tol_scale, max_iter)
    if ok:
        return _report(net, z, "integration+newton", iters + more)
    raise NoConvergence(
        f"no equilibrium found from guess: Newton and a {horizon:g}-unit integration both failed "
        f"(residual {np.max(np.abs(vector_field(net, z))):.3g})"
    )


def multistart_starts(net: InfluenceNetwork, points_per_axis: int = 5, n_random: int = 64, seed: int = 0):
    """Starting points covering ``[m_min - 1, m_max + 1]^n``.

    A full lattice for n <= 4, uniform random draws otherwise.
    """
    m = preferred_roots(net)
    lo, hi = m.min() - 1.0, m.max() + 1.0
    if net.n <= 4:
        axis = np.linspace(lo, hi, points_per_axis)
        return np.array(list(itertools.product(axis, repeat=net.n)))
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=(n_random, net.n))


def find_equilibria(
    net: InfluenceNetwork,
    starts=None,
    dedupe_tol: float = 1e-8,
    fallback: bool = False,
    **kwargs,
) -> list[EquilibriumReport]:
    """Run :func:`find_equilibrium` from many starts; distinct results, lexicographically sorted."""
    if starts is None:
        starts = multistart_starts(net)
    found: list[EquilibriumReport] = []
    for s in np.atleast_2d(starts):
        try:
            rep = find_equilibrium(net, s, fallback=fallback, **kwargs)
        except NoConvergence:
            continue
        if not any(np.max(np.abs(rep.z_star - f.z_star)) < dedupe_tol * (1 + np.max(np.abs(f.z_star)))
                   for f in found):
            found.append(rep)
    found.sort(key=lambda r: tuple(r.z_star))
    return found


def consensus_report(net: InfluenceNetwork, tol: float = ROOT_EQUALITY_TOL) -> ConsensusReport:
    m = preferred_roots(net)
    p = net.preferences
    sigma = net.importance * net.resources**2
    order = tuple(int(i) for i in np.argsort(-sigma, kind="stable"))
    exists = all(roots_equal(mi, m[0], tol) for mi in m)
    if not exists:
        return ConsensusReport(False, None, sigma, None, order)
    xi = float(np.mean(m))
    delta = np.abs(p - xi)
    if np.all(p != 0):
        sd = sigma * delta
        spread = float((sd.max() - sd.min()) / sd.mean())
        # larger dominance weight <=> smaller deviation, checked pairwise
        consistent = all(
            (sigma[i] > sigma[j]) == (delta[i] < delta[j])
            for i in range(net.n) for j in range(net.n)
            if i != j and not np.isclose(sigma[i], sigma[j], rtol=1e-12)
        )
        return ConsensusReport(True, xi, sigma, delta, order, sd, spread, consistent)
    return ConsensusReport(True, xi, sigma, delta, order)


def _reached_from(net: InfluenceNetwork, sources) -> set[int]:
    """Agents reachable by a walk of length >= 1 from ``sources``.

    ``a_ik != 0`` is an arc k -> i (k influences i).
    """
    out = [np.flatnonzero(net.weights[:, k] != 0) for k in range(net.n)]
    seen: set[int] = set()
    queue = deque(sources)
    while queue:
        k = queue.popleft()
        for i in out[k]:
            i = int(i)
            if i not in seen:
                seen.add(i)
                queue.append(i)
    return seen


def interior_equilibrium_test(net: InfluenceNetwork, tol: float = ROOT_EQUALITY_TOL) -> InteriorTest:
    """Whether the unique equilibrium lies strictly inside ``[m_min, m_max]^n``.

    Requires no antagonistic links and ``m_min < m_max``. Holds iff every
    agent attaining ``m_max`` (resp. ``m_min``) is reached by a directed walk
    from some agent outside that set.
    """
    if net.has_enemies:
        raise AssumptionViolated("interior test requires a network without antagonistic links")
    lo, hi, v_min, v_max = invariant_interval(net, tol)
    if roots_equal(lo, hi, tol):
        raise AssumptionViolated("interior test requires m_min < m_max")
    everyone = set(range(net.n))
    miss_max = frozenset(v_max - _reached_from(net, everyone - v_max))
    miss_min = frozenset(v_min - _reached_from(net, everyone - v_min))
    holds = not miss_max and not miss_min
    if holds:
        why = "every extreme agent is reached by a walk from outside its extreme set"
    else:
        parts = []
        if miss_max:
            parts.append(f"agents {sorted(miss_max)} at m_max have no incoming walk from the rest")
        if miss_min:
            parts.append(f"agents {sorted(miss_min)} at m_min have no incoming walk from the rest")
        why = "; ".join(parts)
    return InteriorTest(holds, why, miss_max, miss_min)


def socially_closed_agents(net: InfluenceNetwork) -> frozenset:
    """Agents with no neighbours; each one's opinion tends to its own ``m_i``."""
    return frozenset(int(i) for i in np.flatnonzero(~np.any(net.weights != 0, axis=1)))


def chord_rates(a: Trajectory, b: Trajectory, floor: float = 1e-7) -> np.ndarray:
    """``log(d(t)/d(0)) / t`` for the sup-norm gap between two trajectories.

    Samples where the gap has fallen below ``floor`` (relative to the initial
    gap) are dropped, since integration error dominates there.
    """
    d = np.max(np.abs(a.states - b.states), axis=1)
    keep = (a.times > 0) & (d > floor * d[0])
    return np.log(d[keep] / d[0]) / a.times[keep]
