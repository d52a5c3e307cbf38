"""Nash classification, costs and price of anarchy for the opinion game.

Each agent's strategy is its opinion and its payoff is its utility; costs are
negated utilities. Price-of-anarchy quantities are only defined for networks
without antagonistic links and with nonzero preferences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analysis import consensus_report, find_equilibrium
from .errors import AssumptionViolated, MinimizationFailed, NotAnEquilibrium
from .integrate import IntegratorConfig, simulate_ensemble
from .model import InfluenceNetwork, _as_state, _check_index, preferred_roots, utilities, vector_field

EQUILIBRIUM_TOL = 1e-8
NASH_GAP_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class NashClassification:
    tau: np.ndarray
    is_equilibrium_point: bool
    lne_necessary_holds: bool
    lne_sufficient_holds: bool
    sets_coincide: bool
    nonexistence_flag: bool
    best_response_gap: np.ndarray
    is_nash: bool
    ultimate_bound: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class CostReport:
    chi: np.ndarray
    egalitarian: float
    utilitarian: float


@dataclass(frozen=True, eq=False)
class PoAReport:
    satisfaction_ratios: Optional[np.ndarray]
    pi_e_upper: Optional[float]
    pi_u_upper: Optional[float]
    pi_e_exact: Optional[float] = None
    pi_u_exact: Optional[float] = None
    socially_optimal: bool = False
    utilitarian_minimizer: Optional[np.ndarray] = None
    notes: tuple = ()


def tau(net: InfluenceNetwork) -> np.ndarray:
    """Second-order threshold: an equilibrium is a local Nash point when ``z_i^2 > tau_i``."""
    K = net.coupling
    enemy = np.where(K < 0, -K, 0.0).sum(axis=1)
    friend = np.where(K > 0, K, 0.0).sum(axis=1)
    return (net.resources / 3.0) * (enemy - friend - net.stubbornness)


def _full_profile(net: InfluenceNetwork, i: int, others) -> np.ndarray:
    others = np.asarray(others, dtype=float)
    if others.shape == (net.n,):
        return others.copy()
    if others.shape != (net.n - 1,):
        raise ValueError(f"expected {net.n - 1} opinions of the other agents, got shape {others.shape}")
    return np.insert(others, i, 0.0)


def own_utility(net: InfluenceNetwork, i: int, zi, z) -> np.ndarray:
    """``U_i`` as a function of agent ``i``'s opinion with the others held at ``z``."""
    zi = np.asarray(zi, dtype=float)
    a = net.params[i]
    K = net.coupling[i]
    others = np.delete(np.arange(net.n), i)
    social = sum(K[k] * (z[k] - zi) ** 2 for k in others) if len(others) else 0.0
    return -0.5 * net.stubbornness[i] * (zi - a.preference) ** 2 - 0.5 * social - zi**4 / (4 * a.resource)


def stationary_points(net: InfluenceNetwork, i: int, z) -> np.ndarray:
    """Real roots of ``dU_i/dz_i = 0``: ``x^3 + r D x - r E = 0``."""
    r = net.resources[i]
    K = net.coupling[i]
    D = net.stubbornness[i] + net.coupling_rowsum[i]
    E = net.stubbornness[i] * net.preferences[i] + float(K @ z)  # K[i, i] == 0
    roots = np.roots([1.0, 0.0, r * D, -r * E])
    real = roots[np.abs(roots.imag) <= 1e-7 * (1.0 + np.abs(roots.real))].real
    if len(real) == 0:
        real = roots[[np.argmin(np.abs(roots.imag))]].real
    # polish: np.roots loses accuracy near double roots
    for _ in range(3):
        d = 3 * real**2 + r * D
        safe = np.abs(d) > 1e-300
        real = np.where(safe, real - (real**3 + r * D * real - r * E) / np.where(safe, d, 1.0), real)
    return np.unique(real)


def best_response(net: InfluenceNetwork, i: int, others) -> float:
    """Global maximizer of ``U_i`` over agent ``i``'s opinion.

    ``others`` holds the n-1 opinions of the remaining agents (a full profile
    is also accepted; its i-th entry is ignored). Ties within 1e-12 relative
    go to the smallest opinion.
    """
    _check_index(net, i)
    z = _full_profile(net, i, others)
    cand = stationary_points(net, i, z)
    vals = own_utility(net, i, cand, z)
    best = vals.max()
    tied = cand[vals >= best - 1e-12 * max(1.0, abs(best))]
    return float(tied.min())


def best_response_gaps(net: InfluenceNetwork, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    gaps = np.empty(net.n)
    for i in range(net.n):
        br = best_response(net, i, z)
        gaps[i] = max(0.0, float(own_utility(net, i, br, z) - own_utility(net, i, z[i], z)))
    return gaps


def empirical_ultimate_bound(
    net: InfluenceNetwork, n_starts: int = 20, radius: float = 1e3, t_end: float = 1e3, seed: int = 0
) -> np.ndarray:
    """Per-agent ultimate bound estimate: twice the largest ``|z_i|`` seen over
    the second half of long runs started on the sup-norm sphere of ``radius``."""
    rng = np.random.default_rng(seed)
    Z0 = rng.uniform(-radius, radius, size=(n_starts, net.n))
    idx = rng.integers(net.n, size=n_starts)
    Z0[np.arange(n_starts), idx] = radius * rng.choice([-1.0, 1.0], size=n_starts)
    cfg = IntegratorConfig(t_end=t_end, record_every=t_end / 200, abs_tol=1e-7, rel_tol=1e-7)
    trajs = simulate_ensemble(net, Z0, cfg)
    peak = np.zeros(net.n)
    for tr in trajs:
        _, tail = tr.tail(0.5)
        peak = np.maximum(peak, np.abs(tail).max(axis=0))
    return 2.0 * peak


def classify(net: InfluenceNetwork, z_star, eta=None, seed: int = 0) -> NashClassification:
    """Local/global Nash tests for an equilibrium of the dynamics.

    ``eta`` is a per-agent ultimate bound used for the non-existence test; it
    is estimated by simulation only when some ``tau_i > 0`` makes it matter.
    """
    z = _as_state(net, z_star).astype(float)
    resid = float(np.max(np.abs(vector_field(net, z))))
    if resid > EQUILIBRIUM_TOL * (1 + np.max(np.abs(z))):
        raise NotAnEquilibrium(f"residual {resid:.3g} too large for an equilibrium")
    t = tau(net)
    necessary = bool(np.all(z**2 >= t))
    sufficient = bool(np.all(z**2 > t))
    coincide = bool(np.all(t <= 0))
    if np.any(t > 0):
        if eta is None:
            eta = empirical_ultimate_bound(net, seed=seed)
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (net.n,))
        nonexist = bool(np.any(t > eta**2))
    else:
        nonexist = False
    gaps = best_response_gaps(net, z)
    U = utilities(net, z)
    is_nash = bool(np.all(gaps <= NASH_GAP_TOL * (1 + np.abs(U))))
    return NashClassification(
        tau=t,
        is_equilibrium_point=True,
        lne_necessary_holds=necessary,
        lne_sufficient_holds=sufficient,
        sets_coincide=coincide,
        nonexistence_flag=nonexist,
        best_response_gap=gaps,
        is_nash=is_nash,
        ultimate_bound=None if eta is None else np.array(eta),
    )


def costs(net: InfluenceNetwork, z) -> CostReport:
    chi = -utilities(net, z)
    return CostReport(chi, float(chi.max()), float(chi.sum()))


def _require_a1(net: InfluenceNetwork, what: str) -> None:
    if net.has_enemies:
        raise AssumptionViolated(f"{what} requires a network without antagonistic links")


def _require_a3(net: InfluenceNetwork, what: str) -> None:
    if np.any(net.preferences == 0):
        zero = [int(i) for i in np.flatnonzero(net.preferences == 0)]
        raise AssumptionViolated(f"{what} requires nonzero preferences; agents {zero} have p = 0")


def minimum_costs(net: InfluenceNetwork) -> np.ndarray:
    """``min_z chi_i(z)``, attained at ``m_i * 1`` where the coupling term vanishes."""
    m = preferred_roots(net)
    return 0.5 * net.stubbornness * (m - net.preferences) ** 2 + m**4 / (4 * net.resources)


def satisfaction_ratios(net: InfluenceNetwork, z) -> np.ndarray:
    _require_a1(net, "satisfaction ratios")
    _require_a3(net, "satisfaction ratios")
    return costs(net, z).chi / minimum_costs(net)


def cost_hessian(net: InfluenceNetwork, i: int, z) -> np.ndarray:
    """Hessian of ``chi_i`` with respect to the whole profile."""
    z = np.asarray(z, dtype=float)
    K = net.coupling[i]
    H = np.diag(K.copy())
    H[i, :] = -K
    H[:, i] = -K
    H[i, i] = net.stubbornness[i] + K.sum() + 3 * z[i] ** 2 / net.resources[i]
    return H


def _gerschgorin_nonnegative(H: np.ndarray, tol: float = 1e-12) -> bool:
    radius = np.abs(H).sum(axis=1) - np.abs(np.diag(H))
    left = np.diag(H) - radius
    return bool(np.all(left >= -tol * (1.0 + np.abs(np.diag(H)))))


def hessian_psd_check(net: InfluenceNetwork, i: int, z) -> bool:
    """Every Gerschgorin disc of the Hessian of ``chi_i`` lies in ``[0, inf)``."""
    _require_a1(net, "the Hessian check")
    _check_index(net, i)
    return _gerschgorin_nonnegative(cost_hessian(net, i, z))


def _utilitarian_grad_hess(net: InfluenceNetwork, z):
    K = net.coupling
    L = np.diag(net.coupling_rowsum + K.sum(axis=0)) - K - K.T
    r = net.resources
    g = net.stubbornness * (z - net.preferences) + L @ z + z**3 / r
    H = np.diag(net.stubbornness + 3 * z**2 / r) + L
    return g, H


def minimize_utilitarian(net: InfluenceNetwork, z0, gtol: float = 1e-9, max_iter: int = 100):
    """Newton with backtracking on the convex total cost. Returns ``(z, converged)``."""
    z = np.array(z0, dtype=float)
    cu = costs(net, z).utilitarian
    for _ in range(max_iter):
        g, H = _utilitarian_grad_hess(net, z)
        if np.linalg.norm(g) <= gtol:
            return z, True
        if not _gerschgorin_nonnegative(H):
            raise AssumptionViolated("utilitarian cost Hessian failed the Gerschgorin test")
        dz = np.linalg.solve(H, -g)
        lam = 1.0
        while lam > 1e-12:
            z_try = z + lam * dz
            c_try = costs(net, z_try).utilitarian
            if c_try <= cu + 1e-4 * lam * float(g @ dz):
                break
            lam *= 0.5
        else:
            # no decrease left at machine precision
            return z, bool(np.linalg.norm(g) <= 1e3 * gtol)
        z, cu = z_try, c_try
    g, _ = _utilitarian_grad_hess(net, z)
    return z, bool(np.linalg.norm(g) <= gtol)


def minimize_egalitarian(net: InfluenceNetwork, z0, steps: int = 10_000, c: Optional[float] = None):
    """Subgradient descent on ``max_i chi_i`` with step ``c / sqrt(k)``; returns the best iterate."""
    z = np.array(z0, dtype=float)
    if c is None:
        m = preferred_roots(net)
        c = 0.1 * max(1.0, float(m.max() - m.min()))
    best_z, best = z.copy(), costs(net, z).egalitarian
    K = net.coupling
    for k in range(1, steps + 1):
        chi = -utilities(net, z)
        i = int(np.argmax(chi))
        # gradient of chi_i
        g = K[i] * (z - z[i])
        g[i] = (net.stubbornness[i] * (z[i] - net.preferences[i]) + K[i].sum() * z[i] - K[i] @ z
                + z[i] ** 3 / net.resources[i])
        gn = np.linalg.norm(g)
        if gn == 0:
            return z, float(chi[i])
        z = z - (c / np.sqrt(k)) * g / gn
        val = costs(net, z).egalitarian
        if val < best:
            best, best_z = val, z.copy()
    return best_z, best


def poa(net: InfluenceNetwork, z_star=None, strict: bool = False, egalitarian_steps: int = 10_000) -> PoAReport:
    """Satisfaction-ratio bounds and exact prices of anarchy at the unique Nash equilibrium."""
    _require_a1(net, "price of anarchy")
    if np.all(net.preferences == 0):
        return PoAReport(None, None, None, socially_optimal=True,
                         notes=("all preferences are zero: neutral consensus is socially optimal, ratios undefined",))
    _require_a3(net, "price of anarchy")
    if z_star is None:
        z_star = find_equilibrium(net, preferred_roots(net)).z_star
    z_star = np.asarray(z_star, dtype=float)
    sr = satisfaction_ratios(net, z_star)
    pe_up, pu_up = float(sr.max()), float(sr.sum())

    if consensus_report(net).consensus_exists:
        return PoAReport(sr, pe_up, pu_up, 1.0, 1.0, socially_optimal=True, utilitarian_minimizer=z_star.copy(),
                         notes=("non-neutral consensus equilibrium is socially optimal",))

    notes = []
    z_u, ok = minimize_utilitarian(net, z_star)
    pu = costs(net, z_star).utilitarian / costs(net, z_u).utilitarian if ok else None
    if not ok:
        if strict:
            raise MinimizationFailed("utilitarian Newton did not reach the gradient tolerance")
        notes.append("utilitarian minimization did not converge; only bounds reported")
    _, ce_min = minimize_egalitarian(net, z_star, steps=egalitarian_steps)
    pe = costs(net, z_star).egalitarian / ce_min
    return PoAReport(sr, pe_up, pu_up, pe, pu, False, z_u if ok else None, tuple(notes))
