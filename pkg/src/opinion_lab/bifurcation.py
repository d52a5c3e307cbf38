"""Two-agent oscillations: Bendixson-type exclusions, the divergence ellipse
and Hopf bifurcation in the conformity weight of agent 2.

The two-agent system is the general model with ``a_12 = c1`` and
``a_21 = c2``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import NotConsensusEligible
from .integrate import IntegratorConfig, detect_convergence, estimate_periods, simulate
from .model import ROOT_EQUALITY_TOL, AgentParams, InfluenceNetwork, build_network, preferred_roots, roots_equal

DEFAULT_CYCLE_CONFIG = IntegratorConfig(t_end=2000.0, record_every=0.2)


@dataclass(frozen=True)
class TwoAgentScenario:
    params: tuple[AgentParams, AgentParams]
    c1: float
    c2: float

    @classmethod
    def from_values(cls, w, r, p, c1, c2) -> "TwoAgentScenario":
        return cls(tuple(AgentParams(p[i], w[i], r[i]) for i in range(2)), float(c1), float(c2))

    @classmethod
    def from_network(cls, net: InfluenceNetwork) -> "TwoAgentScenario":
        if net.n != 2:
            raise ValueError(f"two-agent analysis needs n = 2, got n = {net.n}")
        return cls(tuple(net.params), float(net.weights[0, 1]), float(net.weights[1, 0]))

    def with_c2(self, c2: float) -> "TwoAgentScenario":
        return replace(self, c2=float(c2))

    def network(self) -> InfluenceNetwork:
        return build_network([[0.0, self.c1], [self.c2, 0.0]], self.params)

    @property
    def w(self) -> np.ndarray:
        return np.array([a.importance for a in self.params])

    @property
    def r(self) -> np.ndarray:
        return np.array([a.resource for a in self.params])

    @property
    def B(self) -> float:
        return float(self.r.sum())

    @property
    def m(self) -> np.ndarray:
        return preferred_roots(self.network())

    @property
    def kappa(self) -> np.ndarray:
        w, r, m = self.w, self.r, self.m
        return w * r / self.B + 3 * m**2 / r

    @property
    def g(self) -> float:
        return float(self.r[0] / self.B)

    @property
    def d(self) -> float:
        return float(self.c1 * self.r[1] / self.B)

    @property
    def divergence_sum(self) -> float:
        w, r = self.w, self.r
        return float(self.c2 * r[0] + w[0] * r[0] + w[1] * r[1] + self.c1 * r[1])

    @property
    def upsilon(self) -> float:
        return -self.divergence_sum / (3 * self.B)

    @property
    def eligibility_value(self) -> float:
        k1, k2 = self.kappa
        return float(self.d * (k2 - k1) - k1**2)

    @property
    def c2_star(self) -> Optional[float]:
        if not roots_equal(*self.m) or self.eligibility_value <= 0:
            return None
        # -(k1 + k2 + d) / g with B cleared: exact for integer data
        w, r, m = self.w, self.r, self.m
        num = w[0] * r[0] + w[1] * r[1] + self.c1 * r[1] + 3 * self.B * (m[0] ** 2 / r[0] + m[1] ** 2 / r[1])
        return float(-num / r[0])


class PeriodicityReport(NamedTuple):
    contrarian_present: bool
    both_nonzero: bool
    divergence_sum_negative: bool
    divergence_sum: float
    all_hold: bool


class Ellipse(NamedTuple):
    upsilon: float
    semi_axes: tuple


@dataclass(frozen=True, eq=False)
class HopfReport:
    eligible: bool
    eligibility_value: float
    c2_star: Optional[float]
    consensus_value: float
    jacobian_at_consensus: np.ndarray
    jacobian_at_c2_star: Optional[np.ndarray]
    trace_at_c2_star: Optional[float]
    det_at_c2_star: Optional[float]
    eigenvalues_at_c2_star: Optional[np.ndarray]
    eigenvalues_numeric: Optional[np.ndarray]
    transversality: float


@dataclass(frozen=True, eq=False)
class LimitCycleReport:
    c2: float
    oscillating: bool
    periods: tuple
    period_ratio: Optional[float]
    amplitude: np.ndarray
    crosses_ellipse: bool
    converged: bool
    final_state: np.ndarray


class SweepRow(NamedTuple):
    param_value: float
    amplitude: float
    period: Optional[float]
    converged: bool
    oscillating: bool


def periodicity_necessary(sc: TwoAgentScenario) -> PeriodicityReport:
    """Conditions every periodic orbit requires; any failure rules orbits out."""
    contrarian = sc.c1 < 0 or sc.c2 < 0
    nonzero = sc.c1 * sc.c2 != 0
    s = sc.divergence_sum
    return PeriodicityReport(contrarian, nonzero, s < 0, s, contrarian and nonzero and s < 0)


def divergence(sc: TwoAgentScenario, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    r = sc.r
    return -sc.divergence_sum / sc.B - 3 * z[..., 0] ** 2 / r[0] - 3 * z[..., 1] ** 2 / r[1]


def ellipse_level(sc: TwoAgentScenario, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z[..., 0] ** 2 / sc.r[0] + z[..., 1] ** 2 / sc.r[1]


def divergence_ellipse(sc: TwoAgentScenario) -> Optional[Ellipse]:
    """Zero-divergence curve ``z1^2/r1 + z2^2/r2 = upsilon``; ``None`` when ``upsilon <= 0``."""
    u = sc.upsilon
    if u <= 0:
        return None
    return Ellipse(u, (float(np.sqrt(sc.r[0] * u)), float(np.sqrt(sc.r[1] * u))))


def consensus_jacobian(sc: TwoAgentScenario, c2: float) -> np.ndarray:
    k1, k2 = sc.kappa
    d, g = sc.d, sc.g
    return np.array([[-k1 - d, d], [g * c2, -k2 - g * c2]])


def _eig2(J: np.ndarray) -> np.ndarray:
    tr = J[0, 0] + J[1, 1]
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    disc = complex(tr * tr / 4 - det)
    root = np.sqrt(disc)
    return np.array([tr / 2 + root, tr / 2 - root])


def hopf_analysis(sc: TwoAgentScenario, tol: float = ROOT_EQUALITY_TOL) -> HopfReport:
    m = sc.m
    if not roots_equal(m[0], m[1], tol):
        raise NotConsensusEligible(f"m1 = {m[0]!r} and m2 = {m[1]!r} differ; no consensus equilibrium")
    elig = sc.eligibility_value
    J_now = consensus_jacobian(sc, sc.c2)
    transversality = -sc.r[0] / (2 * sc.B)
    if elig <= 0:
        return HopfReport(False, elig, None, float(m.mean()), J_now, None, None, None, None, None, transversality)
    c2s = sc.c2_star
    J = consensus_jacobian(sc, c2s)
    tr = float(J[0, 0] + J[1, 1])
    det = float(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    return HopfReport(
        eligible=True,
        eligibility_value=elig,
        c2_star=c2s,
        consensus_value=float(m.mean()),
        jacobian_at_consensus=J_now,
        jacobian_at_c2_star=J,
        trace_at_c2_star=tr,
        det_at_c2_star=det,
        eigenvalues_at_c2_star=_eig2(J),
        eigenvalues_numeric=np.sort_complex(np.linalg.eigvals(J))[::-1],
        transversality=transversality,
    )


def verify_limit_cycle(
    sc: TwoAgentScenario,
    c2_value: Optional[float] = None,
    z0=None,
    cfg: Optional[IntegratorConfig] = None,
    tail_fraction: float = 0.5,
    conv_tol: float = 1e-6,
) -> LimitCycleReport:
    """Simulate at ``c2_value`` and report sustained oscillation on the tail."""
    c2 = sc.c2 if c2_value is None else float(c2_value)
    sc = sc.with_c2(c2)
    net = sc.network()
    # the consensus point is an equilibrium for every c2; start just off it
    z0 = sc.m + np.array([1e-2, 0.0]) if z0 is None else np.asarray(z0, dtype=float)
    traj = simulate(net, z0, cfg or DEFAULT_CYCLE_CONFIG)
    est = estimate_periods(traj, tail_fraction)
    periods = est.per_component_period
    ratio = periods[0] / periods[1] if est.oscillating and None not in periods else None
    _, tail = traj.tail(tail_fraction)
    level = ellipse_level(sc, tail)
    u = sc.upsilon
    crosses = bool(u > 0 and np.any(level < u) and np.any(level > u))
    verdict = detect_convergence(net, traj, conv_tol)
    return LimitCycleReport(c2, est.oscillating, periods, ratio, est.amplitude, crosses, verdict.converged,
                            np.array(traj.final))


def sweep_c2(sc: TwoAgentScenario, values: Sequence[float], z0=None, cfg=None) -> list[SweepRow]:
    """Amplitude and period of the long-run behaviour for each ``c2`` in ``values``."""
    rows = []
    for c2 in values:
        rep = verify_limit_cycle(sc, c2, z0, cfg)
        amp = float(np.max(rep.amplitude))
        period = None
        if rep.oscillating:
            known = [T for T in rep.periods if T is not None]
            period = float(np.mean(known)) if known else None
        rows.append(SweepRow(float(c2), amp, period, rep.converged, rep.oscillating))
    return rows
