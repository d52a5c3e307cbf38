"""Resource-penalized opinion dynamics on a signed influence network.

Agent ``i`` maximizes

    U_i(z) = -(w_i r_i / 2B)(z_i - p_i)^2
             - 1/2 sum_k (a_ik r_k / B)(z_k - z_i)^2
             - z_i^4 / (4 r_i)

by gradient ascent in its own opinion, which gives the vector field

    f_i(z) = -(w_i r_i / B)(z_i - p_i) + sum_k (a_ik r_k / B)(z_k - z_i) - z_i^3 / r_i.

Agents are indexed from 0. Every function accepting an opinion vector also
accepts a stack of them with shape ``(..., n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, NonPositiveParameter

# default tolerance for treating two preferred roots as equal
ROOT_EQUALITY_TOL = 1e-9


@dataclass(frozen=True)
class AgentParams:
    preference: float
    importance: float
    resource: float

    def __post_init__(self):
        for name in ("preference", "importance", "resource"):
            object.__setattr__(self, name, float(getattr(self, name)))


@dataclass(frozen=True, eq=False)
class InfluenceNetwork:
    """Signed influence weights plus per-agent parameters.

    ``weights[i, k]`` is the influence of agent ``k`` on agent ``i``. Build
    instances with :func:`build_network`, which validates and zeroes the
    diagonal.
    """

    weights: np.ndarray
    params: tuple[AgentParams, ...]
    warnings: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return len(self.params)

    @cached_property
    def preferences(self) -> np.ndarray:
        return _frozen(np.array([a.preference for a in self.params]))

    @cached_property
    def importance(self) -> np.ndarray:
        return _frozen(np.array([a.importance for a in self.params]))

    @cached_property
    def resources(self) -> np.ndarray:
        return _frozen(np.array([a.resource for a in self.params]))

    @property
    def total_resource(self) -> float:
        return float(self.resources.sum())

    B = total_resource

    @cached_property
    def coupling(self) -> np.ndarray:
        """Effective coupling ``a_ik r_k / B``."""
        return _frozen(self.weights * self.resources[None, :] / self.total_resource)

    @cached_property
    def coupling_rowsum(self) -> np.ndarray:
        return _frozen(self.coupling.sum(axis=1))

    @cached_property
    def stubbornness(self) -> np.ndarray:
        """Self-anchoring coefficient ``w_i r_i / B``."""
        return _frozen(self.importance * self.resources / self.total_resource)

    def enemies(self, i: int) -> set[int]:
        _check_index(self, i)
        return {int(k) for k in np.flatnonzero(self.weights[i] < 0)}

    def friends(self, i: int) -> set[int]:
        _check_index(self, i)
        return {int(k) for k in np.flatnonzero(self.weights[i] > 0)}

    def neighbors(self, i: int) -> set[int]:
        _check_index(self, i)
        return {int(k) for k in np.flatnonzero(self.weights[i] != 0)}

    @property
    def has_enemies(self) -> bool:
        return bool((self.weights < 0).any())

    def with_weights(self, weights) -> "InfluenceNetwork":
        return build_network(weights, self.params)

    def with_params(self, params) -> "InfluenceNetwork":
        return build_network(self.weights, params)


class SelfCrowdSplit(NamedTuple):
    self_value: float
    crowd_value: float


class MInterval(NamedTuple):
    m_min: float
    m_max: float
    v_min: frozenset
    v_max: frozenset


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_index(net: InfluenceNetwork, i: int) -> None:
    if not (0 <= int(i) < net.n):
        raise IndexOutOfRange(f"agent index {i} outside [0, {net.n})")


def _as_state(net: InfluenceNetwork, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 or z.shape[-1] != net.n:
        raise DimensionMismatch(f"opinion vector has shape {z.shape}, expected (..., {net.n})")
    return z


def build_network(weights, params: Sequence[AgentParams]) -> InfluenceNetwork:
    """Validate inputs and return an :class:`InfluenceNetwork`.

    Nonzero self-loops are dropped (they do not enter the utility) and
    reported in ``net.warnings``.
    """
    params = tuple(p if isinstance(p, AgentParams) else AgentParams(*p) for p in params)
    W = np.array(weights, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionMismatch(f"weight matrix must be square, got shape {W.shape}")
    if W.shape[0] != len(params):
        raise DimensionMismatch(f"{W.shape[0]}x{W.shape[0]} weights but {len(params)} agents")
    if not np.all(np.isfinite(W)):
        raise DimensionMismatch("weight matrix contains non-finite entries")
    for i, a in enumerate(params):
        if not (a.importance > 0):
            raise NonPositiveParameter(f"agent {i}: importance w must be > 0, got {a.importance}")
        if not (a.resource > 0):
            raise NonPositiveParameter(f"agent {i}: resource r must be > 0, got {a.resource}")
        if not np.isfinite(a.preference):
            raise NonPositiveParameter(f"agent {i}: preference must be finite")
    notes = []
    diag = np.diag(W).copy()
    for i in np.flatnonzero(diag):
        notes.append(f"self-loop weight a[{i},{i}]={diag[i]!r} ignored")
    np.fill_diagonal(W, 0.0)
    return InfluenceNetwork(_frozen(W), params, tuple(notes))


def network_from_arrays(weights, preferences, importance, resources) -> InfluenceNetwork:
    params = [AgentParams(p, w, r) for p, w, r in zip(preferences, importance, resources)]
    if not (len(preferences) == len(importance) == len(resources)):
        raise DimensionMismatch("preference, importance and resource vectors differ in length")
    return build_network(weights, params)


def utilities(net: InfluenceNetwork, z) -> np.ndarray:
    """All agents' utilities at ``z``; shape matches ``z``."""
    z = _as_state(net, z)
    p, r, B = net.preferences, net.resources, net.total_resource
    anchor = -(net.importance * r / (2 * B)) * (z - p) ** 2
    diff = z[..., None, :] - z[..., :, None]  # diff[..., i, k] = z_k - z_i
    social = -0.5 * np.sum(net.coupling * diff**2, axis=-1)
    penalty = -(z**4) / (4 * r)
    return anchor + social + penalty


def utility(net: InfluenceNetwork, z, i: int) -> float:
    _check_index(net, i)
    z = _as_state(net, z)
    if z.ndim != 1:
        raise DimensionMismatch("utility() takes a single opinion vector")
    return float(utilities(net, z)[i])


def self_function(net: InfluenceNetwork, z) -> np.ndarray:
    z = _as_state(net, z)
    return -net.stubbornness * (z - net.preferences) - z**3 / net.resources


def crowd_function(net: InfluenceNetwork, z) -> np.ndarray:
    z = _as_state(net, z)
    return z @ net.coupling.T - net.coupling_rowsum * z


def vector_field(net: InfluenceNetwork, z) -> np.ndarray:
    z = _as_state(net, z)
    return (
        net.stubbornness * (net.preferences - z)
        - z**3 / net.resources
        + (z @ net.coupling.T - net.coupling_rowsum * z)
    )


def split_components(net: InfluenceNetwork, z, i: int) -> SelfCrowdSplit:
    _check_index(net, i)
    z = _as_state(net, z)
    return SelfCrowdSplit(float(self_function(net, z)[..., i]), float(crowd_function(net, z)[..., i]))


def preferred_root(net: InfluenceNetwork, i: int) -> float:
    """Unique real root ``m_i`` of the self function of agent ``i``.

    The root of ``z^3 + c z - c p`` with ``c = w r^2 / B > 0`` lies between 0
    and ``p``; bisect there, then polish with Newton inside the bracket.
    """
    _check_index(net, i)
    a = net.params[i]
    c = a.importance * a.resource**2 / net.total_resource
    return _monotone_cubic_root(c, a.preference)


def _monotone_cubic_root(c: float, p: float, atol: float = 1e-12) -> float:
    if p == 0.0:
        return 0.0
    lo, hi = (0.0, p) if p > 0 else (p, 0.0)

    def g(x):
        return x**3 + c * x - c * p

    width_target = 1e-6 * max(1.0, abs(p))
    while hi - lo > width_target:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
    x = 0.5 * (lo + hi)
    for _ in range(50):
        step = g(x) / (3 * x * x + c)
        x_new = x - step
        if not (lo <= x_new <= hi):
            x_new = 0.5 * (lo + hi)
        if g(x_new) > 0:
            hi = min(hi, x_new)
        else:
            lo = max(lo, x_new)
        if abs(x_new - x) <= atol:
            return x_new
        x = x_new
    return x


def preferred_roots(net: InfluenceNetwork) -> np.ndarray:
    return np.array([preferred_root(net, i) for i in range(net.n)])


def roots_equal(a: float, b: float, tol: float = ROOT_EQUALITY_TOL) -> bool:
    return abs(a - b) <= max(tol, tol * max(abs(a), abs(b)))


def invariant_interval(net: InfluenceNetwork, tol: float = ROOT_EQUALITY_TOL) -> MInterval:
    m = preferred_roots(net)
    lo, hi = float(m.min()), float(m.max())
    v_max = frozenset(i for i in range(net.n) if roots_equal(m[i], hi, tol))
    v_min = frozenset(i for i in range(net.n) if roots_equal(m[i], lo, tol))
    return MInterval(lo, hi, v_min, v_max)


def jacobian(net: InfluenceNetwork, z) -> np.ndarray:
    z = _as_state(net, z)
    if z.ndim != 1:
        raise DimensionMismatch("jacobian() takes a single opinion vector")
    J = np.array(net.coupling)
    J[np.diag_indices(net.n)] = -net.stubbornness - net.coupling_rowsum - 3 * z**2 / net.resources
    return J
