"""Random instance generators.

Distributions: weights uniform on [-1, 1] masked by an independent edge
probability; importance and resource log-uniform on ``[0.1, 10]``;
preferences uniform on ``p_range``. All draws come from the caller's
``numpy.random.Generator``.
"""

from __future__ import annotations

import numpy as np

from .bifurcation import TwoAgentScenario, periodicity_necessary
from .model import AgentParams, InfluenceNetwork, build_network

KINDS = ("any", "a1", "a2")


def log_uniform(rng: np.random.Generator, lo: float, hi: float, size=None):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=size))


def random_params(rng, n, w_range=(0.1, 10.0), r_range=(0.1, 10.0), p_range=(-10.0, 10.0)) -> list[AgentParams]:
    w = log_uniform(rng, *w_range, size=n)
    r = log_uniform(rng, *r_range, size=n)
    p = rng.uniform(*p_range, size=n)
    return [AgentParams(p[i], w[i], r[i]) for i in range(n)]


def random_weights(rng, n, edge_prob=0.6, scale=1.0) -> np.ndarray:
    W = scale * rng.uniform(-1.0, 1.0, size=(n, n)) * (rng.random((n, n)) < edge_prob)
    np.fill_diagonal(W, 0.0)
    return W


def random_network(rng, n, kind="any", edge_prob=0.6, scale=1.0, a2_slack=0.9, **param_ranges) -> InfluenceNetwork:
    """Random network of the requested kind.

    ``a1`` takes absolute weights (no antagonism). ``a2`` shrinks each
    agent's enemy weights until twice their pull is at most ``a2_slack``
    times its stubbornness.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    params = random_params(rng, n, **param_ranges)
    W = random_weights(rng, n, edge_prob, scale)
    if kind == "a1":
        W = np.abs(W)
    elif kind == "a2":
        r = np.array([a.resource for a in params])
        w = np.array([a.importance for a in params])
        B = r.sum()
        for i in range(n):
            enemy = 2 * np.sum(np.where(W[i] < 0, -W[i], 0.0) * r) / B
            budget = a2_slack * w[i] * r[i] / B
            if enemy > budget:
                W[i] = np.where(W[i] < 0, W[i] * budget / enemy, W[i])
    return build_network(W, params)


def random_two_agent(rng, c_range=(-20.0, 20.0), **param_ranges) -> TwoAgentScenario:
    params = random_params(rng, 2, **param_ranges)
    c1, c2 = rng.uniform(*c_range, size=2)
    return TwoAgentScenario(tuple(params), float(c1), float(c2))


def random_two_agent_without_cycles(rng, **kw) -> TwoAgentScenario:
    """Two-agent scenario violating at least one necessary condition for periodic orbits.

    The violated condition is picked uniformly, then the other weights drawn
    freely: nonnegative weights, one zero weight, or a nonnegative divergence sum.
    """
    which = int(rng.integers(3))
    while True:
        sc = random_two_agent(rng, **kw)
        if which == 0:
            sc = TwoAgentScenario(sc.params, abs(sc.c1), abs(sc.c2))
        elif which == 1:
            sc = TwoAgentScenario(sc.params, sc.c1, 0.0) if rng.random() < 0.5 else TwoAgentScenario(sc.params, 0.0, sc.c2)
        if not periodicity_necessary(sc).all_hold:
            return sc
