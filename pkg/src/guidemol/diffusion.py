"""Forward corruption and reverse-time sampling for categorical graphs.

Nodes and edges are corrupted independently by the schedule's transition
matrices. The reverse chain samples each element from a mixture of
one-step posteriors weighted by a model's predicted clean-state
distribution; when two predictions (with and without a guide) are
available, they are mixed with a tunable strength before that step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graphdata import CategoricalGraph, DatasetMarginals, Guide
from .schedule import NoiseSchedule, StepOutOfRange

GUIDANCE_EPS = 1e-12

#: Predicts clean-state distributions for one graph at one step. The guide
#: argument is None for the unconditioned pass. Returns node probabilities
#: of shape (n, a) and edge probabilities of shape (n, n, b).
DenoiseFn = Callable[[CategoricalGraph, int, "np.ndarray | None"],
                     tuple[np.ndarray, np.ndarray]]


class ZeroMass(ValueError):
    """A distribution lost all probability mass."""


@dataclass(frozen=True)
class GuidanceConfig:
    """Guide-mixing strength and interpolation space."""

    s: float = 1.0
    mode: str = "linear"  # "linear" | "log"

    def __post_init__(self):
        if self.mode not in ("linear", "log"):
            raise ValueError(f"mode must be 'linear' or 'log', got {self.mode!r}")
        if not np.isfinite(self.s):
            raise ValueError(f"strength must be finite, got {self.s!r}")


def sample_categorical(rng: np.random.Generator, p: np.ndarray) -> int:
    """Draw one index from a probability vector via the inverse CDF."""
    u = rng.uniform()
    return int(np.searchsorted(np.cumsum(p), u, side="right").clip(0, p.size - 1))


def forward_sample(g0: CategoricalGraph, t: int, schedule: NoiseSchedule,
                   marginals: DatasetMarginals,
                   rng: np.random.Generator) -> CategoricalGraph:
    """Corrupt a clean graph straight to step ``t`` in one shot.

    Nodes are drawn first in index order, then the upper-triangle edges in
    row-major order, so a fixed generator state gives a fixed outcome.
    """
    if not 1 <= t <= schedule.T:
        raise StepOutOfRange(f"step {t} outside [1, {schedule.T}]")
    qx = schedule.cumulative(t, marginals.m_X)
    qe = schedule.cumulative(t, marginals.m_E)
    n = g0.n
    node_types = [sample_categorical(rng, qx[k]) for k in g0.node_types]
    edge_types = np.zeros((n, n), dtype=np.int64)
    clean_edges = g0.edge_types
    for i in range(n):
        for j in range(i + 1, n):
            edge_types[i, j] = edge_types[j, i] = sample_categorical(
                rng, qe[clean_edges[i, j]])
    return CategoricalGraph.from_types(np.array(node_types, dtype=np.int64),
                                       edge_types, g0.a, g0.b)


def posterior_distribution(x0: int, xt: int, t: int, schedule: NoiseSchedule,
                           m: np.ndarray) -> np.ndarray:
    """One-step reversal ``q(z at t-1 | state xt at t, clean state x0)``.

    Bayes' rule over the forward factorization: proportional to the
    single-step likelihood of reaching ``xt`` from ``z`` times the
    cumulative probability of ``z`` given ``x0``.
    """
    if not 2 <= t <= schedule.T:
        raise StepOutOfRange(f"posterior needs a step in [2, {schedule.T}], got {t}")
    q_t = schedule.transition(t, m)
    q_prev = schedule.cumulative(t - 1, m)
    weights = q_t[:, xt] * q_prev[x0, :]
    total = weights.sum()
    if total <= 0.0:
        raise ZeroMass(f"posterior for x0={x0}, xt={xt} at step {t} has no mass")
    return weights / total


def denoising_distribution(pred: np.ndarray, xt: int, t: int,
                           schedule: NoiseSchedule, m: np.ndarray) -> np.ndarray:
    """Distribution of the state at ``t-1``: posteriors for each clean state
    weighted by the model's prediction. At ``t == 1`` the next state is the
    clean one, so the prediction is returned as-is.

    A clean state whose forward chain cannot reach ``xt`` (possible when a
    class has zero marginal mass) has posterior probability zero, so its
    term is dropped rather than treated as an error.
    """
    if not 1 <= t <= schedule.T:
        raise StepOutOfRange(f"step {t} outside [1, {schedule.T}]")
    pred = np.asarray(pred, dtype=np.float64)
    if t == 1:
        return pred.copy()
    out = np.zeros_like(pred)
    for x0, w in enumerate(pred):
        if w > 0.0:
            try:
                out += w * posterior_distribution(x0, xt, t, schedule, m)
            except ZeroMass:
                continue
    total = out.sum()
    if total <= 0.0:
        raise ZeroMass(f"denoising mixture at step {t} has no mass")
    return out / total


def guided_mixture(p_uncond: np.ndarray, p_cond: np.ndarray, s: float,
                   mode: str = "linear") -> np.ndarray:
    """Blend unconditioned and conditioned predictions with strength ``s``.

    ``s == 0`` and ``s == 1`` return exact copies of the respective input,
    so those strengths are indistinguishable from never mixing. Linear mode
    extrapolates the probabilities themselves and floors negatives; log
    mode extrapolates log-probabilities and renormalizes through a softmax.
    """
    p_uncond = np.asarray(p_uncond, dtype=np.float64)
    p_cond = np.asarray(p_cond, dtype=np.float64)
    if s == 0.0:
        return p_uncond.copy()
    if s == 1.0:
        return p_cond.copy()
    if mode == "linear":
        v = p_uncond + s * (p_cond - p_uncond)
        if v.max() <= 0.0:
            raise ZeroMass("guided mixture has no positive mass")
        v = np.clip(v, GUIDANCE_EPS, None)
        return v / v.sum()
    if mode == "log":
        log_u = np.log(np.clip(p_uncond, GUIDANCE_EPS, None))
        log_c = np.log(np.clip(p_cond, GUIDANCE_EPS, None))
        w = log_u + s * (log_c - log_u)
        w -= w.max()
        e = np.exp(w)
        return e / e.sum()
    raise ValueError(f"mode must be 'linear' or 'log', got {mode!r}")


def _mixed_predictions(g_t: CategoricalGraph, t: int, guide_values,
                       denoise_fn: DenoiseFn,
                       guidance: GuidanceConfig) -> tuple[np.ndarray, np.ndarray]:
    """Run the needed denoiser passes and mix them elementwise. Strengths 0
    and 1 need only one pass; the mixing identities make that exact."""
    if guidance.s == 0.0 or guide_values is None:
        return denoise_fn(g_t, t, None)
    if guidance.s == 1.0:
        return denoise_fn(g_t, t, guide_values)
    node_u, edge_u = denoise_fn(g_t, t, None)
    node_c, edge_c = denoise_fn(g_t, t, guide_values)
    n = g_t.n
    node_probs = np.empty_like(node_u)
    for i in range(n):
        node_probs[i] = guided_mixture(node_u[i], node_c[i], guidance.s, guidance.mode)
    edge_probs = np.array(edge_u)
    for i in range(n):
        for j in range(i + 1, n):
            mixed = guided_mixture(edge_u[i, j], edge_c[i, j], guidance.s,
                                   guidance.mode)
            edge_probs[i, j] = edge_probs[j, i] = mixed
    return node_probs, edge_probs


def reverse_step(g_t: CategoricalGraph, t: int, node_pred: np.ndarray,
                 edge_pred: np.ndarray, schedule: NoiseSchedule,
                 marginals: DatasetMarginals,
                 rng: np.random.Generator) -> CategoricalGraph:
    """Sample the graph at ``t-1`` given predicted clean-state distributions.

    Consumes randomness in the same fixed order as ``forward_sample``.
    """
    if not 1 <= t <= schedule.T:
        raise StepOutOfRange(f"step {t} outside [1, {schedule.T}]")
    n = g_t.n
    node_types = np.zeros(n, dtype=np.int64)
    for i, xt in enumerate(g_t.node_types):
        dist = denoising_distribution(node_pred[i], int(xt), t, schedule,
                                      marginals.m_X)
        node_types[i] = sample_categorical(rng, dist)
    edge_types = np.zeros((n, n), dtype=np.int64)
    current = g_t.edge_types
    for i in range(n):
        for j in range(i + 1, n):
            dist = denoising_distribution(edge_pred[i, j], int(current[i, j]), t,
                                          schedule, marginals.m_E)
            edge_types[i, j] = edge_types[j, i] = sample_categorical(rng, dist)
    return CategoricalGraph.from_types(node_types, edge_types, g_t.a, g_t.b)


def noise_graph(n: int, a: int, b: int, marginals: DatasetMarginals,
                rng: np.random.Generator) -> CategoricalGraph:
    """Pure-noise starting point: every element drawn from its marginal."""
    node_types = np.array([sample_categorical(rng, marginals.m_X)
                           for _ in range(n)], dtype=np.int64)
    edge_types = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            edge_types[i, j] = edge_types[j, i] = sample_categorical(rng, marginals.m_E)
    return CategoricalGraph.from_types(node_types, edge_types, a, b)


def sample(denoise_fn: DenoiseFn, n: int, guide: "Guide | None",
           guidance: GuidanceConfig, schedule: NoiseSchedule,
           marginals: DatasetMarginals, rng: np.random.Generator,
           a: int, b: int) -> CategoricalGraph:
    """Generate one graph of ``n`` nodes by running the chain from pure noise."""
    guide_values = None if guide is None else np.asarray(guide.values, dtype=np.float64)
    g = noise_graph(n, a, b, marginals, rng)
    for t in range(schedule.T, 0, -1):
        node_pred, edge_pred = _mixed_predictions(g, t, guide_values, denoise_fn,
                                                  guidance)
        g = reverse_step(g, t, node_pred, edge_pred, schedule, marginals, rng)
    return g
