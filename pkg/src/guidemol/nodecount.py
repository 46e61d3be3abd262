"""Choosing how many nodes a generated graph should have.

Without a guide the size is drawn from the dataset's empirical size
distribution. With a guide, a small classifier maps the guide vector to a
distribution over sizes, so requests correlated with molecule size (mass,
atom counts) get matching graphs. Sizes are 1-based: class ``k`` means
``k + 1`` nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .denoiser import Diverged, initialize_parameters
from .diffusion import sample_categorical
from .graphdata import DatasetMarginals
from .rng import substream


class DimensionMismatch(ValueError):
    """Guide length disagrees with the model."""


@dataclass(frozen=True)
class NodeCountConfig:
    guide_dim: int
    n_max: int
    hidden: int = 64

    def __post_init__(self):
        if min(self.guide_dim, self.n_max, self.hidden) < 1:
            raise DimensionMismatch("all dimensions must be positive")


class NodeCountModel(nn.Module):
    """Two-hidden-layer classifier over sizes ``1..n_max``."""

    def __init__(self, cfg: NodeCountConfig):
        super().__init__()
        self.cfg = cfg
        self.net = nn.Sequential(
            nn.Linear(cfg.guide_dim, cfg.hidden), nn.ReLU(),
            nn.Linear(cfg.hidden, cfg.hidden), nn.ReLU(),
            nn.Linear(cfg.hidden, cfg.n_max))
        self.double()

    def forward(self, guides: torch.Tensor) -> torch.Tensor:
        if guides.shape[-1] != self.cfg.guide_dim:
            raise DimensionMismatch(
                f"guide has length {guides.shape[-1]}, model expects "
                f"{self.cfg.guide_dim}")
        return self.net(guides)

    def distribution(self, guide_values: np.ndarray) -> np.ndarray:
        """Probabilities over sizes ``1..n_max`` for one guide vector."""
        values = np.array(guide_values, dtype=np.float64)
        with torch.no_grad():
            logits = self(torch.from_numpy(values)[None])[0]
            return torch.softmax(logits, dim=-1).numpy()


def train_nodecount(model: NodeCountModel, guides: np.ndarray, sizes,
                    seed: int, epochs: int = 200, batch_size: int = 256,
                    lr: float = 5e-3, weight_decay: float = 1e-12,
                    log=None) -> tuple[float, ...]:
    """Cross-entropy training of size classes against observed node counts."""
    guides = np.asarray(guides, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.int64)
    if guides.shape[0] != sizes.shape[0]:
        raise DimensionMismatch(f"{guides.shape[0]} guides for {sizes.shape[0]} sizes")
    if sizes.min() < 1 or sizes.max() > model.cfg.n_max:
        raise DimensionMismatch(
            f"sizes must lie in [1, {model.cfg.n_max}], saw "
            f"[{sizes.min()}, {sizes.max()}]")
    targets = torch.from_numpy(sizes - 1)
    inputs = torch.from_numpy(guides)
    optimizer = torch.optim.AdamW(model.parameters(), lr=lr,
                                  weight_decay=weight_decay, amsgrad=True)
    losses = []
    for epoch in range(epochs):
        rng = substream(seed, "nodecount-epoch", epoch)
        order = rng.permutation(guides.shape[0])
        total, count = 0.0, 0
        for k in range(0, order.size, batch_size):
            members = torch.from_numpy(order[k:k + batch_size])
            optimizer.zero_grad(set_to_none=True)
            logits = model(inputs[members])
            loss = nn.functional.cross_entropy(logits, targets[members])
            if not torch.isfinite(loss):
                raise Diverged(f"non-finite size loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * members.numel()
            count += members.numel()
        losses.append(total / count)
        if log is not None:
            log(epoch, losses[-1])
    return tuple(losses)


def build_nodecount(cfg: NodeCountConfig, seed: int) -> NodeCountModel:
    model = NodeCountModel(cfg)
    initialize_parameters(model, substream(seed, "nodecount-init"))
    return model


def sample_node_count(rng: np.random.Generator, marginals: DatasetMarginals,
                      guide_values: "np.ndarray | None" = None,
                      model: "NodeCountModel | None" = None) -> int:
    """Draw a size: from the classifier when one is supplied with a guide,
    otherwise from the dataset marginal."""
    if model is not None and guide_values is not None:
        p = model.distribution(guide_values)
    else:
        p = marginals.m_n
    return sample_categorical(rng, p) + 1
