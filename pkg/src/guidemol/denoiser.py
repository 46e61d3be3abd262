"""Graph transformer that predicts clean node and edge classes from a
corrupted graph, a step index, and an optional guide vector.

Three streams flow through each block: per-node features, per-pair edge
features, and one global vector that carries the step fraction, the size
fraction, and the (embedded) guide. Edge features modulate the attention
scores before the softmax; the global vector modulates node and edge
features; node and edge statistics feed back into the global vector.

Missing guides are represented by a single trainable placeholder vector
substituted for the guide values, both when training rows are dropped out
and when the sampler asks for an unconditioned prediction. Everything runs
in float64 on CPU so finite-difference checks of the gradients are sharp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .graphdata import CategoricalGraph, DatasetMarginals
from .rng import substream
from .schedule import NoiseSchedule
from .diffusion import forward_sample

LOG_FLOOR = 1e-12


class ShapeMismatch(ValueError):
    """Input dimensions disagree with the model configuration."""


class Diverged(RuntimeError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class DenoiserConfig:
    """Architecture and conditioning dimensions."""

    a: int               # node vocabulary size
    b: int               # edge vocabulary size
    guide_dim: int       # length of the guide vector
    n_layers: int = 2
    node_dim: int = 64
    edge_dim: int = 32
    u_dim: int = 32
    heads: int = 4
    T: int = 50          # diffusion horizon the step index is scaled by
    n_max: int = 9       # largest graph size the size fraction is scaled by
    guide_dropout: float = 0.1

    def __post_init__(self):
        if self.node_dim % self.heads:
            raise ShapeMismatch(
                f"node_dim {self.node_dim} not divisible by heads {self.heads}")
        if min(self.a, self.b, self.guide_dim, self.n_layers, self.node_dim,
               self.edge_dim, self.u_dim, self.heads, self.T, self.n_max) < 1:
            raise ShapeMismatch("all dimensions must be positive")
        if not 0.0 <= self.guide_dropout <= 1.0:
            raise ShapeMismatch(
                f"guide_dropout must lie in [0, 1], got {self.guide_dropout}")


@dataclass(frozen=True)
class DenoiserOutput:
    """Predicted clean-state distributions for one graph."""

    node_probs: np.ndarray  # (n, a)
    edge_probs: np.ndarray  # (n, n, b)


def _mlp(d_in: int, d_hidden: int, d_out: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(d_in, d_hidden), nn.ReLU(),
                         nn.Linear(d_hidden, d_out))


def _stats(x: torch.Tensor) -> torch.Tensor:
    """Mean/max/min/std aggregation over dim 1, concatenated."""
    std = torch.sqrt(x.var(dim=1, unbiased=False) + 1e-8)
    return torch.cat([x.mean(dim=1), x.max(dim=1).values, x.min(dim=1).values,
                      std], dim=-1)


class _Block(nn.Module):
    """One transformer block over the node/edge/global streams."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        dx, de, du, h = cfg.node_dim, cfg.edge_dim, cfg.u_dim, cfg.heads
        self.heads = h
        self.head_dim = dx // h
        self.q = nn.Linear(dx, dx)
        self.k = nn.Linear(dx, dx)
        self.v = nn.Linear(dx, dx)
        self.out = nn.Linear(dx, dx)
        self.edge_scale = nn.Linear(de, h)
        self.edge_shift = nn.Linear(de, h)
        self.u_node_scale = nn.Linear(du, dx)
        self.u_node_shift = nn.Linear(du, dx)
        self.u_edge_scale = nn.Linear(du, de)
        self.u_edge_shift = nn.Linear(du, de)
        self.edge_update = nn.Linear(2 * dx + de, de)
        self.u_update = nn.Linear(du + 4 * dx + 4 * de, du)
        self.node_ff = _mlp(dx, 2 * dx, dx)
        self.edge_ff = _mlp(de, 2 * de, de)
        self.norm_node_attn = nn.LayerNorm(dx)
        self.norm_node_ff = nn.LayerNorm(dx)
        self.norm_edge = nn.LayerNorm(de)
        self.norm_edge_ff = nn.LayerNorm(de)
        self.norm_u = nn.LayerNorm(du)

    def forward(self, x: torch.Tensor, e: torch.Tensor,
                u: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        bsz, n, dx = x.shape
        q = self.q(x).view(bsz, n, self.heads, self.head_dim).transpose(1, 2)
        k = self.k(x).view(bsz, n, self.heads, self.head_dim).transpose(1, 2)
        v = self.v(x).view(bsz, n, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / np.sqrt(self.head_dim)
        # edge features modulate the raw scores before normalization
        scale = self.edge_scale(e).permute(0, 3, 1, 2)
        shift = self.edge_shift(e).permute(0, 3, 1, 2)
        scores = scores * (1.0 + scale) + shift
        attn = torch.softmax(scores, dim=-1)
        msg = (attn @ v).transpose(1, 2).reshape(bsz, n, dx)
        x = self.norm_node_attn(x + self.out(msg))
        x = x * (1.0 + self.u_node_scale(u)[:, None, :]) + self.u_node_shift(u)[:, None, :]
        x = self.norm_node_ff(x + self.node_ff(x))

        pair = torch.cat([x[:, :, None, :].expand(-1, -1, n, -1),
                          x[:, None, :, :].expand(-1, n, -1, -1), e], dim=-1)
        e = self.norm_edge(e + self.edge_update(pair))
        e = (e * (1.0 + self.u_edge_scale(u)[:, None, None, :])
             + self.u_edge_shift(u)[:, None, None, :])
        e = self.norm_edge_ff(e + self.edge_ff(e))

        flat_e = e.reshape(bsz, n * n, -1)
        u = self.norm_u(u + self.u_update(
            torch.cat([u, _stats(x), _stats(flat_e)], dim=-1)))
        return x, e, u


class Denoiser(nn.Module):
    """Predicts per-node and per-pair clean-class logits."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        self.node_in = nn.Linear(cfg.a, cfg.node_dim)
        self.edge_in = nn.Linear(cfg.b, cfg.edge_dim)
        self.u_in = _mlp(2 + cfg.guide_dim, cfg.u_dim, cfg.u_dim)
        self.placeholder = nn.Parameter(torch.zeros(cfg.guide_dim))
        self.blocks = nn.ModuleList(_Block(cfg) for _ in range(cfg.n_layers))
        self.node_out = nn.Linear(cfg.node_dim, cfg.a)
        self.edge_out = nn.Linear(cfg.edge_dim, cfg.b)
        self.double()

    def conditioning(self, guide_list) -> torch.Tensor:
        """Stack guide rows for a batch; a None entry selects the trainable
        placeholder, keeping it in the autograd graph."""
        rows = []
        for values in guide_list:
            if values is None:
                rows.append(self.placeholder)
                continue
            row = torch.from_numpy(np.array(values, dtype=np.float64))
            if row.shape != (self.cfg.guide_dim,):
                raise ShapeMismatch(
                    f"guide has shape {tuple(row.shape)}, model expects "
                    f"({self.cfg.guide_dim},)")
            rows.append(row)
        return torch.stack(rows)

    def forward(self, x: torch.Tensor, e: torch.Tensor, t: torch.Tensor,
                guide_rows: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Batched logits. ``x``: (B, n, a) one-hot, ``e``: (B, n, n, b)
        one-hot, ``t``: (B,) integer steps, ``guide_rows``: (B, guide_dim)."""
        bsz, n, a = x.shape
        if a != self.cfg.a or e.shape[-1] != self.cfg.b:
            raise ShapeMismatch(
                f"input classes ({a}, {e.shape[-1]}) do not match model "
                f"({self.cfg.a}, {self.cfg.b})")
        t_frac = t.to(x.dtype)[:, None] / self.cfg.T
        n_frac = torch.full_like(t_frac, n / self.cfg.n_max)
        u = self.u_in(torch.cat([t_frac, n_frac, guide_rows], dim=-1))
        h = self.node_in(x)
        f = self.edge_in(e)
        for block in self.blocks:
            h, f, u = block(h, f, u)
        node_logits = self.node_out(h)
        edge_logits = self.edge_out(f)
        edge_logits = 0.5 * (edge_logits + edge_logits.transpose(1, 2))
        return node_logits, edge_logits

    def predict(self, graph: CategoricalGraph, t: int,
                guide_values: "np.ndarray | None") -> DenoiserOutput:
        """Clean-state probabilities for one graph (no gradients)."""
        x = torch.from_numpy(np.array(graph.X))[None]
        e = torch.from_numpy(np.array(graph.E))[None]
        with torch.no_grad():
            rows = self.conditioning([guide_values])
            node_logits, edge_logits = self(x, e, torch.tensor([t]), rows)
            node_probs = torch.softmax(node_logits[0], dim=-1).numpy()
            edge_probs = torch.softmax(edge_logits[0], dim=-1).numpy()
        no_bond = np.zeros(self.cfg.b)
        no_bond[0] = 1.0
        edge_probs[np.arange(graph.n), np.arange(graph.n)] = no_bond
        return DenoiserOutput(node_probs=node_probs, edge_probs=edge_probs)

    def denoise_fn(self):
        """Adapter with the sampler's callable signature."""
        def fn(graph: CategoricalGraph, t: int, guide_values):
            out = self.predict(graph, t, guide_values)
            return out.node_probs, out.edge_probs
        return fn


def initialize_parameters(model: nn.Module, rng: np.random.Generator) -> None:
    """Deterministic init: scaled normals for weights, zeros for biases and
    the placeholder, identity-like layer norms. Ordering follows
    ``named_parameters`` so one seed fixes every tensor."""
    for name, param in model.named_parameters():
        with torch.no_grad():
            if name.endswith("placeholder"):
                param.zero_()
            elif param.ndim >= 2:
                fan_in, fan_out = param.shape[-1], param.shape[0]
                sigma = np.sqrt(2.0 / (fan_in + fan_out))
                values = rng.normal(0.0, sigma, size=tuple(param.shape))
                param.copy_(torch.from_numpy(values))
            elif "norm" in name and name.endswith("weight"):
                param.fill_(1.0)
            else:
                param.zero_()


def batch_tensors(graphs: list[CategoricalGraph]) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack same-size graphs into one-hot batch tensors."""
    sizes = {g.n for g in graphs}
    if len(sizes) != 1:
        raise ShapeMismatch(f"cannot batch mixed sizes {sorted(sizes)}")
    x = torch.from_numpy(np.stack([g.X for g in graphs]))
    e = torch.from_numpy(np.stack([g.E for g in graphs]))
    return x, e


def prediction_loss(node_logits: torch.Tensor, edge_logits: torch.Tensor,
                    clean: list[CategoricalGraph], gamma: float) -> torch.Tensor:
    """Mean over the batch of the per-graph reconstruction loss: node
    cross-entropy plus ``gamma`` times twice the upper-triangle edge
    cross-entropy (each unordered pair appears twice in the full matrix)."""
    node_probs = torch.softmax(node_logits, dim=-1).clamp(min=LOG_FLOOR)
    edge_probs = torch.softmax(edge_logits, dim=-1).clamp(min=LOG_FLOOR)
    n = node_logits.shape[1]
    iu, ju = np.triu_indices(n, k=1)
    total = node_logits.new_zeros(())
    for idx, g in enumerate(clean):
        node_ce = -torch.log(node_probs[idx, np.arange(n), g.node_types]).sum()
        if iu.size:
            pair_types = g.edge_types[iu, ju]
            edge_ce = -torch.log(edge_probs[idx, iu, ju, pair_types]).sum()
        else:
            edge_ce = node_logits.new_zeros(())
        total = total + node_ce + gamma * 2.0 * edge_ce
    return total / len(clean)


def reconstruction_loss(node_probs: np.ndarray, edge_probs: np.ndarray,
                        clean: CategoricalGraph, gamma: float) -> float:
    """Plain-array twin of the training loss for one graph, from predicted
    probabilities rather than logits."""
    n = clean.n
    node_ce = -np.log(np.clip(node_probs[np.arange(n), clean.node_types],
                              LOG_FLOOR, None)).sum()
    edge_ce = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            p = np.clip(edge_probs[i, j, clean.edge_types[i, j]], LOG_FLOOR, None)
            edge_ce += -np.log(p)
    return float(node_ce + gamma * 2.0 * edge_ce)


def denoising_loss(model: Denoiser, clean: list[CategoricalGraph],
                   corrupted: list[CategoricalGraph], steps: list[int],
                   guide_list, gamma: float) -> torch.Tensor:
    """Loss of a same-size batch at fixed steps with fixed conditioning.

    Deterministic in its inputs; the stochastic choices (step, corruption,
    guide dropout) belong to the caller. ``guide_list`` holds one guide
    vector or None (placeholder) per batch element.
    """
    x, e = batch_tensors(corrupted)
    t = torch.tensor(steps, dtype=torch.int64)
    node_logits, edge_logits = model(x, e, t, model.conditioning(guide_list))
    return prediction_loss(node_logits, edge_logits, clean, gamma)


def loss_and_grad(model: Denoiser, clean: list[CategoricalGraph],
                  corrupted: list[CategoricalGraph], steps: list[int],
                  guide_list, gamma: float) -> tuple[float, dict[str, np.ndarray]]:
    """Backpropagate one deterministic batch; gradients keyed by parameter
    name as plain arrays."""
    model.zero_grad(set_to_none=True)
    loss = denoising_loss(model, clean, corrupted, steps, guide_list, gamma)
    loss.backward()
    grads = {name: (param.grad.detach().numpy().copy() if param.grad is not None
                    else np.zeros(tuple(param.shape)))
             for name, param in model.named_parameters()}
    return float(loss.detach()), grads


@dataclass(frozen=True)
class TrainResult:
    losses: tuple[float, ...]  # mean loss per epoch


def train_denoiser(model: Denoiser, graphs: list[CategoricalGraph],
                   guides: np.ndarray, schedule: NoiseSchedule,
                   marginals: DatasetMarginals, seed: int, epochs: int,
                   batch_size: int = 64, lr: float = 2e-3,
                   weight_decay: float = 1e-12, gamma: float = 2.0,
                   log=None) -> TrainResult:
    """Train with randomly drawn steps, one-shot corruption, and guide
    dropout at the configured rate. Graphs are bucketed by size so every
    batch stacks cleanly."""
    if len(graphs) != len(guides):
        raise ShapeMismatch(f"{len(graphs)} graphs but {len(guides)} guide rows")
    guides = np.asarray(guides, dtype=np.float64)
    cfg = model.cfg
    if schedule.T != cfg.T:
        raise ShapeMismatch(f"schedule horizon {schedule.T} != model horizon {cfg.T}")
    optimizer = torch.optim.AdamW(model.parameters(), lr=lr,
                                  weight_decay=weight_decay, amsgrad=True)
    by_size: dict[int, list[int]] = {}
    for idx, g in enumerate(graphs):
        by_size.setdefault(g.n, []).append(idx)

    epoch_losses = []
    for epoch in range(epochs):
        rng = substream(seed, "denoiser-epoch", epoch)
        batches: list[list[int]] = []
        for n in sorted(by_size):
            members = np.array(by_size[n])
            rng.shuffle(members)
            for k in range(0, members.size, batch_size):
                batches.append(members[k:k + batch_size].tolist())
        order = rng.permutation(len(batches))

        total, count = 0.0, 0
        for b in order:
            members = batches[b]
            clean = [graphs[i] for i in members]
            steps = [int(rng.integers(1, schedule.T + 1)) for _ in members]
            corrupted = [forward_sample(g, s, schedule, marginals, rng)
                         for g, s in zip(clean, steps)]
            keep = rng.uniform(size=len(members)) >= cfg.guide_dropout
            guide_list = [guides[i] if k else None
                          for i, k in zip(members, keep)]
            optimizer.zero_grad(set_to_none=True)
            loss = denoising_loss(model, clean, corrupted, steps, guide_list, gamma)
            if not torch.isfinite(loss):
                raise Diverged(f"non-finite loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(members)
            count += len(members)
        epoch_losses.append(total / count)
        if log is not None:
            log(epoch, epoch_losses[-1])
    return TrainResult(losses=tuple(epoch_losses))
