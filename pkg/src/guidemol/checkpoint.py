"""Self-contained binary checkpoints.

A checkpoint is a flat archive of named float64 tensors::

    magic "FGCKPT1"
    u32 tensor count
    per tensor: u32 name length, UTF-8 name,
                u32 rank, u32 dims[rank],
                row-major float64 little-endian payload

Everything needed to sample lives in one file: model parameters (the size
classifier's under a ``nodecount.`` prefix), architecture scalars as
rank-0 tensors, the schedule, dataset marginals, property standardization,
vocabularies, and the conditioning property names. Strings are stored as
1-D tensors of code points.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .datasets import Standardization
from .denoiser import Denoiser, DenoiserConfig
from .graphdata import AtomVocab, BondVocab, DatasetMarginals
from .nodecount import NodeCountConfig, NodeCountModel
from .schedule import NoiseSchedule

MAGIC = b"FGCKPT1"


class CheckpointError(RuntimeError):
    """Unreadable, truncated, or inconsistent checkpoint."""


def encode_string(text: str) -> np.ndarray:
    return np.array([ord(c) for c in text], dtype=np.float64)


def decode_string(values: np.ndarray) -> str:
    try:
        return "".join(chr(int(round(v))) for v in np.asarray(values).ravel())
    except (ValueError, OverflowError) as exc:
        raise CheckpointError(f"invalid string tensor: {exc}") from exc


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    parts = [MAGIC, struct.pack("<I", len(tensors))]
    for name, values in tensors.items():
        arr = np.asarray(values, dtype="<f8")  # tobytes() emits row-major
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_tensors(path) -> dict[str, np.ndarray]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: bad magic bytes")
    offset = len(MAGIC)

    def take(count: int) -> bytes:
        nonlocal offset
        if offset + count > len(blob):
            raise CheckpointError(f"{path}: truncated at byte {offset}")
        chunk = blob[offset:offset + count]
        offset += count
        return chunk

    (n_tensors,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{path}: undecodable tensor name") from exc
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = take(8 * size)
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    return tensors


@dataclass(frozen=True)
class CheckpointBundle:
    """Everything a sampler needs, reconstructed from one file."""

    denoiser: Denoiser
    size_model: "NodeCountModel | None"
    schedule: NoiseSchedule
    marginals: DatasetMarginals
    standardization: Standardization
    atom_vocab: AtomVocab
    bond_vocab: BondVocab
    properties: tuple[str, ...]


def _scalar(value) -> np.ndarray:
    return np.array(float(value))


def save_checkpoint(path, bundle: CheckpointBundle) -> None:
    cfg = bundle.denoiser.cfg
    tensors: dict[str, np.ndarray] = {}
    for key in ("a", "b", "guide_dim", "n_layers", "node_dim", "edge_dim",
                "u_dim", "heads", "T", "n_max", "guide_dropout"):
        tensors[f"config.{key}"] = _scalar(getattr(cfg, key))
    for name, param in bundle.denoiser.named_parameters():
        tensors[f"denoiser.{name}"] = param.detach().numpy()
    if bundle.size_model is not None:
        tensors["config.nodecount_hidden"] = _scalar(bundle.size_model.cfg.hidden)
        for name, param in bundle.size_model.named_parameters():
            tensors[f"nodecount.{name}"] = param.detach().numpy()
    tensors["schedule.alphas"] = np.asarray(bundle.schedule.alphas)
    tensors["marginals.m_X"] = np.asarray(bundle.marginals.m_X)
    tensors["marginals.m_E"] = np.asarray(bundle.marginals.m_E)
    tensors["marginals.m_n"] = np.asarray(bundle.marginals.m_n)
    tensors["standardization.mean"] = np.asarray(bundle.standardization.mean)
    tensors["standardization.std"] = np.asarray(bundle.standardization.std)
    tensors["vocab.atom_symbols"] = encode_string(",".join(bundle.atom_vocab.symbols))
    tensors["vocab.atom_max_valence"] = np.array(bundle.atom_vocab.max_valence,
                                                 dtype=np.float64)
    tensors["vocab.atom_mass"] = np.array(bundle.atom_vocab.atomic_mass,
                                          dtype=np.float64)
    tensors["vocab.bond_labels"] = encode_string(",".join(bundle.bond_vocab.labels))
    tensors["vocab.bond_orders"] = np.array(bundle.bond_vocab.bond_order,
                                            dtype=np.float64)
    tensors["properties.names"] = encode_string(",".join(bundle.properties))
    write_tensors(path, tensors)


def _load_params(module: torch.nn.Module, tensors: dict[str, np.ndarray],
                 prefix: str, path) -> None:
    for name, param in module.named_parameters():
        key = prefix + name
        if key not in tensors:
            raise CheckpointError(f"{path}: missing tensor {key}")
        values = tensors[key]
        if tuple(values.shape) != tuple(param.shape):
            raise CheckpointError(
                f"{path}: tensor {key} has shape {tuple(values.shape)}, "
                f"expected {tuple(param.shape)}")
        with torch.no_grad():
            param.copy_(torch.from_numpy(values))


def load_checkpoint(path) -> CheckpointBundle:
    tensors = read_tensors(path)

    def need(key: str) -> np.ndarray:
        if key not in tensors:
            raise CheckpointError(f"{path}: missing tensor {key}")
        return tensors[key]

    def scalar_int(key: str) -> int:
        return int(round(float(need(key))))

    try:
        cfg = DenoiserConfig(
            a=scalar_int("config.a"), b=scalar_int("config.b"),
            guide_dim=scalar_int("config.guide_dim"),
            n_layers=scalar_int("config.n_layers"),
            node_dim=scalar_int("config.node_dim"),
            edge_dim=scalar_int("config.edge_dim"),
            u_dim=scalar_int("config.u_dim"), heads=scalar_int("config.heads"),
            T=scalar_int("config.T"), n_max=scalar_int("config.n_max"),
            guide_dropout=float(need("config.guide_dropout")))
    except ValueError as exc:
        raise CheckpointError(f"{path}: bad configuration: {exc}") from exc
    denoiser = Denoiser(cfg)
    _load_params(denoiser, tensors, "denoiser.", path)

    size_model = None
    if any(key.startswith("nodecount.") for key in tensors):
        size_cfg = NodeCountConfig(guide_dim=cfg.guide_dim, n_max=cfg.n_max,
                                   hidden=scalar_int("config.nodecount_hidden"))
        size_model = NodeCountModel(size_cfg)
        _load_params(size_model, tensors, "nodecount.", path)

    try:
        schedule = NoiseSchedule.from_alphas(need("schedule.alphas"),
                                             enforce_horizon=False)
        marginals = DatasetMarginals(m_X=need("marginals.m_X"),
                                     m_E=need("marginals.m_E"),
                                     m_n=need("marginals.m_n"))
        atom_vocab = AtomVocab(
            symbols=tuple(decode_string(need("vocab.atom_symbols")).split(",")),
            max_valence=tuple(int(round(v)) for v in need("vocab.atom_max_valence")),
            atomic_mass=tuple(float(v) for v in need("vocab.atom_mass")))
        bond_vocab = BondVocab(
            labels=tuple(decode_string(need("vocab.bond_labels")).split(",")),
            bond_order=tuple(int(round(v)) for v in need("vocab.bond_orders")))
    except ValueError as exc:
        raise CheckpointError(f"{path}: inconsistent contents: {exc}") from exc
    properties = tuple(decode_string(need("properties.names")).split(","))
    return CheckpointBundle(
        denoiser=denoiser, size_model=size_model, schedule=schedule,
        marginals=marginals, standardization=Standardization(
            mean=need("standardization.mean"), std=need("standardization.std")),
        atom_vocab=atom_vocab, bond_vocab=bond_vocab, properties=properties)
