"""Command line interface: train a model, sample graphs, run the benchmark.

Exit codes distinguish failure classes so scripts can branch on them:
1 bad run configuration, 2 unreadable dataset, 3 training divergence,
4 corrupt checkpoint, 5 guide dimension mismatch, 6 more references
requested than the test split holds.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .checkpoint import (CheckpointBundle, CheckpointError, load_checkpoint,
                         save_checkpoint)
from .config import ConfigError, RunConfig, load_config
from .datasets import DatasetError, Standardization, load_dataset
from .denoiser import (Denoiser, DenoiserConfig, Diverged, ShapeMismatch,
                       initialize_parameters, train_denoiser)
from .diffusion import GuidanceConfig, sample
from .evaluate import run_benchmark, write_records
from .graphdata import VOCABS, Guide, compute_marginals
from .nodecount import (DimensionMismatch, NodeCountConfig, build_nodecount,
                        sample_node_count, train_nodecount)
from .rng import substream
from .schedule import cosine_schedule
from .smiles import graph_to_smiles, property_vector

EXIT_CONFIG = 1
EXIT_DATASET = 2
EXIT_DIVERGED = 3
EXIT_CHECKPOINT = 4
EXIT_DIMENSION = 5
EXIT_REFERENCES = 6


class ReferenceCountError(ValueError):
    """More references requested than held-out molecules available."""


def _echo_config(cfg: RunConfig) -> None:
    for key, value in sorted(asdict(cfg).items()):
        if isinstance(value, tuple):
            value = ",".join(value)
        print(f"{key} = {value}")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    _echo_config(cfg)
    atom_vocab, bond_vocab = VOCABS[cfg.vocab]
    dataset = load_dataset(cfg.dataset, atom_vocab, bond_vocab,
                           property_names=cfg.properties)
    train, val, test = dataset.split()
    print(f"split sizes: train={len(train)} val={len(val)} test={len(test)}")

    # conditioning targets are recomputed from the graphs so that scoring
    # can recompute them on generations the same way
    def guides_of(part):
        return np.stack([property_vector(g, cfg.properties, atom_vocab, bond_vocab)
                         for g in part.graphs])

    train_guides_raw = guides_of(train)
    standardization = Standardization.fit(train_guides_raw)
    train_guides = standardization.apply(train_guides_raw)

    marginals = compute_marginals(list(train.graphs) + list(val.graphs),
                                  atom_vocab.size, bond_vocab.size)
    schedule = cosine_schedule(cfg.T)
    den_cfg = DenoiserConfig(
        a=atom_vocab.size, b=bond_vocab.size, guide_dim=len(cfg.properties),
        n_layers=cfg.n_layers, node_dim=cfg.node_dim, edge_dim=cfg.edge_dim,
        u_dim=cfg.u_dim, heads=cfg.heads, T=cfg.T, n_max=marginals.n_max,
        guide_dropout=cfg.guide_dropout)
    model = Denoiser(den_cfg)
    initialize_parameters(model, substream(cfg.seed, "denoiser-init"))
    train_denoiser(model, list(train.graphs), train_guides, schedule, marginals,
                   seed=cfg.seed, epochs=cfg.epochs, batch_size=cfg.batch_size,
                   lr=cfg.lr, weight_decay=cfg.weight_decay, gamma=cfg.gamma,
                   log=lambda e, v: print(f"epoch {e} loss {v:.6f}"))

    size_model = build_nodecount(
        NodeCountConfig(guide_dim=len(cfg.properties), n_max=marginals.n_max,
                        hidden=cfg.nodecount_hidden), cfg.seed)
    sizes = [g.n for g in train.graphs]
    train_nodecount(size_model, train_guides, sizes, seed=cfg.seed,
                    epochs=cfg.nodecount_epochs, lr=cfg.nodecount_lr,
                    log=lambda e, v: (print(f"size epoch {e} loss {v:.6f}")
                                      if e % 25 == 0 else None))

    out = Path(cfg.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, CheckpointBundle(
        denoiser=model, size_model=size_model, schedule=schedule,
        marginals=marginals, standardization=standardization,
        atom_vocab=atom_vocab, bond_vocab=bond_vocab, properties=cfg.properties))
    print(f"checkpoint written to {out}")
    return 0


def _parse_guide(text: str, bundle: CheckpointBundle) -> np.ndarray:
    try:
        values = np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise DimensionMismatch(f"guide must be comma-joined numbers: {exc}") from exc
    expected = len(bundle.properties)
    if values.size != expected:
        raise DimensionMismatch(
            f"guide has {values.size} values but the model conditions on "
            f"{expected} ({', '.join(bundle.properties)})")
    return values


def cmd_sample(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    guidance = GuidanceConfig(s=args.s, mode=args.mode)
    raw_guide = _parse_guide(args.guide, bundle)
    standardized = bundle.standardization.apply(raw_guide)
    guide = Guide(values=standardized)
    size_model = bundle.size_model if args.size == "inferred" else None
    denoise_fn = bundle.denoiser.denoise_fn()
    lines = []
    for i in range(args.count):
        rng = substream(args.seed, "sample", i)
        n = sample_node_count(rng, bundle.marginals, guide_values=standardized,
                              model=size_model)
        graph = sample(denoise_fn, n, guide, guidance, bundle.schedule,
                       bundle.marginals, rng, bundle.atom_vocab.size,
                       bundle.bond_vocab.size)
        lines.append(graph_to_smiles(graph, bundle.atom_vocab, bundle.bond_vocab))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"{args.count} molecules written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset, bundle.atom_vocab, bundle.bond_vocab,
                           property_names=bundle.properties)
    _, _, test = dataset.split()
    if args.k > len(test):
        raise ReferenceCountError(
            f"requested {args.k} references but the test split has {len(test)}")
    references = np.stack([
        property_vector(g, bundle.properties, bundle.atom_vocab, bundle.bond_vocab)
        for g in test.graphs[:args.k]])
    guidance = GuidanceConfig(s=args.s, mode=args.mode)
    size_model = bundle.size_model if args.size == "inferred" else None
    report, records = run_benchmark(
        bundle.denoiser.denoise_fn(), references, bundle.properties,
        bundle.standardization, bundle.schedule, bundle.marginals,
        bundle.atom_vocab, samples_per_reference=args.r, guidance=guidance,
        seed=args.seed, bond_vocab=bundle.bond_vocab, size_model=size_model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n")
    write_records(out / "records.tsv", records)
    for name, value, err in zip(report.property_names, report.per_property_mae,
                                report.per_property_stderr):
        print(f"mae[{name}] = {value:.6f} +- {err:.6f}")
    print(f"total mae = {report.total_mae:.6f}")
    print(f"valid fraction = {report.valid_fraction:.3f}")
    print(f"report written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="guidemol",
        description="Guided discrete diffusion over categorical molecular graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a run config")
    p_train.add_argument("config", help="path to a key = value run config")
    p_train.set_defaults(fn=cmd_train)

    p_sample = sub.add_parser("sample", help="generate molecules from a checkpoint")
    p_sample.add_argument("checkpoint")
    p_sample.add_argument("--guide", required=True,
                          help="comma-joined target property values (raw units)")
    p_sample.add_argument("--count", type=int, default=10)
    p_sample.add_argument("--s", type=float, default=1.0,
                          help="guidance strength")
    p_sample.add_argument("--mode", choices=("linear", "log"), default="linear")
    p_sample.add_argument("--size", choices=("marginal", "inferred"),
                          default="inferred")
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--out", default=None, help="output file (default stdout)")
    p_sample.set_defaults(fn=cmd_sample)

    p_eval = sub.add_parser("eval", help="score generations against held-out targets")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("dataset")
    p_eval.add_argument("--k", type=int, default=100,
                        help="number of held-out reference molecules")
    p_eval.add_argument("--r", type=int, default=10,
                        help="samples generated per reference")
    p_eval.add_argument("--s", type=float, default=1.0)
    p_eval.add_argument("--mode", choices=("linear", "log"), default="linear")
    p_eval.add_argument("--size", choices=("marginal", "inferred"),
                        default="inferred")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", default="eval_out")
    p_eval.set_defaults(fn=cmd_eval)
    return parser


def entrypoint(argv=None) -> int:
    torch.set_num_threads(1)  # keeps reruns bit-identical on any host
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except Diverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (DimensionMismatch, ShapeMismatch) as exc:
        print(f"dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except ReferenceCountError as exc:
        print(f"reference count error: {exc}", file=sys.stderr)
        return EXIT_REFERENCES


def main() -> None:
    sys.exit(entrypoint())


if __name__ == "__main__":
    main()
