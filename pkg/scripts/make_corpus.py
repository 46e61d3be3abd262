"""Regenerate the bundled molecule corpus at data/qm9_like.smi.

The corpus mixes a hand-picked set of small organic molecules (covering
branches, rings, multi-ring closures, percent-labels, charged bracket
atoms written with the larger vocabulary reduced to C/N/O/F members, and
dot-separated fragments are excluded on purpose: every entry is one
connected molecule) with seeded random valence-respecting graphs. Every
line is checked to parse, pass the valence check, and survive a
write/parse round trip before it is emitted.

Usage: python3 scripts/make_corpus.py [--count 240] [--out data/qm9_like.smi]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from guidemol.datasets import random_valid_graph
from guidemol.graphdata import QM9_ATOMS, wl_hash
from guidemol.rng import substream
from guidemol.smiles import (PROPERTY_IDS, check_valence, graph_to_smiles,
                             property_vector, smiles_to_graph)

HANDWRITTEN = [
    # single atoms and short chains
    "C", "N", "O", "CC", "CO", "CN", "CF", "CCO", "CCN", "CCC",
    "CCCC", "CCCO", "OCCO", "NCCN", "FCCF", "CC(C)C", "CC(C)O",
    "CC(N)C", "CC(C)(C)C", "CC(C)(C)O", "OC(C)(C)N",
    # double and triple bonds
    "C=C", "C=O", "C#C", "C#N", "CC=O", "CC#N", "C=CC=C", "CC(=O)C",
    "CC(=O)O", "CC(=O)N", "NC(=O)C", "C=C(C)C", "N=C=O", "C=C=C",
    "CC#CC", "N#CC#N", "O=CC=O",
    # rings, fused rings, explicit single-bond symbols, percent labels
    "C1CC1", "C1CCC1", "C1CCCC1", "C1CCCCC1", "C1=CC=CC=C1",
    "C1=CC=CC=N1", "C1=CC=CO1", "C1=CC=CN1", "C1CO1", "C1CN1",
    "C1COC1", "C1CNC1", "C1OCO1", "C1CCOC1", "C1CCNC1", "C1CCOCC1",
    "C1CC2CC12", "C1CC2CCC2C1", "C12CC1C2", "C1CC%11CC%11C1",
    "C-C", "C-C-O", "C1-CC1", "OC1CCC1", "NC1CC1", "FC1CCC1",
    "CC1CCC1C", "CC1CC1C#N", "O=C1CCC1", "CC1=CC=CC=C1",
    "OC1=CC=CC=C1", "NC1=CC=CC=N1",
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--count", type=int, default=240,
                        help="total number of molecules")
    parser.add_argument("--seed", type=int, default=20240)
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1]
                                             / "data" / "qm9_like.smi"))
    args = parser.parse_args()

    entries: list[str] = []
    seen: set[int] = set()

    def admit(smiles: str, origin: str) -> None:
        graph = smiles_to_graph(smiles, QM9_ATOMS)
        report = check_valence(graph, QM9_ATOMS)
        if not report.valid:
            raise SystemExit(f"{origin} entry {smiles!r} fails validity: {report}")
        digest = wl_hash(graph)
        rewritten = graph_to_smiles(graph, QM9_ATOMS)
        if wl_hash(smiles_to_graph(rewritten, QM9_ATOMS)) != digest:
            raise SystemExit(f"{origin} entry {smiles!r} breaks the round trip")
        if digest in seen:
            return
        seen.add(digest)
        props = property_vector(graph, PROPERTY_IDS, QM9_ATOMS)
        entries.append(smiles + "\t" + ",".join(f"{v:.6g}" for v in props))

    for smiles in HANDWRITTEN:
        admit(smiles, "handwritten")
    rng = substream(args.seed, "corpus")
    attempts = 0
    while len(entries) < args.count:
        attempts += 1
        if attempts > 100 * args.count:
            raise SystemExit("generator stalled; relax the uniqueness filter")
        graph = random_valid_graph(rng, QM9_ATOMS, n_lo=2, n_hi=9)
        admit(graph_to_smiles(graph, QM9_ATOMS), "generated")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    header = ("# QM9-style molecule corpus; columns: "
              + ",".join(PROPERTY_IDS) + "\n")
    out.write_text(header + "\n".join(entries) + "\n")
    print(f"{len(entries)} molecules written to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
