import shutil
from pathlib import Path

import numpy as np
import pytest

from guidemol.checkpoint import load_checkpoint
from guidemol.cli import (EXIT_CHECKPOINT, EXIT_CONFIG, EXIT_DATASET,
                          EXIT_DIMENSION, EXIT_DIVERGED, EXIT_REFERENCES,
                          entrypoint)
from guidemol.datasets import GraphDataset, random_valid_graph, save_dataset
from guidemol.evaluate import EvalReport
from guidemol.graphdata import QM9_ATOMS, DEFAULT_BONDS
from guidemol.rng import substream
from guidemol.smiles import parse_smiles, property_vector

PROPERTIES = ("heavy_atom_count", "hetero_fraction")


def config_text(dataset: Path, out: Path, **overrides) -> str:
    settings = {
        "dataset": dataset,
        "out": out,
        "properties": ",".join(PROPERTIES),
        "T": 5,
        "seed": 3,
        "epochs": 2,
        "batch_size": 16,
        "n_layers": 1,
        "node_dim": 16,
        "edge_dim": 8,
        "u_dim": 8,
        "heads": 2,
        "nodecount_hidden": 16,
        "nodecount_epochs": 20,
    }
    settings.update(overrides)
    return "".join(f"{k} = {v}\n" for k, v in settings.items())


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny dataset, a run config, and one trained checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    rng = substream(7, "cli-data")
    graphs = [random_valid_graph(rng, QM9_ATOMS, n_lo=2, n_hi=6)
              for _ in range(40)]
    props = np.stack([property_vector(g, PROPERTIES, QM9_ATOMS) for g in graphs])
    dataset_path = root / "dataset.smi"
    save_dataset(dataset_path,
                 GraphDataset(graphs=tuple(graphs), properties=props,
                              property_names=PROPERTIES),
                 QM9_ATOMS, DEFAULT_BONDS)
    checkpoint = root / "model.ckpt"
    config_path = root / "run.cfg"
    config_path.write_text(config_text(dataset_path, checkpoint))
    assert entrypoint(["train", str(config_path)]) == 0
    return {"root": root, "dataset": dataset_path, "config": config_path,
            "checkpoint": checkpoint}


class TestTrain:
    def test_checkpoint_written_and_loadable(self, workspace):
        bundle = load_checkpoint(workspace["checkpoint"])
        assert bundle.properties == PROPERTIES
        assert bundle.schedule.T == 5
        assert bundle.size_model is not None

    def test_rerun_reproduces_checkpoint_bytes(self, workspace, capsys):
        first = workspace["checkpoint"].read_bytes()
        rerun = entrypoint(["train", str(workspace["config"])])
        assert rerun == 0
        assert workspace["checkpoint"].read_bytes() == first
        out = capsys.readouterr().out
        assert "dataset = " in out  # effective config is echoed
        assert f"out = {workspace['checkpoint']}" in out
        assert "split sizes: train=32 val=4 test=4" in out

    def test_unknown_config_key_exits_1(self, workspace, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(config_text(workspace["dataset"], tmp_path / "m.ckpt")
                       + "bogus = 1\n")
        assert entrypoint(["train", str(cfg)]) == EXIT_CONFIG

    def test_missing_config_file_exits_1(self, tmp_path):
        assert entrypoint(["train", str(tmp_path / "absent.cfg")]) == EXIT_CONFIG

    def test_missing_dataset_exits_2(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(config_text(tmp_path / "absent.smi", tmp_path / "m.ckpt"))
        assert entrypoint(["train", str(cfg)]) == EXIT_DATASET

    def test_malformed_dataset_exits_2(self, tmp_path):
        data = tmp_path / "broken.smi"
        data.write_text("CCO\t1.0,0.0\nnot smiles at all\n")
        cfg = tmp_path / "run.cfg"
        cfg.write_text(config_text(data, tmp_path / "m.ckpt"))
        assert entrypoint(["train", str(cfg)]) == EXIT_DATASET

    def test_divergent_run_exits_3(self, workspace, tmp_path):
        cfg = tmp_path / "hot.cfg"
        cfg.write_text(config_text(workspace["dataset"], tmp_path / "m.ckpt",
                                   lr=1e18))
        assert entrypoint(["train", str(cfg)]) == EXIT_DIVERGED


class TestSample:
    def test_writes_requested_count(self, workspace, tmp_path):
        out = tmp_path / "mols.smi"
        code = entrypoint(["sample", str(workspace["checkpoint"]),
                           "--guide", "4,0.25", "--count", "3",
                           "--seed", "5", "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 3
        for line in lines:
            parse_smiles(line, QM9_ATOMS, DEFAULT_BONDS)  # syntactically sound

    def test_stdout_when_no_out_file(self, workspace, capsys):
        code = entrypoint(["sample", str(workspace["checkpoint"]),
                           "--guide", "3,0.5", "--count", "2", "--seed", "1"])
        assert code == 0
        assert len(capsys.readouterr().out.splitlines()) == 2

    def test_same_seed_same_bytes(self, workspace, tmp_path):
        outs = []
        for name in ("a.smi", "b.smi"):
            path = tmp_path / name
            entrypoint(["sample", str(workspace["checkpoint"]),
                        "--guide", "5,0.4", "--count", "4", "--seed", "9",
                        "--s", "2.0", "--out", str(path)])
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_wrong_guide_width_exits_5(self, workspace):
        code = entrypoint(["sample", str(workspace["checkpoint"]),
                           "--guide", "4", "--count", "1"])
        assert code == EXIT_DIMENSION

    def test_unparseable_guide_exits_5(self, workspace):
        code = entrypoint(["sample", str(workspace["checkpoint"]),
                           "--guide", "4,x", "--count", "1"])
        assert code == EXIT_DIMENSION

    def test_corrupt_checkpoint_exits_4(self, workspace, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"FGCKPT1" + b"\x00" * 8)
        assert entrypoint(["sample", str(bad), "--guide", "4,0.25"]) \
            == EXIT_CHECKPOINT
        truncated = tmp_path / "cut.ckpt"
        truncated.write_bytes(workspace["checkpoint"].read_bytes()[:100])
        assert entrypoint(["sample", str(truncated), "--guide", "4,0.25"]) \
            == EXIT_CHECKPOINT


class TestEval:
    def test_report_and_records_written(self, workspace, tmp_path):
        out = tmp_path / "eval"
        code = entrypoint(["eval", str(workspace["checkpoint"]),
                           str(workspace["dataset"]), "--k", "2", "--r", "2",
                           "--seed", "4", "--out", str(out)])
        assert code == 0
        report = EvalReport.from_json((out / "report.json").read_text())
        assert report.property_names == PROPERTIES
        assert report.references == 2
        assert report.samples_per_reference == 2
        assert report.size_mode == "inferred"
        assert 0.0 <= report.valid_fraction <= 1.0
        records = (out / "records.tsv").read_text().splitlines()
        assert len(records) == 4  # one line per (reference, sample) cell

    def test_rerun_is_byte_identical(self, workspace, tmp_path):
        payloads = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            entrypoint(["eval", str(workspace["checkpoint"]),
                        str(workspace["dataset"]), "--k", "2", "--r", "2",
                        "--seed", "6", "--out", str(out)])
            payloads.append((out / "report.json").read_bytes()
                            + (out / "records.tsv").read_bytes())
        assert payloads[0] == payloads[1]

    def test_marginal_size_flag_recorded(self, workspace, tmp_path):
        out = tmp_path / "eval"
        entrypoint(["eval", str(workspace["checkpoint"]),
                    str(workspace["dataset"]), "--k", "1", "--r", "1",
                    "--size", "marginal", "--out", str(out)])
        report = EvalReport.from_json((out / "report.json").read_text())
        assert report.size_mode == "marginal"

    def test_too_many_references_exits_6(self, workspace, tmp_path):
        code = entrypoint(["eval", str(workspace["checkpoint"]),
                           str(workspace["dataset"]), "--k", "400",
                           "--out", str(tmp_path / "eval")])
        assert code == EXIT_REFERENCES


class TestParser:
    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            entrypoint([])

    def test_bad_mode_rejected(self, workspace):
        with pytest.raises(SystemExit):
            entrypoint(["sample", str(workspace["checkpoint"]),
                        "--guide", "4,0.25", "--mode", "cubic"])
