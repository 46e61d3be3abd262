"""Guided discrete diffusion over categorical molecular graphs."""

from .graphdata import (AtomVocab, BondVocab, CategoricalGraph, DatasetMarginals,
                        DEFAULT_BONDS, Guide, QM9_ATOMS, VOCABS, ZINC_ATOMS,
                        compute_marginals, decode_graph, encode_graph, wl_hash)
from .smiles import (MoleculeSpec, ValidityReport, check_valence, graph_property,
                     graph_to_smiles, molecular_weight, parse_smiles,
                     property_vector, smiles_to_graph, write_smiles)
from .datasets import (GraphDataset, Standardization, load_dataset,
                       random_valid_graph, save_dataset)
from .schedule import (NoiseSchedule, cosine_schedule, cumulative_transition,
                       transition_matrix)
from .diffusion import (GuidanceConfig, denoising_distribution, forward_sample,
                        guided_mixture, posterior_distribution, reverse_step,
                        sample)
from .denoiser import (Denoiser, DenoiserConfig, DenoiserOutput,
                       initialize_parameters, train_denoiser)
from .nodecount import (NodeCountConfig, NodeCountModel, build_nodecount,
                        sample_node_count, train_nodecount)
from .evaluate import EvalReport, mae, run_benchmark
from .checkpoint import (CheckpointBundle, load_checkpoint, read_tensors,
                         save_checkpoint, write_tensors)
from .config import RunConfig, load_config, parse_config

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
