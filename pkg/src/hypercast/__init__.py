"""Prototype-guided hypergraph forecasting for multi-horizon traffic data."""

from .data import (DataBundle, Normalizer, PatternSpec, RawCorpus, TimeIndices,
                   TrafficWindow, WindowSet, compute_time_indices, fit_normalizer,
                   generate_synthetic, load_corpus, make_windows, normalize_windows,
                   prepare, split_windows, write_corpus)
from .embeddings import SpatialEmbedding, TimeEmbedding, combine_time
from .gradcheck import GradCheckReport, grad_check
from .hgconv import (HypergraphConv, PrototypeBank, SoftIncidence, StepContext,
                     gather_to_edges, node_adaptive_output, scatter_to_nodes,
                     soft_assign)
from .metrics import MetricReport, compute_metrics, mae_loss
from .model import (ABLATION_VARIANTS, ForecastBlock, HypergraphForecaster,
                    ModelConfig, TemporalQueryAttention, apply_ablation)
from .recurrent import HypergraphGRUCell, unroll
from .training import (TrainConfig, TrainResult, TrainingDiverged, evaluate_model,
                       load_checkpoint, predict, save_checkpoint, train)

__version__ = "0.1.0"
