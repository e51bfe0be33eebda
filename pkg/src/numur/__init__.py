"""Neural machine unranking: remove queries or documents from a trained ranker.

The package covers the full desk-scale workflow: deterministic corpus
generation or ingestion, forget/entangled/disjoint partitioning of the
training samples under a removal request, pairwise training of a small
dual-embedding scorer, six unlearning strategies with a shared
rank-targeted stopping rule, and ranking metrics with reports.
"""

from .corpus import (CorpusSplit, Dataset, Document, Label, Query, Sample,
                     StatsRecord, SyntheticConfig, dataset_stats,
                     generate_synthetic, load_dataset, save_dataset)
from .errors import ConfigError, DataError, NumurError
from .evaluation import (MetricsReport, MrrResult, RankedList, ScoreDistribution,
                         mrr_forget, mrr_set, normalized_forget,
                         normalized_forget_score, rank, score_distribution,
                         timing_metrics)
from .partition import (ForgetSpec, Partition, RemovalKind, entangled_partners,
                        load_forget_spec, partition, save_forget_spec)
from .ranker import (GradientBuffer, ScoreModel, TeacherSnapshot, TrainConfig,
                     TrainResult, apply_gradients, backward_score, clone_model,
                     forward, init_model, load_model, models_equal, new_buffer,
                     retrain, save_model, score_pool, snapshot, train)
from .unlearn_engine import (Destinations, EpochRecord, Method, UnlearnConfig,
                             UnlearnRun, amnesiac_unlearn, badt_unlearn, cf_unlearn,
                             cocol_unlearn, compute_destinations, neggrad_unlearn,
                             ssd_unlearn, swap_labels, unlearn)
from .unlearn_losses import (DeltaValue, TeacherMinCache, abs_delta_loss,
                             build_min_cache, consistent_loss, contrastive_loss,
                             delta, delta_min)

__version__ = "0.1.0"
