"""Poisoning attacks, co-training defense, and robustness benchmarking
for matrix-factorization recommenders."""

from .data import (RatingDataset, SplitConfig, filter_cold_start, load_ratings,
                   sample_unrated_pairs, split_dataset,
                   SPLIT_TRAIN, SPLIT_VALIDATION, SPLIT_TEST)
from .mf import (AdamState, MfModel, TrainConfig, fit, init_model, load_model,
                 mse, save_model, top_k, train_epoch)
from .cotrain import (CoTrainConfig, Projection, consistent_labels, cotrain,
                      recommend)
from .attacks import (CapturedData, FakeProfileSet, ThreatModel, average_attack,
                      average_filler_budget, build_surrogate, inject,
                      load_profiles, pga_attack, random_attack, save_profiles,
                      select_targets, tna_attack)
from .defenses import PerturbConfig, at_train, rat_train
from .metrics import (MetricReport, hit_ratio_targets, hit_ratio_test,
                      paired_t_test, rank_shift, robustness_improvement,
                      significance_stars)
from .runner import (ExperimentConfig, ExperimentReport, ThreatSettings,
                     emit_tables, load_config, run_cell, run_grid, run_sweep)
from .synth import synthetic_dataset

__version__ = "0.1.0"
