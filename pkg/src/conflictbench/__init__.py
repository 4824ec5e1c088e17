"""Desk-scale benchmark for conflicts between ML protection mechanisms.

Small classifiers are trained with a numpy autodiff engine under pairs of
mechanisms (DP-SGD or adversarial training, combined with a backdoor
watermark, radioactive data or dataset inference) and the pairs are judged
with Welch and equivalence tests against per-metric thresholds.
"""
from .adversarial import AdvSpec, adv_train_epoch, eval_robust_accuracy, pgd_attack
from .autodiff import (ParamModel, TrainPlan, backward_grad, build_model, eval_accuracy, forward_eval,
                       per_example_grads, predict, train_epoch)
from .compose import ConfigError, MechanismSpecs, Task, compose_training
from .conflict import (ConflictVerdict, DeltaReport, MetricSample, StatsPolicy, ThresholdPolicy,
                       check_accuracy_bound, decide_conflict)
from .data import (ChunkSplit, LabeledSet, ParseError, build_trigger_set, load_dataset, load_digits_task,
                   split_chunks, synth_dataset, synth_patterns)
from .dp import DpSpec, PrivacyBudget, account_privacy, calibrate_sigma, dp_train_epoch, dp_train_step
from .harness import (ExperimentConfig, parse_config, run_di_false_positive, run_matrix, sweep_hyperparams,
                      verdict_from_records)
from .inference import DiSpec, MarginEmbedding, blind_walk_embed, di_pvalue, train_distinguisher
from .radioactive import MarkedPairSet, RadSpec, craft_marks, eval_rad_score
from .report import render_report
from .stats import tost_equivalence, welch_t
from .watermark import WmSpec, embed_watermark_train, eval_wm_accuracy, wm_confidence

__version__ = "0.1.0"
