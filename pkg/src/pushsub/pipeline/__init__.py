"""Trial execution, data collection, evaluation and statistics."""
from .metrics import (WilcoxonResult, accuracy, contact_accuracy, delta_theta_norm, mean_abs_l, summarize,
                      wilcoxon_signed_rank)
from .protocol import (LogParseError, SuiteResult, TargetGrid, collect_dataset, collection_plan, evaluate_suite,
                       generate_target_grid, load_grid_file, metrics_rows, read_dataset, read_log, replay,
                       run_many, success_rate, success_table, wilcoxon_rows, write_csv, write_dataset, write_log)
from .trial import (GroundTruthEstimator, SensingMode, TrialConfig, TrialLog, TypeConfusion, run_trial,
                    trial_seed)
