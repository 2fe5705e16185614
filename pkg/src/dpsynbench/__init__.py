"""Benchmark harness for differentially private tabular data synthesizers."""

from .accountant import (AccountantState, PrivacyBudget, calibrate_sigma,
                         compose, fresh, rdp_step, to_epsilon)
from .bench import (BenchPlan, BenchResult, NineScores, desk_plan,
                    disciplines_grid, run_plan, seed_for, write_cells_csv,
                    write_scores_json)
from .dgp import (Scenario1Params, analysis_formula, generate_scenario1,
                  scenario1_schema, true_params)
from .inference import CombinedEstimate, combine, combine_fits, combined_interval
from .metrics import (CartConfig, Formula, GeneralisationScores, PmseReport,
                      RegressionFit, TrainingScores, WassersteinReport,
                      cart_fit, cart_predict, ols_fit, pmse, pmse_ratio,
                      prediction_rmse, specific_generalisation_scores,
                      specific_training_scores, structural_zero_rate,
                      tv_distance, wasserstein_1d, wasserstein_ratio,
                      wasserstein_report)
from .report import RadarSpec, normalize_scores, render_radar
from .synth import (GanConfig, MarginalConfig, SynthesizerModel,
                    SynthesizerSpec, enforce_structural_zeros, fit,
                    load_model, sample, save_model)
from .tabular import (CATEGORICAL, CONTINUOUS, COUNT, Column, Dataset,
                      OneHotEncoder, Schema, StructuralZeroRule, one_hot,
                      read_csv, read_schema, split_holdout, validate,
                      write_csv, write_schema)

__version__ = "0.1.0"
