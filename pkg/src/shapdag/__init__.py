"""Causal structure discovery driven by Shapley attributions."""

from .assemble import Digraph, DiscrepancyStore, PipelineConfig, break_cycles, combine, discover
from .attribution import (ImportanceVector, ShapMatrix, importance, shap_bruteforce, shap_discrepancy,
                          shap_gradient, shap_tree)
from .dag import Dag, read_dag
from .data import Dataset, bootstrap_plan, load_csv, sample_rows, save_csv, standardize
from .metrics import MetricsReport, confusion, full_report, shd, sid
from .models.gbt import GbtModel, GbtParams, train_gbt
from .models.mlp import MlpModel, MlpParams, train_mlp
from .models.tuning import predict, tune
from .orient import HsicConfig, fit_univariate, hsic_test, orient_edges
from .skeleton import SelectionConfig, build_skeleton, dbscan_1d, select_parents, select_parents_greedy
from .synth import MechanismFamily, generate_sem, generate_validation, partial_correlation_test, sample_dag

__version__ = "0.1.0"
