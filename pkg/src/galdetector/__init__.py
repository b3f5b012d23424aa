"""Anomaly detection from observed normal samples.

Local sparsity (a forest of density-variance partition trees) and global
normality (distance to k-means centers of the observed normals) are fused to
mine potential anomalies from unlabeled data, which then train a weighted
boosted-tree detector.
"""

from .dataset import Dataset, Normalizer, ScenarioSplit, fit_normalizer, generate_synthetic, load_csv, split_scenario
from .detector import Detector
from .eval import EvalReport, auc, best_f1, evaluate, pr_curve
from .normal_model import ClusterModel, fit_kmeans, gns, kmeans_objective
from .pipeline import GALModel, PipelineConfig, run_pipeline
from .scoring import assign_weights, galscore, select_potential_anomalies
from .sparsity_forest import SparsityForest, best_split_1d, build_tree, cube_sparsity, lss

__version__ = "0.1.0"
