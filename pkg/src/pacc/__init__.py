"""Driving-style learning and personalized adaptive cruise control planning."""

from ._accel import USE_NUMBA
from .clustering import ClusterModel, adjusted_rand_index, elbow_scan, kmeans, select_k
from .config import ExperimentConfig
from .data import DiscretizationSpec, DriverProfile, discretize_state, synthesize_driver
from .irl import IrlConfig, learn_reward, normalize_weights
from .model import Intention, ModelConfig, PaccModel, PaccState
from .prediction import Gmm, fit_gmm, kl_divergence_mc, predict_cluster
from .solver import Belief, PlannerConfig, belief_update, plan, run_episode

__all__ = [
    "USE_NUMBA", "ClusterModel", "adjusted_rand_index", "elbow_scan", "kmeans", "select_k",
    "ExperimentConfig", "DiscretizationSpec", "DriverProfile", "discretize_state", "synthesize_driver",
    "IrlConfig", "learn_reward", "normalize_weights", "Intention", "ModelConfig", "PaccModel",
    "PaccState", "Gmm", "fit_gmm", "kl_divergence_mc", "predict_cluster", "Belief", "PlannerConfig",
    "belief_update", "plan", "run_episode",
]
