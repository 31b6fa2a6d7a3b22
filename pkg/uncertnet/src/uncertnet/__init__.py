"""Learned radio-map and uncertainty estimation served over TCP."""

from uncertnet.data import TrainingExample, build_dataset, build_training_example
from uncertnet.model import MapUncertaintyNet, NetConfig, load_checkpoint, save_checkpoint
from uncertnet.residuals import knn_baseline, normalized_residual
from uncertnet.serve import EstimateService
from uncertnet.train import TrainSchedule, train, weighted_loss

__version__ = "0.1.0"
