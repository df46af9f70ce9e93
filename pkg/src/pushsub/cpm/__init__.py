"""Contact perception module: LSTM estimators of contact offset and type."""
from .estimator import CpmEstimator, predict
from .lstm import CLE, CTE, LstmModel, init_model, lstm_forward
from .model_io import ModelFormatError, load_model, save_model
from .optim import Adam, AdamConfig, adam_step
from .scaler import MinMaxScaler
from .training import SequenceDataset, TrainConfig, make_windows, train

__all__ = [
    "CLE", "CTE", "Adam", "AdamConfig", "CpmEstimator", "LstmModel", "MinMaxScaler", "ModelFormatError",
    "SequenceDataset", "TrainConfig", "adam_step", "init_model", "load_model", "lstm_forward", "make_windows",
    "predict", "save_model", "train",
]
