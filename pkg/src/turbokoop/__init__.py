"""Lifted-linear (EDMD) and NARX identification of a turbocharger turbine."""

from .dictionary import DictionarySpec, lift, lift_batch, sample_centers
from .edmd import (
    KoopmanModel,
    NormalizationStats,
    SnapshotMatrices,
    build_snapshots,
    fit,
    load_model,
    predict_step,
    save_model,
    simulate,
)
from .linalg import LeastSquaresSolution, pseudoinverse, solve_stacked_regression
from .metrics import MetricReport, evaluate_channels, mape, nrmse, r_squared
from .timeseries import TimeSeriesDataset

__version__ = "0.1.0"
