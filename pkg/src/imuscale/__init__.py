"""Metric scale recovery for monocular camera trajectories from IMU data."""

from .alignment import AlignmentResult, align, fit_rotation_bias
from .errors import (AlignmentError, EvaluationError, IngestError, PipelineError,
                     PipelineWarning, ScaleError, SmoothingError)
from .ingest import ImuSample, PoseSample, UniformSeries, parse_imu, parse_trajectory
from .pipeline import EstimateOptions, EstimateResult, estimate
from .scale import ScaleSolution
from .smoother import SmootherConfig, StateTrajectory, smooth_positions

__version__ = "0.1.0"
