"""DAG occluded pose estimation."""

from .estimator import DAGPoseEstimator

__all__ = ["DAGPoseEstimator"]
