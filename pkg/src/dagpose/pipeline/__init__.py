"""Desk-scale top-down pose pipeline."""

from .crop import CropBox, crop_box, crop_image, crop_keypoints
from .data import SampleSet, body_center, build_samples
from .evaluate import EvalReport, evaluate, pck, predict_images, report_from_predictions
from .heatmaps import decode_heatmaps, encode_heatmaps, encode_multi
from .losses import pose_l1, total_loss
from .model import ModelConfig, PoseModel, backbone_forward, init_backbone
from .train import NumericalError, TrainConfig, TrainResult, load_model, save_model, train

__all__ = [
    "CropBox", "crop_box", "crop_image", "crop_keypoints", "SampleSet", "body_center",
    "build_samples", "EvalReport", "evaluate", "pck", "predict_images", "report_from_predictions",
    "decode_heatmaps", "encode_heatmaps", "encode_multi", "pose_l1", "total_loss", "ModelConfig",
    "PoseModel", "backbone_forward", "init_backbone", "NumericalError", "TrainConfig",
    "TrainResult", "load_model", "save_model", "train",
]
