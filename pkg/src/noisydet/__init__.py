"""Label-noise synthesis and noise-robust training for tiny object detection."""

from .boxes import BoundingBox, iou
from .dataset import Annotation, DetDataset, ImageInfo, Provenance, load_dataset, save_dataset
from .noise import NoiseSpec, inject, noise_report
from .confusion import DynamicConfidenceMatrix, SampleObservation, clc_loss_weights, noisy_factor
from .trend import (
    Candidate,
    RbrState,
    SampleKey,
    TrendRegistry,
    cleanliness,
    negative_weight,
    positive_weight,
    primacy,
    rbr_fuse,
    select_topk,
)
from .scenes import SceneConfig, build_dataset, generate_scene, render_image
from .detector import Detection, DetectorConfig, TinyDetector, predict
from .train import TrainResult, train
from .evaluate import DetRecord, EvalResult, compute_ap, evaluate_model
from .sweep import SweepSpec, run_sweep

__all__ = [
    "Annotation", "BoundingBox", "Candidate", "DetDataset", "DetRecord",
    "Detection", "DetectorConfig", "DynamicConfidenceMatrix", "EvalResult",
    "ImageInfo", "NoiseSpec", "Provenance", "RbrState", "SampleKey",
    "SampleObservation", "SceneConfig", "TinyDetector", "TrainResult",
    "TrendRegistry", "build_dataset", "clc_loss_weights", "cleanliness",
    "compute_ap", "evaluate_model", "generate_scene", "inject", "iou",
    "load_dataset", "negative_weight", "noise_report", "noisy_factor",
    "positive_weight", "predict", "primacy", "rbr_fuse", "render_image",
    "run_sweep", "save_dataset", "select_topk", "train",
]
