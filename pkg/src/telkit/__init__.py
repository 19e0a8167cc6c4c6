"""Temporal event localization toolkit.

Library layout:
  data       annotation/detection/feature types and file formats
  metrics    temporal IoU, matching, average precision, evaluation reports
  diagnosis  false-positive taxonomy, error impact, confusion analysis
  selfsim    within-instance self-similarity statistics
  nn         minimal dense-tensor layers, losses, SGD, gradient checking
  model      temporal aggregation backbone, proposal scorer, detector
  proposals  sliding windows and interval NMS
  synth      synthetic multi-shot dataset generator
  pipeline   train/infer/eval orchestration used by the CLI
"""

__version__ = "0.1.0"

from . import data, metrics, diagnosis, selfsim, proposals, nn, model, synth, training, pipeline

__all__ = [
    "data", "metrics", "diagnosis", "selfsim", "proposals",
    "nn", "model", "synth", "training", "pipeline", "__version__",
]
