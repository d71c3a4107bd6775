"""Finger-specific affordance grasping: python bindings for the core operations."""

from ._fsag import (
    __version__,
    back_project,
    extract_peaks,
    fingertips,
    forward_noise,
    kld,
    label_sigma,
    nss,
    normalize_for_eval,
    project,
    qp_solve,
    rollout,
    sim,
    synthesize_labels,
)

__all__ = [
    "__version__",
    "back_project",
    "extract_peaks",
    "fingertips",
    "forward_noise",
    "kld",
    "label_sigma",
    "normalize_for_eval",
    "nss",
    "project",
    "qp_solve",
    "rollout",
    "sim",
    "synthesize_labels",
]
