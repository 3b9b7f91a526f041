"""Synthetic model bundles with analytically known per-model AUROC.

Scores follow a Gaussian location-shift model: model k's raw score for a
sample with label y is mu * y + Normal(0, sigma_k), squashed to (0, 1) by the
logistic function. The squash is strictly monotone, so ranking is untouched
and the expected AUROC of model k has the closed form

    Phi(mu / (sigma_k * sqrt(2)))

with Phi the standard normal CDF. Heterogeneous sigma_k makes the optimal
ensemble weighting non-uniform, which is what the fusion tests need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import CHESTXRAY14_LABELS, GroundTruth, LabelSpace, ModelBundle, PredictionMatrix
from .errors import InputError


@dataclass(frozen=True)
class SynthConfig:
    """Bundle shape, per-label prevalence, per-model noise, and signal."""

    n_samples: int = 1000
    n_labels: int = 14
    n_models: int = 6
    prevalence: float | tuple[float, ...] = 0.3
    model_noise: tuple[float, ...] | None = None
    signal_strength: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2:
            raise InputError("need n_samples >= 2")
        if self.n_labels < 1 or self.n_models < 1:
            raise InputError("need at least one label and one model")
        prev = self.prevalence
        prev = (float(prev),) * self.n_labels if np.isscalar(prev) else tuple(float(p) for p in prev)
        if len(prev) != self.n_labels:
            raise InputError("prevalence must be scalar or one value per label")
        if any(not 0.0 < p < 1.0 for p in prev):
            raise InputError("prevalence values must lie strictly inside (0, 1)")
        object.__setattr__(self, "prevalence", prev)
        noise = self.model_noise
        noise = (1.0,) * self.n_models if noise is None else tuple(float(s) for s in noise)
        if len(noise) != self.n_models:
            raise InputError("model_noise must have one sigma per model")
        if any(s <= 0 for s in noise):
            raise InputError("model noise sigmas must be positive")
        object.__setattr__(self, "model_noise", noise)


def expected_auroc(signal_strength: float, sigma: float) -> float:
    """Closed-form AUROC of one generated model: Phi(mu / (sigma * sqrt(2)))."""
    z = signal_strength / (sigma * math.sqrt(2.0))
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def _label_names(n_labels: int) -> tuple[str, ...]:
    if n_labels == len(CHESTXRAY14_LABELS):
        return CHESTXRAY14_LABELS
    return tuple(f"label_{i + 1:02d}" for i in range(n_labels))


def generate(config: SynthConfig) -> ModelBundle:
    """Deterministic synthetic bundle for the given config.

    Every sample is its own patient (the generator has no grouping knob);
    grouped-split behavior is exercised with hand-built patient maps instead.
    """
    rng = np.random.default_rng(config.seed)
    n, n_labels, n_models = config.n_samples, config.n_labels, config.n_models
    width = max(4, len(str(n)))
    sample_ids = tuple(f"s{i:0{width}d}" for i in range(n))
    patient_ids = tuple(f"p{i:0{width}d}" for i in range(n))
    label_space = LabelSpace(_label_names(n_labels))

    prevalence = np.asarray(config.prevalence)
    labels = (rng.random((n, n_labels)) < prevalence).astype(np.int8)
    truth = GroundTruth(sample_ids=sample_ids, patient_ids=patient_ids, labels=labels)

    mu = config.signal_strength
    matrices = []
    for k, sigma in enumerate(config.model_noise):
        raw = mu * labels + rng.normal(0.0, sigma, size=(n, n_labels))
        with np.errstate(over="ignore"):
            probs = 1.0 / (1.0 + np.exp(-raw))
        matrices.append(
            PredictionMatrix(
                model_name=f"model_{k + 1:02d}",
                sample_ids=sample_ids,
                probabilities=probs,
            )
        )
    return ModelBundle(label_space=label_space, truth=truth, matrices=tuple(matrices))
