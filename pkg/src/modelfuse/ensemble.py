"""Fusion of aligned prediction matrices: plain averaging, simplex-weighted
averaging with DE-optimized weights, and probability-feature stacking.

The weight search maximizes macro-mean AUROC of the weighted average on the
bundle it is given (use the validation bundle, report on the test bundle).
The built-in meta-learner is a one-vs-rest logistic stacker trained by
full-batch gradient descent; meta predictions produced by any external
learner can be evaluated through the ordinary prediction-file path instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import GroundTruth, ModelBundle, PredictionMatrix
from .de import DeConfig, DeResult, optimize, project_to_simplex
from .errors import ComputationError, InputError
from .metrics import auroc

_WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class WeightVector:
    """Per-model weights on the probability simplex."""

    model_names: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "model_names", tuple(self.model_names))
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or len(w) != len(self.model_names) or len(w) < 1:
            raise InputError("weights and model_names must match and be non-empty")
        if len(set(self.model_names)) != len(self.model_names):
            raise InputError("weight model names must be unique")
        if not np.isfinite(w).all():
            raise InputError("weights must be finite")
        # squash projection roundoff at the box edge before validating
        w = np.clip(w, 0.0, 1.0) if ((w > -1e-12) & (w < 1 + 1e-12)).all() else w
        if ((w < 0.0) | (w > 1.0)).any():
            raise InputError("weights must lie in [0, 1]")
        if abs(w.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise InputError(f"weights must sum to 1 within {_WEIGHT_SUM_TOL}")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, model_names) -> "WeightVector":
        names = tuple(model_names)
        return cls(model_names=names, weights=np.full(len(names), 1.0 / len(names)))


def _combine(matrices: tuple[PredictionMatrix, ...], weights: np.ndarray) -> np.ndarray:
    # accumulate in model-name order so the result is bit-identical under
    # joint permutations of (matrices, weights)
    order = sorted(range(len(matrices)), key=lambda i: matrices[i].model_name)
    stacked = np.stack([matrices[i].probabilities for i in order])
    out = np.tensordot(np.asarray(weights)[order], stacked, axes=1)
    # convex combination; clip only guards float dust at the box edge
    return np.clip(out, 0.0, 1.0)


def weighted_average(bundle: ModelBundle, w: WeightVector) -> PredictionMatrix:
    """Convex combination of the bundle's matrices with the given weights."""
    if w.model_names != bundle.model_names:
        raise InputError(
            f"weight names {w.model_names} do not match bundle model order {bundle.model_names}"
        )
    return PredictionMatrix(
        model_name="weighted_average",
        sample_ids=bundle.truth.sample_ids,
        probabilities=_combine(bundle.matrices, w.weights),
    )


def unweighted_average(bundle: ModelBundle) -> PredictionMatrix:
    """Plain mean over models; identical to a uniform weighted average."""
    uniform = WeightVector.uniform(bundle.model_names)
    return PredictionMatrix(
        model_name="unweighted_average",
        sample_ids=bundle.truth.sample_ids,
        probabilities=_combine(bundle.matrices, uniform.weights),
    )


def combine_matrices(
    matrices: tuple[PredictionMatrix, ...], w: WeightVector, model_name: str
) -> PredictionMatrix:
    """Weighted combination of already-aligned matrices, truth not required."""
    matrices = tuple(matrices)
    if w.model_names != tuple(m.model_name for m in matrices):
        raise InputError("weight names do not match the matrices' model order")
    ids = matrices[0].sample_ids
    for m in matrices[1:]:
        if m.sample_ids != ids:
            raise InputError(f"{m.model_name}: rows not aligned with {matrices[0].model_name}")
    return PredictionMatrix(
        model_name=model_name, sample_ids=ids, probabilities=_combine(matrices, w.weights)
    )


def stack_matrices(
    matrices: tuple[PredictionMatrix, ...], label_names: tuple[str, ...]
) -> StackedFeatures:
    """Model-major stacking of already-aligned matrices, truth not required."""
    matrices = tuple(matrices)
    if not matrices:
        raise InputError("need at least one prediction matrix")
    ids = matrices[0].sample_ids
    for m in matrices[1:]:
        if m.sample_ids != ids:
            raise InputError(f"{m.model_name}: rows not aligned with {matrices[0].model_name}")
    return StackedFeatures(
        sample_ids=ids,
        features=np.hstack([m.probabilities for m in matrices]),
        model_names=tuple(m.model_name for m in matrices),
        label_names=tuple(label_names),
    )


def _evaluable_columns(truth: GroundTruth) -> np.ndarray:
    counts = truth.labels.sum(axis=0)
    return np.flatnonzero((counts > 0) & (counts < truth.n_samples))


def optimize_weights(
    validation_bundle: ModelBundle, config: DeConfig | None = None
) -> tuple[WeightVector, DeResult]:
    """Search simplex weights maximizing macro-mean AUROC on the given bundle.

    Candidates are projected onto the simplex before evaluation, so the
    objective only ever sees feasible weights. The initial population is
    seeded with the K vertices (single models) and the uniform point, which
    makes the optimized fitness at least as good as any single model and the
    plain average on this bundle. K=1 short-circuits to weight (1.0).
    """
    truth = validation_bundle.truth
    columns = _evaluable_columns(truth)
    if len(columns) == 0:
        raise ComputationError(
            "weight optimization impossible: every label is single-class on this bundle"
        )
    names = validation_bundle.model_names
    k = len(names)
    stacked = np.stack([m.probabilities[:, columns] for m in validation_bundle.matrices])
    y_columns = [truth.labels[:, j] for j in columns]

    def fitness(weights: np.ndarray) -> float:
        combined = np.tensordot(weights, stacked, axes=1)
        values = [auroc(combined[:, jj], y) for jj, y in enumerate(y_columns)]
        return float(np.mean(values))

    if k == 1:
        value = fitness(np.ones(1))
        result = DeResult(
            best_vector=np.ones(1), best_fitness=value, generations_run=0, history=(value,)
        )
        return WeightVector(model_names=names, weights=np.ones(1)), result

    seeds = np.vstack([np.eye(k), np.full((1, k), 1.0 / k)])
    result = optimize(
        fitness,
        dim=k,
        config=config or DeConfig(),
        repair=project_to_simplex,
        init_population=seeds,
    )
    return WeightVector(model_names=names, weights=result.best_vector), result


# ---------------------------------------------------------------------------
# stacking


@dataclass(frozen=True)
class StackedFeatures:
    """Model-major concatenation of per-model probabilities: N x (K*L)."""

    sample_ids: tuple[str, ...]
    features: np.ndarray
    model_names: tuple[str, ...]
    label_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "model_names", tuple(self.model_names))
        object.__setattr__(self, "label_names", tuple(self.label_names))
        feats = np.asarray(self.features, dtype=np.float64)
        expected = len(self.model_names) * len(self.label_names)
        if feats.ndim != 2 or feats.shape != (len(self.sample_ids), expected):
            raise InputError("stacked features must be N x (K*L)")
        if not ((feats >= 0.0) & (feats <= 1.0)).all():
            raise InputError("stacked features must be probabilities in [0, 1]")
        feats = np.ascontiguousarray(feats)
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)


def stack_features(bundle: ModelBundle) -> StackedFeatures:
    """Concatenate the bundle's matrices column-wise, model-major order."""
    return StackedFeatures(
        sample_ids=bundle.truth.sample_ids,
        features=np.hstack([m.probabilities for m in bundle.matrices]),
        model_names=bundle.model_names,
        label_names=bundle.label_space.names,
    )


@dataclass
class MetaTrainConfig:
    """Gradient-descent settings for the built-in logistic stacker."""

    step_size: float = 0.1
    max_iters: int = 500


@dataclass(frozen=True)
class MetaModel:
    """One-vs-rest logistic stacker: per-label weight vector and intercept."""

    kind: str
    label_names: tuple[str, ...]
    model_names: tuple[str, ...]
    weights: np.ndarray  # L x (K*L)
    intercepts: np.ndarray  # L
    degenerate: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "label_names", tuple(self.label_names))
        object.__setattr__(self, "model_names", tuple(self.model_names))
        object.__setattr__(self, "degenerate", tuple(self.degenerate))
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.intercepts, dtype=np.float64)
        n_out = len(self.label_names)
        if w.shape != (n_out, len(self.model_names) * n_out) or b.shape != (n_out,):
            raise InputError("meta model parameter shapes inconsistent with labels/models")
        if len(self.degenerate) != n_out:
            raise InputError("degenerate flags must match label count")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "intercepts", b)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def train_meta(
    features: StackedFeatures, truth: GroundTruth, config: MetaTrainConfig | None = None
) -> MetaModel:
    """Fit one logistic classifier per label on the stacked probabilities.

    Full-batch gradient descent from zero parameters with a fixed step size
    and iteration cap; deterministic given the config. Labels with a single
    class get an intercept-only constant model and a degenerate flag.
    """
    cfg = config or MetaTrainConfig()
    if features.sample_ids != truth.sample_ids:
        raise InputError("stacked features and truth are not aligned")
    x = features.features
    if not np.isfinite(x).all():
        raise InputError("stacked features contain non-finite values")
    n, d = x.shape
    n_labels = len(features.label_names)
    if truth.n_labels != n_labels:
        raise InputError("truth column count does not match stacked label names")

    weights = np.zeros((n_labels, d))
    intercepts = np.zeros(n_labels)
    degenerate = []
    for j in range(n_labels):
        y = truth.labels[:, j].astype(np.float64)
        positives = y.sum()
        if positives == 0 or positives == n:
            # constant model at the (clamped) prevalence
            p = min(max(positives / n, 0.5 / n), 1.0 - 0.5 / n)
            intercepts[j] = np.log(p / (1.0 - p))
            degenerate.append(True)
            continue
        w = np.zeros(d)
        b = 0.0
        for _ in range(cfg.max_iters):
            residual = _sigmoid(x @ w + b) - y
            w -= cfg.step_size * (x.T @ residual) / n
            b -= cfg.step_size * residual.mean()
        weights[j] = w
        intercepts[j] = b
        degenerate.append(False)
    return MetaModel(
        kind="logistic",
        label_names=features.label_names,
        model_names=features.model_names,
        weights=weights,
        intercepts=intercepts,
        degenerate=tuple(degenerate),
    )


def predict_meta(model: MetaModel, features: StackedFeatures) -> PredictionMatrix:
    """Apply the stacker: per-label probabilities via the logistic link."""
    if features.features.shape[1] != model.weights.shape[1]:
        raise InputError(
            f"feature dimension {features.features.shape[1]} does not match "
            f"meta model ({model.weights.shape[1]})"
        )
    probs = _sigmoid(features.features @ model.weights.T + model.intercepts)
    return PredictionMatrix(
        model_name="stacked_meta",
        sample_ids=features.sample_ids,
        probabilities=probs,
    )


# ---------------------------------------------------------------------------
# file exchange


def write_weights(w: WeightVector, path, fitness: float | None = None) -> None:
    """``model_name weight`` lines plus an optional fitness line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, value in zip(w.model_names, w.weights):
            fh.write(f"{name} {repr(float(value))}\n")
        if fitness is not None:
            fh.write(f"fitness {repr(float(fitness))}\n")


def load_weights(path) -> tuple[WeightVector, float | None]:
    names: list[str] = []
    values: list[float] = []
    fitness = None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"{path}: cannot read weights file ({exc})") from exc
    for ln, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InputError(f"{path}: line {ln}: expected 'name value'")
        key, text = parts
        try:
            value = float(text)
        except ValueError:
            raise InputError(f"{path}: line {ln}: '{text}' is not a number") from None
        if key == "fitness":
            fitness = value
        else:
            names.append(key)
            values.append(value)
    if not names:
        raise InputError(f"{path}: no model weights found")
    return WeightVector(model_names=tuple(names), weights=np.array(values)), fitness


def write_meta(model: MetaModel, path) -> None:
    payload = {
        "kind": model.kind,
        "label_names": list(model.label_names),
        "model_names": list(model.model_names),
        "weights": [[float(v) for v in row] for row in model.weights],
        "intercepts": [float(v) for v in model.intercepts],
        "degenerate": list(model.degenerate),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_meta(path) -> MetaModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise InputError(f"{path}: cannot read meta model ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid meta model JSON ({exc})") from exc
    try:
        if payload["kind"] != "logistic":
            raise InputError(f"{path}: unsupported meta model kind '{payload['kind']}'")
        return MetaModel(
            kind=payload["kind"],
            label_names=tuple(payload["label_names"]),
            model_names=tuple(payload["model_names"]),
            weights=np.array(payload["weights"], dtype=np.float64),
            intercepts=np.array(payload["intercepts"], dtype=np.float64),
            degenerate=tuple(bool(v) for v in payload["degenerate"]),
        )
    except KeyError as exc:
        raise InputError(f"{path}: meta model missing field {exc}") from exc
