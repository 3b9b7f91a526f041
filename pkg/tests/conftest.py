import numpy as np
import pytest

from modelfuse.dataset import GroundTruth, LabelSpace, ModelBundle, PredictionMatrix


def brute_force_auroc(scores, labels) -> float:
    """Independent oracle: enumerate every positive-negative pair."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def random_instance(rng, max_n=50):
    """Scores on a coarse grid (deliberate ties), labels with both classes."""
    n = int(rng.integers(2, max_n + 1))
    scores = np.round(rng.random(n), 1)
    labels = rng.integers(0, 2, n)
    if labels.min() == labels.max():
        labels[rng.integers(n)] = 1 - labels[0]
    return scores, labels


def make_bundle(probabilities_per_model, labels, label_names=None, patients=None):
    """Bundle from raw arrays; ids are generated, one patient per sample."""
    labels = np.asarray(labels)
    n, n_labels = labels.shape
    names = label_names or tuple(f"L{j}" for j in range(n_labels))
    ids = tuple(f"s{i}" for i in range(n))
    pats = patients or tuple(f"p{i}" for i in range(n))
    truth = GroundTruth(sample_ids=ids, patient_ids=pats, labels=labels)
    matrices = tuple(
        PredictionMatrix(model_name=f"m{k}", sample_ids=ids, probabilities=np.asarray(p))
        for k, p in enumerate(probabilities_per_model)
    )
    return ModelBundle(label_space=LabelSpace(names), truth=truth, matrices=matrices)


def slice_bundle(bundle, indices):
    """Row-sliced copy of a bundle (used to carve validation/test splits)."""
    indices = np.asarray(indices)
    truth = bundle.truth.restrict(indices)
    matrices = tuple(
        PredictionMatrix(
            model_name=m.model_name,
            sample_ids=truth.sample_ids,
            probabilities=m.probabilities[indices],
        )
        for m in bundle.matrices
    )
    return ModelBundle(label_space=bundle.label_space, truth=truth, matrices=matrices)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
