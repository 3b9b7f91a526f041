"""Data model, file ingestion and cross-model alignment for prediction matrices.

File formats (UTF-8, comma separated, LF or CRLF line endings):

* prediction file: header ``sample_id,<label1>,...,<labelL>``, one row per
  sample, decimal probabilities in [0, 1]
* truth file: header ``sample_id,patient_id,<label1>,...,<labelL>``, binary
  labels 0/1

Probabilities are validated strictly: values outside [0, 1] are rejected, not
clamped, so upstream bugs surface instead of being silently repaired.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError

# The 14 ChestX-ray14 disease labels, in the order used throughout reports.
CHESTXRAY14_LABELS = (
    "Atelectasis",
    "Consolidation",
    "Infiltration",
    "Pneumothorax",
    "Edema",
    "Emphysema",
    "Fibrosis",
    "Effusion",
    "Pneumonia",
    "Pleural_Thickening",
    "Cardiomegaly",
    "Nodule",
    "Mass",
    "Hernia",
)


def _frozen(a: np.ndarray) -> np.ndarray:
    """Return a read-only contiguous copy; stored arrays are immutable."""
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class LabelSpace:
    """Ordered, fixed list of label names."""

    names: tuple[str, ...] = CHESTXRAY14_LABELS

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if not self.names:
            raise InputError("label space must contain at least one label")
        if len(set(self.names)) != len(self.names):
            raise InputError("label names must be unique")

    def __len__(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class PredictionMatrix:
    """One model's probability outputs: N samples x L labels in [0, 1]."""

    model_name: str
    sample_ids: tuple[str, ...]
    probabilities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        probs = np.asarray(self.probabilities, dtype=np.float64)
        if probs.ndim != 2:
            raise InputError(f"{self.model_name}: probabilities must be 2-D")
        n, _ = probs.shape
        if n < 1:
            raise InputError(f"{self.model_name}: need at least one sample")
        if len(self.sample_ids) != n:
            raise InputError(f"{self.model_name}: sample_ids/probabilities row mismatch")
        if len(set(self.sample_ids)) != n:
            raise InputError(f"{self.model_name}: duplicate sample ids")
        if not ((probs >= 0.0) & (probs <= 1.0)).all():
            raise InputError(f"{self.model_name}: probabilities outside [0, 1]")
        object.__setattr__(self, "probabilities", _frozen(probs))

    @property
    def n_samples(self) -> int:
        return self.probabilities.shape[0]

    @property
    def n_labels(self) -> int:
        return self.probabilities.shape[1]


@dataclass(frozen=True)
class GroundTruth:
    """Binary N x L label matrix with per-sample patient identifiers."""

    sample_ids: tuple[str, ...]
    patient_ids: tuple[str, ...]
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "patient_ids", tuple(self.patient_ids))
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise InputError("truth labels must be 2-D")
        n, _ = labels.shape
        if n < 1:
            raise InputError("truth must contain at least one sample")
        if len(self.sample_ids) != n or len(self.patient_ids) != n:
            raise InputError("truth sample_ids/patient_ids/labels length mismatch")
        if len(set(self.sample_ids)) != n:
            raise InputError("duplicate sample ids in truth")
        if any(not p for p in self.patient_ids):
            raise InputError("every sample needs a patient_id")
        if not np.isin(labels, (0, 1)).all():
            raise InputError("truth labels must be binary 0/1")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int8)))

    @property
    def n_samples(self) -> int:
        return self.labels.shape[0]

    @property
    def n_labels(self) -> int:
        return self.labels.shape[1]

    def restrict(self, indices: np.ndarray) -> "GroundTruth":
        """Truth restricted to the given row indices, in the given order."""
        return GroundTruth(
            sample_ids=tuple(self.sample_ids[i] for i in indices),
            patient_ids=tuple(self.patient_ids[i] for i in indices),
            labels=self.labels[indices],
        )


@dataclass(frozen=True)
class ModelBundle:
    """K prediction matrices row-aligned to one ground truth."""

    label_space: LabelSpace
    truth: GroundTruth
    matrices: tuple[PredictionMatrix, ...]

    def __post_init__(self):
        object.__setattr__(self, "matrices", tuple(self.matrices))
        if not self.matrices:
            raise InputError("bundle needs at least one prediction matrix")
        L = len(self.label_space)
        if self.truth.n_labels != L:
            raise InputError("truth column count does not match label space")
        names = [m.model_name for m in self.matrices]
        if len(set(names)) != len(names):
            raise InputError("model names must be unique within a bundle")
        for m in self.matrices:
            if m.n_labels != L:
                raise InputError(f"{m.model_name}: column count does not match label space")
            if m.sample_ids != self.truth.sample_ids:
                raise InputError(f"{m.model_name}: rows not aligned to truth sample order")

    @property
    def model_names(self) -> tuple[str, ...]:
        return tuple(m.model_name for m in self.matrices)

    @property
    def n_samples(self) -> int:
        return self.truth.n_samples


# ---------------------------------------------------------------------------
# file ingestion


def _read_rows(path) -> list[list[str]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"{path}: cannot read file ({exc})") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: not valid UTF-8 ({exc})") from exc


def _parse_probability(text: str, path, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"{path}: row {line}: '{text}' is not a number ({column})") from None
    if not (0.0 <= value <= 1.0):
        raise InputError(f"{path}: row {line}: probability {text} outside [0, 1] ({column})")
    return value


def load_predictions(path, label_space: LabelSpace, model_name: str | None = None) -> PredictionMatrix:
    """Load one model's prediction file, validated against ``label_space``.

    The header must be exactly ``sample_id`` followed by the label names in
    label-space order. ``model_name`` defaults to the file stem.
    """
    rows = _read_rows(path)
    if not rows:
        raise InputError(f"{path}: empty file")
    expected = ["sample_id", *label_space.names]
    if rows[0] != expected:
        raise InputError(
            f"{path}: header mismatch: expected {','.join(expected)!r}, got {','.join(rows[0])!r}"
        )
    if len(rows) < 2:
        raise InputError(f"{path}: no data rows (header only)")

    name = model_name if model_name is not None else Path(path).stem
    n_labels = len(label_space)
    sample_ids: list[str] = []
    seen: set[str] = set()
    values = np.empty((len(rows) - 1, n_labels), dtype=np.float64)
    for i, row in enumerate(rows[1:]):
        line = i + 2  # 1-based file line, header is line 1
        if len(row) != n_labels + 1:
            raise InputError(f"{path}: row {line}: expected {n_labels + 1} columns, got {len(row)}")
        sid = row[0]
        if not sid:
            raise InputError(f"{path}: row {line}: empty sample_id")
        if sid in seen:
            raise InputError(f"{path}: row {line}: duplicate sample_id '{sid}'")
        seen.add(sid)
        sample_ids.append(sid)
        for j, text in enumerate(row[1:]):
            values[i, j] = _parse_probability(text, path, line, label_space.names[j])
    return PredictionMatrix(model_name=name, sample_ids=tuple(sample_ids), probabilities=values)


def predictions_label_space(path) -> LabelSpace:
    """Label space defined by a prediction file's header."""
    rows = _read_rows(path)
    if not rows:
        raise InputError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2 or header[0] != "sample_id":
        raise InputError(f"{path}: prediction header must start with 'sample_id' followed by labels")
    return LabelSpace(tuple(header[1:]))


def truth_label_space(path) -> LabelSpace:
    """Label space defined by a truth file's header (order is significant)."""
    rows = _read_rows(path)
    if not rows:
        raise InputError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 3 or header[0] != "sample_id" or header[1] != "patient_id":
        raise InputError(
            f"{path}: truth header must start with 'sample_id,patient_id' followed by labels"
        )
    return LabelSpace(tuple(header[2:]))


def load_truth(path, label_space: LabelSpace | None = None) -> GroundTruth:
    """Load a truth file. With ``label_space=None`` the header defines it."""
    if label_space is None:
        label_space = truth_label_space(path)
    rows = _read_rows(path)
    if not rows:
        raise InputError(f"{path}: empty file")
    expected = ["sample_id", "patient_id", *label_space.names]
    if rows[0] != expected:
        raise InputError(
            f"{path}: header mismatch: expected {','.join(expected)!r}, got {','.join(rows[0])!r}"
        )
    if len(rows) < 2:
        raise InputError(f"{path}: no data rows (header only)")

    n_labels = len(label_space)
    sample_ids: list[str] = []
    patient_ids: list[str] = []
    seen: set[str] = set()
    values = np.empty((len(rows) - 1, n_labels), dtype=np.int8)
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != n_labels + 2:
            raise InputError(f"{path}: row {line}: expected {n_labels + 2} columns, got {len(row)}")
        sid, pid = row[0], row[1]
        if not sid:
            raise InputError(f"{path}: row {line}: empty sample_id")
        if sid in seen:
            raise InputError(f"{path}: row {line}: duplicate sample_id '{sid}'")
        if not pid:
            raise InputError(f"{path}: row {line}: missing patient_id")
        seen.add(sid)
        sample_ids.append(sid)
        patient_ids.append(pid)
        for j, text in enumerate(row[2:]):
            try:
                value = float(text)
            except ValueError:
                raise InputError(
                    f"{path}: row {line}: '{text}' is not a number ({label_space.names[j]})"
                ) from None
            if value not in (0.0, 1.0):
                raise InputError(
                    f"{path}: row {line}: label value {text} is not binary ({label_space.names[j]})"
                )
            values[i, j] = int(value)
    return GroundTruth(
        sample_ids=tuple(sample_ids), patient_ids=tuple(patient_ids), labels=values
    )


def align(
    truth: GroundTruth,
    matrices: list[PredictionMatrix] | tuple[PredictionMatrix, ...],
    label_space: LabelSpace,
) -> ModelBundle:
    """Restrict truth and all matrices to their common sample ids.

    Row order follows the truth file restricted to the intersection. Samples
    present in some inputs but not all are dropped with a warning carrying the
    drop count. Aligning an already-aligned bundle's parts changes nothing.
    """
    matrices = tuple(matrices)
    if not matrices:
        raise InputError("align needs at least one prediction matrix")
    n_labels = len(label_space)
    for m in matrices:
        if m.n_labels != n_labels:
            raise InputError(
                f"{m.model_name}: {m.n_labels} label columns, expected {n_labels}"
            )
    if truth.n_labels != n_labels:
        raise InputError("truth column count does not match label space")

    common = set(truth.sample_ids)
    union = set(truth.sample_ids)
    for m in matrices:
        ids = set(m.sample_ids)
        common &= ids
        union |= ids
    if not common:
        raise InputError("alignment found no sample ids common to truth and all models")

    dropped = len(union) - len(common)
    if dropped:
        warnings.warn(
            f"alignment dropped {dropped} sample id(s) not shared by all inputs",
            stacklevel=2,
        )

    keep = np.array([i for i, sid in enumerate(truth.sample_ids) if sid in common])
    new_truth = truth.restrict(keep)
    order = new_truth.sample_ids
    aligned = []
    for m in matrices:
        index = {sid: i for i, sid in enumerate(m.sample_ids)}
        rows = np.array([index[sid] for sid in order])
        aligned.append(
            PredictionMatrix(
                model_name=m.model_name,
                sample_ids=order,
                probabilities=m.probabilities[rows],
            )
        )
    return ModelBundle(label_space=label_space, truth=new_truth, matrices=tuple(aligned))


def align_matrices(
    matrices: list[PredictionMatrix] | tuple[PredictionMatrix, ...],
    label_space: LabelSpace,
) -> tuple[PredictionMatrix, ...]:
    """Align prediction matrices to each other without ground truth.

    Rows are restricted to the common sample ids, ordered by the first
    matrix. Used by fusion commands when no truth file is supplied.
    """
    matrices = tuple(matrices)
    if not matrices:
        raise InputError("need at least one prediction matrix")
    n_labels = len(label_space)
    for m in matrices:
        if m.n_labels != n_labels:
            raise InputError(f"{m.model_name}: {m.n_labels} label columns, expected {n_labels}")
    common = set(matrices[0].sample_ids)
    union = set(matrices[0].sample_ids)
    for m in matrices[1:]:
        ids = set(m.sample_ids)
        common &= ids
        union |= ids
    if not common:
        raise InputError("alignment found no sample ids common to all models")
    dropped = len(union) - len(common)
    if dropped:
        warnings.warn(
            f"alignment dropped {dropped} sample id(s) not shared by all inputs",
            stacklevel=2,
        )
    order = tuple(sid for sid in matrices[0].sample_ids if sid in common)
    aligned = []
    for m in matrices:
        index = {sid: i for i, sid in enumerate(m.sample_ids)}
        rows = np.array([index[sid] for sid in order])
        aligned.append(
            PredictionMatrix(
                model_name=m.model_name, sample_ids=order, probabilities=m.probabilities[rows]
            )
        )
    return tuple(aligned)


# ---------------------------------------------------------------------------
# writers (repr-formatted floats round-trip exactly)


def write_predictions(matrix: PredictionMatrix, label_space: LabelSpace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", *label_space.names])
        for sid, row in zip(matrix.sample_ids, matrix.probabilities):
            writer.writerow([sid, *(repr(float(v)) for v in row)])


def write_truth(truth: GroundTruth, label_space: LabelSpace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "patient_id", *label_space.names])
        for sid, pid, row in zip(truth.sample_ids, truth.patient_ids, truth.labels):
            writer.writerow([sid, pid, *(str(int(v)) for v in row)])
