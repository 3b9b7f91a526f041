"""Patient-grouped train/validation/test splitting with zero leakage.

Patients are shuffled with the seed, then assigned greedily: all of a
patient's images go to the train split until its cumulative image count first
reaches the train target, then the same for validation, and the remainder is
test. Grouping by patient guarantees no patient appears in two splits; the
greedy fill overshoots each target by at most one patient's images.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import InputError

SPLIT_NAMES = ("train", "validation", "test")


@dataclass(frozen=True)
class SplitConfig:
    """Target image fractions (train, validation, test) and shuffle seed."""

    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0

    def __post_init__(self):
        fractions = tuple(float(f) for f in self.fractions)
        object.__setattr__(self, "fractions", fractions)
        if len(fractions) != len(SPLIT_NAMES):
            raise InputError("fractions must have exactly three entries")
        if any(f <= 0 for f in fractions):
            raise InputError("fractions must be positive")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise InputError("fractions must sum to 1")


@dataclass(frozen=True)
class SplitAssignment:
    """sample_id -> split name, plus per-split image and patient counts."""

    assignment: dict[str, str]
    image_counts: dict[str, int]
    patient_counts: dict[str, int]


def grouped_split(samples: Mapping[str, str], config: SplitConfig) -> SplitAssignment:
    """Assign every sample to a split, keeping each patient's samples together.

    ``samples`` maps sample_id -> patient_id in a significant order (file
    order); the seeded shuffle of patients is the only randomness. Empty
    splits (possible when one patient owns nearly everything) are reported
    with a warning, not an error.
    """
    if not samples:
        raise InputError("grouped split needs at least one sample")

    groups: dict[str, list[str]] = {}
    for sid, pid in samples.items():
        if not pid:
            raise InputError(f"sample '{sid}' has no patient_id")
        groups.setdefault(pid, []).append(sid)
    patients = list(groups)
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(patients))

    total = len(samples)
    # first-crossing greedy: a patient that crosses the boundary stays in the
    # earlier split (small epsilon so exact-integer targets count as reached)
    targets = [config.fractions[0] * total, config.fractions[1] * total]
    split_of_patient: dict[str, str] = {}
    split_index = 0
    filled = 0
    for idx in order:
        pid = patients[idx]
        split_of_patient[pid] = SPLIT_NAMES[split_index]
        filled += len(groups[pid])
        if split_index < 2 and filled >= targets[split_index] - 1e-9:
            split_index += 1
            filled = 0

    assignment = {sid: split_of_patient[pid] for sid, pid in samples.items()}
    image_counts = {name: 0 for name in SPLIT_NAMES}
    for split in assignment.values():
        image_counts[split] += 1
    patient_counts = {name: 0 for name in SPLIT_NAMES}
    for split in split_of_patient.values():
        patient_counts[split] += 1

    empty = [name for name in SPLIT_NAMES if image_counts[name] == 0]
    if empty:
        warnings.warn(
            f"split(s) {', '.join(empty)} are empty; patient groups are too "
            "coarse for the requested fractions",
            stacklevel=2,
        )
    return SplitAssignment(
        assignment=assignment, image_counts=image_counts, patient_counts=patient_counts
    )


def write_split_assignment(result: SplitAssignment, path) -> None:
    """``sample_id,split`` rows followed by a commented summary block."""
    totals_images = sum(result.image_counts.values())
    totals_patients = sum(result.patient_counts.values())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "split"])
        for sid, split in result.assignment.items():
            writer.writerow([sid, split])
        fh.write("# ,Total,Train,Validation,Test\n")
        fh.write(
            "# Images,%d,%d,%d,%d\n"
            % (totals_images, *(result.image_counts[n] for n in SPLIT_NAMES))
        )
        fh.write(
            "# Unique Patients,%d,%d,%d,%d\n"
            % (totals_patients, *(result.patient_counts[n] for n in SPLIT_NAMES))
        )


def load_split_assignment(path) -> dict[str, str]:
    """Read back an assignment file (summary comments ignored)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as exc:
        raise InputError(f"{path}: cannot read split file ({exc})") from exc
    if not rows or rows[0] != ["sample_id", "split"]:
        raise InputError(f"{path}: expected header 'sample_id,split'")
    assignment: dict[str, str] = {}
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != 2 or row[1] not in SPLIT_NAMES:
            raise InputError(f"{path}: row {ln}: malformed assignment row")
        if row[0] in assignment:
            raise InputError(f"{path}: row {ln}: duplicate sample_id '{row[0]}'")
        assignment[row[0]] = row[1]
    return assignment
