"""Learning-rate range-test analysis and the triangular cyclical schedule.

The sweep is log-spaced between its boundaries. Given a (step, lr, loss) log
from a short sweep run, ``suggest_max_lr`` smooths the losses with a
bias-corrected exponential moving average, estimates slopes in
(log10 lr, smoothed loss) space over a sliding window, and suggests the
geometric midpoint of the steepest descending portion of the curve as the
upper bound for cyclical training.

This module only analyzes logs produced elsewhere; it never trains anything.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ComputationError, InputError


@dataclass(frozen=True)
class LrLog:
    """Ordered (step, learning_rate, loss) records from a sweep run."""

    entries: tuple[tuple[int, float, float], ...]

    def __post_init__(self):
        entries = tuple((int(s), float(lr), float(loss)) for s, lr, loss in self.entries)
        object.__setattr__(self, "entries", entries)
        steps = [s for s, _, _ in entries]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise InputError("lr log steps must be strictly increasing")
        if any(lr <= 0 for _, lr, _ in entries):
            raise InputError("lr log learning rates must be positive")

    @property
    def steps(self) -> np.ndarray:
        return np.array([s for s, _, _ in self.entries])

    @property
    def learning_rates(self) -> np.ndarray:
        return np.array([lr for _, lr, _ in self.entries])

    @property
    def losses(self) -> np.ndarray:
        return np.array([loss for _, _, loss in self.entries])


@dataclass(frozen=True)
class LrRangeResult:
    """Suggested max learning rate and the descent window it came from."""

    suggested_max_lr: float
    window_start: int
    window_end: int
    slope: float

    def __post_init__(self):
        if self.window_start >= self.window_end:
            raise InputError("window_start must precede window_end")
        if not self.suggested_max_lr > 0:
            raise InputError("suggested_max_lr must be positive")
        if not self.slope < 0:
            raise InputError("descent slope must be negative")


@dataclass(frozen=True)
class ClrSchedule:
    """Triangular cyclical schedule between min_lr and max_lr."""

    min_lr: float
    max_lr: float
    step_size: int

    def __post_init__(self):
        if not 0 < self.min_lr <= self.max_lr:
            raise InputError("need 0 < min_lr <= max_lr")
        if self.step_size < 1:
            raise InputError("step_size must be a positive integer")


def generate_sweep(min_lr: float, max_lr: float, iterations: int) -> np.ndarray:
    """Log-spaced learning rates from min_lr to max_lr, inclusive."""
    if not 0 < min_lr < max_lr:
        raise InputError("need 0 < min_lr < max_lr")
    if iterations < 2:
        raise InputError("sweep needs at least 2 iterations")
    return np.geomspace(min_lr, max_lr, num=iterations)


def smooth_losses(losses, beta: float) -> np.ndarray:
    """Bias-corrected exponential moving average; beta=0 returns the input."""
    if not 0.0 <= beta < 1.0:
        raise InputError("smoothing beta must be in [0, 1)")
    losses = np.asarray(losses, dtype=np.float64)
    if beta == 0.0:
        return losses.copy()
    out = np.empty_like(losses)
    acc = 0.0
    for i, value in enumerate(losses):
        acc = beta * acc + (1.0 - beta) * value
        out[i] = acc / (1.0 - beta ** (i + 1))
    return out


def _window_slopes(log_lr: np.ndarray, smoothed: np.ndarray, window: int) -> np.ndarray:
    """Least-squares slope of smoothed loss vs log10 lr per sliding window."""
    n = len(log_lr)
    slopes = np.empty(n - window + 1)
    for i in range(len(slopes)):
        x = log_lr[i : i + window]
        y = smoothed[i : i + window]
        dx = x - x.mean()
        slopes[i] = (dx * (y - y.mean())).sum() / (dx * dx).sum()
    return slopes


def suggest_max_lr(
    log: LrLog,
    smoothing_beta: float = 0.98,
    slope_window: int = 5,
    divergence_factor: float = 4.0,
) -> LrRangeResult:
    """Suggest the CLR upper bound from a range-test log.

    Losses are EMA-smoothed (bias corrected). Entries past the point where
    the smoothed loss, after its global minimum, exceeds
    ``divergence_factor`` times that minimum are excluded. Sliding-window
    slopes locate the steepest point; the suggestion is the geometric mean of
    the endpoints of the maximal contiguous descending run around it, i.e.
    the log-space midpoint of the steepest descending portion of the curve.

    Raises when no descending portion exists (e.g. monotonically rising loss).
    """
    lrs = log.learning_rates
    losses = log.losses
    steps = log.steps
    finite = np.isfinite(losses)
    if not finite.all():
        cut = int(np.argmin(finite))  # first False
        warnings.warn(
            f"lr log truncated at step {steps[cut]}: non-finite loss", stacklevel=2
        )
        lrs, losses, steps = lrs[:cut], losses[:cut], steps[:cut]
    if len(lrs) < 10:
        raise InputError("lr suggestion needs at least 10 usable log entries")
    if (np.diff(lrs) <= 0).any():
        raise InputError("lr suggestion expects strictly increasing learning rates")
    if slope_window < 2:
        raise InputError("slope window must span at least 2 entries")
    if slope_window > len(lrs):
        raise InputError("slope window larger than the usable log")
    if divergence_factor <= 1.0:
        raise InputError("divergence factor must exceed 1")

    smoothed = smooth_losses(losses, smoothing_beta)

    # drop the post-divergence tail: after the global minimum, stop at the
    # first smoothed loss above divergence_factor * min (only meaningful for
    # positive losses)
    i_min = int(np.argmin(smoothed))
    keep = len(smoothed)
    if smoothed[i_min] > 0:
        past_min = np.flatnonzero(smoothed[i_min + 1 :] > divergence_factor * smoothed[i_min])
        if len(past_min):
            keep = i_min + 1 + int(past_min[0])
    if keep < slope_window:
        raise ComputationError("lr curve diverges too early to fit a slope window")

    log_lr = np.log10(lrs[:keep])
    slopes = _window_slopes(log_lr, smoothed[:keep], slope_window)
    steepest = int(np.argmin(slopes))
    if not slopes[steepest] < 0:
        raise ComputationError("no descending portion found in the lr-loss curve")

    lo = steepest
    while lo > 0 and slopes[lo - 1] < 0:
        lo -= 1
    hi = steepest
    while hi < len(slopes) - 1 and slopes[hi + 1] < 0:
        hi += 1
    first = lo
    last = hi + slope_window - 1
    suggested = float(10.0 ** (0.5 * (log_lr[first] + log_lr[last])))
    return LrRangeResult(
        suggested_max_lr=suggested,
        window_start=int(steps[first]),
        window_end=int(steps[last]),
        slope=float(slopes[steepest]),
    )


def clr_at(schedule: ClrSchedule, step: int) -> float:
    """Triangular wave: min_lr at steps 0, 2*step_size, ...; max_lr at step_size."""
    if step < 0:
        raise InputError("step must be >= 0")
    phase = (step / schedule.step_size) % 2.0
    t = 1.0 - abs(phase - 1.0)
    lr = schedule.min_lr * (1.0 - t) + schedule.max_lr * t
    return float(min(max(lr, schedule.min_lr), schedule.max_lr))


# ---------------------------------------------------------------------------
# files


def write_sweep(rates, path) -> None:
    """One learning rate per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lr in rates:
            fh.write(f"{repr(float(lr))}\n")


def load_lr_log(path) -> LrLog:
    """Read a ``step,lr,loss`` log file (header required)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"{path}: cannot read lr log ({exc})") from exc
    if not rows:
        raise InputError(f"{path}: empty file")
    if rows[0] != ["step", "lr", "loss"]:
        raise InputError(f"{path}: expected header 'step,lr,loss'")
    entries = []
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise InputError(f"{path}: row {ln}: expected 3 columns")
        try:
            entries.append((int(row[0]), float(row[1]), float(row[2])))
        except ValueError:
            raise InputError(f"{path}: row {ln}: malformed step/lr/loss") from None
    if not entries:
        raise InputError(f"{path}: no data rows")
    return LrLog(entries=tuple(entries))


def write_lr_result(result: LrRangeResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"suggested_max_lr {repr(result.suggested_max_lr)}\n")
        fh.write(f"window_start {result.window_start}\n")
        fh.write(f"window_end {result.window_end}\n")
        fh.write(f"slope {repr(result.slope)}\n")
