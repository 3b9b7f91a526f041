import numpy as np
import pytest

from modelfuse.errors import ComputationError, InputError
from modelfuse.lr_tools import (
    ClrSchedule,
    LrLog,
    clr_at,
    generate_sweep,
    load_lr_log,
    smooth_losses,
    suggest_max_lr,
    write_lr_result,
    write_sweep,
)


def planted_log(n=2000, lo=1e-7, hi=1e-1, rise=0.4):
    """Loss flat at 1.0 below 1e-4, falling to 0.2 at 1e-2, rising after."""
    lrs = generate_sweep(lo, hi, n)
    log_lr = np.log10(lrs)
    losses = np.where(
        log_lr <= -4,
        1.0,
        np.where(log_lr <= -2, 1.0 - 0.4 * (log_lr + 4), 0.2 + rise * (log_lr + 2)),
    )
    return LrLog(tuple((i, lr, loss) for i, (lr, loss) in enumerate(zip(lrs, losses))))


class TestGenerateSweep:
    def test_paper_range_100_iterations(self):
        rates = generate_sweep(1e-7, 1e-1, 100)
        assert len(rates) == 100
        assert rates[0] == 1e-7
        assert rates[-1] == 1e-1
        assert (np.diff(rates) > 0).all()

    def test_log_midpoint(self):
        rates = generate_sweep(1e-3, 1e-1, 3)
        assert rates == pytest.approx([1e-3, 1e-2, 1e-1], rel=1e-12)

    def test_constant_ratio(self):
        rates = generate_sweep(3e-6, 0.25, 57)
        ratios = rates[1:] / rates[:-1]
        assert ratios == pytest.approx(ratios[0], rel=1e-9)

    def test_validation(self):
        with pytest.raises(InputError):
            generate_sweep(1e-1, 1e-7, 100)
        with pytest.raises(InputError):
            generate_sweep(0.0, 1e-1, 100)
        with pytest.raises(InputError):
            generate_sweep(1e-7, 1e-1, 1)


class TestSmoothLosses:
    def test_beta_zero_is_identity(self, rng):
        losses = rng.random(50)
        assert np.array_equal(smooth_losses(losses, 0.0), losses)

    def test_bias_correction_first_entry(self):
        # corrected EMA starts at the first raw value regardless of beta
        smoothed = smooth_losses([3.0, 3.0, 3.0], 0.98)
        assert smoothed == pytest.approx([3.0, 3.0, 3.0], rel=1e-12)

    def test_invalid_beta(self):
        with pytest.raises(InputError):
            smooth_losses([1.0, 2.0], 1.0)
        with pytest.raises(InputError):
            smooth_losses([1.0, 2.0], -0.1)


class TestSuggestMaxLr:
    def test_planted_descent_midpoint(self):
        result = suggest_max_lr(planted_log())
        assert 10 ** -3.1 <= result.suggested_max_lr <= 10 ** -2.9
        assert result.slope < 0
        assert result.window_start < result.window_end

    def test_monotonically_rising_loss_errors(self):
        lrs = generate_sweep(1e-6, 1e-1, 60)
        log = LrLog(tuple((i, lr, 0.5 + 0.01 * i) for i, lr in enumerate(lrs)))
        with pytest.raises(ComputationError, match="no descending portion"):
            suggest_max_lr(log)

    def test_suggestion_within_swept_range(self, rng):
        for _ in range(20):
            n = int(rng.integers(30, 200))
            lrs = generate_sweep(1e-6, 1e-1, n)
            losses = 1.0 + np.cumsum(rng.normal(-0.01, 0.05, n))
            log = LrLog(tuple((i, lr, loss) for i, (lr, loss) in enumerate(zip(lrs, losses))))
            try:
                result = suggest_max_lr(log)
            except (ComputationError, InputError):
                continue
            assert lrs[0] <= result.suggested_max_lr <= lrs[-1]

    def test_positive_rescaling_keeps_window(self):
        log = planted_log(n=300)
        base = suggest_max_lr(log)
        scaled = LrLog(tuple((s, lr, 7.25 * loss) for s, lr, loss in log.entries))
        rescaled = suggest_max_lr(scaled)
        assert (base.window_start, base.window_end) == (rescaled.window_start, rescaled.window_end)
        assert base.suggested_max_lr == rescaled.suggested_max_lr

    def test_divergence_tail_is_ignored(self):
        # loss explodes after the descent: windows there must not be selected
        lrs = generate_sweep(1e-6, 1e-1, 200)
        log_lr = np.log10(lrs)
        losses = np.where(log_lr <= -3, 1.0 - 0.3 * (log_lr + 6), np.nan)
        descent_end = 1.0 - 0.3 * 3.0
        rising = np.isnan(losses)
        losses[rising] = descent_end + 80.0 * (log_lr[rising] + 3)
        log = LrLog(tuple((i, lr, loss) for i, (lr, loss) in enumerate(zip(lrs, losses))))
        result = suggest_max_lr(log, smoothing_beta=0.0)
        assert result.suggested_max_lr <= 1e-3

    def test_non_finite_tail_truncated_with_warning(self):
        log = planted_log(n=120)
        entries = list(log.entries)
        for i in range(100, 120):
            step, lr, _ = entries[i]
            entries[i] = (step, lr, float("inf"))
        with pytest.warns(UserWarning, match="truncated"):
            result = suggest_max_lr(LrLog(tuple(entries)), smoothing_beta=0.9)
        assert result.suggested_max_lr > 0

    def test_too_few_entries(self):
        lrs = generate_sweep(1e-5, 1e-1, 123)[:9]
        log = LrLog(tuple((i, lr, 1.0) for i, lr in enumerate(lrs)))
        with pytest.raises(InputError, match="at least 10"):
            suggest_max_lr(log)


class TestClr:
    def test_cycle_anchors(self):
        schedule = ClrSchedule(min_lr=1e-4, max_lr=1e-2, step_size=500)
        assert clr_at(schedule, 0) == 1e-4
        assert clr_at(schedule, 500) == 1e-2
        assert clr_at(schedule, 1000) == 1e-4

    def test_linear_between_anchors(self):
        schedule = ClrSchedule(min_lr=0.0001, max_lr=0.0009, step_size=4)
        assert clr_at(schedule, 1) == pytest.approx(0.0003, rel=1e-12)
        assert clr_at(schedule, 6) == pytest.approx(0.0005, rel=1e-12)

    def test_periodic_and_bounded(self, rng):
        for _ in range(50):
            min_lr = float(10 ** rng.uniform(-7, -3))
            max_lr = min_lr * float(10 ** rng.uniform(0, 3))
            step_size = int(rng.integers(1, 2000))
            schedule = ClrSchedule(min_lr=min_lr, max_lr=max_lr, step_size=step_size)
            for step in rng.integers(0, 10 * step_size, 20):
                lr = clr_at(schedule, int(step))
                assert min_lr <= lr <= max_lr
                assert lr == clr_at(schedule, int(step) + 2 * step_size)

    def test_negative_step_rejected(self):
        with pytest.raises(InputError):
            clr_at(ClrSchedule(1e-4, 1e-2, 10), -1)

    def test_schedule_validation(self):
        with pytest.raises(InputError):
            ClrSchedule(min_lr=1e-2, max_lr=1e-4, step_size=10)
        with pytest.raises(InputError):
            ClrSchedule(min_lr=1e-4, max_lr=1e-2, step_size=0)


class TestLrFiles:
    def test_log_roundtrip(self, tmp_path):
        log = planted_log(n=50)
        path = tmp_path / "log.csv"
        with open(path, "w") as fh:
            fh.write("step,lr,loss\n")
            for step, lr, loss in log.entries:
                fh.write(f"{step},{lr!r},{loss!r}\n")
        loaded = load_lr_log(path)
        assert loaded.entries == log.entries

    def test_log_validation(self, tmp_path):
        path = tmp_path / "log.csv"
        path.write_text("step,lr,loss\n0,0.001,1.0\n0,0.002,0.9\n")
        with pytest.raises(InputError, match="strictly increasing"):
            load_lr_log(path)
        path.write_text("wrong,header\n")
        with pytest.raises(InputError, match="header"):
            load_lr_log(path)
        path.write_text("step,lr,loss\n0,-0.1,1.0\n")
        with pytest.raises(InputError, match="positive"):
            load_lr_log(path)

    def test_sweep_file_one_per_line(self, tmp_path):
        rates = generate_sweep(1e-5, 1e-2, 12)
        path = tmp_path / "sweep.txt"
        write_sweep(rates, path)
        parsed = [float(line) for line in path.read_text().splitlines()]
        assert parsed == rates.tolist()

    def test_result_file(self, tmp_path):
        result = suggest_max_lr(planted_log(n=200))
        path = tmp_path / "result.txt"
        write_lr_result(result, path)
        parsed = dict(line.split(" ", 1) for line in path.read_text().splitlines())
        assert float(parsed["suggested_max_lr"]) == result.suggested_max_lr
        assert int(parsed["window_start"]) == result.window_start
        assert float(parsed["slope"]) == result.slope
