"""Band-pass filtering, NEO spike detection and spline peak re-alignment."""

from __future__ import annotations

import numpy as np
from scipy import signal
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .model import ConfigError, SorterConfig, SpikeCandidate

FILTER_ORDER = 3
# extra samples kept on each side of a detection window so the spline can shift it
ALIGN_MARGIN = 8
SCAN_BLOCK = 4096


def design_bandpass(low_hz: float, high_hz: float, sample_rate_hz: float) -> np.ndarray:
    """Third-order Butterworth band-pass as second-order sections (bilinear transform)."""
    if not 0 < low_hz < high_hz < sample_rate_hz / 2:
        raise ConfigError(
            f"invalid passband [{low_hz}, {high_hz}] Hz for sample rate {sample_rate_hz} Hz"
        )
    return signal.butter(
        FILTER_ORDER, [low_hz, high_hz], btype="bandpass", fs=sample_rate_hz, output="sos"
    )


def group_delay_samples(sos: np.ndarray, low_hz: float, high_hz: float,
                        sample_rate_hz: float) -> int:
    """Filter group delay at the geometric band centre, rounded to whole samples.

    Detected peaks sit this far behind the corresponding peak in the raw trace.
    """
    b, a = signal.sos2tf(sos)
    _, gd = signal.group_delay((b, a), w=[np.sqrt(low_hz * high_hz)], fs=sample_rate_hz)
    return int(round(float(gd[0])))


class StreamingFilter:
    """Causal SOS filter that keeps its delay line between calls."""

    def __init__(self, sos: np.ndarray):
        self.sos = sos
        self.zi = np.zeros((sos.shape[0], 2))

    def __call__(self, x) -> np.ndarray:
        y, self.zi = signal.sosfilt(self.sos, np.asarray(x, dtype=np.float64), zi=self.zi)
        return y


def neo(s_prev: float, s_cur: float, s_next: float) -> float:
    return s_cur * s_cur - s_prev * s_next


def neo_trace(s: np.ndarray) -> np.ndarray:
    """NEO for the interior points of ``s`` (length ``len(s) - 2``)."""
    s = np.asarray(s, dtype=np.float64)
    return s[1:-1] * s[1:-1] - s[:-2] * s[2:]


class Detector:
    """Streaming NEO detector.

    A trigger fires at sample ``t`` when ``psi(t)`` exceeds ``k`` times the mean
    of psi over the trailing ``window`` samples. The peak is the extremum of
    ``|S|`` within the ``lockout`` samples starting at ``t``; no trigger is
    accepted until ``lockout`` samples after that peak. Emitted windows span
    ``pre`` samples before and ``post`` samples from the peak.
    """

    def __init__(self, k: float, window: int, lockout: int, pre: int, post: int):
        if window < 1:
            raise ConfigError("detector window must be >= 1 sample")
        self.k = k
        self.window = window
        self.lockout = lockout
        self.pre = pre
        self.post = post
        # the running mean is only defined once a full window of psi exists
        self.warmup = window
        self.discarded = 0
        self._n = 0
        self._buf = np.zeros(0)
        self._buf_start = 0
        # _cs[s - _cs_start] = sum of psi(1 .. s-1)
        self._cs = np.zeros(2)
        self._cs_start = 0
        self._scan_pos = 1
        self._next_allowed = 0
        self._trigger: int | None = None
        self._peaks: list[int] = []

    def _s(self, a: int, b: int) -> np.ndarray:
        return self._buf[a - self._buf_start : b - self._buf_start]

    def push(self, filtered) -> list[tuple[int, np.ndarray]]:
        """Feed filtered samples; return ``(peak_sample, window)`` pairs now complete."""
        x = np.asarray(filtered, dtype=np.float64)
        if x.size:
            n_old = self._n
            self._buf = np.concatenate([self._buf, x])
            self._n += x.size
            # psi(s) needs s+1 < n, so it is now known for s < n - 1
            s0, s1 = max(n_old - 1, 1), self._n - 1
            if s1 > s0:
                psi = neo_trace(self._s(s0 - 1, s1 + 1))
                cs = np.cumsum(np.concatenate([self._cs[-1:], psi]))
                self._cs = np.concatenate([self._cs, cs[1:]])
        self._advance()
        out = self._emit()
        self._trim()
        return out

    def _advance(self) -> None:
        end = self._n - 1
        while True:
            if self._trigger is not None:
                t = self._trigger
                if self._n < t + self.lockout:
                    return
                peak = t + int(np.argmax(np.abs(self._s(t, t + self.lockout))))
                self._peaks.append(peak)
                self._next_allowed = peak + self.lockout
                self._trigger = None
            start = max(self._scan_pos, self._next_allowed, 1)
            self._scan_pos = start
            if start >= end:
                return
            t = self._first_hit(start, end)
            if t is None:
                self._scan_pos = end
                return
            self._trigger = t
            self._scan_pos = t + self.lockout

    def _first_hit(self, start: int, end: int) -> int | None:
        for a in range(start, end, SCAN_BLOCK):
            s = np.arange(a, min(a + SCAN_BLOCK, end))
            lo = np.maximum(s - self.window, 1)
            count = s - lo
            cs, off = self._cs, self._cs_start
            psi = cs[s + 1 - off] - cs[s - off]
            with np.errstate(invalid="ignore", divide="ignore"):
                mean = (cs[s - off] - cs[lo - off]) / count
            hit = np.flatnonzero((count >= self.warmup) & (mean > 0) & (psi > self.k * mean))
            if hit.size:
                return int(s[hit[0]])
        return None

    def _emit(self) -> list[tuple[int, np.ndarray]]:
        out = []
        while self._peaks and self._n >= self._peaks[0] + self.post:
            p = self._peaks.pop(0)
            if p - self.pre < self._buf_start:
                self.discarded += 1
                continue
            out.append((p, self._s(p - self.pre, p + self.post).copy()))
        return out

    def _trim(self) -> None:
        # a trigger found later can still sit at the scan position and need ``pre`` samples
        keep = min(self._n - 2, self._scan_pos - self.pre - 1)
        if self._trigger is not None:
            keep = min(keep, self._trigger - self.pre)
        if self._peaks:
            keep = min(keep, self._peaks[0] - self.pre)
        keep = max(keep, 0)
        if keep - self._buf_start > 65536:
            self._buf = self._buf[keep - self._buf_start :]
            self._buf_start = keep
        cs_keep = self._scan_pos - self.window - 2
        if cs_keep - self._cs_start > 65536:
            self._cs = self._cs[cs_keep - self._cs_start :]
            self._cs_start = cs_keep

    def finish(self) -> None:
        """End of stream: windows still waiting for samples are dropped and counted."""
        self.discarded += len(self._peaks) + (self._trigger is not None)
        self._peaks.clear()
        self._trigger = None


def _refine_peak(spline: CubicSpline, t0: float, sign: float, iterations: int, factor: int,
                 lo: float, hi: float) -> float:
    """Grid-refine the extremum of ``sign * spline`` starting from ``t0``.

    Each round evaluates ``factor`` points per current step on either side of the
    estimate and moves to the best one; the step then shrinks by ``factor``. The
    result is polished to the root of the derivative inside the last bracket.
    """
    t, h = float(t0), 1.0
    for _ in range(iterations):
        grid = np.clip(t + h * np.arange(-factor, factor + 1) / factor, lo, hi)
        t = float(grid[np.argmax(sign * spline(grid))])
        h /= factor
    a, b = max(t - h * factor, lo), min(t + h * factor, hi)
    d = spline.derivative()
    da, db = d(a), d(b)
    if a < b and np.sign(da) != np.sign(db) and da != 0 and db != 0:
        t = brentq(d, a, b, xtol=1e-13)
    return t


def realign(window, iterations: int = 5, upsample_factor: int = 4, n: int = 64,
            align_index: int = 20, timestamp: int = 0, peak_hint: int | None = None,
            deadband: float = 0.05) -> SpikeCandidate:
    """Re-centre ``window`` on its spline-interpolated extremum.

    ``timestamp`` is the source-trace sample of ``window[peak_hint]``; the
    returned candidate has exactly ``n`` points with the extremum at
    ``align_index`` and its timestamp moved by the (rounded) shift. Sub-sample
    shifts smaller than ``deadband`` are not applied.
    """
    w = np.asarray(window, dtype=np.float64)
    if w.size < n:
        raise ValueError(f"window has {w.size} samples, need at least {n}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not np.all(np.isfinite(w)):
        raise ValueError("window contains non-finite values")
    x = np.arange(w.size, dtype=np.float64)
    if peak_hint is None:
        peak_hint = int(np.argmax(np.abs(w)))
    sign = 1.0 if w[peak_hint] >= 0 else -1.0
    spline = CubicSpline(x, w)
    t = _refine_peak(spline, peak_hint, sign, iterations, upsample_factor, 0.0, w.size - 1.0)
    if abs(t - round(t)) < deadband:
        t = float(round(t))
    flagged = False
    first = t - align_index
    if first < 0 or first + n - 1 > w.size - 1:
        flagged = True
        first = min(max(first, 0.0), w.size - n)
    grid = first + np.arange(n)
    if float(first).is_integer():
        out = w[int(first) : int(first) + n].copy()
    else:
        out = spline(grid)
    return SpikeCandidate(
        waveform=out,
        peak_index=align_index,
        timestamp_samples=max(int(timestamp + round(first + align_index - peak_hint)), 0),
        flagged=flagged,
    )
