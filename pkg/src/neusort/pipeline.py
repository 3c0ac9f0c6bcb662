"""Per-channel streaming sorter and multi-channel fan-out."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .encoding import build_field, encode
from .model import (
    PROVISIONAL,
    Diagnostics,
    SorterConfig,
    SortedSpike,
    SpikeCandidate,
    check_config,
)
from .network import PerceptionLayer
from .preprocess import (
    ALIGN_MARGIN,
    Detector,
    StreamingFilter,
    design_bandpass,
    group_delay_samples,
    realign,
)


def channel_rng(seed: int, channel_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, channel_id])


class FrontEnd:
    """Filter, detect and align: raw samples in, aligned candidates out."""

    def __init__(self, cfg: SorterConfig, sample_rate_hz: float = 30000.0):
        self.cfg = cfg
        sos = design_bandpass(cfg.band_low_hz, cfg.band_high_hz, sample_rate_hz)
        self.filter = StreamingFilter(sos)
        # report timestamps against the raw trace, not the delayed filter output
        self.delay = group_delay_samples(sos, cfg.band_low_hz, cfg.band_high_hz, sample_rate_hz)
        self.detector = Detector(
            k=cfg.detect_k,
            window=max(int(round(cfg.detect_window_s * sample_rate_hz)), 1),
            lockout=cfg.n_samples,
            pre=cfg.align_index + ALIGN_MARGIN,
            post=cfg.n_samples - cfg.align_index + ALIGN_MARGIN,
        )
        self.flagged = 0

    def push(self, samples: np.ndarray) -> list[SpikeCandidate]:
        out = []
        for peak, w in self.detector.push(self.filter(samples)):
            c = realign(
                w,
                self.cfg.align_iterations,
                self.cfg.upsample_factor,
                self.cfg.n_samples,
                self.cfg.align_index,
                timestamp=max(peak - self.delay, 0),
                peak_hint=self.detector.pre,
            )
            self.flagged += c.flagged
            out.append(c)
        return out

    def finish(self) -> int:
        self.detector.finish()
        return self.detector.discarded


def extract_candidates(trace, cfg: SorterConfig) -> list[SpikeCandidate]:
    fe = FrontEnd(check_config(cfg), trace.sample_rate_hz)
    cands = fe.push(np.asarray(trace.samples, dtype=np.float64))
    fe.finish()
    return cands


class ChannelSorter:
    """The full single-channel sorter: filter, detect, align, encode, classify."""

    def __init__(self, cfg: SorterConfig, sample_rate_hz: float = 30000.0, channel_id: int = 0):
        self.cfg = check_config(cfg)
        self.sample_rate_hz = float(sample_rate_hz)
        self.channel_id = channel_id
        self.field = build_field(cfg)
        self.rng = channel_rng(cfg.seed, channel_id)
        self.layer = PerceptionLayer.from_config(cfg, rng=self.rng)
        self.diagnostics = Diagnostics()
        self.frontend = FrontEnd(cfg, self.sample_rate_hz)
        self._last_ts = -1

    def push_samples(self, samples) -> list[SortedSpike]:
        """Consume raw samples in stream order; return the spikes completed so far."""
        x = np.asarray(samples, dtype=np.float64).ravel()
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite samples rejected; sorter state unchanged")
        self.diagnostics.samples_seen += x.size
        cands = self.frontend.push(x)
        self.diagnostics.flagged_alignment = self.frontend.flagged
        return self._classify(cands)

    def finish(self) -> list[SortedSpike]:
        """Close the stream; windows cut off by the end are counted, not emitted."""
        self.diagnostics.discarded_partial = self.frontend.finish()
        return []

    def push_candidates(self, candidates) -> list[SortedSpike]:
        """Encode and classify pre-detected candidates, skipping filtering and detection."""
        cands = list(candidates)
        for i, c in enumerate(cands):
            if len(c.waveform) != self.cfg.n_samples:
                raise ValueError(
                    f"candidate {i} has {len(c.waveform)} samples, expected {self.cfg.n_samples}"
                )
        return self._classify(cands)

    def _classify(self, cands: list[SpikeCandidate]) -> list[SortedSpike]:
        out = []
        d = self.diagnostics
        for c in cands:
            train = encode(c, self.field, self.rng, self.cfg.deterministic)
            unit, z = self.layer.step(train)
            ts = int(c.timestamp_samples)
            # alignment can pull a timestamp back by a sample; keep per-channel order strict
            ts = max(ts, self._last_ts + 1)
            self._last_ts = ts
            d.candidates += 1
            d.events_total += int(train.sum())
            if unit == PROVISIONAL:
                d.provisional += 1
            else:
                d.firings += 1
                d.unit_counts[unit] = d.unit_counts.get(unit, 0) + 1
            out.append(SortedSpike(self.channel_id, ts, unit, z))
        return out

    def valid_units(self) -> list[int]:
        return self.layer.valid_units(self.cfg.min_fires)

    def state_dict(self) -> dict:
        """Learned state for later inspection (weights, fire counts, rng)."""
        return {"channel_id": self.channel_id, "config": self.cfg.to_dict(),
                "layer": self.layer.state_dict()}

    def summary(self) -> dict:
        d = self.diagnostics
        return {
            "channel_id": self.channel_id,
            "samples": d.samples_seen,
            "candidates": d.candidates,
            "valid_units": self.valid_units(),
            "n_valid_units": len(self.valid_units()),
            "provisional": d.provisional,
            "provisional_fraction": d.provisional / d.candidates if d.candidates else 0.0,
            "events_per_input": d.events_per_input,
            "discarded_partial": d.discarded_partial,
            "flagged_alignment": d.flagged_alignment,
            "unit_counts": {str(k): v for k, v in sorted(d.unit_counts.items())},
        }


class MultiChannelSorter:
    """Independent ChannelSorters keyed by channel id."""

    def __init__(self, cfg: SorterConfig, sample_rate_hz: float, channel_ids, workers: int = 1):
        self.channels = {c: ChannelSorter(cfg, sample_rate_hz, c) for c in channel_ids}
        self.workers = workers

    def push(self, blocks: dict) -> dict[int, list[SortedSpike]]:
        """Push ``{channel_id: samples}``; returns per-channel outputs in order."""
        if self.workers <= 1 or len(blocks) <= 1:
            return {c: self.channels[c].push_samples(x) for c, x in blocks.items()}
        with ThreadPoolExecutor(self.workers) as pool:
            futures = {c: pool.submit(self.channels[c].push_samples, x) for c, x in blocks.items()}
            return {c: f.result() for c, f in futures.items()}

    def finish(self) -> None:
        for s in self.channels.values():
            s.finish()


def sort_trace(trace, cfg: SorterConfig, chunk: int | None = None) -> tuple[list[SortedSpike], ChannelSorter]:
    sorter = ChannelSorter(cfg, trace.sample_rate_hz, trace.channel_id)
    x = np.asarray(trace.samples)
    out = []
    step = chunk or max(len(x), 1)
    for i in range(0, len(x), step):
        out.extend(sorter.push_samples(x[i : i + step]))
    sorter.finish()
    return out, sorter


@dataclass
class BenchResult:
    n_spikes: int
    seconds: float
    latency_mean_s: float
    latency_p50_s: float
    latency_p99_s: float


def bench_throughput(sorter: ChannelSorter, n_spikes: int, seed: int = 0) -> BenchResult:
    """Time ``n_spikes`` synthetic candidates through ``push_candidates``."""
    if n_spikes < 100:
        raise ValueError("bench_throughput needs n_spikes >= 100")
    from .synth import default_templates

    rng = np.random.default_rng(seed)
    templates = default_templates(sorter.cfg.n_samples, sorter.cfg.align_index)
    scale = 100.0
    labels = rng.integers(len(templates), size=n_spikes)
    waves = np.stack([templates[k].shape for k in labels]) * scale
    waves += rng.normal(0.0, 5.0, waves.shape)
    cands = [
        SpikeCandidate(w, sorter.cfg.align_index, 100 * i) for i, w in enumerate(waves)
    ]
    lat = np.empty(n_spikes)
    t_start = time.perf_counter()
    for i, c in enumerate(cands):
        t0 = time.perf_counter()
        sorter.push_candidates([c])
        lat[i] = time.perf_counter() - t0
    total = time.perf_counter() - t_start
    return BenchResult(
        n_spikes, total, float(lat.mean()), float(np.median(lat)), float(np.quantile(lat, 0.99))
    )


def estimate_power(avg_events_per_input: float, inputs_per_second: float, channels: int,
                   alpha_joules: float) -> float:
    """Power in watts: events per input x input rate x channels x energy per event."""
    for name, v in [("avg_events_per_input", avg_events_per_input),
                    ("inputs_per_second", inputs_per_second), ("channels", channels),
                    ("alpha_joules", alpha_joules)]:
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    return avg_events_per_input * inputs_per_second * channels * alpha_joules
