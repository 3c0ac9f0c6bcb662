"""Synthetic and hybrid extracellular recordings with exact ground truth."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .model import GroundTruthEvent, RawTrace, SpikeCandidate

HYBRID_NOISE_LEVELS = (0.05, 0.1, 0.2, 0.4)

# (amplitude, centre offset, width) of each Gaussian lobe, in samples relative to the peak
_TEMPLATE_LOBES = {
    1: [(-1.0, 0.0, 3.49), (0.99, 11.54, 4.11), (-0.98, 32.0, 6.16)],
    2: [(-1.0, 0.0, 3.49), (0.43, 11.54, 4.11), (-0.42, 32.0, 6.16)],
    3: [(-1.0, 0.0, 2.13), (0.27, 21.78, 9.51), (0.46, 18.48, 9.03)],
}


@dataclass(frozen=True)
class WaveformTemplate:
    shape: np.ndarray
    id: int
    align_index: int = 20

    def __post_init__(self):
        shape = np.asarray(self.shape, dtype=np.float64)
        if not np.isclose(np.max(np.abs(shape)), 1.0, atol=1e-6):
            raise ValueError("template must be normalized to max |value| == 1")
        object.__setattr__(self, "shape", shape)


def make_template(lobes, id: int, n: int = 64, align_index: int = 20) -> WaveformTemplate:
    """Sum of Gaussian lobes, normalized to unit peak with the extremum at ``align_index``."""
    t = np.arange(n, dtype=np.float64) - align_index
    w = np.zeros(n)
    for amp, centre, width in lobes:
        w += amp * np.exp(-((t - centre) ** 2) / (2 * width**2))
    w /= np.max(np.abs(w))
    return WaveformTemplate(w, id, align_index)


def default_templates(n: int = 64, align_index: int = 20) -> list[WaveformTemplate]:
    return [make_template(lobes, k, n, align_index) for k, lobes in sorted(_TEMPLATE_LOBES.items())]


@dataclass
class SynthSpec:
    templates: list = field(default_factory=default_templates)
    rates_hz: tuple = (4.0, 6.0, 8.0)
    duration_s: float = 60.0
    sample_rate_hz: float = 30000.0
    amplitude_scale: float = 100.0
    refractory_ms: float = 3.0
    noise_std: float = 5.0
    noise_kind: str = "white"
    seed: int = 0

    def __post_init__(self):
        if len(self.rates_hz) != len(self.templates):
            raise ValueError("need one firing rate per template")
        if any(not 1.0 <= r <= 10.0 for r in self.rates_hz):
            raise ValueError("firing rates must lie in [1, 10] Hz")
        if self.refractory_ms < 0:
            raise ValueError("refractory period must be >= 0")
        if self.noise_kind not in ("white", "band"):
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["templates"] = [{"id": t.id, "shape": t.shape.tolist()} for t in self.templates]
        d["rates_hz"] = list(self.rates_hz)
        return d


@dataclass
class Dataset:
    trace: RawTrace
    truth: list[GroundTruthEvent]
    metadata: dict


def gen_spike_times(rate_hz: float, duration_s: float, refractory_ms: float = 3.0,
                    seed=0) -> np.ndarray:
    """Renewal process: ISI = refractory + exponential, mean rate ``rate_hz``. Seconds."""
    ref = refractory_ms / 1000.0
    if rate_hz <= 0 or rate_hz * ref >= 1.0:
        raise ValueError(f"rate {rate_hz} Hz infeasible with refractory period {refractory_ms} ms")
    if duration_s <= 0:
        return np.zeros(0)
    rng = np.random.default_rng(seed)
    mean_exp = 1.0 / rate_hz - ref
    n_guess = int(rate_hz * duration_s * 1.5) + 20
    times = []
    t = rng.exponential(1.0 / rate_hz)
    while True:
        isi = ref + rng.exponential(mean_exp, n_guess)
        chunk = t + np.concatenate([[0.0], np.cumsum(isi)])
        times.append(chunk[chunk < duration_s])
        if chunk[-1] >= duration_s:
            break
        t = chunk[-1] + ref + rng.exponential(mean_exp)
    return np.concatenate(times)


def _noise(spec: SynthSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.noise_std == 0:
        return np.zeros(n)
    x = rng.normal(0.0, 1.0, n)
    if spec.noise_kind == "band":
        sos = signal.butter(3, [300.0, 3000.0], btype="bandpass", fs=spec.sample_rate_hz,
                            output="sos")
        x = signal.sosfilt(sos, x)
        x /= np.std(x)
    return x * spec.noise_std


def _render(spec: SynthSpec, events, rng: np.random.Generator) -> Dataset:
    """``events``: list of (sample, unit_index, scale)."""
    n = int(round(spec.duration_s * spec.sample_rate_hz))
    trace = _noise(spec, n, rng)
    events = sorted(events)
    truth = []
    n_t = len(spec.templates[0].shape)
    for s, u, scale in events:
        tpl = spec.templates[u]
        lo = s - tpl.align_index
        a, b = max(lo, 0), min(lo + n_t, n)
        if a >= b:
            continue
        trace[a:b] += scale * spec.amplitude_scale * tpl.shape[a - lo : b - lo]
        truth.append(GroundTruthEvent(int(s), int(tpl.id)))
    stamps = np.array([e[0] for e in events])
    collisions = int(np.sum(np.diff(stamps) < n_t)) if len(stamps) > 1 else 0
    meta = {"spec": spec.to_dict(), "n_events": len(truth), "collisions": collisions}
    return Dataset(RawTrace(trace.astype(np.float32), spec.sample_rate_hz), truth, meta)


def _unit_times(spec: SynthSpec, rng: np.random.Generator) -> list[np.ndarray]:
    seeds = rng.integers(0, 2**63 - 1, len(spec.templates))
    return [
        gen_spike_times(r, spec.duration_s, spec.refractory_ms, s)
        for r, s in zip(spec.rates_hz, seeds)
    ]


def _to_samples(t: np.ndarray, fs: float, align_index: int, n: int) -> np.ndarray:
    s = np.round(t * fs).astype(np.int64)
    # keep whole templates inside the trace
    return s[(s >= align_index) & (s < n - 64)]


def gen_syn1(spec: SynthSpec | None = None) -> Dataset:
    """Stable neurons firing as independent refractory renewal processes."""
    return gen_syn2(spec, None, 0.0)


def gen_syn2(spec: SynthSpec | None = None, inhibited_unit: int | None = 3,
             onset_fraction: float = 0.3) -> Dataset:
    """As syn1, but ``inhibited_unit`` stays silent before ``onset_fraction * duration``."""
    spec = spec or SynthSpec()
    if inhibited_unit is not None and not 0.0 <= onset_fraction < 1.0:
        raise ValueError("onset_fraction must lie in [0, 1)")
    rng = np.random.default_rng(spec.seed)
    times = _unit_times(spec, rng)
    n = int(round(spec.duration_s * spec.sample_rate_hz))
    events = []
    for u, t in enumerate(times):
        if spec.templates[u].id == inhibited_unit:
            t = t[t >= onset_fraction * spec.duration_s]
        for s in _to_samples(t, spec.sample_rate_hz, spec.templates[u].align_index, n):
            events.append((int(s), u, 1.0))
    ds = _render(spec, events, rng)
    ds.metadata.update(kind="syn2" if inhibited_unit and onset_fraction else "syn1",
                       inhibited_unit=inhibited_unit, onset_fraction=onset_fraction)
    return ds


def gen_syn3(spec: SynthSpec | None = None, deforming_unit: int = 2,
             max_ratio: float = 2.0) -> Dataset:
    """As syn1, but one unit's amplitude grows linearly in time from 1 to ``max_ratio``."""
    spec = spec or SynthSpec()
    if not 1.0 < max_ratio <= 2.0:
        raise ValueError("max_ratio must lie in (1, 2]")
    rng = np.random.default_rng(spec.seed)
    times = _unit_times(spec, rng)
    n = int(round(spec.duration_s * spec.sample_rate_hz))
    events = []
    for u, t in enumerate(times):
        deforming = spec.templates[u].id == deforming_unit
        for s in _to_samples(t, spec.sample_rate_hz, spec.templates[u].align_index, n):
            scale = 1.0 + (max_ratio - 1.0) * s / n if deforming else 1.0
            events.append((int(s), u, scale))
    ds = _render(spec, events, rng)
    ds.metadata.update(kind="syn3", deforming_unit=deforming_unit, max_ratio=max_ratio)
    return ds


def _analysis_schedule(rng: np.random.Generator, n_per_unit: int, deform_after: int,
                       max_ratio: float):
    """Interleaved unit indices (0/1) and per-event scales; unit 1 deforms."""
    if not 1.0 <= max_ratio <= 2.0:
        raise ValueError("max_ratio must lie in [1, 2]")
    if not 0 < deform_after < n_per_unit:
        raise ValueError("deform_after must lie strictly inside (0, n_per_unit)")
    order = rng.permutation(np.repeat([0, 1], n_per_unit))
    scales = np.ones(len(order))
    n_ramp = max(n_per_unit - deform_after - 1, 1)
    onset = None
    seen = 0
    for i, u in enumerate(order):
        if u != 1:
            continue
        if seen >= deform_after:
            scales[i] = 1.0 + (max_ratio - 1.0) * min((seen - deform_after + 1) / n_ramp, 1.0)
            if onset is None:
                onset = i
        seen += 1
    return order, scales, onset


def gen_analysis_stream(seed: int = 0, templates=None, n_per_unit: int = 1000,
                        deform_after: int = 500, max_ratio: float = 2.0,
                        amplitude_scale: float = 100.0, noise_std: float = 5.0):
    """Two interleaved waveforms as aligned candidates; the second stretches toward 2x.

    The deforming waveform keeps its amplitude for its first ``deform_after``
    occurrences, then scales linearly to ``max_ratio`` at its last occurrence.
    Returns ``(candidates, labels, onset_index)`` where ``onset_index`` is the
    global position of the first stretched occurrence.
    """
    templates = templates or default_templates()[:2]
    if len(templates) < 2:
        raise ValueError("need two templates")
    rng = np.random.default_rng(seed)
    order, scales, onset = _analysis_schedule(rng, n_per_unit, deform_after, max_ratio)
    cands, labels = [], []
    for i, (u, scale) in enumerate(zip(order, scales)):
        tpl = templates[u]
        w = tpl.shape * amplitude_scale * scale + rng.normal(0.0, noise_std, tpl.shape.size)
        cands.append(SpikeCandidate(w, tpl.align_index, 64 * (i + 1)))
        labels.append(tpl.id)
    return cands, np.asarray(labels), onset


def gen_analysis(spec: SynthSpec | None = None, n_per_unit: int = 1000, deform_after: int = 500,
                 max_ratio: float = 2.0) -> Dataset:
    """The two-waveform analysis stream rendered as a continuous trace.

    Uses the first two templates of ``spec``; events are separated by random
    gaps so windows never overlap. ``spec.duration_s`` and ``spec.rates_hz`` are
    ignored: the length follows from the event count.
    """
    spec = spec or SynthSpec()
    templates = spec.templates[:2]
    if len(templates) < 2:
        raise ValueError("need two templates")
    rng = np.random.default_rng(spec.seed)
    order, scales, onset = _analysis_schedule(rng, n_per_unit, deform_after, max_ratio)
    n_t = len(templates[0].shape)
    gaps = n_t + rng.integers(2 * n_t, 10 * n_t, len(order))
    starts = n_t + np.cumsum(gaps) - gaps[0]
    duration = float(starts[-1] + 3 * n_t) / spec.sample_rate_hz
    render_spec = dataclasses.replace(spec, templates=list(templates),
                                      rates_hz=spec.rates_hz[:2], duration_s=duration)
    events = [(int(s + templates[u].align_index), int(u), float(k))
              for s, u, k in zip(starts, order, scales)]
    ds = _render(render_spec, events, rng)
    ds.metadata.update(kind="analysis", onset_index=onset, deform_after=deform_after,
                       max_ratio=max_ratio, n_per_unit=n_per_unit)
    return ds


def gen_hybrid(templates=None, noise_level: float = 0.1, seed: int = 0, n_spikes: int = 849,
               duration_s: float = 60.0, sample_rate_hz: float = 30000.0,
               amplitude_scale: float = 100.0, noise_kind: str = "white") -> Dataset:
    """Waveforms inserted at random, non-overlapping times into background noise.

    The noise standard deviation is ``noise_level`` times the template peak
    amplitude.
    """
    if noise_level <= 0:
        raise ValueError("noise_level must be positive")
    templates = templates or default_templates()
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    n_t = len(templates[0].shape)
    slots = (n - 2 * n_t) // n_t
    if n_spikes > slots:
        raise ValueError("too many spikes for a non-overlapping layout")
    # pick distinct slots then jitter inside each so insertions never overlap
    chosen = np.sort(rng.choice(slots, n_spikes, replace=False))
    starts = n_t + chosen * n_t
    units = rng.integers(len(templates), size=n_spikes)
    spec = SynthSpec(
        templates=list(templates),
        rates_hz=tuple(5.0 for _ in templates),
        duration_s=duration_s,
        sample_rate_hz=sample_rate_hz,
        amplitude_scale=amplitude_scale,
        noise_std=noise_level * amplitude_scale,
        noise_kind=noise_kind,
        seed=seed,
    )
    events = [(int(s + templates[u].align_index), int(u), 1.0) for s, u in zip(starts, units)]
    ds = _render(spec, events, rng)
    ds.metadata.update(kind="hybrid", noise_level=noise_level, n_spikes=n_spikes)
    return ds
