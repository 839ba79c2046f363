"""Stochastic photon-stream generation and the HBT detection chain.

The emitter trajectory is a continuous-time Markov chain over the three
levels; a photon is emitted at every |2> -> |1> transition.  Timestamps are
integer picoseconds (sub-ps fractions are rounded to nearest), which matches
time-tagger granularity and keeps output files bit-exact for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinetics import RateSet

__all__ = [
    "DetectorModel",
    "PulseTrain",
    "BackgroundModel",
    "TimestampChannel",
    "simulate_cw",
    "simulate_pulsed",
    "detect_hbt",
]

NS_PER_PS = 1e-3
PS_PER_S = 1e12

# Cycles / pulses processed per vectorized block.
_BLOCK = 1 << 17


@dataclass(frozen=True)
class DetectorModel:
    """Single-photon detector: efficiency, Gaussian jitter, dead time, darks.

    Defaults are typical SSPD figures: ~30 ps timing jitter, 20 ns
    non-paralyzable dead time, 100 dark counts/s.
    """

    efficiency: float = 1.0
    jitter_sigma: float = 30.0  # ps
    dead_time: float = 20_000.0  # ps
    dark_rate: float = 100.0  # counts/s

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must be in [0, 1]")
        if self.jitter_sigma < 0 or self.dead_time < 0 or self.dark_rate < 0:
            raise ValueError("jitter_sigma, dead_time and dark_rate must be >= 0")

    @classmethod
    def ideal(cls) -> "DetectorModel":
        return cls(efficiency=1.0, jitter_sigma=0.0, dead_time=0.0, dark_rate=0.0)


@dataclass(frozen=True)
class PulseTrain:
    """Periodic excitation pulses.

    The pulse is treated as instantaneous (pulse_width is documentation
    only): 1 ps drive is far shorter than the ~736 ps excited-state
    lifetime, so intra-pulse dynamics are not modeled.
    """

    rep_rate: float = 80.0  # MHz
    pulse_width: float = 1.0  # ps
    excitation_prob: float = 1.0

    def __post_init__(self):
        if self.rep_rate <= 0:
            raise ValueError("rep_rate must be positive")
        if self.pulse_width < 0:
            raise ValueError("pulse_width must be >= 0")
        if not 0.0 <= self.excitation_prob <= 1.0:
            raise ValueError("excitation_prob must be in [0, 1]")

    @property
    def period_ps(self) -> float:
        return 1e6 / self.rep_rate


@dataclass(frozen=True)
class BackgroundModel:
    """Poissonian background photons reaching the beam splitter, counts/s."""

    rate: float = 0.0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("background rate must be >= 0")


@dataclass(frozen=True)
class TimestampChannel:
    """Sorted, unique detection timestamps (integer ps) for one detector."""

    timestamps: np.ndarray
    duration: int  # ps
    label: str = ""

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        object.__setattr__(self, "timestamps", ts)
        if ts.size:
            if np.any(np.diff(ts) <= 0):
                raise ValueError("timestamps must be strictly increasing")
            if ts[0] < 0 or ts[-1] > self.duration:
                raise ValueError("timestamps must lie within [0, duration]")

    @classmethod
    def from_events(cls, events, duration, label="") -> "TimestampChannel":
        """Sort, clip to [0, duration] and drop duplicate timestamps."""
        ts = np.asarray(events, dtype=np.int64)
        ts = ts[(ts >= 0) & (ts <= duration)]
        ts = np.unique(ts)
        return cls(timestamps=ts, duration=int(duration), label=label)

    def __len__(self):
        return int(self.timestamps.size)

    @property
    def mean_rate(self) -> float:
        """Mean count rate in events/ps."""
        if self.duration <= 0:
            return 0.0
        return self.timestamps.size / self.duration


def _background_events(background, duration_ps, rng):
    if background is None or background.rate == 0.0 or duration_ps <= 0:
        return np.empty(0, dtype=np.float64)
    mean = background.rate * duration_ps / PS_PER_S
    n = rng.poisson(mean)
    return rng.uniform(0.0, duration_ps, size=n)


def _finalize(times_ps, duration_ps):
    ts = np.rint(times_ps).astype(np.int64)
    ts = ts[(ts >= 0) & (ts <= duration_ps)]
    ts.sort(kind="stable")
    return ts


def simulate_cw(
    rates: RateSet,
    duration_ps,
    background: BackgroundModel | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Photon timestamps (int ps) from the emitter under cw drive.

    The trajectory is generated cycle-by-cycle: from |1> the emitter waits
    Exp(k12) to |2>, then Exp(k21+k23) to leave |2>; with probability
    k21/(k21+k23) it decays radiatively (one photon), otherwise it shelves
    and waits an extra Exp(k31).  Poissonian background arrivals are merged
    into the stream.  Deterministic for a fixed seed.
    """
    duration_ps = int(duration_ps)
    if duration_ps < 0:
        raise ValueError("duration must be >= 0")
    rng = np.random.default_rng(seed)
    dur_ns = duration_ps * NS_PER_PS
    k_exc = rates.k12
    k_out = rates.k21 + rates.k23
    p_shelve = rates.k23 / k_out

    chunks = []
    t = 0.0  # ns
    while t < dur_ns:
        d1 = rng.exponential(1.0 / k_exc, _BLOCK)
        d2 = rng.exponential(1.0 / k_out, _BLOCK)
        shelved = rng.random(_BLOCK) < p_shelve
        d3 = rng.exponential(1.0 / rates.k31, _BLOCK)
        cycle = d1 + d2 + np.where(shelved, d3, 0.0)
        ends = t + np.cumsum(cycle)
        emit = ends - np.where(shelved, d3, 0.0)  # instant of leaving |2>
        keep = ~shelved & (emit < dur_ns)
        chunks.append(emit[keep])
        t = ends[-1]

    photons = np.concatenate(chunks) / NS_PER_PS if chunks else np.empty(0)
    bg = _background_events(background, duration_ps, rng)
    return _finalize(np.concatenate([photons, bg]), duration_ps)


def simulate_pulsed(
    rates: RateSet,
    train: PulseTrain,
    duration_ps,
    background: BackgroundModel | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Photon timestamps (int ps) under pulsed excitation.

    Each pulse promotes |1> -> |2> with probability `excitation_prob`
    provided the emitter is back in the ground state; between pulses the
    dynamics follow the same Markov chain with k12 = 0, so at most one
    photon is emitted per excitation cycle.  A shelving interval persists
    across pulse boundaries and blocks re-excitation until it ends.
    """
    duration_ps = int(duration_ps)
    if duration_ps < 0:
        raise ValueError("duration must be >= 0")
    rng = np.random.default_rng(seed)
    period = train.period_ps
    n_pulses = int(duration_ps // period) + (1 if duration_ps > 0 else 0)
    k_out = rates.k21 + rates.k23
    p_shelve = rates.k23 / k_out

    chunks = []
    busy_until = -np.inf  # carried across blocks
    for start in range(0, n_pulses, _BLOCK):
        n = min(_BLOCK, n_pulses - start)
        t_p = (start + np.arange(n)) * period
        excited = rng.random(n) < train.excitation_prob
        dt2 = rng.exponential(1000.0 / k_out, n)  # ps
        shelved = rng.random(n) < p_shelve
        dt3 = rng.exponential(1000.0 / rates.k31, n)
        busy_dur = dt2 + np.where(shelved, dt3, 0.0)

        # Pulses hitting a still-busy emitter do not excite; blocked pulses
        # contribute no busy interval themselves, so iterate to a fixpoint.
        active = excited.copy()
        for _ in range(64):
            busy_end = np.where(active, t_p + busy_dur, -np.inf)
            prev_end = np.maximum.accumulate(busy_end)
            prev_end = np.concatenate(([busy_until], prev_end[:-1]))
            new_active = excited & (t_p >= prev_end)
            if np.array_equal(new_active, active):
                break
            active = new_active
        busy_until = max(
            busy_until, np.max(np.where(active, t_p + busy_dur, -np.inf), initial=-np.inf)
        )
        emit = active & ~shelved
        chunks.append(t_p[emit] + dt2[emit])

    photons = np.concatenate(chunks) if chunks else np.empty(0)
    bg = _background_events(background, duration_ps, rng)
    return _finalize(np.concatenate([photons, bg]), duration_ps)


def _dead_time_filter(ts: np.ndarray, dead_time: float) -> np.ndarray:
    """Non-paralyzable dead time: drop events within dead_time of the
    previous *accepted* event."""
    if dead_time <= 0 or ts.size == 0:
        return ts
    accepted = []
    last = -np.inf
    for t in ts.tolist():
        if t - last >= dead_time:
            accepted.append(t)
            last = t
    return np.asarray(accepted, dtype=ts.dtype)


def _detect_one(photons, det: DetectorModel, duration_ps, rng, label):
    keep = rng.random(photons.size) < det.efficiency
    ts = photons[keep].astype(np.float64)
    if det.jitter_sigma > 0 and ts.size:
        ts = ts + rng.normal(0.0, det.jitter_sigma, size=ts.size)
    if det.dark_rate > 0:
        mean = det.dark_rate * duration_ps / PS_PER_S
        n_dark = rng.poisson(mean)
        ts = np.concatenate([ts, rng.uniform(0.0, duration_ps, size=n_dark)])
    ts = _finalize(ts, duration_ps)
    ts = _dead_time_filter(ts, det.dead_time)
    return TimestampChannel.from_events(ts, duration_ps, label=label)


def detect_hbt(
    photons,
    splitter_ratio: float,
    det_a: DetectorModel,
    det_b: DetectorModel,
    seed: int = 0,
    duration_ps=None,
):
    """Split a photon stream on a beam splitter and detect on two channels.

    Each photon is routed independently to channel A with probability
    `splitter_ratio`.  Per channel: Bernoulli efficiency thinning, Gaussian
    timing jitter, dark-count injection, then non-paralyzable dead-time
    removal.  Returns two sorted :class:`TimestampChannel` objects.
    """
    if not 0.0 <= splitter_ratio <= 1.0:
        raise ValueError("splitter_ratio must be in [0, 1]")
    photons = np.asarray(photons, dtype=np.int64)
    if duration_ps is None:
        duration_ps = int(photons[-1]) if photons.size else 0
    rng = np.random.default_rng(seed)
    to_a = rng.random(photons.size) < splitter_ratio
    ch_a = _detect_one(photons[to_a], det_a, duration_ps, rng, "A")
    ch_b = _detect_one(photons[~to_a], det_b, duration_ps, rng, "B")
    return ch_a, ch_b
