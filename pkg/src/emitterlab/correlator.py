"""Cross-correlation of timestamp channels: cw g2(tau) histograms,
pulsed coincidence-peak areas and intensity traces.

The correlation is multi-stop (every pair within the window counts), not
start-stop: start-stop distorts the histogram beyond the mean inter-arrival
time at high rates.  Bins are centered on tau = 0, i.e. bin k covers
[(k-1/2)*w, (k+1/2)*w), so the antibunching minimum falls into a single bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .photostream import TimestampChannel

__all__ = [
    "CorrelationHistogram",
    "PulsedG2Result",
    "IntensityTrace",
    "correlate",
    "pulsed_g2",
    "intensity_trace",
]

# a-events processed per chunk; the result is independent of chunking.
_CHUNK = 1 << 16


@dataclass(frozen=True)
class CorrelationHistogram:
    """Normalized g2 histogram.

    `taus` are bin centers in ps, `counts` raw coincidences per bin,
    `g2 = counts / normalization` and `g2_err = sqrt(counts) / normalization`
    with normalization = r_a * r_b * T * bin_width (measured channel rates
    over the overlap duration T).
    """

    taus: np.ndarray  # ps, bin centers
    counts: np.ndarray  # int
    g2: np.ndarray
    g2_err: np.ndarray
    bin_width: int  # ps
    tau_max: int  # ps
    normalization: float  # expected counts per bin for uncorrelated channels

    def to_csv(self, path):
        data = np.column_stack([self.taus, self.counts, self.g2, self.g2_err])
        header = "tau_ps,counts,g2,g2_err"
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt=["%d", "%d", "%.10g", "%.10g"])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        taus = data[:, 0].astype(np.int64)
        counts = data[:, 1].astype(np.int64)
        g2 = data[:, 2]
        g2_err = data[:, 3]
        w = int(taus[1] - taus[0]) if taus.size > 1 else 1
        # Recover the scalar normalization from any populated bin.
        nz = np.flatnonzero(counts)
        norm = float(counts[nz[0]] / g2[nz[0]]) if nz.size else np.nan
        return cls(taus=taus, counts=counts, g2=g2, g2_err=g2_err,
                   bin_width=w, tau_max=int(taus[-1]), normalization=norm)


@dataclass(frozen=True)
class PulsedG2Result:
    """Coincidence counts folded into per-pulse windows.

    `peak_offsets[i]` is the pulse offset n and `peak_areas[i]` the
    coincidence count within T_rep/2 of n*T_rep; g2_zero is the n = 0 area
    over the mean of the |n| >= 1 areas.
    """

    peak_offsets: np.ndarray
    peak_areas: np.ndarray
    g2_zero: float
    g2_zero_err: float
    rep_period_ps: float


@dataclass(frozen=True)
class IntensityTrace:
    """Counts-per-bin time series with blinking-screening statistics."""

    bin_ps: int
    counts: np.ndarray
    mean: float
    std: float
    max_min_ratio: float


def _check_channels(a: TimestampChannel, b: TimestampChannel):
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty channel: cannot correlate")
    for ch in (a, b):
        if np.any(np.diff(ch.timestamps) <= 0):
            raise ValueError("unsorted channel input")


def _pair_diffs(a_ts, b_ts, limit, chunk=_CHUNK):
    """Yield arrays of tau = t_b - t_a for all pairs with |tau| <= limit."""
    for i0 in range(0, a_ts.size, chunk):
        a = a_ts[i0:i0 + chunk]
        lo = np.searchsorted(b_ts, a - limit, side="left")
        hi = np.searchsorted(b_ts, a + limit, side="right")
        m = hi - lo
        if not m.any():
            continue
        # Flatten the per-event index ranges [lo_i, hi_i).
        reps = np.repeat(np.arange(a.size), m)
        offs = np.arange(m.sum()) - np.repeat(np.cumsum(m) - m, m)
        yield b_ts[lo[reps] + offs] - a[reps]


def correlate(
    a: TimestampChannel,
    b: TimestampChannel,
    bin_width,
    tau_max,
) -> CorrelationHistogram:
    """Multi-stop cross-correlation histogram of two channels.

    counts[k] = #{(t_a, t_b) : tau = t_b - t_a in bin k, |tau| <= tau_max},
    computed with a sorted two-pointer/window sweep.  Normalization divides
    by r_a * r_b * T * bin_width with measured mean rates over the overlap
    duration T, so uncorrelated Poisson channels give g2 ~= 1.
    """
    bin_width = int(bin_width)
    tau_max = int(tau_max)
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if tau_max < bin_width:
        raise ValueError("tau_max must be >= bin_width")
    _check_channels(a, b)

    k_max = tau_max // bin_width
    n_bins = 2 * k_max + 1
    counts = np.zeros(n_bins, dtype=np.int64)
    for tau in _pair_diffs(a.timestamps, b.timestamps, tau_max):
        # bin index floor((tau + w/2) / w), in exact integer arithmetic
        k = np.floor_divide(2 * tau + bin_width, 2 * bin_width)
        k = k[np.abs(k) <= k_max]
        counts += np.bincount((k + k_max).astype(np.intp), minlength=n_bins)

    t_overlap = min(a.duration, b.duration)
    norm = len(a) * len(b) * bin_width / t_overlap
    taus = (np.arange(n_bins) - k_max) * bin_width
    with np.errstate(invalid="ignore"):
        g2 = counts / norm
        g2_err = np.sqrt(counts) / norm
    return CorrelationHistogram(
        taus=taus, counts=counts, g2=g2, g2_err=g2_err,
        bin_width=bin_width, tau_max=tau_max, normalization=norm,
    )


def pulsed_g2(
    a: TimestampChannel,
    b: TimestampChannel,
    rep_rate,
    n_peaks: int,
) -> PulsedG2Result:
    """Fold coincidence delays into pulse-period windows.

    Windows are centered at n * T_rep (T_rep = 1e6/rep_rate ps for rep_rate
    in MHz) with full-period width, n in [-n_peaks, n_peaks].  g2_zero is
    the n = 0 area divided by the mean side-peak area; the uncertainty is
    Poissonian on both numerator and denominator.
    """
    if n_peaks < 2:
        raise ValueError("need at least 2 side peaks on each side")
    _check_channels(a, b)
    t_rep = 1e6 / float(rep_rate)
    limit = int(np.ceil((n_peaks + 0.5) * t_rep))
    areas = np.zeros(2 * n_peaks + 1, dtype=np.int64)
    for tau in _pair_diffs(a.timestamps, b.timestamps, limit):
        n = np.rint(tau / t_rep).astype(np.int64)
        n = n[np.abs(n) <= n_peaks]
        areas += np.bincount((n + n_peaks).astype(np.intp),
                             minlength=2 * n_peaks + 1)
    offsets = np.arange(-n_peaks, n_peaks + 1)
    side = areas[offsets != 0]
    side_mean = side.mean()
    if side_mean == 0:
        raise ValueError("no side-peak coincidences: cannot normalize")
    area0 = float(areas[n_peaks])
    g2_zero = area0 / side_mean
    rel = np.sqrt((1.0 / area0 if area0 > 0 else 0.0) + 1.0 / side.sum())
    return PulsedG2Result(
        peak_offsets=offsets, peak_areas=areas,
        g2_zero=g2_zero,
        g2_zero_err=(g2_zero * rel) if area0 > 0 else float(np.sqrt(1.0) / side_mean),
        rep_period_ps=t_rep,
    )


def intensity_trace(a: TimestampChannel, bin_ms) -> IntensityTrace:
    """Contiguous counts-per-bin time series over the channel duration.

    Reports mean, std and max/min ratio of the bin counts for blinking
    screening; a silent gap shows up as a zero bin (infinite ratio).
    """
    bin_ps = int(bin_ms * 1e9)
    if bin_ps <= 0:
        raise ValueError("bin must be positive")
    n_bins = max(1, a.duration // bin_ps)
    idx = a.timestamps // bin_ps
    idx = idx[idx < n_bins]  # partial trailing bin is dropped
    counts = np.bincount(idx.astype(np.intp), minlength=n_bins)
    cmin = counts.min() if counts.size else 0
    ratio = float(counts.max() / cmin) if cmin > 0 else np.inf
    return IntensityTrace(
        bin_ps=bin_ps, counts=counts,
        mean=float(counts.mean()), std=float(counts.std()),
        max_min_ratio=ratio,
    )
