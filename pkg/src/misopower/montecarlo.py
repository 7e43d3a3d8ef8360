"""Monte Carlo certification of outage guarantees.

Samples are drawn in 64 fixed chunks, each from its own substream keyed by
the chunk index, so reports are bit-identical for a given seed regardless
of how chunks are scheduled. Counts are summed, which makes the reduction
order-independent.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .model import (
    BroadcastScenario,
    InterferenceScenario,
    compute_mse,
    compute_sinr,
    realize_channels,
    realize_errors,
)

N_CHUNKS = 64
Z99 = float(norm.ppf(0.995))
PASS_WIDTHS = 3.0


def wilson_halfwidth(rate, n, z=Z99):
    """Half-width of the Wilson score interval for a binomial proportion."""
    rate = np.asarray(rate, dtype=float)
    denom = 1.0 + z * z / n
    return z / denom * np.sqrt(rate * (1.0 - rate) / n + z * z / (4.0 * n * n))


@dataclass
class OutageReport:
    """Per-user empirical frequency of the QoS event.

    ``kind == "outage"``: ``rate`` is the frequency of SINR <= alpha and a
    user passes when ``rate <= target + 3*halfwidth`` (target = eps).
    ``kind == "satisfaction"``: ``rate`` is the frequency of MSE <= mu and a
    user passes when ``rate >= target - 3*halfwidth`` (target = phi).
    """

    rate: np.ndarray
    n_samples: int
    halfwidth: np.ndarray
    seed: int
    target: np.ndarray
    passed: np.ndarray
    kind: str = "outage"

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))


def _chunk_sizes(n_samples):
    base, extra = divmod(n_samples, N_CHUNKS)
    return [base + (1 if i < extra else 0) for i in range(N_CHUNKS)]


def _count(fn, n_samples, workers):
    sizes = _chunk_sizes(n_samples)
    jobs = [(i, s) for i, s in enumerate(sizes) if s > 0]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    else:
        parts = [fn(*job) for job in jobs]
    return np.sum(parts, axis=0)


def estimate_outage(scenario: InterferenceScenario, p, n_samples: int, seed: int, workers=None) -> OutageReport:
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    p = np.asarray(p, dtype=float)

    def chunk(i, size):
        real = realize_channels(scenario, seed, size=size, purpose=f"validate/chunk{i}")
        sinr = compute_sinr(real, scenario, p)
        return np.count_nonzero(sinr <= scenario.alpha, axis=0)

    counts = _count(chunk, n_samples, workers)
    rate = counts / n_samples
    hw = wilson_halfwidth(rate, n_samples)
    target = np.asarray(scenario.eps, dtype=float)
    return OutageReport(rate, n_samples, hw, seed, target, rate <= target + PASS_WIDTHS * hw, "outage")


def sample_mse(bscenario: BroadcastScenario, q, n_samples: int, seed: int, workers=None) -> np.ndarray:
    """All sampled MSE values, shape ``(n_samples, K)``, in chunk order."""
    q = np.asarray(q, dtype=float)
    sizes = _chunk_sizes(n_samples)

    def chunk(i, size):
        real = realize_errors(bscenario, seed, size=size, purpose=f"validate/chunk{i}")
        return compute_mse(real, bscenario, q)

    jobs = [(i, s) for i, s in enumerate(sizes) if s > 0]
    return np.concatenate([chunk(*job) for job in jobs], axis=0)


def estimate_mse_satisfaction(bscenario: BroadcastScenario, q, n_samples: int, seed: int,
                              workers=None) -> OutageReport:
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    q = np.asarray(q, dtype=float)

    def chunk(i, size):
        real = realize_errors(bscenario, seed, size=size, purpose=f"validate/chunk{i}")
        return np.count_nonzero(compute_mse(real, bscenario, q) <= bscenario.mu, axis=0)

    counts = _count(chunk, n_samples, workers)
    rate = counts / n_samples
    hw = wilson_halfwidth(rate, n_samples)
    target = np.asarray(bscenario.phi, dtype=float)
    return OutageReport(rate, n_samples, hw, seed, target, rate >= target - PASS_WIDTHS * hw, "satisfaction")


def histogram_mse(bscenario: BroadcastScenario, q, n_samples: int, bins: int, seed: int):
    """Equal-width MSE histograms per user over the observed range.

    Returns ``(edges, counts)`` lists indexed by user.
    """
    if bins < 2:
        raise ValueError("need at least two bins")
    values = sample_mse(bscenario, q, n_samples, seed)
    edges, counts = [], []
    for k in range(bscenario.K):
        c, e = np.histogram(values[:, k], bins=bins)
        edges.append(e)
        counts.append(c)
    return edges, counts


REPORT_COLUMNS = ("user", "rate", "halfwidth", "target", "pass")
HISTOGRAM_COLUMNS = ("user", "bin_lo", "bin_hi", "count")


def write_report_csv(report: OutageReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for k in range(report.rate.size):
            w.writerow([k, repr(float(report.rate[k])), repr(float(report.halfwidth[k])),
                        repr(float(report.target[k])), str(bool(report.passed[k])).lower()])


def write_histogram_csv(edges, counts, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTOGRAM_COLUMNS)
        for k, (e, c) in enumerate(zip(edges, counts)):
            for lo, hi, n in zip(e[:-1], e[1:], c):
                w.writerow([k, repr(float(lo)), repr(float(hi)), int(n)])
