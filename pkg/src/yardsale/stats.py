"""Binned wealth distributions, tail fits, rank plots and inequality.

All fits are least squares on log-binned densities. Residuals are taken on
the natural log of the density, and ``chi2_per_dof`` is the residual sum of
squares over the degrees of freedom, so that power-law, lognormal and
exponential fits of the same window can be compared row by row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

MIN_BINS = 4


class FitError(ValueError):
    """Raised when a window holds too few usable bins, or a fit is degenerate."""

    def __init__(self, message, n_bins=None):
        super().__init__(message)
        self.n_bins = n_bins


@dataclass(frozen=True)
class LogHistogram:
    bin_edges: np.ndarray
    densities: np.ndarray
    counts: np.ndarray
    n_samples: int
    n_below: int  # zero or below-floor samples, never binned

    @property
    def centers(self) -> np.ndarray:
        return np.sqrt(self.bin_edges[:-1] * self.bin_edges[1:])

    @property
    def below_fraction(self) -> float:
        return self.n_below / self.n_samples


@dataclass(frozen=True)
class FitResult:
    form: str
    params: dict
    fit_range: tuple
    chi2_per_dof: float
    r_squared: float
    n_bins: int

    def as_record(self) -> dict:
        return {
            "form": self.form,
            "params": dict(self.params),
            "fit_range": [float(self.fit_range[0]), float(self.fit_range[1])],
            "chi2_per_dof": self.chi2_per_dof,
            "r_squared": self.r_squared,
            "n_bins": self.n_bins,
        }


@dataclass(frozen=True)
class RankList:
    ranks: np.ndarray
    wealths: np.ndarray


def log_binned_histogram(samples, bins_per_decade: int = 10,
                         floor: Optional[float] = None) -> LogHistogram:
    """Histogram on geometric bins from the smallest positive sample (or
    ``floor``) up to the largest sample.

    Densities are normalised by the total sample count, zeros included, so
    they integrate to the binned mass fraction.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    if bins_per_decade < 1:
        raise ValueError("bins_per_decade must be at least 1")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite and non-negative")
    lo = floor if floor is not None else (x[x > 0].min() if np.any(x > 0) else None)
    if lo is None or not lo > 0:
        raise ValueError("all samples are zero")
    keep = x >= lo
    pos = x[keep]
    if pos.size == 0:
        raise ValueError(f"no samples at or above floor {lo!r}")
    hi = pos.max()
    n_bins = max(1, int(np.ceil((np.log10(hi) - np.log10(lo)) * bins_per_decade - 1e-9)))
    edges = 10.0 ** (np.log10(lo) + np.arange(n_bins + 1) / bins_per_decade)
    edges[0] = lo
    if edges[-1] < hi:  # rounding in the power
        edges[-1] = hi
    if n_bins == 1 and edges[-1] == edges[0]:
        edges[-1] = lo * 10.0 ** (1.0 / bins_per_decade)
    edges = np.unique(edges)  # subnormal edges can coincide; merge those bins
    counts, _ = np.histogram(pos, bins=edges)
    with np.errstate(over="ignore"):  # subnormal widths far below the bulk
        dens = counts / (x.size * np.diff(edges))
    return LogHistogram(edges, dens, counts, int(x.size), int(x.size - pos.size))


def _window(hist: LogHistogram, x_min, x_max, min_count):
    c = hist.centers
    lo = -np.inf if x_min is None else x_min
    hi = np.inf if x_max is None else x_max
    sel = (c >= lo) & (c <= hi) & (hist.counts >= max(1, min_count)) & np.isfinite(hist.densities)
    n = int(sel.sum())
    if n < MIN_BINS:
        raise FitError(f"only {n} usable bins in [{lo}, {hi}], need {MIN_BINS}", n)
    xs, ds = c[sel], hist.densities[sel]
    return xs, ds, (float(xs[0]) if x_min is None else float(x_min),
                    float(xs[-1]) if x_max is None else float(x_max))


def _scores(y, yhat, n_params):
    resid = y - yhat
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return ss_res / max(1, y.size - n_params), r2


def fit_power_law(hist: LogHistogram, x_min=None, x_max=None, min_count: int = 1) -> FitResult:
    """``P(x) = c x^-nu`` by a straight line in log-log coordinates."""
    x, d, rng = _window(hist, x_min, x_max, min_count)
    lx, ly = np.log(x), np.log(d)
    slope, icpt = np.polyfit(lx, ly, 1)
    chi2, r2 = _scores(ly, icpt + slope * lx, 2)
    return FitResult("power_law", {"nu": float(-slope), "c": float(np.exp(icpt))}, rng, chi2, r2, x.size)


def lognormal_log_density(x, mu, sigma):
    lx = np.log(x)
    return -lx - np.log(sigma * np.sqrt(2 * np.pi)) - (lx - mu) ** 2 / (2 * sigma**2)


def fit_lognormal(hist: LogHistogram, x_min=None, x_max=None, min_count: int = 1) -> FitResult:
    """Normalised lognormal density fitted to the log densities.

    Two free parameters (``mu``, ``sigma``), as for the power law: the
    amplitude is fixed by normalisation, otherwise the quadratic would nest
    the straight line and could never fit worse.
    """
    x, d, rng = _window(hist, x_min, x_max, min_count)
    lx, ly = np.log(x), np.log(d)
    c2, c1, _ = np.polyfit(lx, ly, 2)
    if c2 < 0:
        s2 = -1.0 / (2 * c2)
        start = [s2 * (c1 + 1.0), 0.5 * np.log(s2)]
    else:
        start = [lx.mean(), np.log(max(np.ptp(lx), 1.0))]

    def resid(p):
        return lognormal_log_density(x, p[0], np.exp(p[1])) - ly

    sol = optimize.least_squares(resid, start, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                 max_nfev=20000)
    mu, sigma = float(sol.x[0]), float(np.exp(sol.x[1]))
    chi2, r2 = _scores(ly, lognormal_log_density(x, mu, sigma), 2)
    return FitResult("lognormal", {"mu": mu, "sigma": sigma}, rng, chi2, r2, x.size)


def fit_exponential(hist: LogHistogram, x_min=None, x_max=None, min_count: int = 1) -> FitResult:
    """``P(x) = c exp(-x/T)`` by a straight line in (x, log density)."""
    x, d, rng = _window(hist, x_min, x_max, min_count)
    ly = np.log(d)
    slope, icpt = np.polyfit(x, ly, 1)
    if slope >= 0:
        raise FitError(f"density does not decay over the window (slope {slope:.3g})", x.size)
    chi2, r2 = _scores(ly, icpt + slope * x, 2)
    return FitResult("exponential", {"T": float(-1.0 / slope), "c": float(np.exp(icpt))}, rng, chi2, r2, x.size)


FITTERS = {
    "power_law": fit_power_law,
    "lognormal": fit_lognormal,
    "exponential": fit_exponential,
}


def tail_window(samples, quantile: float = 0.9) -> float:
    """Default lower edge of a tail fit: a quantile of the positive samples."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    return float(np.quantile(x[x > 0], quantile))


def zipf_ranks(wealths) -> RankList:
    w = np.sort(np.asarray(wealths, dtype=np.float64).ravel())[::-1]
    if w.size == 0:
        raise ValueError("no wealths to rank")
    return RankList(np.arange(1, w.size + 1), w)


def zipf_slope(ranks: RankList, k_min: int = 1, k_max: Optional[int] = None) -> float:
    """Slope of log wealth against log rank over ranks ``k_min..k_max``."""
    k_max = ranks.ranks.size if k_max is None else min(k_max, ranks.ranks.size)
    sel = slice(k_min - 1, k_max)
    k, w = ranks.ranks[sel], ranks.wealths[sel]
    ok = w > 0
    if ok.sum() < 2:
        raise FitError("need at least two positive ranked wealths", int(ok.sum()))
    return float(np.polyfit(np.log(k[ok]), np.log(w[ok]), 1)[0])


def gini(wealths) -> float:
    """Gini coefficient, half the relative mean absolute difference."""
    w = np.sort(np.asarray(wealths, dtype=np.float64).ravel())
    if w.size == 0:
        raise ValueError("no wealths")
    if np.any(w < 0):
        raise ValueError("wealths must be non-negative")
    total = w.sum()
    if not total > 0:
        raise ValueError("total wealth must be positive")
    n = w.size
    k = np.arange(1, n + 1)
    return float(np.sum((2 * k - n - 1) * w) / (n * total))
