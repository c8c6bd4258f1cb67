"""Nonparametric marginals: Gaussian-kernel density plus empirical CDF."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InvalidInputError

MIN_SAMPLES = 10
DENSITY_FLOOR = 1e-20

_SQRT_2PI = math.sqrt(2.0 * math.pi)
# bounds peak memory of the (queries x sample) kernel matrix
_CHUNK = 1 << 22


def silverman_bandwidth(values) -> float:
    """Silverman's rule of thumb, ``0.9 min(sd, IQR/1.34) n^(-1/5)``."""
    x = np.asarray(values, dtype=float)
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * x.size ** (-0.2)


@dataclass(frozen=True, eq=False)
class MarginalModel:
    """One feature's marginal: sorted training sample and KDE bandwidth."""

    sample: np.ndarray
    bandwidth: float
    density_floor: float = DENSITY_FLOOR

    def __post_init__(self):
        s = np.sort(np.asarray(self.sample, dtype=float))
        s.setflags(write=False)
        object.__setattr__(self, "sample", s)
        if s.size < MIN_SAMPLES or not np.all(np.isfinite(s)):
            raise InvalidInputError("marginal sample needs >= 10 finite values")
        if not self.bandwidth > 0:
            raise InvalidInputError("bandwidth must be positive")

    @property
    def n(self) -> int:
        return self.sample.size

    def pdf(self, x):
        """Kernel density estimate, floored at ``density_floor``."""
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty(flat.shape)
        h = self.bandwidth
        step = max(1, _CHUNK // self.n)
        for i in range(0, flat.size, step):
            z = (flat[i:i + step, None] - self.sample[None, :]) / h
            out[i:i + step] = np.exp(-0.5 * z * z).sum(axis=1)
        out /= self.n * h * _SQRT_2PI
        out = np.maximum(out, self.density_floor).reshape(x.shape)
        return float(out) if out.ndim == 0 else out

    def logpdf(self, x):
        return np.log(self.pdf(x))

    def cdf(self, x):
        """Empirical CDF with half weight on ties, rescaled into (0, 1).

        ``(#{x_n < x} + #{x_n == x}/2 + 1/2) / (N + 1)``
        """
        x = np.asarray(x, dtype=float)
        below = np.searchsorted(self.sample, x, side="left")
        upto = np.searchsorted(self.sample, x, side="right")
        out = (below + 0.5 * (upto - below) + 0.5) / (self.n + 1)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"sample": self.sample.tolist(), "bandwidth": self.bandwidth}

    @classmethod
    def from_dict(cls, d: dict) -> "MarginalModel":
        return cls(np.asarray(d["sample"], dtype=float), float(d["bandwidth"]))


def fit_marginal(values) -> MarginalModel:
    """Fit a marginal model to one feature column.

    Raises
    ------
    InvalidInputError
        Non-finite values, or fewer than 10 of them.
    DegenerateDataError
        All values equal.
    """
    x = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("feature contains non-finite values")
    if x.size and np.all(x == x[0]):
        raise DegenerateDataError("feature is constant")
    if x.size < MIN_SAMPLES:
        raise InvalidInputError(f"need at least {MIN_SAMPLES} values, got {x.size}")
    return MarginalModel(x, silverman_bandwidth(x))
