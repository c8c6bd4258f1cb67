"""
Bivariate copula families.

Every family here is exchangeable, ``C(u, v) == C(v, u)``, so a single
h-function ``hfunc(c, u, v) = dC(u, v)/dv`` serves both conditioning
directions: ``dC(u, v)/du == hfunc(c, v, u)``.

All unit-interval arguments are clamped to ``[EPS, 1 - EPS]`` before
evaluation.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import (
    DegenerateDataError,
    InvalidInputError,
    InvalidParameterError,
    NumericalFailureError,
    UnattainableDependenceError,
)

EPS = 1e-10

# Beyond these bounds the densities overflow double precision.
RHO_MAX = 0.999
CLAYTON_MAX = 28.0
CLAYTON_MIN = 1e-4
GUMBEL_MAX = 17.0
FRANK_MAX = 35.0
FRANK_MIN = 1e-4

_MLE_XATOL = 1e-8
_MLE_MAXITER = 200
_HINV_MAXITER = 200


class CopulaFamily(str, enum.Enum):
    """Pair-copula families, in the order used for tie-breaking."""

    INDEPENDENCE = "independence"
    GAUSSIAN = "gaussian"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    FRANK = "frank"

    @property
    def n_params(self) -> int:
        return 0 if self is CopulaFamily.INDEPENDENCE else 1

    @property
    def bounds(self) -> tuple[float, float] | None:
        """Closed parameter interval, ``None`` for independence."""
        return _BOUNDS[self]

    @property
    def tau_range(self) -> tuple[float, float]:
        """Closed interval of Kendall's tau reachable inside ``bounds``."""
        return _TAU_RANGE[self]

    @property
    def allows_negative(self) -> bool:
        return self.tau_range[0] < 0.0

    @classmethod
    def parse(cls, name: str) -> "CopulaFamily":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InvalidInputError(f"unknown copula family {name!r}") from None


_BOUNDS = {
    CopulaFamily.INDEPENDENCE: None,
    CopulaFamily.GAUSSIAN: (-RHO_MAX, RHO_MAX),
    CopulaFamily.CLAYTON: (CLAYTON_MIN, CLAYTON_MAX),
    CopulaFamily.GUMBEL: (1.0, GUMBEL_MAX),
    CopulaFamily.FRANK: (-FRANK_MAX, FRANK_MAX),
}


@dataclass(frozen=True)
class PairCopula:
    """A bivariate copula: a family plus its (scalar) parameter.

    Parameters
    ----------
    family : CopulaFamily
    theta : float or None
        Gaussian correlation, or the Archimedean parameter. Must be ``None``
        for the independence copula.
    """

    family: CopulaFamily
    theta: float | None = None

    def __post_init__(self):
        fam = self.family
        if not isinstance(fam, CopulaFamily):
            fam = CopulaFamily.parse(str(fam))
            object.__setattr__(self, "family", fam)
        if fam is CopulaFamily.INDEPENDENCE:
            if self.theta is not None:
                raise InvalidParameterError("independence copula takes no parameter")
            return
        if self.theta is None:
            raise InvalidParameterError(f"{fam.value} copula needs a parameter")
        theta = float(self.theta)
        lo, hi = fam.bounds
        if not (math.isfinite(theta) and lo <= theta <= hi):
            raise InvalidParameterError(
                f"{fam.value} parameter {theta!r} outside [{lo}, {hi}]"
            )
        if fam is CopulaFamily.FRANK and theta == 0.0:
            raise InvalidParameterError("frank parameter must be nonzero")
        object.__setattr__(self, "theta", theta)

    def __str__(self):
        if self.theta is None:
            return self.family.value
        return f"{self.family.value}({self.theta:.6g})"

    def to_dict(self) -> dict:
        return {"family": self.family.value, "parameter": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> "PairCopula":
        return cls(CopulaFamily.parse(d["family"]), d.get("parameter"))


INDEPENDENCE = PairCopula(CopulaFamily.INDEPENDENCE)


def _clamp(x):
    return np.clip(np.asarray(x, dtype=float), EPS, 1.0 - EPS)


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


# ---------------------------------------------------------------------------
# Family implementations. Arguments are clamped float arrays broadcast to a
# common shape; ``t`` is the scalar parameter.


def _bvn_cdf(h, k, rho):
    """Standard bivariate normal CDF via Owen's T function."""
    r = math.sqrt((1.0 - rho) * (1.0 + rho))
    h, k = np.broadcast_arrays(h, k)
    out = np.empty(h.shape)
    hz = h == 0.0
    kz = k == 0.0
    both = hz & kz
    out[both] = 0.25 + math.asin(rho) / (2.0 * math.pi)
    m = hz & ~kz
    out[m] = 0.5 * special.ndtr(k[m]) - special.owens_t(k[m], -rho / r)
    m = kz & ~hz
    out[m] = 0.5 * special.ndtr(h[m]) - special.owens_t(h[m], -rho / r)
    m = ~hz & ~kz
    hm, km = h[m], k[m]
    beta = np.where(hm * km < 0.0, 0.5, 0.0)
    out[m] = (
        0.5 * (special.ndtr(hm) + special.ndtr(km))
        - special.owens_t(hm, (km - rho * hm) / (hm * r))
        - special.owens_t(km, (hm - rho * km) / (km * r))
        - beta
    )
    return np.clip(out, 0.0, 1.0)


class _Gaussian:
    @staticmethod
    def logpdf(u, v, t):
        x, y = special.ndtri(u), special.ndtri(v)
        s = 1.0 - t * t
        return -0.5 * math.log(s) - (t * t * (x * x + y * y) - 2.0 * t * x * y) / (2.0 * s)

    @staticmethod
    def cdf(u, v, t):
        return _bvn_cdf(special.ndtri(u), special.ndtri(v), t)

    @staticmethod
    def hfunc(u, v, t):
        r = math.sqrt(1.0 - t * t)
        return special.ndtr((special.ndtri(u) - t * special.ndtri(v)) / r)

    @staticmethod
    def hinv(p, v, t):
        r = math.sqrt(1.0 - t * t)
        return special.ndtr(special.ndtri(p) * r + t * special.ndtri(v))

    @staticmethod
    def tau(t):
        return 2.0 / math.pi * math.asin(t)


class _Clayton:
    # log(u^-t + v^-t - 1), without cancellation for small t
    @staticmethod
    def _log_a(u, v, t):
        return np.log1p(np.expm1(-t * np.log(u)) + np.expm1(-t * np.log(v)))

    @staticmethod
    def logpdf(u, v, t):
        return (
            math.log1p(t)
            - (1.0 + t) * (np.log(u) + np.log(v))
            - (2.0 + 1.0 / t) * _Clayton._log_a(u, v, t)
        )

    @staticmethod
    def cdf(u, v, t):
        return np.exp(-_Clayton._log_a(u, v, t) / t)

    @staticmethod
    def hfunc(u, v, t):
        return np.exp(-(1.0 + t) * np.log(v) - (1.0 + 1.0 / t) * _Clayton._log_a(u, v, t))

    @staticmethod
    def hinv(p, v, t):
        inner = np.exp(-t * np.log(v)) * np.expm1(-t / (1.0 + t) * np.log(p))
        return np.exp(-np.log1p(inner) / t)

    @staticmethod
    def tau(t):
        return t / (t + 2.0)


class _Gumbel:
    @staticmethod
    def _parts(u, v, t):
        x, y = -np.log(u), -np.log(v)
        lx, ly = np.log(x), np.log(y)
        log_s = np.logaddexp(t * lx, t * ly)
        a = np.exp(log_s / t)
        return x, y, lx, ly, log_s, a

    @staticmethod
    def logpdf(u, v, t):
        x, y, lx, ly, log_s, a = _Gumbel._parts(u, v, t)
        return (
            -a + x + y
            + (t - 1.0) * (lx + ly)
            + (1.0 / t - 2.0) * log_s
            + np.log(a + t - 1.0)
        )

    @staticmethod
    def cdf(u, v, t):
        return np.exp(-_Gumbel._parts(u, v, t)[5])

    @staticmethod
    def hfunc(u, v, t):
        x, y, lx, ly, log_s, a = _Gumbel._parts(u, v, t)
        return np.exp(-a + y + (t - 1.0) * ly + (1.0 / t - 1.0) * log_s)

    @staticmethod
    def hinv(p, v, t):
        return _bisect_hinv(_Gumbel.hfunc, p, v, t)

    @staticmethod
    def tau(t):
        return 1.0 - 1.0 / t


class _Frank:
    @staticmethod
    def _denominator(u, v, t):
        """|expm1(-t) + expm1(-t u) expm1(-t v)|, free of cancellation."""
        if t > 0:
            xu, xv = np.exp(-t * u), np.exp(-t * v)
            return -xu * np.expm1(-t * (1.0 - u)) - xv * np.expm1(-t * u)
        return math.expm1(-t) + np.expm1(-t * u) * np.expm1(-t * v)

    @staticmethod
    def logpdf(u, v, t):
        d = abs(math.expm1(-t))
        return (
            math.log(abs(t) * d)
            - t * (u + v)
            - 2.0 * np.log(_Frank._denominator(u, v, t))
        )

    @staticmethod
    def cdf(u, v, t):
        d = math.expm1(-t)
        q = np.expm1(-t * u) * np.expm1(-t * v) / d
        small = np.abs(q) < 0.5
        with np.errstate(divide="ignore", invalid="ignore"):
            far = np.log(_Frank._denominator(u, v, t)) - math.log(abs(d))
        return np.clip(-np.where(small, np.log1p(np.where(small, q, 0.0)), far) / t, 0.0, 1.0)

    @staticmethod
    def hfunc(u, v, t):
        num = np.exp(-t * v) * np.abs(np.expm1(-t * u))
        return np.clip(num / _Frank._denominator(u, v, t), 0.0, 1.0)

    @staticmethod
    def hinv(p, v, t):
        ev = np.exp(-t * v)
        den = (1.0 - p) * ev + p
        a = p * math.expm1(-t) / den
        one_plus_a = ((1.0 - p) * ev + p * math.exp(-t)) / den
        small = np.abs(a) < 0.5
        with np.errstate(divide="ignore"):
            log_term = np.where(small, np.log1p(a), np.log(one_plus_a))
        return -log_term / t

    @staticmethod
    def tau(t):
        return frank_tau(t)


def debye1(x: float) -> float:
    """First Debye function D1(x) = (1/x) * integral_0^x s / (e^s - 1) ds."""
    if x == 0.0:
        return 1.0
    if x < 0.0:
        return debye1(-x) - x / 2.0
    val, _ = integrate.quad(lambda s: s / math.expm1(s) if s > 0 else 1.0, 0.0, x,
                            epsabs=1e-15, epsrel=1e-13, limit=200)
    return val / x


def frank_tau(theta: float) -> float:
    """Kendall's tau of the Frank copula, odd in ``theta``."""
    if theta == 0.0:
        return 0.0
    if theta < 0.0:
        return -frank_tau(-theta)
    if theta < 1e-3:
        # series; the closed form cancels catastrophically here
        return theta / 9.0 - theta ** 3 / 900.0
    return 1.0 - 4.0 / theta * (1.0 - debye1(theta))


_IMPL = {
    CopulaFamily.GAUSSIAN: _Gaussian,
    CopulaFamily.CLAYTON: _Clayton,
    CopulaFamily.GUMBEL: _Gumbel,
    CopulaFamily.FRANK: _Frank,
}

_TAU_RANGE = {
    CopulaFamily.INDEPENDENCE: (-1.0, 1.0),
    CopulaFamily.GAUSSIAN: (_Gaussian.tau(-RHO_MAX), _Gaussian.tau(RHO_MAX)),
    CopulaFamily.CLAYTON: (0.0, _Clayton.tau(CLAYTON_MAX)),
    CopulaFamily.GUMBEL: (0.0, _Gumbel.tau(GUMBEL_MAX)),
    CopulaFamily.FRANK: (-frank_tau(FRANK_MAX), frank_tau(FRANK_MAX)),
}


def _bisect_hinv(h, p, v, t):
    """Invert ``h(., v)`` by bisection on the logit scale (h is monotone in u)."""
    p, v = np.broadcast_arrays(np.asarray(p, float), np.asarray(v, float))
    lo = np.full(p.shape, special.logit(EPS))
    hi = np.full(p.shape, special.logit(1.0 - EPS))
    for _ in range(_HINV_MAXITER):
        mid = 0.5 * (lo + hi)
        val = h(special.expit(mid), v, t)
        below = val < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        u_lo, u_hi = special.expit(lo), special.expit(hi)
        # done once either scale has run out of representable midpoints
        tight_u = u_hi - u_lo <= 4.0 * np.spacing(u_hi)
        tight_z = hi - lo <= 4.0 * np.spacing(np.maximum(np.abs(lo), np.abs(hi)))
        if np.all(tight_u | tight_z):
            break
    else:
        raise NumericalFailureError("h-function inversion did not converge")
    return special.expit(0.5 * (lo + hi))


# ---------------------------------------------------------------------------
# Public operations


def log_density(c: PairCopula, u, v):
    """Log copula density, vectorised over ``u`` and ``v``."""
    u, v = np.broadcast_arrays(_clamp(u), _clamp(v))
    if c.family is CopulaFamily.INDEPENDENCE:
        return _out(np.zeros(u.shape))
    # sorting the arguments makes exchangeability hold bit-for-bit
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    return _out(_IMPL[c.family].logpdf(lo, hi, c.theta))


def density(c: PairCopula, u, v):
    """Copula density c(u, v)."""
    return _out(np.exp(log_density(c, u, v)))


def cdf(c: PairCopula, u, v):
    """Copula distribution function C(u, v)."""
    u, v = np.broadcast_arrays(_clamp(u), _clamp(v))
    if c.family is CopulaFamily.INDEPENDENCE:
        return _out(u * v)
    return _out(_IMPL[c.family].cdf(u, v, c.theta))


def hfunc(c: PairCopula, u, v):
    """Conditional distribution F(u | v) = dC(u, v)/dv."""
    u, v = np.broadcast_arrays(_clamp(u), _clamp(v))
    if c.family is CopulaFamily.INDEPENDENCE:
        return _out(u.copy())
    return _out(np.clip(_IMPL[c.family].hfunc(u, v, c.theta), 0.0, 1.0))


def hinv(c: PairCopula, p, v):
    """Inverse of ``hfunc`` in its first argument: returns u with F(u | v) = p."""
    p, v = np.broadcast_arrays(_clamp(p), _clamp(v))
    if c.family is CopulaFamily.INDEPENDENCE:
        return _out(p.copy())
    return _out(_clamp(_IMPL[c.family].hinv(p, v, c.theta)))


def param_to_tau(c: PairCopula) -> float:
    if c.family is CopulaFamily.INDEPENDENCE:
        return 0.0
    return float(_IMPL[c.family].tau(c.theta))


def tau_to_param(family: CopulaFamily, tau: float) -> PairCopula:
    """Invert Kendall's tau for ``family``.

    Raises
    ------
    UnattainableDependenceError
        If ``tau`` lies outside ``family.tau_range``.
    """
    family = CopulaFamily(family)
    if family is CopulaFamily.INDEPENDENCE:
        return INDEPENDENCE
    tau = float(tau)
    lo, hi = family.tau_range
    if not (lo <= tau <= hi):
        raise UnattainableDependenceError(
            f"tau={tau:.6g} outside the {family.value} range [{lo:.6g}, {hi:.6g}]"
        )
    plo, phi = family.bounds
    if family is CopulaFamily.GAUSSIAN:
        theta = math.sin(math.pi * tau / 2.0)
    elif family is CopulaFamily.CLAYTON:
        theta = 2.0 * tau / (1.0 - tau)
    elif family is CopulaFamily.GUMBEL:
        theta = 1.0 / (1.0 - tau)
    else:
        theta = _frank_theta(tau)
    return PairCopula(family, min(max(theta, plo), phi))


def _frank_theta(tau):
    sign = -1.0 if tau < 0 else 1.0
    tau = abs(tau)
    if tau <= frank_tau(FRANK_MIN):
        return sign * FRANK_MIN
    if tau >= frank_tau(FRANK_MAX):
        return sign * FRANK_MAX
    root = optimize.brentq(lambda t: frank_tau(t) - tau, FRANK_MIN, FRANK_MAX,
                           xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    return sign * root


def kendall_tau(x, y) -> float:
    """Sample Kendall's tau-b."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInputError("kendall_tau expects two 1-d arrays of equal length")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateDataError("Kendall's tau undefined for a constant column")
    return float(stats.kendalltau(x, y, variant="b").statistic)


def loglik(c: PairCopula, u, v) -> float:
    return float(np.sum(log_density(c, u, v)))


def _check_pairs(u, v, min_n=10):
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise InvalidInputError("pair columns differ in length")
    if u.size < min_n:
        raise InvalidInputError(f"need at least {min_n} pairs, got {u.size}")
    if not (np.all((u > 0) & (u < 1)) and np.all((v > 0) & (v < 1))):
        raise InvalidInputError("pseudo-observations must lie in the open unit interval")
    if np.all(u == u[0]) or np.all(v == v[0]):
        raise DegenerateDataError("constant pseudo-observation column")
    return u, v


def fit_mle(family: CopulaFamily, u, v, tau: float | None = None):
    """Maximum-likelihood fit of one family to pseudo-observation pairs.

    The search starts from the tau-inversion estimate and is refined by a
    bounded Brent search (on atanh(rho) for the Gaussian family).

    Parameters
    ----------
    family : CopulaFamily
    u, v : array_like
        Pseudo-observations, at least 10 of them.
    tau : float, optional
        Precomputed sample Kendall's tau of ``(u, v)``.

    Returns
    -------
    (PairCopula, float)
        The fitted copula and its log-likelihood.
    """
    family = CopulaFamily(family)
    u, v = _check_pairs(u, v)
    if family is CopulaFamily.INDEPENDENCE:
        return INDEPENDENCE, 0.0
    if tau is None:
        tau = kendall_tau(u, v)
    lo, hi = family.tau_range
    start = tau_to_param(family, min(max(tau, lo), hi))

    if family is CopulaFamily.GAUSSIAN:
        def to_theta(z):
            return math.tanh(z)
        zlo, zhi = math.atanh(-RHO_MAX), math.atanh(RHO_MAX)
    elif family is CopulaFamily.FRANK:
        def to_theta(z):
            # |theta| < FRANK_MIN is numerically indistinguishable from independence
            return math.copysign(max(abs(z), FRANK_MIN), z)
        zlo, zhi = family.bounds
    else:
        def to_theta(z):
            return z
        zlo, zhi = family.bounds

    def neg_ll(z):
        theta = min(max(to_theta(z), family.bounds[0]), family.bounds[1])
        return -loglik(PairCopula(family, theta), u, v)

    res = optimize.minimize_scalar(
        neg_ll, bounds=(zlo, zhi), method="bounded",
        options={"xatol": _MLE_XATOL, "maxiter": _MLE_MAXITER},
    )
    best = start
    best_ll = loglik(start, u, v)
    if np.isfinite(res.fun) and -res.fun > best_ll:
        theta = min(max(to_theta(float(res.x)), family.bounds[0]), family.bounds[1])
        cand = PairCopula(family, theta)
        cand_ll = loglik(cand, u, v)
        if cand_ll > best_ll:
            best, best_ll = cand, cand_ll
    return best, best_ll


def sample_pair(c: PairCopula, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` pairs ``(u, v)`` by inverting the h-function."""
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    rng = np.random.default_rng(seed)
    w = rng.random((n, 2))
    v, p = w[:, 0], w[:, 1]
    u = np.atleast_1d(hinv(c, p, v))
    return np.column_stack([u, _clamp(v)])
