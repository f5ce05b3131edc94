"""Core model types, geometry, and likelihoods for spatially referenced counts.

The generative model: an unknown number N of activity centers fall
independently and uniformly on a rectangular region; a detector ("trap")
at distance d from a center records that individual on each sampling
occasion as a Poisson count with rate

    lambda0 * exp(-d**2 / (2 * sigma**2)).

Counts are summed over individuals, so individual identity is not
observed (except for an optional marked subset, see
:class:`MarkedObservations`).  Inference treats N by data augmentation:
a fixed pool of M candidate individuals with binary membership flags,
the number of active flags being N.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln


class ConfigError(ValueError):
    """A parameter, prior, or configuration value is invalid."""


class DataError(ValueError):
    """Input data violates a structural requirement."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def poisson_logpmf(k, rate):
    """Element-wise log Poisson pmf with the rate-zero convention.

    A rate of exactly 0 gives log pmf 0 for k == 0 and -inf for k > 0.
    Both arguments broadcast.
    """
    k = np.asarray(k, dtype=np.float64)
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(k < 0) or np.any(k != np.floor(k)):
        raise ValueError("counts must be non-negative integers")
    if np.any(rate < 0):
        raise ValueError("rate must be non-negative")
    shape = np.broadcast_shapes(k.shape, rate.shape)
    scalar = shape == ()
    kb = np.atleast_1d(np.broadcast_to(k, shape))
    rb = np.atleast_1d(np.broadcast_to(rate, shape))
    out = np.full(kb.shape, -np.inf)
    pos = rb > 0
    out[pos] = kb[pos] * np.log(rb[pos]) - rb[pos] - gammaln(kb[pos] + 1.0)
    out[~pos & (kb == 0.0)] = 0.0
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class StateSpace:
    """Axis-aligned rectangle on which activity centers live."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ConfigError("state space must have positive extent on both axes")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask for points (n, 2) inside the closed rectangle."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (
            (p[:, 0] >= self.xmin)
            & (p[:, 0] <= self.xmax)
            & (p[:, 1] >= self.ymin)
            & (p[:, 1] <= self.ymax)
        )

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random((n, 2))
        out = np.empty((n, 2))
        out[:, 0] = self.xmin + u[:, 0] * self.width
        out[:, 1] = self.ymin + u[:, 1] * self.height
        return out


@dataclass(frozen=True)
class TrapArray:
    """Fixed detector locations, shape (R, 2)."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 1:
            raise DataError("trap coordinates must be a non-empty (R, 2) array")
        if not np.all(np.isfinite(c)):
            raise DataError("trap coordinates must be finite")
        if np.unique(c, axis=0).shape[0] != c.shape[0]:
            warnings.warn("duplicate trap coordinates", stacklevel=2)
        object.__setattr__(self, "coords", _readonly(c))

    @property
    def R(self) -> int:
        return self.coords.shape[0]

    @classmethod
    def grid(cls, rows: int, cols: int, spacing: float = 1.0,
             origin: tuple[float, float] = (0.0, 0.0)) -> "TrapArray":
        if rows < 1 or cols < 1 or spacing <= 0:
            raise ConfigError("grid needs rows >= 1, cols >= 1, spacing > 0")
        xs = origin[0] + spacing * np.arange(cols, dtype=np.float64)
        ys = origin[1] + spacing * np.arange(rows, dtype=np.float64)
        gx, gy = np.meshgrid(xs, ys)
        return cls(np.column_stack([gx.ravel(), gy.ravel()]))

    def median_nn_spacing(self) -> float:
        """Median nearest-neighbour distance between traps (proposal scale)."""
        if self.R == 1:
            return 1.0
        d = distance_matrix(self, self.coords)
        d = d + np.where(np.eye(self.R, dtype=bool), np.inf, 0.0)
        return float(np.median(d.min(axis=1)))


def state_space_from_traps(traps: TrapArray, buffer: float) -> StateSpace:
    """Bounding box of the traps expanded by `buffer` on every side."""
    if buffer < 0:
        raise ConfigError("buffer must be non-negative")
    c = traps.coords
    space = StateSpace(
        xmin=float(c[:, 0].min() - buffer),
        xmax=float(c[:, 0].max() + buffer),
        ymin=float(c[:, 1].min() - buffer),
        ymax=float(c[:, 1].max() + buffer),
    )
    return space


# ---------------------------------------------------------------------------
# observed data


@dataclass(frozen=True)
class CountData:
    """Trap-by-occasion count matrix, shape (R, T)."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise DataError("counts must be a (R, T) matrix with R, T >= 1")
        if not np.issubdtype(c.dtype, np.integer):
            f = np.asarray(c, dtype=np.float64)
            if not np.all(np.isfinite(f)) or np.any(f != np.floor(f)):
                raise DataError("counts must be integers")
            c = f.astype(np.int64)
        if np.any(c < 0):
            raise DataError("counts must be non-negative")
        object.__setattr__(self, "counts", _readonly(c.astype(np.int64)))

    @property
    def R(self) -> int:
        return self.counts.shape[0]

    @property
    def T(self) -> int:
        return self.counts.shape[1]

    @property
    def totals(self) -> np.ndarray:
        """Per-trap totals over occasions, shape (R,)."""
        return self.counts.sum(axis=1)


@dataclass(frozen=True)
class MarkedObservations:
    """Per-individual encounter histories for the marked subset, (m, R, T)."""

    histories: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.histories)
        if h.ndim != 3 or h.shape[0] < 1:
            raise DataError("marked histories must be a non-empty (m, R, T) array")
        if not np.issubdtype(h.dtype, np.integer):
            f = np.asarray(h, dtype=np.float64)
            if not np.all(np.isfinite(f)) or np.any(f != np.floor(f)):
                raise DataError("marked histories must be integers")
            h = f.astype(np.int64)
        if np.any(h < 0):
            raise DataError("marked histories must be non-negative")
        object.__setattr__(self, "histories", _readonly(h.astype(np.int64)))

    @property
    def m(self) -> int:
        return self.histories.shape[0]

    def validate_against(self, data: CountData) -> None:
        """Check shape agreement and that marked events nowhere exceed counts."""
        if self.histories.shape[1:] != data.counts.shape:
            raise DataError(
                f"marked histories have trap/occasion shape "
                f"{self.histories.shape[1:]}, counts have {data.counts.shape}"
            )
        tot = self.histories.sum(axis=0)
        over = tot > data.counts
        if np.any(over):
            r, t = np.argwhere(over)[0]
            raise DataError(
                f"marked events exceed total count at trap {r}, occasion {t} "
                f"({tot[r, t]} > {data.counts[r, t]})"
            )


# ---------------------------------------------------------------------------
# priors and parameters


@dataclass(frozen=True)
class UniformPrior:
    """Uniform density on (0, upper]."""

    upper: float

    def __post_init__(self):
        if not (self.upper > 0 and math.isfinite(self.upper)):
            raise ConfigError("uniform prior needs a finite positive upper bound")

    def in_support(self, x: float) -> bool:
        return 0.0 < x <= self.upper

    def logpdf(self, x: float) -> float:
        return -math.log(self.upper) if self.in_support(x) else -math.inf

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.random() * self.upper)

    @property
    def mean(self) -> float:
        return self.upper / 2.0


@dataclass(frozen=True)
class GammaPrior:
    """Gamma density with shape/rate parameterisation (mean = shape/rate)."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ConfigError("gamma prior needs positive shape and rate")

    def in_support(self, x: float) -> bool:
        return x > 0.0

    def logpdf(self, x: float) -> float:
        if x <= 0:
            return -math.inf
        return (
            self.shape * math.log(self.rate)
            - math.lgamma(self.shape)
            + (self.shape - 1.0) * math.log(x)
            - self.rate * x
        )

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.gamma(self.shape, 1.0 / self.rate))

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def sd(self) -> float:
        return math.sqrt(self.shape) / self.rate


DEFAULT_UPPER = 100.0


@dataclass(frozen=True)
class PriorSpec:
    """Priors on the three scalar parameters.

    The membership probability prior is fixed at uniform(0, 1), which makes
    the number of active individuals a priori discrete-uniform on 0..M
    (on m..M when m rows are pinned to marked individuals).
    """

    sigma: UniformPrior | GammaPrior = field(
        default_factory=lambda: UniformPrior(DEFAULT_UPPER))
    lambda0: UniformPrior = field(
        default_factory=lambda: UniformPrior(DEFAULT_UPPER))

    def __post_init__(self):
        if not isinstance(self.sigma, (UniformPrior, GammaPrior)):
            raise ConfigError("sigma prior must be UniformPrior or GammaPrior")
        if not isinstance(self.lambda0, UniformPrior):
            raise ConfigError("lambda0 prior must be UniformPrior")


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters: kernel scale, baseline rate, membership probability."""

    sigma: float
    lambda0: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not (math.isfinite(self.lambda0) and self.lambda0 >= 0):
            raise ConfigError(f"lambda0 must be non-negative, got {self.lambda0}")
        if not (0.0 <= self.phi <= 1.0):
            raise ConfigError(f"phi must lie in [0, 1], got {self.phi}")


# ---------------------------------------------------------------------------
# augmented state


@dataclass(frozen=True)
class AugmentedState:
    """One configuration of the augmented individual pool.

    centers : (M, 2) candidate activity centers (all M, active or not)
    w       : (M,) 0/1 membership flags; N = w.sum()
    z       : optional (M, R, T) latent individual-by-trap-by-occasion
              counts (the conditional algorithm carries these; the
              marginal algorithm leaves them None)
    fixed   : (M,) flags marking candidates pinned active (marked animals);
              fixed candidates occupy the leading rows
    """

    centers: np.ndarray
    w: np.ndarray
    z: np.ndarray | None = None
    fixed: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 2:
            raise DataError("centers must be (M, 2)")
        M = c.shape[0]
        w = np.asarray(self.w)
        if w.shape != (M,) or not np.all((w == 0) | (w == 1)):
            raise DataError("w must be (M,) of 0/1 flags")
        w = w.astype(np.uint8)
        fixed = self.fixed
        if fixed is None:
            fixed = np.zeros(M, dtype=bool)
        else:
            fixed = np.asarray(fixed).astype(bool)
            if fixed.shape != (M,):
                raise DataError("fixed must be (M,)")
        if np.any(fixed & (w == 0)):
            raise DataError("fixed candidates must be active")
        if fixed.any():
            k = int(fixed.sum())
            if not fixed[:k].all():
                raise DataError("fixed candidates must occupy the leading rows")
        z = self.z
        if z is not None:
            z = np.asarray(z)
            if z.ndim != 3 or z.shape[0] != M:
                raise DataError("z must be (M, R, T)")
            if np.any(z < 0):
                raise DataError("z must be non-negative")
            z = z.astype(np.int64)
            if np.any(z[w == 0] != 0):
                raise DataError("inactive candidates must have all-zero z")
            object.__setattr__(self, "z", _readonly(z))
        object.__setattr__(self, "centers", _readonly(c))
        object.__setattr__(self, "w", _readonly(w))
        object.__setattr__(self, "fixed", _readonly(fixed))

    @property
    def M(self) -> int:
        return self.centers.shape[0]

    @property
    def N(self) -> int:
        return int(self.w.sum())

    def validate(self, space: StateSpace, data: CountData | None = None) -> None:
        """Raise DataError on any violated structural invariant."""
        if not np.all(space.contains(self.centers)):
            raise DataError("some centers fall outside the state space")
        if self.z is not None and data is not None:
            tot = self.z.sum(axis=0)
            if not np.array_equal(tot, data.counts):
                raise DataError("latent counts do not sum to the observed counts")


# ---------------------------------------------------------------------------
# model operations


def distance_matrix(traps: TrapArray, centers: np.ndarray) -> np.ndarray:
    """Euclidean distances, shape (n_centers, R)."""
    c = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if c.shape[1] != 2:
        raise DataError("centers must be (n, 2)")
    t = traps.coords
    return np.hypot(c[:, 0:1] - t[:, 0], c[:, 1:2] - t[:, 1])


def kernel(d, sigma: float) -> np.ndarray:
    """Gaussian distance-decay kernel exp(-d^2 / (2 sigma^2))."""
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ConfigError(f"sigma must be positive, got {sigma}")
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ConfigError("distances must be non-negative")
    return np.exp(-(d * d) / (2.0 * sigma * sigma))


def trap_intensity(params: ModelParams, state: AugmentedState,
                   traps: TrapArray) -> np.ndarray:
    """Per-occasion expected count at each trap, summed over active centers.

    Returns shape (R,).  Inactive candidates contribute nothing.
    """
    act = state.w == 1
    if not act.any():
        return np.zeros(traps.R)
    d = distance_matrix(traps, state.centers[act])
    return params.lambda0 * kernel(d, params.sigma).sum(axis=0)


def marginal_loglik(data: CountData, params: ModelParams,
                    state: AugmentedState, traps: TrapArray) -> float:
    """Log-likelihood of per-trap total counts given centers and flags.

    Identity is marginalised: the total at trap r over T occasions is
    Poisson with mean T * (per-occasion trap intensity).  Traps with zero
    intensity contribute 0 if their total is zero and -inf otherwise.
    """
    if data.R != traps.R:
        raise DataError(f"counts have {data.R} traps, array has {traps.R}")
    lam = data.T * trap_intensity(params, state, traps)
    return float(np.sum(poisson_logpmf(data.totals, lam)))


def conditional_loglik(z: np.ndarray, params: ModelParams,
                       state: AugmentedState, traps: TrapArray) -> float:
    """Log-likelihood of latent individual-level counts z, shape (M, R, T).

    Each z[i, r, t] is Poisson with rate w_i * lambda0 * kernel(d_ir);
    an inactive candidate holding a positive count yields -inf (its rate
    is exactly zero).
    """
    z = np.asarray(z)
    if z.ndim != 3 or z.shape[0] != state.M or z.shape[1] != traps.R:
        raise DataError(f"z must be (M={state.M}, R={traps.R}, T), got {z.shape}")
    if np.any(z < 0):
        raise DataError("z must be non-negative")
    d = distance_matrix(traps, state.centers)
    lam = params.lambda0 * kernel(d, params.sigma) * (state.w == 1)[:, None]
    return float(np.sum(poisson_logpmf(z, lam[:, :, None])))
