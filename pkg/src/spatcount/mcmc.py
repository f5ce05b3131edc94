"""Metropolis-within-Gibbs engines for the augmented count model.

Two formulations share one chain-state container:

* "marginal": individual identity integrated out; the likelihood is the
  per-trap Poisson of total counts and latent z is never materialised.
* "conditional": latent individual-level counts z are carried and
  re-allocated each sweep by trap/occasion multinomials, giving w and
  the centers closed-form or cheap conditionals.

Fixed sweep order: z (conditional only) -> w -> phi -> s (all
candidates) -> sigma -> lambda0.  All randomness is drawn from a single
numpy Generator in a documented order, so a (seed, inputs, config)
triple pins the trajectory bit-for-bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._kernels import KERNEL_LOG_CUTOFF, s_sweep, w_sweep_marginal
from ._rng import generator_for
from .model import (
    AugmentedState,
    ConfigError,
    CountData,
    DataError,
    GammaPrior,
    MarkedObservations,
    ModelParams,
    PriorSpec,
    StateSpace,
    TrapArray,
    poisson_logpmf,
)

ALGORITHMS = ("marginal", "conditional")

_ADAPT_EVERY = 100
_ADAPT_UP = 1.1
_ADAPT_DOWN = 0.9
_ADAPT_HIGH = 0.45
_ADAPT_LOW = 0.15
_INIT_RETRIES = 10


@dataclass
class McmcConfig:
    """Sampler configuration.

    Beyond the core fields, four switches exist for validation work:
    sample_sigma / sample_lambda0 pin a parameter at its initial value
    when False (set init_sigma / init_lambda0 to choose it);
    likelihood_off runs the prior-only sampler (every likelihood ratio
    treated as 1) for distribution-recovery checks; validate_every > 0
    re-derives every cache and invariant each k sweeps and raises on
    drift.
    """

    M: int
    algorithm: str = "marginal"
    iterations: int = 30_000
    burn_in: int = 5_000
    thin: int = 5
    chains: int = 3
    proposal_sd_s: float | None = None   # default: median trap spacing
    proposal_sd_log_sigma: float = 0.1
    proposal_sd_log_lambda0: float = 0.1
    adapt: bool = True
    seed: int = 0
    center_stride: int | None = None     # default: thin (snapshot every kept draw)
    sample_sigma: bool = True
    sample_lambda0: bool = True
    init_sigma: float | None = None
    init_lambda0: float | None = None
    likelihood_off: bool = False
    validate_every: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if not (0 <= self.burn_in < self.iterations):
            raise ConfigError("need 0 <= burn_in < iterations")
        if self.thin < 1 or self.chains < 1:
            raise ConfigError("thin and chains must be >= 1")
        if self.iterations - self.burn_in < self.thin:
            raise ConfigError("no kept draws: iterations - burn_in < thin")
        for name in ("proposal_sd_s", "proposal_sd_log_sigma",
                     "proposal_sd_log_lambda0"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.init_sigma is not None and self.init_sigma <= 0:
            raise ConfigError("init_sigma must be positive")
        if self.init_lambda0 is not None and self.init_lambda0 <= 0:
            raise ConfigError("init_lambda0 must be positive")
        if self.center_stride is not None and self.center_stride < 1:
            raise ConfigError("center_stride must be >= 1")

    def resolved_center_stride(self) -> int:
        # default: snapshot every kept draw, so the density raster's
        # mass equals the posterior mean abundance exactly; raise it
        # explicitly when center storage is too heavy
        if self.center_stride is not None:
            return self.center_stride
        return self.thin


@dataclass(frozen=True)
class ChainOutput:
    """Kept draws and center snapshots of one chain."""

    chain_id: int
    seed: int
    sigma: np.ndarray          # (n_kept,)
    lambda0: np.ndarray
    phi: np.ndarray
    N: np.ndarray              # (n_kept,) int64
    D: np.ndarray              # N / area, exact per draw
    centers_x: np.ndarray      # (n_snapshots, M)
    centers_y: np.ndarray
    centers_w: np.ndarray      # (n_snapshots, M) uint8
    center_stride: int
    acceptance_rates: dict
    M: int
    area: float

    @property
    def n_kept(self) -> int:
        return self.sigma.shape[0]


def _logit(p: float) -> float:
    p = min(max(p, 1e-300), 1.0 - 1e-16)
    return math.log(p) - math.log1p(-p)


def kernel_rows(D2: np.ndarray, sigma: float) -> np.ndarray:
    """Truncated kernel from squared distances; matches the compiled rule."""
    e = D2 / (2.0 * sigma * sigma)
    K = np.exp(-np.minimum(e, 745.0))
    K[e > KERNEL_LOG_CUTOFF] = 0.0
    return K


class ChainState:
    """Mutable working state of one chain, with incremental caches.

    Caches: D2 (squared center-trap distances, M x R), K (kernel
    matrix), Ksum (row sums), Ssum (per-trap K sum over active unmarked
    candidates; the marginal likelihood's intensity is lambda0 * Ssum).
    zdot holds occasion-summed counts per candidate row: the marked
    rows always, and every row under the conditional algorithm.
    """

    def __init__(self, data: CountData, traps: TrapArray, space: StateSpace,
                 priors: PriorSpec, cfg: McmcConfig,
                 marked: MarkedObservations | None,
                 params: ModelParams, aug: AugmentedState):
        self.data = data
        self.traps = traps
        self.space = space
        self.priors = priors
        self.cfg = cfg
        self.marked = marked
        self.R = traps.R
        self.T = data.T
        self.M = cfg.M
        self.m = marked.m if marked is not None else 0
        self.algorithm = cfg.algorithm
        self.likelihood_off = cfg.likelihood_off
        self.omit_sigma_jacobian = False   # test fixture hook

        self.tx = np.ascontiguousarray(traps.coords[:, 0])
        self.ty = np.ascontiguousarray(traps.coords[:, 1])

        self.sigma = params.sigma
        self.lambda0 = params.lambda0
        self.phi = params.phi
        self.sx = np.array(aug.centers[:, 0])
        self.sy = np.array(aug.centers[:, 1])
        self.w = np.array(aug.w, dtype=np.uint8)
        self.is_marked = np.zeros(self.M, dtype=bool)
        self.is_marked[:self.m] = True
        self.unmarked_idx = np.arange(self.m, self.M, dtype=np.int64)

        self.zdot = np.zeros((self.M, self.R))
        if marked is not None:
            self.zdot[:self.m] = marked.histories.sum(axis=2)
        self.z = None
        if cfg.algorithm == "conditional":
            if aug.z is None:
                raise ConfigError("conditional algorithm needs an initial z")
            self.z = np.array(aug.z, dtype=np.int64)
            self.zdot = self.z.sum(axis=2).astype(np.float64)

        self._set_count_arrays(data)

        self.D2 = np.empty((self.M, self.R))
        self._recompute_d2()
        self.refresh_kernel_cache()

        self.sd_s = (cfg.proposal_sd_s if cfg.proposal_sd_s is not None
                     else traps.median_nn_spacing())
        self.sd_log_sigma = cfg.proposal_sd_log_sigma
        self.sd_log_lambda0 = cfg.proposal_sd_log_lambda0

        self._knew = np.empty(self.R)
        self._d2new = np.empty(self.R)
        names = ("s_active", "s_inactive", "sigma", "lambda0", "w_flips")
        self.tot = {k: [0, 0] for k in names}
        self.win = {k: [0, 0] for k in names}

    # -- cache plumbing ----------------------------------------------------

    def _set_count_arrays(self, data: CountData) -> None:
        self.data = data
        totals = data.totals
        mk = (self.marked.histories.sum(axis=(0, 2))
              if self.marked is not None else 0)
        resid = totals - mk
        if np.any(resid < 0):
            raise DataError("marked events exceed counts at some trap")
        self.totals_all = totals
        self.n_events = int(totals.sum())
        self.resid = resid.astype(np.float64)
        self.pos = np.flatnonzero(resid > 0).astype(np.int64)
        self.resid_pos = self.resid[self.pos]
        if self.algorithm == "conditional":
            mk_rt = (self.marked.histories.sum(axis=0)
                     if self.marked is not None else 0)
            self.counts_resid = (data.counts - mk_rt).astype(np.int64)
            if np.any(self.counts_resid < 0):
                raise DataError("marked events exceed counts at some cell")

    def _recompute_d2(self) -> None:
        np.subtract.outer(self.sx, self.tx, out=self.D2)
        self.D2 *= self.D2
        dy = np.subtract.outer(self.sy, self.ty)
        self.D2 += dy * dy

    def refresh_kernel_cache(self) -> None:
        self.K = kernel_rows(self.D2, self.sigma)
        self.Ksum = self.K.sum(axis=1)
        self.refresh_ssum()

    def refresh_ssum(self) -> None:
        live = (self.w == 1) & ~self.is_marked
        if live.any():
            self.Ssum = self.K[live].sum(axis=0)
        else:
            self.Ssum = np.zeros(self.R)

    def _classes(self) -> np.ndarray:
        """Likelihood role per candidate for the center sweep."""
        act = self.w == 1
        cls = np.zeros(self.M, dtype=np.uint8)
        if self.algorithm == "conditional":
            cls[act] = 2
        else:
            cls[act & ~self.is_marked] = 1
            cls[act & self.is_marked] = 2
        return cls

    @property
    def N(self) -> int:
        return int(self.w.sum())

    @property
    def params(self) -> ModelParams:
        return ModelParams(sigma=self.sigma, lambda0=self.lambda0, phi=self.phi)

    def augmented(self) -> AugmentedState:
        fixed = self.is_marked.copy()
        return AugmentedState(
            centers=np.column_stack([self.sx, self.sy]),
            w=self.w.copy(),
            z=None if self.z is None else self.z.copy(),
            fixed=fixed)

    # -- likelihood --------------------------------------------------------

    def loglik(self) -> float:
        """Log-likelihood of the observations given the current state.

        Marginal: Poisson of per-trap residual totals with intensity
        T*lambda0*Ssum, plus the marked rows' occasion-total Poisson
        terms.  Conditional: Poisson of every active candidate's latent
        counts.  Constant terms in the parameters are included, so the
        value is comparable across states but not across algorithms.
        """
        if self.likelihood_off:
            return 0.0
        Tl = self.T * self.lambda0
        if self.algorithm == "marginal":
            # incremental Ssum can carry -1e-17-scale residue where the
            # true value is an exact 0; clamp before use
            ll = float(np.sum(poisson_logpmf(
                self.resid, Tl * np.maximum(self.Ssum, 0.0))))
            if self.m:
                ll += float(np.sum(poisson_logpmf(
                    self.zdot[:self.m], Tl * self.K[:self.m])))
            return ll
        act = self.w == 1
        lam = self.lambda0 * self.K[act]
        zs = self.zdot[act]
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(zs > 0, zs * np.log(lam, where=lam > 0,
                                              out=np.full_like(lam, -np.inf)), 0.0)
        ll = float(np.sum(lg) - self.T * np.sum(lam))
        ll -= float(np.sum(gammaln(self.z[act] + 1.0)))
        # inactive rows: rate 0 and z 0 contribute exactly 0
        if np.any((self.zdot > 0) & ~act[:, None]):
            return -math.inf
        return ll

    # -- observation swap (successive-conditional harness) ------------------

    def set_observations(self, data: CountData, z: np.ndarray | None = None) -> None:
        """Replace the observed counts (and latent z under conditional)."""
        if data.counts.shape[0] != self.R or data.T != self.T:
            raise DataError("replacement counts must keep the same R and T")
        if self.algorithm == "conditional":
            if z is None:
                raise ConfigError("conditional replacement needs latent z")
            z = np.asarray(z, dtype=np.int64)
            if z.shape != (self.M, self.R, self.T):
                raise DataError("latent z must be (M, R, T)")
            self.z = z.copy()
            self.zdot = self.z.sum(axis=2).astype(np.float64)
        self._set_count_arrays(data)

    # -- debug validation ----------------------------------------------------

    def validate(self) -> None:
        """Re-derive every cache and invariant; raise RuntimeError on drift."""
        if not np.all((self.w == 0) | (self.w == 1)):
            raise RuntimeError("w flags not binary")
        if not np.all(self.w[self.is_marked] == 1):
            raise RuntimeError("marked candidate deactivated")
        pts = np.column_stack([self.sx, self.sy])
        if not np.all(self.space.contains(pts)):
            raise RuntimeError("center left the state space")
        d2 = (self.sx[:, None] - self.tx) ** 2 + (self.sy[:, None] - self.ty) ** 2
        if not np.allclose(d2, self.D2, rtol=1e-9, atol=1e-12):
            raise RuntimeError("D2 cache drifted")
        K = kernel_rows(self.D2, self.sigma)
        if not np.allclose(K, self.K, rtol=1e-9, atol=1e-300):
            raise RuntimeError("kernel cache drifted")
        if not np.allclose(self.K.sum(axis=1), self.Ksum, rtol=1e-9, atol=1e-12):
            raise RuntimeError("Ksum cache drifted")
        if self.algorithm == "marginal":
            # Ssum is live only under the marginal likelihood
            live = (self.w == 1) & ~self.is_marked
            ss = self.K[live].sum(axis=0) if live.any() else np.zeros(self.R)
            if not np.allclose(ss, self.Ssum, rtol=1e-9, atol=1e-12):
                raise RuntimeError("Ssum cache drifted")
        if self.z is not None:
            if np.any(self.z < 0):
                raise RuntimeError("negative latent count")
            if np.any(self.z[self.w == 0] != 0):
                raise RuntimeError("inactive candidate holds latent counts")
            if not np.array_equal(self.z.sum(axis=0), self.data.counts):
                raise RuntimeError("latent counts do not sum to observations")
            if self.marked is not None and not np.array_equal(
                    self.z[:self.m], self.marked.histories):
                raise RuntimeError("marked latent rows were modified")
            if not np.allclose(self.z.sum(axis=2), self.zdot):
                raise RuntimeError("zdot cache drifted")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise RuntimeError("sigma left its support")
        if not math.isfinite(self.loglik()):
            raise RuntimeError("log-likelihood is not finite")

    # -- parameter update deltas --------------------------------------------

    def _sigma_loglik_delta(self, new_sigma: float) -> float:
        if self.likelihood_off:
            return 0.0
        act = np.flatnonzero(self.w == 1)
        if act.size == 0:
            return 0.0
        Knew = kernel_rows(self.D2[act], new_sigma)
        Tl = self.T * self.lambda0
        if self.algorithm == "marginal":
            mk = act < self.m
            Snew = Knew[~mk].sum(axis=0) if (~mk).any() else np.zeros(self.R)
            sp = Snew[self.pos]
            if np.any(sp <= 0.0):
                return -math.inf
            delta = float(np.dot(self.resid_pos, np.log(sp) - np.log(self.Ssum[self.pos])))
            delta -= Tl * float(Snew.sum() - self.Ssum.sum())
            if self.m:
                Km_new = Knew[mk]
                Km_old = self.K[act[mk]]
                zm = self.zdot[:self.m]
                hot = zm > 0
                if np.any(Km_new[hot] <= 0.0):
                    return -math.inf
                delta += float(np.sum(zm[hot] * (np.log(Km_new[hot])
                                                 - np.log(Km_old[hot]))))
                delta -= Tl * float(Km_new.sum() - Km_old.sum())
            return delta
        zs = self.zdot[act]
        hot = zs > 0
        if np.any(Knew[hot] <= 0.0):
            return -math.inf
        Kold = self.K[act]
        delta = float(np.sum(zs[hot] * (np.log(Knew[hot]) - np.log(Kold[hot]))))
        delta -= Tl * float(Knew.sum() - Kold.sum())
        return delta

    # -- sweep driver --------------------------------------------------------

    def sweep(self, rng: np.random.Generator) -> None:
        if self.algorithm == "marginal":
            self.refresh_ssum()   # kills incremental-update float drift
        else:
            update_z(self, rng)
        update_w(self, rng)
        update_phi(self, rng)
        update_s(self, rng)
        update_sigma(self, rng)
        update_lambda0(self, rng)

    def _bump(self, name: str, acc: int, prop: int) -> None:
        self.tot[name][0] += acc
        self.tot[name][1] += prop
        self.win[name][0] += acc
        self.win[name][1] += prop

    def adapt_window(self) -> None:
        """Rescale proposal sds from the last window's acceptance rates."""
        for name, attr in (("s_active", "sd_s"),
                           ("sigma", "sd_log_sigma"),
                           ("lambda0", "sd_log_lambda0")):
            acc, prop = self.win[name]
            if prop > 0:
                rate = acc / prop
                if rate > _ADAPT_HIGH:
                    setattr(self, attr, getattr(self, attr) * _ADAPT_UP)
                elif rate < _ADAPT_LOW:
                    setattr(self, attr, getattr(self, attr) * _ADAPT_DOWN)
        for v in self.win.values():
            v[0] = 0
            v[1] = 0

    def reset_counters(self) -> None:
        for v in self.tot.values():
            v[0] = 0
            v[1] = 0

    def acceptance_rates(self) -> dict:
        out = {}
        for k, (acc, prop) in self.tot.items():
            out[k] = (acc / prop) if prop > 0 else None
        return out


# ---------------------------------------------------------------------------
# update operations (Metropolis-within-Gibbs blocks)


def update_z(st: ChainState, rng: np.random.Generator) -> None:
    """Re-allocate residual counts among active unmarked candidates.

    Conditional algorithm only.  Cells are visited in row-major
    (trap, occasion) order; each positive residual cell draws one
    multinomial with probabilities proportional to the active unmarked
    kernel values at that trap.  Marked rows are never touched.
    """
    if st.z is None:
        raise ConfigError("latent z exists only under the conditional algorithm")
    act = np.flatnonzero((st.w == 1) & ~st.is_marked)
    unm = ~st.is_marked
    st.z[unm] = 0
    cr = st.counts_resid
    Kact = st.K[act] if act.size else None
    for r in range(st.R):
        col_tot = float(Kact[:, r].sum()) if act.size else 0.0
        pv = None
        for t in range(st.T):
            n = int(cr[r, t])
            if n == 0:
                continue
            if act.size == 0 or col_tot <= 0.0:
                raise RuntimeError(
                    f"no active intensity at trap {r} with positive count; "
                    "state is infeasible")
            if pv is None:
                pv = Kact[:, r] / col_tot
            st.z[act, r, t] = rng.multinomial(n, pv)
    st.zdot[unm] = st.z[unm].sum(axis=2)


def update_w(st: ChainState, rng: np.random.Generator) -> None:
    """Gibbs update of the unmarked membership flags (random sweep order)."""
    if st.unmarked_idx.size == 0:
        return
    if st.algorithm == "marginal":
        order = rng.permutation(st.unmarked_idx)
        u = rng.random(order.size)
        if st.likelihood_off:
            Tl = 0.0
            pos = np.zeros(0, dtype=np.int64)
            rp = np.zeros(0)
        else:
            Tl = st.T * st.lambda0
            pos = st.pos
            rp = st.resid_pos
        flips = w_sweep_marginal(order, u, st.K, st.Ksum, st.w, st.Ssum,
                                 rp, pos, Tl, _logit(st.phi))
        st._bump("w_flips", int(flips), order.size)
        return
    # conditional: flags with any latent count are pinned on; the rest
    # compare the empty-row Poisson mass against staying out.
    idx = st.unmarked_idx
    u = rng.random(idx.size)
    empty = ~(st.zdot[idx] > 0).any(axis=1)
    if st.likelihood_off:
        lo = np.full(idx.size, _logit(st.phi))
    else:
        lo = _logit(st.phi) - st.T * st.lambda0 * st.Ksum[idx]
    with np.errstate(over="ignore"):
        p1 = 1.0 / (1.0 + np.exp(-lo))
    old = st.w[idx].copy()
    new = np.where(empty, (u < p1).astype(np.uint8), np.uint8(1))
    st.w[idx] = new
    st._bump("w_flips", int(np.count_nonzero(old != new)), idx.size)


def update_phi(st: ChainState, rng: np.random.Generator) -> None:
    """Conjugate Beta draw of the membership probability.

    Only the free (unmarked) flags are Bernoulli(phi) draws; marked rows
    are conditioned on, not sampled, so they must stay out of the Beta
    counts.  Including them would tilt phi toward 1 before any counts
    are seen and inflate N through candidates the data cannot reach.
    With m pinned rows this keeps N - m a priori uniform on 0..M-m.
    """
    free = st.M - st.m
    n_on = int(st.w.sum()) - st.m
    st.phi = float(rng.beta(1.0 + n_on, 1.0 + free - n_on))


def update_s(st: ChainState, rng: np.random.Generator) -> None:
    """Random-walk Metropolis sweep over all candidate centers."""
    M = st.M
    steps = rng.normal(0.0, st.sd_s, size=(M, 2))
    u = rng.random(M)
    with np.errstate(divide="ignore"):
        logu = np.log(u)
    cls = st._classes()
    use_lik = not st.likelihood_off
    Tl = st.T * st.lambda0 if use_lik else 0.0
    inv2s2 = 1.0 / (2.0 * st.sigma * st.sigma)
    sp = st.space
    aa, pa, ai, pi = s_sweep(
        st.sx, st.sy, cls, st.tx, st.ty, st.D2, st.K, st.Ksum, st.Ssum,
        st.zdot, st.resid_pos, st.pos, Tl, inv2s2,
        sp.xmin, sp.xmax, sp.ymin, sp.ymax, steps, logu, use_lik,
        st._d2new, st._knew)
    st._bump("s_active", int(aa), int(pa))
    st._bump("s_inactive", int(ai), int(pi))


def update_sigma(st: ChainState, rng: np.random.Generator) -> None:
    """Log-scale random-walk Metropolis update of the kernel scale."""
    if not st.cfg.sample_sigma:
        return
    step = float(rng.normal()) * st.sd_log_sigma
    u = float(rng.random())
    logu = math.log(u) if u > 0.0 else -math.inf
    new = st.sigma * math.exp(step)
    st._bump("sigma", 0, 1)
    prior = st.priors.sigma
    if not prior.in_support(new):
        return
    ratio = st._sigma_loglik_delta(new)
    ratio += prior.logpdf(new) - prior.logpdf(st.sigma)
    if not st.omit_sigma_jacobian:
        ratio += step   # log(new/old): log-normal proposal Jacobian
    if ratio >= 0.0 or logu < ratio:
        st.tot["sigma"][0] += 1
        st.win["sigma"][0] += 1
        st.sigma = new
        st.refresh_kernel_cache()


def update_lambda0(st: ChainState, rng: np.random.Generator) -> None:
    """Log-scale random-walk Metropolis update of the baseline rate.

    The likelihood depends on lambda0 through n_total * log(lambda0)
    - T * lambda0 * (active kernel mass) under both algorithms, so the
    delta is closed-form.
    """
    if not st.cfg.sample_lambda0:
        return
    step = float(rng.normal()) * st.sd_log_lambda0
    u = float(rng.random())
    logu = math.log(u) if u > 0.0 else -math.inf
    new = st.lambda0 * math.exp(step)
    st._bump("lambda0", 0, 1)
    prior = st.priors.lambda0
    if not prior.in_support(new):
        return
    if st.likelihood_off:
        ratio = 0.0
    else:
        kact = float(st.Ksum[st.w == 1].sum())
        ratio = st.n_events * step - st.T * (new - st.lambda0) * kact
    ratio += prior.logpdf(new) - prior.logpdf(st.lambda0)
    ratio += step
    if ratio >= 0.0 or logu < ratio:
        st.tot["lambda0"][0] += 1
        st.win["lambda0"][0] += 1
        st.lambda0 = new


# ---------------------------------------------------------------------------
# initialization


def initialize(data: CountData, traps: TrapArray, space: StateSpace,
               priors: PriorSpec, cfg: McmcConfig,
               marked: MarkedObservations | None,
               rng: np.random.Generator) -> tuple[ModelParams, AugmentedState]:
    """Heuristic feasible starting point.

    sigma comes from its prior (gamma) or twice the trap spacing
    (uniform prior); the active count guess divides total detections by
    the expected events per individual; lambda0 then matches the mean
    per-trap total.  Active centers start near count-weighted random
    traps; a coverage pass activates spares at any positive-count trap
    no active candidate can reach.
    """
    R, T = data.R, data.T
    m = marked.m if marked is not None else 0
    M = cfg.M
    totals = data.totals
    total = int(totals.sum())
    spacing = traps.median_nn_spacing()

    if cfg.init_sigma is not None:
        sigma0 = cfg.init_sigma
    elif isinstance(priors.sigma, GammaPrior):
        sigma0 = priors.sigma.sample(rng)
    else:
        sigma0 = min(2.0 * spacing, priors.sigma.upper)
    if not priors.sigma.in_support(sigma0):
        raise ConfigError(f"initial sigma {sigma0} outside its prior support")

    lam_prov = 0.5
    r_eff = min(max(1.0, 2.0 * math.pi * sigma0 * sigma0 / (spacing * spacing)), R)
    n_init = max(m, math.ceil(total / (T * lam_prov * r_eff)), 1)
    if cfg.algorithm == "conditional":
        # conditional-on-z augmentation recruits new members at rate
        # exp(-T*lambda0*Ksum) and can freeze when started too small;
        # start from half the ceiling and let the surplus shed instead
        n_init = max(n_init, (M + 1) // 2)
    n_init = min(n_init, M)

    if cfg.init_lambda0 is not None:
        lam0 = cfg.init_lambda0
    else:
        lam0 = float(totals.mean()) / (T * max(1, n_init))
        lam0 = min(max(lam0, 1e-3), priors.lambda0.upper)
    if not priors.lambda0.in_support(lam0):
        raise ConfigError(f"initial lambda0 {lam0} outside its prior support")

    phi0 = (n_init + 1.0) / (M + 2.0)

    w = np.zeros(M, dtype=np.uint8)
    w[:n_init] = 1
    centers = np.empty((M, 2))
    if total > 0:
        pweights = totals / total
    else:
        pweights = np.full(R, 1.0 / R)
    tidx = rng.choice(R, size=n_init, p=pweights, replace=True)
    jitter = rng.uniform(-0.5 * spacing, 0.5 * spacing, size=(n_init, 2))
    centers[:n_init] = traps.coords[tidx] + jitter
    if n_init < M:
        centers[n_init:] = space.sample_uniform(M - n_init, rng)
    centers[:, 0] = np.clip(centers[:, 0], space.xmin, space.xmax)
    centers[:, 1] = np.clip(centers[:, 1], space.ymin, space.ymax)

    # marked individuals start at the centroid of their own detections
    cutoff_d2 = 2.0 * sigma0 * sigma0 * KERNEL_LOG_CUTOFF
    if m:
        zdot_m = marked.histories.sum(axis=2)
        for i in range(m):
            hot = np.flatnonzero(zdot_m[i] > 0)
            if hot.size == 0:
                continue
            wts = zdot_m[i, hot].astype(np.float64)
            centers[i] = (traps.coords[hot] * (wts / wts.sum())[:, None]).sum(axis=0)
            d2 = ((traps.coords[hot] - centers[i]) ** 2).sum(axis=1)
            if np.any(d2 >= cutoff_d2):
                centers[i] = traps.coords[hot[np.argmax(wts)]]

    # coverage pass: every positive residual trap needs a reachable
    # active unmarked candidate
    mk_events = (marked.histories.sum(axis=(0, 2)) if marked is not None else 0)
    resid = totals - mk_events
    next_spare = n_init
    for r in np.flatnonzero(resid > 0):
        d2 = ((centers[m:] - traps.coords[r]) ** 2).sum(axis=1)
        covered = np.any((d2 < cutoff_d2) & (w[m:] == 1))
        if not covered:
            if next_spare >= M:
                raise ConfigError(
                    f"augmentation ceiling M={M} too small to cover all "
                    "positive-count traps at initialization")
            centers[next_spare] = traps.coords[r]
            w[next_spare] = 1
            next_spare += 1

    fixed = np.zeros(M, dtype=bool)
    fixed[:m] = True

    z0 = None
    if cfg.algorithm == "conditional":
        z0 = np.zeros((M, R, T), dtype=np.int64)
        if m:
            z0[:m] = marked.histories
    params = ModelParams(sigma=sigma0, lambda0=lam0, phi=phi0)
    aug = AugmentedState(centers=centers, w=w, z=z0, fixed=fixed)
    return params, aug


def _build_state(data, traps, space, priors, cfg, marked,
                 rng: np.random.Generator) -> ChainState:
    """initialize + allocate latent z + feasibility retries."""
    last_err = None
    for _ in range(_INIT_RETRIES):
        params, aug = initialize(data, traps, space, priors, cfg, marked, rng)
        st = ChainState(data, traps, space, priors, cfg, marked, params, aug)
        if st.algorithm == "conditional":
            update_z(st, rng)
        ll = st.loglik()
        if math.isfinite(ll):
            return st
        last_err = f"non-finite initial log-likelihood ({ll})"
    raise ConfigError(
        f"initialization failed after {_INIT_RETRIES} attempts: {last_err}")


# ---------------------------------------------------------------------------
# chain driver


def _check_problem(data: CountData, traps: TrapArray, space: StateSpace,
                   cfg: McmcConfig, marked: MarkedObservations | None) -> None:
    if data.R != traps.R:
        raise DataError(f"counts have {data.R} traps, trap array has {traps.R}")
    if not np.all(space.contains(traps.coords)):
        raise DataError("some traps fall outside the state space")
    m = marked.m if marked is not None else 0
    if marked is not None:
        marked.validate_against(data)
    if cfg.M < max(m, 1):
        raise ConfigError(f"M={cfg.M} below the data-implied minimum {max(m, 1)}")
    if cfg.M == m and int(data.totals.sum() - (marked.histories.sum() if marked else 0)) > 0:
        raise ConfigError("M leaves no unmarked candidates but unmarked "
                          "detections exist")


def run_chain(data: CountData, traps: TrapArray, space: StateSpace,
              priors: PriorSpec, cfg: McmcConfig,
              marked: MarkedObservations | None = None,
              chain_id: int = 0) -> ChainOutput:
    """Run one chain; fully determined by (inputs, cfg, chain_id)."""
    _check_problem(data, traps, space, cfg, marked)
    rng = generator_for(cfg.seed, chain_id)
    st = _build_state(data, traps, space, priors, cfg, marked, rng)

    iters, burn, thin = cfg.iterations, cfg.burn_in, cfg.thin
    stride = cfg.resolved_center_stride()
    nk = (iters - burn) // thin
    ns = (iters - burn) // stride
    sig = np.empty(nk)
    lam = np.empty(nk)
    phi = np.empty(nk)
    N = np.empty(nk, dtype=np.int64)
    cx = np.empty((ns, st.M))
    cy = np.empty((ns, st.M))
    cw = np.empty((ns, st.M), dtype=np.uint8)
    area = space.area

    ki = si = 0
    for it in range(1, iters + 1):
        st.sweep(rng)
        if cfg.validate_every and it % cfg.validate_every == 0:
            st.validate()
        if it <= burn:
            if cfg.adapt and it % _ADAPT_EVERY == 0:
                st.adapt_window()
            if it == burn:
                st.reset_counters()
            continue
        d = it - burn
        if d % thin == 0:
            sig[ki] = st.sigma
            lam[ki] = st.lambda0
            phi[ki] = st.phi
            N[ki] = st.N
            ki += 1
        if d % stride == 0:
            cx[si] = st.sx
            cy[si] = st.sy
            cw[si] = st.w
            si += 1

    return ChainOutput(
        chain_id=chain_id,
        seed=cfg.seed,
        sigma=sig, lambda0=lam, phi=phi, N=N, D=N / area,
        centers_x=cx, centers_y=cy, centers_w=cw,
        center_stride=stride,
        acceptance_rates=st.acceptance_rates(),
        M=st.M,
        area=area,
    )


def _run_chain_job(args):
    data, traps, space, priors, cfg, marked, chain_id = args
    return run_chain(data, traps, space, priors, cfg, marked, chain_id)


def run_chains(data: CountData, traps: TrapArray, space: StateSpace,
               priors: PriorSpec, cfg: McmcConfig,
               marked: MarkedObservations | None = None,
               jobs: int = 1) -> list[ChainOutput]:
    """Run cfg.chains chains; results identical for any job count."""
    ids = list(range(cfg.chains))
    if jobs <= 1 or cfg.chains == 1:
        return [run_chain(data, traps, space, priors, cfg, marked, c)
                for c in ids]
    work = [(data, traps, space, priors, cfg, marked, c) for c in ids]
    with ProcessPoolExecutor(max_workers=min(jobs, cfg.chains)) as ex:
        return list(ex.map(_run_chain_job, work))
