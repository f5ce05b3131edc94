"""Independent validation oracles for the sampler.

Everything here recomputes model quantities from scratch (own distance
and kernel arithmetic, exhaustive enumeration) and shares only the
Poisson log-pmf primitive with the main engine, so a bug in the engine's
caching or update algebra cannot silently agree with the oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import ConfigError, CountData, StateSpace, TrapArray, poisson_logpmf

_BUDGET = 10 ** 8


class BudgetError(RuntimeError):
    """Enumeration size exceeds the combinatorial budget."""


@dataclass(frozen=True)
class GridPosterior:
    """Posterior table for the number of active individuals N."""

    pmf: np.ndarray          # (M_small + 1,)
    loglik: np.ndarray       # log P(data | N)
    M_small: int
    G: int
    sigma: float
    lambda0: float

    def total_variation(self, other: np.ndarray) -> float:
        q = np.asarray(other, dtype=np.float64)
        if q.shape != self.pmf.shape:
            raise ValueError("pmf length mismatch")
        return 0.5 * float(np.abs(self.pmf - q).sum())


def brute_force_N_posterior(
    data: CountData,
    traps: TrapArray,
    space: StateSpace,
    sigma: float,
    lambda0: float,
    M_small: int,
    G: int = 21,
) -> GridPosterior:
    """Exact posterior of N by midpoint quadrature over center placements.

    For each N in 0..M_small the marginal likelihood integrates the
    per-trap Poisson totals over all N center positions, approximated by
    averaging over a uniform G x G lattice of cell midpoints (the centers
    are a priori uniform, so the average is unweighted).  The membership
    probability is integrated out exactly, leaving a discrete-uniform
    prior on N, so the posterior is a softmax of the log-likelihood row.
    """
    if traps.R > 4:
        raise ConfigError("oracle restricted to R <= 4 traps")
    if not (0 <= M_small <= 3):
        raise ConfigError("oracle restricted to M_small <= 3")
    if not (2 <= G <= 41):
        raise ConfigError("oracle restricted to 2 <= G <= 41")
    if sigma <= 0 or lambda0 < 0:
        raise ConfigError("need sigma > 0 and lambda0 >= 0")
    if float(G) ** (2 * M_small) > _BUDGET:
        raise BudgetError(
            f"G^(2N) = {G}^{2 * M_small} exceeds the 1e8 enumeration budget")

    totals = data.totals.astype(np.float64)
    Tfac = data.T * lambda0

    # lattice of cell midpoints and its kernel matrix, computed from scratch
    xs = space.xmin + (np.arange(G) + 0.5) * space.width / G
    ys = space.ymin + (np.arange(G) + 0.5) * space.height / G
    gx, gy = np.meshgrid(xs, ys)
    px, py = gx.ravel(), gy.ravel()
    tx, ty = traps.coords[:, 0], traps.coords[:, 1]
    d2 = (px[:, None] - tx) ** 2 + (py[:, None] - ty) ** 2
    K = np.exp(-d2 / (2.0 * sigma * sigma))          # (G*G, R)
    Gsq = G * G
    logGsq = math.log(Gsq)

    loglik = np.empty(M_small + 1)
    loglik[0] = float(np.sum(poisson_logpmf(totals, np.zeros_like(totals))))
    if M_small >= 1:
        lp = poisson_logpmf(totals[None, :], Tfac * K).sum(axis=1)
        loglik[1] = float(logsumexp(lp)) - logGsq
    if M_small >= 2:
        rows = np.empty(Gsq)
        for a in range(Gsq):
            lam = Tfac * (K[a] + K)
            rows[a] = logsumexp(poisson_logpmf(totals[None, :], lam).sum(axis=1))
        loglik[2] = float(logsumexp(rows)) - 2.0 * logGsq
    if M_small >= 3:
        rows = np.empty(Gsq)
        pair = K[:, None, :] + K[None, :, :]          # (Gsq, Gsq, R)
        for a in range(Gsq):
            lam = Tfac * (K[a] + pair)
            rows[a] = logsumexp(
                poisson_logpmf(totals[None, None, :], lam).sum(axis=2))
        loglik[3] = float(logsumexp(rows)) - 3.0 * logGsq

    if np.all(np.isinf(loglik)):
        raise ConfigError("data impossible under every N in 0..M_small")
    post = np.exp(loglik - logsumexp(loglik))
    post = post / post.sum()
    return GridPosterior(pmf=post, loglik=loglik, M_small=M_small, G=G,
                         sigma=sigma, lambda0=lambda0)


def _poisson_pmf(k: int, lam: float) -> float:
    # plain-probability pmf, exact at toy scale; 0**0 == 1 handles lam == 0
    return math.exp(-lam) * lam ** k / math.factorial(k)


def allocation_marginal_check(n: int, rates) -> bool:
    """Verify the split of a Poisson total across independent components.

    Enumerates every allocation z (len(rates) non-negative integers
    summing to n), checking that the allocation probabilities sum to
    PoissonPMF(n; sum(rates)) and, normalized, match the multinomial
    with cell probabilities rates / sum(rates).  Both within 1e-12
    relative error.
    """
    rates = [float(r) for r in rates]
    if n < 0 or n > 3 or len(rates) < 1 or len(rates) > 3:
        raise ConfigError("check restricted to n <= 3 and <= 3 components")
    if any(r < 0 for r in rates):
        raise ConfigError("rates must be non-negative")
    total = sum(rates)

    allocs = [z for z in itertools.product(range(n + 1), repeat=len(rates))
              if sum(z) == n]
    weights = []
    for z in allocs:
        weights.append(math.prod(_poisson_pmf(zi, r) for zi, r in zip(z, rates)))
    wsum = math.fsum(weights)
    target = _poisson_pmf(n, total)

    def close(a, b):
        return abs(a - b) <= 1e-12 * max(1e-300, abs(a), abs(b))

    if not close(wsum, target):
        return False
    if wsum == 0.0:
        # impossible total (all rates zero with n > 0): sum identity held
        return True
    if total > 0:
        nfact = math.factorial(n)
        for z, w in zip(allocs, weights):
            coef = nfact
            for zi in z:
                coef //= math.factorial(zi)
            pm = coef * math.prod(
                (r / total) ** zi for zi, r in zip(z, rates))
            if not close(w / wsum, pm):
                return False
    return True


# ---------------------------------------------------------------------------
# successive-conditional sampler check


@dataclass(frozen=True)
class GewekeReport:
    """Divergence statistics from the successive-conditional run.

    Each monitored quantity gets a z-score: (chain mean - prior mean)
    standardized by a batch-means standard error, so autocorrelation in
    the chain is priced in.
    """

    z_scores: dict
    sample_means: dict
    prior_means: dict
    standard_errors: dict
    sweeps: int
    algorithm: str

    def max_abs_z(self) -> float:
        return max(abs(v) for v in self.z_scores.values())


def _batch_means_se(x: np.ndarray) -> float:
    n = x.size
    n_batches = max(2, int(math.sqrt(n)))
    size = n // n_batches
    if size < 1:
        raise ConfigError("too few sweeps for a batch-means standard error")
    trimmed = x[n - n_batches * size:]
    means = trimmed.reshape(n_batches, size).mean(axis=1)
    se = float(np.std(means, ddof=1)) / math.sqrt(n_batches)
    # a statistic frozen at one value gives se 0; floor it so the
    # z-score becomes huge instead of nan
    return max(se, 1e-300)


def geweke_style_joint_check(scenario, sweeps: int, *,
                             algorithm: str = "marginal",
                             M: int = 5,
                             priors=None,
                             seed: int = 0,
                             omit_sigma_jacobian: bool = False) -> GewekeReport:
    """Run the joint-distribution self-consistency test of the sampler.

    Alternates one full parameter sweep with a fresh draw of the counts
    from the current parameters.  Started from an exact prior draw, the
    recorded parameter trajectory is then marginally prior-distributed,
    so its means must match the analytic prior means.  A bug in any
    update's acceptance algebra shows up as a drifted mean.

    The scenario supplies traps, buffer, and occasions; its sigma,
    lambda0, and N_true are ignored (parameters come from the priors).
    Deterministic given seed.
    """
    from .mcmc import ChainState, McmcConfig
    from .model import (AugmentedState, GammaPrior, ModelParams, PriorSpec,
                        UniformPrior)
    from ._rng import generator_for

    if scenario.traps.R > 4 or scenario.T > 2:
        raise ConfigError("joint check is for tiny problems (R <= 4, T <= 2)")
    if not 1 <= M <= 8:
        raise ConfigError("M must be in [1, 8] for the joint check")
    if sweeps < 100:
        raise ConfigError("need at least 100 sweeps")
    if priors is None:
        priors = PriorSpec(sigma=GammaPrior(13.0, 10.0),
                           lambda0=UniformPrior(2.0))

    traps = scenario.traps
    space = scenario.space
    T = scenario.T
    R = traps.R
    rng = generator_for(seed, 271828)

    # exact draw from the joint prior, observations included
    sigma = priors.sigma.sample(rng)
    lambda0 = priors.lambda0.sample(rng)
    phi = float(rng.uniform())
    w = (rng.random(M) < phi).astype(np.uint8)
    centers = space.sample_uniform(M, rng)

    from .mcmc import kernel_rows
    from .model import distance_matrix

    def _draw_observations(cur_sigma, cur_lambda0, cur_w, d2):
        # same truncated kernel the engine uses, so the re-simulated data
        # match the likelihood the updates target exactly
        rate = cur_lambda0 * kernel_rows(d2, cur_sigma) * cur_w[:, None]
        z = rng.poisson(np.broadcast_to(rate[:, :, None], (M, R, T)))
        return z.astype(np.int64), CountData(z.sum(axis=0))

    d2 = distance_matrix(traps, centers) ** 2
    z0, data0 = _draw_observations(sigma, lambda0, w, d2)

    cfg = McmcConfig(M=M, algorithm=algorithm, iterations=sweeps + 100,
                     burn_in=100, thin=1, chains=1, adapt=False,
                     proposal_sd_s=1.0, proposal_sd_log_sigma=0.4,
                     proposal_sd_log_lambda0=0.5, seed=seed)
    aug = AugmentedState(centers=centers, w=w,
                         z=z0 if algorithm == "conditional" else None)
    params = ModelParams(sigma=sigma, lambda0=lambda0, phi=phi)
    st = ChainState(data0, traps, space, priors, cfg, None, params, aug)
    st.omit_sigma_jacobian = omit_sigma_jacobian

    trace = {k: np.empty(sweeps) for k in ("sigma", "lambda0", "phi", "N")}
    for it in range(sweeps):
        st.sweep(rng)
        trace["sigma"][it] = st.sigma
        trace["lambda0"][it] = st.lambda0
        trace["phi"][it] = st.phi
        trace["N"][it] = st.N
        z, data = _draw_observations(st.sigma, st.lambda0, st.w, st.D2)
        st.set_observations(data, z if algorithm == "conditional" else None)

    prior_means = {"sigma": priors.sigma.mean,
                   "lambda0": priors.lambda0.mean,
                   "phi": 0.5,
                   "N": M / 2.0}
    sample_means = {}
    ses = {}
    zs = {}
    for k, x in trace.items():
        sample_means[k] = float(x.mean())
        ses[k] = _batch_means_se(x)
        zs[k] = (sample_means[k] - prior_means[k]) / ses[k]
    return GewekeReport(z_scores=zs, sample_means=sample_means,
                        prior_means=prior_means, standard_errors=ses,
                        sweeps=sweeps, algorithm=algorithm)
