"""Dataset simulation and the preset scenario battery.

A Scenario pins everything needed to draw one dataset: trap layout,
buffer, true parameter values, population size, occasions, how many
individuals carry marks, and a seed.  Center placement, latent counts,
and mark assignment use three independent substreams of the scenario
seed, so two scenarios differing only in the number of marked
individuals produce byte-identical trap counts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import (
    ConfigError,
    CountData,
    MarkedObservations,
    StateSpace,
    TrapArray,
    distance_matrix,
    kernel,
    state_space_from_traps,
)


@dataclass(frozen=True)
class Scenario:
    traps: TrapArray
    buffer: float
    sigma: float
    lambda0: float
    N_true: int
    T: int
    m: int = 0          # size of the marked subset, 0 = fully unmarked
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.sigma <= 0 or self.lambda0 < 0:
            raise ConfigError("scenario needs sigma > 0 and lambda0 >= 0")
        if self.N_true < 0 or self.T < 1:
            raise ConfigError("scenario needs N_true >= 0 and T >= 1")
        if not (0 <= self.m <= self.N_true):
            raise ConfigError("marked count m must lie in [0, N_true]")
        if self.buffer < 0:
            raise ConfigError("buffer must be non-negative")

    @property
    def space(self) -> StateSpace:
        return state_space_from_traps(self.traps, self.buffer)


@dataclass(frozen=True)
class SimulatedTruth:
    """One simulated dataset plus everything the simulator knew."""

    scenario: Scenario
    centers: np.ndarray                 # (N_true, 2)
    z: np.ndarray                       # (N_true, R, T) latent counts
    counts: CountData                   # (R, T) observed totals
    marked: MarkedObservations | None   # histories of the marked subset
    marked_index: np.ndarray            # indices into centers, shape (m,)


def simulate_counts_given_centers(
    centers: np.ndarray,
    traps: TrapArray,
    sigma: float,
    lambda0: float,
    T: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, CountData]:
    """Draw latent counts for fixed centers; returns (z, CountData)."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    n = centers.shape[0]
    if n == 0:
        z = np.zeros((0, traps.R, T), dtype=np.int64)
    else:
        lam = lambda0 * kernel(distance_matrix(traps, centers), sigma)
        z = rng.poisson(lam[:, :, None], size=(n, traps.R, T)).astype(np.int64)
    counts = CountData(z.sum(axis=0) if n else np.zeros((traps.R, T), dtype=np.int64))
    return z, counts


def simulate_dataset(scenario: Scenario) -> SimulatedTruth:
    """Draw one dataset from the scenario's generative model.

    Deterministic: the same scenario (including seed) always returns the
    same arrays.  Marked-subset selection consumes its own substream, so
    varying `m` alone never perturbs centers or counts.
    """
    root = np.random.SeedSequence(scenario.seed)
    ss_centers, ss_z, ss_marks = root.spawn(3)
    space = scenario.space

    rng_c = np.random.Generator(np.random.PCG64(ss_centers))
    centers = space.sample_uniform(scenario.N_true, rng_c)

    rng_z = np.random.Generator(np.random.PCG64(ss_z))
    z, counts = simulate_counts_given_centers(
        centers, scenario.traps, scenario.sigma, scenario.lambda0,
        scenario.T, rng_z)

    marked = None
    marked_index = np.zeros(0, dtype=np.int64)
    if scenario.m > 0:
        rng_m = np.random.Generator(np.random.PCG64(ss_marks))
        marked_index = np.sort(
            rng_m.choice(scenario.N_true, size=scenario.m, replace=False))
        marked = MarkedObservations(z[marked_index])

    return SimulatedTruth(
        scenario=scenario,
        centers=centers,
        z=z,
        counts=counts,
        marked=marked,
        marked_index=marked_index,
    )


# ---------------------------------------------------------------------------
# preset battery

_GRID_ROWS = 15
_GRID_COLS = 15
_SPACING = 1.0
_BUFFER = 3.0
_LAMBDA0 = 0.5


def _grid() -> TrapArray:
    return TrapArray.grid(_GRID_ROWS, _GRID_COLS, _SPACING)


def preset_scenarios() -> list[Scenario]:
    """The 22 standard scenarios used by the calibration studies.

    Eighteen fully unmarked scenarios cross sigma in {0.5, 0.75, 1.0},
    N_true in {27, 45, 75} and T in {5, 10} on a 15x15 unit grid with a
    3-unit buffer; four partially marked scenarios hold sigma=0.5,
    N_true=75, T=5 and vary the marked count m in {5, 15, 25, 35}.
    lambda0 = 0.5 throughout.
    """
    grid = _grid()
    out = []
    for sig, tag in ((0.5, "s05"), (0.75, "s075"), (1.0, "s10")):
        for n in (27, 45, 75):
            for t in (5, 10):
                out.append(Scenario(
                    traps=grid, buffer=_BUFFER, sigma=sig, lambda0=_LAMBDA0,
                    N_true=n, T=t, m=0, seed=0,
                    name=f"study1-{tag}-n{n}-t{t}"))
    for m in (5, 15, 25, 35):
        out.append(Scenario(
            traps=grid, buffer=_BUFFER, sigma=0.5, lambda0=_LAMBDA0,
            N_true=75, T=5, m=m, seed=0, name=f"study2-m{m}"))
    return out


def preset_names() -> list[str]:
    return [s.name for s in preset_scenarios()]


def preset(name: str, seed: int | None = None) -> Scenario:
    """Look up a preset by name, optionally replacing its seed."""
    for s in preset_scenarios():
        if s.name == name:
            return replace(s, seed=seed) if seed is not None else s
    raise ConfigError(
        f"unknown preset {name!r}; choose one of: " + ", ".join(preset_names()))
