"""Event-driven stochastic simulation of collision-coalescence.

One realization is an exact state-dependent chain: bin-pair collision
rates are recomputed after every event, the waiting time is exponential
in the total rate, and the colliding pair is picked with probability
proportional to its rate.  Executing a collision removes one droplet
from each source bin through the selection interval, deposits their sum,
and (in legacy selection mode) records any bin whose mean mass was
pushed outside its boundaries instead of aborting.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from . import kernels
from .grid import MassGrid
from .kernels import KernelSpec
from .rng import RNG_ALGORITHM, make_generator
from .selection import draw_source_mass, legacy_interval, refined_interval
from .state import OVERFLOW_BIN, SpectrumState, bin_mean_violation

__all__ = [
    "EngineConfig",
    "CollisionEvent",
    "ViolationRecord",
    "RunStats",
    "InvariantBreachError",
    "pair_rates",
    "waiting_time",
    "select_pair",
    "sample_event",
    "execute_collision",
    "run",
]

logger = logging.getLogger(__name__)

MODES = ("refined", "legacy")

# Eligibility slack on the mean-in-bin test, matching the violation
# classifier: a bin whose mean sits within round-off of a boundary still
# counts as a physical collision source.
_ELIG_RTOL = 1e-12

# A relative mass-ledger drift beyond this is a bookkeeping bug, not
# round-off, and aborts the run.
_LEDGER_HARD_LIMIT = 1e-9

# Exact row sums are restored from the rate matrix on this event cadence
# so incremental delta updates cannot accumulate drift.
_ROW_SUM_REFRESH = 4096


class InvariantBreachError(RuntimeError):
    """A physical-state guarantee failed where it must be unreachable."""


class CollisionEvent(NamedTuple):
    time: float
    source_i: int
    source_j: int
    x_i: float
    x_j: float
    deposit_bin: int  # OVERFLOW_BIN when the sum left the grid


class ViolationRecord(NamedTuple):
    time: float
    bin: int
    pre_mass: float
    pre_number: float
    removed: float
    post_mean: float
    side: str  # 'below_lower' or 'above_upper'


@dataclass(frozen=True)
class EngineConfig:
    """Realization parameters.

    Either max_time (seconds) or max_events must be set; the run also
    ends when no pair has a positive collision rate.  mode 'legacy'
    selects droplets from the unconstrained symmetric interval and logs
    the resulting boundary violations; 'refined' makes them impossible.
    rate_check_every > 0 cross-checks the incrementally maintained rate
    matrix against a from-scratch build on that event cadence.
    """

    mode: str = "refined"
    volume: float = 1.0
    max_time: float | None = None
    max_events: int | None = None
    seed: int = 1
    snapshot_times: tuple = ()
    record_events: bool = False
    rate_check_every: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (math.isfinite(self.volume) and self.volume > 0.0):
            raise ValueError(f"volume must be positive, got {self.volume!r}")
        if self.max_time is not None and not (self.max_time > 0.0):
            raise ValueError(f"max_time must be positive, got {self.max_time!r}")
        if self.max_events is not None and not (self.max_events > 0):
            raise ValueError(f"max_events must be positive, got {self.max_events!r}")
        if self.max_time is None and self.max_events is None:
            raise ValueError("set max_time and/or max_events")
        times = tuple(float(t) for t in self.snapshot_times)
        if any(not (math.isfinite(t) and t >= 0.0) for t in times):
            raise ValueError("snapshot times must be finite and non-negative")
        object.__setattr__(self, "snapshot_times", tuple(sorted(times)))


@dataclass
class RunStats:
    """Everything one realization reports back."""

    seed: int
    mode: str
    rng_algorithm: str = RNG_ALGORITHM
    n_events: int = 0
    t_end: float = 0.0
    termination: str = ""
    initial_mass: float = 0.0
    initial_number: float = 0.0
    max_mass_drift_rel: float = 0.0
    max_number_drift: float = 0.0
    max_forgone_samebin_fraction: float = 0.0
    snapshot_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    moment_table: np.ndarray | None = None
    violations: list = field(default_factory=list)
    events: list | None = None
    final_state: SpectrumState | None = None


def _eligible_mask(mass, number, x_lo, x_hi):
    """Bins that may donate a droplet: at least one whole droplet and a
    mean inside the boundaries (violated bins go dormant until a deposit
    restores them, which only matters in legacy mode)."""
    return ((number >= 1.0)
            & (mass >= x_lo * number * (1.0 - _ELIG_RTOL))
            & (mass <= x_hi * number * (1.0 + _ELIG_RTOL)))


def pair_rates(state: SpectrumState, grid: MassGrid, kernel: KernelSpec,
               volume: float) -> np.ndarray:
    """Collision rate matrix C[i, j] (upper triangle, s^-1).

    C[i, j] = K(mean_i, mean_j) * N_i * N_j / V for i < j and
    C[i, i] = K * N_i * (N_i - 1) / (2 V), the latter only when the bin
    holds at least two whole droplets.  Ineligible bins contribute zero.
    """
    n = state.n_bins
    if n != grid.n_bins:
        raise ValueError(f"state has {n} bins but grid has {grid.n_bins}")
    b = grid.boundaries
    elig = _eligible_mask(state.mass, state.number, b[:-1], b[1:])
    eln = np.where(elig, state.number, 0.0)
    means = np.ones(n)
    np.divide(state.mass, state.number, out=means, where=elig)
    K = kernels._unchecked(kernel, means[:, None], means[None, :])
    C = np.triu(K * np.outer(eln, eln) / volume, k=1)
    diag = np.where(eln >= 2.0,
                    np.diagonal(K) * eln * (eln - 1.0) / (2.0 * volume), 0.0)
    np.fill_diagonal(C, diag)
    return C


_KIND_CODES = {"constant": 0, "golovin_sum": 1, "product": 2,
               "hydrodynamic": 3}


@njit(cache=True)
def _nb_refresh_bin(mass, number, x_lo, x_hi, means, elig_number, radius,
                    velocity, b, hydro, rtol):
    nb = number[b]
    lb = mass[b]
    if (nb >= 1.0 and lb >= x_lo[b] * nb * (1.0 - rtol)
            and lb <= x_hi[b] * nb * (1.0 + rtol)):
        elig_number[b] = nb
        means[b] = lb / nb
    else:
        elig_number[b] = 0.0
        means[b] = 1.0  # placeholder, multiplied by zero rate
    if hydro:
        # must match kernels.radius_from_mass / terminal_velocity
        r = (3.0 * means[b] / (4.0 * math.pi)) ** (1.0 / 3.0)
        radius[b] = r
        velocity[b] = 1.19e6 * r * r


@njit(cache=True)
def _nb_update_bin(C, rs, means, elig_number, radius, velocity, b, kind,
                   coef, eff, volume):
    n = rs.shape[0]
    nb = elig_number[b]
    inv = nb / volume
    mb = means[b]
    for a in range(n):
        if a == b:
            continue
        na = elig_number[a]
        if nb == 0.0 or na == 0.0:
            new = 0.0
        else:
            if kind == 0:
                k = coef
            elif kind == 1:
                k = coef * (mb + means[a])
            elif kind == 2:
                k = coef * (mb * means[a])
            else:
                rsum = radius[b] + radius[a]
                dv = velocity[b] - velocity[a]
                if dv < 0.0:
                    dv = -dv
                k = eff * math.pi * rsum * rsum * dv
            new = k * na * inv
        if a < b:
            rs[a] += new - C[a, b]
            C[a, b] = new
        else:
            C[b, a] = new
    if nb >= 2.0:
        if kind == 0:
            k = coef
        elif kind == 1:
            k = coef * (mb + mb)
        elif kind == 2:
            k = coef * (mb * mb)
        else:
            k = 0.0  # equal fall speeds cannot collide
        C[b, b] = k * nb * (nb - 1.0) * 0.5 / volume
    else:
        C[b, b] = 0.0
    s = 0.0
    for c in range(b, n):
        s += C[b, c]
    rs[b] = s


@njit(cache=True)
def _nb_sample_pair(C, rs, target):
    """First pair, in row-major order over the upper triangle, whose
    cumulative rate exceeds target; clamps to the last positive entry if
    round-off pushes target past the total."""
    n = rs.shape[0]
    acc = 0.0
    i = -1
    last_pos = -1
    for r in range(n):
        v = rs[r]
        if v > 0.0:
            last_pos = r
        acc += v
        if acc > target:
            i = r
            break
    if i < 0:
        i = last_pos
        residual = rs[i]
    else:
        residual = target - (acc - rs[i])
    acc2 = 0.0
    j = -1
    last_j = -1
    for c in range(i, n):
        v = C[i, c]
        if v > 0.0:
            last_j = c
        acc2 += v
        if acc2 > residual:
            j = c
            break
    if j < 0:
        j = last_j
    return i, j


@njit(cache=True)
def _nb_ledger(mass, number):
    tm = 0.0
    tn = 0.0
    for i in range(mass.shape[0]):
        tm += mass[i]
        tn += number[i]
    return tm, tn


class _RateTable:
    """Incrementally maintained copy of pair_rates for the event loop.

    After an event only the rows and columns of the affected bins change,
    so those are recomputed and the row sums adjusted by their deltas.
    """

    def __init__(self, state, grid, kernel, volume):
        n = state.n_bins
        if n != grid.n_bins:
            raise ValueError(
                f"state has {n} bins but grid has {grid.n_bins}")
        self.state = state
        self.kernel = kernel
        self.volume = float(volume)
        self.x_lo = grid.boundaries[:-1].copy()
        self.x_hi = grid.boundaries[1:].copy()
        self.n = n
        self.means = np.ones(n)
        self.elig_number = np.zeros(n)
        self.C = np.zeros((n, n))
        self.row_sums = np.zeros(n)
        self.kind = _KIND_CODES[kernel.kind]
        self.coef = float(kernel.coefficient)
        self.eff = float(kernel.efficiency)
        self.is_hydro = self.kind == 3
        self.radius = np.ones(n)
        self.velocity = np.ones(n)
        self.rebuild()

    def _refresh_bin(self, b):
        _nb_refresh_bin(self.state.mass, self.state.number, self.x_lo,
                        self.x_hi, self.means, self.elig_number, self.radius,
                        self.velocity, b, self.is_hydro, _ELIG_RTOL)

    def _update_bin(self, b):
        _nb_update_bin(self.C, self.row_sums, self.means, self.elig_number,
                       self.radius, self.velocity, b, self.kind, self.coef,
                       self.eff, self.volume)

    def rebuild(self):
        self.C.fill(0.0)
        self.row_sums.fill(0.0)
        for b in range(self.n):
            self._refresh_bin(b)
        for b in range(self.n):
            self._update_bin(b)

    def refresh_row_sums(self):
        np.sum(self.C, axis=1, out=self.row_sums)

    def update(self, bins):
        for b in bins:
            self._refresh_bin(b)
        for b in bins:
            self._update_bin(b)

    def total(self) -> float:
        return float(self.row_sums.sum())

    def sample(self, u2, total):
        """Row-major inverse-CDF walk over the upper triangle."""
        i, j = _nb_sample_pair(self.C, self.row_sums, u2 * total)
        return int(i), int(j)

    def forgone_same_bin_rate(self) -> float:
        """Same-bin rate mass excluded because 1 < N < 2 cannot supply two
        whole droplets."""
        nn = self.state.number
        frac = (nn > 1.0) & (nn < 2.0) & (self.elig_number > 0.0)
        if not np.any(frac):
            return 0.0
        m = self.means[frac]
        k = kernels._unchecked(self.kernel, m, m)
        return float(np.sum(k * nn[frac] * (nn[frac] - 1.0))
                     / (2.0 * self.volume))

    def check_against_rebuild(self, rtol=1e-9):
        fresh = pair_rates(self.state,
                           MassGrid(np.concatenate((self.x_lo, self.x_hi[-1:]))),
                           self.kernel, self.volume)
        scale = max(float(np.max(np.abs(fresh))), 1e-300)
        if not np.allclose(self.C, fresh, rtol=rtol, atol=rtol * scale):
            worst = float(np.max(np.abs(self.C - fresh)))
            raise InvariantBreachError(
                f"incremental rate table drifted from rebuild by {worst!r}")


def waiting_time(total_rate: float, u1: float) -> float:
    """Exponential waiting time -ln(u1)/total_rate for u1 in (0, 1]."""
    if not total_rate > 0.0:
        raise ValueError("waiting time undefined for zero total rate")
    return -math.log(u1) / total_rate


def select_pair(rates: np.ndarray, u2: float):
    """First pair, in row-major order, whose cumulative rate fraction
    exceeds u2."""
    C = np.asarray(rates, dtype=float)
    flat = np.cumsum(C.ravel())
    total = flat[-1]
    if not total > 0.0:
        raise ValueError("no positive rates to select from")
    idx = int(np.searchsorted(flat, u2 * total, side="right"))
    idx = min(idx, flat.size - 1)
    return divmod(idx, C.shape[1])


def sample_event(rates: np.ndarray, rng):
    """Draw (waiting time, colliding pair) from the rate matrix.

    Consumes exactly two uniforms: u1 = 1 - rng.random() for the waiting
    time, then rng.random() for the pair walk.
    """
    C = np.asarray(rates, dtype=float)
    total = float(C.sum())
    if not total > 0.0:
        raise ValueError("total rate is zero, no event can be sampled")
    tau = waiting_time(total, 1.0 - rng.random())
    pair = select_pair(C, rng.random())
    return tau, pair


def _remove_one(state, grid, b, mode, rng, violations):
    nb = float(state.number[b])
    lb = float(state.mass[b])
    if nb < 1.0:
        raise InvariantBreachError(
            f"bin {b} selected as source with {nb} droplets")
    if nb <= 1.0:
        state.remove_droplet(b, lb)
        return lb
    x_lo = grid.lower(b)
    x_hi = grid.upper(b)
    build = legacy_interval if mode == "legacy" else refined_interval
    iv = build(lb, nb, x_lo, x_hi)
    x = draw_source_mass(iv, rng.random())
    state.remove_droplet(b, x)
    side = bin_mean_violation(float(state.mass[b]), float(state.number[b]),
                              x_lo, x_hi)
    if side is not None:
        post_mean = float(state.mass[b]) / float(state.number[b])
        if mode == "refined":
            raise InvariantBreachError(
                f"refined removal broke bin {b}: pre=({lb!r} g, {nb!r}), "
                f"removed {x!r} g, post mean {post_mean!r} g {side} "
                f"[{x_lo!r}, {x_hi!r}]")
        violations.append(ViolationRecord(
            time=state.time, bin=b, pre_mass=lb, pre_number=nb,
            removed=x, post_mean=post_mean, side=side))
    return x


def execute_collision(state: SpectrumState, grid: MassGrid, pair, mode: str,
                      rng):
    """Apply one collision in place.

    Removes a droplet from each source bin (lower index first; for a
    same-bin pair the interval is rebuilt from the updated bin between
    the two draws) and deposits the coalesced mass.  Returns the event
    and any violation records (legacy mode only; in refined mode a
    violation raises instead).
    """
    i, j = pair
    if j < i:
        i, j = j, i
    violations = []
    x_i = _remove_one(state, grid, i, mode, rng, violations)
    x_j = _remove_one(state, grid, j, mode, rng, violations)
    deposit = state.deposit_droplet(grid, x_i + x_j)
    event = CollisionEvent(time=state.time, source_i=i, source_j=j,
                           x_i=x_i, x_j=x_j, deposit_bin=deposit)
    return event, violations


def run(config: EngineConfig, initial_state: SpectrumState, grid: MassGrid,
        kernel: KernelSpec) -> RunStats:
    """Evolve one realization until max_time, max_events, or rate exhaustion.

    Deterministic given (config, initial_state): all randomness comes from
    the counter-based generator keyed by config.seed.
    """
    state = initial_state.copy()
    rng = make_generator(config.seed)
    table = _RateTable(state, grid, kernel, config.volume)

    stats = RunStats(seed=config.seed, mode=config.mode)
    tm0, tn0 = _nb_ledger(state.mass, state.number)
    stats.initial_mass = tm0 + state.overflow_mass
    stats.initial_number = tn0 + state.overflow_number
    if config.record_events:
        stats.events = []

    mass_arr = state.mass
    number_arr = state.number
    m0 = stats.initial_mass
    n0 = stats.initial_number
    max_time = config.max_time if config.max_time is not None else math.inf
    max_events = config.max_events if config.max_events is not None else None
    snap_times = list(config.snapshot_times)
    snap_ptr = 0

    def record_snapshot(label_time):
        snap = state.copy()
        snap.time = label_time
        stats.snapshot_times.append(label_time)
        stats.snapshots.append(snap)
        frac_base = table.forgone_same_bin_rate()
        total = table.total()
        if frac_base > 0.0 and total + frac_base > 0.0:
            stats.max_forgone_samebin_fraction = max(
                stats.max_forgone_samebin_fraction,
                frac_base / (total + frac_base))

    while snap_ptr < len(snap_times) and snap_times[snap_ptr] <= state.time:
        record_snapshot(snap_times[snap_ptr])
        snap_ptr += 1

    n_events = 0
    while True:
        total = table.total()
        if not total > 0.0:
            stats.termination = "exhausted"
            while snap_ptr < len(snap_times) and snap_times[snap_ptr] <= max_time:
                record_snapshot(snap_times[snap_ptr])  # state is frozen now
                snap_ptr += 1
            break
        if max_events is not None and n_events >= max_events:
            stats.termination = "max_events"
            break
        tau = -math.log(1.0 - rng.random()) / total
        t_new = state.time + tau
        if t_new > max_time:
            while snap_ptr < len(snap_times) and snap_times[snap_ptr] <= max_time:
                record_snapshot(snap_times[snap_ptr])
                snap_ptr += 1
            state.time = max_time
            stats.termination = "max_time"
            break
        while snap_ptr < len(snap_times) and snap_times[snap_ptr] < t_new:
            record_snapshot(snap_times[snap_ptr])
            snap_ptr += 1
        pair = table.sample(rng.random(), total)
        state.time = t_new
        event, violations = execute_collision(state, grid, pair, config.mode,
                                              rng)
        n_events += 1
        stats.violations.extend(violations)
        if stats.events is not None:
            stats.events.append(event)
        while snap_ptr < len(snap_times) and snap_times[snap_ptr] <= state.time:
            record_snapshot(snap_times[snap_ptr])
            snap_ptr += 1

        affected = {event.source_i, event.source_j}
        if event.deposit_bin != OVERFLOW_BIN:
            affected.add(event.deposit_bin)
        table.update(affected)
        if n_events % _ROW_SUM_REFRESH == 0:
            table.refresh_row_sums()
        if config.rate_check_every and n_events % config.rate_check_every == 0:
            table.check_against_rebuild()

        # Conservation ledger, checked after every event.
        tm, tn = _nb_ledger(mass_arr, number_arr)
        drift = abs(tm + state.overflow_mass - m0) / m0
        if drift > stats.max_mass_drift_rel:
            stats.max_mass_drift_rel = drift
            if drift > _LEDGER_HARD_LIMIT:
                raise InvariantBreachError(
                    f"mass ledger drifted by {drift!r} (relative) after "
                    f"event {n_events}")
        ndrift = abs(tn + state.overflow_number - (n0 - n_events))
        if ndrift > stats.max_number_drift:
            stats.max_number_drift = ndrift

    stats.n_events = n_events
    stats.t_end = state.time
    stats.final_state = state
    if stats.snapshots:
        stats.moment_table = np.array(
            [[s.moments(k) for k in range(4)] for s in stats.snapshots])
    if stats.max_forgone_samebin_fraction > 0.0:
        logger.debug("same-bin rate forgone for 1<N<2 peaked at %.3e of total",
                     stats.max_forgone_samebin_fraction)
    return stats
