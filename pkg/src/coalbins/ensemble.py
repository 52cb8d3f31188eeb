"""Ensembles of independent realizations and their analytic references.

Realizations are independent units of work: member k runs on a stream
seeded by realization_seed(base_seed, k), and aggregation sorts members
by index before reducing, so the result is identical no matter what
order the realizations were produced in.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .engine import EngineConfig, run
from .grid import MassGrid
from .kernels import KernelSpec
from .rng import realization_seed

__all__ = ["EnsembleResult", "run_ensemble", "aggregate_realizations",
           "analytic_number"]


@dataclass
class EnsembleResult:
    """Cross-realization statistics at each snapshot time.

    moment_mean / moment_var have shape (n_snapshots, 4) for orders 0-3;
    density_mean / density_var hold the per-bin mass density mass / bin
    width, shape (n_snapshots, n_bins).  Variances are sample variances
    (ddof=1), zero for a single realization.
    """

    mode: str
    n_realizations: int
    seeds: list
    snapshot_times: np.ndarray
    moment_mean: np.ndarray
    moment_var: np.ndarray
    density_mean: np.ndarray
    density_var: np.ndarray
    violation_counts: list
    violation_total: int
    realization_stats: list = field(default_factory=list, repr=False)

    def moment_stderr(self, order: int) -> np.ndarray:
        """Standard error of the ensemble-mean moment of given order."""
        return np.sqrt(self.moment_var[:, order] / self.n_realizations)


def aggregate_realizations(indexed_stats, grid: MassGrid) -> EnsembleResult:
    """Reduce [(index, RunStats), ...] to an EnsembleResult.

    Members are sorted by index first, so any arrival order produces the
    identical result.
    """
    if not indexed_stats:
        raise ValueError("need at least one realization")
    ordered = sorted(indexed_stats, key=lambda kv: kv[0])
    stats = [s for _, s in ordered]
    times = stats[0].snapshot_times
    for k, s in ordered:
        if s.snapshot_times != times:
            raise ValueError(
                f"realization {k} produced snapshot times {s.snapshot_times} "
                f"instead of {times}; cannot aggregate")

    n = len(stats)
    widths = grid.widths
    if times:
        moments = np.stack([s.moment_table for s in stats])
        density = np.stack([[snap.mass / widths for snap in s.snapshots]
                            for s in stats])
        moment_mean = moments.mean(axis=0)
        density_mean = density.mean(axis=0)
        if n > 1:
            moment_var = moments.var(axis=0, ddof=1)
            density_var = density.var(axis=0, ddof=1)
        else:
            moment_var = np.zeros_like(moment_mean)
            density_var = np.zeros_like(density_mean)
    else:
        moment_mean = np.zeros((0, 4))
        moment_var = np.zeros((0, 4))
        density_mean = np.zeros((0, grid.n_bins))
        density_var = np.zeros((0, grid.n_bins))

    counts = [len(s.violations) for s in stats]
    return EnsembleResult(
        mode=stats[0].mode,
        n_realizations=n,
        seeds=[s.seed for s in stats],
        snapshot_times=np.array(times),
        moment_mean=moment_mean,
        moment_var=moment_var,
        density_mean=density_mean,
        density_var=density_var,
        violation_counts=counts,
        violation_total=int(sum(counts)),
        realization_stats=stats,
    )


def run_ensemble(config: EngineConfig, initial_state, grid: MassGrid,
                 kernel: KernelSpec, n_realizations: int, base_seed: int,
                 seeds=None) -> EnsembleResult:
    """Run n independent realizations and aggregate their statistics.

    Member k is seeded by realization_seed(base_seed, k); an explicit
    seeds list overrides the derivation (mainly for degenerate-variance
    checks).  A failing member raises with its index attached.
    """
    if n_realizations < 1:
        raise ValueError("need at least one realization")
    if seeds is None:
        seeds = [realization_seed(base_seed, k) for k in range(n_realizations)]
    elif len(seeds) != n_realizations:
        raise ValueError("seeds list length must match n_realizations")

    indexed = []
    for k, seed in enumerate(seeds):
        cfg = replace(config, seed=int(seed))
        try:
            stats = run(cfg, initial_state, grid, kernel)
        except Exception as exc:
            raise RuntimeError(
                f"realization {k} (seed {seed}) failed: {exc}") from exc
        indexed.append((k, stats))
    return aggregate_realizations(indexed, grid)


def analytic_number(kernel: KernelSpec, n0: float, l0: float, volume: float,
                    t):
    """Mean-field droplet count N(t) under pure coalescence.

    constant kernel c:    N(t) = N0 / (1 + c N0 t / (2V))
    golovin_sum kernel b: N(t) = N0 exp(-b L0 t / V), with the total
    liquid mass L0 conserved.  Other kernels have no closed form here.
    """
    tt = np.asarray(t, dtype=float)
    if kernel.kind == "constant":
        out = n0 / (1.0 + kernel.coefficient * n0 * tt / (2.0 * volume))
    elif kernel.kind == "golovin_sum":
        out = n0 * np.exp(-kernel.coefficient * l0 * tt / volume)
    else:
        raise ValueError(
            f"no analytic count for kernel kind {kernel.kind!r}")
    if np.ndim(out) == 0:
        return float(out)
    return out
