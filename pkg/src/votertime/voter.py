"""Event-driven voter model on a periodic torus via the graphical construction.

A single aggregated exponential clock of rate 2d * L^d drives the dynamics;
each event picks a uniformly random directed edge (x, y) and copies the spin
of y onto x.  This is equal in law to independent rate-1 Poisson clocks on
directed edges.  Occupation times of tracked sites are accumulated exactly
(spins are piecewise constant between events).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._rng import rng_below, rng_next, rng_uniform, stream_state, generator


@dataclass(frozen=True)
class TorusLattice:
    """d-dimensional torus of side L, sites indexed row-major in [0, L^d)."""

    d: int
    L: int

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.L < 3:
            raise ValueError(f"torus side must be >= 3 (L=2 doubles edges), got {self.L}")

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    def site_index(self, coords) -> int:
        idx = 0
        for c in coords:
            idx = idx * self.L + (int(c) % self.L)
        return idx

    def site_coords(self, idx: int):
        out = []
        for _ in range(self.d):
            out.append(idx % self.L)
            idx //= self.L
        return tuple(reversed(out))

    def neighbor_table(self) -> np.ndarray:
        """(n_sites, 2d) table; column 2j is +e_j, column 2j+1 is -e_j."""
        L, d = self.L, self.d
        n = self.n_sites
        idx = np.arange(n)
        nbr = np.empty((n, 2 * d), dtype=np.int64)
        for j in range(d):
            stride = L ** (d - 1 - j)
            coord = (idx // stride) % L
            nbr[:, 2 * j] = idx + stride * (np.where(coord == L - 1, 1 - L, 1))
            nbr[:, 2 * j + 1] = idx + stride * (np.where(coord == 0, L - 1, -1))
        return nbr


@dataclass
class OccupationRecorder:
    """Exact occupation integral of one site, sampled on a time grid."""

    site: int
    grid: np.ndarray  # strictly increasing, grid[0] may be 0
    density_p: float
    values: np.ndarray = field(default=None)  # raw xi at grid times
    acc: float = 0.0
    last_t: float = 0.0

    def __post_init__(self) -> None:
        g = np.asarray(self.grid, dtype=np.float64)
        if g.ndim != 1 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        self.grid = g
        if self.values is None:
            self.values = np.full(g.size, np.nan)
            self.values[g == 0.0] = 0.0

    @property
    def centered(self) -> np.ndarray:
        return self.values - self.density_p * self.grid


@dataclass
class SpinField:
    """Bit-valued voter configuration on a torus at a simulation time."""

    lattice: TorusLattice
    spins: np.ndarray  # uint8, length L^d
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.spins.shape != (self.lattice.n_sites,):
            raise ValueError("spin array size does not match lattice")


def init_product(lattice: TorusLattice, p: float, master_seed: int, stream_id: int = 0) -> SpinField:
    """Independent Bernoulli(p) spins at time 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {p}")
    rng = generator(master_seed, stream_id, "init")
    spins = (rng.random(lattice.n_sites) < p).astype(np.uint8)
    return SpinField(lattice, spins)


@njit(cache=True)
def _advance_core(spins, nbr, t0, horizon, state, tracked, acc, last_t, cur, grid, values, gi0):
    """Run events in (t0, horizon]; returns (event count, grid pointer)."""
    n = spins.size
    two_d = nbr.shape[1]
    rate = float(two_d * n)
    m = tracked.size
    t = t0
    gi = gi0
    events = 0
    while True:
        dt = -math.log(rng_uniform(state)) / rate
        t_next = t + dt
        stop = t_next > horizon
        bound = horizon if stop else t_next
        while gi < grid.size and grid[gi] <= bound:
            for j in range(m):
                values[j, gi] = acc[j] + cur[j] * (grid[gi] - last_t[j])
            gi += 1
        if stop:
            break
        r = rng_next(state)
        x = int(r % np.uint64(n))
        k = int((r >> np.uint64(40)) % np.uint64(two_d))
        y = nbr[x, k]
        s_new = spins[y]
        if spins[x] != s_new:
            spins[x] = s_new
            for j in range(m):
                if tracked[j] == x:
                    acc[j] += cur[j] * (t_next - last_t[j])
                    last_t[j] = t_next
                    cur[j] = float(s_new)
        t = t_next
        events += 1
    for j in range(m):
        acc[j] += cur[j] * (horizon - last_t[j])
        last_t[j] = horizon
    return events, gi


def advance_to(
    field: SpinField,
    horizon: float,
    recorders: list[OccupationRecorder] | None = None,
    master_seed: int = 0,
    stream_id: int = 0,
    _state: np.ndarray | None = None,
) -> int:
    """Advance the field to `horizon`, exactly accumulating tracked occupations.

    Returns the number of executed copy events.  Passing the same
    (master_seed, stream_id) reproduces the identical event sequence.
    """
    if horizon < field.time:
        raise ValueError(f"horizon {horizon} is before field time {field.time}")
    recorders = recorders or []
    n = field.lattice.n_sites
    for rec in recorders:
        if not 0 <= rec.site < n:
            raise ValueError(f"tracked site {rec.site} outside lattice")
    state = _state if _state is not None else stream_state(master_seed, stream_id, "voter")
    nbr = field.lattice.neighbor_table()
    m = len(recorders)
    tracked = np.array([r.site for r in recorders], dtype=np.int64)
    acc = np.array([r.acc for r in recorders], dtype=np.float64)
    last_t = np.array([r.last_t for r in recorders], dtype=np.float64)
    cur = np.array([float(field.spins[r.site]) for r in recorders], dtype=np.float64)
    if m > 0:
        grid = recorders[0].grid
        if any(r.grid.shape != grid.shape or not np.array_equal(r.grid, grid) for r in recorders):
            raise ValueError("all recorders attached to one advance must share a grid")
        values = np.vstack([r.values for r in recorders])
        gi0 = int(np.searchsorted(grid, field.time, side="right"))
    else:
        grid = np.empty(0, dtype=np.float64)
        values = np.empty((0, 0), dtype=np.float64)
        gi0 = 0
    events, _ = _advance_core(
        field.spins, nbr, field.time, float(horizon), state, tracked, acc, last_t, cur, grid, values, gi0
    )
    for j, rec in enumerate(recorders):
        rec.acc = float(acc[j])
        rec.last_t = float(last_t[j])
        rec.values[:] = values[j]
    field.time = float(horizon)
    return events


def two_point_statistic(fields: list[SpinField], x: int, y: int) -> tuple[float, float]:
    """Ensemble estimate of E[(eta_t(x) - eta_t(y))^2] with its standard error."""
    if x == y:
        raise ValueError("sites must differ")
    if len(fields) < 100:
        raise ValueError("ensemble size must be >= 100")
    diffs = np.array([(float(f.spins[x]) - float(f.spins[y])) ** 2 for f in fields])
    mean = float(diffs.mean())
    stderr = float(diffs.std(ddof=1) / math.sqrt(diffs.size))
    return mean, stderr
