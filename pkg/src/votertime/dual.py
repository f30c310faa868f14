"""Coalescing random-walk dual of the voter model.

Contains the walker-system simulator, meeting-time estimators (difference-walk
reduction with an exact jump-chain skipping scheme), duality-based covariance
evaluators, the four-point moment bound, an exact small-torus duality oracle,
and a dual-lineage sampler that draws exact occupation paths of the origin.

The difference of two independent rate-2d walks is a rate-4d walk, so pair
meetings reduce to first passage of the difference walk at the origin.  While
the difference is at l1-distance m from the origin it cannot hit it in fewer
than m jumps, so blocks of m-1 jumps can be sampled in one multinomial draw;
the hit time is then recovered exactly as a Gamma(jump index, rate) variable
because the jump chain is independent of the jump clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numba.typed import Dict as NumbaDict
from numba import types as nbtypes

from . import kernels
from ._rng import generator
from .voter import TorusLattice


@dataclass(frozen=True)
class MeetingEstimate:
    """Binomial Monte-Carlo estimate of a pair meeting probability."""

    offset: float
    horizon: float
    prob: float
    stderr: float
    reps: int


@dataclass
class WalkerSystem:
    """Coalescing walkers with staggered activation times."""

    starts: list  # (coords tuple, activation time)
    horizon: float
    positions: list = field(default_factory=list)  # final coords per walker
    class_of: list = field(default_factory=list)  # class id per walker
    merge_times: list = field(default_factory=list)  # ascending merge instants


# --------------------------------------------------------------------------
# numba cores (seeded via numpy legacy RNG; one seed per call)
# --------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _l1(pos):
    s = 0
    for j in range(pos.size):
        s += abs(pos[j])
    return s


@njit(cache=True, inline="always")
def _jump_block(pos, k):
    """Advance the walk by k uniform-direction jumps in one multinomial draw."""
    d = pos.size
    two_d = 2 * d
    remaining = k
    slots = two_d
    for c in range(two_d):
        if slots == 1:
            cnt = remaining
        else:
            cnt = np.random.binomial(remaining, 1.0 / slots)
        if c & 1:
            pos[c >> 1] -= cnt
        else:
            pos[c >> 1] += cnt
        remaining -= cnt
        slots -= 1


@njit(cache=True)
def _hit_jump_index(pos, max_jumps):
    """First jump index (1-based) at which the walk sits at O, or -1.

    Exact: while at l1-distance m the origin is unreachable for m-1 jumps.
    """
    d = pos.size
    two_d = 2 * d
    used = 0
    m = _l1(pos)
    if m == 0:
        return 0
    while used < max_jumps:
        if m > 2:
            k = m - 1
            if k > max_jumps - used:
                k = max_jumps - used
            _jump_block(pos, k)
            used += k
            m = _l1(pos)
        else:
            r = np.random.randint(0, two_d)
            if r & 1:
                pos[r >> 1] -= 1
            else:
                pos[r >> 1] += 1
            used += 1
            m = _l1(pos)
            if m == 0:
                return used
    return -1


@njit(cache=True)
def _escape_count(d, walks, horizon, seed):
    """Number of rate-2d walks from e1 that avoid O up to `horizon`."""
    np.random.seed(seed)
    lam = 2.0 * d * horizon
    escaped = 0
    pos = np.zeros(d, dtype=np.int64)
    for _ in range(walks):
        n_jumps = np.random.poisson(lam)
        pos[:] = 0
        pos[0] = 1
        if _hit_jump_index(pos, n_jumps) < 0:
            escaped += 1
    return escaped


@njit(cache=True)
def _pair_meet_times(d, delta0, act_lo, act_hi, horizon, reps, seed):
    """Meeting times for a dual pair with activation offset, inf if none.

    The earlier walker moves alone during [act_lo, act_hi) (difference at
    rate 2d); both walkers are active on [act_hi, horizon] (difference at
    rate 4d).  Meeting requires both walkers active; sitting on the frozen
    partner does not coalesce.  Coincidence at the activation instant counts.
    """
    np.random.seed(seed)
    out = np.empty(reps, dtype=np.float64)
    pos = np.empty(d, dtype=np.int64)
    rate2 = 2.0 * d
    rate4 = 4.0 * d
    span = horizon - act_hi
    for i in range(reps):
        pos[:] = delta0
        # single-walker phase: endpoint only, no hit checks
        n1 = np.random.poisson(rate2 * (act_hi - act_lo))
        _jump_block(pos, n1)
        if _l1(pos) == 0:
            out[i] = act_hi
            continue
        if span <= 0.0:
            out[i] = np.inf
            continue
        mean_jumps = rate4 * span
        cap = int(mean_jumps + 12.0 * math.sqrt(mean_jumps + 1.0) + 60.0)
        k = _hit_jump_index(pos, cap)
        if k < 0:
            out[i] = np.inf
        else:
            t_hit = act_hi + np.random.gamma(k, 1.0 / rate4)
            out[i] = t_hit if t_hit <= horizon else np.inf
    return out


_I8 = nbtypes.int64


@njit(cache=True, inline="always")
def _pack(pos, bits, half, L):
    key = np.int64(0)
    for j in range(pos.size):
        c = pos[j]
        if L > 0:
            key = (key << bits) | np.int64(c)
        else:
            key = (key << bits) | np.int64(c + half)
    return key


@njit(cache=True)
def _uf_find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(cache=True)
def _occupation_tree(d, H, grid, p, seed, L, bits):
    """Exact occupation path of the origin over [0, H] via dual lineages.

    Arrows into the origin arrive at rate 2d; each spawns a backward lineage
    at a uniform neighbour which evolves as a coalescing rate-2d walk.  The
    arrow process at the origin is conditioned on, so a lineage sitting at
    the origin has no independent clock: it jumps exactly at the (backward)
    arrow instants, to that arrow's source neighbour, merging with the
    lineage spawned there.  Root spins are iid Bernoulli(p) per coalescence
    class (distinct classes end at distinct sites).  Returns (xi on grid,
    jump count, lineage count, err).
    """
    np.random.seed(seed)
    two_d = 2 * d
    half = np.int64(1) << np.int64(bits - 1)
    limit = half - 2
    lam = two_d * H
    cap = int(lam + 12.0 * math.sqrt(lam + 1.0) + 64.0)
    arrows = np.empty(cap, dtype=np.float64)
    K = 0
    t = 0.0
    while True:
        t -= math.log(1.0 - np.random.random()) / two_d
        if t > H:
            break
        if K == cap:
            return np.zeros(grid.size), 0, 0, 2
        arrows[K] = t
        K += 1
    nb = K + 1  # walker K is the time-0 origin itself
    pos = np.zeros((nb, d), dtype=np.int64)
    for j in range(K):
        r = np.random.randint(0, two_d)
        step = -1 if (r & 1) else 1
        if L > 0:
            pos[j, r >> 1] = (step + L) % L
        else:
            pos[j, r >> 1] = step
    parent = np.arange(nb, dtype=np.int64)
    active = np.empty(nb, dtype=np.int64)
    slot_of = np.empty(nb, dtype=np.int64)
    na = 0
    occ = NumbaDict.empty(_I8, _I8)
    okey = _pack(pos[nb - 1], bits, half, L)  # origin key (pos row K is zeros)
    at_origin = np.int64(-1)  # class rep currently frozen at the origin
    jptr = K - 1  # activation order: most recent arrow first (backward clock)
    s = 0.0
    events = 0
    while True:
        s_act = (H - arrows[jptr]) if jptr >= 0 else np.inf
        n_free = na - (1 if at_origin >= 0 else 0)
        if n_free > 0:
            t_jump = s - math.log(1.0 - np.random.random()) / (two_d * n_free)
        else:
            t_jump = np.inf
        if s_act <= t_jump:
            if jptr < 0:
                break
            s = s_act
            j = jptr
            jptr -= 1
            # the arrow behind this activation drags any origin occupant
            # along to the same source neighbour
            dragged = at_origin
            if dragged >= 0:
                del occ[okey]
                slot = slot_of[dragged]
                last = active[na - 1]
                active[slot] = last
                slot_of[last] = slot
                na -= 1
                at_origin = -1
            key = _pack(pos[j], bits, half, L)
            if key in occ:
                root = _uf_find(parent, occ[key])
                parent[j] = root
            else:
                occ[key] = j
                active[na] = j
                slot_of[j] = na
                na += 1
                root = j
            if dragged >= 0:
                parent[dragged] = root
        else:
            if t_jump > H:
                break
            s = t_jump
            events += 1
            slot = np.random.randint(0, n_free)
            if at_origin >= 0 and slot >= slot_of[at_origin]:
                slot += 1
            i = active[slot]
            key_old = _pack(pos[i], bits, half, L)
            del occ[key_old]
            r = np.random.randint(0, two_d)
            c = r >> 1
            step = -1 if (r & 1) else 1
            if L > 0:
                pos[i, c] = (pos[i, c] + step + L) % L
            else:
                pos[i, c] += step
                if pos[i, c] > limit or pos[i, c] < -limit:
                    return np.zeros(grid.size), events, K, 1
            key = _pack(pos[i], bits, half, L)
            if key in occ:
                parent[i] = _uf_find(parent, occ[key])
                slot = slot_of[i]
                last = active[na - 1]
                active[slot] = last
                slot_of[last] = slot
                na -= 1
            else:
                occ[key] = i
                if key == okey:
                    at_origin = i
    if okey in occ:
        r0 = _uf_find(parent, occ[okey])
        if r0 != K:
            parent[K] = r0
    spin = np.full(nb, -1, dtype=np.int8)
    for j in range(nb):
        r0 = _uf_find(parent, j)
        if spin[r0] < 0:
            spin[r0] = 1 if np.random.random() < p else 0
        spin[j] = spin[r0]
    xi = np.zeros(grid.size, dtype=np.float64)
    acc = 0.0
    seg_start = 0.0
    gptr = 0
    for seg in range(K + 1):
        seg_end = arrows[seg] if seg < K else H
        val = float(spin[K] if seg == 0 else spin[seg - 1])
        while gptr < grid.size and grid[gptr] <= seg_end:
            xi[gptr] = acc + val * (grid[gptr] - seg_start)
            gptr += 1
        acc += val * (seg_end - seg_start)
        seg_start = seg_end
    while gptr < grid.size:  # grid points at exactly H (float guard)
        xi[gptr] = acc
        gptr += 1
    return xi, events, K, 0


# --------------------------------------------------------------------------
# public estimators
# --------------------------------------------------------------------------


def _seed_for(master_seed: int, stream_id: int, tag: str) -> int:
    return int(generator(master_seed, stream_id, tag).integers(0, 2**31 - 1))


def escape_probability_mc(
    d: int, walks: int, horizon: float, master_seed: int, stream_id: int = 0
) -> tuple[float, float]:
    """Monte-Carlo estimate of the no-return probability gamma_d.

    Biased upward by at most the stated tail allowance
    integral_horizon^inf p_s(e1,O) ds / green0(d).
    """
    if d < 1 or walks < 1:
        raise ValueError("need d >= 1 and walks >= 1")
    esc = _escape_count(d, walks, float(horizon), _seed_for(master_seed, stream_id, "escape"))
    prob = esc / walks
    stderr = math.sqrt(max(prob * (1.0 - prob), 1e-300) / walks)
    return prob, stderr


def escape_tail_allowance(d: int, horizon: float) -> float:
    """Upper bound on P(first return happens after `horizon`)."""
    a = d / 2.0
    tail = (4.0 * math.pi) ** (-a) * horizon ** (1.0 - a) / (a - 1.0)
    return tail / kernels.green0(d)


def meeting_times_pair(
    x,
    y,
    horizon: float,
    reps: int,
    master_seed: int,
    stream_id: int = 0,
    activations: tuple[float, float] = (0.0, 0.0),
) -> np.ndarray:
    """Sampled meeting times (inf if > horizon) via the difference walk."""
    x = tuple(x)
    y = tuple(y)
    if len(x) != len(y):
        raise ValueError("site dimensions differ")
    d = len(x)
    delta0 = np.array([a - b for a, b in zip(x, y)], dtype=np.int64)
    act_lo, act_hi = sorted(float(a) for a in activations)
    if act_hi > horizon:
        raise ValueError("activation times must not exceed the horizon")
    if act_lo == act_hi == 0.0 and np.all(delta0 == 0):
        raise ValueError("walkers coincide at a common activation time")
    return _pair_meet_times(
        d, delta0, act_lo, act_hi, float(horizon), int(reps),
        _seed_for(master_seed, stream_id, "dual"),
    )


def meeting_prob_pair(
    x,
    y,
    t: float,
    reps: int,
    master_seed: int,
    stream_id: int = 0,
    activations: tuple[float, float] = (0.0, 0.0),
) -> MeetingEstimate:
    """P(tau_xy <= t) for the dual pair, difference-walk estimator."""
    if tuple(x) == tuple(y) and activations[0] == activations[1]:
        raise ValueError("sites must differ (meeting is trivial at activation)")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    times = meeting_times_pair(x, y, t, reps, master_seed, stream_id, activations)
    hits = int(np.sum(times <= t))
    prob = hits / reps
    stderr = math.sqrt(max(prob * (1.0 - prob), 1e-300) / reps)
    return MeetingEstimate(
        offset=abs(activations[1] - activations[0]),
        horizon=float(t),
        prob=prob,
        stderr=stderr,
        reps=int(reps),
    )


def simulate_coalescing(
    starts,
    horizon: float,
    d: int,
    master_seed: int,
    stream_id: int = 0,
    torus_L: int = 0,
) -> WalkerSystem:
    """Coalescing walkers with staggered activations; small-system reference.

    Walkers jump one at a time from an aggregate clock over active walkers;
    merges happen when a jump (or an activation) lands on an occupied site.
    """
    starts = [(tuple(s), float(a)) for s, a in starts]
    if not starts:
        raise ValueError("need at least one walker")
    if any(a > horizon for _, a in starts):
        raise ValueError("activation times must not exceed the horizon")
    rng = generator(master_seed, stream_id, "dual")
    n = len(starts)
    order = sorted(range(n), key=lambda i: (starts[i][1], i))
    positions = {}
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def wrap(c):
        return tuple(v % torus_L for v in c) if torus_L else c

    occupied: dict = {}
    active: list[int] = []
    merge_times: list[float] = []
    t = 0.0
    ptr = 0
    while True:
        t_act = starts[order[ptr]][1] if ptr < n else math.inf
        rate = 2.0 * d * len(active)
        t_jump = t + rng.exponential(1.0 / rate) if active else math.inf
        t_next = min(t_act, t_jump)
        if t_next > horizon:
            break
        t = t_next
        if t_act <= t_jump:
            i = order[ptr]
            ptr += 1
            c = wrap(starts[i][0])
            positions[i] = c
            if c in occupied:
                parent[find(i)] = find(occupied[c])
                merge_times.append(t)
            else:
                occupied[c] = i
                active.append(i)
        else:
            i = active[int(rng.integers(len(active)))]
            c = positions[i]
            del occupied[c]
            r = int(rng.integers(2 * d))
            step = -1 if (r & 1) else 1
            nc = list(c)
            nc[r >> 1] += step
            nc = wrap(tuple(nc))
            positions[i] = nc
            if nc in occupied:
                parent[find(i)] = find(occupied[nc])
                active.remove(i)
                merge_times.append(t)
            else:
                occupied[nc] = i
    final_pos = []
    class_of = []
    roots: dict[int, int] = {}
    for i in range(n):
        r = find(i)
        if r not in roots:
            roots[r] = len(roots)
        class_of.append(roots[r])
        final_pos.append(positions.get(r))
    return WalkerSystem(
        starts=starts,
        horizon=float(horizon),
        positions=final_pos,
        class_of=class_of,
        merge_times=merge_times,
    )


def cov_eta_dual(
    r: float, theta: float, p: float, reps: int, master_seed: int, d: int = 3, stream_id: int = 0
) -> tuple[float, float]:
    """Cov(eta_r(O), eta_theta(O)) under the product measure, via the dual.

    Equals p(1-p) P(the offset dual pair from the origin coalesces by theta).
    """
    if r > theta:
        raise ValueError("need r <= theta")
    if r < 0:
        raise ValueError("times must be nonnegative")
    pq = p * (1.0 - p)
    if pq == 0.0:
        return 0.0, 0.0
    if theta == 0.0:
        return pq, 0.0
    est = meeting_prob_pair(
        (0,) * d, (0,) * d, theta, reps, master_seed, stream_id, activations=(0.0, theta - r)
    )
    return pq * est.prob, pq * est.stderr


def occupation_cov_dual(
    s: float,
    t: float,
    p: float,
    resolution: int,
    reps: int,
    master_seed: int,
    d: int = 3,
) -> tuple[float, float]:
    """Cov(xi_s - ps, xi_t - pt) by double integration of the dual covariance.

    Trapezoid rule on a grid of `resolution` points per unit time; the
    meeting-probability curves per activation offset are shared across the
    grid (one Monte-Carlo batch per offset).  Standard error by 8-way
    replicate split.
    """
    if not 0.0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    if resolution < 8:
        raise ValueError("resolution must be >= 8 points per unit")
    pq = p * (1.0 - p)
    if s == 0.0 or pq == 0.0:
        return 0.0, 0.0
    n = max(int(round(t * resolution)), 2)
    grid = np.linspace(0.0, t, n + 1)
    h = grid[1] - grid[0]
    n_s = int(round(s / h))
    groups = 8
    sub = max(reps // groups, 1)
    # times[k, i]: meeting time sample i at activation offset grid[k]
    times = np.empty((n + 1, groups * sub), dtype=np.float64)
    times[0] = 0.0  # zero offset: the pair meets at activation
    for k in range(1, n + 1):
        u = grid[k]
        times[k] = meeting_times_pair(
            (0,) * d, (0,) * d, t, groups * sub, master_seed, stream_id=k,
            activations=(0.0, u),
        )
    estimates = []
    for g in range(groups):
        blk = times[:, g * sub : (g + 1) * sub]
        # F[k, j] = P(meet by grid[j] | offset grid[k])
        F = (blk[:, None, :] <= grid[None, :, None]).mean(axis=2)
        w = np.ones(n + 1)
        w[0] = w[-1] = 0.5
        c = np.empty((n_s + 1, n + 1))
        ii = np.arange(n_s + 1)[:, None]
        jj = np.arange(n + 1)[None, :]
        off = np.abs(ii - jj)
        mx = np.maximum(ii, jj)
        c[:, :] = F[off, mx]
        ws = np.ones(n_s + 1)
        ws[0] = ws[-1] = 0.5
        val = pq * h * h * float(ws @ c @ w)
        estimates.append(val)
    estimates = np.array(estimates)
    mean = float(estimates.mean())
    stderr = float(estimates.std(ddof=1) / math.sqrt(groups))
    return mean, stderr


def occupation_var_dual(
    t: float,
    p: float,
    reps: int,
    master_seed: int,
    d: int = 3,
    n_offsets: int = 160,
) -> tuple[float, float]:
    """Var(xi_t - pt) on the infinite lattice via the dual integral.

    Var = 2 p(1-p) * integral_0^t E[(t - tau_u)^+] du over the activation
    offset u, where tau_u is the meeting time of the offset dual pair from
    the origin.  The integrand is singular-free but steep near u = 0, so the
    quadrature substitutes u = w^2.  Much cheaper than path sampling; used
    for variance-scaling sweeps at horizons where direct ensembles are out
    of reach.  Standard error by 8-way replicate split.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    pq = p * (1.0 - p)
    if t == 0.0 or pq == 0.0:
        return 0.0, 0.0
    groups = 8
    sub = max(reps // groups, 1)
    w = np.linspace(0.0, math.sqrt(t), n_offsets + 1)
    g = np.empty((n_offsets + 1, groups))
    g[0, :] = t  # offset 0: the pair meets at activation, tau = 0
    for k in range(1, n_offsets + 1):
        u = min(w[k] * w[k], t)  # guard float rounding at the last node
        times = meeting_times_pair(
            (0,) * d, (0,) * d, t, groups * sub, master_seed, stream_id=k,
            activations=(0.0, u),
        )
        gain = np.where(times <= t, t - times, 0.0).reshape(groups, sub)
        g[k] = gain.mean(axis=1)
    # trapezoid in w of g * 2w
    integ = np.trapezoid(g * (2.0 * w)[:, None], w, axis=0)
    vals = 2.0 * pq * integ
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(groups))


def exact_duality_oracle(lattice: TorusLattice, eta, x: int, t: float) -> tuple[float, float]:
    """Dense-generator duality check on a tiny torus.

    lhs: E_eta[eta_t(x)] by exponentiating the full 2^(L^d)-state generator;
    rhs: sum over y of wrapped-kernel p_t(x, y) eta(y).
    """
    from scipy.sparse import lil_matrix
    from scipy.sparse.linalg import expm_multiply

    n = lattice.n_sites
    if 2**n > 4096:
        raise ValueError(f"state space 2^{n} exceeds the dense-oracle capacity 4096")
    eta = np.asarray(eta, dtype=np.uint8)
    if eta.shape != (n,):
        raise ValueError("configuration size does not match lattice")
    nbr = lattice.neighbor_table()
    n_states = 2**n
    Q = lil_matrix((n_states, n_states))
    for state in range(n_states):
        bits = [(state >> i) & 1 for i in range(n)]
        out_rate = 0.0
        for site in range(n):
            for k in range(2 * lattice.d):
                y = nbr[site, k]
                if bits[site] != bits[y]:
                    target = state ^ (1 << site)
                    Q[state, target] += 1.0
                    out_rate += 1.0
        Q[state, state] = -out_rate
    start = int(sum(int(b) << i for i, b in enumerate(eta)))
    v = np.zeros(n_states)
    v[start] = 1.0
    dist = expm_multiply(Q.tocsr().T * t, v)
    f = np.array([(state >> x) & 1 for state in range(n_states)], dtype=float)
    lhs = float(dist @ f)
    cx = lattice.site_coords(x)
    rhs = 0.0
    for y in range(n):
        cy = lattice.site_coords(y)
        disp = tuple(a - b for a, b in zip(cx, cy))
        rhs += kernels.p_torus_kernel(disp, t, lattice.L) * float(eta[y])
    return lhs, rhs


def nu_moment4(partition, p: float) -> float:
    """nu_p-integral of prod_j (eta(z_j) - p) by coincidence pattern of 4 labels."""
    blocks = [frozenset(b) for b in partition]
    labels = sorted(x for b in blocks for x in b)
    if labels != [1, 2, 3, 4] or len(set(blocks)) != len(blocks):
        raise ValueError("partition must split the labels {1, 2, 3, 4}")
    sizes = sorted(len(b) for b in blocks)
    if sizes == [4]:
        return p * (1.0 - p) ** 4 + (1.0 - p) * p**4
    if sizes == [2, 2]:
        return (p * (1.0 - p) ** 2 + (1.0 - p) * p**2) ** 2
    return 0.0


def fourpoint_bound_check(
    times,
    sites,
    p: float,
    reps: int,
    master_seed: int,
    d: int,
    torus_L: int,
    dual_reps: int = 20000,
) -> dict:
    """Four-point moment bound: MC product moment vs pairing-product bound.

    lhs estimates E[prod_j (eta_{t_j}(x_j) - p)] from voter ensembles; rhs is
    the sum over the three complementary pairings of products of offset
    meeting probabilities by t4.
    """
    from .voter import init_product, advance_to

    times = [float(u) for u in times]
    sites = [tuple(map(int, c)) for c in sites]
    if sorted(times) != times or len(times) != 4 or len(sites) != 4:
        raise ValueError("need 4 ascending times and 4 sites")
    if len(set(sites)) != 4:
        raise ValueError("sites must be distinct")
    t4 = times[3]
    lat = TorusLattice(d, torus_L)
    idx = [lat.site_index(c) for c in sites]
    prods = np.empty(reps)
    for rep in range(reps):
        fld = init_product(lat, p, master_seed, stream_id=rep)
        vals = []
        for j in range(4):
            advance_to(fld, times[j], [], master_seed, stream_id=10_000_000 + 8 * rep + j)
            vals.append(float(fld.spins[idx[j]]))
        prods[rep] = math.prod(v - p for v in vals)
    lhs = float(prods.mean())
    lhs_stderr = float(prods.std(ddof=1) / math.sqrt(reps))
    pairings = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]
    rhs = 0.0
    rhs_stderr_sq = 0.0
    for pi, pairing in enumerate(pairings):
        probs = []
        errs = []
        for qi, (i, j) in enumerate(pairing):
            est = meeting_prob_pair(
                sites[i],
                sites[j],
                t4,
                dual_reps,
                master_seed,
                stream_id=1000 + 10 * pi + qi,
                activations=(t4 - times[i], t4 - times[j]),
            )
            probs.append(est.prob)
            errs.append(est.stderr)
        rhs += probs[0] * probs[1]
        rhs_stderr_sq += (probs[1] * errs[0]) ** 2 + (probs[0] * errs[1]) ** 2
    passed = lhs <= rhs + 3.0 * lhs_stderr
    return {
        "lhs": lhs,
        "lhs_stderr": lhs_stderr,
        "rhs": rhs,
        "rhs_stderr": math.sqrt(rhs_stderr_sq),
        "passed": bool(passed),
    }


def _tree_bits(d: int, horizon: float, torus_L: int) -> int:
    if torus_L > 0:
        bits = max(int(math.ceil(math.log2(torus_L + 1))), 2)
    else:
        # half-range ~16 sigma of a walker coordinate over the full horizon;
        # the kernel still hard-checks the bound and errors if ever exceeded
        half = 8.0 * math.sqrt(2.0 * horizon) + 64.0
        bits = int(math.ceil(math.log2(half + 2.0))) + 1
    if d * bits > 62:
        raise ValueError(
            f"horizon {horizon} too large for packed dual lineages in d={d}"
        )
    return bits


def occupation_paths_dual(
    d: int,
    horizon: float,
    grid,
    p: float,
    reps: int,
    master_seed: int,
    torus_L: int = 0,
    stream_offset: int = 0,
) -> tuple[np.ndarray, int]:
    """Exact samples of the origin occupation path via backward dual lineages.

    torus_L = 0 samples the infinite-lattice voter model; a positive side
    matches the torus simulator in law.  Returns (reps x grid raw xi values,
    total walker jumps).
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if grid.size and grid[-1] > horizon:
        raise ValueError("grid must lie within [0, horizon]")
    bits = _tree_bits(d, horizon, torus_L)
    out = np.empty((reps, grid.size))
    events = 0
    for rep in range(reps):
        seed = _seed_for(master_seed, stream_offset + rep, "tree")
        xi, ev, _, err = _occupation_tree(
            d, float(horizon), grid, float(p), seed, int(torus_L), bits
        )
        if err == 1:
            raise RuntimeError("dual lineage left the packed coordinate range")
        if err == 2:
            raise RuntimeError("arrow buffer overflow in dual lineage sampler")
        out[rep] = xi
        events += ev
    return out, events


def survival_logt(
    x, y, t: float, reps: int, master_seed: int, stream_id: int = 0
) -> tuple[float, float]:
    """(log t) * P(tau_xy > t) with standard error (d=2 asymptotic probe)."""
    times = meeting_times_pair(x, y, t, reps, master_seed, stream_id)
    surv = float(np.mean(times > t))
    stderr = math.sqrt(max(surv * (1.0 - surv), 1e-300) / reps)
    return surv * math.log(t), stderr * math.log(t)
