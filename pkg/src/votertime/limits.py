"""Closed-form covariances of the limit Gaussian processes and path sampling.

Three limit kinds: the d=3 process zeta with covariance
s^{3/2} + t^{3/2} - (t-s)^{3/2}/2 - (t+s)^{3/2}/2, the d=2 conjectural
process vartheta with covariance
((t+s)^2/4) log(t+s) + ((t-s)^2/4) log(t-s) - (s^2 log s)/2 - (t^2 log t)/2
(u^2 log u := 0 at u = 0 by continuity), and standard Brownian motion for
d >= 4.  A LimitKind carries the dimension-dependent multiplier C_d; sampled
paths are C_d times the unit-scale process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._rng import generator


class LimitTag(Enum):
    ZETA_D3 = "ZETA_D3"
    VARTHETA_D2 = "VARTHETA_D2"
    BROWNIAN = "BROWNIAN"


@dataclass(frozen=True)
class LimitKind:
    tag: LimitTag
    scale_c: float

    def __post_init__(self) -> None:
        if self.scale_c < 0:
            raise ValueError("scale multiplier must be nonnegative")

    def cov(self, s: float, t: float) -> float:
        return _COV_FN[self.tag](s, t)


@dataclass(frozen=True)
class CovMatrix:
    grid: np.ndarray
    entries: np.ndarray  # scale_c^2 * cov(t_i, t_j)


class PsdViolationError(RuntimeError):
    """A closed-form covariance matrix failed the eigenvalue check."""


def _check_times(s: float, t: float) -> tuple[float, float]:
    if s < 0 or t < 0:
        raise ValueError(f"times must be nonnegative, got ({s}, {t})")
    return (s, t) if s <= t else (t, s)


def cov_zeta(s: float, t: float) -> float:
    s, t = _check_times(s, t)
    return s**1.5 + t**1.5 - 0.5 * (t - s) ** 1.5 - 0.5 * (t + s) ** 1.5


def _u2logu(u: float) -> float:
    return 0.0 if u == 0.0 else u * u * math.log(u)


def cov_vartheta(s: float, t: float) -> float:
    s, t = _check_times(s, t)
    return (
        0.25 * _u2logu(t + s)
        + 0.25 * _u2logu(t - s)
        - 0.5 * _u2logu(s)
        - 0.5 * _u2logu(t)
    )


def cov_brownian(s: float, t: float) -> float:
    s, t = _check_times(s, t)
    return s


_COV_FN = {
    LimitTag.ZETA_D3: cov_zeta,
    LimitTag.VARTHETA_D2: cov_vartheta,
    LimitTag.BROWNIAN: cov_brownian,
}

PSD_TOL = 1e-9


def limit_cov_matrix(kind: LimitKind, grid) -> CovMatrix:
    """Sigma_ij = scale_c^2 * cov(t_i, t_j), validated positive semidefinite."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be nonempty and strictly increasing")
    if grid[0] < 0:
        raise ValueError("grid times must be nonnegative")
    n = grid.size
    sigma = np.empty((n, n))
    c2 = kind.scale_c**2
    for i in range(n):
        for j in range(i, n):
            sigma[i, j] = sigma[j, i] = c2 * kind.cov(grid[i], grid[j])
    trace = float(np.trace(sigma))
    min_eig = float(np.linalg.eigvalsh(sigma)[0]) if trace > 0 else 0.0
    if min_eig < -PSD_TOL * max(trace, 1.0):
        raise PsdViolationError(
            f"covariance matrix for {kind.tag.value} has eigenvalue {min_eig:.3e} "
            f"below -{PSD_TOL:g} * trace"
        )
    return CovMatrix(grid=grid, entries=sigma)


def sample_gaussian_path(
    kind: LimitKind, grid, reps: int, master_seed: int, stream_id: int = 0
) -> tuple[np.ndarray, float]:
    """Mean-zero Gaussian paths on the grid via Cholesky.

    Returns (reps x grid matrix, jitter actually applied).  Rows/columns with
    zero variance (grid point 0, or scale_c = 0) are pinned at 0.  Jitter is
    bounded by 1e-10 * trace and reported rather than silent.
    """
    cm = limit_cov_matrix(kind, grid)
    sigma = cm.entries
    n = sigma.shape[0]
    rng = generator(master_seed, stream_id, "limit")
    z = rng.standard_normal((reps, n))
    live = np.diag(sigma) > 0
    out = np.zeros((reps, n))
    if not live.any():
        return out, 0.0
    sub = sigma[np.ix_(live, live)]
    trace = float(np.trace(sub))
    jitter = 0.0
    for attempt in range(3):
        try:
            chol = np.linalg.cholesky(sub + jitter * np.eye(sub.shape[0]))
            break
        except np.linalg.LinAlgError:
            jitter = 1e-12 * trace if jitter == 0.0 else jitter * 10.0
            if jitter > 1e-10 * trace:
                raise
    else:
        raise np.linalg.LinAlgError("Cholesky failed within the jitter budget")
    out[:, live] = z[:, : int(live.sum())] @ chol.T
    return out, jitter
