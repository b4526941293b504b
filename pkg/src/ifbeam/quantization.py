"""Rate distribution, Lloyd-Max codebooks and scalar quantization of rates."""

from dataclasses import dataclass
from functools import lru_cache
import json
import math

import numpy as np
from scipy import stats
from scipy.linalg import solve_banded

SCHEMA = "ifbeam.codebook/1"

# Tail mass left beyond the last integration point.
TAIL_MASS = 1e-12
MAX_ITERATIONS = 10_000
MOVE_TOL = 1e-9
_MAX_HALVINGS = 12
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class RatePdfParams:
    n_t: int
    alpha: int
    n0: float

    def __post_init__(self):
        if not 1 <= self.alpha <= self.n_t:
            raise ValueError(f"alpha={self.alpha} outside [1, {self.n_t}]")
        if not self.n0 > 0:
            raise ValueError("n0 must be positive")

    @property
    def dof(self):
        """Chi-square degrees of freedom of the desired gain."""
        return 2 * (self.n_t - self.alpha + 1)

    @property
    def t_max(self):
        """Rate beyond which at most ``TAIL_MASS`` probability remains."""
        return float(np.log2(1.0 + stats.chi2.isf(TAIL_MASS, self.dof) / self.n0))


def _check_rates(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("rates must be non-negative")
    return t


def rate_pdf(t, params):
    """Density of ``r = log2(1 + g / n0)`` with ``g ~ chi2(2(n_t - alpha + 1))``."""
    t = _check_rates(t)
    x = params.n0 * np.expm1(t * math.log(2.0))
    return math.log(2.0) * params.n0 * np.exp2(t) * stats.chi2.pdf(x, params.dof)


def rate_cdf(t, params):
    t = _check_rates(t)
    return stats.chi2.cdf(params.n0 * np.expm1(t * math.log(2.0)), params.dof)


def rate_ppf(q, params):
    return np.log2(1.0 + stats.chi2.ppf(q, params.dof) / params.n0)


def _cell_moments(edges, params):
    """Mass and first moment of every cell ``[edges[k], edges[k+1]]``."""
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    t = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    f = rate_pdf(t, params)
    mass = half * (f @ _GL_WEIGHTS)
    first = half * ((t * f) @ _GL_WEIGHTS)
    return mass, first


@dataclass(frozen=True, eq=False)
class Codebook:
    levels: np.ndarray
    boundaries: np.ndarray
    n_f: int
    params: RatePdfParams
    iterations: int = 0

    def __post_init__(self):
        levels = np.array(self.levels, dtype=float)
        bounds = np.array(self.boundaries, dtype=float)
        if levels.size != 2 ** self.n_f or bounds.size != levels.size - 1:
            raise ValueError("codebook size does not match n_f")
        if np.any(np.diff(levels) <= 0) or np.any(np.diff(bounds) <= 0):
            raise ValueError("levels and boundaries must be strictly ascending")
        if np.any(bounds <= levels[:-1]) or np.any(bounds >= levels[1:]):
            raise ValueError("boundaries must interleave the levels")
        levels.flags.writeable = False
        bounds.flags.writeable = False
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "boundaries", bounds)

    @property
    def edges(self):
        return np.concatenate([[0.0], self.boundaries, [self.params.t_max]])

    def to_json(self):
        p = self.params
        return json.dumps({
            "schema": SCHEMA,
            "params": {"n_t": p.n_t, "alpha": p.alpha, "n0": p.n0},
            "n_f": self.n_f,
            "boundaries": self.boundaries.tolist(),
            "levels": self.levels.tolist(),
            "iterations": self.iterations,
        })

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        if data.get("schema") != SCHEMA:
            raise ValueError(f"unsupported codebook schema {data.get('schema')!r}")
        return cls(data["levels"], data["boundaries"], int(data["n_f"]),
                   RatePdfParams(**data["params"]), int(data.get("iterations", 0)))


def _newton_direction(edges, levels, mass, params):
    """Newton direction on the midpoint conditions ``b_k = (c_k + c_{k+1}) / 2``.

    Only interior boundaries move; ``dc/da = f(a)(c - a)/m`` and
    ``dc/db = f(b)(b - c)/m`` give a tridiagonal Jacobian.
    """
    b = edges[1:-1]
    fb = rate_pdf(b, params)
    lo_c, hi_c = levels[:-1], levels[1:]
    lo_m, hi_m = mass[:-1], mass[1:]
    d_upper = fb * (b - lo_c) / lo_m   # cell k through its upper edge b_k
    d_lower = fb * (hi_c - b) / hi_m   # cell k+1 through its lower edge b_k
    resid = b - 0.5 * (lo_c + hi_c)
    n = b.size
    ab = np.zeros((3, n))
    ab[1] = 1.0 - 0.5 * (d_upper + d_lower)
    # dF_k/db_{k+1} = -d_upper[k+1] / 2, dF_k/db_{k-1} = -d_lower[k-1] / 2
    ab[0, 1:] = -0.5 * d_upper[1:]
    ab[2, :-1] = -0.5 * d_lower[:-1]
    return solve_banded((1, 1), ab, -resid), float(np.abs(resid).max())


def train_lloyd_max(params, n_f):
    """MSE-optimal scalar quantizer for the rate density.

    Starts from equal-probability cells and iterates to the Lloyd-Max fixed
    point (levels are conditional means, boundaries are level midpoints)
    until no level moves by more than ``MOVE_TOL``. Plain Lloyd sweeps are
    replaced by Newton steps on the midpoint conditions whenever the Newton
    step keeps the boundaries ordered and shrinks the residual. Cell
    integrals use 64-point Gauss-Legendre rules.
    """
    if not 1 <= n_f <= 12:
        raise ValueError(f"n_f must be in [1, 12], got {n_f}")
    n = 2 ** n_f
    t_max = params.t_max
    edges = rate_ppf(np.linspace(0.0, 1.0, n + 1), params)
    edges[0], edges[-1] = 0.0, t_max
    levels = None
    for it in range(1, MAX_ITERATIONS + 1):
        mass, first = _cell_moments(edges, params)
        new = first / mass
        moved = np.inf if levels is None else np.abs(new - levels).max()
        levels = new
        if moved < MOVE_TOL:
            break
        lloyd = edges.copy()
        lloyd[1:-1] = 0.5 * (levels[:-1] + levels[1:])
        nxt = lloyd
        if it > 3:
            step, resid = _newton_direction(edges, levels, mass, params)
            lam = 1.0
            for _ in range(_MAX_HALVINGS):
                trial = edges.copy()
                trial[1:-1] += lam * step
                if np.all(np.diff(trial) > 0):
                    t_mass, t_first = _cell_moments(trial, params)
                    t_levels = t_first / t_mass
                    mid = 0.5 * (t_levels[:-1] + t_levels[1:])
                    if np.abs(trial[1:-1] - mid).max() < resid:
                        nxt = trial
                        break
                lam *= 0.5
        edges = nxt
    else:
        raise ConvergenceError(
            f"Lloyd-Max did not converge in {MAX_ITERATIONS} iterations "
            f"(n_f={n_f}, params={params})")
    # Final boundaries are the midpoints of the converged levels.
    bounds = 0.5 * (levels[:-1] + levels[1:])
    return Codebook(levels, bounds, n_f, params, it)


@lru_cache(maxsize=256)
def cached_codebook(n_t, alpha, n0, n_f):
    return train_lloyd_max(RatePdfParams(n_t, alpha, float(n0)), n_f)


def quantize(r, codebook):
    """Cell index of ``r`` (nearest level); the tails clamp to the end cells."""
    r = _check_rates(r)
    idx = np.searchsorted(codebook.boundaries, r, side="left")
    return int(idx) if idx.ndim == 0 else idx


def dequantize(index, codebook):
    out = codebook.levels[index]
    return float(out) if np.ndim(out) == 0 else out


def exchange_bits_per_bs(m_rates, n_f):
    """Bits one BS sends: ``M`` rate scalars at ``n_f`` bits each."""
    if m_rates < 1 or n_f < 1:
        raise ValueError("M and n_f must be positive")
    return m_rates * n_f
