"""Reference beamformers the selection scheme is compared against.

All of these see the full channel array, but only ``global_oracle`` and
``wmmse_beams`` actually couple the beams of different BSs.
"""

from dataclasses import dataclass

import numpy as np

from .beamforming import (MATCHED_FILTER, OTHER, BeamformingSolution, design_beams,
                          evaluate)
from .channel import local_csi
from .numerics import dominant_rayleigh_vector, smallest_right_singular_vector
from .selection import enumerate_candidates

LN2 = np.log(2.0)


class BisectionError(RuntimeError):
    pass


def _serving_channels(realization):
    """``a[v, k]``: channel from the BS serving user ``v`` to user ``k``."""
    cfg = realization.config
    serving = np.arange(cfg.n_users) // cfg.n_u
    return realization.h[serving]


def _unit(w):
    return w / np.linalg.norm(w)


def max_snr_beams(realization):
    a = _serving_channels(realization)
    k = np.arange(a.shape[0])
    beams = a[k, k] / np.linalg.norm(a[k, k], axis=1, keepdims=True)
    return BeamformingSolution(beams, (MATCHED_FILTER,) * len(k))


def min_gi_beams(realization):
    """Each beam minimizes the leakage to every user it does not serve."""
    a = _serving_channels(realization)
    n = a.shape[0]
    beams = np.empty((n, a.shape[2]), dtype=complex)
    for v in range(n):
        others = np.delete(a[v], v, axis=0)
        beams[v] = smallest_right_singular_vector(others.conj())
    return BeamformingSolution(beams, (OTHER,) * n)


def max_slnr_beams(realization):
    a = _serving_channels(realization)
    n, n_t = a.shape[0], a.shape[2]
    n0 = realization.config.n0
    beams = np.empty((n, n_t), dtype=complex)
    for v in range(n):
        others = np.delete(a[v], v, axis=0)
        b = others.T @ others.conj() + n0 * np.eye(n_t)
        beams[v] = dominant_rayleigh_vector(a[v, v], b)
    return BeamformingSolution(beams, (OTHER,) * n)


def random_beams(realization, seed):
    """Isotropic unit beams; ``seed`` is independent of the channel seed."""
    rng = np.random.default_rng(seed)
    cfg = realization.config
    g = rng.standard_normal((cfg.n_users, cfg.n_t)) + 1j * rng.standard_normal((cfg.n_users, cfg.n_t))
    return BeamformingSolution(g / np.linalg.norm(g, axis=1, keepdims=True), (OTHER,) * cfg.n_users)


def zf_multiuser_beams(realization):
    """Intracell zero forcing: each beam nulls its co-cell users."""
    cfg = realization.config
    if cfg.n_u > cfg.n_t:
        raise ValueError(f"intracell ZF needs n_u <= n_t, got n_u={cfg.n_u}, n_t={cfg.n_t}")
    beams = np.empty((cfg.n_users, cfg.n_t), dtype=complex)
    for cell in range(cfg.n_c):
        users = list(cfg.users_of(cell))
        hc = realization.h[cell, users]
        # columns of pinv(H^H) = H^H-side right inverse; column j nulls the other rows
        w = np.linalg.pinv(hc.conj())
        beams[users] = (w / np.linalg.norm(w, axis=0)).T
    return BeamformingSolution(beams, (OTHER,) * cfg.n_users)


def sum_rates(a, w, n0):
    """Sum-rate of a batch of beam sets ``w`` with shape (S, K, n_t)."""
    z = np.einsum("vkn,svn->svk", a.conj(), w)
    p = np.abs(z) ** 2
    total = p.sum(axis=1) + n0
    desired = np.einsum("skk->sk", p)
    return np.log2(total / (total - desired)).sum(axis=1), z, total, desired


@dataclass(frozen=True)
class WmmseConfig:
    max_iterations: int = 50
    power: float = 1.0
    tol: float = 1e-8
    bisection_tol: float = 1e-13

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("max_iterations (kappa) must be a positive integer")
        if not self.power > 0:
            raise ValueError("power budget must be positive")
        if not (self.tol > 0 and self.bisection_tol > 0):
            raise ValueError("tolerances must be positive")


def _power_limited_solve(mat, rhs, power, tol):
    """Solve ``(mat + mu I) w = rhs`` with the smallest ``mu >= 0`` giving ``|w|^2 <= power``."""
    lam, vec = np.linalg.eigh(mat)
    lam = np.maximum(lam, 0.0)
    c = np.abs(vec.conj().T @ rhs) ** 2

    def norm2(mu):
        return float(np.sum(c / (lam + mu) ** 2))

    floor = 1e-12 * max(lam[-1], 1.0)
    if lam[0] > floor and norm2(0.0) <= power:
        mu = 0.0
    else:
        lo, hi = 0.0, np.sqrt(c.sum() / power)
        if not norm2(hi) <= power * (1 + 1e-12):
            raise BisectionError("upper multiplier bracket does not satisfy the power budget")
        for _ in range(400):
            if hi - lo <= tol * max(hi, 1e-300):
                break
            mid = 0.5 * (lo + hi)
            if mid == 0.0 or norm2(mid) > power:
                lo = mid
            else:
                hi = mid
        else:
            raise BisectionError("multiplier bisection did not converge")
        mu = hi
    w = vec @ ((vec.conj().T @ rhs) / (lam + mu))
    nrm = np.linalg.norm(w)
    if nrm > np.sqrt(power):
        w *= np.sqrt(power) / nrm
    return w


def wmmse_beams(realization, cfg=WmmseConfig(), return_history=False):
    """Weighted-MMSE alternating updates, matched-filter start, per-beam power.

    With ``return_history`` the sum-rate after every outer iteration is
    returned as well (index 0 is the initial point).
    """
    a = _serving_channels(realization)
    n0 = realization.config.n0
    n, n_t = a.shape[0], a.shape[2]
    k = np.arange(n)
    w = a[k, k] / np.linalg.norm(a[k, k], axis=1, keepdims=True) * np.sqrt(cfg.power)
    rate, z, total, _ = sum_rates(a, w[None], n0)
    history = [float(rate[0])]
    for _ in range(cfg.max_iterations):
        u = z[0, k, k] / total[0]
        e = 1.0 - np.conj(u) * z[0, k, k]
        m = 1.0 / e.real
        coef = m * np.abs(u) ** 2
        new = np.empty_like(w)
        for v in range(n):
            mat = (a[v].T * coef) @ a[v].conj()
            new[v] = _power_limited_solve(mat, m[v] * u[v] * a[v, v], cfg.power, cfg.bisection_tol)
        w = new
        rate, z, total, _ = sum_rates(a, w[None], n0)
        history.append(float(rate[0]))
        if abs(history[-1] - history[-2]) <= cfg.tol * max(1.0, abs(history[-1])):
            break
    sol = BeamformingSolution(w, (OTHER,) * n)
    return (sol, history) if return_history else sol


def _project(w):
    nrm = np.linalg.norm(w, axis=-1, keepdims=True)
    return np.where(nrm > 1.0, w / np.maximum(nrm, 1e-300), w)


def _gradient(a, z, total, desired):
    interf = total - desired
    n = a.shape[0]
    c = 1.0 / total[:, None, :] - (1 - np.eye(n))[None] / interf[:, None, :]
    return np.einsum("svk,vkn->svn", c * z, a) / LN2


def projected_gradient(realization, starts, steps=200, step0=0.1, tol=1e-9):
    """Monotone projected-gradient ascent from each start; returns (beams, rates).

    Stops early once no start gains more than ``tol`` (relative) in one outer step.
    """
    a = _serving_channels(realization)
    n0 = realization.config.n0
    w = _project(np.array(starts, dtype=complex))
    rate, z, total, desired = sum_rates(a, w, n0)
    step = np.full(len(w), step0)
    for _ in range(steps):
        before = rate.copy()
        g = _gradient(a, z, total, desired)
        moving = np.ones(len(w), dtype=bool)
        for _ in range(30):
            trial = _project(w + step[:, None, None] * g)
            t_rate, t_z, t_total, t_desired = sum_rates(a, trial, n0)
            ok = moving & (t_rate > rate)
            w[ok], rate[ok], z[ok] = trial[ok], t_rate[ok], t_z[ok]
            total[ok], desired[ok] = t_total[ok], t_desired[ok]
            step[ok] *= 2.0
            moving &= ~ok
            step[moving] *= 0.5
            if not moving.any():
                break
        step = np.clip(step, 1e-12, 1e3)
        if np.max((rate - before) / (1.0 + np.abs(rate))) <= tol:
            break
    return w, rate


def warm_starts(realization, wmmse=True):
    """Baseline solutions plus every selection-scheme candidate."""
    cfg = realization.config
    starts = [max_snr_beams(realization).beams, max_slnr_beams(realization).beams,
              min_gi_beams(realization).beams]
    if wmmse:
        starts.append(wmmse_beams(realization, WmmseConfig(max_iterations=20)).beams)
    if cfg.n_c >= 2 and cfg.n_t < cfg.n_users:
        alphas = range(1, cfg.n_t + (cfg.n_u == 1 or cfg.n_t % cfg.n_u == 0))
        for sel in enumerate_candidates(cfg, list(alphas)):
            starts.append(design_beams(realization, sel).beams)
    return starts


def global_oracle(realization, restarts=20, steps=100, seed=0):
    """Best sum-rate found by multi-start projected gradient.

    A lower-bound estimate of the optimum. Starts are all warm starts plus
    random isotropic beams, at least ``restarts`` in total.
    """
    if restarts < 1 or steps < 0:
        raise ValueError("restarts must be >= 1 and steps >= 0")
    cfg = realization.config
    starts = warm_starts(realization)
    rng = np.random.default_rng(seed)
    for _ in range(max(0, restarts - len(starts))):
        g = rng.standard_normal((cfg.n_users, cfg.n_t)) + 1j * rng.standard_normal((cfg.n_users, cfg.n_t))
        starts.append(g / np.linalg.norm(g, axis=1, keepdims=True))
    w, rate = projected_gradient(realization, starts, steps)
    best = int(np.argmax(rate))
    return BeamformingSolution(w[best], (OTHER,) * cfg.n_users)
