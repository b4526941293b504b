"""Beam construction for the interference-free-user scheme, SINR and rates.

Every beam belongs to one user; it is transmitted by the user's serving BS.
Solutions are stored as an ``(n_users, n_t)`` array so the single-user network
(one beam per BS) and the multiuser network share one code path.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .channel import local_csi
from .numerics import dominant_rayleigh_vector, smallest_right_singular_vector

MIN_WGI = "min-WGI"
MAX_WSLNR = "max-WSLNR"
MUTED = "muted"
MATCHED_FILTER = "matched-filter"
OTHER = "other-baseline"
REGIMES = (MIN_WGI, MAX_WSLNR, MUTED, MATCHED_FILTER, OTHER)

NORM_TOL = 1e-12


@dataclass(frozen=True)
class Selection:
    """One interference-free-user hypothesis: the set ``F`` of flat user ids."""

    free_set: tuple
    candidate_index: int = -1

    def __post_init__(self):
        object.__setattr__(self, "free_set", tuple(sorted(int(u) for u in self.free_set)))

    @property
    def alpha(self):
        return len(self.free_set)

    def __contains__(self, user):
        return user in self.free_set


def validate_selection(config, selection):
    """Raise ``ValueError`` if ``selection`` cannot be realized in ``config``."""
    f = selection.free_set
    alpha = len(f)
    if not 1 <= alpha <= config.n_t:
        raise ValueError(f"alpha={alpha} outside [1, {config.n_t}]")
    if len(set(f)) != alpha:
        raise ValueError(f"duplicate users in {f}")
    if f[0] < 0 or f[-1] >= config.n_users:
        raise ValueError(f"user index out of range in {f}")
    if alpha == config.n_t and config.n_u > 1:
        if config.n_t % config.n_u:
            raise ValueError(
                f"alpha = n_t needs n_u | n_t (n_t={config.n_t}, n_u={config.n_u})")
        cells = {config.serving_bs(u) for u in f}
        full = {u for c in cells for u in config.users_of(c)}
        if full != set(f) or len(cells) != config.n_t // config.n_u:
            raise ValueError(
                "alpha = n_t needs F to be all users of exactly n_t/n_u cells")


@dataclass(frozen=True, eq=False)
class BeamformingSolution:
    """Beams per user plus the construction that produced each one.

    Beams are unit-norm, except zero under ``muted``; baselines tagged
    ``other-baseline`` may use less than full power (norm <= 1).
    """

    beams: np.ndarray = field(repr=False)
    regimes: tuple

    def __post_init__(self):
        beams = np.array(self.beams, dtype=complex)
        if beams.ndim != 2 or beams.shape[0] != len(self.regimes):
            raise ValueError("one regime tag per beam required")
        norms = np.linalg.norm(beams, axis=1)
        for u, (reg, nrm) in enumerate(zip(self.regimes, norms)):
            if reg not in REGIMES:
                raise ValueError(f"unknown regime {reg!r}")
            if reg == MUTED:
                if nrm != 0.0:
                    raise ValueError(f"muted beam {u} is not zero")
            elif reg == OTHER:
                if nrm > 1.0 + 1e-9:
                    raise ValueError(f"beam {u} exceeds unit power ({nrm})")
            elif abs(nrm - 1.0) > 1e-9:
                raise ValueError(f"beam {u} ({reg}) is not unit-norm ({nrm})")
        beams.flags.writeable = False
        object.__setattr__(self, "beams", beams)
        object.__setattr__(self, "regimes", tuple(self.regimes))

    @property
    def active(self):
        return tuple(r != MUTED for r in self.regimes)


@dataclass(frozen=True, eq=False)
class RateReport:
    sinr: np.ndarray = field(repr=False)
    rates: np.ndarray = field(repr=False)
    interference: np.ndarray = field(repr=False)
    desired: np.ndarray = field(repr=False)
    sum_rate: float
    r_local: float = 0.0
    r_global: float = 0.0


def _rows(local, users):
    return np.stack([local.rows[u] for u in users])


def _check_user(local, user):
    if not 0 <= user < local.config.n_users:
        raise ValueError(f"user {user} out of range")


def min_wgi_beam(local, serving_user, null_targets):
    """Unit beam minimizing the leakage ``sum_q |h_{i,q}^H w|^2`` over targets."""
    _check_user(local, serving_user)
    targets = sorted(set(null_targets))
    if not targets:
        raise ValueError("no null targets; use the matched filter instead")
    if serving_user in targets:
        raise ValueError("serving user cannot be a null target")
    if len(targets) > local.config.n_users:
        raise ValueError("more null targets than users")
    for q in targets:
        _check_user(local, q)
    return smallest_right_singular_vector(_rows(local, targets).conj())


def matched_filter(h):
    return h / np.linalg.norm(h)


def max_wslnr_beam(local, serving_user, leak_set, n0):
    """Maximizer of ``|h_m^H w|^2 / (sum_k |h_k^H w|^2 + n0)``, regularized form."""
    _check_user(local, serving_user)
    leak = sorted(set(leak_set))
    if serving_user in leak:
        raise ValueError("serving user cannot be in the leak set")
    h = local.rows[serving_user]
    b = n0 * np.eye(h.size, dtype=complex)
    if leak:
        g = _rows(local, leak)
        b = b + g.T @ g.conj()
    return dominant_rayleigh_vector(h, b)


def zf_wslnr_beam(local, serving_user, leak_set):
    """Interference-free WSLNR maximizer: desired gain under exact nulls.

    Projects the desired channel onto the orthogonal complement of the leak
    channels; this is the WSLNR maximizer once leakage to the set is forced
    to zero, and reduces to the matched filter for an empty set.
    """
    _check_user(local, serving_user)
    leak = sorted(set(leak_set))
    if serving_user in leak:
        raise ValueError("serving user cannot be in the leak set")
    h = local.rows[serving_user]
    if not leak:
        return matched_filter(h)
    n_t = h.size
    if len(leak) >= n_t:
        raise ValueError(f"{len(leak)} nulls leave no free dimension with {n_t} antennas")
    g = _rows(local, leak).conj()
    _, _, vh = np.linalg.svd(g, full_matrices=True)
    null = vh[len(leak):]  # rows span the null space (conjugated basis)
    w = null.conj().T @ (null @ h)
    nrm = np.linalg.norm(w)
    if nrm == 0.0:
        raise ValueError("desired channel lies in the span of the leak channels")
    return w / nrm


def beam_for_user(local, user, selection):
    """Beam of ``user`` (served by ``local.bs_index``) under the dispatch rules.

    Returns ``(w, regime)``; needs only the serving BS's local CSI.
    """
    cfg = local.config
    if cfg.serving_bs(user) != local.bs_index:
        raise ValueError(f"user {user} is not served by BS {local.bs_index}")
    free = selection.free_set
    alpha = len(free)
    in_f = user in selection
    others = [q for q in free if q != user]

    if alpha == cfg.n_t:
        if not in_f:
            return np.zeros(cfg.n_t, dtype=complex), MUTED
        return min_wgi_beam(local, user, others), MIN_WGI
    if in_f:
        if not others:
            return matched_filter(local.rows[user]), MATCHED_FILTER
        return zf_wslnr_beam(local, user, others), MAX_WSLNR
    if alpha == cfg.n_t - 1:
        return min_wgi_beam(local, user, free), MIN_WGI
    return zf_wslnr_beam(local, user, free), MAX_WSLNR


def design_beams(realization, selection):
    cfg = realization.config
    validate_selection(cfg, selection)
    beams = np.zeros((cfg.n_users, cfg.n_t), dtype=complex)
    regimes = []
    for bs in range(cfg.n_c):
        local = local_csi(realization, bs)
        for u in cfg.users_of(bs):
            w, reg = beam_for_user(local, u, selection)
            beams[u] = w
            regimes.append(reg)
    return BeamformingSolution(beams, tuple(regimes))


def gain_matrix(realization, beams):
    """``G[u, v] = |h_{b(u), v}^H w_u|^2``: power of beam ``u`` at user ``v``."""
    cfg = realization.config
    serving = np.repeat(np.arange(cfg.n_c), cfg.n_u)
    amp = np.einsum("uvn,un->uv", realization.h[serving].conj(), beams)
    return amp.real ** 2 + amp.imag ** 2


def evaluate(realization, solution, free_set=()):
    """SINR, per-user rates (bits/s/Hz) and the local/global split."""
    cfg = realization.config
    beams = solution.beams if isinstance(solution, BeamformingSolution) else np.asarray(solution)
    if beams.shape != (cfg.n_users, cfg.n_t):
        raise ValueError(f"beams have shape {beams.shape}, expected {(cfg.n_users, cfg.n_t)}")
    g = gain_matrix(realization, beams)
    desired = np.diag(g).copy()
    np.fill_diagonal(g, 0.0)
    interference = g.sum(axis=0)
    sinr = desired / (interference + cfg.n0)
    rates = np.log2(1.0 + sinr)
    mask = np.zeros(cfg.n_users, dtype=bool)
    mask[list(free_set)] = True
    return RateReport(
        sinr=sinr,
        rates=rates,
        interference=interference,
        desired=desired,
        sum_rate=float(rates.sum()),
        r_local=float(rates[mask].sum()),
        r_global=float(rates[~mask].sum()),
    )


class LocalRate(NamedTuple):
    candidate_index: int
    user: int
    rate: float


def local_rate_terms(local, candidates):
    """Rates ``log2(1 + |h_mm^H w_m|^2 / n0)`` this BS computes for each candidate.

    One entry per (candidate, F-member served here), in candidate order.
    """
    cfg = local.config
    mine = set(cfg.users_of(local.bs_index))
    out = []
    for pos, sel in enumerate(candidates):
        served = [u for u in sel.free_set if u in mine]
        if not served:
            raise ValueError(
                f"candidate {sel.free_set} has no user served by BS {local.bs_index}")
        idx = sel.candidate_index if sel.candidate_index >= 0 else pos
        for u in served:
            w, _ = beam_for_user(local, u, sel)
            gain = abs(np.vdot(local.rows[u], w)) ** 2
            out.append(LocalRate(idx, u, float(np.log2(1.0 + gain / cfg.n0))))
    return out
