"""Channel realizations and the local-CSI view each base station may use.

Users are indexed by a flat integer ``u = cell * n_u + p``; with one user per
cell the user index equals the cell index. ``h[i, u]`` is the channel vector
from BS ``i`` to user ``u`` and the received amplitude of beam ``w`` is
``h[i, u]^H w``.
"""

from dataclasses import dataclass, field
import json
import math

import numpy as np

SCHEMA = "ifbeam.channel/1"


@dataclass(frozen=True)
class NetworkConfig:
    """Network dimensions and noise level.

    ``n0`` is the noise variance with a unit transmit power budget, so
    SNR = 1/n0.
    """

    n_t: int
    n_c: int
    n_u: int = 1
    n0: float = 1.0

    def __post_init__(self):
        if self.n_t < 2:
            raise ValueError(f"n_t must be >= 2, got {self.n_t}")
        if self.n_c < 1:
            raise ValueError(f"n_c must be >= 1, got {self.n_c}")
        if self.n_u < 1:
            raise ValueError(f"n_u must be >= 1, got {self.n_u}")
        if not (self.n0 > 0 and math.isfinite(self.n0)):
            raise ValueError(f"n0 must be positive and finite, got {self.n0}")

    @classmethod
    def from_snr_db(cls, n_t, n_c, snr_db, n_u=1):
        return cls(n_t=n_t, n_c=n_c, n_u=n_u, n0=10.0 ** (-snr_db / 10.0))

    @property
    def snr_db(self):
        return -10.0 * math.log10(self.n0)

    @property
    def n_users(self):
        return self.n_c * self.n_u

    def serving_bs(self, user):
        return user // self.n_u

    def users_of(self, cell):
        return range(cell * self.n_u, (cell + 1) * self.n_u)

    def with_n0(self, n0):
        return NetworkConfig(self.n_t, self.n_c, self.n_u, n0)

    def require_core_scheme(self):
        """Raise unless the interference-free selection scheme applies."""
        if self.n_c < 2:
            raise ValueError("the selection scheme needs at least two cells")
        if not self.n_t < self.n_users:
            raise ValueError(
                f"the selection scheme needs n_t < n_c*n_u "
                f"({self.n_t} >= {self.n_users})")

    def to_dict(self):
        return {"n_t": self.n_t, "n_c": self.n_c, "n_u": self.n_u, "n0": self.n0}


@dataclass(frozen=True)
class DropParams:
    """Geometry of the simplified pathloss drop.

    Defaults are artifact choices (small-cell sized disks), not values taken
    from any standard.
    """

    cell_radius_m: float = 40.0
    pathloss_exponent: float = 3.7
    min_dist_m: float = 3.0
    tx_power_dbm: float = 24.0

    def __post_init__(self):
        if not self.cell_radius_m > 0:
            raise ValueError("cell_radius_m must be positive")
        if not 0 < self.min_dist_m < self.cell_radius_m:
            raise ValueError("min_dist_m must lie in (0, cell_radius_m)")
        if self.pathloss_exponent < 0:
            raise ValueError("pathloss_exponent must be non-negative")
        if not math.isfinite(self.tx_power_dbm):
            raise ValueError("tx_power_dbm must be finite")


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    config: NetworkConfig
    h: np.ndarray = field(repr=False)
    seed: object = None

    def __post_init__(self):
        cfg = self.config
        h = np.array(self.h, dtype=complex)
        expected = (cfg.n_c, cfg.n_users, cfg.n_t)
        if h.shape != expected:
            raise ValueError(f"channel array has shape {h.shape}, expected {expected}")
        if not np.all(np.isfinite(h)):
            raise ValueError("channel array has non-finite entries")
        h.flags.writeable = False
        object.__setattr__(self, "h", h)

    def channel(self, bs, user):
        return self.h[bs, user]

    def to_json(self):
        seed = self.seed
        if isinstance(seed, np.integer):
            seed = int(seed)
        elif isinstance(seed, (tuple, list)):
            seed = [int(s) for s in seed]
        pairs = np.stack([self.h.real, self.h.imag], axis=-1)
        return json.dumps({
            "schema": SCHEMA,
            "config": self.config.to_dict(),
            "seed": seed,
            "h": pairs.tolist(),
        })

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        if data.get("schema") != SCHEMA:
            raise ValueError(f"unsupported channel schema {data.get('schema')!r}")
        pairs = np.asarray(data["h"], dtype=float)
        seed = data.get("seed")
        if isinstance(seed, list):
            seed = tuple(seed)
        return cls(NetworkConfig(**data["config"]), pairs[..., 0] + 1j * pairs[..., 1], seed)


@dataclass(frozen=True, eq=False)
class LocalCsi:
    """Channels rooted at one BS; nothing else about the network is reachable."""

    bs_index: int
    config: NetworkConfig
    rows: np.ndarray = field(repr=False)

    def channel(self, user):
        return self.rows[user]


def _seed_key(seed):
    if isinstance(seed, (tuple, list)):
        return [int(s) for s in seed]
    return int(seed)


def _rayleigh(config, rng):
    shape = (config.n_c, config.n_users, config.n_t)
    # Per-component variance 1: E||h||^2 = 2 n_t.
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def generate_rayleigh(config, seed):
    """I.i.d. complex Gaussian channels, deterministic in ``seed``.

    ``seed`` is an int or a sequence of ints (e.g. ``(base, point, drop)``).
    """
    rng = np.random.default_rng(_seed_key(seed))
    return ChannelRealization(config, _rayleigh(config, rng), seed)


def hex_sites(n, spacing):
    """Centres of ``n`` hexagonal cells, filled ring by ring from the origin."""
    sites = [(0.0, 0.0)]
    directions = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)]
    ring = 1
    while len(sites) < n:
        q, r = -ring, ring  # axial coordinates of the ring's first corner
        for dq, dr in directions:
            for _ in range(ring):
                sites.append((spacing * (q + r / 2.0), spacing * r * math.sqrt(3.0) / 2.0))
                q, r = q + dq, r + dr
        ring += 1
    return np.array(sites[:n])


def drop_distances(config, params, rng):
    """Distances (n_c, n_users) from every BS to every user for one drop."""
    spacing = math.sqrt(3.0) * params.cell_radius_m
    bs = hex_sites(config.n_c, spacing)
    u = rng.random(config.n_users)
    phi = rng.random(config.n_users) * 2.0 * math.pi
    r_min, r_max = params.min_dist_m, params.cell_radius_m
    radius = np.sqrt(u * (r_max ** 2 - r_min ** 2) + r_min ** 2)
    home = np.repeat(bs, config.n_u, axis=0)
    users = home + np.stack([radius * np.cos(phi), radius * np.sin(phi)], axis=1)
    d = np.linalg.norm(bs[:, None, :] - users[None, :, :], axis=-1)
    return np.maximum(d, params.min_dist_m)


def generate_pathloss(config, params, seed):
    """Rayleigh fading scaled by ``sqrt(P_tx * d^-exponent)`` (P_tx in mW).

    The fading is drawn first from the same stream as
    :func:`generate_rayleigh`, so a zero exponent at 0 dBm reproduces that
    realization exactly.
    """
    rng = np.random.default_rng(_seed_key(seed))
    fading = _rayleigh(config, rng)
    d = drop_distances(config, params, rng)
    gain = 10.0 ** (params.tx_power_dbm / 10.0) * d ** (-params.pathloss_exponent)
    return ChannelRealization(config, fading * np.sqrt(gain)[:, :, None], seed)


def local_csi(realization, i):
    cfg = realization.config
    if not 0 <= i < cfg.n_c:
        raise IndexError(f"BS index {i} out of range for {cfg.n_c} cells")
    rows = realization.h[i].copy()
    rows.flags.writeable = False
    return LocalCsi(i, cfg, rows)
