"""Candidate enumeration, the global-rate bound and the selection rule."""

from dataclasses import dataclass, field
from itertools import combinations
import math

from .beamforming import Selection, design_beams, evaluate, local_rate_terms
from .channel import local_csi
from .numerics import upper_incomplete_gamma


@dataclass(frozen=True)
class CandidateSet:
    """Candidates for the considered alphas, in canonical order.

    Canonical order: alpha descending, then lexicographic in the sorted free
    set. ``candidate_index`` equals the position in ``candidates``.
    """

    alphas: tuple
    candidates: tuple

    @property
    def n_g(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)

    def __getitem__(self, i):
        return self.candidates[i]

    def containing_bs(self, config, bs):
        users = set(config.users_of(bs))
        return [c for c in self.candidates if users.intersection(c.free_set)]

    def index_of(self, free_set):
        key = tuple(sorted(free_set))
        for c in self.candidates:
            if c.free_set == key:
                return c.candidate_index
        raise KeyError(key)


def _alpha_sets(config, alpha):
    if alpha == config.n_t and config.n_u > 1:
        for cells in combinations(range(config.n_c), config.n_t // config.n_u):
            yield tuple(u for c in cells for u in config.users_of(c))
    else:
        yield from combinations(range(config.n_users), alpha)


def enumerate_candidates(config, alphas):
    alphas = sorted(set(int(a) for a in alphas), reverse=True)
    if not alphas:
        raise ValueError("no alpha values given")
    for a in alphas:
        if not 1 <= a <= config.n_t:
            raise ValueError(f"alpha={a} outside [1, {config.n_t}]")
        if a == config.n_t and config.n_u > 1 and config.n_t % config.n_u:
            raise ValueError(
                f"alpha = n_t = {a} is infeasible: n_u={config.n_u} does not divide n_t")
        if a > config.n_users:
            raise ValueError(f"alpha={a} exceeds the number of users")
    out = []
    for a in alphas:
        for f in _alpha_sets(config, a):
            out.append(Selection(f, len(out)))
    return CandidateSet(tuple(sorted(alphas)), tuple(out))


def count_candidates(config, alphas):
    """Closed-form candidate count matching :func:`enumerate_candidates`."""
    total = 0
    for a in set(alphas):
        if a == config.n_t and config.n_u > 1:
            total += math.comb(config.n_c, config.n_t // config.n_u)
        else:
            total += math.comb(config.n_users, a)
    return total


def alpha_max(n_t, n_a, n_u=1):
    """Largest number of interference-free users with ``n_a`` active BSs."""
    if n_a < 1:
        raise ValueError("n_a must be >= 1")
    if n_u == 1:
        if n_a == n_t:
            return n_t
        return n_t - 1 if n_a > n_t else n_a
    if n_a * n_u == n_t:
        return n_t
    if n_a * n_u > n_t:
        return n_t - 1
    return n_a * n_u


def rbar_global(n_t, n_c, alpha, n0, n_u=1):
    """Upper bound (bits/s/Hz) on the mean sum-rate of users outside ``F``.

    ``(K - alpha) log2(1 + (n_t - alpha) e^{n0/2} (n0/2)^{K-2} Gamma(2-K, n0/2))``
    with ``K = n_c * n_u``; zero at ``alpha = n_t`` where those BSs are muted.
    """
    k = n_c * n_u
    if not 1 <= alpha <= n_t:
        raise ValueError(f"alpha={alpha} outside [1, {n_t}]")
    if not n0 > 0:
        raise ValueError("n0 must be positive")
    if k < 2 or alpha > k:
        raise ValueError(f"need 2 <= n_c*n_u and alpha <= n_c*n_u, got {k}")
    if alpha == n_t:
        return 0.0
    x = n0 / 2.0
    # e^x x^(k-2) Gamma(2-k, x): combine in log space, the factors over/underflow.
    log_mean_inv = x + (k - 2) * math.log(x) + math.log(upper_incomplete_gamma(2 - k, x))
    return (k - alpha) * math.log2(1.0 + (n_t - alpha) * math.exp(log_mean_inv))


@dataclass
class RateTable:
    """Rates ``r[c][user]`` reported for each candidate's F members."""

    entries: dict = field(default_factory=dict)

    def put(self, candidate_index, user, rate):
        self.entries.setdefault(candidate_index, {})[user] = rate

    def get(self, candidate_index, user):
        return self.entries[candidate_index][user]

    def is_scoreable(self, selection):
        row = self.entries.get(selection.candidate_index, {})
        return all(u in row for u in selection.free_set)

    def local_sum(self, selection):
        row = self.entries[selection.candidate_index]
        return sum(row[u] for u in selection.free_set)

    def n_entries(self):
        return sum(len(r) for r in self.entries.values())

    def to_dict(self):
        return {str(c): {str(u): r for u, r in row.items()} for c, row in self.entries.items()}

    @classmethod
    def from_dict(cls, data):
        return cls({int(c): {int(u): float(r) for u, r in row.items()} for c, row in data.items()})


def local_rates_for_bs(realization, candidates, bs):
    """Rate entries BS ``bs`` computes from its own CSI."""
    mine = candidates.containing_bs(realization.config, bs)
    return local_rate_terms(local_csi(realization, bs), mine)


def collect_rate_table(realization, candidates):
    table = RateTable()
    for bs in range(realization.config.n_c):
        for entry in local_rates_for_bs(realization, candidates, bs):
            table.put(*entry)
    return table


def candidate_scores(candidates, table, config):
    bound = {}
    scores = []
    for sel in candidates:
        if not table.is_scoreable(sel):
            raise ValueError(f"rate table incomplete for candidate {sel.candidate_index}")
        a = sel.alpha
        if a not in bound:
            bound[a] = rbar_global(config.n_t, config.n_c, a, config.n0, config.n_u)
        scores.append(table.local_sum(sel) + bound[a])
    return scores


def choose_selection(candidates, table, config):
    """Candidate maximizing ``R_local + Rbar_global``; ties go to the earliest."""
    scores = candidate_scores(candidates, table, config)
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return candidates[best]


def run_proposed(realization, candidates):
    """Unquantized scheme: score from exact local rates, then design and evaluate."""
    table = collect_rate_table(realization, candidates)
    chosen = choose_selection(candidates, table, realization.config)
    solution = design_beams(realization, chosen)
    return chosen, solution, evaluate(realization, solution, chosen.free_set)
