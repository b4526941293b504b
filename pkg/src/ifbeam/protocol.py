"""Rate-exchange protocols between BS agents, with exact bit ledgers.

Each drop runs as a sequential message loop: agents only learn about each
other through :class:`Message` objects delivered to their inbox.
"""

from collections import deque
from dataclasses import dataclass, field
import json
import math

from .quantization import cached_codebook, dequantize, exchange_bits_per_bs, quantize
from .selection import (CandidateSet, RateTable, choose_selection, count_candidates,
                        enumerate_candidates, local_rates_for_bs)

RATES = "quantized-rates"
INDEX = "selection-index"
# Payload size of one rate when the exchange is not quantized (float64).
UNQUANTIZED_BITS = 64


class MissingCodebookError(LookupError):
    pass


@dataclass(frozen=True)
class Message:
    sender: int
    receiver: int
    kind: str
    bits: int
    payload: tuple = ()

    def __post_init__(self):
        if self.bits <= 0:
            raise ValueError("every message carries at least one bit")
        if self.kind not in (RATES, INDEX):
            raise ValueError(f"unknown payload kind {self.kind!r}")


@dataclass
class BitLedger:
    messages: list = field(default_factory=list)

    def record(self, message):
        self.messages.append(message)

    @property
    def total_bits(self):
        return sum(m.bits for m in self.messages)

    @property
    def total_bytes(self):
        return math.ceil(self.total_bits / 8)

    def bits_by_kind(self, kind):
        return sum(m.bits for m in self.messages if m.kind == kind)

    def to_jsonl(self):
        """One JSON object per message, in send order."""
        lines = []
        for seq, m in enumerate(self.messages):
            lines.append(json.dumps({
                "seq": seq, "from": m.sender, "to": m.receiver, "kind": m.kind,
                "bits": m.bits, "payload": list(m.payload)}))
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class ProtocolOutcome:
    chosen: object
    ledger: BitLedger
    tables: dict          # decider BS -> RateTable it scored
    choices: dict         # decider BS -> Selection it picked


def index_bits(config):
    """Bits to name one selection among all ``alpha = 1..n_t`` candidates."""
    total = count_candidates(config, _feasible_alphas(config))
    return max(1, math.ceil(math.log2(total)))


def _feasible_alphas(config):
    alphas = list(range(1, config.n_t + 1))
    if config.n_u > 1 and config.n_t % config.n_u:
        alphas.pop()
    return alphas


class BsAgent:
    """One BS: its local CSI, the shared candidate list and its inbox."""

    def __init__(self, realization, bs, candidates, n_f, codebooks=None):
        self.bs = bs
        self.config = realization.config
        self.candidates = candidates
        self.n_f = n_f
        self.codebooks = codebooks
        self.inbox = deque()
        self._local = local_rates_for_bs(realization, candidates, bs)
        self.chosen = None

    def _codebook(self, alpha):
        if self.codebooks is not None:
            try:
                return self.codebooks[alpha]
            except KeyError:
                raise MissingCodebookError(
                    f"no codebook for alpha={alpha} at BS {self.bs}") from None
        cfg = self.config
        return cached_codebook(cfg.n_t, alpha, cfg.n0, self.n_f)

    def rate_payload(self):
        """``(candidate, user, value)`` triples: cell indices, or raw rates."""
        if self.n_f is None:
            return tuple((c, u, r) for c, u, r in self._local)
        out = []
        for c, u, r in self._local:
            alpha = self.candidates[c].alpha
            out.append((c, u, quantize(r, self._codebook(alpha))))
        return tuple(out)

    def payload_bits(self):
        per = UNQUANTIZED_BITS if self.n_f is None else self.n_f
        return exchange_bits_per_bs(len(self._local), per)

    def decode(self, payload, table):
        for c, u, v in payload:
            if self.n_f is not None:
                v = dequantize(v, self._codebook(self.candidates[c].alpha))
            table.put(c, u, v)

    def decide(self, payloads):
        table = RateTable()
        self.decode(self.rate_payload(), table)
        for payload in payloads:
            self.decode(payload, table)
        self.chosen = choose_selection(self.candidates, table, self.config)
        return table


def _prepare(realization, alphas, n_f, codebooks):
    cfg = realization.config
    cfg.require_core_scheme()
    if n_f is not None and not 1 <= n_f <= 12:
        raise ValueError(f"n_f must be in [1, 12] or None, got {n_f}")
    cands = alphas if isinstance(alphas, CandidateSet) else enumerate_candidates(cfg, alphas)
    return [BsAgent(realization, bs, cands, n_f, codebooks) for bs in range(cfg.n_c)]


def run_centralized(realization, alphas, n_f, codebooks=None, decider=0):
    """Every other BS sends its rates to ``decider``, which returns the index.

    ``n_f=None`` exchanges unquantized rates (64-bit floats).
    """
    agents = _prepare(realization, alphas, n_f, codebooks)
    ledger = BitLedger()
    queue = deque()
    for a in agents:
        if a.bs != decider:
            queue.append(Message(a.bs, decider, RATES, a.payload_bits(), a.rate_payload()))
    while queue:
        msg = queue.popleft()
        ledger.record(msg)
        agents[msg.receiver].inbox.append(msg)

    head = agents[decider]
    table = head.decide([m.payload for m in head.inbox])
    head.inbox.clear()
    bits = index_bits(realization.config)
    for a in agents:
        if a.bs != decider:
            msg = Message(decider, a.bs, INDEX, bits, (head.chosen.candidate_index,))
            ledger.record(msg)
            a.inbox.append(msg)
    for a in agents:
        if a.bs != decider:
            (idx,) = a.inbox.popleft().payload
            a.chosen = a.candidates[idx]
    return ProtocolOutcome(head.chosen, ledger, {decider: table}, {a.bs: a.chosen for a in agents})


def run_decentralized(realization, alphas, n_f, codebooks=None):
    """Every BS broadcasts its rates to all peers and decides on its own."""
    agents = _prepare(realization, alphas, n_f, codebooks)
    ledger = BitLedger()
    for a in agents:
        payload = a.rate_payload()
        bits = a.payload_bits()
        for b in agents:
            if b.bs != a.bs:
                msg = Message(a.bs, b.bs, RATES, bits, payload)
                ledger.record(msg)
                b.inbox.append(msg)
    tables = {}
    for a in agents:
        tables[a.bs] = a.decide([m.payload for m in a.inbox])
        a.inbox.clear()
    choices = {a.bs: a.chosen for a in agents}
    first = agents[0].chosen
    if any(c.free_set != first.free_set for c in choices.values()):
        raise RuntimeError("BSs disagree on the selection despite identical tables")
    return ProtocolOutcome(first, ledger, tables, choices)


def s_central(n_c, n_t, n_f_total):
    """Closed-form centralized exchange size in bits (single user per cell)."""
    return (n_c - 1) * n_f_total + (n_c - 1) * _single_user_index_bits(n_c, n_t)


def s_decentral(n_c, n_f_total):
    return (n_c - 1) * n_f_total + (n_c - 1) * (n_c - 1) * n_f_total


def _single_user_index_bits(n_c, n_t):
    return math.ceil(math.log2(sum(math.comb(n_c, a) for a in range(1, n_t + 1))))


@dataclass(frozen=True)
class Accounting:
    scheme: str
    bits: int

    @property
    def bytes(self):
        return math.ceil(self.bits / 8)


def accounting_table(scheme, **params):
    """Exchange size of one scheme.

    ``proposed``: ``n_t, n_c, n_f_total``; ``wmmse``: ``kappa, n_f, n_c``;
    ``global``: ``n_f, n_c``.
    """
    for k, v in params.items():
        if int(v) != v or v < 1:
            raise ValueError(f"{k} must be a positive integer, got {v}")
    p = {k: int(v) for k, v in params.items()}
    try:
        if scheme == "proposed":
            n_c = p["n_c"]
            bits = (n_c - 1) * (p["n_f_total"] + _single_user_index_bits(n_c, p["n_t"]))
        elif scheme == "wmmse":
            bits = 3 * p["kappa"] * p["n_f"] * p["n_c"] ** 2
        elif scheme == "global":
            bits = p["n_f"] * p["n_c"] ** 2 * (p["n_c"] - 1)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    except KeyError as exc:
        raise ValueError(f"missing parameter {exc.args[0]!r} for scheme {scheme!r}") from None
    return Accounting(scheme, bits)
