"""Quick invariant checks bundled with the package (``ifbeam selftest``)."""

import math

import numpy as np
from scipy import integrate

from .beamforming import design_beams
from .channel import NetworkConfig, generate_rayleigh
from .numerics import upper_incomplete_gamma
from .protocol import accounting_table, run_centralized, run_decentralized
from .quantization import RatePdfParams, rate_pdf, train_lloyd_max
from .selection import enumerate_candidates, run_proposed


def _zero_interference():
    worst = 0.0
    for alpha in (2, 3, 4):
        cfg = NetworkConfig(4, 7, n0=1.0)
        for seed in range(20):
            r = generate_rayleigh(cfg, seed)
            sel = enumerate_candidates(cfg, [alpha])[seed % 5]
            sol = design_beams(r, sel)
            g = np.abs(np.einsum("iun,in->iu", r.h.conj(), sol.beams)) ** 2
            for u in sel.free_set:
                worst = max(worst, np.delete(g[:, u], u).sum() / g[u, u])
    return worst <= 1e-12, f"max relative interference {worst:.2e}"


def _accounting():
    got = (accounting_table("proposed", n_t=4, n_c=7, n_f_total=35).bits,
           accounting_table("wmmse", kappa=2, n_f=2, n_c=7).bits,
           accounting_table("global", n_f=2, n_c=7).bits)
    return got == (252, 588, 588), f"bits {got}"


def _gamma_recurrence():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        s, x = rng.uniform(-10, 5), rng.uniform(1e-3, 20)
        lhs = upper_incomplete_gamma(s + 1, x)
        res = abs(lhs - s * upper_incomplete_gamma(s, x) - x ** s * math.exp(-x))
        worst = max(worst, res / abs(lhs))
    return worst <= 1e-10, f"max relative residual {worst:.2e}"


def _pdf_and_codebook():
    p = RatePdfParams(4, 3, 1.0)
    mass, _ = integrate.quad(lambda t: rate_pdf(t, p), 0, p.t_max, limit=200)
    cb = train_lloyd_max(p, 4)
    worst = 0.0
    for k, (a, b) in enumerate(zip(cb.edges[:-1], cb.edges[1:])):
        m0, _ = integrate.quad(lambda t: rate_pdf(t, p), a, b)
        m1, _ = integrate.quad(lambda t: t * rate_pdf(t, p), a, b)
        worst = max(worst, abs(m1 / m0 - cb.levels[k]))
    ok = abs(mass - 1) <= 1e-6 and worst <= 1e-6
    return ok, f"pdf mass {mass:.8f}, centroid error {worst:.1e}"


def _protocol_agreement():
    cfg = NetworkConfig(2, 3, n0=0.1)
    same = 0
    for seed in range(10):
        r = generate_rayleigh(cfg, seed)
        cands = enumerate_candidates(cfg, [1, 2])
        a = run_centralized(r, cands, None).chosen
        b = run_decentralized(r, cands, None).chosen
        same += a == b == run_proposed(r, cands)[0]
    return same == 10, f"{same}/10 drops agree"


CHECKS = {
    "zero-interference": _zero_interference,
    "exchange-accounting": _accounting,
    "gamma-recurrence": _gamma_recurrence,
    "rate-pdf-and-codebook": _pdf_and_codebook,
    "protocol-agreement": _protocol_agreement,
}


def run_checks():
    out = []
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append({"name": name, "ok": bool(ok), "detail": detail})
    return out
