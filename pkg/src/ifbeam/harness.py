"""Seeded Monte Carlo experiments and figure-ready result files.

Every drop draws its channel from the seed ``(seed, point, drop)``, so
results do not depend on how drops are spread over worker processes.
Set ``IFBEAM_WORKERS`` to use a process pool.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import partial
import io
import json
import math
import os
import subprocess
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import __version__
from .baselines import (WmmseConfig, global_oracle, max_slnr_beams, max_snr_beams,
                        min_gi_beams, random_beams, wmmse_beams, zf_multiuser_beams)
from .beamforming import Selection, design_beams, evaluate, min_wgi_beam
from .channel import DropParams, NetworkConfig, generate_pathloss, generate_rayleigh, local_csi
from .protocol import accounting_table, run_centralized, run_decentralized
from .selection import enumerate_candidates

SPEC_SCHEMA = "ifbeam.experiment/1"
RESULT_SCHEMA = "ifbeam.results/1"
COLUMNS = ("scheme", "sweep_kind", "point", "drops", "rate_mean", "rate_stderr",
           "sum_rate_mean", "alpha_hist", "exchange_bytes", "extra", "error")
# A user counts as nearly interference-free below this fraction of the largest interference.
IFF_FRACTION = 0.01

SchemeName = Literal["proposed", "proposed_quantized", "proposed_random1", "proposed_random2",
                     "max_snr", "min_gi", "max_slnr", "random", "wmmse", "global", "zf"]
_PROPOSED = ("proposed", "proposed_quantized", "proposed_random1", "proposed_random2")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SchemeSpec(_Strict):
    name: SchemeName
    label: Optional[str] = None
    alphas: Optional[List[int]] = None
    n_f: Optional[Union[int, List[int]]] = None
    protocol: Literal["centralized", "decentralized"] = "centralized"
    kappa: int = Field(50, ge=1)
    restarts: int = Field(20, ge=1)
    steps: int = Field(100, ge=0)
    exchange_n_f: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _complete(self):
        if self.name in _PROPOSED and not self.alphas:
            raise ValueError(f"scheme {self.name} needs 'alphas'")
        if self.name == "proposed_quantized" and self.n_f is None:
            raise ValueError("scheme proposed_quantized needs 'n_f'")
        if self.n_f is not None and self.name != "proposed_quantized":
            raise ValueError(f"'n_f' only applies to proposed_quantized, not {self.name}")
        grid = self.n_f if isinstance(self.n_f, list) else [self.n_f]
        if self.n_f is not None and (not grid or any(not 1 <= n <= 12 for n in grid)):
            raise ValueError("n_f values must lie in [1, 12]")
        return self

    def expand(self):
        """One scheme per n_f value of a grid."""
        base = self.label or self.name
        if isinstance(self.n_f, list):
            return [self.model_copy(update={"n_f": n, "label": f"{base}@nf={n}"}) for n in self.n_f]
        return [self.model_copy(update={"label": base})]


class SweepSpec(_Strict):
    kind: Literal["snr_db", "tx_power_dbm"] = "snr_db"
    points: List[float] = Field(min_length=1)


class PathlossSpec(_Strict):
    cell_radius_m: float = 40.0
    pathloss_exponent: float = 3.7
    min_dist_m: float = 3.0
    noise_dbm: float = -80.0


class ExperimentSpec(_Strict):
    """Versioned experiment definition; unknown keys are rejected."""

    schema_: Literal["ifbeam.experiment/1"] = Field(SPEC_SCHEMA, alias="schema")
    name: str = "experiment"
    experiment: Literal["sweep", "fig1", "theorem1"] = "sweep"
    scenario: Literal["rayleigh", "pathloss"] = "rayleigh"
    n_t: int = Field(ge=2)
    n_c: int = Field(ge=1)
    n_u: int = Field(1, ge=1)
    sweep: SweepSpec
    drops: int = Field(2000, ge=1)
    seed: int = Field(0, ge=0)
    schemes: List[SchemeSpec] = []
    pathloss: PathlossSpec = PathlossSpec()
    restarts: int = Field(20, ge=1)
    steps: int = Field(100, ge=0)

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @model_validator(mode="after")
    def _consistent(self):
        if self.experiment == "sweep" and not self.schemes:
            raise ValueError("a sweep needs at least one scheme")
        want = "snr_db" if self.scenario == "rayleigh" else "tx_power_dbm"
        if self.sweep.kind != want:
            raise ValueError(f"scenario {self.scenario} sweeps {want}, not {self.sweep.kind}")
        if self.experiment != "sweep" and self.scenario != "rayleigh":
            raise ValueError(f"{self.experiment} runs on the rayleigh scenario only")
        labels = [s.label for s in self.expanded_schemes()]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate scheme labels: {labels}")
        return self

    def expanded_schemes(self):
        return [e for s in self.schemes for e in s.expand()]

    def point_config(self, point):
        if self.scenario == "rayleigh":
            return NetworkConfig.from_snr_db(self.n_t, self.n_c, point, self.n_u)
        return NetworkConfig(self.n_t, self.n_c, self.n_u, 10.0 ** (self.pathloss.noise_dbm / 10.0))

    def realization(self, point_index, drop):
        point = self.sweep.points[point_index]
        cfg = self.point_config(point)
        seed = (self.seed, point_index, drop)
        if self.scenario == "rayleigh":
            return generate_rayleigh(cfg, seed)
        p = self.pathloss
        params = DropParams(p.cell_radius_m, p.pathloss_exponent, p.min_dist_m, point)
        return generate_pathloss(cfg, params, seed)

    @classmethod
    def from_yaml(cls, text):
        import yaml
        data = yaml.safe_load(text)
        if not isinstance(data, dict):
            raise ValueError("experiment spec must be a mapping")
        return cls.model_validate(data)


@dataclass
class Cell:
    scheme: str
    point: float
    drops: int
    rate_mean: Optional[float] = None
    rate_stderr: Optional[float] = None
    sum_rate_mean: Optional[float] = None
    alpha_hist: dict = field(default_factory=dict)
    exchange_bytes: Optional[float] = None
    extra: dict = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class ResultRecord:
    sweep_kind: str
    cells: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def cell(self, scheme, point):
        for c in self.cells:
            if c.scheme == scheme and c.point == point:
                return c
        raise KeyError((scheme, point))


def build_id():
    """``git describe``-style identifier, falling back to the package version."""
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"ifbeam-{__version__}-{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"ifbeam-{__version__}"


def _metadata(spec_dict, seed, drops, n_c):
    return {"schema": RESULT_SCHEMA, "build": build_id(), "seed": seed, "drops": drops,
            "n_c": n_c, "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "spec": spec_dict}


def workers():
    raw = os.environ.get("IFBEAM_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"IFBEAM_WORKERS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError("IFBEAM_WORKERS must be >= 1")
    return n


def _map(fn, tasks):
    """Ordered map over ``tasks``, in a process pool when workers > 1."""
    n = workers()
    if n == 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * n))))


def _cell_stats(scheme, point, sums, n_c):
    per_cell = np.asarray(sums, dtype=float) / n_c
    n = len(per_cell)
    stderr = float(per_cell.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Cell(scheme, float(point), n, float(per_cell.mean()), stderr, float(np.mean(sums)))


# --- schemes -----------------------------------------------------------------


def _candidates(spec, cfg, scheme):
    cfg.require_core_scheme()
    return enumerate_candidates(cfg, scheme.alphas)


def check_scheme(spec, scheme):
    """Raise ``ValueError`` if ``scheme`` cannot run on this configuration."""
    cfg = spec.point_config(spec.sweep.points[0])
    if scheme.name in _PROPOSED:
        _candidates(spec, cfg, scheme)
    elif scheme.name == "zf" and cfg.n_u > cfg.n_t:
        raise ValueError(f"zf needs n_u <= n_t, got n_u={cfg.n_u}, n_t={cfg.n_t}")


def _exchange_bytes(scheme, cfg):
    if scheme.name in ("wmmse", "global") and scheme.exchange_n_f is not None:
        params = {"n_f": scheme.exchange_n_f, "n_c": cfg.n_c}
        if scheme.name == "wmmse":
            params["kappa"] = scheme.kappa
        return accounting_table(scheme.name, **params).bytes
    if scheme.name in ("max_snr", "min_gi", "max_slnr", "random", "zf"):
        return 0
    return None


def run_scheme(scheme, realization, rng_seed):
    """Sum-rate, chosen alpha (or None) and exchanged bytes (or None) for one drop."""
    cfg = realization.config
    name = scheme.name
    if name in ("proposed", "proposed_quantized"):
        cands = enumerate_candidates(cfg, scheme.alphas)
        run = run_centralized if scheme.protocol == "centralized" else run_decentralized
        n_f = scheme.n_f if name == "proposed_quantized" else None
        out = run(realization, cands, n_f)
        sol = design_beams(realization, out.chosen)
        rate = evaluate(realization, sol, out.chosen.free_set).sum_rate
        return rate, out.chosen.alpha, out.ledger.total_bytes
    if name in ("proposed_random1", "proposed_random2"):
        cands = enumerate_candidates(cfg, scheme.alphas)
        rng = np.random.default_rng(rng_seed)
        if name == "proposed_random1":
            alpha = run_centralized(realization, cands, None).chosen.alpha
        else:
            alpha = int(rng.choice(sorted(set(scheme.alphas))))
        pool = [c for c in cands if c.alpha == alpha]
        chosen = pool[int(rng.integers(len(pool)))]
        sol = design_beams(realization, chosen)
        return evaluate(realization, sol, chosen.free_set).sum_rate, alpha, None
    if name == "random":
        sol = random_beams(realization, rng_seed)
    elif name == "wmmse":
        sol = wmmse_beams(realization, WmmseConfig(max_iterations=scheme.kappa))
    elif name == "global":
        sol = global_oracle(realization, scheme.restarts, scheme.steps, seed=rng_seed)
    else:
        sol = {"max_snr": max_snr_beams, "min_gi": min_gi_beams, "max_slnr": max_slnr_beams,
               "zf": zf_multiuser_beams}[name](realization)
    return evaluate(realization, sol).sum_rate, None, _exchange_bytes(scheme, cfg)


def _sweep_drop(spec, schemes, task):
    point_index, drop = task
    r = spec.realization(point_index, drop)
    out = []
    for k, scheme in enumerate(schemes):
        if scheme is None:
            out.append(None)
            continue
        try:
            out.append(run_scheme(scheme, r, [spec.seed, point_index, drop, 1, k]))
        except Exception as exc:  # reported per scheme, the run continues
            out.append(f"drop {drop}: {type(exc).__name__}: {exc}")
    return out


def run_experiment(spec):
    """Run every scheme on every drop of every sweep point."""
    if spec.experiment == "fig1":
        return fig1_experiment(spec.n_t, spec.n_c, spec.sweep.points, spec.drops, spec.seed,
                               spec.restarts, spec.steps, spec_dict=_dump(spec))
    if spec.experiment == "theorem1":
        return theorem1_experiment(spec.n_t, spec.n_c, spec.sweep.points, spec.drops, spec.seed,
                                   spec_dict=_dump(spec))
    schemes = spec.expanded_schemes()
    errors = {}
    for s in schemes:
        try:
            check_scheme(spec, s)
        except ValueError as exc:
            errors[s.label] = f"infeasible: {exc}"
    runnable = [None if s.label in errors else s for s in schemes]
    tasks = [(p, d) for p in range(len(spec.sweep.points)) for d in range(spec.drops)]
    results = _map(partial(_sweep_drop, spec, runnable), tasks)

    record = ResultRecord(spec.sweep.kind, [], _metadata(_dump(spec), spec.seed, spec.drops, spec.n_c))
    for p, point in enumerate(spec.sweep.points):
        rows = results[p * spec.drops:(p + 1) * spec.drops]
        for k, s in enumerate(schemes):
            if s.label in errors:
                record.cells.append(Cell(s.label, float(point), spec.drops, error=errors[s.label]))
                continue
            col = [row[k] for row in rows]
            failed = [c for c in col if isinstance(c, str)]
            if failed:
                record.cells.append(Cell(s.label, float(point), spec.drops, error=failed[0]))
                continue
            cell = _cell_stats(s.label, point, [c[0] for c in col], spec.n_c)
            alphas = [c[1] for c in col if c[1] is not None]
            if alphas:
                cell.alpha_hist = {int(a): alphas.count(a) for a in sorted(set(alphas))}
            ex = [c[2] for c in col if c[2] is not None]
            if ex:
                cell.exchange_bytes = float(np.mean(ex))
            record.cells.append(cell)
    return record


def _dump(spec):
    return spec.model_dump(mode="json", by_alias=True)


# --- dedicated experiments -----------------------------------------------------


def interference_free_count(interference):
    """Users whose interference is below 1/100 of the largest; all if none interfere."""
    interference = np.asarray(interference)
    top = interference.max()
    if top <= 0.0:
        return len(interference)
    return int(np.sum(interference < IFF_FRACTION * top))


def _fig1_drop(n_t, n_c, points, seed, restarts, steps, task):
    p, d = task
    cfg = NetworkConfig.from_snr_db(n_t, n_c, points[p])
    r = generate_rayleigh(cfg, (seed, p, d))
    rep = evaluate(r, global_oracle(r, restarts, steps, seed=[seed, p, d, 3]))
    return rep.sum_rate, interference_free_count(rep.interference)


def fig1_experiment(n_t, n_c, snrs_db, drops, seed=0, restarts=20, steps=100, spec_dict=None):
    """Optimized rate and almost-interference-free user count versus SNR."""
    tasks = [(p, d) for p in range(len(snrs_db)) for d in range(drops)]
    res = _map(partial(_fig1_drop, n_t, n_c, list(snrs_db), seed, restarts, steps), tasks)
    spec_dict = spec_dict or {"experiment": "fig1", "n_t": n_t, "n_c": n_c, "points": list(snrs_db),
                              "restarts": restarts, "steps": steps}
    record = ResultRecord("snr_db", [], _metadata(spec_dict, seed, drops, n_c))
    for p, snr in enumerate(snrs_db):
        rows = res[p * drops:(p + 1) * drops]
        cell = _cell_stats("global", snr, [r[0] for r in rows], n_c)
        counts = np.array([r[1] for r in rows], dtype=float)
        cell.extra = {"iff_count_mean": float(counts.mean()),
                      "iff_count_stderr": float(counts.std(ddof=1) / math.sqrt(drops)) if drops > 1 else 0.0}
        record.cells.append(cell)
    return record


def theorem1_rates(realization, free_set, extra_user):
    """Sum-rates of the two designs compared for ``alpha = n_t - 1``.

    Case 1 is the regular design. In case 2 the BSs of ``free_set`` use
    min-WGI beams that also null ``extra_user``.
    """
    cfg = realization.config
    sel = Selection(free_set)
    if sel.alpha != cfg.n_t - 1 or extra_user in sel or cfg.n_u != 1:
        raise ValueError("case comparison needs alpha = n_t - 1, one user per cell and l outside F")
    case1 = design_beams(realization, sel)
    beams = np.array(case1.beams)
    regimes = list(case1.regimes)
    for m in sel.free_set:
        targets = [u for u in sel.free_set if u != m] + [extra_user]
        beams[m] = min_wgi_beam(local_csi(realization, m), m, targets)
        regimes[m] = "min-WGI"
    case2 = type(case1)(beams, tuple(regimes))
    return (evaluate(realization, case1, sel.free_set).sum_rate,
            evaluate(realization, case2, sel.free_set).sum_rate)


def _theorem1_drop(n_t, n_c, points, seed, task):
    p, d = task
    cfg = NetworkConfig.from_snr_db(n_t, n_c, points[p])
    r = generate_rayleigh(cfg, (seed, p, d))
    rng = np.random.default_rng([seed, p, d, 4])
    free = sorted(rng.choice(n_c, size=n_t - 1, replace=False).tolist())
    rest = [u for u in range(n_c) if u not in free]
    return theorem1_rates(r, free, int(rng.choice(rest)))


def theorem1_experiment(n_t, n_c, snrs_db, drops, seed=0, spec_dict=None):
    """Case 1 versus case 2 sum-rates with random F and random extra user."""
    if n_c < n_t:
        raise ValueError("needs n_c >= n_t so that a user outside F exists")
    tasks = [(p, d) for p in range(len(snrs_db)) for d in range(drops)]
    res = _map(partial(_theorem1_drop, n_t, n_c, list(snrs_db), seed), tasks)
    spec_dict = spec_dict or {"experiment": "theorem1", "n_t": n_t, "n_c": n_c, "points": list(snrs_db)}
    record = ResultRecord("snr_db", [], _metadata(spec_dict, seed, drops, n_c))
    for p, snr in enumerate(snrs_db):
        rows = np.array(res[p * drops:(p + 1) * drops])
        diff = rows[:, 0] - rows[:, 1]
        record.cells.append(_cell_stats("case1", snr, rows[:, 0], n_c))
        record.cells.append(_cell_stats("case2", snr, rows[:, 1], n_c))
        cell = _cell_stats("case1_minus_case2", snr, diff, n_c)
        se = float(diff.std(ddof=1) / math.sqrt(drops)) if drops > 1 else 0.0
        cell.extra = {"diff_mean": float(diff.mean()), "diff_stderr": se,
                      "diff_lower95": float(diff.mean() - 1.6448536269514722 * se)}
        record.cells.append(cell)
    return record


# --- result files --------------------------------------------------------------


def _fmt(v):
    return "" if v is None else repr(float(v))


def _num(s):
    return None if s == "" else float(s)


def _cell_json(c):
    d = asdict(c)
    d["alpha_hist"] = {str(k): v for k, v in c.alpha_hist.items()}
    return d


def _cell_from(d):
    d = dict(d)
    d["alpha_hist"] = {int(k): int(v) for k, v in (d.get("alpha_hist") or {}).items()}
    return Cell(**d)


def emit_results(record, path, fmt="csv"):
    """Write ``record``; csv carries the metadata on leading ``#`` lines."""
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("# " + json.dumps({"sweep_kind": record.sweep_kind, "metadata": record.metadata},
                                    sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for c in record.cells:
            w.writerow([c.scheme, record.sweep_kind, _fmt(c.point), c.drops, _fmt(c.rate_mean),
                        _fmt(c.rate_stderr), _fmt(c.sum_rate_mean),
                        json.dumps({str(k): v for k, v in c.alpha_hist.items()}),
                        _fmt(c.exchange_bytes), json.dumps(c.extra, sort_keys=True), c.error or ""])
        text = buf.getvalue()
    elif fmt in ("jsonl", "json-lines"):
        lines = [json.dumps({"sweep_kind": record.sweep_kind, "metadata": record.metadata}, sort_keys=True)]
        lines += [json.dumps(_cell_json(c), sort_keys=True) for c in record.cells]
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def read_results(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if not text.strip():
        raise ValueError(f"{path} is empty")
    first, _, rest = text.partition("\n")
    if first.startswith("#"):
        head = json.loads(first[1:])
        rows = list(csv.DictReader(io.StringIO(rest)))
        if rows and set(rows[0]) != set(COLUMNS):
            raise ValueError(f"unexpected columns {sorted(rows[0])}")
        cells = []
        for r in rows:
            cells.append(Cell(r["scheme"], float(r["point"]), int(r["drops"]), _num(r["rate_mean"]),
                              _num(r["rate_stderr"]), _num(r["sum_rate_mean"]),
                              {int(k): int(v) for k, v in json.loads(r["alpha_hist"]).items()},
                              _num(r["exchange_bytes"]), json.loads(r["extra"]), r["error"] or None))
    else:
        head = json.loads(first)
        cells = [_cell_from(json.loads(line)) for line in rest.splitlines() if line.strip()]
    return ResultRecord(head["sweep_kind"], cells, head["metadata"])


def validate_record(record, tol=1e-9):
    """List of consistency problems (empty if the record is sound)."""
    problems = []
    meta = record.metadata
    if meta.get("schema") != RESULT_SCHEMA:
        problems.append(f"unknown result schema {meta.get('schema')!r}")
    n_c = meta.get("n_c")
    seen = set()
    for c in record.cells:
        key = (c.scheme, c.point)
        if key in seen:
            problems.append(f"duplicate cell {key}")
        seen.add(key)
        if c.error:
            continue
        if c.rate_mean is None or c.sum_rate_mean is None:
            problems.append(f"{key}: missing rates")
            continue
        if n_c and abs(c.rate_mean * n_c - c.sum_rate_mean) > tol * max(1.0, abs(c.sum_rate_mean)):
            problems.append(f"{key}: per-cell rate is not sum-rate / n_c")
        if c.alpha_hist and sum(c.alpha_hist.values()) != c.drops:
            problems.append(f"{key}: alpha histogram does not sum to the drop count")
        if c.rate_stderr is not None and c.rate_stderr < 0:
            problems.append(f"{key}: negative standard error")
    points = {c.point for c in record.cells}
    schemes = {c.scheme for c in record.cells}
    if len(record.cells) != len(points) * len(schemes):
        problems.append("cells do not form a full schemes x points grid")
    return problems
