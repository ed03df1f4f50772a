"""Replicated simulation study comparing working priors on extreme effects.

Each replication draws theta from a true prior, adds N(0, 1) noise, sorts
coordinates by q-value and runs every requested method on the shared
dataset. Per-method errors on the three most extreme effects at each end
are appended to ``records.ndjson`` one replication at a time, so an
interrupted run picks up where it stopped.

Output directory layout::

    meta.json        configuration the records were produced with
    records.ndjson   one JSON object per (prior, replication), deterministic
    timings.ndjson   wall-clock seconds per method (not deterministic)
    mse_table.csv    i, prior, method, mse, nErrors
    boxplot.csv      rep, side, prior, method, error
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
import traceback
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import distributions as dist
from .dp_mixture import DpConfig, dp_fit
from .hier_gibbs import GibbsConfig, robustified_gibbs, standard_gibbs
from .chain import posterior_means
from .permutation_mh import MhConfig
from .quantile_map import ParallelDataset, reorder_by_q

__all__ = [
    "PRIORS",
    "METHODS",
    "METHOD_LABELS",
    "TruePriorSpec",
    "SimulationConfig",
    "ConfigValueError",
    "PRESETS",
    "generate_dataset",
    "replication_seed",
    "run_method",
    "run_replication",
    "run_experiment",
    "read_records",
    "mse_table",
    "format_mse_table",
    "write_mse_csv",
    "boxplot_export",
    "boxplot_summary",
]

log = logging.getLogger(__name__)

PRIORS = ("normal", "t", "hybrid")
METHODS = ("laplace", "rlaplace", "normal", "rnormal", "mixture", "rmixture", "dp")
# "mle" (theta_hat = y) is a harness self-check, not a shrinkage method
BASELINES = ("mle",)
METHOD_LABELS = {
    "laplace": "Laplace",
    "rlaplace": "R Laplace",
    "normal": "Normal",
    "rnormal": "R Normal",
    "mixture": "Mixture",
    "rmixture": "R Mixture",
    "dp": "DP",
    "mle": "MLE",
}
_METHOD_IDS = {m: i for i, m in enumerate(METHODS + BASELINES)}

RECORDS = "records.ndjson"
TIMINGS = "timings.ndjson"
META = "meta.json"


@dataclass(frozen=True)
class TruePriorSpec:
    """Generating distribution of the effects.

    ``normal`` is N(0, 2^2); ``t`` is a t with 5 degrees of freedom scaled
    to sd 2; ``hybrid`` mixes the normal truncated to [-4, 4] (weight 0.9)
    with the scaled t truncated to |x| > 4 (weight 0.1).
    """

    variant: str

    def __post_init__(self):
        if self.variant not in PRIORS:
            raise ValueError(f"true prior must be one of {PRIORS}, got {self.variant!r}")

    @property
    def dist(self) -> dist.DistSpec:
        normal = dist.Normal(0.0, 2.0)
        t = dist.ScaledT(5.0, 2.0)
        if self.variant == "normal":
            return normal
        if self.variant == "t":
            return t
        return dist.TruncatedHybrid(normal, t, cut=4.0, weight_inner=0.9)


def _as_seed(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def replication_seed(base_seed: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(base_seed), spawn_key=(int(rep),))


def method_seed(rep_seed: np.random.SeedSequence, method: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(rep_seed.entropy, spawn_key=tuple(rep_seed.spawn_key) + (_METHOD_IDS[method],))


def generate_dataset(spec, p: int, seed) -> ParallelDataset:
    """Draw theta from ``spec``, add N(0, 1) noise, sort by q-value."""
    spec = spec if isinstance(spec, TruePriorSpec) else TruePriorSpec(spec)
    if p < 1:
        raise ValueError("p must be positive")
    rng = np.random.default_rng(_as_seed(seed))
    theta = np.asarray(dist.sample(spec.dist, rng, p), dtype=float)
    y = theta + rng.standard_normal(p)
    return reorder_by_q(ParallelDataset(y, true_theta=theta))


CONFIG_ALIASES = {"nReps": "n_reps", "truePrior": "true_prior", "baseSeed": "base_seed", "iMax": "i_max"}


class ConfigValueError(ValueError):
    """Invalid configuration value; ``field`` names the offending setting."""

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


@dataclass
class SimulationConfig:
    """Settings for :func:`run_experiment`.

    ``chains`` maps a method name to overrides of ``n_scans``, ``burn_in``
    and ``inner_mh_sweeps`` for that method only.
    """

    p: int = 1000
    n_reps: int = 20
    true_prior: tuple = PRIORS
    methods: tuple = METHODS
    base_seed: int = 20240101
    n_scans: int = 4000
    burn_in: int = 1000
    inner_mh_sweeps: int = 1
    dp_alpha: float = 1.0
    i_max: int = 3
    workers: int = 1
    chains: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.true_prior, str):
            self.true_prior = (self.true_prior,)
        if isinstance(self.methods, str):
            self.methods = (self.methods,)
        self.true_prior = tuple(self.true_prior)
        self.methods = tuple(self.methods)
        for name in ("p", "n_reps", "base_seed", "n_scans", "burn_in", "inner_mh_sweeps", "i_max", "workers"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigValueError(name, f"{name} must be an integer, got {v!r}")
        if not self.true_prior:
            raise ConfigValueError("true_prior", "true_prior must name at least one prior")
        for v in self.true_prior:
            if v not in PRIORS:
                raise ConfigValueError("true_prior", f"true prior must be one of {PRIORS}, got {v!r}")
        if not self.methods:
            raise ConfigValueError("methods", "methods must be nonempty")
        for m in self.methods:
            if m not in _METHOD_IDS:
                raise ConfigValueError("methods", f"unknown method {m!r}; choose from {METHODS + BASELINES}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigValueError("methods", "methods must not repeat")
        if self.p < 6:
            raise ConfigValueError("p", f"p must be at least 6, got {self.p}")
        if not 1 <= self.i_max <= self.p // 2:
            raise ConfigValueError("i_max", "need 1 <= i_max <= p / 2")
        if self.n_reps < 1:
            raise ConfigValueError("n_reps", "n_reps must be positive")
        if self.workers < 1:
            raise ConfigValueError("workers", "workers must be positive")
        if not 0 <= self.base_seed < 2 ** 64:
            raise ConfigValueError("base_seed", "base_seed must be a 64-bit unsigned integer")
        if self.n_scans < 1 or not 0 <= self.burn_in < self.n_scans:
            raise ConfigValueError("burn_in", "need n_scans >= 1 and 0 <= burn_in < n_scans")
        if self.inner_mh_sweeps < 1:
            raise ConfigValueError("inner_mh_sweeps", "inner_mh_sweeps must be positive")
        if not self.dp_alpha >= 0:
            raise ConfigValueError("dp_alpha", "dp_alpha must be non-negative")
        if not isinstance(self.chains, dict):
            raise ConfigValueError("chains", "chains must map method names to settings")
        for m, over in self.chains.items():
            if m not in _METHOD_IDS:
                raise ConfigValueError("chains", f"chain settings given for unknown method {m!r}")
            bad = set(over) - {"n_scans", "burn_in", "inner_mh_sweeps"}
            if bad:
                raise ConfigValueError("chains", f"unknown chain settings for {m}: {sorted(bad)}")
            s = self.chain_settings(m)
            if s["n_scans"] < 1 or not 0 <= s["burn_in"] < s["n_scans"] or s["inner_mh_sweeps"] < 1:
                raise ConfigValueError("chains", f"{m}: need n_scans >= 1, 0 <= burn_in < n_scans, inner_mh_sweeps >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        names = {f.name for f in fields(cls)}
        kw = {}
        for key, value in d.items():
            name = CONFIG_ALIASES.get(key, key)
            if name not in names:
                raise ConfigValueError(key, f"unknown config key {key!r}")
            kw[name] = value
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["true_prior"] = list(self.true_prior)
        d["methods"] = list(self.methods)
        d.pop("workers")  # results do not depend on it
        return d

    def chain_settings(self, method: str) -> dict:
        s = {"n_scans": self.n_scans, "burn_in": self.burn_in, "inner_mh_sweeps": self.inner_mh_sweeps}
        s.update(self.chains.get(method, {}))
        return s


PRESETS = {
    # desk scale: the default acceptance run
    "desk": dict(p=1000, n_reps=20),
    "full": dict(p=1000, n_reps=100),
    # multi-hour on one core
    "large": dict(p=2000, n_reps=100),
}


def run_method(method: str, ds: ParallelDataset, cfg: SimulationConfig, seed) -> dict:
    """Fit one method and return its extreme-effect errors and diagnostics."""
    s = cfg.chain_settings(method)
    seed = _as_seed(seed)
    diag = {}
    if method == "mle":
        est = ds.y.copy()
    elif method == "dp":
        out = dp_fit(ds, DpConfig(n_scans=s["n_scans"], burn_in=s["burn_in"], alpha=cfg.dp_alpha, seed=seed))
        est = posterior_means(out)
        diag["mean_clusters"] = float(np.mean(out.traces["n_clusters"][s["burn_in"]:]))
    else:
        robust = method.startswith("r")
        family = method[1:] if robust else method
        gcfg = GibbsConfig(
            n_scans=s["n_scans"],
            burn_in=s["burn_in"],
            inner_mh_sweeps=s["inner_mh_sweeps"],
            mh=MhConfig(n_steps=1, initial_k=2),
            seed=seed,
        )
        out = (robustified_gibbs if robust else standard_gibbs)(ds, family, gcfg)
        est = posterior_means(out)
        if robust:
            diag["acceptance"] = float(out.acceptance_rate)
            diag["final_k"] = int(out.final_k)
    if not np.all(np.isfinite(est)):
        raise FloatingPointError("non-finite posterior mean")
    i = cfg.i_max
    th = ds.true_theta
    low = est[:i] - th[:i]
    high = th[::-1][:i] - est[::-1][:i]
    return {"status": "ok", "low": [float(x) for x in low], "high": [float(x) for x in high], **diag}


def run_replication(cfg: SimulationConfig, prior: str, rep: int):
    """All methods on one dataset. Returns (record, timings)."""
    rseed = replication_seed(cfg.base_seed, rep)
    ds = generate_dataset(prior, cfg.p, rseed)
    results = {}
    timings = {}
    for m in cfg.methods:
        t0 = time.perf_counter()
        try:
            results[m] = run_method(m, ds, cfg, method_seed(rseed, m))
        except Exception as exc:  # one broken method must not sink the experiment
            log.warning("%s failed on prior=%s rep=%d: %s", m, prior, rep, exc)
            results[m] = {"status": "failed", "reason": f"{type(exc).__name__}: {exc}"}
            log.debug("%s", traceback.format_exc())
        timings[m] = time.perf_counter() - t0
    record = {
        "prior": prior,
        "rep": rep,
        "seed": [int(cfg.base_seed), rep],
        "p": cfg.p,
        "methods": results,
    }
    return record, timings


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def _load_complete_lines(path: Path) -> list[dict]:
    """Parse records, truncating the file after the last complete line."""
    if not path.exists():
        return []
    raw = path.read_bytes()
    end = raw.rfind(b"\n") + 1
    if end < len(raw):
        log.warning("dropping partial trailing record in %s", path)
        with open(path, "r+b") as f:
            f.truncate(end)
    return [json.loads(line) for line in raw[:end].decode().splitlines() if line.strip()]


def _work(args):
    cfg, prior, rep = args
    return run_replication(cfg, prior, rep)


def run_experiment(cfg: SimulationConfig, out_dir, progress: bool = False) -> list[dict]:
    """Run (or resume) every (prior, replication) pair, persisting as it goes.

    Completed replications already in ``out_dir`` are kept byte for byte.
    Resuming with a different configuration raises ``ValueError``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta_path = out / META
    meta = {"config": cfg.to_dict(), "format": 1}
    if meta_path.exists():
        old = json.loads(meta_path.read_text())
        if old.get("config") != meta["config"]:
            raise ValueError(f"{out} holds records from a different configuration; use a fresh directory")
    else:
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    rec_path = out / RECORDS
    records = _load_complete_lines(rec_path)
    _load_complete_lines(out / TIMINGS)
    done = {(r["prior"], r["rep"]) for r in records}
    todo = [(cfg, prior, rep) for prior in cfg.true_prior for rep in range(cfg.n_reps) if (prior, rep) not in done]

    if cfg.workers > 1 and len(todo) > 1:
        import multiprocessing as mp
        pool = mp.get_context("spawn").Pool(cfg.workers)
        results = pool.imap(_work, todo)
    else:
        pool = None
        results = map(_work, todo)
    try:
        with open(rec_path, "a") as rf, open(out / TIMINGS, "a") as tf:
            for (_, prior, rep), (record, timings) in zip(todo, results):
                rf.write(_dumps(record) + "\n")
                rf.flush()
                os.fsync(rf.fileno())
                tf.write(_dumps({"prior": prior, "rep": rep, "seconds": timings}) + "\n")
                tf.flush()
                records.append(record)
                if progress:
                    secs = ", ".join(f"{m} {t:.1f}s" for m, t in timings.items())
                    print(f"[{prior} rep {rep}] {secs}", flush=True)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return records


def read_records(path) -> list[dict]:
    """Records from a results directory or a records file."""
    path = Path(path)
    if path.is_dir():
        path = path / RECORDS
    if not path.exists():
        return []
    lines = path.read_text().splitlines()
    out = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError:
            if n == len(lines):
                break  # interrupted write
            raise ValueError(f"{path}:{n}: malformed record")
    return out


def _ok(rec, method):
    r = rec["methods"].get(method)
    return r is not None and r.get("status") == "ok"


def mse_table(records: Sequence[dict], i_max: int = 3) -> list[dict]:
    """Pooled squared error of the i-th most extreme effect at both ends.

    One row per (i, prior, method). ``mse`` is None (absent) when any
    record for that prior lacks a successful result for the method.
    """
    if not records:
        raise ValueError("no records")
    priors = [p for p in PRIORS if any(r["prior"] == p for r in records)]
    methods = []
    for r in records:
        for m in r["methods"]:
            if m not in methods:
                methods.append(m)
    methods.sort(key=lambda m: _METHOD_IDS.get(m, len(_METHOD_IDS)))
    rows = []
    for i in range(1, i_max + 1):
        for prior in priors:
            recs = [r for r in records if r["prior"] == prior]
            for m in methods:
                errs = []
                for r in recs:
                    if _ok(r, m):
                        res = r["methods"][m]
                        if len(res["low"]) >= i:
                            errs += [res["low"][i - 1], res["high"][i - 1]]
                complete = len(errs) == 2 * len(recs)
                mse = float(np.mean(np.square(errs))) if complete and errs else None
                rows.append({"i": i, "prior": prior, "method": m, "mse": mse, "nErrors": len(errs)})
    return rows


def write_mse_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["i", "prior", "method", "mse", "nErrors"])
        for r in rows:
            w.writerow([r["i"], r["prior"], r["method"], "" if r["mse"] is None else f"{r['mse']:.6f}", r["nErrors"]])


def format_mse_table(rows: Sequence[dict]) -> str:
    """Grid with one line per (i, prior) and one column per method."""
    methods = []
    for r in rows:
        if r["method"] not in methods:
            methods.append(r["method"])
    labels = [METHOD_LABELS.get(m, m) for m in methods]
    width = max(9, *(len(s) + 1 for s in labels))
    head = f"{'i':>2} {'prior':<7}" + "".join(f"{s:>{width}}" for s in labels)
    lines = [head, "-" * len(head)]
    cells = {(r["i"], r["prior"], r["method"]): r["mse"] for r in rows}
    keys = []
    for r in rows:
        if (r["i"], r["prior"]) not in keys:
            keys.append((r["i"], r["prior"]))
    for i, prior in keys:
        vals = [cells.get((i, prior, m)) for m in methods]
        lines.append(f"{i:>2} {prior:<7}" + "".join(f"{'-' if v is None else f'{v:.2f}':>{width}}" for v in vals))
    return "\n".join(lines)


def boxplot_export(records: Sequence[dict]) -> list[dict]:
    """Signed errors of the most extreme effect at each end, one row per side."""
    rows = []
    for r in records:
        for m, res in r["methods"].items():
            if res.get("status") != "ok":
                continue
            rows.append({"rep": r["rep"], "side": "low", "prior": r["prior"], "method": m, "error": res["low"][0]})
            rows.append({"rep": r["rep"], "side": "high", "prior": r["prior"], "method": m, "error": res["high"][0]})
    return rows


def boxplot_summary(rows: Sequence[dict]) -> list[dict]:
    """Five-number summary (linear-interpolation quartiles) per (prior, method)."""
    groups = {}
    for r in rows:
        groups.setdefault((r["prior"], r["method"]), []).append(r["error"])
    out = []
    for (prior, m), e in groups.items():
        q = np.percentile(np.asarray(e), [0, 25, 50, 75, 100])
        out.append({"prior": prior, "method": m, "n": len(e), "min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4]})
    return out


def write_boxplot_csv(rows: Sequence[dict], path, summary_path=None) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, ["rep", "side", "prior", "method", "error"])
        w.writeheader()
        for r in rows:
            w.writerow({**r, "error": repr(float(r["error"]))})
    if summary_path is not None:
        with open(summary_path, "w", newline="") as f:
            cols = ["prior", "method", "n", "min", "q1", "median", "q3", "max"]
            w = csv.DictWriter(f, cols)
            w.writeheader()
            for s in boxplot_summary(rows):
                w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in s.items()})
