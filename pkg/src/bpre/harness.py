"""Experiment configuration, orchestration, and result persistence.

A run is fully determined by ``(config, seed)``: replications are processed
in fixed-size chunks with substreams addressed by chunk index (see
:mod:`bpre.streams`), workers only decide which process computes which
chunk, and partial results are reduced in chunk order with compensated
summation.  Each run writes its result file(s) plus a manifest echoing the
configuration and environment versions, so every output is reconstructible
from its manifest alone.
"""
from __future__ import annotations

import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np
import scipy

from . import __version__, asymptotics, branching, heavytail, rwre
from .exceptions import BpreError, StepCapExceededError
from .heavytail import parse_law
from .streams import chunk_bounds

KINDS = ("law-check", "simulate", "tail", "rwre-verify", "disteq", "psae", "perpetuity")
METHODS = ("crude", "importance", "exact")

_SEED_ENV_VAR = "BPRE_SEED"
_DEFAULT_SEED = 20260810


@dataclass
class ExperimentConfig:
    """Flat experiment description; every field except ``law`` and ``kind``
    has a default.  ``n=0`` selects the stationary horizon where that makes
    sense (perpetuity).  Round-trips losslessly through ``to_dict``."""

    law: str
    kind: str
    n: int = 10
    m: float = 1e6
    reps: int = 10000
    c: float = 50.0
    eps: float = 0.05
    mode: str = "size1"
    method: str = "crude"
    seed: int = _DEFAULT_SEED
    workers: int = 1
    out: str = "bpre_run"
    format: str = "json"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.mode not in branching.MODES:
            raise ValueError(f"mode must be one of {branching.MODES}, got {self.mode!r}")
        if self.format not in ("csv", "json"):
            raise ValueError(f"format must be csv or json, got {self.format!r}")
        parse_law(self.law)  # fail early with a parse diagnostic

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        typed = {f.name: _coerce(f.name, d[f.name]) for f in fields(cls) if f.name in d}
        return cls(**typed)


_INT_FIELDS = {"n", "reps", "seed", "workers"}
_FLOAT_FIELDS = {"m", "c", "eps"}


def _coerce(name: str, v):
    if name in _INT_FIELDS:
        return int(float(v)) if isinstance(v, str) else int(v)
    if name in _FLOAT_FIELDS:
        return float(v)
    return str(v)


def read_config_file(path: str) -> dict:
    """Flat ``key=value`` text config; raises with line/column diagnostics."""
    out = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                col = len(raw) - len(raw.lstrip()) + 1
                raise ValueError(f"{path}:{lineno}:{col}: expected key=value, got {line!r}")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def default_seed() -> int:
    """Seed fallback: the BPRE_SEED environment variable, else a constant."""
    v = os.environ.get(_SEED_ENV_VAR)
    return int(v) if v else _DEFAULT_SEED


# ---------------------------------------------------------------------------
# experiment implementations
# ---------------------------------------------------------------------------


def _law_check_report(cfg: ExperimentConfig) -> dict:
    law = parse_law(cfg.law)
    mean = heavytail.mean_xi(law)
    report = {
        "law": cfg.law,
        "mean_xi": None if math.isinf(mean) else mean,
        "infinite_mean": math.isinf(mean),
        "subcritical": (not math.isinf(mean)) and mean < 0,
    }
    probes = [5.0, 10.0, 20.0, 50.0]
    try:
        report["long_tailed_ratio"] = heavytail.check_long_tailed(law, 1.0, probes)
    except BpreError as exc:
        report["long_tailed_ratio"] = str(exc)
    try:
        report["subexponential_ratio"] = heavytail.check_subexponential(law, probes)
    except BpreError as exc:
        report["subexponential_ratio"] = str(exc)
    try:
        report["strong_subexponential_ratio"] = heavytail.check_strong_subexponential(law, probes)
    except BpreError as exc:
        report["strong_subexponential_ratio"] = str(exc)
    report["sqrt_insensitive"] = [
        {
            "m": mm,
            "ratio": r if math.isfinite(r) else None,
            "product": pv if math.isfinite(pv) else None,
        }
        for mm, (r, pv) in zip([1e2, 1e4, 1e6], heavytail.check_sqrt_insensitive(law, [1e2, 1e4, 1e6]))
    ]
    try:
        report["kesten_kappa"] = heavytail.kesten_kappa(law)
    except BpreError as exc:
        report["kesten_kappa"] = str(exc)
    return report


def _tail_estimate(cfg: ExperimentConfig) -> asymptotics.TailEstimate:
    law = parse_law(cfg.law)
    if cfg.method == "crude":
        return asymptotics.estimate_tail_crude(
            law, cfg.n, cfg.m, cfg.mode, cfg.reps, cfg.seed, workers=cfg.workers
        )
    if cfg.method == "importance":
        return asymptotics.estimate_tail_importance(
            law, cfg.n, cfg.m, cfg.mode, cfg.reps, cfg.seed, workers=cfg.workers
        )
    # exact quadrature oracles exist for one and two generations
    m_int = int(cfg.m)
    if cfg.n == 1:
        value = branching.exact_tail_Z1(law, m_int)
    elif cfg.n == 2:
        value, _ = branching.exact_tail_Z2(law, m_int)
    else:
        raise BpreError("method=exact supports n=1 or n=2 only")
    return asymptotics.TailEstimate(
        value=value,
        std_error=0.0,
        reps=0,
        method="exact-quadrature",
        prediction=asymptotics.thm1_prediction(law, cfg.n, cfg.m),
        prediction_kind="thm1",
        law=cfg.law,
        n=cfg.n,
        m=cfg.m,
        mode=cfg.mode,
        seed=cfg.seed,
    )


def _walk_chunk(job) -> list:
    law_spec, n, seed, start, size, cap = job
    law = parse_law(law_spec)
    rows = []
    for i in range(start, start + size):
        try:
            w = rwre.simulate_walk(law, n, (seed, i), step_cap=cap)
            rows.append(
                (n, w.t_n, w.sum_u_positive(), w.sum_u_nonpositive(), w.min_site,
                 rwre.verify_hitting_identity(w))
            )
        except StepCapExceededError:
            rows.append((n, -1, -1, -1, 0, False))
    return rows


_WALK_CHUNK = 1024


def _run_walks(cfg: ExperimentConfig, cap) -> list:
    """Walks are independent with per-walk seeds (seed, index), so any
    partition over workers yields identical rows; chunks keep dispatch cheap."""
    jobs = []
    start = 0
    while start < cfg.reps:
        size = min(_WALK_CHUNK, cfg.reps - start)
        jobs.append((cfg.law, cfg.n, cfg.seed, start, size, cap))
        start += size
    if cfg.workers <= 1:
        parts = [_walk_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            parts = list(ex.map(_walk_chunk, jobs))
    return [row for part in parts for row in part]


def run(config: ExperimentConfig):
    """Execute the configured experiment; returns the manifest dict.

    Writes ``<out>.json`` or ``<out>.csv`` with the result, kind-specific
    side files, and ``<out>.manifest.json``.
    """
    t_start = time.time()
    outputs = []
    law = parse_law(config.law)

    if config.kind == "law-check":
        result = _law_check_report(config)
    elif config.kind == "simulate":
        from .streams import DOMAIN_BRANCH, substream

        traj = branching.simulate(law, config.n, config.mode, substream(config.seed, DOMAIN_BRANCH, 0))
        path = f"{config.out}.traj.csv"
        with open(path, "w") as f:
            branching.write_trajectory(traj, f)
        outputs.append(path)
        result = {
            "law": config.law,
            "n": config.n,
            "mode": config.mode,
            "seed": config.seed,
            "final_population_log10": (
                None if traj.zs[-1] == 0 else branching.log_of_int(traj.zs[-1]) / math.log(10)
            ),
            "approx_steps": int(sum(traj.approx)),
            "trajectory": path,
        }
    elif config.kind == "tail":
        result = _tail_estimate(config).to_dict()
    elif config.kind == "rwre-verify":
        rows = _run_walks(config, cap=rwre.DEFAULT_STEP_CAP)
        path = f"{config.out}.walks.csv"
        with open(path, "w") as f:
            f.write("n,T_n,sum_U_pos,sum_U_nonpos,min_site\n")
            for r in rows:
                f.write(",".join(str(v) for v in r[:5]) + "\n")
        outputs.append(path)
        ok = sum(1 for r in rows if r[5])
        capped = sum(1 for r in rows if r[1] < 0)
        result = {
            "law": config.law,
            "n": config.n,
            "walks": len(rows),
            "identity_ok": ok,
            "capped": capped,
            "all_ok": ok == len(rows),
        }
    elif config.kind == "disteq":
        rows = _run_walks(config, cap=None)
        walk_sums = np.array([magnitude(r[2]) for r in rows])
        branch = _branch_sums(config)
        stat, pval = rwre.ks_two_sample(walk_sums, branch)
        result = {
            "law": config.law,
            "n": config.n,
            "reps": config.reps,
            "ks_statistic": stat,
            "p_value": pval,
        }
    elif config.kind == "psae":
        est = asymptotics.psae_conditional_prob(
            law,
            config.n,
            config.m,
            config.c,
            config.eps,
            config.reps,
            config.seed,
            mode=config.mode,
            workers=config.workers,
        )
        result = {
            "law": config.law,
            "n": config.n,
            "m": config.m,
            "c": config.c,
            "eps": config.eps,
            "reps": config.reps,
            "value": est.value,
            "ci_low": est.ci_low,
            "ci_high": est.ci_high,
            "se": est.std_error,
            "seed": config.seed,
        }
    elif config.kind == "perpetuity":
        horizon = None if config.n <= 0 else config.n
        result = asymptotics.estimate_perpetuity_tail(
            law, horizon, config.m, config.reps, config.seed, workers=config.workers
        ).to_dict()
    else:  # pragma: no cover - guarded by ExperimentConfig
        raise ValueError(config.kind)

    main_path = _write_result(config, result)
    outputs.insert(0, main_path)

    manifest = {
        "config": config.to_dict(),
        "outputs": outputs,
        "wall_time_s": time.time() - t_start,
        "versions": {
            "bpre": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    mpath = f"{config.out}.manifest.json"
    with open(mpath, "w") as f:
        json.dump(manifest, f, indent=2)
    manifest["manifest_path"] = mpath
    return manifest


_MAG_KNEE = 1e15


def magnitude(value) -> float:
    """Strictly monotone map of a nonnegative count to a float comparable
    across exact-integer and log-domain representations: identity up to 1e15
    (where int64 counts are float-exact), 1e15 + log(v) beyond."""
    if isinstance(value, int) and value > _MAG_KNEE:
        return _MAG_KNEE + branching.log_of_int(value)
    v = float(value)
    return v if v <= _MAG_KNEE else _MAG_KNEE + math.log(v)


def _magnitude_from_log(log_value: float) -> float:
    if log_value <= math.log(_MAG_KNEE):
        return float(math.exp(log_value))
    return _MAG_KNEE + log_value


def _branch_sums(cfg: ExperimentConfig) -> np.ndarray:
    """Per-replication sums of Z_0..Z_{n-1} on the :func:`magnitude` scale,
    exact for the common integer range, for the distributional-equality
    check against the walk's downcrossing sums."""
    from .streams import DOMAIN_BRANCH, DOMAIN_ENV, substream

    law = parse_law(cfg.law)
    vals = []
    for c_idx, size in chunk_bounds(cfg.reps):
        env_rng = substream(cfg.seed, DOMAIN_ENV, c_idx)
        br_rng = substream(cfg.seed, DOMAIN_BRANCH, c_idx)
        xs = np.asarray(law.quantile(env_rng.uniform(size=(size, cfg.n - 1))), dtype=float)
        state = branching.BatchState(size, "size1")
        acc = state.z.astype(np.int64).copy()  # running exact sum of Z_l
        acc_log = np.full(size, -np.inf)  # log-domain additions (escaped steps)
        anylog = np.zeros(size, dtype=bool)
        for k in range(cfg.n - 1):
            branching.batch_step(state, xs[:, k], "size1", br_rng)
            acc += np.where(state.esc, 0, state.z)
            anylog |= state.esc
            acc_log = np.logaddexp(acc_log, np.where(state.esc, state.logz, -np.inf))
        out = acc.astype(float)  # exact: acc stays far below 2**53
        for i in np.where(anylog)[0]:
            with np.errstate(divide="ignore"):
                combined = np.logaddexp(acc_log[i], math.log(acc[i]) if acc[i] > 0 else -np.inf)
            out[i] = _magnitude_from_log(float(combined))
        vals.append(out)
    return np.concatenate(vals)


def _write_result(cfg: ExperimentConfig, result: dict) -> str:
    if cfg.format == "json":
        path = f"{cfg.out}.json"
        with open(path, "w") as f:
            json.dump(result, f, indent=2)
    else:
        path = f"{cfg.out}.csv"
        keys = list(result.keys())
        with open(path, "w") as f:
            f.write(",".join(keys) + "\n")
            f.write(",".join(_csv_cell(result[k]) for k in keys) + "\n")
    return path


def _csv_cell(v) -> str:
    if isinstance(v, (list, dict)):
        return '"' + json.dumps(v).replace('"', '""') + '"'
    return "" if v is None else str(v)
