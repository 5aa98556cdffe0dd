"""Config-driven replication studies: coverage, widths, adaptivity, timings.

One experiment = one benchmark model, one expansion mode (full OLS or
sparse Hybrid-LARS), and a set of interval engines evaluated on fresh
designs over ``n_replications`` replications.  Replication r derives all
of its randomness from ``SeedSequence(seed, spawn_key=(r, k))`` with
k = 0 design, 1 validation, 2 calibration, 3 bootstrap, so any
replication is reproducible in isolation and thread count cannot change
results (workers are mapped over replications and gathered in index
order).

Per replication and engine the report records: empirical coverage per
level, per-point normalized interval widths at the 0.9 level (with
median and q90-q10 spread), the Spearman correlation between widths and
absolute prediction errors, failure counts, and the engine wall time.
Wall times are measurement metadata: they are excluded from the
determinism contract (see ``canonical_json``).
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .benchmarks import benchmark_registry
from .conformal import (
    FullConformalOls,
    _lower_index,
    _upper_index,
    bootstrap_coeffs,
    q_minus,
    q_plus,
    sparse_fc_bounds,
)
from .errors import ConfigError
from .metrics import spearman_rho, validation_error
from .pce import PceBasis, fit_ols, loo_models, loo_residuals
from .sparse import hybrid_fit, sparse_loo_fits

SCHEMA_VERSION = 1
DEFAULT_LEVELS = (0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95)
WIDTH_LEVEL = 0.9
PREDICT_CHUNK = 65536

__all__ = [
    "EngineConfig",
    "ExperimentConfig",
    "run_experiment",
    "emit_report",
    "canonical_json",
    "paper_config",
    "PAPER_FIGURES",
]


@dataclass(frozen=True)
class EngineConfig:
    """One interval engine; unused knobs are ignored by the other kinds."""

    kind: str                      # split | full_conformal | jackknife_plus | bootstrap
    n_cal: int = 2000              # split: calibration-set size
    n_boot: int = 100              # bootstrap: resample count
    symmetric: bool = None         # None = engine default (split: True, others: False)
    bracket_mult: float = 20.0     # sparse full conformal: bracket multiplier
    obj_tol: float = 1e-6          # sparse full conformal: boundary-condition tolerance

    def resolved_symmetric(self) -> bool:
        if self.symmetric is None:
            return self.kind == "split"
        return bool(self.symmetric)

    def validate(self):
        if self.kind not in ("split", "full_conformal", "jackknife_plus", "bootstrap"):
            raise ConfigError(f"unknown engine kind {self.kind!r}")
        if self.kind == "split" and self.n_cal < 1:
            raise ConfigError("split engine needs n_cal >= 1")
        if self.kind == "bootstrap" and self.n_boot < 2:
            raise ConfigError("bootstrap engine needs n_boot >= 2")
        if self.bracket_mult <= 1:
            raise ConfigError("bracket_mult must exceed 1")


DEFAULT_ENGINES = (
    EngineConfig("split"),
    EngineConfig("full_conformal"),
    EngineConfig("jackknife_plus"),
    EngineConfig("bootstrap"),
)


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    pce_mode: str                  # 'full' | 'sparse'
    degree: int
    n_ed: int
    n_val: int
    n_replications: int
    levels: tuple = DEFAULT_LEVELS
    engines: tuple = DEFAULT_ENGINES
    seed: int = 0
    output_dir: str = "confpce-out"
    gaussian_param: str = "std"
    naive_sparse: bool = False
    threads: int = 1
    schema_version: int = SCHEMA_VERSION

    def validate(self):
        benchmark_registry(self.model, self.gaussian_param)  # raises on bad names
        if self.pce_mode not in ("full", "sparse"):
            raise ConfigError(f"pce_mode must be 'full' or 'sparse', got {self.pce_mode!r}")
        if self.naive_sparse and self.pce_mode != "sparse":
            raise ConfigError("naive_sparse mode is only defined for sparse expansions")
        if self.degree < 0 or self.n_ed < 2 or self.n_val < 2 or self.n_replications < 1:
            raise ConfigError("degree/n_ed/n_val/n_replications out of range")
        if not all(0.0 < lv < 1.0 for lv in self.levels):
            raise ConfigError("levels must lie in (0, 1)")
        if self.pce_mode == "full":
            dim = benchmark_registry(self.model, self.gaussian_param).input_model.dim
            p_size = math.comb(dim + self.degree, self.degree)
            if self.n_ed < p_size + 1:
                raise ConfigError(f"full mode needs n_ed >= P+1 = {p_size + 1}, got {self.n_ed}")
        for eng in self.engines:
            eng.validate()
        names = [e.kind for e in self.engines]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate engine kinds; configure one engine per kind")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels"] = list(self.levels)
        d["engines"] = [asdict(e) for e in self.engines]
        return d

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        engines = tuple(EngineConfig(**e) for e in d.pop("engines", [asdict(e) for e in DEFAULT_ENGINES]))
        levels = tuple(d.pop("levels", DEFAULT_LEVELS))
        known = {f for f in ExperimentConfig.__dataclass_fields__ if f not in ("engines", "levels", "schema_version")}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return ExperimentConfig(levels=levels, engines=engines, **d)


def _stream(seed: int, replication: int, slot: int):
    """Named RNG stream: slot 0 design, 1 validation, 2 calibration, 3 bootstrap."""
    return (seed, (replication, slot))


def _interval_arrays_from_sorted(sorted_vals: np.ndarray, k_lo: int, k_hi: int):
    n = sorted_vals.shape[1]
    lower = (sorted_vals[:, k_lo - 1] if k_lo >= 1
             else np.full(sorted_vals.shape[0], -np.inf))
    upper = (sorted_vals[:, k_hi - 1] if k_hi <= n
             else np.full(sorted_vals.shape[0], np.inf))
    return lower, upper


class _ReplicationEngines:
    """Interval generation for one fitted replication, vectorized over points."""

    def __init__(self, cfg: ExperimentConfig, replication: int, bench, basis,
                 psi, y_ed, coeffs, active, lambda_hat, phi_val, pred_val):
        self.cfg = cfg
        self.r = replication
        self.bench = bench
        self.basis = basis
        self.psi = psi
        self.y_ed = y_ed
        self.coeffs = coeffs
        self.active = active            # None for full mode
        self.lambda_hat = lambda_hat
        self.phi_val = phi_val
        self.pred_val = pred_val
        self.n_val = phi_val.shape[0]
        self.frozen = cfg.naive_sparse or cfg.pce_mode == "full"
        if self.frozen:
            cols = list(active) if active is not None else None
            self.psi_a = psi if cols is None else psi[:, cols]
            self.phi_val_a = phi_val if cols is None else phi_val[:, cols]
            _, self.gram_a = fit_ols(self.psi_a, y_ed)

    def bounds(self, engine: EngineConfig, alphas):
        """(lower, upper) arrays of shape (n_levels, n_val); NaN marks a failed point."""
        if engine.kind == "split":
            return self._split(engine, alphas)
        if engine.kind == "full_conformal":
            return self._full_conformal(engine, alphas)
        if engine.kind == "jackknife_plus":
            return self._jackknife(engine, alphas)
        return self._bootstrap(engine, alphas)

    def _split(self, engine: EngineConfig, alphas):
        im = self.bench.input_model
        resid = np.empty(engine.n_cal)
        x_cal = im.sample_mc(engine.n_cal, _stream(self.cfg.seed, self.r, 2))
        y_cal = self.bench(x_cal)
        for start in range(0, engine.n_cal, PREDICT_CHUNK):
            stop = min(start + PREDICT_CHUNK, engine.n_cal)
            resid[start:stop] = y_cal[start:stop] - self.basis.eval(x_cal[start:stop]) @ self.coeffs
        lower = np.empty((len(alphas), self.n_val))
        upper = np.empty((len(alphas), self.n_val))
        symmetric = engine.resolved_symmetric()
        for k, alpha in enumerate(alphas):
            if symmetric:
                half = q_plus(np.abs(resid), alpha)
                lower[k] = self.pred_val - half
                upper[k] = self.pred_val + half
            else:
                lower[k] = self.pred_val + q_minus(resid, alpha / 2.0)
                upper[k] = self.pred_val + q_plus(resid, alpha / 2.0)
        return lower, upper

    def _full_conformal(self, engine: EngineConfig, alphas):
        symmetric = engine.resolved_symmetric()
        lower = np.full((len(alphas), self.n_val), np.nan)
        upper = np.full((len(alphas), self.n_val), np.nan)
        if self.frozen:
            fc = FullConformalOls(self.psi_a, self.y_ed, self.gram_a)
            if not symmetric:
                return fc.batch_intervals(self.phi_val_a, alphas)
            for i in range(self.n_val):
                try:
                    maps = fc.residual_maps(self.phi_val_a[i])
                    for k, alpha in enumerate(alphas):
                        iv = fc.interval_from_maps(*maps, alpha, symmetric)
                        lower[k, i] = iv.lower
                        upper[k, i] = iv.upper
                except Exception:
                    continue
            return lower, upper
        sp_resid = self.y_ed - self.psi @ self.coeffs
        for i in range(self.n_val):
            try:
                bounds, _ = sparse_fc_bounds(
                    self.psi, self.y_ed, self.phi_val[i], self.lambda_hat, alphas,
                    point_pred=float(self.pred_val[i]), train_resid=sp_resid,
                    active=self.active, bracket_mult=engine.bracket_mult,
                    obj_tol=engine.obj_tol, symmetric=symmetric)
            except Exception:
                continue
            for k, iv in enumerate(bounds):
                if iv is not None:
                    lower[k, i] = iv.lower
                    upper[k, i] = iv.upper
        return lower, upper

    def _jackknife(self, engine: EngineConfig, alphas):
        symmetric = engine.resolved_symmetric()
        if self.frozen:
            loo_coefs = loo_models(self.gram_a, self.psi_a, self.y_ed)
            coeffs_a = self.gram_a.inv @ (self.psi_a.T @ self.y_ed)
            resid = loo_residuals(self.gram_a, self.psi_a, self.y_ed, coeffs_a)
            preds = self.phi_val_a @ loo_coefs.T
        else:
            loo_coefs, resid = sparse_loo_fits(self.psi, self.y_ed)
            preds = self.phi_val @ loo_coefs.T
        n = resid.shape[0]
        lower = np.empty((len(alphas), self.n_val))
        upper = np.empty((len(alphas), self.n_val))
        if symmetric:
            lo_sorted = np.sort(preds - np.abs(resid)[None, :], axis=1)
            hi_sorted = np.sort(preds + np.abs(resid)[None, :], axis=1)
            for k, alpha in enumerate(alphas):
                lower[k] = _interval_arrays_from_sorted(lo_sorted, _lower_index(n, alpha), n + 1)[0]
                upper[k] = _interval_arrays_from_sorted(hi_sorted, 0, _upper_index(n, alpha))[1]
        else:
            preds += resid[None, :]
            preds.sort(axis=1)
            for k, alpha in enumerate(alphas):
                lo, hi = _interval_arrays_from_sorted(preds, _lower_index(n, alpha / 2.0),
                                                      _upper_index(n, alpha / 2.0))
                lower[k], upper[k] = lo, hi
        return lower, upper

    def _bootstrap(self, engine: EngineConfig, alphas):
        sparse_mode = self.cfg.pce_mode == "sparse" and not self.cfg.naive_sparse
        if self.frozen and self.cfg.pce_mode == "sparse":
            coefs, self.boot_diag = bootstrap_coeffs(self.psi_a, self.y_ed, engine.n_boot,
                                                     _stream(self.cfg.seed, self.r, 3), sparse=False)
            preds = self.phi_val_a @ coefs.T
        else:
            coefs, self.boot_diag = bootstrap_coeffs(self.psi, self.y_ed, engine.n_boot,
                                                     _stream(self.cfg.seed, self.r, 3),
                                                     sparse=sparse_mode)
            preds = self.phi_val @ coefs.T
        vals = np.sort(preds, axis=1)
        lower = np.empty((len(alphas), self.n_val))
        upper = np.empty((len(alphas), self.n_val))
        for k, alpha in enumerate(alphas):
            lo, hi = _interval_arrays_from_sorted(vals, _lower_index(engine.n_boot, alpha / 2.0),
                                                  _upper_index(engine.n_boot, alpha / 2.0))
            lower[k], upper[k] = lo, hi
        return lower, upper


def _run_replication(cfg: ExperimentConfig, r: int) -> dict:
    bench = benchmark_registry(cfg.model, cfg.gaussian_param)
    im = bench.input_model
    basis = PceBasis.total_degree(im, cfg.degree)
    x_ed = im.sample_lhs(cfg.n_ed, _stream(cfg.seed, r, 0))
    y_ed = bench(x_ed)
    x_val = im.sample_mc(cfg.n_val, _stream(cfg.seed, r, 1))
    y_val = bench(x_val)
    psi = basis.eval(x_ed)
    phi_val = basis.eval(x_val)

    if cfg.pce_mode == "full":
        coeffs, _ = fit_ols(psi, y_ed)
        active = None
        lambda_hat = 0.0
    else:
        sp = hybrid_fit(psi, y_ed)
        coeffs = sp.coeffs
        active = sp.active
        lambda_hat = sp.lambda_hat
    pred_val = phi_val @ coeffs
    eps_val = validation_error(y_val, pred_val)
    abs_err = np.abs(y_val - pred_val)
    var_val = float(np.var(y_val))

    engines = _ReplicationEngines(cfg, r, bench, basis, psi, y_ed, coeffs, active,
                                  lambda_hat, phi_val, pred_val)
    alphas = [1.0 - lv for lv in cfg.levels]
    width_pos = cfg.levels.index(WIDTH_LEVEL) if WIDTH_LEVEL in cfg.levels else None

    record = {
        "replication": r,
        "eps_val": float(eps_val),
        "n_active": None if active is None else len(active),
        "engines": {},
    }
    for engine in cfg.engines:
        t0 = time.perf_counter()
        try:
            lower, upper = engines.bounds(engine, alphas)
        except Exception as exc:
            record["engines"][engine.kind] = {"error": f"{type(exc).__name__}: {exc}"}
            continue
        wall = time.perf_counter() - t0
        coverage = {}
        n_failed = {}
        for k, lv in enumerate(cfg.levels):
            ok = ~(np.isnan(lower[k]) | np.isnan(upper[k]))
            n_failed[str(lv)] = int(np.sum(~ok))
            if ok.any():
                inside = (y_val[ok] >= lower[k][ok]) & (y_val[ok] <= upper[k][ok])
                coverage[str(lv)] = float(np.mean(inside))
            else:
                coverage[str(lv)] = float("nan")
        result = {
            "coverage": coverage,
            "n_failed": n_failed,
            "wall_time_s": wall,
        }
        if width_pos is not None:
            k = width_pos
            ok = ~(np.isnan(lower[k]) | np.isnan(upper[k]))
            widths = np.full(lower.shape[1], np.nan)
            widths[ok] = (upper[k][ok] - lower[k][ok]) ** 2 / var_val
            finite = ok & np.isfinite(widths)
            result["widths"] = [float(w) for w in widths]
            result["width_q50"] = float(np.median(widths[finite])) if finite.any() else float("nan")
            if finite.any():
                q10, q90 = np.quantile(widths[finite], [0.1, 0.9])
                result["width_q90_q10"] = float(q90 - q10)
            else:
                result["width_q90_q10"] = float("nan")
            both = finite & np.isfinite(abs_err)
            if both.sum() >= 3 and np.ptp(widths[both]) > 0 and np.ptp(abs_err[both]) > 0:
                result["spearman_rho"] = float(spearman_rho(widths[both], abs_err[both]))
            else:
                result["spearman_rho"] = float("nan")
        if hasattr(engines, "boot_diag") and engine.kind == "bootstrap":
            result["diagnostics"] = engines.boot_diag
        record["engines"][engine.kind] = result
    return record


def _aggregate(cfg: ExperimentConfig, replications: list) -> dict:
    agg = {}
    for engine in cfg.engines:
        name = engine.kind
        recs = [r["engines"][name] for r in replications
                if name in r["engines"] and "error" not in r["engines"][name]]
        if not recs:
            agg[name] = {"n_ok_replications": 0}
            continue
        mean_cov = {}
        for lv in cfg.levels:
            vals = [rec["coverage"][str(lv)] for rec in recs
                    if not math.isnan(rec["coverage"][str(lv)])]
            mean_cov[str(lv)] = float(np.mean(vals)) if vals else float("nan")
        rho = [rec.get("spearman_rho", float("nan")) for rec in recs]
        q50 = [rec.get("width_q50", float("nan")) for rec in recs]
        spread = [rec.get("width_q90_q10", float("nan")) for rec in recs]
        agg[name] = {
            "n_ok_replications": len(recs),
            "mean_coverage": mean_cov,
            "median_width_q50": _nan_median(q50),
            "median_width_q90_q10": _nan_median(spread),
            "spearman_rho": [float(x) for x in rho],
            "median_spearman_rho": _nan_median(rho),
            "mean_wall_time_s": float(np.mean([rec["wall_time_s"] for rec in recs])),
        }
    return agg


def _nan_median(vals) -> float:
    arr = np.asarray([v for v in vals if not math.isnan(v)], dtype=float)
    return float(np.median(arr)) if arr.size else float("nan")


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run all replications and assemble the report dict."""
    cfg.validate()
    n_r = cfg.n_replications
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [pool.submit(_run_replication, cfg, r) for r in range(n_r)]
            replications = [f.result() for f in futures]  # index order
    else:
        replications = [_run_replication(cfg, r) for r in range(n_r)]

    errored = sum(1 for rec in replications
                  if any("error" in e for e in rec["engines"].values()))
    if errored > 0.2 * n_r:
        raise RuntimeError(f"{errored}/{n_r} replications reported engine errors")

    report = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "replications": replications,
        "aggregate": _aggregate(cfg, replications),
        "errored_replications": errored,
    }
    return report


def canonical_json(report: dict) -> str:
    """Deterministic serialization: wall times (measurement noise) stripped."""

    def strip(obj):
        if isinstance(obj, dict):
            return {k: strip(v) for k, v in obj.items()
                    if k not in ("wall_time_s", "mean_wall_time_s")}
        if isinstance(obj, list):
            return [strip(v) for v in obj]
        return obj

    return json.dumps(strip(report), indent=2)


def _csv_float(x) -> str:
    return repr(float(x))


def emit_report(report: dict, out_dir: str, formats=("json", "csv")) -> list:
    """Write summary.json plus tidy CSV tables; returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = report["config"]
    mode = "naive_sparse" if cfg["naive_sparse"] else cfg["pce_mode"]
    written = []
    if "json" in formats:
        path = os.path.join(out_dir, "summary.json")
        with open(path, "w") as fh:
            json.dump(report, fh, indent=2)
        written.append(path)
    if "csv" in formats:
        cov_path = os.path.join(out_dir, "coverage.csv")
        with open(cov_path, "w") as fh:
            fh.write("model,pce_mode,engine,level,replication,coverage\n")
            for rec in report["replications"]:
                for name, eng in rec["engines"].items():
                    if "error" in eng:
                        continue
                    for lv, cov in eng["coverage"].items():
                        fh.write(f"{cfg['model']},{mode},{name},{lv},{rec['replication']},"
                                 f"{_csv_float(cov)}\n")
        written.append(cov_path)
        w_path = os.path.join(out_dir, "widths.csv")
        with open(w_path, "w") as fh:
            fh.write("model,pce_mode,engine,replication,point_index,norm_width\n")
            for rec in report["replications"]:
                for name, eng in rec["engines"].items():
                    for i, w in enumerate(eng.get("widths", [])):
                        fh.write(f"{cfg['model']},{mode},{name},{rec['replication']},{i},"
                                 f"{_csv_float(w)}\n")
        written.append(w_path)
        t_path = os.path.join(out_dir, "timings.csv")
        with open(t_path, "w") as fh:
            fh.write("model,pce_mode,engine,replication,wall_time_s\n")
            for rec in report["replications"]:
                for name, eng in rec["engines"].items():
                    if "error" in eng:
                        continue
                    fh.write(f"{cfg['model']},{mode},{name},{rec['replication']},"
                             f"{_csv_float(eng['wall_time_s'])}\n")
        written.append(t_path)
    return written


PAPER_FIGURES = {
    "ishigami-full": dict(model="ishigami", pce_mode="full", degree=5, n_ed=200),
    "borehole-full": dict(model="borehole", pce_mode="full", degree=2, n_ed=200),
    "ishigami-sparse": dict(model="ishigami", pce_mode="sparse", degree=6, n_ed=40),
    "borehole-sparse": dict(model="borehole", pce_mode="sparse", degree=2, n_ed=40),
    "naive-sparse": dict(model="ishigami", pce_mode="sparse", degree=6, n_ed=40,
                         naive_sparse=True),
}


def paper_config(figure: str, seed: int = 0, out_dir: str = "confpce-out",
                 n_replications: int = 100, n_val: int = 1000, n_cal: int = 1_000_000,
                 threads: int = 1) -> ExperimentConfig:
    """Canned experiment configuration matching one of the studied settings."""
    if figure not in PAPER_FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; choose from {sorted(PAPER_FIGURES)}")
    base = PAPER_FIGURES[figure]
    engines = (
        EngineConfig("split", n_cal=n_cal),
        EngineConfig("full_conformal"),
        EngineConfig("jackknife_plus"),
        EngineConfig("bootstrap", n_boot=100),
    )
    return ExperimentConfig(
        n_val=n_val, n_replications=n_replications, engines=engines, seed=seed,
        output_dir=out_dir, threads=threads, **base,
    )
