"""Replicated simulation runs over sample sizes and methods.

Every ``(n, replicate)`` pair is one task: it draws a dataset once and fits
all configured methods on it. Random streams come from numpy's Philox
generator keyed by ``SeedSequence(seed, spawn_key=(n, replicate, k))`` with
``k = 0`` for the data and ``k = j + 1`` for method ``j``.
"""

import csv
import io
import json
import math
import time
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .baselines import FilterSpec, filter_path, holdout_select
from .cg import CGConfig, cg_run, expand
from .config import ExperimentConfig, hypothesis_warnings
from .evaluation import (
    audit_operator_concentration,
    audit_warped_concentration,
    fit_rate,
    l2_error_exact,
)
from .exceptions import ContractViolation
from .kernels import Dataset, assemble_gram, weighted_norm
from .stopping import RULE_FIXED, StoppingConfig, discrepancy, make_monitor, stop
from .synthetic import NoiseModel, SyntheticSpec, build_problem, required_unlabeled, sample

__all__ = [
    "CSV_HEADER",
    "ResultRow",
    "stream",
    "run_task",
    "run_experiment",
    "run_audit",
    "format_rows",
]

CSV_HEADER = [
    "method", "n", "replicate", "stop_m", "l2_error",
    "discrepancy_at_stop", "threshold_at_stop", "wall_time_ms", "error_flag",
]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


@dataclass
class ResultRow:
    method: str
    method_index: int
    n: int
    replicate: int
    stop_m: int = -1
    l2_error: float = math.nan
    discrepancy_at_stop: float = math.nan
    threshold_at_stop: float = math.nan
    wall_time_ms: float = math.nan
    error: str = ""

    @property
    def sort_key(self):
        return (self.method_index, self.n, self.replicate)


def stream(seed, n, replicate, k):
    """Independent Philox generator for ``(seed, n, replicate, k)``."""
    ss = np.random.SeedSequence(seed, spawn_key=(n, replicate, k))
    return np.random.Generator(np.random.Philox(ss))


def _fmt(x):
    return "%.17g" % x


def format_rows(rows, timing=False):
    """CSV text for ``rows`` in the fixed column order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in sorted(rows, key=lambda r: r.sort_key):
        w.writerow([
            r.method, r.n, r.replicate, r.stop_m, _fmt(r.l2_error),
            _fmt(r.discrepancy_at_stop), _fmt(r.threshold_at_stop),
            _fmt(r.wall_time_ms) if timing else "",
            1 if r.error else 0,
        ])
    return buf.getvalue()


@lru_cache(maxsize=8)
def _problem(problem_json):
    pr = json.loads(problem_json)
    spec = SyntheticSpec(
        s=pr["s"], r=pr["r"], rho=pr["rho"], p=pr["p"],
        noise=NoiseModel(pr["noise"]["kind"], pr["noise"]["M"]),
    )
    return build_problem(spec)


def _problem_of(cfg):
    return _problem(cfg.problem.model_dump_json())


def _stopping_config(method, cfg, truth, semi):
    st = method.stopping
    pr = cfg.problem
    if st.rule == RULE_FIXED:
        return StoppingConfig(rule=RULE_FIXED, m=st.m)
    return StoppingConfig(
        rule=st.rule,
        tau=st.tau,
        tau_prime=st.tau_prime,
        gamma=st.gamma,
        M=st.M if st.M is not None else pr.noise.M,
        D=st.D if st.D is not None else max(truth.D_effective, 1.0),
        r=st.r if st.r is not None else pr.r,
        s=st.s if st.s is not None else pr.s,
        rho=st.rho if st.rho is not None else pr.rho,
        semi_supervised=semi,
        eta_over_delta_mode=st.eta_over_delta_mode,
    )


def _split(rng, n, fraction):
    perm = rng.permutation(n)
    n_val = min(max(1, int(round(fraction * n))), n - 1)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _run_cg(method, cfg, kernel, truth, data, G, row):
    # the max(M, rho) substitution belongs to the semi-supervised setting even
    # where no unlabeled points turn out to be needed
    semi = cfg.problem.semi_supervised
    stop_cfg = _stopping_config(method, cfg, truth, semi)
    fit = cg_run(G, CGConfig(l=method.l, max_iters=method.max_iters),
                 monitor=make_monitor(G, stop_cfg))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        dec = stop(G, fit, stop_cfg)
    row.stop_m = dec.m_tilde
    row.l2_error = l2_error_exact(truth, kernel, data.X, fit.alpha(dec.m_tilde))
    if stop_cfg.rule == RULE_FIXED:
        row.discrepancy_at_stop = discrepancy(G, fit, dec.m_tilde)
    else:
        row.discrepancy_at_stop = dec.discrepancy_at_stop
        row.threshold_at_stop = dec.threshold_at_stop
    return dec


def _labeled(data):
    return Dataset(X=data.X[: data.n_labeled], Y=data.Y)


def _holdout_parts(data, fraction, rng):
    lab = _labeled(data)
    tr, va = _split(rng, lab.n_labeled, fraction)
    return Dataset(X=lab.X[tr], Y=lab.Y[tr]), lab.X[va], lab.Y[va]


def _run_filter(method, kernel, truth, data, rng, row):
    train, X_val, y_val = _holdout_parts(data, method.holdout_fraction, rng)
    G = assemble_gram(kernel, train)
    if method.family == "landweber":
        grid = sorted({int(round(v)) for v in method.grid if round(v) >= 1})
        if not grid:
            raise ContractViolation("landweber grid needs iteration counts >= 1")
    else:
        grid = sorted(method.grid, reverse=True)
    specs = [FilterSpec(method.family, v, method.step) for v in grid]
    alphas = filter_path(G, specs)
    preds = expand(np.column_stack(alphas), kernel, train.X, X_val)
    k = holdout_select(list(preds.T), y_val)
    row.stop_m = k
    row.l2_error = l2_error_exact(truth, kernel, train.X, alphas[k])
    row.discrepancy_at_stop = discrepancy_of(G, alphas[k])


def discrepancy_of(G, alpha):
    """``|y - K alpha|_K`` for arbitrary coefficients."""
    return weighted_norm(G.y - G.matvec(alpha), G, 1)


def _run_cg_holdout(method, kernel, truth, data, rng, row):
    train, X_val, y_val = _holdout_parts(data, method.holdout_fraction, rng)
    G = assemble_gram(kernel, train)
    fit = cg_run(G, CGConfig(l=method.l, max_iters=method.max_iters))
    preds = expand(np.column_stack(fit.alphas), kernel, train.X, X_val)
    m = holdout_select(list(preds.T), y_val)
    row.stop_m = m
    row.l2_error = l2_error_exact(truth, kernel, train.X, fit.alpha(m))
    row.discrepancy_at_stop = discrepancy(G, fit, m)


def run_task(cfg, n, replicate, traces=None):
    """Fit every method on one ``(n, replicate)`` draw.

    Failures inside a method are caught and reported on its row.
    """
    ids = cfg.method_ids()
    rows = [ResultRow(mid, j, n, replicate) for j, mid in enumerate(ids)]
    try:
        kernel, truth = _problem_of(cfg)
        pr = cfg.problem
        n_total = n
        if pr.semi_supervised:
            n_total = required_unlabeled(n, pr.r, pr.s, max(truth.D_effective, 1.0), pr.gamma_unlabeled)
        data = sample(truth, n=n, n_unlabeled=n_total - n, seed=stream(cfg.seed, n, replicate, 0))
    except Exception:
        msg = traceback.format_exc(limit=2)
        for row in rows:
            row.error = msg
        return rows

    G_full = None
    for j, (method, row) in enumerate(zip(cfg.methods, rows)):
        rng = stream(cfg.seed, n, replicate, j + 1)
        t0 = time.perf_counter()
        try:
            if method.kind == "cg":
                if G_full is None:
                    G_full = assemble_gram(kernel, data)
                dec = _run_cg(method, cfg, kernel, truth, data, G_full, row)
                if traces is not None:
                    traces[row.method] = {
                        "m_hat": dec.m_hat, "m_tilde": dec.m_tilde, "triggered": dec.triggered,
                        "trace": [list(map(float, t)) for t in dec.threshold_trace],
                    }
            elif method.kind == "filter":
                _run_filter(method, kernel, truth, data, rng, row)
            else:
                _run_cg_holdout(method, kernel, truth, data, rng, row)
            if not math.isfinite(row.l2_error):
                row.error = "non-finite error"
        except Exception:
            row.error = traceback.format_exc(limit=3)
        row.wall_time_ms = 1000.0 * (time.perf_counter() - t0)
    return rows


def _task_entry(args):
    cfg_json, n, rep = args
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    return run_task(cfg, n, rep)


def _summary(cfg, rows, kernel, truth):
    out = {
        "config": cfg.model_dump(mode="json"),
        "problem": {
            "kappa": truth.kappa,
            "D_effective": truth.D_effective,
            "truncation_tail": truth.truncation_tail,
            "l2_norm_sq": truth.l2_norm_sq,
        },
        "warnings": hypothesis_warnings(cfg),
        "methods": {},
    }
    for j, mid in enumerate(cfg.method_ids()):
        errors = []
        for n in cfg.n_grid:
            errs = [r.l2_error for r in rows
                    if r.method_index == j and r.n == n and not r.error]
            errors.append(errs)
        entry = {"n_failed": sum(1 for r in rows if r.method_index == j and r.error)}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            try:
                entry.update(fit_rate(cfg.n_grid, errors, cfg.problem.r, cfg.problem.s).to_dict())
            except ContractViolation as exc:
                meds = [float(np.median(e)) if e else math.nan for e in errors]
                entry.update({
                    "n_grid": list(cfg.n_grid), "errors": errors, "medians": meds,
                    "slope": None, "fit_error": str(exc),
                    "theoretical_slope": -2 * cfg.problem.r / (2 * cfg.problem.r + cfg.problem.s),
                })
        out["methods"][mid] = entry
    return out


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _write_json(path, obj):
    path.write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")


def run_audit(cfg):
    """Both concentration audits with the ``audit`` settings; returns a dict."""
    kernel, _ = _problem_of(cfg)
    a = cfg.audit
    lam = a.lam if a.lam is not None else 1.0 / math.sqrt(a.n)
    slack = a.gamma + 3.0 * math.sqrt(a.gamma * (1 - a.gamma) / a.n_trials)
    op = audit_operator_concentration(kernel, a.n, a.gamma, a.n_trials, seed=cfg.seed)
    wp = audit_warped_concentration(kernel, a.n, lam, a.gamma, a.n_trials, seed=cfg.seed + 1)
    result = {"n": a.n, "gamma": a.gamma, "n_trials": a.n_trials, "lambda": lam,
              "allowed_fraction": slack}
    for name, res in (("operator", op), ("warped", wp)):
        result[name] = {
            "violation_fraction": res.violation_fraction,
            "bound": res.bound,
            "max_deviation": float(res.deviations.max()),
            "median_deviation": float(np.median(res.deviations)),
            "within_slack": res.violation_fraction <= slack,
        }
    return result


def run_experiment(cfg, out_dir=None, jobs=1, quiet=False, log=print):
    """Run ``cfg`` and write its artifacts.

    Parameters
    ----------
    cfg : ExperimentConfig
    out_dir : path, optional
        Overrides ``cfg.output_dir``.
    jobs : int
        Worker processes.
    quiet : bool
    log : callable
        Sink for progress messages.

    Returns
    -------
    int
        0 when every row succeeded, 2 when some rows carry an error marker.

    Outputs (in ``out_dir``): ``results.csv``, ``summary.json``,
    ``plotdata/<method>.tsv``, ``timings.csv``; ``audit.json`` in audit mode
    and ``trace.json`` in single_run mode.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    say = (lambda *a: None) if quiet else log

    if cfg.mode == "audit":
        result = run_audit(cfg)
        _write_json(out / "audit.json", result)
        say(f"audit written to {out / 'audit.json'}")
        return EXIT_OK

    if cfg.mode == "single_run":
        traces = {}
        rows = run_task(cfg, cfg.n_grid[0], 0, traces)
        _write_json(out / "trace.json", traces)
    else:
        tasks = [(n, rep) for n in cfg.n_grid for rep in range(cfg.replicates)]
        rows = []
        if jobs > 1:
            cfg_json = cfg.model_dump_json()
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for task_rows in pool.map(_task_entry, [(cfg_json, n, r) for n, r in tasks]):
                    rows.extend(task_rows)
        else:
            for n, rep in tasks:
                rows.extend(run_task(cfg, n, rep))
                if rep == cfg.replicates - 1:
                    say(f"n={n}: {cfg.replicates} replicates done")

    rows.sort(key=lambda r: r.sort_key)
    (out / "results.csv").write_text(format_rows(rows, timing=cfg.timing_in_results))
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "n", "replicate", "wall_time_ms"])
        for r in rows:
            w.writerow([r.method, r.n, r.replicate, _fmt(r.wall_time_ms)])

    kernel, truth = _problem_of(cfg)
    summary = _summary(cfg, rows, kernel, truth)
    failed = [r for r in rows if r.error]
    summary["errors"] = [
        {"method": r.method, "n": r.n, "replicate": r.replicate, "message": r.error.strip().splitlines()[-1]}
        for r in failed
    ]
    _write_json(out / "summary.json", summary)

    plot = out / "plotdata"
    plot.mkdir(exist_ok=True)
    for mid, entry in summary["methods"].items():
        lines = ["log_n\tlog_median_error"]
        for n, med in zip(cfg.n_grid, entry["medians"]):
            if med is not None and math.isfinite(med) and med > 0:
                lines.append(f"{_fmt(math.log(n))}\t{_fmt(math.log(med))}")
        (plot / f"{mid}.tsv").write_text("\n".join(lines) + "\n")
        if entry.get("slope") is not None:
            say(f"{mid}: slope {entry['slope']:.3f} (reference {entry['theoretical_slope']:.3f})")

    for r in failed:
        say(f"error: {r.method} n={r.n} replicate={r.replicate}: {r.error.strip().splitlines()[-1]}")
    return EXIT_RUNTIME if failed else EXIT_OK
