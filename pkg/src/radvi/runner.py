"""End-to-end experiment runs: optional whitening, radVI, evaluation, output files."""
from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .basis import build_dictionary, radial_value
from .config import ConfigError, RunConfig
from .gram import gram_matrix
from .metrics import (
    MetricReport,
    empirical_w2_squared,
    map_error_l2,
    radial_quantile_profile,
    radial_w2_squared,
    snis_estimate,
)
from .optimizer import OptimizerConfig, radvi_run
from .specfun import chi_squared_quantile
from .oracles import cdf_match_radial_oracle, oracle_for_target, spherical_average_potential
from .targets import TargetSpec, build_target, make_anisotropic
from .whitening import (
    CompositeMap,
    GVIConfig,
    WhiteningTransform,
    gaussian_vi,
    laplace_approx,
    whiten_target,
)

__all__ = ["OUTPUT_ENV", "RunOutcome", "run", "sweep", "default_output_root"]

OUTPUT_ENV = "RADVI_OUTPUT_ROOT"
TRACE_HEADER = ["iter", "objective", "map_error"]


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


@dataclass
class RunOutcome:
    output_dir: Path
    summary: dict
    metrics: List[MetricReport] = field(default_factory=list)

    def metric(self, name: str) -> Optional[MetricReport]:
        for m in self.metrics:
            if m.name == name:
                return m
        return None


def _child_seeds(seed: int, n: int) -> List[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(int(seed)).spawn(n)]


def _target_spec(cfg: RunConfig) -> TargetSpec:
    t = cfg["target"]
    spec = TargetSpec(t["family"], t["dimension"], dof=t["dof"], scale=t["scale"])
    if t["anisotropic_seed"] is not None:
        if t["family"] == "funnel":
            raise ConfigError("the funnel cannot be made anisotropic")
        spec = make_anisotropic(spec, int(t["anisotropic_seed"]))
    return spec


def _gaussian_approx(method: str, model, cfg: RunConfig, seed: int):
    w = cfg["whitening"]
    if method == "la":
        return laplace_approx(model, tol=w["la_tol"]), {}
    res = gaussian_vi(model, GVIConfig(w["gvi_step"], w["gvi_iterations"], w["gvi_batch"], seed))
    return res.transform, {"gvi_step_halvings": res.step_halvings,
                           "gvi_objective_start": res.objective_start,
                           "gvi_objective_end": res.objective_end}


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _stationary_oracle(model, d, rng, n_sphere=1000, n_table=512):
    """Radial map onto the law with density ∝ r^(d-1) exp(-Vbar(r))."""
    vbar = spherical_average_potential(model, n_sphere, rng)
    top = 6.0 * math.sqrt(d) + 20.0
    grid = np.linspace(1e-6, top, n_table)
    spline = CubicSpline(grid, vbar(grid))

    def log_phi(s):
        s = np.clip(np.asarray(s, dtype=float), 1e-6, top)
        return (d - 1) * np.log(s) - spline(s)

    return cdf_match_radial_oracle(log_phi, d, r_max=top, name="stationary")


def _funnel_reports(model, cmap: CompositeMap, w: WhiteningTransform, cfg: RunConfig, rng) -> List[MetricReport]:
    ev = cfg["evaluation"]
    n, trials = ev["snis_samples"], ev["snis_trials"]
    fns = {
        "z_sq": lambda y: y[:, 0] ** 2,
        "x1_sq": lambda y: y[:, 1] ** 2,
        "tail_z": lambda y: (np.abs(y[:, 0]) > 2.0).astype(float),
    }
    d = model.dimension
    identity = build_dictionary(d, alpha=1.0)
    gauss = CompositeMap(w, identity, np.zeros(identity.size))
    proposals = {"radvi": cmap, "gvi": gauss}
    reports = []
    for label, prop in proposals.items():
        acc = {k: {"snis": [], "se": [], "plug": []} for k in fns}
        ess = []
        for _ in range(trials):
            y = prop.sample(n, rng)
            for key, f in fns.items():
                res = snis_estimate(f, model, prop.log_density, lambda _r, _n, y=y: y, n, rng)
                acc[key]["snis"].append(res.snis.value)
                acc[key]["se"].append(res.snis.standard_error)
                acc[key]["plug"].append(res.plug_in.value)
            ess.append(res.ess)
        for key in fns:
            reports.append(MetricReport(f"{label}_snis_{key}", float(np.mean(acc[key]["snis"])),
                                        float(np.mean(acc[key]["se"])), n * trials))
            reports.append(MetricReport(f"{label}_plugin_{key}", float(np.mean(acc[key]["plug"])),
                                        float(np.std(acc[key]["plug"]) / math.sqrt(trials)), n * trials))
        reports.append(MetricReport(f"{label}_ess", float(np.mean(ess)), None, n * trials))
    return reports


def run(cfg: RunConfig, output_dir: Optional[Path] = None, timing: bool = False,
        samples: Optional[bool] = None, dump_q: Optional[Path] = None) -> RunOutcome:
    """Execute one configured experiment and write its output files."""
    start = time.perf_counter()
    cfg = cfg.resolved()
    r = cfg["run"]
    out = Path(output_dir or r["output_dir"] or default_output_root() / r["name"])
    out.mkdir(parents=True, exist_ok=True)
    opt_seed, gvi_seed, eval_seed, base_seed = _child_seeds(r["seed"], 4)

    spec = _target_spec(cfg)
    model = build_target(spec)
    d = model.dimension
    method = cfg["whitening"]["method"]
    diagnostics = {}
    if method == "none":
        w = WhiteningTransform.identity(d)
        work = model
    else:
        w, diag = _gaussian_approx(method, model, cfg, gvi_seed)
        diagnostics.update(diag)
        work = whiten_target(model, w)

    dct = cfg["dictionary"]
    dictionary = build_dictionary(d, dct["R"], dct["delta"], dct["alpha"])
    gram = gram_matrix(dictionary)
    if dump_q is not None:
        np.savetxt(dump_q, gram.Q, delimiter=",", fmt="%.17g")

    oracle = oracle_for_target(model) if (model.isotropic and method == "none") else None
    o = cfg["optimizer"]
    opt = OptimizerConfig(o["step"], o["iterations"], o["batch"], opt_seed, o["logdet_mode"], o["trace_every"])
    result = radvi_run(work, dictionary, gram, opt, oracle=oracle,
                       lam0=np.full(dictionary.size, dct["lambda0"]))
    trace_header = TRACE_HEADER + (["wallclock_ms"] if timing else [])
    _write_csv(out / "trace.csv", trace_header, result.trace.rows(timing))

    lam = result.weights
    cmap = CompositeMap(w, dictionary, lam)
    ev = cfg["evaluation"]
    rng = np.random.default_rng(eval_seed)
    reports: List[MetricReport] = []
    levels = np.linspace(0.05, 0.95, ev["profile_points"])
    profile = {"quantile": levels}

    radvi_samples = cmap.sample(max(ev["n_eval"], 100), rng)
    profile["radvi"] = radial_quantile_profile(radvi_samples - w.mean, levels)
    truth = None
    if model.sampler is not None and spec.family != "funnel":
        truth = model.sampler(rng, max(ev["n_eval"], 100))
        profile["truth"] = radial_quantile_profile(truth - w.mean, levels)

    baseline = None
    if ev["baseline"] != "none" and spec.family != "funnel":
        if ev["baseline"] == method:
            baseline = w
        else:
            baseline, _ = _gaussian_approx(ev["baseline"], model, cfg, base_seed)
        base_samples = baseline.forward(rng.standard_normal((max(ev["n_eval"], 100), d)))
        profile["baseline"] = radial_quantile_profile(base_samples - w.mean, levels)

    if oracle is not None:
        reports.append(map_error_l2(dictionary, lam, oracle, ev["n_eval"], rng, r["seed"]))
        ref_radii = oracle(np.sqrt(rng.chisquare(d, ev["n_eval"])))
        reports.append(MetricReport("radvi_radial_w2", radial_w2_squared(
            np.linalg.norm(radvi_samples[: ev["n_eval"]], axis=1), ref_radii), None, ev["n_eval"], r["seed"]))
        if baseline is not None:
            reports.append(MetricReport("baseline_radial_w2", radial_w2_squared(
                np.linalg.norm(base_samples[: ev["n_eval"]], axis=1), ref_radii), None, ev["n_eval"], r["seed"]))
    if truth is not None:
        m = min(ev["n_w2"], 1024)
        reports.append(MetricReport("radvi_w2", empirical_w2_squared(radvi_samples[:m], truth[:m]), None, m, r["seed"]))
        if baseline is not None:
            reports.append(MetricReport("baseline_w2", empirical_w2_squared(base_samples[:m], truth[:m]),
                                        None, m, r["seed"]))
    if method == "none" and not model.isotropic:
        stat = _stationary_oracle(model, d, rng)
        rq = np.sqrt(chi_squared_quantile(d, levels))
        learned, ref = radial_value(dictionary, lam, rq), stat(rq)
        reports.append(MetricReport("stationarity_quantile_rms",
                                    float(np.sqrt(np.mean(((learned - ref) / ref) ** 2))), None, len(levels)))
        profile["stationary"] = ref
    if spec.family == "funnel":
        reports += _funnel_reports(model, cmap, w, cfg, rng)

    cols = [c for c in ("quantile", "truth", "baseline", "radvi", "stationary") if c in profile]
    _write_csv(out / "profile.csv", cols, zip(*[[repr(float(v)) for v in profile[c]] for c in cols]))
    want_samples = r["samples"] if samples is None else samples
    if want_samples:
        _write_csv(out / "samples.csv", [f"x{i}" for i in range(d)],
                   ([repr(float(v)) for v in row] for row in cmap.sample(r["n_samples_out"], rng)))

    summary = {
        "name": r["name"],
        "config": cfg.to_dict(),
        "dictionary": dictionary.describe(),
        "weights": lam.tolist(),
        "whitening": None if method == "none" else w.to_dict(),
        "metrics": [m.to_dict() for m in reports],
        "diagnostics": diagnostics,
        "wallclock_s": time.perf_counter() - start,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return RunOutcome(out, summary, reports)


def sweep(cfg: RunConfig, param: str, values, output_root: Optional[Path] = None,
          timing: bool = False) -> List[dict]:
    """One independent run per value of ``param``; a combined trace CSV is written."""
    values = list(values)
    root = Path(output_root or default_output_root() / f"{cfg['run']['name']}-sweep")
    rows, status = [], []
    if not values:
        return status
    cfg.get(param)  # fail early on an unknown key
    root.mkdir(parents=True, exist_ok=True)
    for value in values:
        run_cfg = cfg.copy()
        run_cfg.set(param, value)
        tag = f"{param}={value}"
        try:
            outcome = run(run_cfg.validate(), root / tag, timing=timing)
        except Exception as exc:  # a failed value must not stop the sweep
            status.append({"value": value, "ok": False, "error": f"{type(exc).__name__}: {exc}"})
            rows.append([param, value, "", "", "", "failed"])
            continue
        status.append({"value": value, "ok": True, "output_dir": str(outcome.output_dir),
                       "metrics": outcome.summary["metrics"]})
        with open(outcome.output_dir / "trace.csv") as fh:
            reader = csv.reader(fh)
            next(reader)
            for line in reader:
                rows.append([param, value] + line[:3] + ["ok"])
    _write_csv(root / "sweep.csv", ["param", "value", "iter", "objective", "map_error", "status"], rows)
    return status
