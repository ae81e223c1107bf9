"""Config-driven experiment runner behind the CLI subcommands.

Work items are (eps, mode) pairs farmed out to a thread pool; results are
reduced in config order so identical config + version gives byte-identical
CSV output (floats are written with repr, headers carry the toolkit version
and a config hash, never wall-clock content).
"""

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import __version__
from .analysis import (DissipationReport, bound_report, correlation_series,
                       decay_fit, dissipation_time, pseudospectrum_distance,
                       rate_fit)
from .config import build_kernel, build_map, load_config
from .errors import BoundViolation, ConfigurationError
from .fourier import FourierVector, TruncatedGrid
from .maps import LinearToralMap, SampledMap, TranslationMap, koopman_assembly
from .propagation import DenseEngine, LatticeOrbitEngine


class Runner:
    def __init__(self, cfg, out_dir, jobs=None, plots=None):
        self.cfg = cfg
        self.out = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.map = build_map(cfg)
        self.kernel = build_kernel(cfg)
        self.jobs = jobs if jobs else (cfg.jobs or os.cpu_count() or 1)
        self.plots = cfg.plots if plots is None else plots
        self._dense_u = None
        self.artifacts = []

    # -- engine construction ------------------------------------------------

    def _use_dense(self):
        if self.cfg.engine == "dense":
            return True
        if self.cfg.engine == "lattice":
            if isinstance(self.map, SampledMap):
                raise ConfigurationError("sampled maps need the dense engine",
                                         field="run.engine")
            return False
        return isinstance(self.map, SampledMap)

    def _dense_koopman(self):
        if self._dense_u is None:
            k = self.cfg.grid_k
            if k is None:
                raise ConfigurationError("dense engine requires grid_k",
                                         field="run.grid_k")
            grid = TruncatedGrid(self.map.d, k)
            if isinstance(self.map, SampledMap):
                op = self._cached_koopman(grid)
                if op is not None:
                    self._dense_u = (op.entries, grid,
                                     {"assembly": "fft-galerkin (cached)"})
                    return self._dense_u
                op, diag = koopman_assembly(self.map, grid)
                diag["assembly"] = "fft-galerkin"
                self._store_koopman(op)
                self._dense_u = (op.entries, grid, diag)
            else:
                eng = DenseEngine.from_linear_map(self.map, self.kernel, 1.0, k)
                self._dense_u = (eng.u, grid, eng.diagnostics)
        return self._dense_u

    def _cached_koopman(self, grid):
        path = self.cfg.koopman_cache
        if not path or not os.path.exists(path):
            return None
        from .fourier import load
        op = load(open(path, "rb").read())
        if op.grid.modes != grid.modes:
            raise ConfigurationError(
                f"cached Koopman matrix has K={op.grid.cutoff}, config wants "
                f"K={grid.cutoff}", field="run.koopman_cache")
        return op

    def _store_koopman(self, op):
        path = self.cfg.koopman_cache
        if not path:
            return
        from .fourier import dump_operator
        with open(path, "wb") as fh:
            fh.write(dump_operator(op))

    def engine(self, eps):
        if self._use_dense():
            u, grid, diag = self._dense_koopman()
            return DenseEngine(u, grid, self.kernel, eps, diag,
                               source_map=self.map)
        return LatticeOrbitEngine(self.map, self.kernel, eps)

    def _parallel(self, items, fn):
        if self.jobs <= 1 or len(items) <= 1:
            return {item: fn(item) for item in items}
        with ThreadPoolExecutor(max_workers=min(self.jobs, len(items))) as pool:
            results = list(pool.map(fn, items))
        return dict(zip(items, results))

    # -- computations -------------------------------------------------------

    def norm_curves(self):
        items = [(eps, mode) for eps in self.cfg.eps_grid for mode in self.cfg.modes]
        engines = {eps: self.engine(eps) for eps in self.cfg.eps_grid}

        def work(item):
            eps, mode = item
            return engines[eps].norm_curve(self.cfg.curve_n, mode)

        results = self._parallel(items, work)
        return [results[item] for item in items]

    def dissipation(self):
        engines = {eps: self.engine(eps) for eps in self.cfg.eps_grid}

        def work(item):
            eps, mode = item
            return dissipation_time(engines[eps], mode, self.cfg.eta, self.cfg.n_cap)

        items = [(eps, mode) for eps in self.cfg.eps_grid for mode in self.cfg.modes]
        results = self._parallel(items, work)
        reports = []
        for eps in self.cfg.eps_grid:
            reports.append(DissipationReport(
                eps,
                results.get((eps, "noisy")),
                results.get((eps, "coarse")),
                self.cfg.eta, self.cfg.n_cap,
                "dense" if self._use_dense() else "lattice"))
        fits = {}
        if self.cfg.analysis.get("fits", True):
            for mode, attr in (("noisy", "tau_star"), ("coarse", "tau_tilde_star")):
                if mode not in self.cfg.modes:
                    continue
                pairs = [(r.eps, getattr(r, attr)) for r in reports
                         if getattr(r, attr) is not None]
                finite = [(e, t) for e, t in pairs if t.finite]
                fits[mode] = rate_fit(finite) if len(finite) >= 4 else None
        return reports, fits

    def pseudospectrum(self):
        rows = []
        for eps in self.cfg.eps_grid:
            eng = self._pseudo_engine(eps)
            for r in self.cfg.analysis.get("radii", [1.0]):
                d = pseudospectrum_distance(
                    eng, r, self.cfg.analysis.get("angle_samples", 128))
                rows.append((eps, float(r), d))
        return rows

    def _pseudo_engine(self, eps):
        if isinstance(self.map, SampledMap):
            u, grid, diag = self._dense_koopman()
            return DenseEngine(u, grid, self.kernel, eps, diag, source_map=self.map)
        k = self.cfg.grid_k or 16
        return DenseEngine.from_linear_map(self.map, self.kernel, eps, k)

    def bounds(self, correlation_sigma=None):
        dense_cutoff = self.cfg.grid_k if self.cfg.analysis.get("pseudospectrum") \
            else None
        return bound_report(
            self.map, self.kernel, self.cfg.eps_grid,
            correlation_sigma=correlation_sigma,
            s=self.cfg.analysis.get("s"), s_star=self.cfg.analysis.get("s_star"),
            dense_cutoff=dense_cutoff, eta=self.cfg.eta, n_cap=self.cfg.n_cap,
            angle_samples=self.cfg.analysis.get("angle_samples", 128))

    def correlations(self):
        if not self.cfg.correlations:
            raise ConfigurationError("no [correlations] section in config",
                                     field="correlations")
        spec = self.cfg.correlations
        eps0 = self.cfg.eps_grid[0]
        engine = self.engine(eps0)
        if isinstance(engine, DenseEngine):
            grid = engine.grid
        else:
            need = max(max(abs(v) for v in k)
                       for k in list(spec["f"]) + list(spec["h"]))
            grid = TruncatedGrid(self.map.d, max(need, 1))
        f = FourierVector.from_modes(grid, spec["f"])
        h = FourierVector.from_modes(grid, spec["h"])
        mode = "both" if spec.get("noisy", True) else "noiseless"
        series = correlation_series(engine, f, h, spec["n_max"], mode)
        fit = decay_fit(series, "noiseless")
        return series, fit

    # -- artifact writers ---------------------------------------------------

    def _header(self):
        return f"# torusdiss {__version__} config={self.cfg.config_hash}"

    def _path(self, name):
        return os.path.join(self.out, name)

    def write_csv(self, name, fieldnames, rows):
        path = self._path(name)
        with open(path, "w", newline="") as fh:
            fh.write(self._header() + "\n")
            w = csv.writer(fh)
            w.writerow(fieldnames)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.artifacts.append(path)
        return path

    def write_json(self, name, payload):
        path = self._path(name)
        payload = {"version": __version__, "config_hash": self.cfg.config_hash,
                   **payload}
        with open(path, "w") as fh:
            json.dump(_jsonable(payload), fh, indent=1, sort_keys=True)
            fh.write("\n")
        self.artifacts.append(path)
        return path

    def figure(self, name, render, *args, **kwargs):
        if not self.plots:
            return None
        from . import plotting
        path = self._path(name)
        getattr(plotting, render)(*args, path=path, **kwargs)
        self.artifacts.append(path)
        return path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(obj):
    from .analysis import TauResult
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, TauResult):
        return str(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return repr(obj)
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    return obj


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_norms(runner):
    curves = runner.norm_curves()
    rows = []
    for c in curves:
        for r in c.to_rows():
            rows.append([r["eps"], r["mode"], r["n"], r["norm"], r["log_norm"],
                         r["leak"]])
    runner.write_csv(f"norms_{runner.cfg.tag}.csv",
                     ["eps", "mode", "n", "norm", "log_norm", "leak"], rows)
    runner.figure(f"fig_{runner.cfg.tag}_norms.png", "plot_norm_curves",
                  curves, title=runner.cfg.tag)
    if "json" in runner.cfg.formats:
        runner.write_json(f"report_{runner.cfg.tag}.json",
                          {"curves": [c.to_rows() for c in curves]})
    print(f"wrote norm curves for {len(runner.cfg.eps_grid)} eps values")
    return 0


def _dissipation_rows(reports):
    rows = []
    for r in reports:
        rows.append([r.eps, str(r.tau_star) if r.tau_star else "",
                     str(r.tau_tilde_star) if r.tau_tilde_star else "",
                     r.eta, r.n_cap, r.engine])
    return rows


def cmd_dissipation(runner, write_report=True):
    reports, fits = runner.dissipation()
    runner.write_csv(f"dissipation_{runner.cfg.tag}.csv",
                     ["eps", "tau_star", "tau_tilde_star", "eta", "n_cap", "engine"],
                     _dissipation_rows(reports))
    runner.figure(f"fig_{runner.cfg.tag}_dissipation.png", "plot_dissipation",
                  reports, fits, title=runner.cfg.tag)
    if write_report and "json" in runner.cfg.formats:
        runner.write_json(f"report_{runner.cfg.tag}.json",
                          {"dissipation": reports, "fits": fits})
    _print_summary(runner, reports, fits, bounds=None)
    return 0, reports, fits


def cmd_pseudospectrum(runner):
    rows = runner.pseudospectrum()
    runner.write_csv(f"pseudospectrum_{runner.cfg.tag}.csv",
                     ["eps", "r", "d_eps_r"], [list(r) for r in rows])
    runner.figure(f"fig_{runner.cfg.tag}_pseudospectrum.png",
                  "plot_pseudospectrum", rows, title=runner.cfg.tag)
    if "json" in runner.cfg.formats:
        runner.write_json(f"report_{runner.cfg.tag}.json", {"pseudospectrum": rows})
    for eps, r, d in rows:
        print(f"eps={eps:.6g}  r={r:g}  d_eps(r)={d:.8g}")
    return 0


def cmd_correlations(runner):
    series, fit = runner.correlations()
    rows = []
    for n, c in series.values("noiseless"):
        rows.append([series.eps, "noiseless", n, abs(c), c.real, c.imag])
    if series.noisy is not None:
        for n, c in series.values("noisy"):
            rows.append([series.eps, "noisy", n, abs(c), c.real, c.imag])
    runner.write_csv(f"correlations_{runner.cfg.tag}.csv",
                     ["eps", "kind", "n", "abs", "re", "im"], rows)
    plot_rows = [("noiseless", series.values("noiseless"))]
    if series.noisy is not None:
        plot_rows.append((f"noisy eps={series.eps:g}", series.values("noisy")))
    runner.figure(f"fig_{runner.cfg.tag}_correlations.png", "plot_correlations",
                  plot_rows, fit, title=runner.cfg.tag)
    if "json" in runner.cfg.formats:
        runner.write_json(f"report_{runner.cfg.tag}.json",
                          {"correlations": {"series": rows, "fit": fit}})
    print(f"correlation decay fit: model={fit.model} sigma={fit.sigma} "
          f"beta={fit.beta} envelope={fit.envelope_rate}")
    return 0


def cmd_bounds(runner, write_report=True):
    sigma = None
    if runner.cfg.correlations:
        _, fit = runner.correlations()
        if fit.model != "degenerate" and fit.envelope_rate and \
                0 < fit.envelope_rate < 1:
            sigma = fit.envelope_rate
    rep = runner.bounds(correlation_sigma=sigma)
    rows = []
    for r in rep.rows:
        rows.append([r.eps, str(r.tau_star), str(r.tau_tilde_star),
                     r.gb_lower, r.gb_upper1, r.gb_upper2, r.d_eps_1,
                     r.noise_cap, r.weakmix_lower])
    runner.write_csv(f"bounds_{runner.cfg.tag}.csv",
                     ["eps", "tau_star", "tau_tilde_star", "gb_lower",
                      "gb_upper1", "gb_upper2", "d_eps_1", "noise_cap",
                      "weakmix_lower"], rows)
    runner.figure(f"fig_{runner.cfg.tag}_bounds.png", "plot_bounds", rep,
                  title=runner.cfg.tag)
    if write_report and "json" in runner.cfg.formats:
        runner.write_json(f"report_{runner.cfg.tag}.json", {"bounds": rep})
    if rep.violations:
        for eps, which, bound, tau in rep.violations:
            print(f"BOUND VIOLATION at eps={eps}: {which}={bound} vs tau={tau}")
        raise BoundViolation(f"{len(rep.violations)} bound violation(s), "
                             f"first at eps={rep.violations[0][0]}")
    print(f"bounds hold on all {len(rep.rows)} grid points")
    return 0, rep


def cmd_sweep(runner):
    curves = runner.norm_curves()
    rows = []
    for c in curves:
        for r in c.to_rows():
            rows.append([r["eps"], r["mode"], r["n"], r["norm"], r["log_norm"],
                         r["leak"]])
    runner.write_csv(f"norms_{runner.cfg.tag}.csv",
                     ["eps", "mode", "n", "norm", "log_norm", "leak"], rows)
    runner.figure(f"fig_{runner.cfg.tag}_norms.png", "plot_norm_curves",
                  curves, title=runner.cfg.tag)

    reports, fits = runner.dissipation()
    runner.write_csv(f"dissipation_{runner.cfg.tag}.csv",
                     ["eps", "tau_star", "tau_tilde_star", "eta", "n_cap", "engine"],
                     _dissipation_rows(reports))
    runner.figure(f"fig_{runner.cfg.tag}_dissipation.png", "plot_dissipation",
                  reports, fits, title=runner.cfg.tag)

    payload = {"dissipation": reports, "fits": fits,
               "curves": [c.to_rows() for c in curves]}

    corr_payload = None
    sigma = None
    if runner.cfg.correlations:
        series, cfit = runner.correlations()
        crows = []
        for n, c in series.values("noiseless"):
            crows.append([series.eps, "noiseless", n, abs(c), c.real, c.imag])
        if series.noisy is not None:
            for n, c in series.values("noisy"):
                crows.append([series.eps, "noisy", n, abs(c), c.real, c.imag])
        runner.write_csv(f"correlations_{runner.cfg.tag}.csv",
                         ["eps", "kind", "n", "abs", "re", "im"], crows)
        plot_rows = [("noiseless", series.values("noiseless"))]
        if series.noisy is not None:
            plot_rows.append((f"noisy eps={series.eps:g}", series.values("noisy")))
        runner.figure(f"fig_{runner.cfg.tag}_correlations.png",
                      "plot_correlations", plot_rows, cfit, title=runner.cfg.tag)
        corr_payload = {"fit": cfit}
        if cfit.model != "degenerate" and cfit.envelope_rate and \
                0 < cfit.envelope_rate < 1:
            sigma = cfit.envelope_rate
        payload["correlations"] = corr_payload

    violation = None
    bounds_rep = None
    if runner.cfg.analysis.get("bounds", True):
        try:
            _, bounds_rep = cmd_bounds(runner, write_report=False)
        except BoundViolation as exc:
            violation = exc
            bounds_rep = None
        if bounds_rep is not None:
            payload["bounds"] = bounds_rep

    if "json" in runner.cfg.formats:
        runner.write_json(f"report_{runner.cfg.tag}.json", payload)
    _print_summary(runner, reports, fits, bounds_rep)
    if violation is not None:
        raise violation
    return 0


def _print_summary(runner, reports, fits, bounds):
    brow = {r.eps: r for r in bounds.rows} if bounds else {}
    print(f"{'eps':>12} {'tau*':>12} {'tau~*':>12} {'gb_lower':>10} "
          f"{'gb_upper1':>12} {'model':>13}")
    fit = fits.get("noisy") if fits else None
    model = fit.model if fit else ""
    for r in reports:
        b = brow.get(r.eps)
        gl = f"{b.gb_lower:.4g}" if b and b.gb_lower is not None else "-"
        gu = f"{b.gb_upper1:.6g}" if b else "-"
        print(f"{r.eps:>12.6g} {str(r.tau_star):>12} "
              f"{str(r.tau_tilde_star) if r.tau_tilde_star else '-':>12} "
              f"{gl:>10} {gu:>12} {model:>13}")
    if fit:
        print(f"fitted {fit.model}: R*={fit.r_star:.6g} beta={fit.beta:.6g} "
              f"(R2 log={fit.r2_log:.4f} power={fit.r2_power:.4f})")


# ---------------------------------------------------------------------------
# selftest: closed-form oracle suite
# ---------------------------------------------------------------------------

def cmd_selftest():
    from .analysis import dissipation_time as dt
    from .fourier import DenseOperator, smallest_singular
    from .maps import entropy_report, sample_linear_map
    from .noise import AlphaStableKernel, moment_fourier_check, noise_norm

    checks = []

    def check(name, ok, detail=""):
        checks.append(ok)
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))

    dbl = LinearToralMap([[2]])
    g1 = AlphaStableKernel(1, 1.0)
    eng = LatticeOrbitEngine(dbl, g1, 0.1)
    worst = 0.0
    for n in range(1, 21):
        want = -(0.1 ** 1.0) * (2.0 ** n - 1) / (1 - 2.0 ** -1)
        worst = max(worst, abs(eng.noisy_log_norm(n) / want - 1))
    check("doubling-map noisy norms (closed form)", worst < 1e-10, f"rel={worst:.2e}")

    want = -(0.1) * (2.0 ** 5 + 1)
    got = eng.coarse_log_norm(5)
    check("doubling-map coarse norm (closed form)", abs(got / want - 1) < 1e-10)

    tr = TranslationMap([0.41421356237])
    g2 = AlphaStableKernel(1, 2.0)
    tau = dt(LatticeOrbitEngine(tr, g2, 0.3), "noisy", n_cap=10 ** 6)
    check("translation tau* = floor(eps^-alpha)+1",
          tau.finite and tau.n == math.floor(0.3 ** -2.0) + 1, str(tau))

    cat = LinearToralMap([[2, 1], [1, 1]])
    gc = AlphaStableKernel(2, 2.0)
    ec = LatticeOrbitEngine(cat, gc, 0.1)
    check("cat-map ||T_eps|| = ||G_eps|| (automorphism identity)",
          abs(ec.noisy_log_norm(1) - (-0.1 ** 2)) < 1e-15)

    check("noise norm exact for Q=I", noise_norm(gc, 0.2) == math.exp(-0.2 ** 2))

    import numpy as _np
    rep = moment_fourier_check(g2, 2.0, [(x,) for x in _np.linspace(-2, 2, 101) if x])
    check("moment-vs-symbol inequality (Gaussian)", rep["holds"])

    er = entropy_report(cat)
    lam = (3 + math.sqrt(5)) / 2
    check("cat-map entropy h = ln lambda",
          abs(er.h - math.log(lam)) < 1e-10 and er.ergodic and
          abs(er.h_hat - math.log(lam) / 2) < 1e-10)

    t = DenseOperator(TruncatedGrid(1, 1), [[0, 1], [0, 0]])
    s = smallest_singular(t, 1.0)
    want = math.sqrt((3 - math.sqrt(5)) / 2)
    check("sigma_min of nilpotent 2x2 (closed form)", abs(s - want) < 1e-12)

    smap = sample_linear_map(cat, 32)
    grid = TruncatedGrid(2, 4)
    op, diag = koopman_assembly(smap, grid)
    ok = diag["zero_mode_max"] < 1e-12
    for j, k in enumerate(grid.modes):
        ak = cat.mode_action(k)
        col = op.entries[:, j].copy()
        if grid.contains(ak):
            i = grid.index[ak]
            ok = ok and abs(col[i] - 1.0) < 1e-10
            col[i] = 0
        ok = ok and float(np.abs(col).max()) < 1e-10
    check("Galerkin cat map reproduces the mode permutation", ok)

    failures = checks.count(False)
    print(f"selftest: {len(checks) - failures}/{len(checks)} passed")
    return 0 if failures == 0 else 3
