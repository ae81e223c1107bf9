"""Figure rendering for the report path.

Each CSV artifact gets a companion PNG next to it; rendering is headless
(Agg) and deterministic in content.  Figures are diagnostics, the CSV/JSON
files remain the machine-readable contract.
"""

import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_norm_curves(curves, path, title=""):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    styles = {"noisy": "-", "coarse": "--"}
    for curve in curves:
        ns = [n for n, _, _ in curve.entries]
        vs = [max(v, 1e-300) for _, v, _ in curve.entries]
        ax.semilogy(ns, vs, styles.get(curve.mode, "-"), marker=".",
                    label=f"eps={curve.eps:.3g} {curve.mode}")
    ax.axhline(math.exp(-1), color="gray", lw=0.8, ls=":", label="eta = 1/e")
    ax.set_xlabel("n")
    ax.set_ylabel("propagator norm")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7, ncol=2)
    return _save(fig, path)


def plot_dissipation(reports, fits, path, title=""):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for mode, attr, color in (("noisy", "tau_star", "C0"),
                              ("coarse", "tau_tilde_star", "C1")):
        pts = [(r.eps, getattr(r, attr).n) for r in reports
               if getattr(r, attr) is not None and getattr(r, attr).finite]
        if not pts:
            continue
        x = np.log(1.0 / np.array([e for e, _ in pts]))
        y = np.array([t for _, t in pts], dtype=float)
        ax.plot(x, y, "o", color=color, label=f"tau ({mode})")
        fit = fits.get(mode)
        if fit and fit.model == "logarithmic":
            xs = np.linspace(x.min(), x.max(), 50)
            ax.plot(xs, fit.r_star * xs + fit.intercept, "-", color=color, lw=1,
                    label=f"{mode}: R*={fit.r_star:.3f}")
        elif fit and fit.model == "power":
            xs = np.linspace(x.min(), x.max(), 50)
            ax.plot(xs, fit.coefficient * np.exp(fit.beta * xs), "-", color=color,
                    lw=1, label=f"{mode}: beta={fit.beta:.3f}")
            ax.set_yscale("log")
    ax.set_xlabel("ln(1/eps)")
    ax.set_ylabel("dissipation time")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_bounds(report, path, title=""):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    eps = [r.eps for r in report.rows]
    tau = [r.tau_star.n if r.tau_star.finite else np.nan for r in report.rows]
    ax.semilogx(eps, tau, "ko-", label="tau*")
    if any(r.gb_lower is not None for r in report.rows):
        ax.semilogx(eps, [r.gb_lower or np.nan for r in report.rows],
                    "v-", color="C0", label="(1-1/e)/d_eps(1)")
    ax.semilogx(eps, [r.gb_upper1 for r in report.rows],
                "^-", color="C3", label="1/|ln||G||| + 1")
    if any(r.gb_upper2 is not None for r in report.rows):
        ax.semilogx(eps, [r.gb_upper2 or np.nan for r in report.rows],
                    "^--", color="C4", label="inf_r ln(e/d)/|ln r|")
    ax.set_yscale("log")
    ax.invert_xaxis()
    ax.set_xlabel("eps")
    ax.set_ylabel("time steps")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_correlations(rows, fit, path, title=""):
    """rows: list of (eps or None, [(n, |C|), ...]) pairs."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for label, series in rows:
        ns = [n for n, _ in series if n >= 1]
        vs = [max(abs(c), 1e-300) for n, c in series if n >= 1]
        ax.semilogy(ns, vs, "o-", ms=3, label=label)
    if fit is not None and fit.model != "degenerate" and fit.sigma:
        ns = np.array(sorted({n for _, s in rows for n, _ in s if n >= 1}))
        amp = fit.amplitudes.get("exponential", 1.0)
        ax.semilogy(ns, amp * fit.sigma ** ns, "--", color="gray",
                    label=f"exp fit sigma={fit.sigma:.3g}")
    ax.set_xlabel("n")
    ax.set_ylabel("|C(n)|")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_pseudospectrum(rows, path, title=""):
    """rows: list of (eps, r, d_eps(r))."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    radii = sorted({r for _, r, _ in rows})
    for r in radii:
        pts = sorted((e, d) for e, rr, d in rows if rr == r)
        ax.loglog([e for e, _ in pts], [d for _, d in pts], "o-",
                  label=f"r = {r:g}")
    ax.set_xlabel("eps")
    ax.set_ylabel("d_eps(r)")
    ax.invert_xaxis()
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)
