"""Experiment configuration: flat INI-style key/value files with sections.

Sweeps are meant to be config-diffable, so there are no positional knobs
beyond the subcommand and the config path.  Example:

    [map]
    kind = linear
    matrix = 2 1 ; 1 1

    [kernel]
    kind = alpha_stable
    alpha = 2.0
    q = identity

    [epsilon]
    start = 1e-2
    stop = 1e-6
    count = 9

    [run]
    modes = noisy coarse
    eta = 0.36787944117144233
    n_cap = 1000000
    engine = auto
    grid_k = 16
    sample_n = 64
    curve_n = 12
    jobs = 0              ; 0 = logical cores

    [analysis]
    bounds = true
    pseudospectrum = false
    radii = 1.0
    fits = true

    [correlations]
    f = (1,0):1 (-1,0):1
    h = (1,0):1 (-1,0):1
    n_max = 15
    noisy = true

    [output]
    tag = catmap
    formats = csv json
    plots = true
"""

import configparser
import hashlib
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .maps import LinearToralMap, TranslationMap, perturbed_cat_map
from .noise import AlphaStableKernel, CustomSymbolKernel


@dataclass
class ExperimentConfig:
    map_spec: dict
    kernel_spec: dict
    eps_grid: list
    modes: tuple = ("noisy", "coarse")
    eta: float = math.exp(-1.0)
    n_cap: int = 10 ** 6
    engine: str = "auto"
    grid_k: int | None = None
    sample_n: int | None = None
    curve_n: int = 12
    jobs: int = 0
    koopman_cache: str | None = None
    analysis: dict = field(default_factory=dict)
    correlations: dict | None = None
    tag: str = "run"
    formats: tuple = ("csv", "json")
    plots: bool = True
    source_text: str = ""

    @property
    def config_hash(self):
        return hashlib.sha256(self.source_text.encode()).hexdigest()[:12]


def _parse_matrix(text, fieldname):
    try:
        rows = [[int(x) for x in row.split()] for row in text.split(";")]
    except ValueError as exc:
        raise ConfigurationError(f"matrix entries must be integers: {exc}",
                                 field=fieldname)
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ConfigurationError("matrix must be square", field=fieldname)
    return rows


def _parse_qform(text, d, fieldname):
    text = text.strip().lower()
    if text in ("identity", "i", ""):
        return None
    rows = [[float(x) for x in row.split()] for row in text.split(";")]
    if len(rows) != d or any(len(r) != d for r in rows):
        raise ConfigurationError(f"Q must be {d}x{d}", field=fieldname)
    return rows


_OBS_TOKEN = re.compile(r"\(([^)]*)\)\s*:\s*([^\s]+)")


def parse_observable(text, fieldname):
    """Observable spec '(k1,k2):coeff (k1,k2):coeff ...' -> {mode: coeff}."""
    entries = {}
    matched = False
    for m in _OBS_TOKEN.finditer(text):
        matched = True
        try:
            k = tuple(int(x) for x in m.group(1).split(","))
            entries[k] = complex(m.group(2))
        except ValueError as exc:
            raise ConfigurationError(f"bad observable term {m.group(0)!r}: {exc}",
                                     field=fieldname)
    if not matched:
        raise ConfigurationError("no observable terms found", field=fieldname)
    return entries


def _bool(section, key, default):
    raw = section.get(key)
    if raw is None:
        return default
    raw = raw.strip().lower()
    if raw in ("1", "true", "yes", "on"):
        return True
    if raw in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"expected boolean, got {raw!r}",
                             field=f"{section.name}.{key}")


def load_config(path):
    if not os.path.exists(path):
        raise ConfigurationError(f"config file not found: {path}", field="config")
    with open(path) as fh:
        text = fh.read()
    # ';' separates matrix rows, so only '#' introduces inline comments;
    # full-line ';' comments still parse.
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(str(exc), field="config")
    return parse_config(parser, text)


def parse_config(parser, source_text=""):
    if "map" not in parser:
        raise ConfigurationError("missing [map] section", field="map")
    if "kernel" not in parser:
        raise ConfigurationError("missing [kernel] section", field="kernel")
    if "epsilon" not in parser:
        raise ConfigurationError("missing [epsilon] section", field="epsilon")

    msec = parser["map"]
    kind = msec.get("kind", "").strip()
    if kind == "linear":
        map_spec = {"kind": kind,
                    "matrix": _parse_matrix(msec.get("matrix", ""), "map.matrix")}
    elif kind == "translation":
        try:
            theta = [float(x) for x in msec.get("theta", "").split()]
        except ValueError as exc:
            raise ConfigurationError(f"bad theta: {exc}", field="map.theta")
        if not theta:
            raise ConfigurationError("translation needs a theta vector", field="map.theta")
        map_spec = {"kind": kind, "theta": theta}
    elif kind == "perturbed_cat":
        map_spec = {"kind": kind,
                    "matrix": _parse_matrix(msec.get("matrix", "2 1 ; 1 1"), "map.matrix"),
                    "delta": msec.getfloat("delta", 0.01),
                    "samples": msec.getint("samples", 64)}
    else:
        raise ConfigurationError(f"unknown map kind {kind!r} "
                                 "(linear | translation | perturbed_cat)", field="map.kind")

    ksec = parser["kernel"]
    kkind = ksec.get("kind", "alpha_stable").strip()
    d = _map_dimension(map_spec)
    if kkind == "alpha_stable":
        try:
            alpha = float(ksec.get("alpha", "2.0"))
        except ValueError as exc:
            raise ConfigurationError(f"bad alpha: {exc}", field="kernel.alpha")
        kernel_spec = {"kind": kkind, "alpha": alpha,
                       "q": _parse_qform(ksec.get("q", "identity"), d, "kernel.q")}
    elif kkind == "custom":
        table = ksec.get("table", "").strip()
        if not table:
            raise ConfigurationError("custom kernel needs a table path", field="kernel.table")
        kernel_spec = {"kind": kkind, "table": table,
                       "envelope_rate": ksec.getfloat("envelope_rate", fallback=None)}
    else:
        raise ConfigurationError(f"unknown kernel kind {kkind!r}", field="kernel.kind")

    esec = parser["epsilon"]
    if esec.get("values"):
        try:
            eps_grid = [float(x) for x in esec.get("values").split()]
        except ValueError as exc:
            raise ConfigurationError(f"bad epsilon values: {exc}", field="epsilon.values")
    else:
        try:
            start = float(esec.get("start"))
            stop = float(esec.get("stop"))
            count = int(esec.get("count"))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"epsilon grid needs start/stop/count: {exc}",
                                     field="epsilon")
        if count < 1:
            raise ConfigurationError("count must be >= 1", field="epsilon.count")
        eps_grid = [float(v) for v in np.geomspace(start, stop, count)]
    if any(e <= 0 for e in eps_grid):
        raise ConfigurationError("epsilon values must be positive", field="epsilon")
    if any(eps_grid[i] <= eps_grid[i + 1] for i in range(len(eps_grid) - 1)):
        raise ConfigurationError("epsilon grid must be strictly decreasing",
                                 field="epsilon")

    rsec = parser["run"] if "run" in parser else {}
    modes_raw = (rsec.get("modes", "noisy coarse") if rsec else "noisy coarse").split()
    for m in modes_raw:
        if m not in ("noisy", "coarse"):
            raise ConfigurationError(f"unknown mode {m!r}", field="run.modes")
    cfg = ExperimentConfig(
        map_spec=map_spec,
        kernel_spec=kernel_spec,
        eps_grid=eps_grid,
        modes=tuple(modes_raw),
        eta=float(rsec.get("eta", math.exp(-1.0)) if rsec else math.exp(-1.0)),
        n_cap=int(rsec.get("n_cap", 10 ** 6) if rsec else 10 ** 6),
        engine=(rsec.get("engine", "auto") if rsec else "auto").strip(),
        grid_k=int(rsec["grid_k"]) if rsec and rsec.get("grid_k") else None,
        sample_n=int(rsec["sample_n"]) if rsec and rsec.get("sample_n") else None,
        curve_n=int(rsec.get("curve_n", 12) if rsec else 12),
        jobs=int(rsec.get("jobs", 0) if rsec else 0),
        koopman_cache=(rsec.get("koopman_cache") or None) if rsec else None,
        source_text=source_text,
    )
    if not 0 < cfg.eta < 1:
        raise ConfigurationError("eta must lie in (0,1)", field="run.eta")
    if cfg.engine not in ("auto", "lattice", "dense"):
        raise ConfigurationError(f"unknown engine {cfg.engine!r}", field="run.engine")
    if cfg.grid_k is not None and cfg.grid_k < 1:
        raise ConfigurationError("grid_k must be >= 1", field="run.grid_k")
    if map_spec["kind"] == "perturbed_cat" or cfg.engine == "dense":
        if cfg.grid_k is None:
            raise ConfigurationError("dense engine requires grid_k", field="run.grid_k")
        n = map_spec.get("samples", cfg.sample_n)
        if n is not None and n < 4 * cfg.grid_k:
            raise ConfigurationError(
                f"anti-aliasing requires N >= 4K (N={n}, K={cfg.grid_k})",
                field="run.sample_n")

    asec = parser["analysis"] if "analysis" in parser else None
    analysis = {
        "bounds": _bool(asec, "bounds", True) if asec else True,
        "pseudospectrum": _bool(asec, "pseudospectrum", False) if asec else False,
        "radii": [float(x) for x in (asec.get("radii", "1.0") if asec else "1.0").split()],
        "fits": _bool(asec, "fits", True) if asec else True,
        "angle_samples": int(asec.get("angle_samples", 128)) if asec else 128,
        "s": float(asec["s"]) if asec and asec.get("s") else None,
        "s_star": float(asec["s_star"]) if asec and asec.get("s_star") else None,
        "delta_supexp": float(asec.get("delta_supexp", 0.5)) if asec else 0.5,
    }
    if analysis["angle_samples"] < 64:
        raise ConfigurationError("angle_samples must be >= 64",
                                 field="analysis.angle_samples")
    cfg.analysis = analysis

    if "correlations" in parser:
        csec = parser["correlations"]
        cfg.correlations = {
            "f": parse_observable(csec.get("f", ""), "correlations.f"),
            "h": parse_observable(csec.get("h", ""), "correlations.h"),
            "n_max": csec.getint("n_max", 15),
            "noisy": _bool(csec, "noisy", True),
        }

    osec = parser["output"] if "output" in parser else None
    if osec:
        cfg.tag = osec.get("tag", "run").strip()
        cfg.formats = tuple((osec.get("formats", "csv json")).split())
        cfg.plots = _bool(osec, "plots", True)
    for f in cfg.formats:
        if f not in ("csv", "json"):
            raise ConfigurationError(f"unknown format {f!r}", field="output.formats")
    return cfg


def _map_dimension(map_spec):
    if map_spec["kind"] == "translation":
        return len(map_spec["theta"])
    return len(map_spec["matrix"])


def build_map(cfg):
    spec = cfg.map_spec
    if spec["kind"] == "linear":
        return LinearToralMap(spec["matrix"])
    if spec["kind"] == "translation":
        return TranslationMap(spec["theta"])
    if spec["kind"] == "perturbed_cat":
        return perturbed_cat_map(spec["matrix"], spec["delta"], spec["samples"])
    raise ConfigurationError(f"unknown map kind {spec['kind']!r}", field="map.kind")


def build_kernel(cfg):
    spec = cfg.kernel_spec
    d = _map_dimension(cfg.map_spec)
    if spec["kind"] == "alpha_stable":
        return AlphaStableKernel(d, spec["alpha"], spec["q"])
    table = np.loadtxt(spec["table"], delimiter=",")
    radii, values = table[:, 0], table[:, 1]
    rate = spec.get("envelope_rate")
    envelope = (lambda r: math.exp(-rate * r)) if rate else None
    return CustomSymbolKernel(d, radii, values, envelope)
