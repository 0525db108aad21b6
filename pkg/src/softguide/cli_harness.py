"""
Batch front-end: ``softguide <experiment> --config <path> [--force] [--workers N] [--out DIR]``.

A run is keyed by the SHA-256 of its canonical configuration (sorted-key
JSON of every physical and numeric field; the output directory is not part
of the key). Results live in ``$SOFTGUIDE_CACHE_DIR/<hash>/`` (default
``~/.cache/softguide``) and are copied to ``--out`` when given. Every file
is written to a temporary name and renamed into place.

Exit codes: 0 success, 2 invalid input, 3 eigensolver non-convergence,
4 bracket failure or inconclusive count, 5 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import analysis as an
from . import transverse1d as t1d
from .eigensolve import DEFAULT_SEED, lowest_k
from .errors import ConfigError, SoftGuideError
from .geometry import build_bookcover
from .operator2d import assemble, grid_for_curve, sample_potential, sgw1_bytes

EXPERIMENTS = ("solve1d", "solve2d", "critical", "sweep_beta", "sweep_width", "strong_ess", "dirichlet_strip",
               "sgamma")
EXIT_IO = 5

SCHEMAS = {
    "solve1d": ("index", "eigenvalue", "residual"),
    "solve2d": ("bc", "index", "eigenvalue", "residual"),
    "critical": ("a_over_rho", "exponent", "critical_depth", "sqrt_depth_times_A", "dn_gap"),
    "beta_sweep": ("beta", "nu", "count_lower", "count_upper", "variational_n_nu"),
    "width_sweep": ("a", "a_over_rho", "threshold", "count_lower", "count_upper", "lowest_dirichlet",
                    "lowest_neumann"),
    "strong_ess": ("lambda", "energy", "delta", "splitting"),
    "dirichlet_strip": ("h", "eigenvalue", "dimension", "residual"),
    "sgamma": ("index", "eigenvalue", "exact"),
}


# ---------------------------------------------------------------- configuration


@dataclass
class ExperimentConfig:
    experiment: str
    rho: float = 0.25
    beta: float = 0.0
    tail_length: float = 5.0
    kind: str = "poly_well"
    exponent: int = 2
    a: float = 0.1
    depth: float = 225.0
    h: float = 0.0125
    pad: Optional[float] = None
    k: int = 4
    tol: float = 1e-6
    seed: int = DEFAULT_SEED
    n_list: list = field(default_factory=lambda: list(t1d.DEFAULT_N_LIST))
    L: Optional[float] = None
    nu: Optional[float] = None
    nu_fraction: Optional[float] = None
    beta_list: list = field(default_factory=lambda: [0.4, 0.2, 0.1])
    tail_list: Optional[list] = None
    a_list: list = field(default_factory=list)
    ratios: list = field(default_factory=lambda: [0.2, 0.3, 0.4, 0.5, 0.6])
    exponents: list = field(default_factory=lambda: [2, 8])
    strength_guess: float = 0.6
    rtol: float = 2e-3
    lambda_list: list = field(default_factory=lambda: [50.0, 100.0, 200.0, 400.0])
    h_list: list = field(default_factory=lambda: [0.01, 0.005, 0.0025])
    out: Optional[str] = None

    # fields that do not change the computation
    NON_PHYSICAL = ("out",)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError({"<root>": "configuration must be a JSON object"})
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError({k: "unknown key" for k in unknown})
        if "experiment" not in data:
            raise ConfigError({"experiment": "missing"})
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError({"<root>": f"invalid JSON: {exc}"}) from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        err = {}

        def num(name, ok, msg):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not ok(v):
                err[name] = msg

        if self.experiment not in EXPERIMENTS:
            err["experiment"] = f"must be one of {', '.join(EXPERIMENTS)}"
        if self.kind not in t1d.KINDS:
            err["kind"] = f"must be one of {', '.join(t1d.KINDS)}"
        num("rho", lambda v: v > 0, "must be positive")
        num("beta", lambda v: 0 <= v < 0.5 * math.pi, "must lie in [0, pi/2)")
        num("tail_length", lambda v: v > 0, "must be positive")
        num("depth", lambda v: v >= 0, "must be nonnegative")
        num("h", lambda v: v > 0, "must be positive")
        num("tol", lambda v: v > 0, "must be positive")
        num("rtol", lambda v: v > 0, "must be positive")
        num("strength_guess", lambda v: v > 0, "must be positive")
        if self.kind != "delta_point":
            num("a", lambda v: v > 0, "must be positive")
        if not isinstance(self.exponent, int) or self.exponent < 2 or self.exponent % 2:
            err["exponent"] = "must be an even integer >= 2"
        if not isinstance(self.k, int) or self.k < 1:
            err["k"] = "must be a positive integer"
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            err["seed"] = "must be an integer"
        if self.pad is not None:
            num("pad", lambda v: v >= 0, "must be nonnegative")
        if self.L is not None:
            num("L", lambda v: v > 0, "must be positive")
        if self.nu is not None:
            num("nu", lambda v: v < 0, "must be negative")
        if self.nu_fraction is not None:
            num("nu_fraction", lambda v: 0 < v < 1, "must lie in (0, 1)")
        for name, ok, msg in (
            ("n_list", lambda v: isinstance(v, int) and v >= 200 and v % 2 == 0, "even integers >= 200"),
            ("beta_list", lambda v: isinstance(v, (int, float)) and 0 < v < 0.5 * math.pi, "values in (0, pi/2)"),
            ("a_list", lambda v: isinstance(v, (int, float)) and v > 0, "positive values"),
            ("ratios", lambda v: isinstance(v, (int, float)) and 0 < v < 1, "values in (0, 1)"),
            ("exponents", lambda v: isinstance(v, int) and v >= 2 and v % 2 == 0, "even integers >= 2"),
            ("lambda_list", lambda v: isinstance(v, (int, float)) and v >= 0, "nonnegative values"),
            ("h_list", lambda v: isinstance(v, (int, float)) and v > 0, "positive values"),
            ("tail_list", lambda v: isinstance(v, (int, float)) and v > 0, "positive values"),
        ):
            v = getattr(self, name)
            if v is None and name == "tail_list":
                continue
            if not isinstance(v, list) or not all(ok(x) for x in v):
                err[name] = f"must be a list of {msg}"
        if self.experiment == "sweep_beta" and (self.nu is None) == (self.nu_fraction is None):
            err["nu"] = "sweep_beta needs exactly one of nu, nu_fraction"
        if self.tail_list is not None and not err.get("tail_list") and len(self.tail_list) != len(self.beta_list):
            err["tail_list"] = "must match beta_list in length"
        if self.experiment == "sweep_width" and not self.a_list:
            err["a_list"] = "sweep_width needs a nonempty list"
        if self.kind == "delta_point" and self.experiment not in ("solve1d",):
            err["kind"] = "delta_point is only available for solve1d"
        if self.kind != "delta_point" and not err.get("a") and not err.get("rho") \
                and self.experiment in ("solve2d", "sweep_beta", "strong_ess", "dirichlet_strip") \
                and not self.a < self.rho:
            err["a"] = "must be below rho"
        if err:
            raise ConfigError(err)

    def physical(self) -> dict:
        d = dataclasses.asdict(self)
        for k in self.NON_PHYSICAL:
            d.pop(k, None)
        return d

    def canonical(self) -> str:
        return json.dumps(self.physical(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def profile(self) -> t1d.TransverseProfile:
        if self.kind == "delta_point":
            return t1d.delta_point(self.depth)
        if self.kind == "square_well":
            return t1d.square_well(self.a, self.depth)
        return t1d.poly_well(self.exponent, self.a, self.depth)

    def grid_spec(self) -> an.GridSpec:
        return an.GridSpec(h=self.h, pad=self.pad, tail_length=None, k=self.k, tol=self.tol, seed=self.seed)


@dataclass
class RunRecord:
    config_hash: str
    timestamp: str
    version: str
    files: list
    diagnostics: dict
    cache_hit: bool = False

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        d.pop("cache_hit")
        return json.dumps(d, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def atomic_write(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_bytes(rows, schema: str) -> bytes:
    cols = SCHEMAS[schema]
    lines = [",".join(cols)]
    for row in rows:
        if isinstance(row, dict):
            row = [row[c] for c in cols]
        if len(row) != len(cols):
            raise ValueError(f"row {row!r} does not match schema {schema} {cols}")
        lines.append(",".join(_fmt(v) for v in row))
    return ("\n".join(lines) + "\n").encode()


def emit_csv(rows, schema: str, path) -> Path:
    """Write ``rows`` under ``schema``: header row, 17 significant digits, LF endings."""
    return atomic_write(path, csv_bytes(rows, schema))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2, default=_json_default, allow_nan=True) + "\n").encode()


# ---------------------------------------------------------------- experiments


def _exp_solve1d(cfg: ExperimentConfig, workers: int):
    p = cfg.profile()
    if not p.regular:
        e = t1d.delta_ground(p.depth)
        return {"result.json": {"energy": e, "source": "delta_formula"},
                "eigenvalues.csv": ("solve1d", [(0, e, 0.0)])}, {"residual_max": 0.0}
    g = t1d.converged_single_well(p, cfg.n_list, cfg.L)
    sols = t1d.solve_single_well(p, g.L, max(cfg.n_list), cfg.k)
    rows = [(i, s.energy, s.residual) for i, s in enumerate(sols)]
    summary = {"energy": g.energy, "error_estimate": g.error, "eta": g.eta, "observed_order": g.order,
               "raw": list(g.raw), "L": g.L, "n_list": list(g.n_list), "source": "single_well"}
    return {"result.json": summary, "eigenvalues.csv": ("solve1d", rows)}, \
        {"residual_max": max(s.residual for s in sols)}


def _exp_solve2d(cfg: ExperimentConfig, workers: int):
    p = cfg.profile()
    c = build_bookcover(cfg.rho, cfg.beta, cfg.tail_length)
    thr = an.essential_threshold(p, cfg.rho, cfg.beta)
    pad = an.default_pad(p, thr.threshold) if cfg.pad is None else cfg.pad
    g = grid_for_curve(c, p.a, cfg.h, pad)
    f = sample_potential(c, p, g)
    thr_d, thr_n = an.channel_thresholds(c, p, f)
    margin = max(3.0 * abs(thr_d - thr_n), an.MIN_MARGIN)
    rows, res, files = [], {}, {}
    lowest = {}
    for bc in ("dirichlet", "neumann"):
        A = assemble(f, bc)
        r = lowest_k(A, cfg.k, tol=cfg.tol, seed=cfg.seed)
        rows += [(bc, i, e, rn) for i, (e, rn) in enumerate(zip(r.eigenvalues, r.residual_norms))]
        res[bc] = float(np.max(r.residual_norms))
        lowest[bc] = r.eigenvalues
        vec = A.to_grid(r.eigenvectors[:, 0])
        files[f"ground_{bc}.sgw1"] = sgw1_bytes(g, vec)
    files["potential.sgw1"] = sgw1_bytes(g, f.values)
    count_lower = int(np.sum(lowest["dirichlet"] < thr_d - margin))
    count_upper = int(np.sum(lowest["neumann"] < thr_d - margin))
    summary = {"threshold": thr.threshold, "threshold_source": thr.source, "threshold_dirichlet": thr_d,
               "threshold_neumann": thr_n, "margin": margin, "count_lower": count_lower,
               "count_upper": count_upper, "eigenvalues_dirichlet": lowest["dirichlet"],
               "eigenvalues_neumann": lowest["neumann"], "grid": dataclasses.asdict(g)}
    files.update({"result.json": summary, "eigenvalues.csv": ("solve2d", rows)})
    return files, {"residual_max": res, "dn_gap": float(lowest["dirichlet"][0] - lowest["neumann"][0])}


def _exp_critical(cfg: ExperimentConfig, workers: int):
    spec = an.GridSpec(h=cfg.h, pad=cfg.pad, k=1, tol=cfg.tol, seed=cfg.seed)
    out = an.critical_sweep(cfg.ratios, cfg.exponents, spec, a=cfg.a, tail_length=cfg.tail_length,
                            strength_guess=cfg.strength_guess, rtol=cfg.rtol, workers=workers)
    rows = [(r.a_over_rho, r.exponent, r.report.depth, r.report.strength, r.report.dn_gap) for r in out]
    summary = [{"a_over_rho": r.a_over_rho, "exponent": r.exponent, "critical_depth": r.report.depth,
                "band": list(r.report.band), "strength": r.report.strength,
                "strength_band": [an.dimensionless_strength(t1d.poly_well(r.exponent, cfg.a, 1.0), d)
                                  for d in r.report.band]} for r in out]
    return {"critical.csv": ("critical", rows), "result.json": summary}, \
        {"dn_gap": [r.report.dn_gap for r in out]}


def _sweep_nu(cfg: ExperimentConfig, p) -> float:
    if cfg.nu is not None:
        return cfg.nu
    er = an.essential_threshold(p, cfg.rho, 0.0).threshold
    ev = an.essential_threshold(p, cfg.rho, 1.0).threshold
    return er + cfg.nu_fraction * (ev - er)


def _exp_sweep_beta(cfg: ExperimentConfig, workers: int):
    p = cfg.profile()
    nu = _sweep_nu(cfg, p)
    spec = cfg.grid_spec()
    tails = cfg.tail_list if cfg.tail_list is not None else cfg.tail_length
    rep = an.closing_sweep(p, cfg.rho, cfg.beta_list, nu, spec, tail_length=tails, workers=workers)
    rows = [(r.beta, r.nu, r.count_lower, r.count_upper, b.n_nu) for r, b in zip(rep.rows, rep.bounds)]
    summary = {"nu": nu, "fit_slope": rep.slope, "fit_intercept": rep.intercept,
               "rows": [{"beta": r.beta, "eigen_dirichlet": r.eigen_dirichlet, "eigen_neumann": r.eigen_neumann,
                         "nu_grid": r.nu_grid, "margin": r.margin} for r in rep.rows]}
    return {"beta_sweep.csv": ("beta_sweep", rows), "result.json": summary}, \
        {"residual_max": [r.residual_max for r in rep.rows]}


def _width_task(args):
    cfg, a = args
    p = dataclasses.replace(cfg.profile(), a=a)
    c = build_bookcover(cfg.rho, cfg.beta, cfg.tail_length)
    r = an.count_discrete(c, p, cfg.grid_spec())
    return (a, a / cfg.rho, r.nu, r.count_lower, r.count_upper, float(r.eigen_dirichlet[0]),
            float(r.eigen_neumann[0]))


def _exp_sweep_width(cfg: ExperimentConfig, workers: int):
    tasks = [(cfg, float(a)) for a in cfg.a_list]
    rows = _map(_width_task, tasks, workers)
    return {"width_sweep.csv": ("width_sweep", rows), "result.json": {"rows": rows}}, {}


def _exp_strong_ess(cfg: ExperimentConfig, workers: int):
    rows, slope = an.strong_ess_check(cfg.profile(), cfg.rho, cfg.lambda_list, n_list=cfg.n_list)
    table = [(r.lam, r.energy, r.delta, r.splitting) for r in rows]
    return {"strong_ess.csv": ("strong_ess", table), "result.json": {"log_delta_slope": slope}}, {}


def _exp_dirichlet_strip(cfg: ExperimentConfig, workers: int):
    c = build_bookcover(cfg.rho, cfg.beta, cfg.tail_length)
    rows = an.dirichlet_strip_study(c, cfg.profile(), cfg.h_list, tol=cfg.tol, seed=cfg.seed)
    table = [(r.h, r.eigenvalue, r.dimension, r.residual) for r in rows]
    ref = (math.pi / (2.0 * cfg.a)) ** 2
    summary = {"transverse_reference": ref, "eigenvalues": [r.eigenvalue for r in rows]}
    return {"dirichlet_strip.csv": ("dirichlet_strip", table), "result.json": summary}, {}


def _exp_sgamma(cfg: ExperimentConfig, workers: int):
    c = build_bookcover(cfg.rho, cfg.beta, cfg.tail_length)
    levels = an.sgamma_spectrum(c)
    exact = t1d.square_well_levels(c.s0, 0.25 / c.arc_radius**2)
    rows = [(i, e, x) for i, (e, x) in enumerate(zip(levels, exact))]
    return {"sgamma.csv": ("sgamma", rows), "result.json": {"levels": levels, "exact": exact}}, {}


def _map(fn, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


DISPATCH = {
    "solve1d": _exp_solve1d,
    "solve2d": _exp_solve2d,
    "critical": _exp_critical,
    "sweep_beta": _exp_sweep_beta,
    "sweep_width": _exp_sweep_width,
    "strong_ess": _exp_strong_ess,
    "dirichlet_strip": _exp_dirichlet_strip,
    "sgamma": _exp_sgamma,
}


# ---------------------------------------------------------------- run / cache


def cache_root() -> Path:
    env = os.environ.get("SOFTGUIDE_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "softguide"


def _encode(payload) -> bytes:
    if isinstance(payload, bytes):
        return payload
    if isinstance(payload, tuple) and len(payload) == 2 and payload[0] in SCHEMAS:
        return csv_bytes(payload[1], payload[0])
    return json_bytes(payload)


def _export(entry: Path, files, out: Optional[str]):
    if out is None:
        return
    dest = Path(out)
    dest.mkdir(parents=True, exist_ok=True)
    for name in files:
        atomic_write(dest / name, (entry / name).read_bytes())


def run(cfg: ExperimentConfig, force: bool = False, workers: int = 1, out: Optional[str] = None) -> RunRecord:
    """Execute (or fetch from cache) the experiment named in ``cfg``."""
    cfg.validate()
    out = out if out is not None else cfg.out
    digest = cfg.digest()
    entry = cache_root() / digest
    record_path = entry / "record.json"
    if record_path.exists() and not force:
        d = json.loads(record_path.read_text())
        rec = RunRecord(**d, cache_hit=True)
        if all((entry / f).exists() for f in rec.files):
            _export(entry, rec.files, out)
            return rec
    files, diag = DISPATCH[cfg.experiment](cfg, workers)
    names = []
    for name in sorted(files):
        atomic_write(entry / name, _encode(files[name]))
        names.append(name)
    atomic_write(entry / "config.json", (cfg.canonical() + "\n").encode())
    rec = RunRecord(digest, time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()), __version__, names,
                    json.loads(json_bytes(diag)))
    atomic_write(record_path, rec.to_json().encode())
    _export(entry, names, out)
    return rec


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="softguide", description="Spectra of soft waveguides over bookcover curves.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="JSON configuration file")
    ap.add_argument("--force", action="store_true", help="recompute even on a cache hit")
    ap.add_argument("--workers", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--out", default=None, help="directory receiving copies of the result files")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError({"workers": "must be >= 1"})
        cfg = ExperimentConfig.from_json(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError({"experiment": f"config names {cfg.experiment!r}, command line {args.experiment!r}"})
        rec = run(cfg, force=args.force, workers=args.workers, out=args.out)
    except SoftGuideError as exc:
        print(f"softguide: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"softguide: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    status = "cache hit" if rec.cache_hit else "computed"
    print(f"{cfg.experiment} {rec.config_hash[:12]} {status}: {', '.join(rec.files)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
