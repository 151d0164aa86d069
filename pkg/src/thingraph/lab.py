"""Convergence experiments: resolvent and spectral distances over an
epsilon sweep, rate fits and report files.

A sweep writes into its output directory:

``report.csv``
    one row per ``(eps, z)`` with the per-eps diagnostics repeated on each
    row; the column order is fixed by :data:`REPORT_COLUMNS`.
``spectra_<eps>.csv``
    thin-domain and limiting eigenvalues in the spectral window.
``rates.json``
    rate fits under both models, the ``n_w`` doubling check and provenance
    (config hash, package version, wall-clock stamp).
``plots/*.svg``
    only when ``plots`` is set in the config.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from . import __version__
from .boundary import calculus, krein_resolvent, m_function, perp_block_inverse_norm, steklov_spectrum, \
    vertex_projection
from .effective import EffectiveOperator, resolvent_apply, spectrum, theta_adjoint, theta_embed
from .graph_model import CORPUS, GraphError, corpus_graph, load_graph
from .numerics import (DEFAULT_SEED, DEFAULT_TOLERANCES, NormEstimate, NumericalError, OpAction, SpectrumHit,
                       Tolerances, opnorm_power, sym_eigs_smallest)
from .thin_mesh import assemble_neumann, build_mesh, zaremba_inverse_norm

logger = logging.getLogger(__name__)

DEFAULT_Z = (-1.0, -4.0, 2 + 1j, 2 - 1j, -1 + 0.5j)
DEFAULT_SIGMA = 0.5
MODELS = ("eps-log", "eps")
KREIN_GATE = 1e-8
PROXY_NW = 2

REPORT_COLUMNS = (
    "eps", "n_w", "h", "n_cells", "n_trace", "z_re", "z_im", "status",
    "resolvent_distance", "opnorm_iterations", "intermediate_distance",
    "hausdorff", "thin_count", "effective_count",
    "steklov_lambda2", "zaremba_inverse_norm", "perp_block_inverse_norm",
    "krein_residual", "herglotz_floor", "additivity_defect", "error",
)


class ConfigError(ValueError):
    """Invalid sweep configuration."""


# --- distances ---------------------------------------------------------------------

def resolvent_distance(mesh, z: complex, op: Optional[EffectiveOperator] = None,
                       tol: float = DEFAULT_TOLERANCES.opnorm, seed: int = DEFAULT_SEED) -> NormEstimate:
    """``||(A_eps - z)^{-1} - Theta (A_hom - z)^{-1} Theta^*||`` by power iteration.

    Both maps act on grid functions; the ``h^2`` weight is a constant
    multiple of the Euclidean product, so Euclidean norms give the same
    operator norm.
    """
    calc = calculus(mesh)
    op = EffectiveOperator.for_mesh(mesh) if op is None else op
    z = complex(z)

    def diff(x, w):
        return calc.neumann_resolvent(w, x) - theta_embed(mesh, resolvent_apply(op, w, theta_adjoint(mesh, x)))

    T = OpAction(mesh.n_cells, lambda x: diff(x, z), lambda y: diff(y, z.conjugate()))
    return opnorm_power(T, tol, seed=seed)


def intermediate_distance(mesh, z: complex, tol: float = DEFAULT_TOLERANCES.opnorm,
                          seed: int = DEFAULT_SEED) -> NormEstimate:
    """Distance from ``(A_eps - z)^{-1}`` to the resolvent with plate conditions
    ``P_perp trace = 0``, ``P (normal derivative) = 0`` (Krein form, ``beta0 = P_perp``, ``beta1 = P``)."""
    calc = calculus(mesh)
    P = vertex_projection(mesh).array
    b0, b1 = np.eye(P.shape[0]) - P, P
    z = complex(z)
    Ms = {w: calc.m_function(w) for w in {z, z.conjugate()}}

    def diff(x, w):
        return calc.neumann_resolvent(w, x) - krein_resolvent(mesh, w, b0, b1, x, M=Ms[w])

    T = OpAction(mesh.n_cells, lambda x: diff(x, z), lambda y: diff(y, z.conjugate()))
    return opnorm_power(T, tol, seed=seed)


def in_window(vals, window, slack: float = 1e-9):
    """Entries of ``vals`` inside ``window``, widened by ``slack`` relative to its size."""
    lo, hi = window
    d = slack * max(1.0, abs(lo), abs(hi))
    vals = np.asarray(vals, dtype=float)
    return vals[(vals >= lo - d) & (vals <= hi + d)]


def hausdorff_spectra(a, b, window) -> float:
    """Hausdorff distance of two spectra seen through the window ``[lo, hi]``.

    Points of each list inside the window are matched against the whole
    other list, so an eigenvalue just outside the window still counts as a
    partner. For lists already restricted to the window this is the plain
    Hausdorff distance of finite sets. Returns ``inf`` when one side has
    points in the window and the other list is empty.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    ina, inb = in_window(a, window), in_window(b, window)
    if ina.size == 0 and inb.size == 0:
        return 0.0
    if (ina.size and b.size == 0) or (inb.size and a.size == 0):
        return math.inf

    def one_sided(pts, other):
        return max((float(np.min(np.abs(other - p))) for p in pts), default=0.0)

    return max(one_sided(ina, b), one_sided(inb, a))


# --- rate fits ---------------------------------------------------------------------

@dataclass
class RateFit:
    model: str
    slope: float
    intercept: float
    residual: float            # RMS of log-residuals
    stderr: float
    ci95: tuple
    n: int


def model_values(eps, model: str) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if model == "eps":
        return eps
    if model == "eps-log":
        return eps / np.abs(np.log(eps))
    raise ValueError(f"unknown model '{model}' (choose from {MODELS})")


def fit_rate(eps, errors=None, model: str = "eps-log") -> RateFit:
    """Least-squares slope of ``log e`` against ``log model(eps)``.

    ``eps`` may also be a :class:`ConvergenceReport`, in which case the
    errors are its per-eps maxima over admissible ``z``.
    """
    if isinstance(eps, ConvergenceReport):
        eps, errors = eps.errors()
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if eps.shape != errors.shape or eps.size < 3:
        raise ValueError("need at least 3 (eps, error) pairs")
    if not np.all(np.isfinite(errors)) or np.any(errors <= 0) or np.any((eps <= 0) | (eps >= 1)):
        raise ValueError("errors must be finite and positive, eps in (0, 1)")
    x, y = np.log(model_values(eps, model)), np.log(errors)
    r = stats.linregress(x, y)
    res = y - (r.intercept + r.slope * x)
    dof = eps.size - 2
    half = float(stats.t.ppf(0.975, dof) * r.stderr) if dof > 0 else math.inf
    return RateFit(model, float(r.slope), float(r.intercept), float(np.sqrt(np.mean(res ** 2))),
                   float(r.stderr), (float(r.slope) - half, float(r.slope) + half), int(eps.size))


# --- configuration -----------------------------------------------------------------

def _parse_z(v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, (int, float, complex)):
        return complex(v)
    if isinstance(v, str):
        return complex(v.replace(" ", "").replace("i", "j"))
    raise ConfigError(f"cannot read z value {v!r}")


@dataclass
class SweepConfig:
    graph: str
    eps: list
    n_w: int = 12
    z: list = field(default_factory=lambda: list(DEFAULT_Z))
    sigma: float = DEFAULT_SIGMA
    window: tuple = (0.0, 12.0)
    output: str = "sweep_out"
    seed: int = DEFAULT_SEED
    tolerances: Tolerances = DEFAULT_TOLERANCES
    plots: bool = False
    nw_check: bool = True
    intermediate: bool = False
    base_dir: str = "."

    def __post_init__(self):
        try:
            self.eps = [float(e) for e in self.eps]
            self.z = [_parse_z(v) for v in self.z]
            self.window = tuple(float(w) for w in self.window)
            self.n_w, self.sigma, self.seed = int(self.n_w), float(self.sigma), int(self.seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if isinstance(self.tolerances, dict):
            try:
                self.tolerances = DEFAULT_TOLERANCES.updated(**self.tolerances)
            except TypeError as exc:
                raise ConfigError(f"unknown tolerance: {exc}") from exc
        if not self.eps:
            raise ConfigError("eps list is empty")
        if any(not 0 < e < 1 for e in self.eps):
            raise ConfigError("eps values must lie in (0, 1)")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ConfigError("eps values must be distinct and decreasing")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if len(self.window) != 2 or not all(map(math.isfinite, self.window)) or self.window[0] >= self.window[1]:
            raise ConfigError("window must be a bounded interval [a, b] with a < b")
        if self.n_w < 1:
            raise ConfigError("n_w must be a positive integer")
        if not self.z:
            raise ConfigError("z list is empty")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "SweepConfig":
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("graph", "eps"):
            if key not in d:
                raise ConfigError(f"missing config key '{key}'")
        return cls(**d, base_dir=base_dir)

    @classmethod
    def load(cls, path) -> "SweepConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d, base_dir=str(path.parent))

    def to_dict(self) -> dict:
        return {"graph": self.graph, "eps": self.eps, "n_w": self.n_w,
                "z": [[v.real, v.imag] for v in self.z], "sigma": self.sigma,
                "window": list(self.window), "output": self.output, "seed": self.seed,
                "tolerances": asdict(self.tolerances), "plots": self.plots,
                "nw_check": self.nw_check, "intermediate": self.intermediate}

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def load_graph(self):
        p = Path(self.graph)
        if not p.is_absolute():
            p = Path(self.base_dir) / p
        if p.exists():
            return load_graph(p)
        if self.graph in CORPUS:
            return corpus_graph(self.graph)
        raise ConfigError(f"graph '{self.graph}' is neither a file nor a corpus name {CORPUS}")

    def output_dir(self) -> Path:
        p = Path(self.output)
        return p if p.is_absolute() else Path(self.base_dir) / p


def admissibility(z: complex, sigma: float) -> Optional[str]:
    """Reason why ``z`` is not a valid sample point, or ``None``.

    Both operators are nonnegative, so real ``z <= -sigma`` is as good as
    ``|Im z| >= sigma``.
    """
    if abs(z.imag) >= sigma or (z.real <= -sigma):
        return None
    return f"z={z} violates dist(z, [0, inf)) >= sigma={sigma}"


# --- sweep -------------------------------------------------------------------------

@dataclass
class EpsRecord:
    eps: float
    meta: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)          # per z: dict
    thin_spectrum: list = field(default_factory=list)
    effective_spectrum: list = field(default_factory=list)
    error: str = ""

    def max_distance(self) -> float:
        d = [r["resolvent_distance"] for r in self.rows if r["status"] == "ok"]
        return max(d) if d else math.nan


@dataclass
class ConvergenceReport:
    config: SweepConfig
    records: list
    fits: dict
    nw_check: dict
    provenance: dict

    def errors(self):
        pairs = [(r.eps, r.max_distance()) for r in self.records]
        pairs = [(e, d) for e, d in pairs if math.isfinite(d)]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for rec in self.records:
            rows = rec.rows or [{"z_re": "", "z_im": "", "status": "failed"}]
            for r in rows:
                full = {"eps": rec.eps, **rec.meta, **rec.diagnostics, **r}
                if rec.error and not r.get("error"):
                    full["error"] = rec.error
                w.writerow([_fmt(full.get(c, "")) for c in REPORT_COLUMNS])
        return buf.getvalue()

    def write(self, outdir=None) -> Path:
        out = Path(outdir) if outdir is not None else self.config.output_dir()
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.csv_text(), encoding="utf-8")
        for rec in self.records:
            (out / f"spectra_{rec.eps:.6g}.csv").write_text(_spectra_csv(rec), encoding="utf-8")
        doc = {"fits": {k: asdict(v) if isinstance(v, RateFit) else v for k, v in self.fits.items()},
               "errors": [[float(e), float(d)] for e, d in zip(*self.errors())],
               "nw_check": self.nw_check, "provenance": self.provenance}
        (out / "rates.json").write_text(json.dumps(doc, indent=2, default=_json_default), encoding="utf-8")
        if self.config.plots:
            _plots(self, out / "plots")
        return out


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else f"{float(v):.12e}"
    return str(v)


def _spectra_csv(rec: EpsRecord) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "thin", "effective"])
    n = max(len(rec.thin_spectrum), len(rec.effective_spectrum))
    for i in range(n):
        a = rec.thin_spectrum[i] if i < len(rec.thin_spectrum) else math.nan
        b = rec.effective_spectrum[i] if i < len(rec.effective_spectrum) else math.nan
        w.writerow([i, _fmt(a), _fmt(b)])
    return buf.getvalue()


def self_checks(graph, eps: float, zs, seed: int) -> dict:
    """Krein identity, Herglotz floor and additivity on a coarse proxy mesh."""
    mesh = build_mesh(graph, eps, PROXY_NW)
    calc = calculus(mesh)
    rng = np.random.default_rng(seed)
    I = np.eye(mesh.n_trace)
    zc = [z for z in zs if z.imag != 0] or [complex(-1.0, 0.5)]
    krein, herglotz, additivity = 0.0, math.inf, 0.0
    for z in zc:
        f = rng.standard_normal((mesh.n_cells, 3)) + 1j * rng.standard_normal((mesh.n_cells, 3))
        ref = calc.neumann_resolvent(z, f)
        got = krein_resolvent(mesh, z, 0 * I, I, f)
        krein = max(krein, float(np.linalg.norm(got - ref) / np.linalg.norm(ref)))
        M = calc.m_function(z)
        H = (M.array - M.array.conj().T) / (2j * z.imag)
        herglotz = min(herglotz, float(np.linalg.eigvalsh(H).min() / np.abs(M.array).max()))
        parts = calc.m_function(z, "E").array + calc.m_function(z, "V").array
        additivity = max(additivity, float(np.abs(M.array - parts).max() / np.abs(M.array).max()))
    return {"krein_residual": krein, "herglotz_floor": herglotz, "additivity_defect": additivity}


def thin_spectrum(mesh, window, count_hint: int, tol: float, seed: int) -> np.ndarray:
    """Neumann eigenvalues of the thin grid up to just past ``window[1]``."""
    A = assemble_neumann(mesh)
    k = max(count_hint, 4)
    while True:
        k = min(k, mesh.n_cells - 1)
        vals, _ = sym_eigs_smallest(A, k, tol, seed=seed)
        if vals[-1] > window[1] or k == mesh.n_cells - 1:
            return vals
        k *= 2


def _eps_record(graph, eps, cfg: SweepConfig) -> EpsRecord:
    tol = cfg.tolerances
    rec = EpsRecord(eps)
    rec.diagnostics.update(self_checks(graph, eps, cfg.z, cfg.seed))
    if rec.diagnostics["krein_residual"] > KREIN_GATE:
        raise NumericalError(f"Krein identity residual {rec.diagnostics['krein_residual']:.3e} "
                             f"exceeds {KREIN_GATE:.0e} on the proxy mesh")
    mesh = build_mesh(graph, eps, cfg.n_w)
    calc = calculus(mesh)
    op = EffectiveOperator.for_mesh(mesh)
    rec.meta.update(n_w=cfg.n_w, h=mesh.h, n_cells=mesh.n_cells, n_trace=mesh.n_trace)

    lo, hi = cfg.window
    pad = 0.1 * (hi - lo) + 1.0
    eff = np.array(spectrum(op, (lo - pad, hi + pad), tol.root))
    thin = thin_spectrum(mesh, (lo, hi + pad), int(np.sum(eff <= hi + pad)) + 4, tol.eigen, cfg.seed)
    rec.thin_spectrum = [float(x) for x in in_window(thin, cfg.window)]
    rec.effective_spectrum = [float(x) for x in in_window(eff, cfg.window)]
    rec.diagnostics.update(hausdorff=hausdorff_spectra(thin, eff, cfg.window),
                           thin_count=len(rec.thin_spectrum), effective_count=len(rec.effective_spectrum))

    rec.diagnostics["steklov_lambda2"] = min(
        float(abs(steklov_spectrum(mesh, v.id, 2)[1])) for v in graph.vertices)
    rec.diagnostics["zaremba_inverse_norm"] = max(
        zaremba_inverse_norm(mesh, v.id, tol.eigen) for v in graph.vertices)
    rec.diagnostics["perp_block_inverse_norm"] = perp_block_inverse_norm(
        calc.m_function(-1.0), vertex_projection(mesh))

    for z in cfg.z:
        row = {"z_re": z.real, "z_im": z.imag}
        why = admissibility(z, cfg.sigma)
        if why:
            row.update(status="inadmissible", error=why)
            rec.rows.append(row)
            continue
        try:
            d = resolvent_distance(mesh, z, op, tol.opnorm, cfg.seed)
            row.update(status="ok", resolvent_distance=d.value, opnorm_iterations=d.iterations)
            if not d.converged:
                row["error"] = "power iteration hit the iteration cap"
            if cfg.intermediate:
                row["intermediate_distance"] = intermediate_distance(mesh, z, tol.opnorm, cfg.seed).value
        except NumericalError as exc:
            row.update(status="failed", error=str(exc))
        rec.rows.append(row)
    return rec


def nw_doubling_check(graph, cfg: SweepConfig, limit: float = 0.1) -> dict:
    """Relative change of ``max_z e`` at the largest eps when ``n_w`` doubles."""
    eps = cfg.eps[0]
    zs = [z for z in cfg.z if admissibility(z, cfg.sigma) is None]
    out = {"eps": eps, "n_w": cfg.n_w, "doubled": 2 * cfg.n_w, "limit": limit}
    try:
        vals = []
        for nw in (cfg.n_w, 2 * cfg.n_w):
            mesh = build_mesh(graph, eps, nw)
            op = EffectiveOperator.for_mesh(mesh)
            vals.append(max(resolvent_distance(mesh, z, op, cfg.tolerances.opnorm, cfg.seed).value for z in zs))
        change = abs(vals[1] - vals[0]) / vals[1]
        out.update(e=vals[0], e_doubled=vals[1], rel_change=change, passed=bool(change < limit))
    except (NumericalError, ValueError) as exc:
        out.update(passed=False, error=str(exc))
    return out


def run_sweep(cfg: SweepConfig, write: bool = True) -> ConvergenceReport:
    """Run every stage for every eps; a failing eps is recorded and skipped."""
    graph = cfg.load_graph()
    records = []
    for eps in cfg.eps:
        try:
            rec = _eps_record(graph, eps, cfg)
        except (NumericalError, ValueError) as exc:
            logger.warning("eps=%g failed: %s", eps, exc)
            rec = EpsRecord(eps, error=f"{type(exc).__name__}: {exc}")
        records.append(rec)
    report = ConvergenceReport(cfg, records, {}, {}, {})
    eps, errs = report.errors()
    for model in MODELS:
        try:
            report.fits[model] = fit_rate(eps, errs, model)
        except ValueError as exc:
            report.fits[model] = {"model": model, "error": str(exc)}
    if cfg.nw_check:
        report.nw_check = nw_doubling_check(graph, cfg)
    report.provenance = {"config_hash": cfg.config_hash(), "version": __version__,
                         "seed": cfg.seed, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    if write:
        report.write()
    return report


def read_report(path):
    """``(eps, max_z distance)`` pairs from a ``report.csv`` (``ok`` rows only)."""
    best = {}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "resolvent_distance" not in rows[0]:
        raise ConfigError(f"{path} is not a sweep report")
    for r in rows:
        if r["status"] == "ok" and r["resolvent_distance"]:
            e = float(r["eps"])
            best[e] = max(best.get(e, 0.0), float(r["resolvent_distance"]))
    eps = np.array(sorted(best, reverse=True))
    return eps, np.array([best[e] for e in eps])


def _plots(report: ConvergenceReport, outdir: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir.mkdir(parents=True, exist_ok=True)
    meta = {"Date": None}
    plt.rcParams["svg.hashsalt"] = "thingraph"
    eps, errs = report.errors()
    if eps.size:
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.loglog(eps, errs, "o-", label="max_z distance")
        for model, style in (("eps-log", "--"), ("eps", ":")):
            ref = model_values(eps, model)
            ax.loglog(eps, ref * errs[0] / ref[0], style, label=model)
        ax.set_xlabel("eps")
        ax.set_ylabel("resolvent distance")
        ax.legend()
        fig.tight_layout()
        fig.savefig(outdir / "resolvent_distance.svg", metadata=meta)
        plt.close(fig)
    fig, ax = plt.subplots(figsize=(5, 4))
    for rec in report.records:
        ax.plot(rec.thin_spectrum, [rec.eps] * len(rec.thin_spectrum), "k|", ms=10)
        ax.plot(rec.effective_spectrum, [rec.eps] * len(rec.effective_spectrum), "rx")
    ax.set_yscale("log")
    ax.set_xlabel("eigenvalue")
    ax.set_ylabel("eps")
    fig.tight_layout()
    fig.savefig(outdir / "spectra.svg", metadata=meta)
    plt.close(fig)
