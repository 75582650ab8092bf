"""End-to-end runner: graphs, sampling, Kron reduction, compressed solve,
decoding, clustering and metrics, with per-stage timings and reports."""
from __future__ import annotations

import csv
import json
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io
from .clustering import ClusterLabels, clustering_error, decode_labels, kmeans
from .decoders import (DecoderConfig, alternate_decode, approx_decode, approx_decode_onesided,
                       detect_rank, ideal_decode)
from .errors import StageError
from .frpcag import FrpcagConfig, fista_solve
from .graph import build_knn_graph, kron_reduce, spectral_gap
from .linalg import sym_eig, thin_svd
from .sampling import SamplingPlan, draw_plan, rho_from_factors, subsample
from .synth import NoiseSpec, add_noise, synth_blobs, synth_lowrank

TASKS = ("lowrank", "cluster", "both")


@dataclass
class PipelineConfig:
    """Everything a run needs; serialises to and from JSON.

    ``synthetic`` is a dict with ``type`` ``"lowrank"`` (keys ``p, n, k_r,
    k_c, eta, mixing``) or ``"blobs"`` (keys ``p, n, k, separation``); it is
    ignored when ``input`` names a matrix file. ``graphs`` is ``"auto"``
    (generated graphs for synthetic low-rank data, kNN graphs otherwise) or
    ``"knn"``. ``a``/``b`` are the column/row downsampling factors;
    ``rho_r``/``rho_c`` override them.
    """

    input: str | None = None
    truth: str | None = None
    labels: str | None = None
    synthetic: dict | None = None
    a: int = 1
    b: int = 1
    rho_r: int | None = None
    rho_c: int | None = None
    K: int = 10
    laplacian: str = "combinatorial"
    graphs: str = "auto"
    frpcag: FrpcagConfig = field(default_factory=FrpcagConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    task: str = "lowrank"
    k: int | None = None
    kmeans_restarts: int = 10
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if isinstance(self.frpcag, dict):
            self.frpcag = FrpcagConfig(**self.frpcag)
        if isinstance(self.decoder, dict):
            self.decoder = DecoderConfig(**self.decoder)
        if isinstance(self.noise, dict):
            self.noise = NoiseSpec(**self.noise)
        if int(self.a) != self.a or int(self.b) != self.b or self.a < 1 or self.b < 1:
            raise ValueError("downsampling factors a and b must be integers >= 1")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.graphs not in ("auto", "knn"):
            raise ValueError("graphs must be 'auto' or 'knn'")
        if self.input is None and not self.synthetic:
            raise ValueError("either input or synthetic must be given")
        if self.task != "lowrank" and self.k is None:
            raise ValueError("clustering needs the number of clusters k")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for key in ("frpcag", "decoder", "noise"):
            d[key] = asdict(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class PipelineReport:
    config: dict
    metrics: dict
    timings: dict
    objectives: list
    X: np.ndarray | None = field(default=None, repr=False)
    Xt: np.ndarray | None = field(default=None, repr=False)
    labels: np.ndarray | None = field(default=None, repr=False)
    plan: SamplingPlan | None = field(default=None, repr=False)

    def to_dict(self, with_timings: bool = True) -> dict:
        d = {"seed": self.config["seed"], "config": self.config, "metrics": self.metrics,
             "objectives": self.objectives}
        if with_timings:
            d["timings"] = self.timings
        return d


@contextmanager
def _stage(name: str, timings: dict):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - t0


def _load_data(cfg: PipelineConfig):
    """Returns ``(Y, truth_matrix, truth_labels, Gr, Gc)``."""
    if cfg.input is not None:
        Y = io.load_matrix(cfg.input)
        truth = io.load_matrix(cfg.truth) if cfg.truth else None
        labels = io.load_labels(cfg.labels) if cfg.labels else None
        return Y, truth, labels, None, None
    s = dict(cfg.synthetic)
    kind = s.pop("type", "lowrank")
    if kind == "lowrank":
        syn = synth_lowrank(seed=cfg.seed, kind=cfg.laplacian, **s)
        graphs = (syn.Gr, syn.Gc) if cfg.graphs == "auto" else (None, None)
        return syn.Y, syn.Y, syn.col_labels, graphs[0], graphs[1]
    if kind == "blobs":
        Y, labels = synth_blobs(seed=cfg.seed, **s)
        return Y, None, labels, None, None
    raise ValueError(f"unknown synthetic type {kind!r}")


def decode(dc: DecoderConfig, Xt, plan, Y, Lr, Lc):
    """Dispatch to the decoder named by ``dc.variant``."""
    if dc.variant == "approx":
        return approx_decode(Xt, plan, Lr, Lc, dc)
    if dc.variant in ("approx2", "approx3"):
        side = "U" if dc.variant == "approx2" else "V"
        return approx_decode_onesided(Xt, plan, Lr if side == "U" else Lc, Y, side, dc)
    k = dc.rank if dc.rank is not None else detect_rank(thin_svd(Xt)[1], dc.rank_threshold)
    Pk, Qk = sym_eig(Lr, k + 1), sym_eig(Lc, k + 1)
    if dc.variant == "ideal":
        return ideal_decode(Xt, plan, Pk.eigenvectors[:, :k], Qk.eigenvectors[:, :k])
    return alternate_decode(Xt, plan, Lr, Lc, (spectral_gap(Pk, k), spectral_gap(Qk, k)), dc)


def run_pipeline(cfg: PipelineConfig) -> PipelineReport:
    """Run every stage; any failure raises :class:`StageError` naming the stage."""
    timings: dict[str, float] = {}
    metrics: dict = {}
    with _stage("data", timings):
        Y, truth, truth_labels, Gr, Gc = _load_data(cfg)
        Y = add_noise(Y, cfg.noise)
        p, n = Y.shape
    with _stage("graph", timings):
        if Gr is None:
            Gr = build_knn_graph(Y, "rows", cfg.K, cfg.laplacian)
            Gc = build_knn_graph(Y, "cols", cfg.K, cfg.laplacian)
        Lr, Lc = Gr.laplacian, Gc.laplacian
    with _stage("sample", timings):
        rr, rc = rho_from_factors(p, n, cfg.a, cfg.b)
        rr = cfg.rho_r if cfg.rho_r is not None else rr
        rc = cfg.rho_c if cfg.rho_c is not None else rc
        if rr == p and rc == n:
            plan = SamplingPlan(np.arange(p), np.arange(n), p, n, seed=cfg.seed)
        else:
            plan = draw_plan(p, n, rr, rc, seed=cfg.seed)
        Yt = subsample(Y, plan)
    with _stage("kron", timings):
        if plan.is_full:
            Lr_t, Lc_t = Lr, Lc
        else:
            Lr_t, Lc_t = kron_reduce(Lr, plan.omega_r), kron_reduce(Lc, plan.omega_c)
    with _stage("solve", timings):
        Xt, trace = fista_solve(Yt, Lr_t, Lc_t, cfg.frpcag)
    metrics.update(p=p, n=n, rho_r=plan.rho_r, rho_c=plan.rho_c, a=cfg.a, b=cfg.b,
                   fista_iterations=trace.iterations, fista_converged=trace.converged,
                   initial_objective=trace.initial_objective,
                   final_objective=trace.objectives[-1] if trace.objectives else trace.initial_objective,
                   detected_rank=detect_rank(thin_svd(Xt)[1], cfg.decoder.rank_threshold))

    X = None
    if cfg.task in ("lowrank", "both"):
        with _stage("decode", timings):
            if plan.is_full:
                X = Xt.copy()
            else:
                res = decode(cfg.decoder, Xt, plan, Y, Lr, Lc)
                X = res.X
                metrics.update(decoder_converged=res.converged)
        if truth is not None:
            metrics["rel_error"] = float(np.linalg.norm(X - truth) / np.linalg.norm(truth))

    labels = None
    if cfg.task in ("cluster", "both"):
        with _stage("cluster", timings):
            Ct = kmeans(Xt, cfg.k, cfg.kmeans_restarts, cfg.seed)
            full = Ct if plan.is_full else decode_labels(Ct, plan, Lc)
            labels = full.assignments
        if truth_labels is not None:
            metrics["clustering_error"] = float(clustering_error(
                full, ClusterLabels(truth_labels, cfg.k)))

    report = PipelineReport(config=cfg.to_dict(), metrics=metrics, timings=timings,
                            objectives=list(trace.objectives), X=X, Xt=Xt, labels=labels, plan=plan)
    if cfg.out:
        with _stage("report", timings):
            write_artifacts(report, cfg.out)
            emit_report(report, cfg.out)
    return report


def write_artifacts(report: PipelineReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.plan.save(out / "plan.json")
    io.save_matrix(out / "Xt.glr1", report.Xt)
    if report.X is not None:
        io.save_matrix(out / "X.glr1", report.X)
    if report.labels is not None:
        io.save_labels(out / "labels.csv", report.labels)


GRID_COLUMNS = ("a", "b", "rho_r", "rho_c", "rel_error", "clustering_error", "detected_rank",
                "fista_iterations", "solve_seconds", "total_seconds")


def _grid_row(r: PipelineReport) -> dict:
    row = {c: r.metrics.get(c, "") for c in GRID_COLUMNS}
    row["solve_seconds"] = r.timings.get("solve", "")
    row["total_seconds"] = sum(r.timings.values())
    return row


def emit_report(results, out_dir) -> list[Path]:
    """Write a JSON summary, a CSV table and plot-ready series files.

    A single report yields ``summary.json``, ``summary.csv`` and
    ``objective_vs_iteration.csv``; a list of reports (a grid) additionally
    yields ``error_vs_downsampling.csv``.
    """
    single = isinstance(results, PipelineReport)
    reports = [results] if single else list(results)
    if not reports:
        raise ValueError("no results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    summary = out / "summary.json"
    payload = reports[0].to_dict() if single else [r.to_dict() for r in reports]
    summary.write_text(json.dumps(payload, indent=2, default=_json_default))
    written.append(summary)

    table = out / "summary.csv"
    with open(table, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=GRID_COLUMNS)
        w.writeheader()
        for r in reports:
            w.writerow(_grid_row(r))
    written.append(table)

    if single:
        series = out / "objective_vs_iteration.csv"
        with open(series, "w") as fh:
            fh.write("iteration,objective\n")
            for i, v in enumerate(reports[0].objectives, start=1):
                fh.write(f"{i},{v:.17g}\n")
    else:
        series = out / "error_vs_downsampling.csv"
        with open(series, "w") as fh:
            fh.write("a,b,compression,rel_error,clustering_error\n")
            for r in reports:
                m = r.metrics
                fh.write(f"{m['a']},{m['b']},{m['p'] * m['n'] / (m['rho_r'] * m['rho_c']):.17g},"
                         f"{m.get('rel_error', '')},{m.get('clustering_error', '')}\n")
    written.append(series)
    return written


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def run_grid(cfg: PipelineConfig, a_values, b_values) -> list[PipelineReport]:
    """One run per ``(a, b)`` pair, ``a`` varying slowest."""
    a_values, b_values = list(a_values), list(b_values)
    if not a_values or not b_values:
        raise ValueError("empty downsampling grid")
    base = cfg.to_dict()
    base["out"] = None
    reports = []
    for a in a_values:
        for b in b_values:
            reports.append(run_pipeline(PipelineConfig.from_dict({**base, "a": a, "b": b})))
    if cfg.out:
        emit_report(reports, cfg.out)
    return reports
