"""Command-line interface.

Every subcommand writes its artifacts into ``--out`` (a directory) and prints
a JSON summary on stdout. Failures exit with status 1 and a ``[stage]``
tagged message on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import io
from .clustering import decode_labels, kmeans
from .decoders import DecoderConfig, VARIANTS
from .errors import CPCAError, StageError
from .frpcag import FrpcagConfig, fista_solve
from .graph import build_knn_graph, connected_components, cumulative_coherence, kron_reduce
from .linalg import sym_eig
from .pipeline import PipelineConfig, decode, emit_report, run_grid, run_pipeline
from .sampling import (SamplingPlan, draw_plan, required_samples, rho_from_factors, rip_check,
                       subsample)


def _matrix_name(stem: str, fmt: str) -> str:
    return f"{stem}.{'csv' if fmt == 'csv' else 'glr1'}"


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, default=lambda o: o.item() if isinstance(o, np.generic) else str(o)))


def cmd_graph(args, out: Path) -> dict:
    Y = io.load_matrix(args.input)
    G = build_knn_graph(Y, args.axis, args.K, args.kind)
    path = out / f"graph_{args.axis}.glr1"
    io.save_graph(path, G)
    if args.edges:
        io.save_edge_list(out / f"graph_{args.axis}_edges.csv", G.W)
    ncomp, _ = connected_components(G.W)
    return {"graph": str(path), "nodes": G.n_nodes, "edges": G.W.nnz // 2,
            "sigma2": G.sigma2, "components": int(ncomp)}


def _budget(graph_path, k: int, delta: float, epsilon: float, mode: str, ambient: int) -> int:
    G = io.load_graph(graph_path)
    nu = cumulative_coherence(sym_eig(G.laplacian, k), k).nu
    need = required_samples(nu, k, delta, epsilon, mode)
    if need > ambient:
        warnings.warn(f"sample bound {need} exceeds dimension {ambient}; clamped", stacklevel=2)
    return min(need, ambient)


def cmd_sample(args, out: Path) -> dict:
    if args.input:
        p, n = io.load_matrix(args.input).shape
    else:
        p, n = args.p, args.n
    if p is None or n is None:
        raise CPCAError("sample needs --input or both --p and --n")
    rho_r, rho_c = rho_from_factors(p, n, args.a, args.b)
    if args.graph_r and args.k_r:
        rho_r = _budget(args.graph_r, args.k_r, args.delta, args.epsilon, "dual", p)
    if args.graph_c and args.k_c:
        rho_c = _budget(args.graph_c, args.k_c, args.delta, args.epsilon, "dual", n)
    rho_r = args.rho_r or rho_r
    rho_c = args.rho_c or rho_c
    plan = draw_plan(p, n, rho_r, rho_c, args.delta, args.epsilon, args.seed)
    path = out / "plan.json"
    plan.save(path)
    if args.input:
        io.save_matrix(out / _matrix_name("Yt", args.format), subsample(io.load_matrix(args.input), plan))
    return {"plan": str(path), "p": p, "n": n, "rho_r": plan.rho_r, "rho_c": plan.rho_c,
            "norm_const": plan.norm_const}


def _compressed_laplacians(args, plan):
    Lr = io.load_graph(args.graph_r).laplacian
    Lc = io.load_graph(args.graph_c).laplacian
    if plan is not None:
        Lr, Lc = kron_reduce(Lr, plan.omega_r), kron_reduce(Lc, plan.omega_c)
    return Lr, Lc


def cmd_solve(args, out: Path) -> dict:
    Y = io.load_matrix(args.input)
    plan = SamplingPlan.load(args.plan) if args.plan else None
    if plan is not None and Y.shape == (plan.p, plan.n):
        Y = subsample(Y, plan)
    Lr, Lc = _compressed_laplacians(args, plan)
    cfg = FrpcagConfig(gamma_r=args.gamma_r, gamma_c=args.gamma_c, loss=args.loss, tol=args.tol,
                       max_iter=args.max_iter, seed=args.seed)
    Xt, trace = fista_solve(Y, Lr, Lc, cfg)
    path = out / _matrix_name("Xt", args.format)
    io.save_matrix(path, Xt)
    with open(out / "objective_vs_iteration.csv", "w") as fh:
        fh.write("iteration,objective\n")
        for i, v in enumerate(trace.objectives, start=1):
            fh.write(f"{i},{v:.17g}\n")
    return {"Xt": str(path), "iterations": trace.iterations, "converged": trace.converged,
            "initial_objective": trace.initial_objective,
            "final_objective": trace.objectives[-1] if trace.objectives else None}


def cmd_decode(args, out: Path) -> dict:
    Xt = io.load_matrix(args.input)
    plan = SamplingPlan.load(args.plan)
    Lr = io.load_graph(args.graph_r).laplacian
    Lc = io.load_graph(args.graph_c).laplacian
    Y = io.load_matrix(args.data) if args.data else None
    if args.variant in ("approx2", "approx3") and Y is None:
        raise CPCAError(f"variant {args.variant} needs the full data via --data")
    dc = DecoderConfig(variant=args.variant, gamma=args.gamma, rank=args.rank,
                       rank_threshold=args.rank_threshold, sigma_rule=args.sigma_rule)
    res = decode(dc, Xt, plan, Y, Lr, Lc)
    path = out / _matrix_name("X", args.format)
    io.save_matrix(path, res.X)
    if res.factors is not None:
        io.save_factors(out / "factors.glr1", res.factors)
    return {"X": str(path), "variant": res.variant, "rank": res.rank, "converged": res.converged}


def cmd_cluster(args, out: Path) -> dict:
    Xt = io.load_matrix(args.input)
    Ct = kmeans(Xt, args.k, args.restarts, args.seed)
    labels = Ct
    if args.plan:
        plan = SamplingPlan.load(args.plan)
        labels = decode_labels(Ct, plan, io.load_graph(args.graph_c).laplacian)
    path = out / "labels.csv"
    io.save_labels(path, labels.assignments)
    return {"labels": str(path), "n": labels.n, "k": labels.k,
            "sizes": np.bincount(labels.assignments, minlength=labels.k).tolist()}


def cmd_pipeline(args, out: Path) -> dict:
    d = PipelineConfig.load(args.config).to_dict()
    for key in ("a", "b", "task", "k"):
        if getattr(args, key) is not None:
            d[key] = getattr(args, key)
    d["seed"] = args.seed
    d["out"] = str(out)
    cfg = PipelineConfig.from_dict(d)
    if args.grid_a or args.grid_b:
        reports = run_grid(cfg, args.grid_a or [cfg.a], args.grid_b or [cfg.b])
        return {"runs": len(reports), "out": str(out)}
    return run_pipeline(cfg).to_dict()


def cmd_rip_check(args, out: Path) -> dict:
    Gr, Gc = io.load_graph(args.graph_r), io.load_graph(args.graph_c)
    Pk, Qk = sym_eig(Gr.laplacian, args.k_r), sym_eig(Gc.laplacian, args.k_c)
    if args.plan:
        plan = SamplingPlan.load(args.plan)
    else:
        p, n = Gr.n_nodes, Gc.n_nodes
        rho_r = min(required_samples(cumulative_coherence(Pk, args.k_r).nu, args.k_r,
                                     args.delta, args.epsilon), p)
        rho_c = min(required_samples(cumulative_coherence(Qk, args.k_c).nu, args.k_c,
                                     args.delta, args.epsilon), n)
        plan = draw_plan(p, n, rho_r, rho_c, args.delta, args.epsilon, args.seed)
    rep = rip_check(Pk, Qk, plan, args.trials, args.seed)
    result = {"max_dev": rep.max_dev, "violation_rate": rep.violation_rate, "delta": plan.delta,
              "rho_r": plan.rho_r, "rho_c": plan.rho_c, "trials": args.trials}
    (out / "rip_check.json").write_text(json.dumps(result, indent=2))
    return result


def cmd_bench(args, out: Path) -> dict:
    syn = {"type": "lowrank", "p": args.p, "n": args.n, "k_r": args.k, "k_c": args.k,
           "mixing": "spread"}
    base = {"synthetic": syn, "seed": args.seed, "noise": {"kind": "gaussian", "level": args.noise}}
    t0 = time.perf_counter()
    full = run_pipeline(PipelineConfig.from_dict({**base, "a": 1, "b": 1}))
    comp = run_pipeline(PipelineConfig.from_dict({**base, "a": args.a, "b": args.b}))
    emit_report([full, comp], out)
    ratio = comp.timings["solve"] / full.timings["solve"]
    return {"uncompressed_solve_s": full.timings["solve"], "compressed_solve_s": comp.timings["solve"],
            "ratio": ratio, "uncompressed_rel_error": full.metrics.get("rel_error"),
            "compressed_rel_error": comp.metrics.get("rel_error"),
            "wall_s": time.perf_counter() - t0}


def build_parser() -> argparse.ArgumentParser:
    def global_flags(parser, defaults: bool):
        kw = (lambda v: {"default": v}) if defaults else (lambda v: {"default": argparse.SUPPRESS})
        parser.add_argument("--seed", type=int, **kw(0))
        parser.add_argument("--out", help="output directory", **kw("cpca_out"))
        parser.add_argument("--format", choices=("csv", "glr1"), help="format for written matrices",
                            **kw("glr1"))

    # flags may go before or after the subcommand; suppressed defaults keep
    # the subcommand parser from overwriting values given before it
    common = argparse.ArgumentParser(add_help=False)
    global_flags(common, defaults=False)
    ap = argparse.ArgumentParser(prog="cpca", description="Compressive PCA on graphs.")
    global_flags(ap, defaults=True)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("graph", parents=[common], help="build a kNN graph from a data matrix")
    g.add_argument("--input", required=True)
    g.add_argument("--axis", choices=("rows", "cols"), default="cols")
    g.add_argument("--K", type=int, default=10)
    g.add_argument("--kind", choices=("combinatorial", "normalized"), default="combinatorial")
    g.add_argument("--edges", action="store_true", help="also write an i,j,w edge list")
    g.set_defaults(func=cmd_graph, stage="graph")

    s = sub.add_parser("sample", parents=[common], help="draw a row/column sampling plan")
    s.add_argument("--input")
    s.add_argument("--p", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--a", type=int, default=1, help="column downsampling factor")
    s.add_argument("--b", type=int, default=1, help="row downsampling factor")
    s.add_argument("--rho-r", type=int)
    s.add_argument("--rho-c", type=int)
    s.add_argument("--graph-r")
    s.add_argument("--graph-c")
    s.add_argument("--k-r", type=int)
    s.add_argument("--k-c", type=int)
    s.add_argument("--delta", type=float, default=0.5)
    s.add_argument("--epsilon", type=float, default=0.1)
    s.set_defaults(func=cmd_sample, stage="sample")

    so = sub.add_parser("solve", parents=[common], help="graph-regularised low-rank solve")
    so.add_argument("--input", required=True)
    so.add_argument("--plan")
    so.add_argument("--graph-r", required=True)
    so.add_argument("--graph-c", required=True)
    so.add_argument("--gamma-r", type=float, default=1.0)
    so.add_argument("--gamma-c", type=float, default=1.0)
    so.add_argument("--loss", choices=("l1", "l2"), default="l1")
    so.add_argument("--tol", type=float, default=1e-8)
    so.add_argument("--max-iter", type=int, default=500)
    so.set_defaults(func=cmd_solve, stage="solve")

    d = sub.add_parser("decode", parents=[common], help="decode a compressed solution")
    d.add_argument("--input", required=True)
    d.add_argument("--plan", required=True)
    d.add_argument("--graph-r", required=True)
    d.add_argument("--graph-c", required=True)
    d.add_argument("--data", help="full data matrix (approx2/approx3)")
    d.add_argument("--variant", choices=VARIANTS, default="approx")
    d.add_argument("--gamma", type=float, default=1.0)
    d.add_argument("--rank", type=int)
    d.add_argument("--rank-threshold", type=float, default=0.1)
    d.add_argument("--sigma-rule", choices=("upsampled", "constant"), default="upsampled")
    d.set_defaults(func=cmd_decode, stage="decode")

    c = sub.add_parser("cluster", parents=[common], help="k-means and label decoding")
    c.add_argument("--input", required=True)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--restarts", type=int, default=10)
    c.add_argument("--plan")
    c.add_argument("--graph-c")
    c.set_defaults(func=cmd_cluster, stage="cluster")

    pl = sub.add_parser("pipeline", parents=[common], help="run the full pipeline from a JSON config")
    pl.add_argument("--config", required=True)
    pl.add_argument("--a", type=int)
    pl.add_argument("--b", type=int)
    pl.add_argument("--task", choices=("lowrank", "cluster", "both"))
    pl.add_argument("--k", type=int)
    pl.add_argument("--grid-a", type=int, nargs="*")
    pl.add_argument("--grid-b", type=int, nargs="*")
    pl.set_defaults(func=cmd_pipeline, stage="pipeline")

    r = sub.add_parser("rip-check", parents=[common], help="Monte-Carlo norm preservation check")
    r.add_argument("--graph-r", required=True)
    r.add_argument("--graph-c", required=True)
    r.add_argument("--k-r", type=int, required=True)
    r.add_argument("--k-c", type=int, required=True)
    r.add_argument("--plan")
    r.add_argument("--delta", type=float, default=0.5)
    r.add_argument("--epsilon", type=float, default=0.1)
    r.add_argument("--trials", type=int, default=200)
    r.set_defaults(func=cmd_rip_check, stage="rip-check")

    b = sub.add_parser("bench", parents=[common], help="compressed vs uncompressed solve timing")
    b.add_argument("--p", type=int, default=200)
    b.add_argument("--n", type=int, default=5000)
    b.add_argument("--k", type=int, default=5)
    b.add_argument("--a", type=int, default=10)
    b.add_argument("--b", type=int, default=2)
    b.add_argument("--noise", type=float, default=0.1)
    b.set_defaults(func=cmd_bench, stage="bench")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda m, *a, **k: print(f"warning: {m}", file=sys.stderr)
            result = args.func(args, out)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CPCAError, ValueError, OSError, KeyError) as exc:
        print(f"error: [{args.stage}] {exc}", file=sys.stderr)
        return 1
    _print(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
