"""Command-line interface: ``egs <command> ...``.

Every command that writes to ``--out DIR`` also writes ``DIR/manifest.json``
recording the argument vector, the resolved configuration and per-stage
timings.  ``egs rerun DIR/manifest.json`` repeats the run; data outputs are
byte-identical because every random stream is seeded.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure,
4 no spectral gap.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (NoSpectralGapError, SearchConfig, classify_network, estimate_clusters,
                       infer_parameter, similarity_matrix)
from .baselines import exact_spectrum, lanczos_spectrum, smooth
from .generators import ModelSpec, generate
from .graph import GraphParseError, make_operator, read_edge_list, write_edge_list
from .maxent import (MaxEntConvergenceError, QuadratureOverflowError, SolverConfig, density_eval,
                     maxent_fit)
from .moments import ProbeConfig, ste_moments

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_NO_GAP = 0, 2, 3, 4
GRID = 1001
EXACT_LIMIT = 3000


class UsageError(Exception):
    pass


def dumps(obj) -> str:
    """JSON with floats written to 17 significant digits (``nan``/``inf`` as null)."""
    def enc(o):
        if isinstance(o, (bool, np.bool_)) or o is None:
            return json.dumps(bool(o) if o is not None else None)
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return format(float(o), ".17g") if math.isfinite(o) else "null"
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            return "{" + ", ".join(f"{json.dumps(str(k))}: {enc(v)}" for k, v in o.items()) + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            return "[" + ", ".join(enc(v) for v in o) + "]"
        raise TypeError(f"cannot serialise {type(o).__name__}")
    return enc(obj) + "\n"


class Run:
    """Collects timings and writes outputs plus the manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.timings = {}
        self.out = Path(args.out) if getattr(args, "out", None) else None
        self.files = []

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        yield
        self.timings[name] = time.perf_counter() - t0

    def emit(self, name, text):
        """Write ``text`` to ``--out/name``, or to stdout without ``--out``."""
        if self.out is None:
            sys.stdout.write(text)
            return
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / name, "w", newline="\n") as fh:
            fh.write(text)
        self.files.append(name)

    def finish(self, config):
        if self.out is None:
            return
        manifest = {
            "tool": "egspec",
            "version": __version__,
            "command": self.args.command,
            "argv": self.argv,
            "inputs": [str(p) for p in _inputs(self.args)],
            "outputs": self.files,
            "config": config,
            "timings": self.timings,
        }
        with open(self.out / "manifest.json", "w", newline="\n") as fh:
            fh.write(dumps(manifest))


def _inputs(args):
    for name in ("graph", "graphs"):
        val = getattr(args, name, None)
        if val is None:
            continue
        yield from (val if isinstance(val, list) else [val])


def _threads(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("EGS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"EGS_THREADS must be an integer, got {env!r}")
    return 1


def _probe(args):
    return ProbeConfig(d=args.probes, seed=args.seed)


def _solver(args):
    return SolverConfig(tol=args.tol)


def _basis(args):
    return "chebyshev_shifted" if args.basis == "chebyshev" else args.basis


def _config(args, **extra):
    cfg = {"moments": args.moments, "probes": args.probes, "seed": args.seed,
           "basis": _basis(args), "tol": args.tol, "threads": _threads(args)}
    cfg.update(extra)
    return cfg


def _load(path):
    try:
        return read_edge_list(path)
    except FileNotFoundError:
        raise UsageError(f"no such graph file: {path}")
    except GraphParseError as exc:
        raise UsageError(f"{path}: {exc}")


def _fit(run, g, args):
    with run.stage("moments"):
        mv = ste_moments(make_operator(g), _probe(args), args.moments, _basis(args))
    with run.stage("maxent"):
        es = maxent_fit(mv, _solver(args))
    return mv, es


def _csv(header, columns):
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join("" if not math.isfinite(v) else f"{v:.8g}" for v in row))
    return "\n".join(lines) + "\n"


def cmd_spectrum(args, run):
    with run.stage("parse"):
        g = _load(args.graph)
    mv, es = _fit(run, g, args)
    x = np.linspace(0.0, 1.0, GRID)
    with run.stage("density"):
        p = density_eval(es, x)
    result = {"n": g.n, "n_edges": g.n_edges, "moments": mv.to_dict(), "egs": es.to_dict(),
              "iterations": es.iterations, "entropy": es.entropy()}
    if args.format == "csv" and run.out is None:
        run.emit("density.csv", _csv(["lambda", "p"], [x, p]))
    else:
        run.emit("egs.json", dumps(result))
        if run.out is not None:
            run.emit("density.csv", _csv(["lambda", "p"], [x, p]))
    run.finish(_config(args))


def cmd_clusters(args, run):
    with run.stage("parse"):
        g = _load(args.graph)
    _, es = _fit(run, g, args)
    with run.stage("clusters"):
        ce = estimate_clusters(es, g.n, args.eta)
    run.emit("clusters.json", dumps(ce.to_dict()))
    run.finish(_config(args, eta=args.eta))


def cmd_similarity(args, run):
    if len(args.graphs) < 2:
        raise UsageError("similarity needs at least two graph files")
    with run.stage("parse"):
        graphs = [_load(p) for p in args.graphs]
    labels = [Path(p).stem for p in args.graphs]
    if len(set(labels)) < len(labels):
        labels = list(args.graphs)
    with run.stage("similarity"):
        sm = similarity_matrix(graphs, args.moments, _probe(args), _solver(args), labels,
                               _basis(args), _threads(args))
    if args.format == "csv":
        run.emit("similarity.csv", sm.to_csv())
    else:
        run.emit("similarity.json", dumps(sm.to_dict()))
    run.finish(_config(args))


def cmd_compare_baseline(args, run):
    with run.stage("parse"):
        g = _load(args.graph)
    op = make_operator(g)
    _, es = _fit(run, g, args)
    x = np.linspace(0.0, 1.0, GRID)
    columns, header = [x, density_eval(es, x)], ["lambda", "egs"]
    with run.stage("lanczos"):
        steps = min(args.moments, g.n)
        sm = smooth(lanczos_spectrum(op, steps, _probe(args)), "gaussian", args.sigma)
        columns.append(sm.on_grid(GRID)[1])
        header.append("lanczos_smoothed")
    if g.n <= EXACT_LIMIT:
        with run.stage("exact"):
            ev = exact_spectrum(op).atoms
            hist, edges = np.histogram(ev, bins=args.bins, range=(0.0, 1.0), density=True)
            idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, args.bins - 1)
            columns.append(hist[idx])
            header.append("exact_histogram")
    run.emit("compare.csv", _csv(header, columns))
    run.finish(_config(args, sigma=args.sigma, bins=args.bins))


def _params(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"parameter {item!r} is not of the form key=value")
        k, v = item.split("=", 1)
        try:
            out[k] = int(v)
        except ValueError:
            try:
                out[k] = float(v)
            except ValueError:
                raise UsageError(f"parameter {k} needs a number, got {v!r}")
    return out


def cmd_generate(args, run):
    params = _params(args.param)
    if args.family == "planted":
        inner = ModelSpec(args.inner_family, _params(args.inner_param) or {"p": 0.5})
        params = {"clusters": [(args.size, inner)] * args.clusters,
                  "inter_edges": args.inter_edges}
    try:
        spec = ModelSpec(args.family, params, args.seed)
        with run.stage("generate"):
            g = generate(spec, args.n)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid model parameters: {exc}")
    run.emit("graph.txt", write_edge_list(g))
    cfg = {"family": args.family, "n": g.n, "seed": args.seed,
           "params": params if args.family != "planted" else
           {"clusters": args.clusters, "size": args.size, "inter_edges": args.inter_edges,
            "inner_family": args.inner_family, "inner_params": _params(args.inner_param)}}
    run.finish(cfg)


def _search(args):
    return SearchConfig(seed=args.search_seed, evaluations=args.evaluations)


def cmd_infer(args, run):
    with run.stage("parse"):
        g = _load(args.graph)
    _, es = _fit(run, g, args)
    n = args.n or g.n
    with run.stage("infer"):
        res = infer_parameter(es, args.model, n, _search(args), _probe(args), _solver(args))
    run.emit("infer.json", dumps({"family": res.family, "parameter": res.parameter,
                                  "divergence": res.divergence, "n": n}))
    run.finish(_config(args, model=args.model, n=n, search_seed=args.search_seed,
                       evaluations=args.evaluations))


def cmd_classify(args, run):
    with run.stage("parse"):
        g = _load(args.graph)
    _, es = _fit(run, g, args)
    with run.stage("classify"):
        ranked = classify_network(es, args.zoo_size, _probe(args), _solver(args), _search(args))
    run.emit("classify.json", dumps({"ranking": [
        {"family": r.family, "parameter": r.parameter, "divergence": r.divergence}
        for r in ranked]}))
    run.finish(_config(args, zoo_size=args.zoo_size, search_seed=args.search_seed,
                       evaluations=args.evaluations))


def cmd_rerun(args, run):
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        argv = list(manifest["argv"])
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read manifest: {exc}")
    if args.out:
        argv = _replace_out(argv, args.out)
    return main(argv)


def _replace_out(argv, out):
    argv = list(argv)
    for i, a in enumerate(argv):
        if a == "--out" and i + 1 < len(argv):
            argv[i + 1] = out
            return argv
        if a.startswith("--out="):
            argv[i] = f"--out={out}"
            return argv
    return argv + ["--out", out]


def _add_common(p, moments=30):
    p.add_argument("-m", "--moments", type=int, default=moments, help="number of moments")
    p.add_argument("-d", "--probes", type=int, default=100, help="number of random probes")
    p.add_argument("--seed", type=int, default=0, help="probe seed")
    p.add_argument("--basis", choices=("chebyshev", "power"), default="chebyshev")
    p.add_argument("--tol", type=float, default=1e-6, help="moment-matching tolerance")
    p.add_argument("--out", help="output directory (default: stdout)")
    p.add_argument("--threads", type=int, help="worker cap (env EGS_THREADS)")
    p.add_argument("--format", choices=("csv", "json"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egs", description="Entropic graph spectra.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="fit the spectral density of a graph")
    p.add_argument("graph")
    _add_common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("clusters", help="estimate the number of clusters")
    p.add_argument("graph")
    _add_common(p, moments=80)
    p.add_argument("--eta", type=float, default=1e-2, help="derivative tolerance")
    p.set_defaults(func=cmd_clusters)

    p = sub.add_parser("similarity", help="pairwise symmetric KL between graphs")
    p.add_argument("graphs", nargs="+")
    _add_common(p, moments=100)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("compare-baseline", help="EGS vs smoothed Lanczos vs exact histogram")
    p.add_argument("graph")
    _add_common(p, moments=80)
    p.add_argument("--sigma", type=float, default=1e-3, help="Gaussian kernel bandwidth")
    p.add_argument("--bins", type=int, default=100, help="exact histogram bins")
    p.set_defaults(func=cmd_compare_baseline)

    p = sub.add_parser("generate", help="write a random graph as an edge list")
    p.add_argument("family", choices=("ER", "WS", "BA", "planted"))
    p.add_argument("-n", type=int, help="number of nodes")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="model parameter, e.g. p=0.1, r=5, k=4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clusters", type=int, default=9, help="planted: number of clusters")
    p.add_argument("--size", type=int, default=30, help="planted: nodes per cluster")
    p.add_argument("--inter-edges", type=int, default=0, help="planted: edges between clusters")
    p.add_argument("--inner-family", choices=("ER", "WS", "BA"), default="ER")
    p.add_argument("--inner-param", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", help="output directory (default: stdout)")
    p.set_defaults(func=cmd_generate)

    for name, func, helptext in (("infer", cmd_infer, "fit a random-graph parameter"),
                                 ("classify", cmd_classify, "rank random-graph families")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("graph")
        _add_common(p)
        if name == "infer":
            p.add_argument("--model", choices=("ER", "WS", "BA"), required=True)
            p.add_argument("-n", type=int, help="candidate size (default: target size)")
        else:
            p.add_argument("--zoo-size", type=int, default=1000, help="candidate graph size")
        p.add_argument("--search-seed", type=int, default=SearchConfig.seed)
        p.add_argument("--evaluations", type=int, default=SearchConfig.evaluations)
        p.set_defaults(func=func)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="write to this directory instead")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    run = Run(args, argv)
    try:
        rc = args.func(args, run)
    except UsageError as exc:
        print(f"egs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MaxEntConvergenceError as exc:
        print(f"egs: fit failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (QuadratureOverflowError, FloatingPointError) as exc:
        print(f"egs: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NoSpectralGapError as exc:
        print(f"egs: {exc}", file=sys.stderr)
        return EXIT_NO_GAP
    except ValueError as exc:
        print(f"egs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())
