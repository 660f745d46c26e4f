"""Command-line front end: ``gcs {build,verify-appendix,sweep,chain,entangle-report}``.

Exit codes: 0 success, 2 user error (bad arguments or input files), 3 an
internal invariant failed. Floats are written in shortest round-trip form so
identical inputs give byte-identical outputs. Set ``GCS_LOG`` to ``error``,
``info`` or ``debug`` for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import appendix
from .entanglement import entanglement_report
from .protocols import (
    GraphSpec,
    InvariantViolation,
    build_41_composite,
    build_four_mode_square,
    build_general,
    build_two_mode_composite,
)
from .qubrick import ChainMode, QubrickChain, run_chain
from .state import GaussianState, InvalidArgument, vacuum_state

log = logging.getLogger("gcs")

EXIT_OK, EXIT_USER, EXIT_INVARIANT = 0, 2, 3

PROTOCOLS = {
    "two-mode": build_two_mode_composite,
    "square": build_four_mode_square,
    "composite-41": build_41_composite,
}


class UserError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    kappa: float = 1.0
    r: float = 0.0
    seed: int = 0
    graph_file: str | None = None
    output_path: str = "-"
    format: str = "json"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UserError(f"unknown command {self.command!r}")
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise UserError(f"--kappa must be finite and >= 0, got {self.kappa}")
        if not np.isfinite(self.r):
            raise UserError("--squeezing must be finite")
        if self.format not in ("json", "csv"):
            raise UserError(f"--format must be json or csv, got {self.format!r}")


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _write(text: str, path: str):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UserError(f"cannot write {path}: {exc}") from None


def _load_graph(path: str) -> GraphSpec:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            return GraphSpec.load(path)
        except InvalidArgument as exc:
            raise UserError(str(exc)) from None


def _build(protocol: str | None, graph: GraphSpec | None, kappa: float, r: float, seed: int,
           node_squeezing: float | None = None):
    if graph is not None:
        return build_general(graph, kappa, r, seed=seed, node_squeezing=node_squeezing)
    return PROTOCOLS[protocol](kappa, r, seed=seed, node_squeezing=node_squeezing)


def _first_cut(trace) -> str:
    return trace.final_state.labels[0]


def _metrics(trace) -> dict:
    rep = entanglement_report(trace.final_state, _first_cut(trace))
    return {"cut": rep["partition"], "nu_min": rep["nu_min"], "entangled": rep["entangled"],
            "log_negativity": rep["log_negativity"], "nullifier_variances": trace.nullifier_variances()}


# ---------------------------------------------------------------------------
# Commands


def cmd_build(args) -> int:
    cfg = RunConfig("build", args.kappa, args.squeezing, args.seed, args.graph, args.out, args.format)
    graph = _load_graph(cfg.graph_file) if cfg.graph_file else None
    kappa = args.kappa if graph is None or args.kappa_given else None
    r = args.squeezing if graph is None or args.squeezing_given else None
    trace = _build(args.protocol, graph, kappa, r, cfg.seed, args.node_squeezing)
    if cfg.format == "csv":
        _write(_csv_text(*trace.nullifier_rows()), cfg.output_path)
    else:
        out = trace.to_json()
        out["entanglement"] = _metrics(trace)
        _write(_json_text(out), cfg.output_path)
    return EXIT_OK


def cmd_verify_appendix(args) -> int:
    kappas = args.kappa_list or list(appendix.APPENDIX_KAPPAS)
    rep = appendix.verify_appendix(kappas)
    if args.format == "csv":
        _write(appendix.rows_to_csv(rep.rows), args.out)
    else:
        out = rep.summary()
        out["rows"] = [r.__dict__ for r in rep.rows]
        _write(_json_text(out), args.out)
    log.info("pipeline matches oracle: %s", rep.pipeline_matches_oracle)
    for name in appendix.REFERENCE_MATRICES:
        log.info("%s matches reference: %s", name, rep.reference_matches(name))
    if not rep.pipeline_matches_oracle:
        print("error: pipeline disagrees with the extended-precision oracle", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _grid(values, rng, name) -> list[float]:
    if values:
        return [float(v) for v in values]
    if rng:
        start, stop, step = rng
        if step <= 0 or stop < start:
            raise UserError(f"--{name}-range needs start <= stop and step > 0")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [float(repr(round(start + j * step, 12))) for j in range(n)]
    return []


def _sweep_point(job) -> list:
    protocol, graph_json, kappa, r, rn, seed, chain_len = job
    graph = GraphSpec.from_json(graph_json) if graph_json is not None else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        trace = _build(protocol, graph, kappa, r, seed, rn)
    m = _metrics(trace)
    row = [kappa, r, m["nu_min"]] + list(m["nullifier_variances"].values())
    if chain_len:
        rep = run_chain(QubrickChain(chain_len, kappa, r, node_squeezing=rn), vacuum_state(1), seed)
        row.append(rep.slope)
    return row


def cmd_sweep(args) -> int:
    kappas = _grid(args.kappa_list, args.kappa_range, "kappa") or [args.kappa]
    rs = _grid(args.squeezing_list, args.squeezing_range, "squeezing") or [args.squeezing]
    if args.kappa_range and not kappas or args.squeezing_range and not rs:
        raise UserError("empty sweep grid")
    for k in kappas:
        RunConfig("sweep", k, 0.0)
    for r in rs:
        RunConfig("sweep", 0.0, r)
    graph = _load_graph(args.graph) if args.graph else None
    gj = graph.to_json() if graph is not None else None
    jobs = [(args.protocol, gj, k, r, args.node_squeezing, args.seed, args.chain_length) for k in kappas for r in rs]
    if not jobs:
        raise UserError("empty sweep grid")
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    probe = _build(args.protocol, graph, kappas[0], rs[0], args.seed, args.node_squeezing)
    header = ["kappa", "r", "nu_min"] + [f"var[{n}]" for n, _ in probe.nullifiers]
    if args.chain_length:
        header.append("chain_noise_slope")
    if args.format == "json":
        _write(_json_text({"columns": header, "rows": rows}), args.out)
    else:
        _write(_csv_text(header, rows), args.out)
    return EXIT_OK


def cmd_chain(args) -> int:
    cfg = RunConfig("chain", args.kappa, args.squeezing, args.seed, None, args.out, args.format)
    if args.length < 1:
        raise UserError("--length must be >= 1")
    inp = GaussianState(np.diag([np.exp(2 * args.input_squeezing), np.exp(-2 * args.input_squeezing)]))
    mode = ChainMode.SINGLE_BRICK_LOOP if args.mode == "loop" else ChainMode.FRESH_BRICKS
    chain = QubrickChain(args.length, cfg.kappa, cfg.r, mode, args.feedforward, args.node_squeezing)
    rep = run_chain(chain, inp, cfg.seed, sizes=args.sizes)
    if cfg.format == "csv":
        _write(_csv_text(*rep.csv_rows()), cfg.output_path)
    else:
        out = rep.to_json()
        out["slope"] = rep.slope
        out["linearity_deviation"] = rep.linearity_deviation()
        if rep.model_table is not None:
            out["crossover"] = rep.model_table.crossover
        _write(_json_text(out), cfg.output_path)
    return EXIT_OK


def cmd_entangle_report(args) -> int:
    if args.state:
        try:
            state = GaussianState.from_json(json.loads(Path(args.state).read_text()))
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise UserError(f"cannot read state file {args.state}: {exc}") from None
    else:
        graph = _load_graph(args.graph) if args.graph else None
        state = _build(args.protocol, graph, args.kappa, args.squeezing, args.seed, args.node_squeezing).final_state
    party = args.party or [state.labels[0]]
    rep = entanglement_report(state, party)
    if args.format == "csv":
        rows = [["nu_min", rep["nu_min"]], ["entangled", rep["entangled"]],
                ["log_negativity", rep["log_negativity"]]]
        rows += [[f"pt_nu_{j}", v] for j, v in enumerate(rep["pt_spectrum"])]
        _write(_csv_text(["quantity", "value"], rows), args.out)
    else:
        _write(_json_text(rep), args.out)
    return EXIT_OK


COMMANDS = {
    "build": cmd_build,
    "verify-appendix": cmd_verify_appendix,
    "sweep": cmd_sweep,
    "chain": cmd_chain,
    "entangle-report": cmd_entangle_report,
}


# ---------------------------------------------------------------------------
# Parser


class _Given(argparse.Action):
    """Store the value and remember that it was given explicitly."""

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        setattr(namespace, f"{self.dest}_given", True)


def _common(p: argparse.ArgumentParser, protocol=True):
    if protocol:
        p.add_argument("--protocol", choices=sorted(PROTOCOLS), default="two-mode")
        p.add_argument("--graph", metavar="PATH", help="GraphSpec JSON file (overrides --protocol)")
    p.add_argument("--kappa", type=float, default=1.0, action=_Given)
    p.add_argument("--squeezing", type=float, default=0.0, action=_Given,
                   help="momentum squeezing r of pulses (and nodes unless --node-squeezing)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", metavar="PATH", help="output file (default stdout)")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--node-squeezing", type=float, default=None,
                   help="momentum squeezing of cluster nodes (default: --squeezing)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcs", description="Gaussian cluster-state simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="run a cluster protocol and export its trace")
    _common(p)

    p = sub.add_parser("verify-appendix", help="compare pipeline, oracle and reference matrices")
    p.add_argument("--kappa", dest="kappa_list", type=float, nargs="+", default=None)
    p.add_argument("--out", default="-", metavar="PATH")
    p.add_argument("--format", choices=["json", "csv"], default="csv")

    p = sub.add_parser("sweep", help="scan kappa/squeezing grids")
    _common(p)
    p.add_argument("--kappa-range", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    p.add_argument("--kappas", dest="kappa_list", type=float, nargs="+")
    p.add_argument("--squeezing-range", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    p.add_argument("--squeezings", dest="squeezing_list", type=float, nargs="+")
    p.add_argument("--chain-length", type=int, default=0, help="also report the chain noise slope")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(format="csv")

    p = sub.add_parser("chain", help="run a qubrick chain")
    _common(p, protocol=False)
    p.set_defaults(squeezing=3.0)
    p.add_argument("--length", type=int, default=8)
    p.add_argument("--mode", choices=["fresh", "loop"], default="fresh")
    p.add_argument("--feedforward", choices=["unit", "conditional"], default="unit")
    p.add_argument("--input-squeezing", type=float, default=0.0)
    p.add_argument("--sizes", type=int, nargs="+", default=None, help="sizes for the error-model table")

    p = sub.add_parser("entangle-report", help="PPT/log-negativity report for a state")
    _common(p)
    p.add_argument("--state", metavar="PATH", help="GaussianState JSON file")
    p.add_argument("--party", nargs="+", default=None, help="mode labels on one side of the cut")
    return parser


def _configure_logging():
    level = os.environ.get("GCS_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    for name in ("kappa", "squeezing"):
        if not hasattr(args, f"{name}_given"):
            setattr(args, f"{name}_given", False)
    try:
        return COMMANDS[args.command](args)
    except (UserError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
