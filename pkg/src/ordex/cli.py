"""Command-line front end."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dstar import DeltaOrderError, InverseError, norm
from .grid import GridError, ResolventOverflow
from .oracle import OracleError, brute_moments
from .pathsum import PathSumError, ordered_exp_entry
from .problem import ConfigError, Problem, load_problem
from .starlan import (breakdown_probe, moments, star_lanczos, to_theta_form,
                      tri_moments)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BREAKDOWN = 2

log = logging.getLogger("ordex")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    return "%.17g" % x


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def _kernel_rows(k: int, kern, nodes):
    ii, jj = np.tril_indices(len(nodes))
    vals = kern.values[ii, jj]
    for i, j, z in zip(ii, jj, vals):
        yield (str(k), str(i), str(j), nodes[i], nodes[j], z.real, z.imag)


def _threads() -> int:
    raw = os.environ.get("ORDEX_THREADS", "")
    try:
        return max(1, int(raw)) if raw else min(4, os.cpu_count() or 1)
    except ValueError:
        raise ConfigError(f"ORDEX_THREADS must be an integer, got {raw!r}") from None


def cmd_tridiag(prob: Problem, out: Path, theta_form: bool = False) -> int:
    A = prob.matrix_fn()
    T, _, _, report = star_lanczos(A, prob.w, prob.v, prob.m, prob.tols)
    if theta_form:
        T = to_theta_form(T)
    nodes = A.grid.nodes
    header = ["k", "i", "j", "t_prime", "t", "re", "im"]
    _write_csv(out / "alphas.csv", header,
               (r for k, a in enumerate(T.alphas) for r in _kernel_rows(k, a.smooth_or_zero(), nodes)))
    _write_csv(out / "betas.csv", header,
               (r for k, b in enumerate(T.betas) for r in _kernel_rows(k + 1, b.smooth_or_zero(), nodes)))
    doc = {"problem": prob.name, "form": T.superdiag, "m": T.m, **report.to_dict()}
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"tridiag: {T.m}/{prob.m} iterations, form={T.superdiag}"
          + (f", stopped: {report.message}" if report.breakdown else ""))
    return EXIT_BREAKDOWN if report.breakdown else EXIT_OK


def cmd_evolve(prob: Problem, out: Path) -> int:
    A = prob.matrix_fn()
    col = ordered_exp_entry(A, prob.w, prob.v, prob.m, prob.tols, oracle=False)
    t0 = time.perf_counter()
    col.oracle = prob.reference(A.grid)
    col.oracle_runtime = time.perf_counter() - t0
    err = col.abs_err
    _write_csv(out / "evolve.csv", ["t", "u_re", "u_im", "oracle_re", "oracle_im", "abs_err"],
               zip(A.grid.nodes, col.u.real, col.u.imag, col.oracle.real, col.oracle.imag, err))
    print(f"evolve: depth={col.depth} max_abs_err={col.max_abs_err():.3e} "
          f"max_rel_err={col.max_rel_err():.3e} runtime={col.runtime:.2f}s "
          f"oracle_runtime={col.oracle_runtime:.2f}s")
    if col.report.breakdown:
        print(f"evolve: run truncated: {col.report.message}", file=sys.stderr)
        return EXIT_BREAKDOWN
    return EXIT_OK


def cmd_moments(prob: Problem, out: Path, jmax: int | None = None) -> int:
    A = prob.matrix_fn()
    T, _, _, report = star_lanczos(A, prob.w, prob.v, prob.m, prob.tols)
    jmax = 2 * T.m if jmax is None else jmax
    ms = moments(A, prob.w, prob.v, jmax)
    tm = tri_moments(T, jmax)
    bm = brute_moments(A.samples, A.grid, prob.w, prob.v, jmax) if jmax >= 1 else []
    rows = []
    for j in range(jmax + 1):
        mis = norm(ms[j] - tm[j])
        if j == 0:
            bnorm, bmis = norm(ms[0]), 0.0
        else:
            bnorm = bm[j - 1].sup()
            bmis = (ms[j].smooth_or_zero() - bm[j - 1]).sup() + sum(
                d.coeff.sup() for d in ms[j].deltas)
        guaranteed = j <= 2 * T.m - 1
        ok = mis <= prob.tols.mm * (1 + norm(ms[j]))
        rows.append((str(j), norm(ms[j]), norm(tm[j]), bnorm, mis, bmis,
                     "yes" if guaranteed else "no", "pass" if ok else "mismatch"))
    _write_csv(out / "moments.csv", ["j", "moment_norm", "tri_moment_norm", "brute_moment_norm",
                                     "tri_mismatch", "brute_mismatch", "guaranteed", "status"],
               rows)
    bad = [r[0] for r in rows if r[6] == "yes" and r[7] != "pass"]
    print(f"moments: depth={T.m}, j<= {jmax}; guaranteed range mismatches: {bad or 'none'}")
    return EXIT_BREAKDOWN if report.breakdown else EXIT_OK


def cmd_probe(prob: Problem, out: Path, samples: int = 11) -> int:
    A = prob.matrix_fn()
    rep = breakdown_probe(A, prob.w, prob.v, samples, prob.tols.probe)
    _write_csv(out / "probe.csv", ["index", "rho", "depth", "breakdown_step", "kind"],
               ((str(s.index), s.rho, str(s.depth),
                 "" if s.breakdown_step is None else str(s.breakdown_step), s.kind)
                for s in rep.samples))
    print(f"probe: {len(rep.samples)} samples, max depth {rep.max_depth}/{rep.N}")
    return EXIT_OK


def _level(prob: Problem, n: int):
    A = prob.matrix_fn(n)
    col = ordered_exp_entry(A, prob.w, prob.v, prob.m, prob.tols, oracle=False)
    if col.report.breakdown:
        return n, A.grid.h, None, col.report.message
    return n, A.grid.h, float(np.max(np.abs(col.u - prob.reference(A.grid)))), ""


def cmd_converge(prob: Problem, out: Path, levels: int = 4) -> int:
    if levels < 2:
        raise ConfigError("--levels must be at least 2")
    ns = [(prob.n - 1) * 2**k + 1 for k in range(levels)]
    with ThreadPoolExecutor(max_workers=min(_threads(), levels)) as pool:
        results = list(pool.map(lambda n: _level(prob, n), ns))
    rows, prev = [], None
    broke = False
    for n, h, err, note in results:
        if err is None:
            broke = True
            rows.append((str(n), h, "", "", note))
            prev = None
            continue
        order = np.log2(prev / err) if prev not in (None, 0.0) and err > 0 else None
        rows.append((str(n), h, err, "" if order is None else order, note))
        prev = err
    _write_csv(out / "converge.csv", ["n", "h", "max_err", "observed_order", "note"], rows)
    if broke:
        print(f"converge: breakdown, no error rows: {results[0][3]}", file=sys.stderr)
        return EXIT_BREAKDOWN
    last = rows[-1][3]
    print(f"converge: {levels} levels, observed order on last pair {last:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ordex", description="Time-ordered exponentials via *-Lanczos and path sums.")
    p.add_argument("--version", action="version", version=f"ordex {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path, help="problem JSON file")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")

    sp = sub.add_parser("tridiag", help="run *-Lanczos; write alphas.csv, betas.csv, report.json")
    common(sp)
    sp.add_argument("--theta-form", action="store_true", help="Theta superdiagonal form")
    sp = sub.add_parser("evolve", help="propagator column vs reference; write evolve.csv")
    common(sp)
    sp = sub.add_parser("moments", help="moment matching table; write moments.csv")
    common(sp)
    sp.add_argument("--jmax", type=int, default=None, help="highest moment (default 2m)")
    sp = sub.add_parser("probe", help="classical Lanczos breakdown probe; write probe.csv")
    common(sp)
    sp.add_argument("--samples", type=int, default=11, help="number of sampled times")
    sp = sub.add_parser("converge", help="grid refinement study; write converge.csv")
    common(sp)
    sp.add_argument("--levels", type=int, default=4, help="refinement levels (n doubles)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        prob = load_problem(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "tridiag":
            return cmd_tridiag(prob, args.out, args.theta_form)
        if args.command == "evolve":
            return cmd_evolve(prob, args.out)
        if args.command == "moments":
            if args.jmax is not None and args.jmax < 0:
                raise ConfigError("--jmax must be >= 0")
            return cmd_moments(prob, args.out, args.jmax)
        if args.command == "probe":
            if args.samples < 1:
                raise ConfigError("--samples must be >= 1")
            return cmd_probe(prob, args.out, args.samples)
        return cmd_converge(prob, args.out, args.levels)
    except (ConfigError, GridError) as exc:
        print(f"ordex: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ResolventOverflow, DeltaOrderError, InverseError, PathSumError, OracleError,
            ArithmeticError) as exc:
        print(f"ordex: run failed: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
