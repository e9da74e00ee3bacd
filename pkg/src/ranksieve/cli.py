"""Command-line interface: ``ranksieve solve|synth|tune|bench``.

Matrix files
------------
CSV: UTF-8 text, comma separated, no header, one sample per row. A vector
is one value per line (a single row is accepted too).

RSMX binary: a 16-byte header followed by the data.

    offset  size  content
    0       4     ASCII magic ``RSMX``
    4       4     rows, unsigned 32-bit little endian
    8       4     cols, unsigned 32-bit little endian
    12      4     reserved, written as zero
    16      8*rows*cols  float64 little endian, row-major

Readers detect the format from the magic bytes, writers from the file
extension (``.rsmx`` or ``.bin`` selects binary).

Exit codes: 0 success, 2 usage or parse error, 3 numerical failure or
non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import struct
import sys
import time
from dataclasses import fields
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .exceptions import InvalidArgumentError, NonConvergenceError, NumericFailureError
from .metrics import correct_ratio, evaluate
from .model import Loss, ProblemData, SolverConfig
from .refsolver import splitting_solve
from ._kkt import kkt_residual
from .sieve import TraceRecord, as_solve
from .synth import SynthSpec, generate
from .tuning import LambdaSpec, rank_lambda, sqrt_lasso_lambda

__all__ = ["main", "read_matrix", "write_matrix", "read_vector", "BENCH_COLUMNS"]

logger = logging.getLogger("ranksieve")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

MAGIC = b"RSMX"
_HEADER = struct.Struct("<4sIII")

BENCH_COLUMNS = ("eta_kkt", "val", "L1", "L2", "ME", "FP", "FN", "t",
                 "It-AS", "It-PPA", "It-ALM", "It-SSN", "t_ssn")


class UsageError(Exception):
    """Bad flags, unreadable input or an invalid configuration file."""


# ---------------------------------------------------------------- file formats

def read_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    if raw[:4] == MAGIC:
        if len(raw) < _HEADER.size:
            raise UsageError(f"{path}: truncated RSMX header")
        _, rows, cols, _ = _HEADER.unpack_from(raw)
        need = _HEADER.size + 8 * rows * cols
        if len(raw) != need:
            raise UsageError(f"{path}: expected {need} bytes for {rows}x{cols}, found {len(raw)}")
        data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        return data.reshape(rows, cols).astype(np.float64)
    try:
        text = raw.decode("utf-8")
        rows = [line for line in csv.reader(text.splitlines()) if line]
        out = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    except (UnicodeDecodeError, ValueError) as exc:
        raise UsageError(f"{path}: not a valid CSV matrix ({exc})") from None
    if out.ndim != 2 or out.size == 0:
        raise UsageError(f"{path}: empty or ragged matrix")
    return out


def read_vector(path) -> np.ndarray:
    m = read_matrix(path)
    if m.shape[0] != 1 and m.shape[1] != 1:
        raise UsageError(f"{path}: expected a vector, got a {m.shape[0]}x{m.shape[1]} matrix")
    return m.ravel()


def write_matrix(path, M) -> None:
    path = Path(path)
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    if path.suffix.lower() in (".rsmx", ".bin"):
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, M.shape[0], M.shape[1], 0))
            fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())
        return
    # repr keeps the round trip exact
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


# ---------------------------------------------------------------- helpers

def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    out = {k.replace("-", "_"): v for k, v in cfg.items()}
    if "lambda" in out:
        out["lambda_"] = out.pop("lambda")
    return out


def _merge(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    """Fill unset flags from the config file, then from built-in defaults."""
    file_cfg = _load_config(getattr(args, "config", None))
    # advanced solver settings (iteration caps, schedules) live under "solver"
    args.solver = file_cfg.pop("solver", None) or {}
    if not isinstance(args.solver, dict):
        raise UsageError("config key 'solver' must hold a JSON object")
    known = set(vars(args))
    unknown = set(file_cfg) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in sorted(known):
        if getattr(args, key) is None:
            if key in file_cfg:
                setattr(args, key, file_cfg[key])
            elif key in defaults:
                setattr(args, key, defaults[key])
    return args


def _parse_lambda(value):
    if value is None or value == "auto":
        return "auto"
    try:
        lam = float(value)
    except (TypeError, ValueError):
        raise UsageError(f"--lambda must be a positive number or 'auto', got {value!r}") from None
    if not lam > 0 or not math.isfinite(lam):
        raise UsageError(f"--lambda must be positive, got {value!r}")
    return lam


def _parse_loss(value) -> Loss:
    try:
        return Loss.parse(value)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None


def _solver_config(args) -> SolverConfig:
    extra = dict(getattr(args, "solver", None) or {})
    known = {f.name for f in fields(SolverConfig)}
    unknown = set(extra) - known
    if unknown:
        raise UsageError(f"unknown solver settings: {', '.join(sorted(unknown))}")
    try:
        return SolverConfig(**extra).updated(
            eps=args.eps, eps_tilde=args.eps_tilde, m_add=args.m_add, m_cap=args.m_cap,
        )
    except (InvalidArgumentError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def _choose_lambda(lam, loss: Loss, A: np.ndarray, seed: int, draws: int = 1000) -> float:
    if lam != "auto":
        return float(lam)
    if loss is Loss.WILCOXON:
        return rank_lambda(A, LambdaSpec(draws=draws, seed=seed))
    return sqrt_lasso_lambda(A.shape[0])


def worker_count(n_tasks: int) -> int:
    """Pool size: ``RANKSIEVE_THREADS`` if set, else the CPU count, never above ``n_tasks``."""
    env = os.environ.get("RANKSIEVE_THREADS")
    if env is None or env.strip() == "":
        cap = os.cpu_count() or 1
    else:
        try:
            cap = int(env)
        except ValueError:
            raise UsageError(f"RANKSIEVE_THREADS must be a positive integer, got {env!r}") from None
        if cap < 1:
            raise UsageError(f"RANKSIEVE_THREADS must be a positive integer, got {env!r}")
    return max(1, min(cap, n_tasks))


def _emit(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
        return
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text)


def _write_trace(path, trace: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TraceRecord.FIELDS)
        w.writeheader()
        for row in trace:
            w.writerow({k: _cell(v) for k, v in row.items()})


def _cell(v):
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return repr(v) if math.isfinite(v) else "NA"


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


# ---------------------------------------------------------------- solve

def cmd_solve(args) -> int:
    args = _merge(args, {"lambda_": "auto", "loss": "rank", "seed": 0, "eps": None,
                         "eps_tilde": None, "no_sieve": False, "reference": False})
    A = read_matrix(args.matrix)
    b = read_vector(args.response)
    if b.shape[0] != A.shape[0]:
        raise UsageError(f"response has {b.shape[0]} entries, matrix has {A.shape[0]} rows")
    loss = _parse_loss(args.loss)
    lam = _parse_lambda(args.lambda_)
    cfg = _solver_config(args)
    lam_value = _choose_lambda(lam, loss, A, int(args.seed))
    try:
        data = ProblemData(A, b, lam_value, loss)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None

    header = {"loss": loss.value, "lambda": lam_value,
              "lambda_source": "auto" if lam == "auto" else "flag",
              "seed": int(args.seed), "n": data.n, "p": data.p}
    if args.reference:
        t0 = time.perf_counter()
        ref = splitting_solve(data, tol=min(cfg.eps, 1e-8))
        u = b - A @ ref.x
        _, eta = kkt_residual(data, ref.x, u, ref.alpha)
        out = {**header, "solver": "splitting", "val": ref.val, "eta_kkt": eta,
               "iterations": ref.iterations, "converged": ref.converged,
               "wall_time_total": time.perf_counter() - t0, "x": ref.x.tolist()}
        _emit(json.dumps(_json_safe(out), indent=2), args.out)
        return EXIT_OK if ref.converged else EXIT_NUMERIC

    code = EXIT_OK
    try:
        report = as_solve(data, cfg, sieve=not args.no_sieve)
    except NonConvergenceError as exc:
        report = exc.best
        code = EXIT_NUMERIC
        if report is None:
            print(f"ranksieve: {exc}", file=sys.stderr)
            return code
        print(f"ranksieve: did not converge: {exc}", file=sys.stderr)
    if args.trace:
        _write_trace(args.trace, report.trace)
    out = {**header, "solver": "sieve" if not args.no_sieve else "full", **report.to_dict()}
    _emit(json.dumps(_json_safe(out), indent=2), args.out)
    return code


# ---------------------------------------------------------------- synth

def _synth_spec(args) -> SynthSpec:
    try:
        return SynthSpec(args.experiment, int(args.n), int(args.p), args.error,
                         int(args.seed), args.r, bool(args.exp_mean3))
    except (InvalidArgumentError, TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_synth(args) -> int:
    args = _merge(args, {"seed": 0, "format": "csv", "exp_mean3": False})
    if args.experiment is None or args.n is None or args.p is None:
        raise UsageError("synth needs --experiment, --n and --p")
    spec = _synth_spec(args)
    inst = generate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = {"csv": ".csv", "rsmx": ".rsmx"}[args.format]
    write_matrix(out / f"X{ext}", inst.A)
    write_matrix(out / f"b{ext}", inst.b)
    write_matrix(out / f"x_true{ext}", inst.x_true)
    meta = spec.to_dict()
    meta["nonzeros"] = int(np.count_nonzero(inst.x_true))
    (out / "spec.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- tune

def cmd_tune(args) -> int:
    args = _merge(args, {"loss": "rank", "seed": 0, "draws": 1000, "c": 1.1, "alpha0": 0.10})
    loss = _parse_loss(args.loss)
    A = read_matrix(args.matrix)
    try:
        if loss is Loss.WILCOXON:
            spec = LambdaSpec(c=float(args.c), alpha0=float(args.alpha0),
                              draws=int(args.draws), seed=int(args.seed))
            lam = rank_lambda(A, spec)
            out = {"loss": loss.value, "lambda": lam, "c": spec.c, "alpha0": spec.alpha0,
                   "draws": spec.draws, "seed": spec.seed}
        else:
            lam = sqrt_lasso_lambda(A.shape[0], c=float(args.c))
            out = {"loss": loss.value, "lambda": lam, "c": float(args.c), "n": A.shape[0]}
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    _emit(json.dumps(out, indent=2), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- bench

def _bench_one(job: dict) -> dict:
    """One replication; returns a row dict. Never raises."""
    row = {"rep": job["rep"], "seed": job["seed"], "status": "ok", "error": ""}
    try:
        spec = SynthSpec(job["experiment"], job["n"], job["p"], job["error"], job["seed"],
                         job["r"], job["exp_mean3"])
        inst = generate(spec)
        loss = Loss.parse(job["loss"])
        lam = _choose_lambda(job["lambda"], loss, inst.A, job["seed"])
        data = inst.problem(lam, loss)
        cfg = SolverConfig(**job["solver"]).updated(
            eps=job["eps"], eps_tilde=job["eps_tilde"], m_add=job["m_add"], m_cap=job["m_cap"])
        try:
            rep = as_solve(data, cfg, sieve=not job["no_sieve"])
        except NonConvergenceError as exc:
            if exc.best is None:
                raise
            rep = exc.best
            row["status"] = "nonconverged"
            row["error"] = str(exc)
        x_ref = None
        if job["with_cr"]:
            x_ref = as_solve(data, cfg, sieve=False).x
        m = evaluate(data, rep.x, rep.u, rep.alpha, inst.x_true, inst.sigma_x)
        row.update({
            "eta_kkt": rep.eta_kkt, "val": rep.val, "L1": m.l1_err, "L2": m.l2_err,
            "ME": m.me, "FP": m.fp, "FN": m.fn, "t": rep.wall_time_total,
            "It-AS": rep.iters["as"], "It-PPA": rep.iters["ppa"], "It-ALM": rep.iters["alm"],
            "It-SSN": rep.iters["ssn"], "t_ssn": rep.wall_time_ssn,
            "lambda": lam, "theorem_violations": rep.theorem_violations,
            "max_support": max(rep.support_history) if rep.support_history else 0,
        })
        if x_ref is not None:
            row["CR"] = correct_ratio(rep.support, x_ref)
    except Exception as exc:  # recorded in-row, the sweep goes on
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def run_bench(job: dict, reps: int, seed0: int, workers: int) -> list[dict]:
    jobs = [dict(job, rep=i, seed=seed0 + i) for i in range(reps)]
    if workers <= 1:
        return [_bench_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map keeps replication order whatever the completion order
        return list(pool.map(_bench_one, jobs))


def bench_table(rows: list[dict], with_cr: bool) -> tuple[list[str], list[dict]]:
    cols = list(BENCH_COLUMNS) + (["CR"] if with_cr else [])
    header = ["rep", "seed", "status"] + cols + ["error"]
    ok = [r for r in rows if r["status"] == "ok"]
    mean = {"rep": "mean", "seed": "", "status": f"{len(ok)}/{len(rows)}", "error": ""}
    for c in cols:
        vals = [float(r[c]) for r in ok if r.get(c) is not None]
        mean[c] = float(np.mean(vals)) if vals else None
    out = []
    for r in rows + [mean]:
        out.append({k: (r.get(k) if k in ("rep", "seed", "status", "error") else _cell(r.get(k)))
                    for k in header})
    return header, out


def cmd_bench(args) -> int:
    args = _merge(args, {"reps": 20, "seed": 0, "lambda_": "auto", "no_sieve": False,
                         "with_cr": False, "exp_mean3": False})
    if args.experiment is None or args.n is None or args.p is None:
        raise UsageError("bench needs --experiment, --n and --p")
    spec = _synth_spec(args)  # validates experiment, sizes and error up front
    loss = args.loss if args.loss is not None else ("sqrt" if spec.experiment == "E5" else "rank")
    _parse_loss(loss)
    lam = _parse_lambda(args.lambda_)
    _solver_config(args)
    reps = int(args.reps)
    if reps < 1:
        raise UsageError("--reps must be at least 1")
    job = {"experiment": spec.experiment, "n": spec.n, "p": spec.p, "error": spec.error.label(),
           "r": args.r, "exp_mean3": bool(args.exp_mean3), "loss": loss, "lambda": lam,
           "eps": args.eps, "eps_tilde": args.eps_tilde, "m_add": args.m_add, "m_cap": args.m_cap,
           "no_sieve": bool(args.no_sieve), "with_cr": bool(args.with_cr),
           "solver": dict(args.solver)}
    rows = run_bench(job, reps, int(args.seed), worker_count(reps))
    header, table = bench_table(rows, bool(args.with_cr))
    fh = sys.stdout if args.out in (None, "-") else open(args.out, "w", encoding="utf-8", newline="")
    try:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        w.writerows(table)
    finally:
        if fh is not sys.stdout:
            fh.close()
    for r in rows:
        if r["status"] != "ok":
            print(f"ranksieve: rep {r['rep']} (seed {r['seed']}) {r['status']}: {r['error']}",
                  file=sys.stderr)
    ok = sum(r["status"] == "ok" for r in rows)
    return EXIT_OK if ok >= 0.8 * reps else EXIT_NUMERIC


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", help="rank (Wilcoxon) or sqrt (Euclidean norm)")
    p.add_argument("--lambda", dest="lambda_", metavar="LAMBDA",
                   help="penalty weight or 'auto' (default)")
    p.add_argument("--eps", type=float, help="KKT tolerance for the full problem")
    p.add_argument("--eps-tilde", dest="eps_tilde", type=float,
                   help="KKT tolerance for the restricted problems")
    p.add_argument("--m-add", dest="m_add", type=int, help="indices added per sieve round")
    p.add_argument("--m-cap", dest="m_cap", type=int, help="cap on indices added per round")
    p.add_argument("--no-sieve", dest="no_sieve", action="store_const", const=True,
                   help="solve on all columns at once")
    p.add_argument("--seed", type=int, help="seed for lambda simulation / data")
    p.add_argument("--config", help="JSON file supplying any of the flags")


def _synth_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--experiment", "-e", help="E1 ... E6")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--error", help="error law, e.g. normal:0.25, mixture, cauchy")
    p.add_argument("--r", type=float, help="compound-symmetry correlation (E3 only)")
    p.add_argument("--exp-mean3", dest="exp_mean3", action="store_const", const=True,
                   help="E4: exponential design with mean 3 instead of rate 3")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ranksieve", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve an instance read from files")
    p.add_argument("matrix")
    p.add_argument("response")
    _solver_flags(p)
    p.add_argument("--reference", action="store_const", const=True,
                   help="run the ADMM reference solver instead")
    p.add_argument("--trace", help="write the per-round trace CSV here")
    p.add_argument("--out", help="report path (default stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("synth", help="generate a synthetic instance")
    _synth_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=("csv", "rsmx"))
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.add_argument("--config", help="JSON file supplying any of the flags")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("tune", help="tuning-free lambda for a design matrix")
    p.add_argument("matrix")
    p.add_argument("--loss")
    p.add_argument("--seed", type=int)
    p.add_argument("--draws", type=int)
    p.add_argument("--c", type=float)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--out")
    p.add_argument("--config", help="JSON file supplying any of the flags")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("bench", help="seeded replications of a benchmark experiment")
    _synth_flags(p)
    _solver_flags(p)
    p.add_argument("--reps", type=int)
    p.add_argument("--with-cr", dest="with_cr", action="store_const", const=True,
                   help="also solve in full space and report the correct ratio")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"ranksieve: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ranksieve: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericFailureError, NonConvergenceError) as exc:
        print(f"ranksieve: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
