"""Command-line front end.

    pdmlsvd decompose  --input K.tns --out DIR             (dual path)
    pdmlsvd decompose  --path primal --features F1 .. FD --compat C.tns --out DIR
    pdmlsvd kernel     --variant polynomial --inputs X1 .. XD --degree 2 --out K.tns
    pdmlsvd verify     --factors DIR --input K.tns [--features .. --compat ..]
    pdmlsvd convert    --model DIR --features .. --compat C.tns --to primal --out DIR
    pdmlsvd bench      --grid 50:5,200:5

Exit status is 0 iff every hard check passed; 1 when a check failed; 2 on
bad input or a library error.
"""
from __future__ import annotations

import argparse
import contextlib
import sys
import time
import tracemalloc
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .decomposition import (
    MlsvdFactors,
    RankSpec,
    gram_diagonality,
    lanczos_residuals,
    mlsvd,
    reconstruct,
    relative_error,
    semi_orthogonality,
    superdiagonality,
)
from .errors import MlsvdError, ShapeError
from .fileio import read_factors, read_model, read_tensor, write_factors, write_model, write_tensor
from .kernels import DEFAULT_BUDGET, ELEMENTWISE_FUNCTIONS, KernelSpec, build_kernel
from .linalg import projector_distance, thin_svd
from .primal_dual import (
    DualModel,
    PrimalModel,
    PrimalProblem,
    dual_to_primal,
    implicit_lanczos_residuals,
    implicit_reconstruction_error,
    kkt_residuals,
    objective,
    primal_to_dual,
    solve_dual,
    solve_primal,
)
from .rng import Lcg64


class Report:
    """Ordered key/value lines plus the hard checks that decide the exit code."""

    def __init__(self, fmt: str = "human"):
        self.fmt = fmt
        self.items: list[tuple[str, str]] = []
        self.failed: list[str] = []

    def add(self, key: str, value) -> None:
        self.items.append((key, _fmt(value)))

    def check(self, key: str, value: float, limit: float) -> bool:
        ok = bool(value <= limit)
        self.add(key, value)
        if not ok:
            self.failed.append(key)
        return ok

    def measure(self, key: str, value: float, limit: float, hard: bool) -> None:
        """A hard check when ``hard``; otherwise reported only."""
        if hard:
            self.check(key, value, limit)
        else:
            self.add(key, value)

    def flag(self, key: str, ok: bool) -> None:
        self.add(key, "pass" if ok else "fail")
        if not ok:
            self.failed.append(key)

    def note(self, text: str) -> None:
        self.items.append(("note", text))

    @property
    def passed(self) -> bool:
        return not self.failed

    def render(self) -> str:
        items = self.items + [("status", "pass" if self.passed else "fail")]
        if self.fmt == "kv":
            return "\n".join(f"{k}={v}" for k, v in items)
        width = max(len(k) for k, _ in items)
        lines = [f"{k:<{width}}  {v}" for k, v in items]
        if self.failed:
            lines.append("failed checks: " + ", ".join(self.failed))
        return "\n".join(lines)


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6e}"
    return ",".join(_fmt(v) for v in value)


def _rank_spec(args) -> RankSpec:
    ranks = tuple(int(r) for r in args.rank.split(",")) if args.rank else None
    return RankSpec(ranks=ranks, eps=args.eps)


def _problem(args, core=None) -> PrimalProblem:
    if not args.features or args.compat is None:
        raise ValueError("--features and --compat are required here")
    return PrimalProblem([read_tensor(f) for f in args.features], read_tensor(args.compat), core)


def _add_factor_report(report: Report, f: MlsvdFactors, tol: float, exact: bool = True) -> None:
    report.add("order", f.order)
    report.add("shape", f.shape)
    for d in range(f.order):
        report.add(f"mode{d + 1}.rank", f.ranks[d])
        report.add(f"mode{d + 1}.eigenvalues", f.mode_gains(d))
    for d, dev in enumerate(semi_orthogonality(f)):
        report.check(f"mode{d + 1}.orthogonality", dev, tol)
    # A truncated core is not all-orthogonal; then the ratios are informational.
    for d, ratio in enumerate(gram_diagonality(f.core)):
        report.measure(f"gram_diagonality.mode{d + 1}", ratio, tol, exact)
    report.add("superdiagonality", superdiagonality(f.core))


def _svd_equivalence(report: Report, k: np.ndarray, f: MlsvdFactors, tol: float) -> None:
    svd = thin_svd(k)
    r = min(svd.rank, f.ranks[0], f.ranks[1])
    gains = np.sqrt(f.mode_gains(0)[:r])
    sv_gap = float(np.max(np.abs(gains - svd.s[:r]) / svd.s[0]))
    proj = max(
        projector_distance(f.factors[0][:, :r], svd.u[:, :r]),
        projector_distance(f.factors[1][:, :r], svd.v[:, :r]),
    )
    report.add("svd_equivalence.singular_values", sv_gap)
    report.add("svd_equivalence.projectors", proj)
    report.flag("svd_equivalence", sv_gap <= tol and proj <= tol)


def _untruncated(spec: RankSpec, recon: float, tol: float) -> bool:
    """Lanczos residuals, all-orthogonality and J = 0 hold exactly only when
    nothing is truncated, or when what was discarded is below ``tol``."""
    return (spec.ranks is None and spec.eps is None) or recon <= tol


def cmd_decompose(args) -> Report:
    report = Report(args.report)
    spec = _rank_spec(args)
    tol = args.tol
    if args.path == "dual":
        if args.input is None:
            raise ValueError("--input is required for the dual path")
        k = read_tensor(args.input)
        f = mlsvd(k, spec)
        lanczos = lanczos_residuals(f, k)
        recon = relative_error(reconstruct(f), k)
        # K viewed as a primal problem with identity features and C = K.
        p = PrimalProblem([np.eye(n) for n in k.shape], k)
        dm = DualModel(f.factors, tuple(u * f.mode_gains(d) for d, u in enumerate(f.factors)), k, f.core)
        norm_sq = float(np.sum(k * k))
    else:
        p = _problem(args)
        _, dm = solve_primal(p, spec, budget=args.budget)
        f = MlsvdFactors(dm.multipliers, dm.core)
        lanczos = implicit_lanczos_residuals(p, dm)
        recon = implicit_reconstruction_error(p, dm)
        norm_sq = p.kernel_norm_sq()
    exact = _untruncated(spec, recon, tol)
    report.add("path", args.path)
    _add_factor_report(report, f, tol, exact)
    for d, res in enumerate(lanczos):
        report.measure(f"residual.lanczos.mode{d + 1}", res, tol, exact)
    report.measure("reconstruction_error", recon, tol, exact)
    j = None
    if exact:
        pm = dual_to_primal(p, dm)
        j = objective(p.with_core(dm.core), pm.weights, pm.errors)
        report.add("objective", j)
        report.check("objective.relative", abs(j) / (norm_sq or 1.0), tol)
    else:
        report.note("objective skipped: a truncated core is not all-orthogonal")
    if f.order == 2 and args.path == "dual":
        _svd_equivalence(report, k, f, tol)
    if args.out:
        residuals = {f"lanczos.mode{d + 1}": r for d, r in enumerate(lanczos)}
        if j is not None:
            residuals["objective"] = j
        write_factors(f, args.out, residuals, fmt=args.format)
        report.add("output", str(args.out))
    return report


def _kernel_spec(args) -> KernelSpec:
    v = args.variant
    if v == "generic":
        return KernelSpec(v, features=tuple(read_tensor(f) for f in args.features or ()),
                          compat=read_tensor(args.compat) if args.compat else None)
    if v in ("polynomial", "exponential"):
        inputs = tuple(read_tensor(f) for f in args.inputs or ())
        return KernelSpec(v, inputs=inputs or None, degree=args.degree)
    data = read_tensor(args.input) if args.input else None
    return KernelSpec(v, data=data, function=args.function)


def cmd_kernel(args) -> Report:
    report = Report(args.report)
    k, c, residual = build_kernel(_kernel_spec(args), budget=args.budget)
    report.add("variant", args.variant)
    report.add("shape", k.shape)
    report.add("norm", float(np.linalg.norm(k)))
    if residual is not None:
        report.add("compatibility.residual", residual)
        report.add("compatibility.residual.relative", residual / (float(np.linalg.norm(k)) or 1.0))
    if args.out:
        write_tensor(k, args.out, args.format)
        report.add("output", str(args.out))
    if c is not None and args.compat_out:
        write_tensor(c, args.compat_out, args.format)
        report.add("compat_output", str(args.compat_out))
    return report


def cmd_verify(args) -> Report:
    report = Report(args.report)
    f = read_factors(args.factors)
    t = read_tensor(args.input)
    if f.shape != t.shape:
        raise ShapeError(f"factors describe shape {f.shape}, input tensor has shape {t.shape}")
    tol = args.tol
    recon = relative_error(reconstruct(f), t)
    exact = _untruncated(_rank_spec(args), recon, tol)
    _add_factor_report(report, f, tol, exact)
    for d, res in enumerate(lanczos_residuals(f, t)):
        report.measure(f"residual.lanczos.mode{d + 1}", res, tol, exact)
    report.measure("reconstruction_error", recon, tol, exact)
    if args.features and exact:
        p = _problem(args, f.core)
        dm = DualModel(f.factors, tuple(u * f.mode_gains(d) for d, u in enumerate(f.factors)), core=f.core)
        pm = dual_to_primal(p, dm)
        for key, value in kkt_residuals(p, pm, dm).items():
            report.check(f"kkt.{key}", value, tol)
        j = objective(p, pm.weights, pm.errors)
        report.add("objective", j)
        report.check("objective.relative", abs(j) / (p.kernel_norm_sq() or 1.0), tol)
    return report


def cmd_convert(args) -> Report:
    report = Report(args.report)
    model = read_model(args.model)
    p = _problem(args)
    if args.to == "primal":
        out = dual_to_primal(p, model) if isinstance(model, DualModel) else model
        pm, dm = out, model if isinstance(model, DualModel) else primal_to_dual(p, model)
    else:
        out = primal_to_dual(p, model) if isinstance(model, PrimalModel) else model
        pm, dm = model if isinstance(model, PrimalModel) else dual_to_primal(p, model), out
    report.add("from", "primal" if isinstance(model, PrimalModel) else "dual")
    report.add("to", args.to)
    if model.core is not None:
        for key, value in kkt_residuals(p.with_core(model.core), pm, dm).items():
            report.check(f"kkt.{key}", value, args.tol)
    write_model(out, args.out, args.format)
    report.add("output", str(args.out))
    return report


@contextlib.contextmanager
def _measure() -> Iterator[dict]:
    stats: dict = {}
    tracemalloc.start()
    start = time.perf_counter()
    try:
        yield stats
    finally:
        stats["seconds"] = time.perf_counter() - start
        stats["peak_bytes"] = tracemalloc.get_traced_memory()[1]
        tracemalloc.stop()


def synthetic_problem(n: int, m: int, order: int, rng: Lcg64) -> PrimalProblem:
    features = [rng.uniform((n, m)) for _ in range(order)]
    return PrimalProblem(features, rng.uniform((m,) * order))


def cmd_bench(args) -> Report:
    report = Report(args.report)
    rng = Lcg64(args.seed)
    grid = [tuple(int(x) for x in cell.split(":")) for cell in args.grid.split(",")]
    rows = []
    for n, m in grid:
        p = synthetic_problem(n, m, args.order, rng)
        with _measure() as primal:
            _, dm_primal = solve_primal(p, _rank_spec(args))
        dual: dict = {}
        agreement = None
        if n**args.order > args.budget:
            report.note(f"N={n} M={m}: dual skipped, kernel of {n ** args.order} entries exceeds budget")
        else:
            with _measure() as dual:
                dm_dual = solve_dual(p, _rank_spec(args), args.budget)
            agreement = max(
                projector_distance(a, b) for a, b in zip(dm_primal.multipliers, dm_dual.multipliers)
            )
            report.check(f"agreement.N{n}.M{m}", agreement, args.tol)
            if n > m and primal["seconds"] >= dual["seconds"]:
                report.note(f"warning: N={n} M={m}: primal path was not faster than dual")
        rows.append((n, m, primal, dual, agreement))
    header = f"{'N':>6} {'M':>5} {'primal_s':>10} {'primal_MB':>10} {'dual_s':>10} {'dual_MB':>10} {'agreement':>11}"
    lines = [header]
    for n, m, primal, dual, agreement in rows:
        key = f"bench.N{n}.M{m}"
        report.add(f"{key}.primal_seconds", primal["seconds"])
        report.add(f"{key}.primal_peak_bytes", primal["peak_bytes"])
        if dual:
            report.add(f"{key}.dual_seconds", dual["seconds"])
            report.add(f"{key}.dual_peak_bytes", dual["peak_bytes"])
        lines.append(
            f"{n:>6} {m:>5} {primal['seconds']:>10.4f} {primal['peak_bytes'] / 2**20:>10.2f} "
            + (f"{dual['seconds']:>10.4f} {dual['peak_bytes'] / 2**20:>10.2f} {agreement:>11.2e}"
               if dual else f"{'skipped':>10} {'-':>10} {'-':>11}")
        )
    if args.report == "human":
        print("\n".join(lines))
    return report


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rank", help="explicit ranks, comma separated (e.g. 3,2,2)")
    common.add_argument("--eps", type=float, help="relative energy threshold for rank selection")
    common.add_argument("--tol", type=float, default=1e-8, help="threshold for hard checks (default 1e-8)")
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                        help="maximum number of entries of a materialized kernel tensor")
    common.add_argument("--seed", type=int, default=42, help="seed of the portable LCG")
    common.add_argument("--threads", type=int, help="cap on BLAS threads")
    common.add_argument("--report", choices=("human", "kv"), default="human")
    common.add_argument("--format", choices=("binary", "text"), default="binary",
                        help="format of written tensor files")

    parser = argparse.ArgumentParser(prog="pdmlsvd", description=__doc__.split("\n\n")[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    dec = sub.add_parser("decompose", parents=[common], help="MLSVD via the dual or primal path")
    dec.add_argument("--path", choices=("dual", "primal"), default="dual")
    dec.add_argument("--input", type=Path, help="kernel/data tensor (dual path)")
    dec.add_argument("--features", nargs="+", type=Path)
    dec.add_argument("--compat", type=Path)
    dec.add_argument("--out", type=Path, help="directory for factor files")
    dec.set_defaults(func=cmd_decompose)

    ker = sub.add_parser("kernel", parents=[common], help="build a kernel tensor")
    ker.add_argument("--variant", choices=KernelSpec.VARIANTS, required=True)
    ker.add_argument("--features", nargs="+", type=Path)
    ker.add_argument("--compat", type=Path)
    ker.add_argument("--inputs", nargs="+", type=Path)
    ker.add_argument("--input", type=Path)
    ker.add_argument("--degree", type=int, default=1)
    ker.add_argument("--function", choices=sorted(ELEMENTWISE_FUNCTIONS))
    ker.add_argument("--out", type=Path)
    ker.add_argument("--compat-out", type=Path)
    ker.set_defaults(func=cmd_kernel)

    ver = sub.add_parser("verify", parents=[common], help="check the invariants of stored factors")
    ver.add_argument("--factors", type=Path, required=True)
    ver.add_argument("--input", type=Path, required=True)
    ver.add_argument("--features", nargs="+", type=Path)
    ver.add_argument("--compat", type=Path)
    ver.set_defaults(func=cmd_verify)

    con = sub.add_parser("convert", parents=[common], help="convert primal <-> dual model files")
    con.add_argument("--model", type=Path, required=True)
    con.add_argument("--features", nargs="+", type=Path, required=True)
    con.add_argument("--compat", type=Path, required=True)
    con.add_argument("--to", choices=("primal", "dual"), required=True)
    con.add_argument("--out", type=Path, required=True)
    con.set_defaults(func=cmd_convert)

    ben = sub.add_parser("bench", parents=[common], help="time primal against dual")
    ben.add_argument("--grid", default="50:5,200:5", help="comma separated N:M pairs")
    ben.add_argument("--order", type=int, default=3)
    ben.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    limiter = contextlib.nullcontext()
    if args.threads:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(args.threads)
    try:
        with limiter:
            report = args.func(args)
    except (MlsvdError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(report.render())
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
