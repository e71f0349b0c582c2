"""Command-line entry point: compress, decompress, verify, baseline, benchmark."""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import codec
from .codec import Archive, ArchiveError
from .ebtune import TuneParams
from .expr import DomainError, ExprError
from .fixtures import FIELDS, catalog, make_fields, seed_from_env
from .pipeline import BoundError, Bounds, baseline_search, compress_fields, report, tau_header
from .qoi import DTYPES, KINDS, POINT, REGION, Field, QoiSpec


class CliError(Exception):
    pass


def _ints(text: str) -> tuple[int, ...]:
    try:
        out = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out or any(n <= 0 for n in out):
        raise argparse.ArgumentTypeError("extents must be positive")
    return out


def _paths(text: str) -> list[str]:
    return [p for p in text.split(",") if p]


def _add_bounds(p: argparse.ArgumentParser) -> None:
    eb = p.add_mutually_exclusive_group(required=True)
    eb.add_argument("--eb-rel", type=float, help="data error bound relative to the value range")
    eb.add_argument("--eb-abs", type=float, help="absolute data error bound")
    tau = p.add_mutually_exclusive_group(required=True)
    tau.add_argument("--qoi-tol-rel", type=float, help="QoI tolerance relative to the QoI range ('inf' disables)")
    tau.add_argument("--qoi-tol-abs", type=float, help="absolute QoI tolerance ('inf' disables)")


def _add_qoi(p: argparse.ArgumentParser) -> None:
    p.add_argument("--qoi", default="x^2", help='QoI expression, e.g. "x^2" or "sqrt(x^2+y^2+z^2)"')
    p.add_argument("--qoi-kind", choices=KINDS, default=POINT)
    p.add_argument("--block", type=_ints, default=(4, 4, 4), help="region shape for regional QoIs")
    p.add_argument("--c", type=float, default=TuneParams.c)
    p.add_argument("--beta", type=float, default=TuneParams.beta)
    p.add_argument("--c0", type=float, default=TuneParams.c0)
    p.add_argument("--no-theorem4", action="store_true", help="use only the deterministic threshold")
    p.add_argument("--no-tune", action="store_true", help="skip global error-bound tuning")
    p.add_argument("--report", choices=("table", "csv", "kv"), default="table")


def _add_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", type=_paths, help="raw row-major input file")
    p.add_argument("--fields", type=_paths, help="comma-separated input files bound to x,y,z,... in order")
    p.add_argument("--shape", type=_ints, required=True, help="extents, e.g. 64,64,64")
    p.add_argument("--dtype", choices=sorted(DTYPES), default="f32")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qoipress", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress with data and QoI bounds")
    _add_inputs(p)
    _add_bounds(p)
    _add_qoi(p)
    p.add_argument("--out", type=_paths, required=True,
                   help="archive path; several fields get '.0', '.1', ... unless one path per field is given")

    p = sub.add_parser("decompress", help="decode an archive to a raw file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="check an archive against its original and stored bounds")
    p.add_argument("--input", type=_paths, help="original raw file(s)")
    p.add_argument("--fields", type=_paths)
    p.add_argument("--archive", type=_paths, required=True)
    p.add_argument("--report", choices=("table", "csv", "kv"), default="table")

    p = sub.add_parser("baseline", help="uniform bound found by bisection on the QoI error")
    _add_inputs(p)
    _add_bounds(p)
    _add_qoi(p)
    p.add_argument("--max-probes", type=int, default=20)

    p = sub.add_parser("benchmark", help="QoI-aware vs baseline on synthetic fixtures (seed: QPET_SEED)")
    p.add_argument("--fixtures", default=",".join(FIELDS))
    p.add_argument("--qois", default="all", help="comma-separated catalog names, or 'all'")
    p.add_argument("--shape", type=_ints, default=(64, 64, 64))
    p.add_argument("--eb-rel", type=float, default=1e-2)
    p.add_argument("--qoi-tol-rel", type=float, default=1e-3)
    p.add_argument("--baseline", action="store_true", help="also run the bisection baseline")
    return ap


# ---------------------------------------------------------------------------


def _params(a) -> TuneParams:
    return TuneParams(c=0.0 if a.no_theorem4 else a.c, beta=a.beta, c0=a.c0)


def _bounds(a) -> Bounds:
    return Bounds(eb_rel=a.eb_rel, eb_abs=a.eb_abs, tau_rel=a.qoi_tol_rel, tau_abs=a.qoi_tol_abs)


def _spec(a, arity: int) -> QoiSpec:
    if a.qoi_kind == POINT:
        return QoiSpec.point(a.qoi)
    if a.qoi_kind == REGION:
        return QoiSpec.region(a.qoi, a.block)
    return QoiSpec.vector(a.qoi, arity=arity)


def _input_paths(a) -> list[str]:
    paths = (a.input or []) + (a.fields or [])
    if not paths:
        raise CliError("no input: pass --input or --fields")
    return paths


def _load(a) -> list[np.ndarray]:
    return [Field.from_file(p, a.shape, a.dtype).values for p in _input_paths(a)]


def _out_paths(out: list[str], k: int) -> list[str]:
    if len(out) == k:
        return out
    if len(out) == 1:
        return [f"{out[0]}.{j}" for j in range(k)]
    raise CliError(f"{len(out)} output paths for {k} fields")


def _emit(rep, fmt: str) -> None:
    text = {"table": rep.to_table, "csv": rep.to_csv, "kv": rep.to_kv}[fmt]()
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    sys.stdout.flush()


def _write_atomic(path: str, blob: bytes) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    Path(tmp).write_bytes(blob)
    os.replace(tmp, path)


def _config(a, spec: QoiSpec, extra: dict | None = None) -> dict:
    cfg = {
        "qoi": spec.expr, "qoi_kind": spec.kind,
        "block": None if spec.block is None else ",".join(map(str, spec.block)),
        "eb_rel": a.eb_rel, "eb_abs": a.eb_abs,
        "qoi_tol_rel": a.qoi_tol_rel, "qoi_tol_abs": a.qoi_tol_abs,
        "c": a.c, "beta": a.beta, "c0": a.c0, "prob_threshold": not a.no_theorem4, "tune": not a.no_tune,
    }
    cfg.update(extra or {})
    return cfg


def cmd_compress(a) -> int:
    arrays = _load(a)
    spec = _spec(a, len(arrays))
    outs = _out_paths(a.out, len(arrays))
    res = compress_fields(arrays, spec, _bounds(a), _params(a), tune=not a.no_tune)
    blobs = res.blobs()
    for path, blob in zip(outs, blobs):
        _write_atomic(path, blob)
    t0 = time.perf_counter()
    dec = [codec.decompress(b) for b in blobs]
    dt = time.perf_counter() - t0
    rep = report(
        arrays, dec, spec, sum(len(b) for b in blobs),
        n_corrections=res.n_corrections, compress_s=res.compress_s, decompress_s=dt,
        eps_abs=res.eps_abs, tau_abs=res.tau_abs,
        config=_config(a, spec, {
            "eb_global": ",".join(f"{p.eps_g:.9g}" for p in res.plans),
            "quantile": ",".join(str(p.quantile) for p in res.plans),
        }),
    )
    _emit(rep, a.report)
    return 0


def cmd_decompress(a) -> int:
    blob = Path(a.input).read_bytes()
    out = codec.decompress(blob)
    _write_atomic(a.out, out.tobytes())
    return 0


def cmd_verify(a) -> int:
    archives = [Archive.from_bytes(Path(p).read_bytes()) for p in a.archive]
    paths = (a.input or []) + (a.fields or [])
    if len(paths) != len(archives):
        raise CliError(f"{len(paths)} original file(s) for {len(archives)} archive(s)")
    h = archives[0].header
    spec = QoiSpec.from_header(h["qoi"])
    originals = []
    for p, arc in zip(paths, archives):
        shape = tuple(arc.header["shape"])
        if shape != tuple(h["shape"]):
            raise CliError("archives disagree on shape")
        originals.append(Field.from_file(p, shape, arc.header["dtype"]).values)
    t0 = time.perf_counter()
    dec = [codec.decompress(arc) for arc in archives]
    dt = time.perf_counter() - t0
    eps = [float(arc.header["eb_user"]) for arc in archives]
    tau = tau_header(h)
    rep = report(
        originals, dec, spec, sum(arc.nbytes for arc in archives),
        n_corrections=sum(int(arc.header.get("n_corrections", 0)) for arc in archives),
        decompress_s=dt, eps_abs=eps, tau_abs=tau,
        config={"qoi": spec.expr, "qoi_kind": spec.kind, "eb_abs": ",".join(f"{e:.9g}" for e in eps),
                "qoi_tol_abs": tau},
    )
    _emit(rep, a.report)
    print("PASS" if rep.passed else "FAIL")
    return 0 if rep.passed else 1


def cmd_baseline(a) -> int:
    arrays = _load(a)
    spec = _spec(a, len(arrays))
    t0 = time.perf_counter()
    res = baseline_search(arrays, spec, _bounds(a), max_probes=a.max_probes)
    elapsed = time.perf_counter() - t0
    cfg = _config(a, spec, {"probes": res.probes, "bracketed": res.bracketed, "eb_uniform": res.eps})
    if not res.bracketed:
        print(f"baseline: no probe met the QoI tolerance after {res.probes} probes", file=sys.stderr)
        print(f"probes={res.probes}\nbracketed=False")
        return 1
    rep = report(arrays, res.recons, spec, res.archive_bytes, compress_s=elapsed, config=cfg)
    _emit(rep, a.report)
    return 0


def cmd_benchmark(a) -> int:
    seed = seed_from_env()
    cat = catalog()
    names = list(cat) if a.qois == "all" else _paths(a.qois)
    unknown = [n for n in names if n not in cat]
    if unknown:
        raise CliError(f"unknown catalog QoI(s): {unknown}; choose from {list(cat)}")
    bounds = Bounds(eb_rel=a.eb_rel, tau_rel=a.qoi_tol_rel)
    header = True
    for fx in _paths(a.fixtures):
        if fx not in FIELDS:
            raise CliError(f"unknown fixture {fx!r}; choose from {list(FIELDS)}")
        for name in names:
            spec = cat[name]
            arrays = make_fields(fx, spec.arity, a.shape, seed)
            res = compress_fields(arrays, spec, bounds)
            blobs = res.blobs()
            t0 = time.perf_counter()
            dec = [codec.decompress(b) for b in blobs]
            dt = time.perf_counter() - t0
            cfg = {"fixture": fx, "qoi": name, "seed": seed, "method": "qoi-aware",
                   "eb_rel": a.eb_rel, "qoi_tol_rel": a.qoi_tol_rel}
            rep = report(arrays, dec, spec, sum(len(b) for b in blobs), n_corrections=res.n_corrections,
                         compress_s=res.compress_s, decompress_s=dt, eps_abs=res.eps_abs,
                         tau_abs=res.tau_abs, config=cfg)
            sys.stdout.write(rep.to_csv(header=header))
            header = False
            if a.baseline:
                b = baseline_search(arrays, spec, bounds)
                print(f"# baseline fixture={fx} qoi={name} probes={b.probes} bracketed={b.bracketed} "
                      f"cr={b.cr(sum(x.nbytes for x in arrays))}")
    return 0


COMMANDS = {
    "compress": cmd_compress,
    "decompress": cmd_decompress,
    "verify": cmd_verify,
    "baseline": cmd_baseline,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        return COMMANDS[a.command](a)
    except (CliError, BoundError, ExprError, DomainError, ArchiveError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
