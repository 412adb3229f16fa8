"""Command line entry point: ``dpgc synth | eval | demo | budget``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import platform
import secrets
import sys
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, bundled_path
from .copula import decode_rows
from .dataset import AttributeSchema, BinaryDataset, DataError, GroupMap, SchemaError, encode_csv
from .evaluate import (
    VARIANTS,
    ErrorReport,
    answer_queries,
    artificial_order_demo,
    correlation_split,
    exact_pearson,
    lap_epsilon,
    query_table,
    run_baselines,
)
from .pipeline import release_statistics, synthesize_from_statistics
from .privacy import (
    DEFAULT_DELTA,
    BudgetExhausted,
    ConvergenceError,
    NoiseSource,
    PrivacyPlan,
    compose_epsilon,
    mechanism_count,
    sensitivity_closed_form,
    sensitivity_demo,
    solve_per_mechanism_epsilon,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
UNSAFE_VARIANTS = ("cop", "cop-ID", "cop-1", "no-cor")
_VARIANT_NAMES = {v.lower(): v for v in VARIANTS}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}': {exc}")
        self.stage = stage
        self.cause = exc


@contextmanager
def stage(name: str):
    """Tag any failure with the pipeline stage it came from."""
    try:
        yield
    except (ConfigError, StageError):
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, (ConfigError, SchemaError)):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, OSError)):
        return EXIT_DATA
    if isinstance(exc, (ConvergenceError, BudgetExhausted, np.linalg.LinAlgError,
                        FloatingPointError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    return EXIT_NUMERIC


@dataclass
class RunConfig:
    """Everything that determines a run's output.  Parallelism is deliberately absent."""

    input: str
    schema: str
    epsilon: float
    delta: float
    seed: int
    decode: str | None = None
    orders: list[int] = field(default_factory=lambda: [1, 2])
    variants: list[str] = field(default_factory=lambda: ["dpc", "Lap"])
    lap_budget: str = "shared"
    unsafe_zero_noise: bool = False

    def validate(self) -> "RunConfig":
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ConfigError(f"--epsilon must be > 0, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"--delta must lie in (0, 1), got {self.delta}")
        if self.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if self.decode not in (None, "strict", "repair"):
            raise ConfigError("--decode must be strict or repair")
        if not self.orders or any(o not in (1, 2, 3) for o in self.orders):
            raise ConfigError("--orders takes a comma list drawn from 1,2,3")
        return self


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _versions() -> dict:
    return {"dpgc": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _resolve_inputs(args) -> tuple[str, str]:
    if args.input is None:
        if args.schema is not None:
            raise ConfigError("--schema given without --input")
        return str(bundled_path("adult.csv")), str(bundled_path("adult.yaml"))
    if args.schema is None:
        raise ConfigError("--input needs a --schema")
    return args.input, args.schema


def _parse_orders(text: str) -> list[int]:
    try:
        return sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError:
        raise ConfigError(f"bad --orders value {text!r}") from None


def _parse_variants(text: str) -> list[str]:
    out = []
    for t in text.split(","):
        t = t.strip()
        if not t:
            continue
        if t.lower() not in _VARIANT_NAMES:
            raise ConfigError(f"unknown variant {t!r}; choose from {', '.join(VARIANTS)}")
        out.append(_VARIANT_NAMES[t.lower()])
    return out


def _config_from_args(args) -> RunConfig:
    # validate the numbers before touching any file
    seed = args.seed if args.seed is not None else secrets.randbits(63)
    cfg = RunConfig(
        input="", schema="", epsilon=args.epsilon, delta=args.delta, seed=seed,
        decode=getattr(args, "decode", None),
        orders=_parse_orders(getattr(args, "orders", "1,2")),
        variants=_parse_variants(getattr(args, "variants", "dpc,Lap")),
        lap_budget=getattr(args, "lap_budget", "shared"),
        unsafe_zero_noise=getattr(args, "unsafe_zero_noise", False),
    ).validate()
    cfg.input, cfg.schema = _resolve_inputs(args)
    return cfg


def _load(cfg: RunConfig):
    with stage("schema"):
        schema = AttributeSchema.load(cfg.schema)
    with stage("ingest"):
        _, bds = encode_csv(cfg.input, schema)
    return schema, bds


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    if cfg.unsafe_zero_noise and not args.unsafe_diagnostics:
        raise ConfigError("--unsafe-zero-noise also requires --unsafe-diagnostics")
    out = Path(args.out)
    if (out / "plan.json").exists():
        prev = json.loads((out / "plan.json").read_text(encoding="utf-8"))
        print(f"warning: {out} already holds a release at epsilon={prev.get('target_epsilon')}; "
              f"releasing again on the same data spends epsilon={cfg.epsilon} more "
              f"(cumulative at least {prev.get('target_epsilon', 0) + cfg.epsilon:g})", file=sys.stderr)
    schema, bds = _load(cfg)
    with stage("dp-statistics"):
        stats = release_statistics(bds, cfg.epsilon, cfg.seed, cfg.delta, args.workers,
                                   unsafe_zero_noise=cfg.unsafe_zero_noise)
    del bds  # everything below is post-processing of the released statistics
    with stage("copula"):
        result = synthesize_from_statistics(stats, cfg.seed, workers=args.workers)
    with stage("write"):
        out.mkdir(parents=True, exist_ok=True)
        result.synthetic.to_csv(out / "synthetic.csv")
        _write_json(out / "config.json", asdict(cfg))
        (out / "seed.txt").write_text(f"{cfg.seed}\n", encoding="utf-8")
        _write_json(out / "plan.json", result.plan.to_dict())
        _write_json(out / "versions.json", _versions())
        if args.dump_model:
            _write_json(out / "model.json", result.model.to_dict())
        if cfg.decode:
            dec = decode_rows(result.synthetic, result.latent, cfg.decode, schema)
            dec.dataset.to_csv(out / "decoded.csv")
            _write_json(out / "decode.json", {"mode": cfg.decode,
                                              "inconsistent_cells": dec.inconsistent_cells,
                                              "inconsistent_rows": dec.inconsistent_rows})
    print(f"wrote {result.synthetic.n} x {result.synthetic.d} synthetic rows to {out / 'synthetic.csv'} "
          f"(epsilon={cfg.epsilon:g}, delta={cfg.delta:.3g}, eps'={result.plan.per_mechanism_epsilon:.7f}, "
          f"k={result.plan.k})")
    return EXIT_OK


def _table(reports: list[ErrorReport]) -> str:
    lines = [f"{'variant':<8} {'class':<14} {'N':>8}  " + "  ".join(
        f"{c:>6}avg {c:>6}max" for c in ("95%", "99%", "100%"))]
    for rep in reports:
        cells = "  ".join(f"{a:9.1f} {m:9.1f}" for a, m in rep.summaries.values()) or "(empty)"
        lines.append(f"{rep.variant:<8} {rep.query_class:<14} {rep.size:>8}  {cells}")
    return "\n".join(lines)


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    unsafe = [v for v in cfg.variants if v in UNSAFE_VARIANTS]
    if (unsafe or args.split) and not args.unsafe_diagnostics:
        what = ", ".join(unsafe) if unsafe else "the correlation split"
        raise ConfigError(f"{what} is non-private output; pass --unsafe-diagnostics to allow it")
    schema, bds = _load(cfg)
    plan = PrivacyPlan.solve(cfg.epsilon, mechanism_count(bds.groups.m), cfg.delta)
    noise = NoiseSource(cfg.seed)
    truth = {o: answer_queries(bds, o) for o in cfg.orders}

    lap_eps = {}
    for o in cfg.orders:
        if o == 3 or cfg.lap_budget == "composed":
            lap_eps[o] = lap_epsilon(len(truth[o]), cfg.epsilon, cfg.delta)
        else:
            lap_eps[o] = plan.per_mechanism_epsilon

    answers = {}
    for v in cfg.variants:
        with stage(f"variant {v}"):
            if v == "dpc" and args.synthetic:
                syn = BinaryDataset.from_csv(args.synthetic, GroupMap.from_schema(schema))
                answers[v] = {o: answer_queries(syn, o) for o in cfg.orders}
            else:
                res = run_baselines(bds, v, cfg.orders, plan=plan, noise=noise,
                                    lap_eps=lap_eps, workers=args.workers)
                answers[v] = res.answers

    reports, raw_errors = [], []
    r = exact_pearson(bds) if args.split and 2 in cfg.orders else None
    pair_cols = query_table(bds.groups, 2)[0] if r is not None else None
    for v in cfg.variants:
        for o in cfg.orders:
            err = np.abs(answers[v][o] - truth[o])
            reports.append(ErrorReport(v, f"Q{o}", err))
            raw_errors.append((v, o, err))
            if r is not None and o == 2:
                reports.extend(correlation_split(err, r[pair_cols[:, 0], pair_cols[:, 1]],
                                                 args.split_threshold, v))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "config": asdict(cfg),
        "lap_epsilon": {f"Q{o}": e for o, e in lap_eps.items()},
        "plan": plan.to_dict(),
        "non_private_diagnostics": bool(args.unsafe_diagnostics),
        "reports": [rep.to_dict() for rep in reports],
    }
    _write_json(out / "report.json", doc)
    _write_json(out / "versions.json", _versions())
    if args.errors_csv:
        with open(out / "errors.csv", "w", encoding="utf-8") as fh:
            fh.write("variant,order,query,abs_error\n")
            for v, o, err in raw_errors:
                for q, e in enumerate(err):
                    fh.write(f"{v},{o},{q},{e!r}\n")
    print(_table(reports))
    return EXIT_OK


def cmd_demo(args) -> int:
    if args.name == "order-sensitivity":
        ns = args.n or [5, 10, 100, 1000]
        lams = args.lam or [0.2, 0.5, 0.6, 1.0]
        print(f"{'n':>8} {'lambda':>7} {'predicted':>12} {'measured':>12}")
        for n in ns:
            for lam in lams:
                try:
                    pred, meas = artificial_order_demo(n, lam)
                except ValueError:
                    continue
                print(f"{n:>8} {lam:>7g} {pred:>12.6f} {meas:>12.6f}")
    elif args.name == "sensitivity":
        ns = args.n or [10, 100, 10_000, 1_000_000]
        print(f"{'n':>9} {'r1':>10} {'r2':>10} {'gap':>10} {'closed-form gap':>16}")
        for n in ns:
            r1, r2, gap = sensitivity_demo(n)
            c1, c2 = sensitivity_closed_form(n)
            print(f"{n:>9} {r1:>10.6f} {r2:>10.6f} {gap:>10.6f} {c1 - c2:>16.6f}")
        print(f"limit 1 - 1/sqrt(2) = {1 - 2 ** -0.5:.6f}")
    return EXIT_OK


def cmd_budget(args) -> int:
    if not args.epsilon > 0 or not 0 < args.delta < 1:
        raise ConfigError("need epsilon > 0 and 0 < delta < 1")
    ks = list(args.k or [])
    for m in args.m or []:
        ks.append(mechanism_count(m))
    if args.schema:
        ks.append(mechanism_count(AttributeSchema.load(args.schema).m))
    if not ks:
        raise ConfigError("give --k, --m or --schema")
    print(f"{'k':>8} {'eps_prime':>12} {'composed':>12}")
    for k in ks:
        e = solve_per_mechanism_epsilon(args.epsilon, k, args.delta)
        print(f"{k:>8} {e:>12.7f} {compose_epsilon(e, k, args.delta):>12.7f}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage mistakes are configuration errors (exit 1), not data errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p, with_io=True):
    p.add_argument("--epsilon", type=float, default=1.0, help="target epsilon (default 1)")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="target delta (default 2^-30)")
    if with_io:
        p.add_argument("--seed", type=int, help="master seed; drawn and recorded when omitted")
        p.add_argument("--input", help="original CSV (default: bundled Adult data)")
        p.add_argument("--schema", help="YAML or JSON schema with binning rules")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=1, help="threads; never changes the output")
        p.add_argument("--unsafe-diagnostics", action="store_true",
                       help="allow non-private diagnostics (not for release)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpgc", description="Differentially private Gaussian-copula synthesis.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="release a synthetic dataset")
    _common(p)
    p.add_argument("--decode", choices=["strict", "repair"], help="also write a decoded table")
    p.add_argument("--dump-model", action="store_true", help="write the copula model")
    p.add_argument("--unsafe-zero-noise", action="store_true",
                   help="skip all privacy noise (testing only; needs --unsafe-diagnostics)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="error reports against the original data")
    _common(p)
    p.add_argument("--synthetic", help="binary synthetic CSV to score as dpc (else generated)")
    p.add_argument("--orders", default="1,2", help="query orders, e.g. 1,2,3")
    p.add_argument("--variants", default="dpc,Lap", help=f"comma list from {','.join(VARIANTS)}")
    p.add_argument("--lap-budget", choices=["shared", "composed"], default="shared",
                   help="Lap on Q1/Q2: reuse the synthesiser's eps' or compose over all queries")
    p.add_argument("--split", action="store_true", help="split Q2 errors by exact |r| (non-private)")
    p.add_argument("--split-threshold", type=float, default=0.5)
    p.add_argument("--errors-csv", action="store_true", help="also write per-query errors")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("demo", help="numerical demonstrations")
    p.add_argument("name", choices=["order-sensitivity", "sensitivity"])
    p.add_argument("--n", type=int, action="append", help="row count (repeatable)")
    p.add_argument("--lam", type=float, action="append", help="reversed fraction (repeatable)")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("budget", help="per-mechanism epsilon for a target budget")
    _common(p, with_io=False)
    p.add_argument("--k", type=int, action="append", help="number of mechanisms (repeatable)")
    p.add_argument("--m", type=int, action="append", help="number of attributes (repeatable)")
    p.add_argument("--schema", help="take m from a schema file")
    p.set_defaults(func=cmd_budget)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        code = exit_code(exc)
        print(f"dpgc {args.command}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
