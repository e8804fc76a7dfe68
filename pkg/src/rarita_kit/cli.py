"""Command-line front end: ``rarita-kit verify | symbol-scan | flow``.

Exit codes: 0 success, 1 a check failed (or the solver diverged), 2 bad
configuration, 3 I/O error.  Settings come from an optional TOML file and
flags override file values.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .checks import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    REGISTRY,
    RNG_NAME,
    SuiteConfig,
    check_rng,
    chart_points,
    report_json,
    run_suite,
    thread_count,
)
from .flow import FlowConfig, FlowDivergence, load_stage, run_flow
from .lattice import CheckpointError
from .moduli import (
    PSI1,
    WmuChartPoint,
    displayed_det_closed_form,
    displayed_det_normalization,
    displayed_symbol_matrix,
    symbol_degenerate_covector,
    symbol_matrix,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


# --- config ----------------------------------------------------------------

FLOW_REQUIRED = ("epsilon_schedule", "step", "max_iters", "grad_tol", "seed")
FLOW_TYPES = {
    "epsilon_schedule": list,
    "step": float,
    "max_iters": int,
    "grad_tol": float,
    "seed": int,
    "n": int,
    "length": float,
    "penalty": float,
    "hard_projection": bool,
    "init_connection_scale": float,
    "max_backtracks": int,
    "fueter_threshold": float,
    "output_dir": str,
}
SUITE_TYPES = {"samples": int, "tol_exact": float, "tol_fd": float, "seed": int, "output_dir": str}
SCAN_TYPES = {"samples": int, "seed": int, "output_dir": str}


def load_toml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        return tomllib.loads(text.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not UTF-8 text ({exc})") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _typed_table(doc: dict, table: str, types: dict, path, required=()) -> dict:
    if table not in doc:
        if required:
            raise ConfigError(f"{path}: missing table [{table}]")
        return {}
    raw = doc[table]
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: [{table}] must be a table")
    unknown = sorted(set(raw) - set(types))
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) in [{table}]: {', '.join(unknown)}")
    for key in required:
        if key not in raw:
            raise ConfigError(f"{path}: missing field '{table}.{key}'")
    out = {}
    for key, value in raw.items():
        want = types[key]
        ok = isinstance(value, want) and not (want is int and isinstance(value, bool))
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value, ok = float(value), True
        if not ok:
            raise ConfigError(f"{path}: field '{table}.{key}' must be {want.__name__}, got {type(value).__name__}")
        out[key] = value
    return out


def flow_config_from_file(path, overrides: dict | None = None) -> tuple[FlowConfig, dict]:
    doc = load_toml(path)
    table = _typed_table(doc, "flow", FLOW_TYPES, path, FLOW_REQUIRED)
    table.update({k: v for k, v in (overrides or {}).items() if v is not None})
    sched = table["epsilon_schedule"]
    if not all(isinstance(e, (int, float)) and not isinstance(e, bool) for e in sched):
        raise ConfigError(f"{path}: field 'flow.epsilon_schedule' must be a list of numbers")
    extras = {"output_dir": table.pop("output_dir", None)}
    names = {f.name for f in fields(FlowConfig)}
    try:
        config = FlowConfig(**{k: (tuple(v) if k == "epsilon_schedule" else v) for k, v in table.items() if k in names})
    except ValueError as exc:
        raise ConfigError(f"{path}: [flow] {exc}") from exc
    return config, extras


def suite_config(args) -> SuiteConfig:
    base = {}
    if args.config is not None:
        base = _typed_table(load_toml(args.config), "suite", SUITE_TYPES, args.config)
    base.pop("output_dir", None)
    for key in ("samples", "tol_exact", "tol_fd", "seed"):
        value = getattr(args, key)
        if value is not None:
            base[key] = value
    try:
        return SuiteConfig(**base)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _output_dir(args, path_key: str | None = None) -> Path:
    if args.out is not None:
        return Path(args.out)
    if args.config is not None and path_key:
        doc = load_toml(args.config)
        value = doc.get(path_key, {}).get("output_dir")
        if value is not None:
            return Path(value)
    return Path(".")


# --- commands --------------------------------------------------------------


def cmd_verify(args) -> int:
    config = suite_config(args)
    out = _output_dir(args, "suite")
    names = args.only if args.only else None
    if names:
        unknown = sorted(set(names) - set(REGISTRY))
        if unknown:
            raise ConfigError(f"unknown check(s): {', '.join(unknown)}")
    try:
        threads = thread_count()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = run_suite(config, names, threads)
    _write_text(out / "verify_report.json", report_json(report))
    for item in report["checks"]:
        flag = "PASS" if item["passed"] else f"FAIL[{item['failure_kind']}]"
        err = item["worst_error"]
        print(f"{flag:18s} {item['name']:45s} worst={err if err is None else format(err, '.3e')} tol={item['tolerance']:.1e}")
    s = report["summary"]
    print(f"{s['passed']}/{s['total']} checks passed; report: {out / 'verify_report.json'}")
    return s["exit_code"]


SCAN_FIELDS = ["a", "b", "c", "d", "lam", "chart", "xi1", "xi2", "xi3", "det", "sigma_min", "displayed_det", "displayed_rel_err"]


def symbol_scan(samples: int, seed: int) -> tuple[dict, list[dict]]:
    """Random (p, unit xi) scan of the orthonormal symbol plus slice and scaling diagnostics."""
    rng = check_rng(seed, "symbol-scan")
    p = chart_points(rng, samples)
    xi = rng.standard_normal((samples, 3))
    xi /= np.linalg.norm(xi, axis=-1, keepdims=True)
    sm = symbol_matrix(p, xi)
    sig = np.linalg.svd(sm.m, compute_uv=False)[:, -1]
    disp = displayed_symbol_matrix(p).det / displayed_det_normalization(p)
    closed = displayed_det_closed_form(p)
    rel = np.abs(disp - closed) / closed

    # lam = 0, (a, b, c, d) on the unit sphere: displayed determinant is constant.
    x = rng.standard_normal((samples, 4))
    x /= np.linalg.norm(x, axis=-1, keepdims=True)
    sl = WmuChartPoint(x[:, 0], x[:, 1], x[:, 2], x[:, 3], np.zeros(samples), PSI1)
    slice_det = displayed_symbol_matrix(sl).det / displayed_det_normalization(sl)
    slice_expected = float(displayed_det_closed_form(WmuChartPoint(1.0, 0.0, 0.0, 0.0, 0.0)))

    # psi -> t psi: displayed matrix is linear in (a, b, c, d), so sigma_min ~ t and det ~ t^4.
    p0 = WmuChartPoint(*(np.full(1, v) for v in p.as_array()[0]), np.asarray([p.chart[0]]))
    ts = np.array([0.5, 1.0, 2.0, 4.0])
    sig_t, det_t = [], []
    for t in ts:
        pt = WmuChartPoint(t * p0.a, t * p0.b, t * p0.c, t * p0.d, p0.lam, p0.chart)
        m = displayed_symbol_matrix(pt)
        sig_t.append(float(np.linalg.svd(m.m, compute_uv=False)[0, -1]))
        det_t.append(float(m.det[0]))
    sig_slope = float(np.polyfit(np.log(ts), np.log(sig_t), 1)[0])
    det_slope = float(np.polyfit(np.log(ts), np.log(np.abs(det_t)), 1)[0])

    line = symbol_degenerate_covector(p)
    line = line / np.linalg.norm(line, axis=-1, keepdims=True)
    worst = int(np.argmin(sm.det))
    summary = {
        "samples": samples,
        "seed": seed,
        "rng": RNG_NAME,
        "min_det": float(sm.det.min()),
        "min_sigma_min": float(sig.min()),
        "argmin_det": {"point": p.as_array()[worst].tolist(), "chart": str(p.chart[worst]), "xi": xi[worst].tolist()},
        "all_det_positive": bool(sm.det.min() > 0),
        "displayed_max_rel_err": float(rel.max()),
        "lambda0_slice": {
            "expected": slice_expected,
            "min": float(slice_det.min()),
            "max": float(slice_det.max()),
            "max_rel_dev": float(np.max(np.abs(slice_det - slice_expected)) / slice_expected),
        },
        "scaling": {"t": ts.tolist(), "sigma_min": sig_t, "det": det_t, "sigma_exponent": sig_slope, "det_exponent": det_slope},
        "degenerate_covector_max_abs_det": float(np.max(np.abs(symbol_matrix(p, line).det))),
    }
    arr = p.as_array()
    rows = [
        {
            "a": arr[i, 0],
            "b": arr[i, 1],
            "c": arr[i, 2],
            "d": arr[i, 3],
            "lam": arr[i, 4],
            "chart": str(p.chart[i]),
            "xi1": xi[i, 0],
            "xi2": xi[i, 1],
            "xi3": xi[i, 2],
            "det": sm.det[i],
            "sigma_min": sig[i],
            "displayed_det": disp[i],
            "displayed_rel_err": rel[i],
        }
        for i in range(samples)
    ]
    return summary, rows


def cmd_symbol_scan(args) -> int:
    table = {}
    if args.config is not None:
        table = _typed_table(load_toml(args.config), "symbol_scan", SCAN_TYPES, args.config)
    samples = args.samples if args.samples is not None else table.get("samples", 10_000)
    seed = args.seed if args.seed is not None else table.get("seed", 0)
    if samples < 1:
        raise ConfigError(f"samples must be >= 1, got {samples}")
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    out = _output_dir(args, "symbol_scan")
    summary, rows = symbol_scan(samples, seed)
    _ensure_dir(out)
    csv_path = out / "symbol_scan.csv"
    try:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=SCAN_FIELDS)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: (repr(float(v)) if k != "chart" else v) for k, v in row.items()})
    except OSError as exc:
        raise OSError(f"cannot write {csv_path}: {exc.strerror or exc}") from exc
    _write_text(out / "symbol_scan_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    status = "PASS" if summary["all_det_positive"] else "FAIL"
    print(f"{status} min det = {summary['min_det']:.6e}, min sigma_min = {summary['min_sigma_min']:.6e} over {samples} samples")
    return EXIT_OK if summary["all_det_positive"] else EXIT_CHECK_FAILED


def cmd_flow(args) -> int:
    config, extras = flow_config_from_file(args.config, {"seed": args.seed})
    out = Path(args.out) if args.out is not None else Path(extras["output_dir"] or ".")
    ckpt = out / "checkpoints"
    initial, start = None, 0
    if args.resume_from is not None:
        if args.resume_stage is None:
            raise ConfigError("--resume-from needs --resume-stage")
        k = args.resume_stage
        if not 0 <= k < len(config.epsilon_schedule):
            raise ConfigError(f"--resume-stage must lie in [0, {len(config.epsilon_schedule) - 1}]")
        try:
            a, psi = load_stage(args.resume_from, k)
        except CheckpointError as exc:
            raise ConfigError(f"unusable checkpoint: {exc}") from exc
        meta_path = Path(args.resume_from) / f"stage{k}_psi.rkf.meta.json"
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        if meta.get("config_digest") != config.digest():
            raise ConfigError(f"{meta_path}: checkpoint was written with a different flow configuration")
        if a.geometry != config.geometry:
            raise ConfigError("checkpoint geometry does not match the configuration")
        initial, start = (a, psi), k + 1
    elif args.resume_stage is not None:
        raise ConfigError("--resume-stage needs --resume-from")
    _ensure_dir(out)
    try:
        report, _, _ = run_flow(config, initial, start_stage=start, checkpoint_dir=ckpt)
    except FlowDivergence as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    try:
        report.write(out)
    except OSError as exc:
        raise OSError(f"cannot write flow outputs to {out}: {exc.strerror or exc}") from exc
    for stage in report.stages:
        print(f"stage {stage['stage']} eps={stage['epsilon']:g}: {stage['status']} after {stage['iterations']} iterations, energy {stage['energy']:.6e}")
    print(f"final residuals: {json.dumps(report.final_residuals, sort_keys=True)}")
    return EXIT_OK


def _ensure_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc.strerror or exc}") from exc


def _write_text(path: Path, text: str) -> None:
    _ensure_dir(path.parent)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


# --- parser ----------------------------------------------------------------


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rarita-kit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_seed, help="64-bit seed for the Philox generator")
    common.add_argument("--out", help="output directory")

    v = sub.add_parser("verify", parents=[common], help="run the verification suite")
    v.add_argument("--config", help="TOML file with a [suite] table")
    v.add_argument("--samples", type=_positive_int, help="algebraic sample count (geometric checks use a tenth)")
    v.add_argument("--tol-exact", dest="tol_exact", type=_positive_float, help="exact-identity tolerance")
    v.add_argument("--tol-fd", dest="tol_fd", type=_positive_float, help="finite-difference tolerance")
    v.add_argument("--only", action="append", metavar="CHECK", help="run only this check (repeatable)")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("symbol-scan", parents=[common], help="scan the symbol determinant over random (p, xi)")
    s.add_argument("--config", help="TOML file with a [symbol_scan] table")
    s.add_argument("--samples", type=_positive_int)
    s.set_defaults(func=cmd_symbol_scan)

    f = sub.add_parser("flow", parents=[common], help="run the continuation flow from a TOML config")
    f.add_argument("config", help="TOML file with a [flow] table")
    f.add_argument("--resume-from", dest="resume_from", help="directory holding stage checkpoints")
    f.add_argument("--resume-stage", dest="resume_stage", type=int, help="last completed stage to resume after")
    f.set_defaults(func=cmd_flow)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
