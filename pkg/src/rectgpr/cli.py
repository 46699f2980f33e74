"""Command-line front end.

Subcommands::

    rectgpr scan     grid-scan the log length scale, write scan.csv / scan.json
    rectgpr fit      fit one rectangular model, write model.json
    rectgpr predict  evaluate a saved model, write correlation.csv / intervals.csv
    rectgpr report   aggregate scan.json files into a per-N summary table

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    Dataset,
    DatasetError,
    SplitSpec,
    apply_normalization,
    load_dataset,
    normalize_features,
    pearson,
    rmse,
    split_indices,
    synth_function,
)
from .gpr import RectGprModel, _fit_rect, predict_rect, rect_variance, select_basis_centers
from .kernel import KernelFamily, KernelSpec
from .solver import SvdSolveOptions
from .tune import (
    DEFAULT_L_GRID,
    OverfitRiskWarning,
    check_basis_ratio,
    mle_scan,
    scan_lengthscale,
)

log = logging.getLogger("rectgpr")

MODEL_FORMAT = "rectgpr-model/1"


class UsageError(Exception):
    """Invalid configuration; maps to exit status 2."""


class RunFailure(Exception):
    """Runtime failure; maps to exit status 1."""


@dataclass
class RunConfig:
    command: str
    data_path: str | None = None
    synth: str | None = None
    synth_dim: int = 6
    synth_n: int = 10000
    synth_seed: int = 0
    n_train: int | None = None
    m_basis: int | None = None
    l_grid: list[float] = field(default_factory=lambda: list(DEFAULT_L_GRID))
    delta: float = 0.0
    kernel: str = "se"
    seed: int = 0
    out_dir: str = "."
    norm_scope: str = "full"
    center_targets: bool = False
    mle_baseline: bool = False
    mle_sign: str = "standard"
    mle_delta: float = 1e-4

    @property
    def split_seed(self) -> int:
        return self.seed

    @property
    def center_seed(self) -> int:
        return self.seed + 1


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


# ---------------------------------------------------------------- data


def _load(cfg: RunConfig) -> tuple[Dataset, dict]:
    if cfg.synth:
        try:
            d = synth_function(cfg.synth, cfg.synth_dim, cfg.synth_n, cfg.synth_seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        source = {"synth": cfg.synth, "dim": cfg.synth_dim, "n": cfg.synth_n, "seed": cfg.synth_seed}
    elif cfg.data_path:
        try:
            d = load_dataset(cfg.data_path)
        except FileNotFoundError as exc:
            raise UsageError(str(exc)) from exc
        except DatasetError as exc:
            raise UsageError(f"{cfg.data_path}: {exc}") from exc
        source = {"data_path": str(cfg.data_path)}
    else:
        raise UsageError("one of --data or --synth is required")
    return d, source


def _prepare(cfg: RunConfig):
    """Load, normalize and split per ``cfg``; returns (train, test or None, info)."""
    d, source = _load(cfg)
    n_train = d.n if cfg.n_train is None else cfg.n_train
    if not 0 < n_train <= d.n:
        raise UsageError(f"--n-train must be in 1..{d.n}, got {n_train}")
    if cfg.norm_scope not in ("full", "train"):
        raise UsageError(f"--norm-scope must be 'full' or 'train', got {cfg.norm_scope!r}")

    if n_train < d.n:
        train_idx, test_idx = split_indices(d.n, SplitSpec(n_train, cfg.split_seed))
    else:
        train_idx, test_idx = np.arange(d.n), np.arange(0)

    basis = d if cfg.norm_scope == "full" else d.subset(train_idx)
    try:
        stats = normalize_features(basis)
    except DatasetError as exc:
        raise UsageError(f"cannot normalize features: {exc}") from exc
    d = apply_normalization(d, stats.feature_std, stats.feature_mean)

    train = d.subset(train_idx)
    test = d.subset(test_idx) if test_idx.size else None
    info = {
        "source": source,
        "n_total": d.n,
        "n_train": int(n_train),
        "norm_scope": cfg.norm_scope,
        "feature_std": d.feature_std.tolist(),
        "feature_mean": d.feature_mean.tolist(),
        "split_seed": cfg.split_seed,
        "center_seed": cfg.center_seed,
    }
    return train, test, info


def _check_basis(cfg: RunConfig, n_train: int) -> int:
    m = cfg.m_basis if cfg.m_basis is not None else max(1, n_train // 2)
    if not 1 <= m <= n_train:
        raise UsageError(f"--m-basis must be in 1..{n_train}, got {m}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", OverfitRiskWarning)
        check_basis_ratio(n_train, m)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return m


def _kernel_template(cfg: RunConfig) -> KernelSpec:
    try:
        return KernelSpec(family=KernelFamily.parse(cfg.kernel))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------- commands

SCAN_COLUMNS = [
    "n", "m", "l", "delta", "rmse_res", "test_rmse",
    "train_pearson", "test_pearson", "selected", "status",
]


def _scan_rows(result):
    for i, r in enumerate(result.rows):
        yield [r.n, r.m, r.l, r.delta, r.rmse_res, r.test_rmse, r.train_pearson,
               r.test_pearson, i == result.selected, "ok" if r.ok else "failed"]


def run_scan(cfg: RunConfig) -> int:
    if not cfg.l_grid:
        raise UsageError("--l-grid is empty")
    template = _kernel_template(cfg)
    train, test, info = _prepare(cfg)
    m = _check_basis(cfg, train.n)
    centers = select_basis_centers(train.n, m, cfg.center_seed)

    try:
        result = scan_lengthscale(
            train.points, train.targets, m, cfg.l_grid, template, cfg.center_seed,
            None if test is None else test.points, None if test is None else test.targets,
            delta=cfg.delta, center_indices=centers, center_targets=cfg.center_targets,
        )
    except RuntimeError as exc:
        raise RunFailure(f"scan failed: {exc}") from exc

    out = Path(cfg.out_dir)
    doc = {"version": __version__, "config": asdict(cfg), "data": info, "scan": result.to_dict()}
    meta = {"scan_wall_time_s": [r.wall_time_s for r in result.rows]}
    csv_out = [(out / "scan.csv", _csv_text(SCAN_COLUMNS, _scan_rows(result)))]

    if cfg.mle_baseline:
        try:
            mle = mle_scan(
                train.points, train.targets, cfg.l_grid, cfg.mle_delta, template,
                sign=cfg.mle_sign,
                test_points=None if test is None else test.points,
                test_targets=None if test is None else test.targets,
            )
        except RuntimeError as exc:
            print(f"warning: MLE baseline failed: {exc}", file=sys.stderr)
        else:
            doc["mle"] = mle.to_dict()
            meta["mle_wall_time_s"] = [r.wall_time_s for r in mle.rows]
            cols = ["n", "l", "delta", "log_likelihood", "test_rmse", "train_pearson",
                    "test_pearson", "selected", "status"]
            rows = ([r.n, r.l, r.delta, r.log_likelihood, r.test_rmse, r.train_pearson,
                     r.test_pearson, i == mle.selected, "ok" if r.ok else "failed"]
                    for i, r in enumerate(mle.rows))
            csv_out.append((out / "mle.csv", _csv_text(cols, rows)))

    for path, text in csv_out:
        _atomic_write(path, text)
    _atomic_write(out / "scan.json", _json_text(doc))
    _atomic_write(out / "scan.meta.json", _json_text(meta))

    sel = result.selected_row
    line = f"selected l={sel.l:g} rmse_res={sel.rmse_res:.6g}"
    if sel.test_rmse is not None:
        line += f" test_rmse={sel.test_rmse:.6g}"
    print(line)
    return 0


def _model_doc(model: RectGprModel, cfg: RunConfig, info: dict) -> dict:
    return {
        "format": MODEL_FORMAT,
        "kernel": model.spec.to_dict(),
        "delta": cfg.delta,
        "n_fit": model.n_fit,
        "rmse_res": model.rmse_res,
        "target_variance": model.target_variance,
        "target_mean": model.target_mean,
        "center_indices": [int(i) for i in model.center_indices],
        "basis_centers": model.basis_centers.tolist(),
        "coefficients": model.coefficients.tolist(),
        "config": asdict(cfg),
        "data": info,
    }


def load_model(path) -> tuple[RectGprModel, dict]:
    """Read a model file written by ``rectgpr fit``."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    model = RectGprModel(
        spec=KernelSpec.from_dict(doc["kernel"]),
        basis_centers=np.asarray(doc["basis_centers"], dtype=np.float64),
        coefficients=np.asarray(doc["coefficients"], dtype=np.float64),
        n_fit=int(doc["n_fit"]),
        rmse_res=float(doc["rmse_res"]),
        target_variance=float(doc["target_variance"]),
        target_mean=float(doc.get("target_mean", 0.0)),
        center_indices=np.asarray(doc["center_indices"], dtype=np.intp),
    )
    return model, doc


def run_fit(cfg: RunConfig, l: float) -> int:
    template = _kernel_template(cfg)
    train, _, info = _prepare(cfg)
    m = _check_basis(cfg, train.n)
    centers = select_basis_centers(train.n, m, cfg.center_seed)
    try:
        model, _ = _fit_rect(
            train.points, train.targets, centers, template.with_l(l),
            SvdSolveOptions(delta=cfg.delta), cfg.center_targets,
        )
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RunFailure(f"fit failed: {exc}") from exc
    _atomic_write(Path(cfg.out_dir) / "model.json", _json_text(_model_doc(model, cfg, info)))
    print(f"fitted l={l:g} N={model.n_fit} M={model.m} rmse_res={model.rmse_res:.6g}")
    return 0


def run_predict(cfg: RunConfig, model_path: str) -> int:
    try:
        model, doc = load_model(model_path)
    except FileNotFoundError as exc:
        raise UsageError(f"model not found: {model_path}") from exc
    except (ValueError, KeyError) as exc:
        raise UsageError(f"invalid model file {model_path}: {exc}") from exc

    saved = RunConfig(**{k: v for k, v in doc["config"].items() if k in RunConfig.__dataclass_fields__})
    if cfg.data_path:
        saved.data_path, saved.synth = cfg.data_path, None
    train, test, _ = _prepare(saved)
    if train.dim != model.basis_centers.shape[1]:
        raise UsageError(
            f"dimension mismatch: model has D={model.basis_centers.shape[1]}, data has D={train.dim}"
        )

    pred_train = predict_rect(model, train.points)
    corr_rows = [("train", a, p) for a, p in zip(train.targets.tolist(), pred_train.tolist())]
    summary = {
        "train_rmse": rmse(pred_train, train.targets),
        "train_pearson": _safe_pearson(pred_train, train.targets),
    }
    shown = train
    pred_shown = pred_train
    if test is not None:
        pred_test = predict_rect(model, test.points)
        corr_rows += [("test", a, p) for a, p in zip(test.targets.tolist(), pred_test.tolist())]
        summary["test_rmse"] = rmse(pred_test, test.targets)
        summary["test_pearson"] = _safe_pearson(pred_test, test.targets)
        shown, pred_shown = test, pred_test
    sigma = np.sqrt(rect_variance(model, shown.points))

    out = Path(cfg.out_dir)
    _atomic_write(out / "correlation.csv", _csv_text(["split", "actual", "predicted"], corr_rows))
    _atomic_write(
        out / "intervals.csv",
        _csv_text(["actual", "predicted", "sigma"], zip(shown.targets, pred_shown, sigma)),
    )
    _atomic_write(out / "summary.json", _json_text(summary))
    print(" ".join(f"{k}={v:.6g}" for k, v in summary.items() if v is not None))
    return 0


def _safe_pearson(a, b):
    try:
        return pearson(a, b)
    except ValueError:
        return None


# ---------------------------------------------------------------- report

REPORT_COLUMNS = ["n", "m", "l", "rmse_res", "test_rmse", "scan_selected", "n_optimum", "source"]


def _collect_scans(paths: list[Path]) -> list[dict]:
    records = []
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            doc = json.load(fh)
        scan = doc["scan"]
        for i, r in enumerate(scan["rows"]):
            if r.get("error") is not None or r.get("rmse_res") is None:
                continue
            records.append({
                "n": int(r["n"]), "m": int(r["m"]), "l": float(r["l"]),
                "rmse_res": float(r["rmse_res"]),
                "test_rmse": r.get("test_rmse"),
                "scan_selected": i == scan["selected"],
                "source": str(p),
            })
    return records


def build_report(records: list[dict]) -> tuple[list[dict], str]:
    """Group rows by N then M, mark the per-N argmin of rmse_res; return rows and text."""
    records = sorted(records, key=lambda r: (r["n"], r["m"], r["l"]))
    by_n: dict[int, list[dict]] = {}
    for r in records:
        by_n.setdefault(r["n"], []).append(r)
    for group in by_n.values():
        best = min(group, key=lambda r: (r["rmse_res"], r["l"], r["m"]))
        for r in group:
            r["n_optimum"] = r is best

    def num(v):
        return "-" if v is None else f"{v:.4g}"

    def bold(s, on):
        return f"**{s}**" if on else s

    lines = []
    table = []
    for n, group in by_n.items():
        by_m: dict[int, list[dict]] = {}
        for r in group:
            by_m.setdefault(r["m"], []).append(r)
        first = True
        for m, cells in by_m.items():
            table.append([
                str(n) if first else "",
                str(m),
                " / ".join(f"{c['l']:g}" for c in cells),
                " / ".join(bold(num(c["rmse_res"]), c["n_optimum"]) for c in cells),
                " / ".join(bold(num(c["test_rmse"]), c["n_optimum"]) for c in cells),
            ])
            first = False
    header = ["N", "M", "l", "rmse_res", "Test rmse"]
    widths = [max(len(row[i]) for row in [header] + table) for i in range(len(header))]
    for row in [header] + table:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    lines.append("")
    lines.append("** marks the smallest rmse_res within each N group")
    return records, "\n".join(lines) + "\n"


def run_report(out_dir: str, scan_paths: list[str]) -> int:
    paths = []
    for p in map(Path, scan_paths or [out_dir]):
        paths.extend(sorted(p.rglob("scan.json")) if p.is_dir() else [p])
    if not paths:
        raise RunFailure(f"no scan.json files found under {out_dir}")
    try:
        records = _collect_scans(paths)
    except (OSError, ValueError, KeyError) as exc:
        raise RunFailure(f"cannot read scans: {exc}") from exc
    if not records:
        raise RunFailure("scan files contain no successful rows")
    records, text = build_report(records)
    out = Path(out_dir)
    _atomic_write(out / "report.txt", text)
    _atomic_write(
        out / "report.csv",
        _csv_text(REPORT_COLUMNS, ([r[c] for c in REPORT_COLUMNS] for r in records)),
    )
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- argparse


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError("grid values must be finite")
    return vals


def _add_data_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--data", dest="data_path", metavar="PATH", help="CSV file with header x1,...,xD,f")
    g.add_argument("--synth", choices=["additive_sine", "gaussian_wells", "rosenbrock_like"],
                   help="use a synthetic dataset instead of --data")
    g.add_argument("--synth-dim", type=int, default=6)
    g.add_argument("--synth-n", type=int, default=10000)
    g.add_argument("--synth-seed", type=int, default=0)
    g.add_argument("--n-train", type=int, help="training rows N; the rest form the test set")
    g.add_argument("--norm-scope", choices=["full", "train"], default="full",
                   help="rows used to compute feature standard deviations")
    g.add_argument("--seed", type=int, default=0,
                   help="split seed; basis centers use seed+1")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m-basis", type=int, help="number of basis centers M (default N/2)")
    p.add_argument("--delta", type=float, default=0.0,
                   help="damping added to retained singular values")
    p.add_argument("--kernel", default="se", help="se, matern12, matern32 or matern52")
    p.add_argument("--center-targets", action="store_true",
                   help="subtract the training mean from the targets")
    p.add_argument("--out", dest="out_dir", default=".", metavar="DIR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rectgpr", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="scan the log length scale")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--l-grid", type=_float_list, default=list(DEFAULT_L_GRID), metavar="CSV")
    p.add_argument("--mle-baseline", action="store_true",
                   help="also scan the square-GPR log marginal likelihood")
    p.add_argument("--mle-sign", choices=["standard", "paper"], default="standard")
    p.add_argument("--mle-delta", type=float, default=1e-4,
                   help="jitter for the MLE baseline (must be > 0)")

    p = sub.add_parser("fit", help="fit a rectangular model at one length scale")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--l", type=float, help="log length scale")
    p.add_argument("--l-grid", type=_float_list, help="alternative to --l; must hold one value")

    p = sub.add_parser("predict", help="evaluate a saved model")
    p.add_argument("--model", default=None, metavar="PATH", help="model file (default OUT/model.json)")
    p.add_argument("--data", dest="data_path", metavar="PATH",
                   help="override the dataset recorded in the model")
    p.add_argument("--out", dest="out_dir", default=".", metavar="DIR")

    p = sub.add_parser("report", help="aggregate scan.json files")
    p.add_argument("scans", nargs="*", help="scan.json files or directories to search (default: --out)")
    p.add_argument("--out", dest="out_dir", default=".", metavar="DIR")
    return parser


def _config(args) -> RunConfig:
    fields = RunConfig.__dataclass_fields__
    return RunConfig(**{k: v for k, v in vars(args).items() if k in fields and v is not None})


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "scan":
            cfg = _config(args)
            if cfg.mle_baseline and not cfg.mle_delta > 0:
                raise UsageError("--mle-delta must be > 0")
            return run_scan(cfg)
        if args.command == "fit":
            cfg = _config(args)
            if args.l is not None:
                l = args.l
            elif args.l_grid is not None and len(args.l_grid) == 1:
                l = args.l_grid[0]
            else:
                raise UsageError("fit needs --l or a one-element --l-grid")
            cfg.l_grid = [l]
            return run_fit(cfg, l)
        if args.command == "predict":
            cfg = RunConfig(command="predict", data_path=args.data_path, out_dir=args.out_dir)
            return run_predict(cfg, args.model or str(Path(args.out_dir) / "model.json"))
        return run_report(args.out_dir, args.scans)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RunFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
