"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
divergence, 3 nothing to do.  The default output root is taken from the
``SPARSE_SGMCMC_OUT`` environment variable (``runs`` when unset).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data.sets import load_problem, make_darcy_set, make_regression_set, save_dataset
from .harness import (
    ConfigError,
    DivergenceError,
    RunConfig,
    build_network,
    compare_runs,
    comparison_csv,
    load_run,
    save_run,
    train,
)
from .model import ParamState, forward
from .presets import PRESETS, canonical_preset, get_preset, preset_problem
from .sampler import VARIANTS

log = logging.getLogger("sparse_sgmcmc")

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_NOTHING = 0, 1, 2, 3
OUT_ENV = "SPARSE_SGMCMC_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for divergence here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


# gen-data ---------------------------------------------------------------------


def _col_scale(text: str) -> tuple[int, float]:
    try:
        col, scale = text.split("=")
        return int(col), float(scale)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected COL=SCALE, got {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_gen_data(args) -> int:
    if args.kind == "regression":
        if args.p < len(args.beta):
            raise UsageError(f"--p {args.p} is smaller than the {len(args.beta)} nonzero coefficients")
        data = make_regression_set(
            n=args.n,
            p=args.p,
            corr_base=args.corr_base,
            beta_nonzero=args.beta,
            noise_var=args.noise_var,
            col_scales=dict(args.col_scale or []),
            n_test=args.n_test,
            seed=args.seed,
        )
    else:
        n_train = args.n_train if args.n_train is not None else args.samples - args.samples // 6
        data = make_darcy_set(
            grid=args.grid,
            kle=args.kle,
            samples=args.samples,
            n_train=n_train,
            seed=args.seed,
            l_x=args.l_x,
            l_y=args.l_y,
            sigma_cov=args.sigma_cov,
            kappa0=args.kappa0,
            source=args.source,
            mode=args.mode,
        )
    out = Path(args.out) if args.out else out_root() / "data" / f"{args.kind}-seed{args.seed}"
    save_dataset(data, out)
    print(out)
    return EXIT_OK


# train ------------------------------------------------------------------------


def _read_config_file(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None


def resolve_config(args) -> tuple[RunConfig, str | None]:
    """Config from preset and/or file, then command-line flags on top."""
    preset = None
    if args.preset:
        try:
            preset = canonical_preset(args.preset)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        variant = args.sampler or "psgld-sa"
        base = get_preset(preset, variant).to_dict()
    else:
        base = RunConfig().to_dict()
    if args.config:
        file_cfg = _read_config_file(args.config)
        if not isinstance(file_cfg, dict):
            raise UsageError(f"{args.config}: top level must be a JSON object")
        for key, val in file_cfg.items():
            if key in ("sampler", "prior") and isinstance(val, dict) and isinstance(base.get(key), dict):
                merged = dict(base[key])
                if key == "sampler" and isinstance(val.get("schedules"), dict):
                    merged["schedules"] = {**merged["schedules"], **val["schedules"]}
                    val = {k: v for k, v in val.items() if k != "schedules"}
                merged.update(val)
                base[key] = merged
            else:
                base[key] = val
    flag_map = {
        "iterations": "iterations",
        "seed": "seed",
        "batch_size": "batch_size",
        "sparse_rate": "sparse_rate",
        "label": "label",
        "data": "data",
    }
    for attr, key in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            base[key] = val
    if args.sampler:
        base["sampler"]["variant"] = args.sampler
        if not base.get("label") or base["label"] in VARIANTS:
            base["label"] = args.sampler
    if getattr(args, "check_invariants", False):
        base["check_invariants"] = True
    try:
        cfg = RunConfig.from_dict(base)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    return cfg, preset


def _problem_for(cfg: RunConfig, preset: str | None, data_seed: int | None = None):
    if cfg.data:
        if not Path(cfg.data, "manifest.json").exists():
            raise UsageError(f"no dataset manifest under {cfg.data}")
        return load_problem(cfg.data)
    if preset:
        return preset_problem(preset, data_seed)
    raise UsageError("no dataset: pass --data or --preset")


def _summary_line(result) -> str:
    return json.dumps(
        dict(
            label=result.label,
            seed=result.seed,
            config_hash=result.config_hash,
            iterations=result.config.get("iterations"),
            final_metrics=result.final_metrics,
            posterior_metrics=result.posterior_metrics,
            sparse_rate=result.sparse_rate,
        ),
        sort_keys=True,
    )


def cmd_train(args) -> int:
    cfg, preset = resolve_config(args)
    problem = _problem_for(cfg, preset, args.data_seed)
    out = Path(args.out) if args.out else out_root() / f"{cfg.name}-seed{cfg.seed}"
    result = train(replace(cfg, out_dir=str(out)), problem)
    save_run(result, out)
    print(_summary_line(result))
    return EXIT_OK


# eval -------------------------------------------------------------------------


def cmd_eval(args) -> int:
    run = load_run(args.run)
    data = args.data or run.config.get("data")
    if not data:
        raise UsageError("the run records no dataset; pass --data")
    problem = load_problem(data)
    net = build_network(run.config["model"], problem.x_train.shape[1], problem.y_train.shape[1])
    if net.size != run.final_params.beta.size:
        raise UsageError("dataset shape does not match the saved network")
    out = dict(label=run.label, seed=run.seed, config_hash=run.config_hash)
    out["final"] = problem.metrics(forward(run.final_params, net, problem.x_test))
    out["posterior_mean"] = problem.metrics(forward(ParamState(run.posterior_mean), net, problem.x_test))
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


# compare ----------------------------------------------------------------------


def _train_job(job):
    cfg_dict, data, preset, data_seed, out = job
    cfg = RunConfig.from_dict(cfg_dict)
    problem = _problem_for(cfg, preset, data_seed) if not data else load_problem(data)
    result = train(cfg, problem)
    save_run(result, out)
    return out


def cmd_compare(args) -> int:
    samplers = args.samplers.split(",") if args.samplers else ["sgld-sa", "psgld", "psgld-sa"]
    bad = [s for s in samplers if s not in VARIANTS]
    if bad:
        raise UsageError(f"unknown sampler(s): {', '.join(bad)}")
    root = Path(args.out) if args.out else out_root() / "compare"
    jobs = []
    for s in samplers:
        args.sampler = s
        cfg, preset = resolve_config(args)
        if not cfg.data and not preset:
            raise UsageError("no dataset: pass --data or --preset")
        out = root / cfg.name
        jobs.append((cfg.to_dict(), cfg.data, preset, args.data_seed, str(out)))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            dirs = list(pool.map(_train_job, jobs))
    else:
        dirs = [_train_job(j) for j in jobs]
    runs = [load_run(d) for d in dirs]
    rows = compare_runs(runs, args.metric)
    _write_table(root / "comparison.csv", runs, rows, args.metric)
    print((root / "comparison.csv").read_text(), end="")
    return EXIT_OK


def _write_table(path: Path, runs, rows, metric: str):
    stamp = "# " + " ".join(f"{r.label}:seed={r.seed}:config_hash={r.config_hash}" for r in runs)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(stamp + "\n" + comparison_csv(rows, metric))


# report -----------------------------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _nice(v: float) -> str:
    return f"{v:.4g}"


def render_svg(metric: str, series: list[tuple[str, list[int], list[float]]], stamp: str = "") -> str:
    """Line plot with one polyline per series; output depends only on the inputs."""
    w, h, left, right, top, bottom = 640, 400, 70, 160, 30, 50
    pw, ph = w - left - right, h - top - bottom
    xs = [x for _, its, _ in series for x in its]
    ys = [y for _, _, vals in series for y in vals if np.isfinite(y)]
    x0, x1 = min(xs), max(xs)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f"<!-- {stamp} -->" if stamp else "",
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>',
    ]
    for i in range(5):
        fy = y0 + (y1 - y0) * i / 4
        fx = x0 + (x1 - x0) * i / 4
        out.append(f'<text x="{left - 6}" y="{py(fy) + 4:.2f}" font-size="11" text-anchor="end">{_nice(fy)}</text>')
        out.append(f'<text x="{px(fx):.2f}" y="{top + ph + 16}" font-size="11" text-anchor="middle">{_nice(fx)}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{h - 10}" font-size="13" text-anchor="middle">iteration</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2:.1f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">test {metric}</text>'
    )
    for i, (label, its, vals) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(its, vals) if np.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 18 * i
        out.append(f'<line x1="{w - right + 10}" y1="{ly - 4}" x2="{w - right + 30}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{w - right + 36}" y="{ly}" font-size="12">{label}</text>')
    out.append("</svg>")
    return "\n".join(line for line in out if line) + "\n"


def _run_dirs(paths) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if (p / "summary.json").exists():
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(d for d in p.iterdir() if (d / "summary.json").exists()))
    return found


def cmd_report(args) -> int:
    dirs = _run_dirs(args.runs)
    if not dirs:
        print("no run directories found", file=sys.stderr)
        return EXIT_NOTHING
    runs = [load_run(d) for d in dirs]
    out = Path(args.out) if args.out else dirs[0].parent / "report"
    out.mkdir(parents=True, exist_ok=True)
    stamp = " ".join(f"{r.label}:seed={r.seed}:config_hash={r.config_hash}" for r in runs)
    metrics = sorted({m for r in runs for m in r.curves})
    plotted = 0
    for m in metrics:
        series = [(r.label, r.eval_iterations, r.curves[m]) for r in runs if r.curves.get(m)]
        skipped = [r.label for r in runs if not r.curves.get(m)]
        for label in skipped:
            log.warning("run %s has no %s curve; skipped", label, m)
        if series:
            (out / f"{m}.svg").write_text(render_svg(m, series, stamp))
            plotted += 1
    if not plotted:
        print("no learning curves to plot", file=sys.stderr)
        return EXIT_NOTHING
    metric = args.metric if args.metric in metrics else metrics[0]
    comparable = [r for r in runs if r.curves.get(metric)]
    try:
        rows = compare_runs(comparable, metric)
    except ValueError as exc:
        log.warning("no comparison table: %s", exc)
    else:
        _write_table(out / "table.csv", comparable, rows, metric)
    print(out)
    return EXIT_OK


# entry point ------------------------------------------------------------------


def _add_run_flags(p):
    p.add_argument("--config", help="JSON run configuration; flags override its values")
    p.add_argument("--preset", help=f"named configuration: {', '.join(sorted(PRESETS))}")
    p.add_argument("--data", help="dataset directory written by gen-data")
    p.add_argument("--data-seed", type=int, help="seed for the preset's generated dataset when --data is absent")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--sparse-rate", type=float)
    p.add_argument("--label")
    p.add_argument("--check-invariants", action="store_true")
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparse-sgmcmc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a dataset")
    gsub = g.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    r = gsub.add_parser("regression")
    r.add_argument("--n", type=int, default=100)
    r.add_argument("--p", type=int, default=200)
    r.add_argument("--n-test", type=int, default=200)
    r.add_argument("--corr-base", type=float, default=0.6)
    r.add_argument("--noise-var", type=float, default=3.0)
    r.add_argument("--beta", type=_floats, default=(3.0, 1.0), help="leading nonzero coefficients")
    r.add_argument("--col-scale", type=_col_scale, action="append", metavar="COL=SCALE")
    r.add_argument("--seed", type=int, default=7)
    r.add_argument("--out")
    d = gsub.add_parser("darcy")
    d.add_argument("--grid", type=int, default=16)
    d.add_argument("--kle", type=int, default=16)
    d.add_argument("--samples", type=int, default=360)
    d.add_argument("--n-train", type=int)
    d.add_argument("--l-x", type=float, default=0.2)
    d.add_argument("--l-y", type=float, default=0.3)
    d.add_argument("--sigma-cov", type=float, default=2.0)
    d.add_argument("--kappa0", type=float, default=0.0)
    d.add_argument("--source", type=float, default=1.0)
    d.add_argument("--mode", choices=("lognormal", "clamped"), default="lognormal")
    d.add_argument("--seed", type=int, default=7)
    d.add_argument("--out")

    t = sub.add_parser("train", help="run one chain")
    t.add_argument("--sampler", choices=VARIANTS)
    _add_run_flags(t)

    e = sub.add_parser("eval", help="score a saved run on a dataset")
    e.add_argument("run")
    e.add_argument("--data")

    c = sub.add_parser("compare", help="run several samplers on one dataset and rank them")
    c.add_argument("--samplers", help="comma-separated list (default sgld-sa,psgld,psgld-sa)")
    c.add_argument("--metric", default="mse")
    c.add_argument("--jobs", type=int, default=1)
    _add_run_flags(c)

    rp = sub.add_parser("report", help="SVG learning curves and a ranked table")
    rp.add_argument("runs", nargs="+", help="run directories or directories containing runs")
    rp.add_argument("--metric", default="mse")
    rp.add_argument("--out")
    return parser


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "compare": cmd_compare, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "sampler", None) is None and args.command == "compare":
        args.sampler = None
    try:
        return COMMANDS[args.command](args)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (UsageError, ConfigError, ValueError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
