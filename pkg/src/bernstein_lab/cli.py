"""Command-line runner: ``bernstein-lab run CONFIG`` and catalog subcommands."""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__, experiments
from .config import load_config
from .errors import ConfigError, LabError
from .report import csv_text, summary_text, svg_chart

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_FLAG = 0, 2, 3, 4
THREADS_ENV = "BERNSTEIN_LAB_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _threads(flag) -> int:
    n = flag
    if n is None:
        env = os.environ.get(THREADS_ENV)
        if env is None:
            return 1
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if n < 0:
        raise ConfigError("thread count must be >= 0")
    return n or (os.cpu_count() or 1)


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def cmd_list_models(args) -> int:
    for name in sorted(experiments.MODEL_CATALOG):
        print(f"{name:12s} {experiments.MODEL_CATALOG[name]}")
    return EXIT_OK


def cmd_list_experiments(args) -> int:
    for name in sorted(experiments.CATALOG):
        tag, desc = experiments.CATALOG[name]
        print(f"{name:22s} {tag:32s} {desc}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        threads = _threads(args.threads)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output.get("dir", "results")
    svg = cfg.output.get("svg", True) if args.svg is None else args.svg == "on"
    prefix = cfg.output.get("prefix", cfg.experiment["name"])
    seed = args.seed
    t0 = time.perf_counter()
    try:
        res = experiments.run(cfg, seed=seed, threads=threads)
    except LabError as exc:
        print(f"error [{type(exc).__module__.split('.')[-1]}.{type(exc).__name__}]: {exc}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error [numerical]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    wall = time.perf_counter() - t0
    meta = {"config_sha256": cfg.digest, "seed": cfg.experiment.get("seed", seed),
            "version": __version__, "experiment": res.experiment, "model": res.model}
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, f"{prefix}.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(res, meta))
    with open(os.path.join(out, f"{prefix}_summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(summary_text(res, {**meta, "threads": threads, "wall_time_s": f"{wall:.3f}"}))
    if svg:
        for i, s in enumerate(res.series):
            with open(os.path.join(out, f"{prefix}_{i}.svg"), "w", encoding="utf-8") as fh:
                fh.write(svg_chart(s))
    for c in res.checks:
        print(f"{c.status} {c.label} {c.description}: {c.value:.6g} ({c.threshold})")
    print(f"wrote {os.path.join(out, prefix)}.csv in {wall:.2f} s")
    if args.strict and res.flagged:
        return EXIT_FLAG
    return EXIT_OK


def _selftest_checks():
    from . import bernstein, calculus, kernels, models

    m = models.circle_model(64)
    E = models.eigensystem(m)
    yield "circle form identity", m.form_defect() <= 1e-12 * float(np.max(np.abs(m.L)))
    r = bernstein.max_bernstein_ratio(m, E, 4, 2, form="square")
    yield "square-sum ratio at e_N", abs(r.value - 1) <= 1e-12
    x = np.linspace(-2, 2, 5)
    mh = kernels.mehler_kernel(0.5, x[:, None], x[None, :])
    es = kernels.hermite_eigen_sum(0.5, x, x, 80)
    yield "Mehler vs eigen-sum", float(np.max(np.abs(mh - es) / mh)) <= 1e-10
    spec = calculus.bump()
    fh = calculus.multiplier_via_fourier_heat(E, spec, 0.25)
    gap = np.linalg.norm(calculus.spectral_multiplier(E, spec, 0.25) - fh.matrix, 2)
    yield "spectral vs Fourier-heat route", gap <= 1e-6
    b = calculus.multiplier_uniformity(m, E, calculus.smooth_cutoff(), 2, [0.5])
    yield "L^2 multiplier norm", abs(b.sup - 1.0) <= 1e-12


def cmd_selftest(args) -> int:
    ok = True
    for name, passed in _selftest_checks():
        ok &= bool(passed)
        print(f"{'PASS' if passed else 'FAIL'} {name}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bernstein-lab", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: [output] dir or ./results)")
    r.add_argument("--seed", type=_seed, default=0)
    r.add_argument("--threads", type=int, default=None, help="0 = all cores")
    r.add_argument("--svg", choices=("on", "off"), default=None)
    r.add_argument("--strict", action="store_true", help="exit 4 when any check is flagged")
    r.set_defaults(func=cmd_run)
    sub.add_parser("list-models").set_defaults(func=cmd_list_models)
    sub.add_parser("list-experiments").set_defaults(func=cmd_list_experiments)
    sub.add_parser("selftest").set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
