"""Command-line entry points: train, eval, sweep, scaling, baseline.

Exit codes: 0 on success, 2 for configuration problems (bad JSON, unknown
fields, incompatible checkpoints), 3 for numerical failures (divergent
training, degenerate solutions).
"""

import argparse
import csv
import os
import sys
from dataclasses import replace

from .errors import ConfigError, DivergenceError, DegenerateOutputError, \
    IllConditionedError, IsaclearnError
from .harness import (ExperimentConfig, load_config, run_eval, write_results,
                      measure_scaling, write_scaling, METHODS)
from .network import load_checkpoint, save_checkpoint, param_count
from .svgplot import line_plot, save_plot
from .training import train
from .units import dbw_to_watts

_DEFAULT_SCALING_K = (2, 4, 8, 16)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="isaclearn",
        description="Train and evaluate a learned sensing-plus-communication precoder.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint: bool):
        sp.add_argument("--config", required=True, help="experiment JSON path")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--threads", type=int, default=None,
                        help="override evaluation worker count")
        if checkpoint:
            sp.add_argument("--checkpoint", required=True, help="trained model path")

    common(sub.add_parser("train", help="train a network and save a checkpoint"),
           checkpoint=False)
    common(sub.add_parser("eval", help="evaluate methods at the base operating point"),
           checkpoint=True)
    common(sub.add_parser("sweep", help="evaluate along the configured sweep axis"),
           checkpoint=True)
    common(sub.add_parser("scaling", help="measure inference time against user count"),
           checkpoint=True)
    common(sub.add_parser("baseline", help="evaluate the classical baselines only"),
           checkpoint=False)
    return p


def _load_exp(args) -> ExperimentConfig:
    exp = load_config(args.config)
    if args.seed is not None:
        exp = replace(exp, seed=args.seed)
    if args.threads is not None:
        exp = replace(exp, threads=args.threads)
    if args.out is not None:
        exp = replace(exp, out_dir=args.out)
    return exp


def _out_dir(exp: ExperimentConfig) -> str:
    os.makedirs(exp.out_dir, exist_ok=True)
    return exp.out_dir


def _load_compatible(path, exp: ExperimentConfig):
    params, meta = load_checkpoint(path)
    if params.m != exp.scene.m:
        raise ConfigError(f"checkpoint has {params.m} antennas, config wants {exp.scene.m}")
    if params.lift_dim != exp.lift_dim:
        raise ConfigError(f"checkpoint lift_dim {params.lift_dim} != config {exp.lift_dim}")
    return params, meta


def _cmd_train(args) -> int:
    exp = _load_exp(args)
    out = _out_dir(exp)
    params, history = train(exp.scene, exp.sounding, exp.hyper, exp.lift_dim, exp.seed)
    ckpt = os.path.join(out, f"checkpoint_seed{exp.seed}.bin")
    save_checkpoint(ckpt, params, meta={
        "seed": exp.seed,
        "scene": exp.scene.to_dict(),
        "sounding": exp.sounding.to_dict(),
        "hyper": exp.hyper.to_dict(),
        "param_count": param_count(params),
    })
    hist_path = os.path.join(out, f"history_seed{exp.seed}.csv")
    with open(hist_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("epoch", "batch", "objective", "q_term",
                         "penalty_term", "min_slack", "grad_norm"))
        for row in history:
            writer.writerow([row.epoch, row.batch, repr(row.objective),
                             repr(row.q_term), repr(row.penalty_term),
                             repr(row.min_slack), repr(row.grad_norm)])
    print(f"checkpoint: {ckpt}")
    print(f"history:    {hist_path}")
    return 0


def _cmd_eval(args, methods=METHODS, need_axis: bool = False,
              plots: bool = False) -> int:
    exp = _load_exp(args)
    if need_axis and exp.sweep_axis == "none":
        raise ConfigError("this command needs a sweep axis in the config")
    params = None
    if "proposed" in methods:
        params, _ = _load_compatible(args.checkpoint, exp)
    out = _out_dir(exp)
    rows = run_eval(params, exp, methods=methods)
    name = "sweep" if need_axis else "eval"
    res_path = os.path.join(out, f"{name}_seed{exp.seed}.csv")
    write_results(res_path, rows)
    print(f"results: {res_path}")
    for row in rows:
        print(f"  {row.method:13s} sweep={row.sweep or '-':>10s} "
              f"gamma_min={row.gamma_min_db:7.2f} dB  q={row.q_db:8.2f} dB  "
              f"feasible={row.feasible_frac:.2f}")
    if plots:
        _emit_plots(exp, rows, out)
    return 0


def _emit_plots(exp: ExperimentConfig, rows, out: str) -> None:
    axis = exp.sweep_axis
    methods = sorted({r.method for r in rows}, key=list(METHODS).index)
    labels = [r.sweep for r in rows if r.method == methods[0]]
    numeric = axis in ("pd_dbw", "gamma_db", "k_test")
    xs = [float(v) for v in labels] if numeric else list(range(len(labels)))

    def series(field):
        out_s = []
        for m in methods:
            ys = [getattr(r, field) for r in rows if r.method == m]
            out_s.append((m, xs, ys))
        return out_s

    q_svg = line_plot(series("q_db"), title="Worst-case illumination",
                      xlabel=axis, ylabel="Q (dB)")
    save_plot(os.path.join(out, f"q_vs_{axis}.svg"), q_svg)
    g_svg = line_plot(series("gamma_min_db"), title="Worst-case average SINR",
                      xlabel=axis, ylabel="SINR (dB)",
                      target=exp.hyper.gamma_db, target_label="Target")
    save_plot(os.path.join(out, f"gamma_vs_{axis}.svg"), g_svg)
    print(f"plots:   {out}/q_vs_{axis}.svg, {out}/gamma_vs_{axis}.svg")


def _cmd_scaling(args) -> int:
    exp = _load_exp(args)
    params, _ = _load_compatible(args.checkpoint, exp)
    if exp.sweep_axis == "k_test" and exp.sweep_values:
        k_values = tuple(int(v) for v in exp.sweep_values)
    else:
        k_values = _DEFAULT_SCALING_K
    out = _out_dir(exp)
    report = measure_scaling(params, exp.scene, exp.sounding, k_values,
                             pd_w=dbw_to_watts(exp.hyper.pd_dbw), seed=exp.seed)
    path = os.path.join(out, f"scaling_seed{exp.seed}.csv")
    write_scaling(path, report)
    print(f"scaling: {path}")
    for k, s in zip(report.k_values, report.median_s):
        print(f"  K={k:3d}  median {s * 1e3:8.3f} ms")
    print(f"  power-law exponent {report.exponent:.3f}, linear-fit "
          f"R^2 {report.r2_linear:.4f}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "sweep":
            return _cmd_eval(args, need_axis=True, plots=True)
        if args.command == "scaling":
            return _cmd_scaling(args)
        if args.command == "baseline":
            return _cmd_eval(args, methods=("perfect-csi", "estimated-csi"))
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, DegenerateOutputError, IllConditionedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except IsaclearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
