"""Command-line interface.

Subcommands mirror the library pipeline: ``train`` learns the dynamics from a
directory of demonstration CSVs, ``clf-fit`` learns a Lyapunov candidate from
the same demonstrations, ``simulate`` rolls the stabilized pair out from
chosen start points, ``evaluate`` scores saved artifacts against a
demonstration directory, ``benchmark`` runs the full comparison over a dataset
of shape subdirectories, and ``export-field`` writes grid CSVs for external
plotting.

Every subcommand accepts ``--config`` (JSON, same schema as the benchmark
configuration), ``--seed``, ``--jitter``, and ``--out``; command-line values
override the config file.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import load_clf
from .benchmark import (
    CLF_KINDS,
    BenchmarkConfig,
    closed_rollout_curve,
    export_field,
    fit_clf,
    rollout_against_demos,
    run_benchmark,
)
from .gpssm import Gpssm, train_gpssm
from .metrics import grid_points
from .simulate import simulate
from .stabilizer import StabilizedModel
from .trajectory import downsample, load_dataset, to_pairs


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config", type=Path, default=None, help="JSON configuration file"
    )
    parser.add_argument("--seed", type=int, default=None, help="random seed override")
    parser.add_argument(
        "--jitter", type=float, default=None, help="kernel diagonal jitter override"
    )
    parser.add_argument(
        "--out", type=Path, default=Path("."), help="output directory (default: .)"
    )


def _resolve_config(args: argparse.Namespace) -> BenchmarkConfig:
    data = {}
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    config = BenchmarkConfig.from_dict(data)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.jitter is not None:
        config = replace(config, jitter=args.jitter)
    if getattr(args, "downsample", None) is not None:
        config = replace(config, downsample_factor=args.downsample)
    if getattr(args, "no_figures", False):
        config = replace(config, figures=False)
    return config


def _load_pairs(demo_dir: Path, config: BenchmarkConfig):
    demos = [downsample(t, config.downsample_factor) for t in load_dataset(demo_dir)]
    return demos, to_pairs(demos, augment_origin=True)


def _bounds_from_args(args: argparse.Namespace, model: Gpssm) -> np.ndarray:
    if args.bounds is not None:
        flat = np.asarray(args.bounds, dtype=float)
        if flat.size != 2 * model.dim:
            raise SystemExit(
                f"--bounds needs {2 * model.dim} numbers (low high per dimension), "
                f"got {flat.size}"
            )
        return flat.reshape(model.dim, 2)
    pts = model.train_inputs
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.25 * np.maximum(hi - lo, 1.0)
    return np.column_stack([lo - pad, hi + pad])


def _cmd_train(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    demos, pairs = _load_pairs(args.demos, config)
    model = train_gpssm(pairs, jitter=config.jitter, seed=config.seed)
    path = model.save(args.out / "model.json")
    residual = float(
        np.max(np.linalg.norm(model.predict(pairs.inputs) - pairs.targets, axis=1))
    )
    print(
        f"trained dynamics on {len(pairs)} pairs from {len(demos)} demonstrations; "
        f"max reproduction residual {residual:.3e}"
    )
    print(f"wrote {path}")
    return 0


def _cmd_clf_fit(args: argparse.Namespace) -> int:
    from .baselines import hinge_loss

    config = _resolve_config(args)
    _, pairs = _load_pairs(args.demos, config)
    clf = fit_clf(pairs, args.kind, seed=config.seed, jitter=config.jitter)
    path = clf.save(args.out / f"clf_{args.kind}.json")
    print(
        f"fitted {args.kind} candidate on {len(pairs)} pairs; "
        f"hinge loss {hinge_loss(clf, pairs):.6g}"
    )
    print(f"wrote {path}")
    return 0


def _load_artifacts(args: argparse.Namespace, config: BenchmarkConfig) -> StabilizedModel:
    model = Gpssm.load(args.model)
    clf = load_clf(args.clf)
    return StabilizedModel(model=model, clf=clf, config=config.solver)


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    stabilized = _load_artifacts(args, config)
    starts: list[tuple[str, np.ndarray]] = []
    for i, point in enumerate(args.start or []):
        starts.append((f"start_{i}", np.asarray(point, dtype=float)))
    if args.starts_from is not None:
        for traj in load_dataset(args.starts_from):
            starts.append((traj.name, traj.states[0]))
    if not starts:
        raise SystemExit("no start points: pass --start and/or --starts-from")

    summaries = []
    for name, start in starts:
        result = simulate(
            stabilized, start, max_steps=config.max_steps, stop_radius=config.stop_radius
        )
        csv_path = result.save_csv(args.out / f"rollout_{name}.csv")
        summaries.append({"name": name, "csv": str(csv_path), **result.summary()})
        print(
            f"{name}: {result.termination} after {result.n_steps} steps, "
            f"final radius {summaries[-1]['final_radius']:.3f}"
        )
    summary_path = args.out / "rollouts.json"
    summary_path.parent.mkdir(parents=True, exist_ok=True)
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summaries, fh, indent=2)
        fh.write("\n")
    print(f"wrote {summary_path}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    from .baselines import hinge_loss

    config = _resolve_config(args)
    demos, pairs = _load_pairs(args.demos, config)
    stabilized = _load_artifacts(args, config)
    assessments = rollout_against_demos(stabilized, demos, config)
    v_in = stabilized.clf.value_many(pairs.inputs)
    v_next = stabilized.clf.value_many(pairs.targets)
    payload = {
        "demos": str(args.demos),
        "model": str(args.model),
        "clf": str(args.clf),
        "n_pairs": len(pairs),
        "hinge_loss": float(hinge_loss(stabilized.clf, pairs)),
        "n_increase_pairs": int(np.sum(v_next > v_in)),
        "rollouts": [a.summary() for a in assessments],
        "reproduction_error_mean": float(
            np.mean([a.reproduction_error for a in assessments])
        ),
    }
    for assessment in assessments:
        assessment.result.save_csv(args.out / f"rollout_{assessment.demo_name}.csv")
    out = args.out / "evaluation.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    if config.figures and pairs.dim == 2:
        from . import plots

        bounds = pairs.bounding_box(margin=config.grid_margin)
        grid = grid_points(bounds, config.points_per_side)
        plots.render_shape_overview(
            args.out / "overview.png",
            grid_shape=(config.points_per_side,) * pairs.dim,
            points=grid,
            values=stabilized.clf.value_many(grid),
            displacement=None,
            demos=demos,
            rollouts=[closed_rollout_curve(a.result) for a in assessments],
            title=Path(args.demos).name,
        )
    print(
        f"hinge loss {payload['hinge_loss']:.6g}, "
        f"mean reproduction area {payload['reproduction_error_mean']:.3f}"
    )
    print(f"wrote {out}")
    return 0


def _cmd_benchmark(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    dataset = args.dataset if args.dataset is not None else config.dataset
    if dataset is None:
        raise SystemExit("no dataset: pass a directory argument or set it in --config")
    report = run_benchmark(dataset, config, out_dir=args.out)
    print(report.to_markdown())
    print(f"wrote {args.out / 'report.json'} and {args.out / 'report.md'}")
    return 0


def _cmd_export_field(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    stabilized = _load_artifacts(args, config)
    bounds = _bounds_from_args(args, stabilized.model)
    paths = export_field(
        stabilized.model,
        stabilized.clf,
        bounds,
        args.n,
        args.out,
        solver=config.solver,
    )
    for role, path in paths.items():
        print(f"{role}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stabledyn",
        description="Learn stable dynamics from demonstrations and benchmark "
        "Lyapunov candidates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the GP dynamics from demonstration CSVs")
    p.add_argument("demos", type=Path, help="directory of demonstration CSV files")
    p.add_argument("--downsample", type=int, default=None, help="downsample factor")
    _common_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("clf-fit", help="fit a Lyapunov candidate from demonstrations")
    p.add_argument("demos", type=Path, help="directory of demonstration CSV files")
    p.add_argument("--kind", choices=CLF_KINDS, default="np")
    p.add_argument("--downsample", type=int, default=None, help="downsample factor")
    _common_flags(p)
    p.set_defaults(func=_cmd_clf_fit)

    p = sub.add_parser("simulate", help="roll the stabilized model out")
    p.add_argument("--model", type=Path, required=True, help="saved model JSON")
    p.add_argument("--clf", type=Path, required=True, help="saved candidate JSON")
    p.add_argument(
        "--start",
        type=float,
        nargs="+",
        action="append",
        help="start point coordinates, e.g. --start -30 28 (repeatable)",
    )
    p.add_argument(
        "--starts-from",
        type=Path,
        default=None,
        help="directory of demonstration CSVs whose first states become starts",
    )
    _common_flags(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("evaluate", help="score saved artifacts on demonstrations")
    p.add_argument("demos", type=Path, help="directory of demonstration CSV files")
    p.add_argument("--model", type=Path, required=True, help="saved model JSON")
    p.add_argument("--clf", type=Path, required=True, help="saved candidate JSON")
    p.add_argument("--downsample", type=int, default=None, help="downsample factor")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    _common_flags(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("benchmark", help="compare CLF kinds over a dataset")
    p.add_argument(
        "dataset",
        type=Path,
        nargs="?",
        default=None,
        help="dataset directory of shape subdirectories (default: config dataset)",
    )
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    _common_flags(p)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("export-field", help="write grid CSVs for external plotting")
    p.add_argument("--model", type=Path, required=True, help="saved model JSON")
    p.add_argument("--clf", type=Path, required=True, help="saved candidate JSON")
    p.add_argument(
        "--bounds",
        type=float,
        nargs="*",
        default=None,
        help="low high per dimension, e.g. --bounds -60 20 -30 50",
    )
    p.add_argument("--n", type=int, default=100, help="grid points per side")
    _common_flags(p)
    p.set_defaults(func=_cmd_export_field)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
