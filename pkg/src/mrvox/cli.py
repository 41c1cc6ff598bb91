"""Command-line entry points for the pipeline, studies, and reports."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .dataset import load_dataset, write_dataset
from .errors import MrvoxError
from .localcov import krige
from .parallel import default_threads, rng_stream
from .pipeline import (DEFAULT_LAMBDA_GRID, PipelineConfig, run_pipeline,
                       write_reports, write_support_snapshots)
from .simulate import (PhantomSpec, default_spec, gen_phantom, power_curve,
                       run_fp_study, run_krige_study)
from .state import load_state


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=default_threads(),
                        help="worker count (default: logical cores)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", type=str, default=None,
                        help="JSON file overriding pipeline settings")
    common.add_argument("--resume", action="store_true",
                        help="reuse stages already present in the state directory")
    return common


def _pipeline_config(args, stages) -> PipelineConfig:
    overrides = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
    cfg = PipelineConfig(
        dataset_dir=args.dataset,
        out_dir=args.out,
        stages=tuple(stages),
        threads=args.threads,
        seed=args.seed,
        spline_p=overrides.get("spline_p", 0.3),
        fdr_q=overrides.get("fdr_q", 0.05),
        lambda_grid=tuple(overrides.get("lambda_grid", DEFAULT_LAMBDA_GRID)),
        n_harmonics=overrides.get("n_harmonics", 1),
        subsample_cap=overrides.get("subsample_cap", 1000),
        resume=args.resume,
    )
    return cfg


def _load_source(args):
    if getattr(args, "spec", None):
        return PhantomSpec.from_json(args.spec)
    if getattr(args, "dataset", None):
        return load_dataset(args.dataset)
    raise MrvoxError("provide --spec or --dataset")


def _cmd_simulate(args):
    spec = PhantomSpec.from_json(args.spec) if args.spec else default_spec(args.seed)
    dataset, _ = gen_phantom(spec, seed=args.seed)
    write_dataset(args.out, dataset)
    print(f"wrote phantom dataset ({dataset.n_voxels} voxels x "
          f"{dataset.n_scans} scans) to {args.out}")


def _cmd_stage(args, stages):
    config = _pipeline_config(args, stages)
    state = run_pipeline(config)
    print(f"completed stages: {','.join(state.stages_present())}; "
          f"state in {config.state_dir()}")


def _cmd_krige(args):
    dataset = load_dataset(args.dataset)
    state = load_state(Path(args.state))
    if state.local is None:
        raise MrvoxError("krige requires the local stage in the state")
    parc = dataset.parcellation
    if args.targets:
        target_ids = [int(tok) for tok in args.targets.split(",")]
    else:
        rng = rng_stream(args.seed, 99)
        target_ids = sorted(int(v) for v in rng.choice(
            parc.voxel_ids, size=args.n_random, replace=False))
    records = {rec.roi: rec for rec in state.local.rois}
    rows = []
    for vid in target_ids:
        pos = int(np.nonzero(parc.voxel_ids == vid)[0][0])
        roi = int(parc.rois[pos])
        idx = parc.roi_indices(roi)
        local_pos = int(np.nonzero(idx == pos)[0][0])
        cov = records[roi].activation_cov()
        observed = np.array([i for i in range(idx.size) if i != local_pos])
        e_roi = state.temporal.residuals[idx]
        pred = krige(cov, observed, e_roi[observed], np.array([local_pos]))[0]
        rmse = float(np.sqrt(np.mean((pred - e_roi[local_pos]) ** 2)))
        rows.append((vid, roi, rmse, e_roi.shape[1]))
    io.write_report(args.out, "krige", ["voxel_id", "roi", "rmse", "n_times"], rows)
    print(f"wrote kriging report for {len(rows)} voxels to {args.out}")


def _cmd_study(args, kind):
    source = _load_source(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if kind == "fp":
        report = run_fp_study(source, reps=args.reps, subsample_cap=args.cap,
                              seed=args.seed, threads=args.threads)
        path = out / "study_fp.csv"
    elif kind == "krige":
        report = run_krige_study(source, reps=args.reps, n_removed=args.n_removed,
                                 subsample_cap=args.cap, seed=args.seed,
                                 threads=args.threads)
        path = out / "study_krige.csv"
    else:
        effects = [float(tok) for tok in args.effects.split(",")]
        report = power_curve(source, effects, reps=args.reps,
                             subsample_cap=args.cap, seed=args.seed,
                             threads=args.threads)
        path = out / "study_power.csv"
    report.write_csv(path)
    print(f"{kind} study finished in {report.runtime_seconds:.1f}s; "
          f"mean row: {report.by_model()}")


def _cmd_report(args):
    dataset = load_dataset(args.dataset)
    state = load_state(Path(args.state))
    write_reports(dataset, state, args.out)
    if args.support_snapshots:
        write_support_snapshots(state, Path(args.out) / "glasso_support.csv")
    print(f"reports written to {args.out}")


def main(argv=None) -> int:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="mrvox",
                                     description="multi-resolution voxel modeling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a phantom dataset")
    p.add_argument("--spec", type=str, default=None, help="phantom spec JSON")
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=_cmd_simulate)

    stage_sets = {
        "fit-temporal": ("temporal",),
        "fit-local": ("temporal", "local"),
        "fit-regional": ("temporal", "local", "regional"),
        "test-activation": ("temporal", "local", "activation"),
    }
    for name, stages in stage_sets.items():
        p = sub.add_parser(name, parents=[common],
                           help=f"run the pipeline through {stages[-1]}")
        p.add_argument("--dataset", type=str, required=True)
        p.add_argument("--out", type=str, required=True)
        p.set_defaults(func=lambda a, s=stages: _cmd_stage(a, s))

    p = sub.add_parser("krige", parents=[common],
                       help="leave-one-out kriging of residuals at chosen voxels")
    p.add_argument("--dataset", type=str, required=True)
    p.add_argument("--state", type=str, required=True)
    p.add_argument("--targets", type=str, default=None, help="comma-separated voxel ids")
    p.add_argument("--n-random", type=int, default=10)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=_cmd_krige)

    for kind in ("fp", "krige", "power"):
        p = sub.add_parser(f"study-{kind}", parents=[common],
                           help=f"run the {kind} comparison study")
        p.add_argument("--spec", type=str, default=None)
        p.add_argument("--dataset", type=str, default=None)
        p.add_argument("--reps", type=int, default=100)
        p.add_argument("--cap", type=int, default=1000)
        p.add_argument("--out", type=str, required=True)
        if kind == "krige":
            p.add_argument("--n-removed", type=int, default=50)
        if kind == "power":
            p.add_argument("--effects", type=str, default="0,0.05,0.1,0.2")
        p.set_defaults(func=lambda a, k=kind: _cmd_study(a, k))

    p = sub.add_parser("report", parents=[common], help="emit CSV reports from a state")
    p.add_argument("--dataset", type=str, required=True)
    p.add_argument("--state", type=str, required=True)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--support-snapshots", action="store_true")
    p.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    try:
        args.func(args)
    except MrvoxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
