"""Operator surface.

Subcommands: scene-gen, train, eval, cost, search, bench, report. Every
command accepts --seed and an optional --config file of key = value lines
(flags given on the command line win). Exit codes: 0 success, 1 usage error,
2 runtime or numeric failure. Each artifact gets a run-config sidecar so
outputs are reproducible from their recorded arguments and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .cost import (BenchSettings, FlopConvention, Workload, benchmark_fps,
                   cost_report, count_params, er_params, estimate_flops,
                   measure_render_seconds)
from .data import (default_scene_spec, generate_procedural, load_blender,
                   load_descriptor, save_blender, save_descriptor,
                   spec_from_dict, spec_to_dict)
from .field import ArchitectureDescriptor, baseline_descriptor, build_pair
from .metrics import (append_metrics_csv, metrics_csv_row, read_metrics_csv)
from .render import RenderSettings
from .search import (Budget, ConstraintSet, ProxyConfig, SearchSpace,
                     compute_targets, scaled_iterations, search_scene,
                     train_boundary)
from .train import (TrainSettings, TrainingDiverged, evaluate,
                    render_settings_for, train_pair)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep exit-code contract: usage errors are 1
        raise UsageError(message)


def _run_config(command: str, args: argparse.Namespace) -> dict:
    skip = {"config", "func"}
    payload = {k: v for k, v in sorted(vars(args).items())
               if k not in skip and v is not None}
    return {"command": command, "version": __version__, "args": payload}


def _write_sidecar(path: Path, run_config: dict) -> None:
    with open(path, "w") as fh:
        json.dump(run_config, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _apply_config_file(parser: argparse.ArgumentParser,
                       args: argparse.Namespace) -> None:
    """Fill unset options from a key = value file (flags take precedence)."""
    if not getattr(args, "config", None):
        return
    values = {}
    with open(args.config) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{args.config}:{ln}: expected key = value")
            key, raw = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = raw
    actions = []
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            actions.extend(action.choices[args.command]._actions)
        else:
            actions.append(action)
    for action in actions:
        dest = action.dest
        if dest in values and getattr(args, dest, None) is None:
            raw = values[dest]
            if isinstance(action, argparse._StoreTrueAction):
                setattr(args, dest, raw.lower() in ("1", "true", "yes"))
            elif action.type is not None:
                setattr(args, dest, action.type(raw))
            else:
                setattr(args, dest, raw)


def _scene_name(scene_dir: str) -> str:
    return Path(scene_dir).resolve().name


def _load_scene(scene_dir: str):
    if not Path(scene_dir).is_dir():
        raise UsageError(f"scene directory not found: {scene_dir}")
    return load_blender(scene_dir)


def _train_settings(args, iterations: int) -> TrainSettings:
    return TrainSettings(
        iterations=iterations,
        rays_per_batch=args.rays if args.rays is not None else 1024,
        n_coarse=args.nc if args.nc is not None else 32,
        n_fine=args.nf if args.nf is not None else 64,
        learning_rate=args.lr if args.lr is not None else 5e-4,
        seed=args.seed,
        eval_max_images=args.eval_images if args.eval_images is not None else 3,
        eval_every=getattr(args, "eval_every", None) or 0,
    )


# ---------------------------------------------------------------- scene-gen

def cmd_scene_gen(args) -> int:
    if args.spec:
        with open(args.spec) as fh:
            spec = spec_from_dict(json.load(fh))
        if args.seed is not None and args.seed != spec.seed:
            spec = replace(spec, seed=args.seed)
    else:
        spec = default_scene_spec(seed=args.seed or 0)
    dataset, _ = generate_procedural(spec)  # fully built before any write
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_blender(dataset, out, extras={"spec": spec_to_dict(spec)})
    _write_sidecar(out / "run_config.json", _run_config("scene-gen", args))
    n = len(dataset.images)
    print(f"wrote {n} frames ({len(dataset.train_indices)} train / "
          f"{len(dataset.eval_indices)} eval) to {out}")
    return 0


# -------------------------------------------------------------------- train

def _checkpoint_tensors(coarse, fine) -> dict:
    tensors = coarse.named_parameters("coarse.")
    tensors.update(fine.named_parameters("fine."))
    return tensors


def _load_weights(coarse, fine, tensors: dict) -> None:
    named = _checkpoint_tensors(coarse, fine)
    if set(named) != set(tensors):
        raise ValueError("checkpoint tensors do not match the architecture")
    for name, arr in named.items():
        src = tensors[name]
        if src.shape != arr.shape:
            raise ValueError(f"checkpoint tensor {name} has shape {src.shape}, "
                             f"expected {arr.shape}")
        arr[...] = src.astype(arr.dtype)


def cmd_train(args) -> int:
    dataset = _load_scene(args.scene)
    descriptor = load_descriptor(args.descriptor)
    if args.iterations == "auto":
        er = er_params(descriptor)
        policy = args.iter_policy or "inverse"
        baseline_iters = args.auto_baseline_iters or 200_000
        floor = args.auto_floor if args.auto_floor is not None else 16_000
        iterations = scaled_iterations(er, policy, baseline_iters, floor)
        print(f"auto iterations: {iterations} (policy {policy}, "
              f"er_params {er:.2f})")
    else:
        try:
            iterations = int(args.iterations)
        except ValueError:
            raise UsageError(f"--iterations must be an integer or 'auto', "
                             f"got {args.iterations!r}")
    settings = _train_settings(args, iterations)
    coarse, fine = build_pair(descriptor, seed=args.seed)
    result = train_pair(coarse, fine, dataset, settings, quiet=False)
    out = Path(args.out or (Path(args.scene) / "checkpoint.nfck"))
    run_config = _run_config("train", args)
    save_checkpoint(out, descriptor.to_dict(), result.steps,
                    result.optimizer.hyperparams(),
                    _checkpoint_tensors(coarse, fine),
                    extra={"run_config": run_config,
                           "final_ssim": result.final_ssim,
                           "final_psnr": result.final_psnr})
    _write_sidecar(Path(str(out) + ".run.json"), run_config)
    arch_name = args.arch_name or Path(args.descriptor).stem
    if args.metrics_csv:
        rep = cost_report(descriptor)
        append_metrics_csv(args.metrics_csv, [metrics_csv_row(
            _scene_name(args.scene), arch_name, result.final_psnr,
            result.final_ssim, rep.params_m, rep.flops_g)])
    print(f"trained {result.steps} steps; eval ssim {result.final_ssim:.4f} "
          f"psnr {result.final_psnr:.3f}; checkpoint {out}")
    return 0


# --------------------------------------------------------------------- eval

def cmd_eval(args) -> int:
    dataset = _load_scene(args.scene)
    ckpt = load_checkpoint(args.checkpoint)
    descriptor = ArchitectureDescriptor.from_dict(ckpt.descriptor)
    coarse, fine = build_pair(descriptor, seed=args.seed)
    _load_weights(coarse, fine, ckpt.tensors)
    rs = RenderSettings(
        n_coarse=args.nc if args.nc is not None else 32,
        n_fine=args.nf if args.nf is not None else 64,
        background=dataset.background, near=dataset.near, far=dataset.far)
    report = evaluate(coarse, fine, dataset, rs, max_images=args.eval_images,
                      seed=args.seed)
    arch_name = args.arch_name or Path(args.checkpoint).stem
    print(f"eval over {len(report.ssim_values)} frames: "
          f"ssim {report.mean_ssim:.4f} psnr {report.mean_psnr:.3f}")
    if args.metrics_csv:
        rep = cost_report(descriptor)
        append_metrics_csv(args.metrics_csv, [metrics_csv_row(
            _scene_name(args.scene), arch_name, report.mean_psnr,
            report.mean_ssim, rep.params_m, rep.flops_g)])
    if args.save_images:
        from .data import save_image_png
        from .render import render_image
        outdir = Path(args.save_images)
        outdir.mkdir(parents=True, exist_ok=True)
        for k, idx in enumerate(dataset.eval_indices):
            res = render_image(coarse, fine, dataset.cameras[idx], rs,
                               seed=args.seed)
            save_image_png(outdir / f"eval_{k}.png", res.image)
            np.save(outdir / f"eval_{k}.npy", res.image.astype(np.float32))
        _write_sidecar(outdir / "run_config.json", _run_config("eval", args))
    return 0


# --------------------------------------------------------------------- cost

def cmd_cost(args) -> int:
    descriptor = (baseline_descriptor() if args.baseline
                  else load_descriptor(args.descriptor))
    workload = Workload(
        rays=args.rays if args.rays is not None else 4096,
        n_coarse=args.nc if args.nc is not None else 64,
        n_fine=args.nf if args.nf is not None else 128)
    convention = FlopConvention(mac_factor=args.mac or 1)
    rep = cost_report(descriptor, workload, convention)
    base = baseline_descriptor()
    payload = {
        "params": rep.params,
        "params_M": round(rep.params_m, 6),
        "flops": rep.flops,
        "flops_G": round(rep.flops_g, 6),
        "er_params": round(count_params(base) / rep.params, 6),
        "er_flops": round(estimate_flops(base, workload, convention) / rep.flops, 6),
    }
    print(json.dumps(payload, indent=1))
    if args.csv:
        import csv as _csv
        import os
        new = not Path(args.csv).exists() or Path(args.csv).stat().st_size == 0
        with open(args.csv, "a", newline="") as fh:
            w = _csv.DictWriter(fh, fieldnames=["descriptor"] + list(payload))
            if new:
                w.writeheader()
            w.writerow({"descriptor": "baseline" if args.baseline
                        else args.descriptor, **payload})
    return 0


# ------------------------------------------------------------------- search

def cmd_search(args) -> int:
    dataset = _load_scene(args.scene)
    scene = _scene_name(args.scene)
    out = Path(args.out or args.scene)
    out.mkdir(parents=True, exist_ok=True)
    boundary_iters = args.boundary_iters if args.boundary_iters is not None else 2000
    settings = TrainSettings(
        iterations=boundary_iters,
        rays_per_batch=args.rays if args.rays is not None else 32,
        n_coarse=args.nc if args.nc is not None else 16,
        n_fine=args.nf if args.nf is not None else 16,
        learning_rate=args.lr if args.lr is not None else 5e-4,
        seed=args.seed,
        eval_max_images=args.eval_images if args.eval_images is not None else 2,
    )
    space = SearchSpace()
    print(f"training boundary architectures for {boundary_iters} iterations")
    boundary = train_boundary(dataset, boundary_iters, space, settings,
                              seed=args.seed)
    for name, err in boundary.errors.items():
        print(f"warning: boundary {name} diverged: {err}", file=sys.stderr)
    if not (np.isfinite(boundary.ssim_min) and np.isfinite(boundary.ssim_max)):
        raise TrainingDiverged("boundary training produced no usable scores")
    lo, hi = sorted((boundary.ssim_min, boundary.ssim_max))
    if boundary.ssim_min > boundary.ssim_max:
        print(f"warning: boundary scores inverted at this budget "
              f"(min-arch {boundary.ssim_min:.4f} > max-arch "
              f"{boundary.ssim_max:.4f}); using sorted extremes",
              file=sys.stderr)
    if lo == hi:
        raise TrainingDiverged(
            f"degenerate ladder: both boundary architectures scored {lo}")
    ladder = compute_targets(lo, hi)
    print(f"ladder: min {ladder.ssim_min:.4f} max {ladder.ssim_max:.4f} -> "
          f"targets xxs {ladder.t_xxs:.4f} xs {ladder.t_xs:.4f} s {ladder.t_s:.4f}")

    budget = Budget(
        rounds=args.rounds if args.rounds is not None else 3,
        samples_per_round=args.samples if args.samples is not None else 8,
        proxy_iterations=args.proxy_iters if args.proxy_iters is not None else 1000,
        elite_fraction=args.elite_frac if args.elite_frac is not None else 0.25)
    proxy_config = ProxyConfig(
        rays_per_batch=args.proxy_rays if args.proxy_rays is not None else 48,
        n_coarse=args.proxy_nc if args.proxy_nc is not None else 16,
        n_fine=args.proxy_nf if args.proxy_nf is not None else 16,
        downsample=args.proxy_downsample if args.proxy_downsample is not None else 2)
    constraints = ConstraintSet(strict_increase=bool(args.strict_increase))

    def progress(msg):
        print(f"  {msg}", flush=True)

    result = search_scene(dataset, ladder, space, constraints, budget,
                          seed=args.seed, proxy_config=proxy_config,
                          progress=progress)

    run_config = _run_config("search", args)
    emitted = []
    for size, desc in result.named.items():
        path = out / f"{scene}_{size}.json"
        save_descriptor(path, desc)
        emitted.append((size, desc, path))
        print(f"{size}: params {count_params(desc)} -> {path}")
    for tname, res in result.results.items():
        if not res.feasible:
            print(f"warning: target {tname} ({res.target:.4f}) infeasible "
                  f"within budget", file=sys.stderr)
    log = {
        "scene": scene,
        "boundary": {"ssim_min": boundary.ssim_min,
                     "ssim_max": boundary.ssim_max,
                     "a_min": boundary.a_min.to_dict(),
                     "a_max": boundary.a_max.to_dict(),
                     "errors": boundary.errors},
        "search": result.to_dict(),
        "run_config": run_config,
    }
    with open(out / f"{scene}_search_log.json", "w") as fh:
        json.dump(log, fh, separators=(",", ":"))
        fh.write("\n")

    retrain = args.retrain_iters or 0
    if retrain > 0:
        for size, desc, path in emitted:
            coarse, fine = build_pair(desc, seed=args.seed)
            ts = replace(settings, iterations=retrain)
            tr = train_pair(coarse, fine, dataset, ts)
            print(f"retrained {size}: ssim {tr.final_ssim:.4f}")
            if args.metrics_csv:
                rep = cost_report(desc)
                append_metrics_csv(args.metrics_csv, [metrics_csv_row(
                    scene, f"{scene}_{size}", tr.final_psnr, tr.final_ssim,
                    rep.params_m, rep.flops_g)])
    return 0


# -------------------------------------------------------------------- bench

def cmd_bench(args) -> int:
    if args.threads:
        try:
            import threadpoolctl
            threadpoolctl.threadpool_limits(args.threads)
        except ImportError:
            print("warning: threadpoolctl unavailable, thread count recorded "
                  "but not pinned", file=sys.stderr)
    settings = BenchSettings(
        width=args.width or 32, height=args.height or 32,
        n_coarse=args.nc if args.nc is not None else 32,
        n_fine=args.nf if args.nf is not None else 64,
        threads=args.threads)
    reps = args.reps if args.reps is not None else 3
    base_secs = measure_render_seconds(baseline_descriptor(), settings, reps,
                                       seed=args.seed)
    rows = [{"descriptor": "baseline", "seconds": round(base_secs, 6),
             "fps": round(1.0 / base_secs, 4), "speedup": 1.0}]
    for path in args.descriptors:
        desc = load_descriptor(path)
        res = benchmark_fps(desc, settings, reps, baseline_seconds=base_secs,
                            seed=args.seed)
        rows.append({"descriptor": path, "seconds": round(res.seconds, 6),
                     "fps": round(res.fps, 4),
                     "speedup": round(res.speedup, 4)})
    print(json.dumps({"threads": args.threads, "frame":
                      {"width": settings.width, "height": settings.height,
                       "n_coarse": settings.n_coarse, "n_fine": settings.n_fine},
                      "results": rows}, indent=1))
    return 0


# ------------------------------------------------------------------- report

def cmd_report(args) -> int:
    base_flops_g = estimate_flops(baseline_descriptor()) / 1e9
    rows = []
    for path in args.csvs:
        for ln, row in enumerate(read_metrics_csv(path), 2):
            try:
                flops_g = float(row["flops_G"])
                rows.append({
                    "architecture": row["architecture"],
                    "er_flops": base_flops_g / flops_g,
                    "ssim": float(row["ssim"]),
                    "fps": float(row["fps"]) if row.get("fps") else None,
                    "params_M": float(row["params_M"]),
                })
            except (KeyError, ValueError, ZeroDivisionError) as exc:
                print(f"warning: {path}:{ln}: skipping malformed row ({exc})",
                      file=sys.stderr)
    rows.sort(key=lambda r: r["er_flops"])
    out = Path(args.out or "report.csv")
    import csv as _csv
    with open(out, "w", newline="") as fh:
        w = _csv.DictWriter(fh, fieldnames=["architecture", "er_flops", "ssim",
                                            "fps", "params_M"])
        w.writeheader()
        for r in rows:
            w.writerow({**r, "er_flops": f"{r['er_flops']:.4f}",
                        "fps": "" if r["fps"] is None else f"{r['fps']:.4f}"})
    print(f"wrote {len(rows)} rows to {out}")
    _write_sidecar(Path(str(out) + ".run.json"), _run_config("report", args))
    if args.svg:
        _report_svg(rows, args.svg)
        print(f"wrote {args.svg}")
    return 0


def _report_svg(rows: list[dict], path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    have_fps = any(r["fps"] is not None for r in rows)
    fig, axes = plt.subplots(2 if have_fps else 1, 1, figsize=(7, 8 if have_fps else 4.5),
                             squeeze=False)
    x = [r["er_flops"] for r in rows]
    sizes = [40 + 400 * r["params_M"] for r in rows]
    ax = axes[0][0]
    ax.scatter(x, [r["ssim"] for r in rows], s=sizes, alpha=0.65)
    ax.set_xlabel("efficiency ratio (FLOPs)")
    ax.set_ylabel("SSIM")
    ax.grid(True, alpha=0.3)
    if have_fps:
        ax2 = axes[1][0]
        pts = [(e, r["fps"], s) for e, r, s in zip(x, rows, sizes)
               if r["fps"] is not None]
        ax2.scatter([p[0] for p in pts], [p[1] for p in pts],
                    s=[p[2] for p in pts], alpha=0.65, color="tab:orange")
        ax2.set_xlabel("efficiency ratio (FLOPs)")
        ax2.set_ylabel("FPS")
        ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# --------------------------------------------------------------------- main

def build_parser() -> _Parser:
    parser = _Parser(prog="nerfsearch",
                     description="compact per-scene radiance field toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def nonneg(value: str) -> int:
        n = int(value)
        if n < 0:
            raise argparse.ArgumentTypeError("seed must be non-negative")
        return n

    def common(p):
        p.add_argument("--seed", type=nonneg, default=0)
        p.add_argument("--config", help="key = value file; flags win")

    p = sub.add_parser("scene-gen", help="generate a procedural dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--spec", help="procedural scene spec JSON")
    common(p)
    p.set_defaults(func=cmd_scene_gen)

    p = sub.add_parser("train", help="train a descriptor on a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--descriptor", required=True)
    p.add_argument("--iterations", default="2000",
                   help="step count or 'auto' (efficiency-ratio scaled)")
    p.add_argument("--iter-policy", choices=["inverse", "proportional", "fixed"])
    p.add_argument("--auto-baseline-iters", type=int,
                   help="reference budget for --iterations auto (default 200000)")
    p.add_argument("--auto-floor", type=int,
                   help="minimum steps for --iterations auto (default 16000)")
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--metrics-csv")
    p.add_argument("--arch-name")
    p.add_argument("--rays", type=int)
    p.add_argument("--nc", type=int)
    p.add_argument("--nf", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--eval-images", type=int)
    p.add_argument("--eval-every", type=int,
                   help="log eval SSIM every N steps (0: final only)")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the eval split")
    p.add_argument("--scene", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--metrics-csv")
    p.add_argument("--arch-name")
    p.add_argument("--save-images")
    p.add_argument("--eval-images", type=int)
    p.add_argument("--nc", type=int)
    p.add_argument("--nf", type=int)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cost", help="analytic params/FLOPs for a descriptor")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--descriptor")
    g.add_argument("--baseline", action="store_true")
    p.add_argument("--rays", type=int)
    p.add_argument("--nc", type=int)
    p.add_argument("--nf", type=int)
    p.add_argument("--mac", type=int, choices=[1, 2])
    p.add_argument("--csv", help="append mode for sweep tables")
    common(p)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("search", help="boundary ladder + per-target search")
    p.add_argument("--scene", required=True)
    p.add_argument("--out")
    p.add_argument("--boundary-iters", type=int)
    p.add_argument("--proxy-iters", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--elite-frac", type=float)
    p.add_argument("--rays", type=int)
    p.add_argument("--nc", type=int)
    p.add_argument("--nf", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--eval-images", type=int)
    p.add_argument("--proxy-rays", type=int)
    p.add_argument("--proxy-nc", type=int)
    p.add_argument("--proxy-nf", type=int)
    p.add_argument("--proxy-downsample", type=int)
    p.add_argument("--strict-increase", action="store_true")
    p.add_argument("--retrain-iters", type=int)
    p.add_argument("--metrics-csv")
    common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("bench", help="wall-clock FPS vs the baseline")
    p.add_argument("descriptors", nargs="*")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--nc", type=int)
    p.add_argument("--nf", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--threads", type=int)
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="merge metric CSVs into a ratio table")
    p.add_argument("csvs", nargs="+")
    p.add_argument("--out")
    p.add_argument("--svg")
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(parser, args)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # unexpected runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
