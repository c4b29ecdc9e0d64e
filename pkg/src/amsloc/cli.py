"""Command-line front end: render, extract, train, tune, localize, evaluate, bench, baseline."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import plotting
from .audio_io import read_wav
from .classification import LdaEnsemble
from .config import load_config
from .errors import AmslocError, ConfigError
from .evaluation import (TuningObjective, evaluate_set, features_from_manifest, localize,
                         run_benchmark, train_model, write_estimates)
from .features import FilterbankConfig
from .mbo import filterbank_search_space, optimize, write_history
from .music import SteeringGrid, music_localize
from .pipeline import FeaturePipeline
from .scene import HeadModel, read_manifest, render_corpus

log = logging.getLogger("amsloc")


def _head(cfg: dict) -> HeadModel:
    r = cfg["renderer"]
    return HeadModel(r["head_radius_m"], r["ear_azimuth_deg"], r["mic_offset_m"], r["speed_of_sound_mps"])


def _manifest(data) -> Path:
    p = Path(data)
    return p / "manifest.csv" if p.is_dir() else p


def _pipeline(cfg: dict, filterbank_file=None) -> FeaturePipeline:
    fb = FilterbankConfig.load(filterbank_file) if filterbank_file else None
    return FeaturePipeline.from_config(cfg, fb)


def subset_per_direction(rows: list[dict], n: int) -> list[dict]:
    """``n`` files per azimuth, spread evenly over each direction's file list."""
    by_az: dict[float, list] = {}
    for row in rows:
        by_az.setdefault(row["azimuth_deg"], []).append(row)
    out = []
    for az in sorted(by_az):
        files = by_az[az]
        idx = np.unique(np.round(np.linspace(0, len(files) - 1, min(n, len(files)))).astype(int))
        out.extend(files[i] for i in idx)
    return out


def search_space_from_json(path):
    """Filterbank space, optionally with per-dimension ``lower``/``upper`` overrides."""
    space = filterbank_search_space()
    if path is None:
        return space
    d = json.loads(Path(path).read_text())
    for key in ("lower", "upper"):
        if key in d:
            values = np.asarray(d[key], dtype=np.float64)
            if values.shape != (space.dims,):
                raise ConfigError(f"{path}: '{key}' needs {space.dims} values")
            setattr(space, key, values)
    if np.any(space.lower >= space.upper):
        raise ConfigError(f"{path}: every dimension needs lower < upper")
    return space


def cmd_render(args, cfg):
    r = cfg["renderer"]
    manifest = render_corpus(args.out, _head(cfg), args.files_per_direction or r["files_per_direction"],
                             args.seed, args.duration or r["duration_s"], args.workers)
    print(f"wrote {manifest}")
    return 0


def cmd_extract(args, cfg):
    pipe = _pipeline(cfg, args.filterbank)
    x, az, ids = features_from_manifest(read_manifest(_manifest(args.data)), pipe)
    np.savez(args.out, features=x, azimuths=az, recording_ids=np.array(ids),
             config_hash=pipe.config_hash(), pipeline=json.dumps(pipe.to_dict()))
    print(f"wrote {args.out}: {x.shape[0]} frames x {x.shape[1]} features")
    return 0


def cmd_train(args, cfg):
    c = cfg["classifier"]
    if args.features:
        with np.load(args.features) as d:
            x, az = d["features"], d["azimuths"]
            pipe = FeaturePipeline.from_dict(json.loads(str(d["pipeline"])))
    else:
        pipe = _pipeline(cfg, args.filterbank)
        x, az, _ = features_from_manifest(read_manifest(_manifest(args.data)), pipe)
    ens = train_model(x, az, pipe, seed=args.seed, repeats=c["repeats"], folds=c["folds"])
    sha = ens.save(args.out)
    print(f"wrote {args.out} ({len(ens)} models, cv error {ens.cv_error:.4f}, sha256 {sha[:16]})")
    return 0


def cmd_tune(args, cfg):
    m = cfg["mbo"]
    pipe = _pipeline(cfg)
    rows = subset_per_direction(read_manifest(_manifest(args.data)), args.files_per_direction or m["files_per_direction"])
    objective = TuningObjective.from_recordings(((read_wav(r["path"]), r["azimuth_deg"]) for r in rows),
                                                pipe, seed=args.seed, repeats=cfg["classifier"]["repeats"],
                                                folds=cfg["classifier"]["folds"])
    space = search_space_from_json(args.space)
    result = optimize(objective, space, budget=args.budget or m["budget"], init_n=args.init_n or m["init_n"],
                      seed=args.seed, config_objective=True)
    out = Path(args.out)
    result.best_config.save(out)
    history = out.with_name(out.stem + "_history.csv")
    write_history(history, result, space)
    plotting.plot_convergence(result, out.with_name(out.stem + "_convergence.png"))
    print(f"best cv error {result.best_error:.4f} after {result.budget_used} evaluations")
    print(f"wrote {out} and {history}")
    return 0


def _timestamps(duration: float, step: float) -> np.ndarray:
    return np.arange(0.0, duration, step)


def cmd_localize(args, cfg):
    ens = LdaEnsemble.load(args.model)
    rows = []
    status = 0
    for path in args.inputs:
        try:
            audio = read_wav(path)
            res = localize(ens, audio)
        except (OSError, AmslocError) as exc:
            print(f"{path}: failed: {exc}", file=sys.stderr)
            status = 1
            continue
        est = res.estimate
        print(f"{Path(path).stem}: azimuth {est.azimuth_deg:.2f} deg, confidence {est.confidence:.3f}, "
              f"{res.n_frames} frames, RTF {res.rtf:.4f}")
        step = args.timestamp_step or FeaturePipeline.from_dict(ens.pipeline).framer.hop_length_s
        rows.append((Path(path).stem, _timestamps(audio.duration, step), est))
        if args.plot_dir:
            plotting.plot_histogram(res.histogram, est, path=Path(args.plot_dir) / f"{Path(path).stem}_histogram.png",
                                    title=Path(path).stem)
    if args.out:
        write_estimates(args.out, rows)
        print(f"wrote {args.out}")
    return status


def cmd_evaluate(args, cfg):
    ens = LdaEnsemble.load(args.model)
    report = evaluate_set(ens, read_manifest(_manifest(args.data)))
    print(report.table())
    out = Path(args.out)
    report.write_csv(out)
    if report.succeeded:
        plotting.plot_evaluation(report, out.with_suffix(".png"))
    print(f"wrote {out}")
    if report.failed:
        print("warning: some recordings failed; MAE covers the successful ones only", file=sys.stderr)
        return 1
    return 0


def cmd_bench(args, cfg):
    ens = LdaEnsemble.load(args.model)
    rows = read_manifest(_manifest(args.data))
    if args.limit:
        rows = rows[:args.limit]
    report = run_benchmark(ens, [r["path"] for r in rows], runs=args.runs, head=_head(cfg))
    print(report.table())
    out = Path(args.out)
    report.write_csv(out)
    plotting.plot_rtf(report, out.with_suffix(".png"))
    print(f"wrote {out}")
    if report.mean_pipeline_rtf >= report.mean_music_rtf:
        print(f"pipeline RTF {report.mean_pipeline_rtf:.4f} is not below MUSIC RTF {report.mean_music_rtf:.4f}",
              file=sys.stderr)
        return 1
    return 0


def cmd_baseline(args, cfg):
    audio = read_wav(args.input)
    pipe = _pipeline(cfg)
    audio = pipe.prepare(audio)
    grid = SteeringGrid.for_head(_head(cfg), audio.sample_rate)
    start = time.perf_counter()
    az = music_localize(audio, grid)
    elapsed = time.perf_counter() - start
    print(f"{Path(args.input).stem}: azimuth {az:.1f} deg, {elapsed:.3f} s, RTF {elapsed / audio.duration:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amsloc", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration document")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", parents=[common], help="render the synthetic training corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--files-per-direction", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("extract", parents=[common], help="write AMS features of a corpus to .npz")
    p.add_argument("--data", required=True, help="corpus directory or manifest CSV")
    p.add_argument("--filterbank", help="FilterbankConfig JSON (e.g. from tune)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="train the 120-model LDA ensemble")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="corpus directory or manifest CSV")
    src.add_argument("--features", help=".npz written by extract")
    p.add_argument("--filterbank")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", parents=[common], help="MBO search over filterbank passbands")
    p.add_argument("--data", required=True)
    p.add_argument("--space", help="JSON with optional 'lower'/'upper' arrays of 12 values")
    p.add_argument("--budget", type=int)
    p.add_argument("--init-n", type=int)
    p.add_argument("--files-per-direction", type=int)
    p.add_argument("--out", default="filterbank.json")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("localize", parents=[common], help="estimate the azimuth of recordings")
    p.add_argument("--model", required=True)
    p.add_argument("inputs", nargs="+", metavar="WAV")
    p.add_argument("--out", help="estimates CSV")
    p.add_argument("--timestamp-step", type=float, help="seconds between output timestamps (default: hop)")
    p.add_argument("--plot-dir", help="write a vote-histogram figure per recording here")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("evaluate", parents=[common], help="MAE and RTF over a labeled set")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="report.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", parents=[common], help="pipeline vs MUSIC real-time factors")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--limit", type=int, help="only the first N recordings")
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("baseline", parents=[common], help="MUSIC estimate for one recording")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (OSError, AmslocError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
