"""Command-line entry point: ``heatstress <subcommand> ...``.

Exit codes: 0 success, 2 input validation, 3 numerical failure, 4 I/O.
Diagnostics go to stderr as one JSON object per line; every run that
writes outputs also writes a run manifest (input digests, resolved config,
duration and QA counters).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class CLIError(Exception):
    def __init__(self, exit_code: int, code: str, message: str, **extra):
        super().__init__(message)
        self.exit_code = exit_code
        self.code = code
        self.extra = extra


def emit(level: str, code: str, message: str, **extra) -> None:
    rec = {"level": level, "code": code, "message": message, **extra}
    print(json.dumps(rec, sort_keys=True, default=str), file=sys.stderr, flush=True)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digests(paths: dict) -> dict:
    out = {}
    for name, p in paths.items():
        if p is None:
            continue
        p = Path(p)
        entry = {"path": str(p), "sha256": sha256_file(p)}
        side = Path(str(p) + ".json")
        if p.suffix == ".f32" and side.exists():
            entry["sidecar_sha256"] = sha256_file(side)
        out[name] = entry
    return out


# ---------------------------------------------------------------------------
# threads


def _requested_threads(args) -> int | None:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("UHI_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise CLIError(EXIT_VALIDATION, "bad_threads", f"UHI_THREADS={env!r} is not an integer")
        if n < 1:
            raise CLIError(EXIT_VALIDATION, "bad_threads", "UHI_THREADS must be >= 1")
        return n
    return None


def configure_threads(n: int | None) -> int:
    """Cap numba and torch worker pools; returns the numba worker count in use."""
    if n is not None and "numba" not in sys.modules:
        # the pool size is fixed at first import, so make room for the request
        os.environ.setdefault("NUMBA_NUM_THREADS", str(max(n, os.cpu_count() or 1)))
    import numba
    import torch

    if n is not None:
        n_eff = max(1, min(n, numba.config.NUMBA_NUM_THREADS))
        if n_eff != n:
            emit("warning", "threads_capped", f"--threads {n} capped to {n_eff}")
        numba.set_num_threads(n_eff)
        torch.set_num_threads(n_eff)
    return numba.get_num_threads()


# ---------------------------------------------------------------------------
# shared loaders


def _load_params(path):
    from .radiation import PersonViewFactors, RadiationParams

    if path is None:
        return RadiationParams(), PersonViewFactors()
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "radiation" in doc or "view_factors" in doc:
        unknown = set(doc) - {"radiation", "view_factors"}
        if unknown:
            raise ValueError(f"unknown params sections: {sorted(unknown)}")
        rad = RadiationParams.from_json(doc.get("radiation", {}))
        vf = PersonViewFactors(**doc.get("view_factors", {}))
        return rad, vf
    return RadiationParams.from_json(doc), PersonViewFactors()


def params_document(rad, vf) -> dict:
    return {"radiation": rad.to_json(), "view_factors": asdict(vf)}


def _load_inputs(args):
    from .meteo import parse_met_csv
    from .raster import assert_aligned, read_grid, read_landcover

    dsm = read_grid(args.dsm, units="m")
    lc = read_landcover(args.landcover)
    assert_aligned(dsm, lc)
    met = parse_met_csv(args.met)
    return dsm, lc, met


def _write(grid, path: Path, fmt: str) -> Path:
    from .raster import write_grid

    path = path.with_suffix("." + fmt)
    write_grid(grid, path)
    return path


def _manifest(args, command: str, inputs: dict, outputs: list, t0: float, qa: dict,
              threads: int, config: dict, param_version=None) -> dict:
    from . import __version__

    return {
        "subcommand": command,
        "package_version": __version__,
        "config": config,
        "inputs": _digests(inputs),
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
        "parameter_file_version": param_version,
        "threads": threads,
        "duration_s": round(time.perf_counter() - t0, 6),
        "qa": qa,
    }


def _save_manifest(path: Path, manifest: dict) -> None:
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands


def _physics_mean(dsm, lc, met, args, rad, vf):
    from .pipeline import Scene, simulate_day

    return simulate_day(Scene(dsm, lc, met), args.lat, args.lon, rad, vf)


def cmd_simulate(args, threads: int) -> int:
    from .thermal import category_legend, category_map

    t0 = time.perf_counter()
    rad, vf = _load_params(args.params)
    dsm, lc, met = _load_inputs(args)
    res = _physics_mean(dsm, lc, met, args, rad, vf)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for rec, grid in zip(met, res.hourly):
        written.append(_write(grid, out / f"utci_{rec.timestamp.hour:02d}", args.format))
    written.append(_write(res.mean, out / "utci_mean", args.format))
    written.append(_write(category_map(res.mean), out / "utci_category", args.format))
    legend = out / "utci_category_legend.json"
    legend.write_text(json.dumps(category_legend(), indent=2) + "\n", encoding="utf-8")
    written.append(legend)
    config = {"lat": args.lat, "lon": args.lon, "format": args.format,
              "params": params_document(rad, vf)}
    _save_manifest(out / "manifest.json", _manifest(
        args, "simulate", {"dsm": args.dsm, "landcover": args.landcover, "met": args.met,
                           "params": args.params}, written, t0, res.qa, threads, config))
    emit("info", "done", f"wrote {len(written)} files to {out}")
    return EXIT_OK


def cmd_scenario(args, threads: int) -> int:
    from .raster import read_grid, read_zones
    from .scenario import (ScenarioSpec, apply_substitution, scenario_delta, substitution_mask,
                           summarize_scenario, write_summary_csv, write_zonal_csv, zonal_summary)

    t0 = time.perf_counter()
    spec = ScenarioSpec(source_class=args.source_class, tile_size=args.tile_size,
                        fallback_height=args.fallback_height)
    rad, vf = _load_params(args.params)
    dsm, lc, met = _load_inputs(args)
    zones = read_zones(args.zones) if args.zones else None

    if args.engine == "surrogate":
        if not args.surrogate_params:
            raise CLIError(EXIT_VALIDATION, "missing_argument",
                           "--engine surrogate needs --surrogate-params")
        from .surrogate import UTCISurrogate

        model = UTCISurrogate.load(args.surrogate_params)
        run = lambda d, l: model.predict_grid(d, l, met)  # noqa: E731
    else:
        run = lambda d, l: _physics_mean(d, l, met, args, rad, vf).mean  # noqa: E731

    inputs = {"dsm": args.dsm, "landcover": args.landcover, "met": args.met,
              "params": args.params, "zones": args.zones, "surrogate_params": args.surrogate_params}
    baseline_path = Path(args.baseline_dir) / "utci_mean.f32" if args.baseline_dir else None
    if baseline_path is not None and baseline_path.exists():
        base = read_grid(baseline_path, units="degC")
        inputs["baseline"] = baseline_path
    else:
        base = run(dsm, lc)
    lc2, dsm2 = apply_substitution(lc, dsm, spec)
    post = run(dsm2, lc2)
    delta = scenario_delta(base, post)
    mask = substitution_mask(lc, spec.source_class)
    summary = summarize_scenario(delta, post, mask)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = [_write(delta, out / "delta_utci", args.format),
               _write(post, out / "scenario_utci_mean", args.format)]
    if baseline_path is None or not baseline_path.exists():
        written.append(_write(base, out / "baseline_utci_mean", args.format))
    csv_path = out / "summary.csv"
    write_summary_csv([(spec, summary)], csv_path)
    written.append(csv_path)
    if zones is not None:
        zpath = out / "zonal.csv"
        write_zonal_csv(zonal_summary(delta, post, zones, lc, spec.source_class), zpath)
        written.append(zpath)
    qa = {"substituted_cells": summary.n_cells, "nodata_cells": int((~delta.valid).sum()),
          "consistency_error": summary.consistency_error()}
    config = {"spec": spec.to_json(), "engine": args.engine, "lat": args.lat, "lon": args.lon,
              "params": params_document(rad, vf), "summary": asdict(summary)}
    _save_manifest(out / "manifest.json",
                   _manifest(args, "scenario", inputs, written, t0, qa, threads, config))
    emit("info", "done", f"{spec.name}: avg delta {summary.avg_delta_utci:.4f} K over "
                         f"{summary.area_km2:.6f} km2")
    return EXIT_OK


def _read_dataset(manifest_path: Path, tile: int):
    from .meteo import parse_met_csv
    from .raster import read_grid, read_landcover
    from .surrogate import tiles_from_grids

    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    base = manifest_path.parent
    entries = doc.get("samples", [])
    if not entries:
        raise ValueError("dataset manifest lists no samples")
    tiles, inputs = [], {}
    for i, e in enumerate(entries):
        missing = {"ndsm", "landcover", "met", "utci"} - set(e)
        if missing:
            raise ValueError(f"sample {i} lacks {sorted(missing)}")
        paths = {k: base / e[k] for k in ("ndsm", "landcover", "met", "utci")}
        got = tiles_from_grids(read_grid(paths["ndsm"]), read_landcover(paths["landcover"]),
                               parse_met_csv(paths["met"]), read_grid(paths["utci"]), tile)
        if not got:
            raise ValueError(f"sample {i} is smaller than one {tile}x{tile} tile")
        tiles.extend(got)
        inputs.update({f"sample{i}_{k}": p for k, p in paths.items()})
    return tiles, inputs


def cmd_train(args, threads: int) -> int:
    import numpy as np

    from .metrics import evaluate_tiles
    from .surrogate import FORMAT_VERSION, SurrogateConfig, UTCISurrogate, split_indices

    t0 = time.perf_counter()
    cfg_doc = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    unknown = set(cfg_doc) - {"model", "variant", "train", "split"}
    if unknown:
        raise ValueError(f"unknown training config sections: {sorted(unknown)}")
    model_cfg = SurrogateConfig.variant(cfg_doc.get("variant", "full"), **cfg_doc.get("model", {}))
    hyper = {"lr": 1e-3, "weight_decay": 1e-4, "batch_size": 8, "epochs": 100, "seed": 0,
             **cfg_doc.get("train", {})}
    split = {"train_fraction": 0.7, "seed": 0, **cfg_doc.get("split", {})}

    tiles, inputs = _read_dataset(Path(args.dataset_manifest), model_cfg.tile)
    train_idx, test_idx = split_indices(len(tiles), split["train_fraction"], split["seed"])
    est = UTCISurrogate(model_cfg, **hyper).fit([tiles[i] for i in train_idx])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params_path = out / "params.bin"
    est.save(params_path)
    loss_path = out / "loss.csv"
    with open(loss_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_mse\n")
        for k, v in enumerate(est.history_, 1):
            fh.write(f"{k},{v!r}\n")
    test = [tiles[i] for i in test_idx]
    pred = est.predict(test)
    report = evaluate_tiles([(s.utci, p) for s, p in zip(test, pred)], mode="tilemean")
    split_path = out / "split.json"
    split_doc = {"n_samples": len(tiles), "n_train": int(len(train_idx)),
                 "n_test": int(len(test_idx)), "train_fraction": split["train_fraction"],
                 "seed": split["seed"], "train": train_idx.tolist(), "test": test_idx.tolist()}
    split_path.write_text(json.dumps(split_doc, indent=2) + "\n", encoding="utf-8")
    written = [params_path, Path(str(params_path) + ".json"), loss_path, split_path]
    qa = {"final_train_mse": est.final_loss_, "initial_train_mse": est.initial_loss_,
          "test_metrics": asdict(report),
          "nonfinite_predictions": int((~np.isfinite(pred)).sum())}
    config = {"model": model_cfg.to_json(), "train": hyper, "split": split_doc | {"train": None,
                                                                                  "test": None}}
    _save_manifest(out / "manifest.json", _manifest(args, "train", inputs, written, t0, qa,
                                                    threads, config, FORMAT_VERSION))
    emit("info", "done", f"trained on {len(train_idx)} tiles, tested on {len(test_idx)}",
         test_r2=report.r2)
    return EXIT_OK


def cmd_predict(args, threads: int) -> int:
    from .raster import write_grid
    from .surrogate import UTCISurrogate

    t0 = time.perf_counter()
    model = UTCISurrogate.load(args.params)
    dsm, lc, met = _load_inputs(args)
    pred = model.predict_grid(dsm, lc, met)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_grid(pred, out)
    written = [out] + ([Path(str(out) + ".json")] if out.suffix == ".f32" else [])
    qa = {"nodata_cells": int((~pred.valid).sum())}
    _save_manifest(Path(str(out) + ".manifest.json"), _manifest(
        args, "predict", {"params": args.params, "dsm": args.dsm, "landcover": args.landcover,
                          "met": args.met}, written, t0, qa, threads, {},
        model.manifest_["format_version"]))
    return EXIT_OK


def cmd_evaluate(args, threads: int) -> int:
    from .metrics import evaluate_tiles
    from .raster import assert_aligned, iter_tiles, read_grid

    ref = read_grid(args.ref)
    pred = read_grid(args.pred)
    assert_aligned(ref, pred)
    r, p = ref.masked(float("nan")), pred.masked(float("nan"))
    if args.mode == "tilemean":
        pairs = []
        for rows, cols in iter_tiles(ref.nrows, ref.ncols, args.tile):
            rr, pp = r[rows, cols], p[rows, cols]
            ok = (rr == rr) & (pp == pp)
            # tiles without two valid cells or without spread carry no R^2
            if ok.sum() >= 2 and rr[ok].min() != rr[ok].max():
                pairs.append((rr, pp))
        if not pairs:
            raise ValueError("no tile has enough valid, non-constant reference cells")
    else:
        pairs = [(r, p)]
    report = evaluate_tiles(pairs, mode=args.mode)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_params(args, threads: int) -> int:
    rad, vf = _load_params(args.params)
    if args.dump:
        print(json.dumps(params_document(rad, vf), indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    from .pipeline import PHILADELPHIA

    p = argparse.ArgumentParser(prog="heatstress", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default: UHI_THREADS or all cores)")
    sub = p.add_subparsers(dest="command", required=True)

    def inputs(sp, met=True):
        sp.add_argument("--dsm", required=True, help="nDSM raster (.asc or .f32)")
        sp.add_argument("--landcover", required=True, help="land-cover code raster")
        if met:
            sp.add_argument("--met", required=True, help="hourly met CSV, 08:00-19:00")

    def site(sp):
        sp.add_argument("--lat", type=float, default=PHILADELPHIA[0])
        sp.add_argument("--lon", type=float, default=PHILADELPHIA[1])
        sp.add_argument("--params", default=None, help="radiation/view-factor JSON")
        sp.add_argument("--format", choices=("f32", "asc"), default="f32")

    s = sub.add_parser("simulate", help="hourly and daytime-mean UTCI from physics")
    inputs(s)
    site(s)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("scenario", help="land-cover substitution to tree canopy")
    inputs(s)
    site(s)
    s.add_argument("--source-class", required=True, help="class code or name")
    s.add_argument("--baseline-dir", default=None, help="directory holding utci_mean.f32")
    s.add_argument("--zones", default=None, help="zone id raster for the zonal CSV")
    s.add_argument("--engine", choices=("physics", "surrogate"), default="physics")
    s.add_argument("--surrogate-params", default=None)
    s.add_argument("--tile-size", type=_positive_int, default=512)
    s.add_argument("--fallback-height", default="citywide-mean")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scenario)

    s = sub.add_parser("train", help="fit the surrogate on a dataset manifest")
    s.add_argument("--dataset-manifest", required=True)
    s.add_argument("--config", default=None, help="training config JSON")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="daytime-mean UTCI from a trained surrogate")
    s.add_argument("--params", required=True, help="parameter blob written by train")
    inputs(s)
    s.add_argument("--out", required=True, help="output raster path")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="metrics between reference and predicted rasters")
    s.add_argument("--ref", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--mode", choices=("tilemean", "pooled"), default="tilemean")
    s.add_argument("--tile", type=_positive_int, default=512)
    s.add_argument("--out", default=None, help="also write the JSON report here")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("params", help="show the resolved physics parameters")
    s.add_argument("--dump", action="store_true")
    s.add_argument("--params", default=None)
    s.set_defaults(func=cmd_params)
    return p


def _classify(exc: BaseException) -> tuple[int, str, dict]:
    from .meteo import MetValidationError
    from .raster import GridAlignmentError, GridFormatError
    from .surrogate import TrainingDiverged

    if isinstance(exc, CLIError):
        return exc.exit_code, exc.code, exc.extra
    if isinstance(exc, GridAlignmentError):
        return EXIT_VALIDATION, "misaligned", {"field": exc.field}
    if isinstance(exc, GridFormatError):
        return EXIT_VALIDATION, f"grid_{exc.code}", {}
    if isinstance(exc, MetValidationError):
        return EXIT_VALIDATION, f"met_{exc.code}", {"row": exc.row}
    if isinstance(exc, TrainingDiverged):
        return EXIT_NUMERIC, "nonfinite_loss", {"epoch": exc.epoch, "batch": exc.batch}
    if isinstance(exc, (FloatingPointError, ArithmeticError)):
        return EXIT_NUMERIC, "numerical", {}
    if isinstance(exc, (OSError, json.JSONDecodeError)):
        code = EXIT_VALIDATION if isinstance(exc, json.JSONDecodeError) else EXIT_IO
        return code, "io" if code == EXIT_IO else "bad_json", {}
    if isinstance(exc, (ValueError, TypeError, KeyError)):
        return EXIT_VALIDATION, "invalid_input", {}
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = configure_threads(_requested_threads(args))
        return args.func(args, threads)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        exit_code, code, extra = _classify(exc)
        emit("error", code, str(exc), exit=exit_code, **extra)
        return exit_code


if __name__ == "__main__":
    sys.exit(main())
