"""Command-line front end.

    fiberpiano init config.json
    fiberpiano speckle  --config config.json --out runs/
    fiberpiano optimize --config config.json --variant two_spot
    fiberpiano schmidt  --config config.json

``--config`` also accepts a run manifest written by a previous run, which
replays that run exactly. Without ``--out`` the output directory comes from
the config, then ``$FIBERPIANO_OUT``, then ``./runs``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, write_default
from .experiments import Setup, run_optimize, run_schmidt, run_speckle
from .fiber import TransmissionMatrix, save_tm
from .io import map_document, run_manifest, write_json, write_map_csv, write_pgm, write_trace_csv

log = logging.getLogger("fiberpiano")

OUT_ENV = "FIBERPIANO_OUT"


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.workers is not None:
        cfg = cfg.replace(workers=args.workers)
    return cfg


def _out_dir(args, cfg: ExperimentConfig, command: str) -> Path:
    base = args.out or cfg.output_dir or os.environ.get(OUT_ENV) or "runs"
    out = Path(base) / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _export_maps(maps: dict, out: Path, prefix: str, outputs: dict, pgm: bool):
    for key, m in maps.items():
        name = f"{prefix}_{key}"
        outputs[name + "_csv"] = write_map_csv(m, out / f"{name}.csv")
        outputs[name + "_json"] = write_json(map_document(m), out / f"{name}.json")
        if pgm:
            outputs[name + "_pgm"] = write_pgm(m.values, out / f"{name}.pgm")


def _finish(cfg, command: str, out: Path, outputs: dict, **extra) -> Path:
    manifest = run_manifest(cfg, command, outputs, **extra)
    path = write_json(manifest, out / "manifest.json")
    print(f"wrote {len(outputs)} files and manifest to {out}")
    return path


def cmd_init(args) -> int:
    path = Path(args.path)
    if path.exists() and not args.force:
        raise FileExistsError(f"{path} exists (use --force to overwrite)")
    write_default(path)
    print(f"wrote default config to {path}")
    return 0


def cmd_speckle(args) -> int:
    cfg = _load(args)
    setup = Setup(cfg)
    out = _out_dir(args, cfg, "speckle")
    res = run_speckle(setup)
    outputs: dict = {}
    _export_maps(res.maps, out, "speckle", outputs, pgm=not args.no_pgm)
    summary = {
        "configuration": setup.configuration,
        "schmidt_number": setup.state.schmidt_number,
        "ensemble_size": res.ensemble_size,
        "singles_contrast": res.singles_contrast,
        "coincidence_contrast": res.coincidence_contrast,
        "target_um": list(setup.target.position),
    }
    outputs["summary"] = write_json(summary, out / "summary.json")
    if not args.no_figures:
        from .plotting import histogram_figure, speckle_figure
        outputs["figure_maps"] = speckle_figure(res.maps, out / "speckle_maps.png",
                                                marks=[setup.target.position])
        outputs["figure_hist"] = histogram_figure(
            {"singles": res.singles_samples, "coincidence": res.coincidence_samples},
            out / "speckle_histogram.png")
    _print_table([("singles contrast", res.singles_contrast),
                  ("coincidence contrast", res.coincidence_contrast),
                  ("1/sqrt(K)", 1 / np.sqrt(setup.state.schmidt_number))])
    _finish(cfg, "speckle", out, outputs, summary=summary)
    return 0


def cmd_optimize(args) -> int:
    cfg = _load(args)
    if args.variant:
        cfg = cfg.replace(cost={"variant": args.variant})
    if args.configuration:
        cfg = cfg.replace(state={"configuration": args.configuration})
    setup = Setup(cfg)
    variant = cfg.cost.variant
    out = _out_dir(args, cfg, f"optimize_{variant}")
    res = run_optimize(setup, workers=cfg.workers)
    outputs: dict = {}
    _export_maps(res.before, out, "before", outputs, pgm=not args.no_pgm)
    _export_maps(res.after, out, "after", outputs, pgm=not args.no_pgm)
    outputs["trace"] = write_trace_csv(res.run, out / "trace.csv")
    run_doc = res.run.to_dict()
    run_doc.pop("wall_time_s")
    outputs["run"] = write_json(run_doc, out / "run.json")
    summary = res.summary()
    outputs["report"] = write_json(summary, out / "report.json")
    tm = TransmissionMatrix(setup.piano.tm(res.run.best_displacements), setup.seeds["fiber"],
                            tuple(float(x) for x in res.run.best_displacements))
    outputs["tm_best"] = save_tm(tm, out / "tm_best.bin")
    if not args.no_figures:
        from .plotting import before_after_figure, trace_figure
        marks = [d.position for d in setup.spots] if variant == "two_spot" else [setup.target.position]
        outputs["figure_maps"] = before_after_figure(res.before, res.after, out / "maps.png",
                                                     marks=marks, title=f"{variant} ({res.configuration})")
        outputs["figure_trace"] = trace_figure(res.run, res.baseline, out / "trace.png", ylabel=variant)
    rows = [("cost enhancement", res.cost_enhancement),
            ("coincidence enhancement" if variant != "smf_coupling" else "coupling enhancement",
             res.report.enhancement),
            ("normalized enhancement", res.report.normalized_enhancement),
            ("total-counts ratio", res.report.total_ratio)]
    if res.report.singles_enhancement is not None:
        rows.append(("singles enhancement", res.report.singles_enhancement))
    for k, e in enumerate(res.spot_enhancements):
        rows.append((f"spot {k} enhancement", e))
    _print_table(rows)
    print(f"wall time {res.run.wall_time:.1f} s, {res.run.evaluations} evaluations", file=sys.stderr)
    _finish(cfg, "optimize", out, outputs, summary=summary)
    return 0


def cmd_schmidt(args) -> int:
    cfg = _load(args)
    if args.samples:
        cfg = cfg.replace(ensembles={"schmidt_samples": args.samples})
    setup = Setup(cfg)
    out = _out_dir(args, cfg, "schmidt")
    res = run_schmidt(setup)
    outputs: dict = {}
    summary = res.summary()
    outputs["report"] = write_json(summary, out / "report.json")
    lines = ["configuration,singles,coincidence"]
    for i, (s, c) in enumerate(zip(res.singles_samples, res.coincidence_samples)):
        lines.append(f"{i},{float(s)!r},{float(c)!r}")
    (out / "samples.csv").write_text("\n".join(lines) + "\n")
    outputs["samples"] = out / "samples.csv"
    if not args.no_figures:
        from .plotting import histogram_figure
        outputs["figure_hist"] = histogram_figure(
            {"singles": res.singles_samples, "coincidence": res.coincidence_samples},
            out / "histogram.png")
    _print_table([("configurations", res.n_configurations),
                  ("singles contrast", res.singles_contrast),
                  ("coincidence contrast", res.coincidence_contrast),
                  ("modes in singles", res.singles_modes),
                  ("modes in coincidences", res.coincidence_modes),
                  ("Schmidt estimate", res.schmidt_estimate),
                  ("uncorrected 1/C^2 ratio", res.plain_estimate),
                  ("simulated K", res.true_schmidt_number)])
    _finish(cfg, "schmidt", out, outputs, summary=summary)
    return 0


def _print_table(rows):
    width = max(len(k) for k, _ in rows)
    for key, val in rows:
        text = f"{val:.4g}" if isinstance(val, float) else str(val)
        print(f"  {key:<{width}}  {text}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fiberpiano", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="write the default configuration")
    p.add_argument("path", nargs="?", default="fiberpiano.json")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_init)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file or run manifest")
    common.add_argument("--seed", type=int, help="override the root seed")
    common.add_argument("--workers", type=int, help="threads for non-vectorised evaluation")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./runs)")
    common.add_argument("--no-figures", action="store_true", help="skip matplotlib figures")
    common.add_argument("--no-pgm", action="store_true", help="skip graymap previews")

    p = sub.add_parser("speckle", parents=[common], help="maps and contrast before optimization")
    p.set_defaults(func=cmd_speckle)

    p = sub.add_parser("optimize", parents=[common], help="PSO feedback run with report")
    p.add_argument("--variant", choices=["single_spot", "two_spot", "smf_coupling", "singles_feedback"])
    p.add_argument("--configuration", choices=["heralded", "two_photon"])
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("schmidt", parents=[common], help="contrast-ratio Schmidt number estimate")
    p.add_argument("--samples", type=int, help="number of random configurations")
    p.set_defaults(func=cmd_schmidt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fiberpiano: invalid config: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"fiberpiano: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
