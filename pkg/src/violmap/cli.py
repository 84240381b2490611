"""Command-line entry point: ``violmap <subcommand> [--config PATH] ...``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .synth import SynthSpec, generate_synthetic

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_STAGE = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="violmap", description="Mine traffic violation-prone locations from GPS data.")
    p.add_argument("command", choices=["synth", "run", *pl.STAGES])
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--stage", choices=pl.STAGES, help="with 'run': start from this stage using persisted outputs")
    p.add_argument("--hour", type=int, help="export only locations prone at this hour (0..23)")
    p.add_argument("--seed", type=int, help="random seed for 'synth'")
    p.add_argument("--workers", type=int, help="worker processes for map matching")
    p.add_argument("--out", help="output directory (overrides out_dir; target directory for 'synth')")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _synth(args, text: str) -> int:
    kwargs: dict = {}
    types = {f.name: f.type for f in dataclasses.fields(SynthSpec)}
    for key, value in pl.synth_overrides(text).items():
        if key not in types:
            raise pl.ConfigError(f"unknown synth key {key!r}")
        typ = types[key]
        try:
            kwargs[key] = int(value) if typ == "int" else float(value) if typ == "float" else None
        except ValueError as exc:
            raise pl.ConfigError(f"bad value for synth.{key}: {value!r}") from exc
        if kwargs[key] is None:
            raise pl.ConfigError(f"synth.{key} cannot be set from a config file")
    if args.seed is not None:
        kwargs["seed"] = args.seed
    try:
        spec = SynthSpec(**kwargs)
    except ValueError as exc:
        raise pl.ConfigError(str(exc)) from exc
    out = Path(args.out or "synth")
    paths = generate_synthetic(spec, out)
    cfg = pl.PipelineConfig(network=paths["network"].name, trajectories=paths["trajectories"].name,
                            signs=paths["signs"].name, limits=paths["limits"].name, out_dir="out")
    pl.write_config(cfg, out / "pipeline.conf")
    print(f"synthetic city written to {out}/ (config: {out / 'pipeline.conf'})")
    return EXIT_OK


def _read_config(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise pl.ConfigError(f"cannot read config {path}: {exc}") from exc


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = _read_config(args.config) if args.config else ""
        if args.command == "synth":
            return _synth(args, text)
        overrides = {"workers": args.workers, "out_dir": args.out}
        cfg = (pl.load_config(args.config, **overrides) if args.config
               else pl.PipelineConfig(**{k: v for k, v in overrides.items() if v is not None}))
        if args.hour is not None and not 0 <= args.hour <= 23:
            raise pl.ConfigError("--hour must be in 0..23")
        if args.command == "run":
            start = pl.STAGES.index(args.stage) if args.stage else 0
            stages = pl.STAGES[start:]
        else:
            stages = (args.command,)
        report = pl.run(cfg, stages, hour=args.hour)
        for name, counts in report.stages.items():
            shown = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                              for k, v in counts.items() if not isinstance(v, dict))
            print(f"{name}: {shown}")
        return EXIT_OK
    except pl.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (pl.InputError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except pl.StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
