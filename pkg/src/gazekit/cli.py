"""Command-line front end.

Subcommands cover the pipeline end to end: ``hha`` encodes depth rasters,
``build`` turns annotations into conversation records, ``predict`` runs a
baseline predictor, ``parse`` converts raw response text to structured
predictions, ``evaluate`` scores a prediction file.

Configuration comes from an optional YAML file (``--config`` or the
GAZEKIT_CONFIG environment variable) with sections named hha, prompt,
assign, metrics, predictor; command-line flags override file values.
Logs go to stderr; data goes to files or stdout.  Exit codes: 0 success,
1 usage or configuration error, 2 partial data failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import __version__
from .assign import AssignConfig, assign_gazed_object
from .codec import PromptConfig, build_record, parse_response
from .core import Task
from .errors import FormatError, GazekitError, InvalidInputError
from .hha import HhaConfig, encode_hha
from .ingest import (
    load_annotations,
    load_depth_pfm,
    load_depth_png16,
    load_detections,
    prediction_to_json,
    read_predictions,
    write_hha_png,
    write_predictions,
    write_records,
)
from .metrics import MetricConfig, evaluate, format_report_csv, format_report_table
from .predictors import PredictorSpec, run_predictor

log = logging.getLogger("gazekit")

_SECTIONS = {
    "hha": HhaConfig,
    "prompt": PromptConfig,
    "assign": AssignConfig,
    "metrics": MetricConfig,
}


@dataclass
class CliConfig:
    """Effective configuration for one invocation."""

    hha: HhaConfig = field(default_factory=HhaConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    assign: AssignConfig = field(default_factory=AssignConfig)
    metrics: MetricConfig = field(default_factory=MetricConfig)
    predictor_defaults: dict = field(default_factory=dict)


def load_config(path: Optional[str]) -> CliConfig:
    """Read the YAML config file; absent path means all defaults."""
    if not path:
        return CliConfig()
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise InvalidInputError(f"invalid config file {path}: {exc}") from None
    if raw is None:
        return CliConfig()
    if not isinstance(raw, dict):
        raise InvalidInputError(f"config file {path} must be a mapping of sections")
    cfg = CliConfig()
    for section, value in raw.items():
        if section == "predictor":
            if not isinstance(value, dict):
                raise InvalidInputError("predictor section must be a mapping")
            cfg.predictor_defaults = dict(value)
            continue
        cls = _SECTIONS.get(section)
        if cls is None:
            raise InvalidInputError(f"unknown config section {section!r}")
        setattr(cfg, section, _section_to_dataclass(cls, value, section))
    return cfg


def _section_to_dataclass(cls, value, section: str):
    if not isinstance(value, dict):
        raise InvalidInputError(f"config section {section!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(value) - known
    if unknown:
        raise InvalidInputError(f"unknown keys in config section {section!r}: {sorted(unknown)}")
    return cls(**value)


def effective_config_json(cfg: CliConfig) -> dict:
    prompt = dataclasses.asdict(cfg.prompt)
    prompt["task_prompt_templates"] = {
        task.value: text for task, text in cfg.prompt.task_prompt_templates.items()
    }
    assign = dataclasses.asdict(cfg.assign)
    assign["tie_break"] = cfg.assign.tie_break.value
    return {
        "hha": dataclasses.asdict(cfg.hha),
        "prompt": prompt,
        "assign": assign,
        "metrics": dataclasses.asdict(cfg.metrics),
        "predictor": dict(cfg.predictor_defaults),
    }


def _write_meta(target: Path, command: str, cfg: CliConfig, inputs: Sequence[str]) -> None:
    """Provenance sidecar: effective config and tool version, no clock."""
    meta = {
        "tool": "gazekit",
        "version": __version__,
        "command": command,
        "inputs": [str(p) for p in inputs],
        "config": effective_config_json(cfg),
    }
    meta_path = target / "encode.meta.json" if target.is_dir() else Path(f"{target}.meta.json")
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands


def _depth_inputs(root: Path, fmt: str) -> list[Path]:
    if root.is_file():
        return [root]
    if not root.is_dir():
        raise InvalidInputError(f"depth input {root} is neither a file nor a directory")
    exts = {"png16": (".png",), "pfm": (".pfm",), "auto": (".png", ".pfm")}[fmt]
    return sorted(p for p in root.iterdir() if p.suffix.lower() in exts)


def _load_depth(path: Path, fmt: str, scale: float):
    suffix = path.suffix.lower()
    if fmt == "pfm" or (fmt == "auto" and suffix == ".pfm"):
        return load_depth_pfm(path)
    return load_depth_png16(path, scale)


def cmd_hha(args: argparse.Namespace, cfg: CliConfig) -> int:
    if args.scale <= 0:
        raise InvalidInputError(f"--scale must be positive, got {args.scale}")
    inputs = _depth_inputs(Path(args.depth), args.format)
    if not inputs:
        raise InvalidInputError(f"no depth files found under {args.depth}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ok = failed = 0
    for path in inputs:
        try:
            depth = _load_depth(path, args.format, args.scale)
            hha = encode_hha(depth, cfg.hha)
            write_hha_png(hha, out_dir / f"{path.stem}.hha.png")
            ok += 1
        except (GazekitError, OSError) as exc:
            # FormatError and OSError already name the file
            if isinstance(exc, (FormatError, OSError)):
                log.error("%s", exc)
            else:
                log.error("%s: %s", path, exc)
            failed += 1
    _write_meta(out_dir, "hha", cfg, [str(args.depth)])
    log.info("%d ok, %d failed", ok, failed)
    return 0 if failed == 0 else 2


def _parse_tasks(text: str) -> list[Task]:
    tasks = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            tasks.append(Task(part))
        except ValueError:
            choices = ", ".join(t.value for t in Task)
            raise InvalidInputError(f"unknown task {part!r}; choose from {choices}") from None
    if not tasks:
        raise InvalidInputError("--tasks must name at least one task")
    return tasks


def cmd_build(args: argparse.Namespace, cfg: CliConfig) -> int:
    tasks = _parse_tasks(args.tasks)
    manifest = load_annotations(args.annotations)
    for err in manifest.errors:
        log.warning("annotations %s", err)
    dets = None
    if args.detections:
        dets = load_detections(args.detections, manifest)
        for err in dets.errors:
            log.warning("detections %s", err)

    records = []
    skipped = 0
    for sample in manifest.samples:
        for task in tasks:
            ready = sample
            if task is Task.GAZE_OBJECT and sample.gazed_object is None and sample.in_frame:
                assigned = None
                if dets is not None:
                    assigned = assign_gazed_object(
                        sample.gaze_centroid(),
                        sample.image_size,
                        dets.for_sample(sample.sample_id),
                        cfg.assign,
                    )
                if assigned is None:
                    log.warning(
                        "%s: no gazed object and no overlapping detection, record skipped",
                        sample.sample_id,
                    )
                    skipped += 1
                    continue
                ready = dataclasses.replace(sample, gazed_object=assigned)
            try:
                records.append(build_record(ready, task, cfg.prompt))
            except InvalidInputError as exc:
                log.warning("%s: %s", sample.sample_id, exc)
                skipped += 1

    write_records(records, args.out)
    _write_meta(Path(args.out), "build", cfg, [args.annotations] + ([args.detections] if args.detections else []))
    log.info("%d records written, %d skipped", len(records), skipped)
    bad_input = bool(manifest.errors or (dets is not None and dets.errors))
    return 2 if bad_input else 0


def cmd_predict(args: argparse.Namespace, cfg: CliConfig) -> int:
    merged = dict(cfg.predictor_defaults)
    if args.kind is not None:
        merged["kind"] = args.kind
    if args.seed is not None:
        merged["seed"] = args.seed
    if args.noise is not None:
        merged["oracle_noise_sigma"] = args.noise
    if args.bias_grid is not None:
        merged["bias_grid"] = args.bias_grid
    if "kind" not in merged:
        raise InvalidInputError("predictor kind required: pass --kind or set predictor.kind in config")
    sigma = float(merged.get("oracle_noise_sigma", 0.0))
    needs_seed = merged["kind"] == "random" or (merged["kind"] == "oracle" and sigma > 0)
    if needs_seed and "seed" not in merged:
        raise InvalidInputError(f"--seed is required for kind {merged['kind']!r}")
    spec = PredictorSpec(
        kind=merged["kind"],
        seed=int(merged.get("seed", 0)),
        oracle_noise_sigma=sigma,
        bias_grid=int(merged.get("bias_grid", 8)),
    )

    manifest = load_annotations(args.annotations)
    for err in manifest.errors:
        log.warning("annotations %s", err)
    train = None
    if args.train:
        train = load_annotations(args.train)
        for err in train.errors:
            log.warning("train annotations %s", err)
    preds = run_predictor(manifest, spec, cfg.prompt, train)
    write_predictions(preds, args.out)
    _write_meta(Path(args.out), "predict", cfg, [args.annotations] + ([args.train] if args.train else []))
    log.info("%d predictions written (%s)", len(preds), spec.kind.value)
    return 2 if manifest.errors else 0


def cmd_parse(args: argparse.Namespace, cfg: CliConfig) -> int:
    n_err = 0
    lines_out = []
    with open(args.responses, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                sample_id = str(obj["sample_id"])
                task = Task(obj.get("task", Task.GAZE_TARGET.value))
                text = str(obj["text"])
            except (KeyError, TypeError, ValueError) as exc:
                log.warning("responses line %d: %s", line_no, exc)
                lines_out.append({"line": line_no, "error": f"{type(exc).__name__}: {exc}"})
                n_err += 1
                continue
            try:
                pred = parse_response(text, cfg.prompt, sample_id=sample_id, task=task)
                lines_out.append(prediction_to_json(pred))
            except GazekitError as exc:
                record = {"sample_id": sample_id, "error": str(exc)}
                offset = getattr(exc, "offset", None)
                if offset is not None:
                    record["offset"] = offset
                lines_out.append(record)
                n_err += 1

    with open(args.out, "w", encoding="utf-8") as f:
        for obj in lines_out:
            f.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n")
    _write_meta(Path(args.out), "parse", cfg, [args.responses])
    log.info("%d lines, %d errors", len(lines_out), n_err)
    return 2 if n_err else 0


def cmd_evaluate(args: argparse.Namespace, cfg: CliConfig) -> int:
    manifest = load_annotations(args.annotations)
    for err in manifest.errors:
        log.warning("annotations %s", err)
    preds, errors = read_predictions(args.predictions)
    for err in errors:
        log.warning("predictions %s", err)
    report = evaluate(preds, manifest, cfg.metrics)
    for message in report.errors:
        log.warning("%s", message)

    dataset = args.dataset or manifest.name
    predictor = args.predictor or "predictions"
    if args.report == "json":
        rendered = json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
    elif args.report == "csv":
        rendered = format_report_csv([(dataset, predictor, report)])
    else:
        rendered = format_report_table(report, label=predictor) + "\n"

    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
        _write_meta(Path(args.out), "evaluate", cfg, [args.predictions, args.annotations])
    else:
        sys.stdout.write(rendered)
    return 2 if errors or manifest.errors else 0


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gazekit", description="Gaze understanding pipeline tools.")
    parser.add_argument("--version", action="version", version=f"gazekit {__version__}")
    parser.add_argument(
        "--config",
        default=None,
        help="YAML config file (default: $GAZEKIT_CONFIG when set)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hha", help="encode depth rasters to HHA PNGs")
    p.add_argument("--depth", required=True, help="depth file or directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scale", type=float, default=1.0, help="depth units per PNG count")
    p.add_argument("--format", choices=("auto", "png16", "pfm"), default="auto")
    p.set_defaults(func=cmd_hha)

    p = sub.add_parser("build", help="build conversation records from annotations")
    p.add_argument("--annotations", required=True, help="annotation JSONL file")
    p.add_argument("--detections", default=None, help="detection JSON file")
    p.add_argument("--tasks", required=True, help="comma-separated task names")
    p.add_argument("--out", required=True, help="output record JSONL file")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("predict", help="run a baseline predictor")
    p.add_argument("--annotations", required=True, help="annotation JSONL file")
    p.add_argument("--kind", choices=("random", "center", "fixed_bias", "oracle"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--noise", type=float, default=None, help="oracle noise sigma")
    p.add_argument("--bias-grid", type=int, default=None, help="fixed-bias grid size")
    p.add_argument("--train", default=None, help="training annotations for fixed_bias")
    p.add_argument("--out", required=True, help="output prediction JSONL file")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("parse", help="parse raw response text into predictions")
    p.add_argument("--responses", required=True, help="JSONL of {sample_id, text}")
    p.add_argument("--out", required=True, help="output prediction JSONL file")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("evaluate", help="score predictions against annotations")
    p.add_argument("--predictions", required=True, help="prediction JSONL file")
    p.add_argument("--annotations", required=True, help="annotation JSONL file")
    p.add_argument("--report", choices=("table", "json", "csv"), default="table")
    p.add_argument("--dataset", default=None, help="dataset label for reports")
    p.add_argument("--predictor", default=None, help="predictor label for reports")
    p.add_argument("--out", default=None, help="write the report here instead of stdout")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config or os.environ.get("GAZEKIT_CONFIG"))
        return args.func(args, cfg)
    except GazekitError as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
