"""Command-line surface: init, preview, refine, export, serve.

Exit codes: 0 on success, 2 on validation errors, 1 on runtime failures.
All logic lives in the engine modules; the CLI only parses arguments, wires
files through, and reports.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import (EmptySketchError, ProjectVersionError, SvgParseError,
                     UnsupportedSvgFeatureError, ValidationError)

VALIDATION_ERRORS = (ValidationError, SvgParseError, UnsupportedSvgFeatureError,
                     EmptySketchError, ProjectVersionError)

PORT_ENV = "SKETCHANIM_PORT"
DATA_ENV = "SKETCHANIM_DATA"


def cmd_init(args) -> int:
    from .project import default_project, save_project, validate_project

    svg_text = Path(args.svg).read_text()
    payload = default_project(svg_text, frame_count=args.frames)
    validate_project(payload)
    save_project(args.output, payload)
    print(f"wrote {args.output}")
    return 0


def cmd_preview(args) -> int:
    from .motion import build_coarse_animation, merge_groups
    from .project import load_project, project_to_engine
    from .svg_io import serialize_svg

    payload = load_project(args.project)
    sketch, partition, trajectory, _, _ = project_to_engine(payload)
    seq = merge_groups(build_coarse_animation(sketch, partition, trajectory))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(1, seq.frame_count + 1):
        (out / f"frame_{k:04d}.svg").write_text(serialize_svg(seq.frame(k)))
    print(f"wrote {seq.frame_count} coarse frames to {out}")
    return 0


def cmd_refine(args) -> int:
    import dataclasses

    from .optimize import run_refinement
    from .project import load_project, project_to_engine
    from .service.jobs import build_guidance

    payload = load_project(args.project)
    sketch, partition, trajectory, model_cfg, opt_cfg = project_to_engine(payload)
    if args.steps is not None:
        opt_cfg = dataclasses.replace(opt_cfg, steps=args.steps)
    if args.seed is not None:
        opt_cfg = dataclasses.replace(opt_cfg, seed=args.seed)
    priors = args.priors.split(",") if args.priors else None
    guidance = build_guidance(priors, args.prompt, args.remote_prior)

    def progress(step: int, entry: dict) -> None:
        if step == 1 or step % 25 == 0 or step == opt_cfg.steps:
            print(f"step {step}/{opt_cfg.steps} total={entry['total']:.6g}",
                  file=sys.stderr)

    result = run_refinement(sketch, partition, trajectory, model_cfg, guidance,
                            opt_cfg, workdir=args.output, progress=progress)
    print(f"refined {result.refined.frame_count} frames; "
          f"artifacts in {args.output}")
    return 0


def cmd_export(args) -> int:
    from .optimize import export_sequence, sequence_from_json
    from .raster import EXPORT_CONFIG

    refined = Path(args.run_dir) / "refined.json"
    if not refined.exists():
        raise ValidationError(f"{args.run_dir} has no refined.json; "
                              "run refine first")
    seq = sequence_from_json(refined.read_text())
    formats = tuple(args.format.split(","))
    out = Path(args.output) if args.output else Path(args.run_dir) / "export"
    files = export_sequence(seq, out, formats=formats, raster_cfg=EXPORT_CONFIG,
                            fps=args.fps)
    print(f"wrote {len(files)} files and manifest.json to {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchanim",
        description="multi-object vector sketch animation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a project from an SVG sketch")
    p.add_argument("svg")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--frames", type=int, default=24)
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("preview", help="write coarse animation frames")
    p.add_argument("project")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_preview)

    p = sub.add_parser("refine", help="run displacement refinement")
    p.add_argument("project")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--priors", default=None,
                   help="comma list from traj,shape,smooth")
    p.add_argument("--remote-prior", default=None, metavar="URL")
    p.add_argument("--prompt", default="")
    p.set_defaults(fn=cmd_refine)

    p = sub.add_parser("export", help="export a refinement run to SVG/PNG")
    p.add_argument("run_dir")
    p.add_argument("--format", default="svg,png")
    p.add_argument("--fps", type=int, default=8)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int,
                   default=int(os.environ.get(PORT_ENV, "8600")))
    p.add_argument("--data", default=os.environ.get(DATA_ENV, "sketchanim-data"))
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
