"""Command-line entry point: ``defocuskit <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 I/O error. Errors are
reported as one line on stderr: ``error kind=<usage|data|io> msg=<text>``.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    SceneManifest,
    generate_scene,
    load_defocus,
    load_depth,
    load_raster,
    save_defocus,
    save_depth,
    save_raster,
    validate_scene,
)
from .errors import DataError, DomainError, FormatError
from .maps import DefocusMap
from .metrics import CSV_HEADER, defocus_metrics, depth_metrics
from .optics import FocusSetting, LensConfig, defocus_map_from_depth
from .render import RenderOptions, render_focused, render_stack
from .stack import FocusStack, compose_all_in_focus, detect_invalid, refine_depth

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 2, 3, 4
STACK_INDEX = "stack.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _one_line(msg) -> str:
    return " ".join(str(msg).split())


def _add_lens(p):
    g = p.add_argument_group("lens")
    g.add_argument("--focal-mm", type=float, default=50.0)
    g.add_argument("--f-number", type=float, default=1.4)
    g.add_argument("--coc-scale", type=float, default=None, help="combined CoC scale A (default 800)")
    g.add_argument("--pixel-mm", type=float, default=None)
    g.add_argument("--output-scale", type=float, default=None)


def _add_render(p):
    g = p.add_argument_group("render")
    g.add_argument("--truncation-sigmas", type=float, default=3.0)
    g.add_argument("--max-kernel-radius", type=int, default=64)
    g.add_argument("--min-sigma", type=float, default=0.25)
    g.add_argument("--coc-to-sigma", type=float, default=1.0)


def _add_common(p):
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="recorded for reproducibility; no command draws random numbers")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--depth-unit", type=float, default=1.0, help="mm per stored unit for 16-bit PNG depth")


def _lens(args) -> LensConfig:
    split = args.pixel_mm is not None or args.output_scale is not None
    if split and args.coc_scale is not None:
        raise UsageError("--coc-scale is mutually exclusive with --pixel-mm/--output-scale")
    if split:
        if args.pixel_mm is None or args.output_scale is None:
            raise UsageError("--pixel-mm and --output-scale must be given together")
        return LensConfig(args.focal_mm, args.f_number, pixel_size_mm=args.pixel_mm, output_scale=args.output_scale)
    return LensConfig(args.focal_mm, args.f_number, coc_scale=800.0 if args.coc_scale is None else args.coc_scale)


def _opts(args) -> RenderOptions:
    return RenderOptions(args.truncation_sigmas, args.max_kernel_radius, args.min_sigma, args.coc_to_sigma)


def _focus_list(args):
    if args.focus_count < 1:
        raise UsageError("--focus-count must be >= 1")
    if args.focus_count == 1:
        return [args.focus_min]
    if not args.focus_max > args.focus_min:
        raise UsageError("--focus-max must exceed --focus-min")
    return np.linspace(args.focus_min, args.focus_max, args.focus_count).tolist()


def _mkparent(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def cmd_render(args):
    lens = _lens(args)
    img = load_raster(args.aif)
    depth = load_depth(args.depth, args.depth_unit)
    out = render_focused(img, depth, FocusSetting(args.focus_mm), lens, _opts(args), args.threads)
    _mkparent(args.out)
    save_raster(out, args.out)


def cmd_stack(args):
    lens = _lens(args)
    img = load_raster(args.aif)
    depth = load_depth(args.depth, args.depth_unit)
    fds = _focus_list(args)
    stack = render_stack(img, depth, fds, lens, _opts(args), args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for t, member in enumerate(stack.members):
        name = f"{t:03d}_img.{args.format}"
        save_raster(member, out / name)
        names.append(name)
    index = {"schema_version": 1, "focus_depths_mm": stack.focus_depths_mm, "members": names}
    (out / STACK_INDEX).write_text(json.dumps(index, indent=2) + "\n")


def load_stack_dir(path) -> FocusStack:
    path = Path(path)
    try:
        index = json.loads((path / STACK_INDEX).read_text())
        names, fds = index["members"], index["focus_depths_mm"]
    except json.JSONDecodeError as e:
        raise FormatError(f"{path / STACK_INDEX}: {e}") from None
    except KeyError as e:
        raise FormatError(f"{path / STACK_INDEX}: missing field {e}") from None
    return FocusStack([load_raster(path / n) for n in names], fds)


def cmd_compose(args):
    stack = load_stack_dir(args.stack)
    image, depth = compose_all_in_focus(stack, args.window)
    _mkparent(args.out_aif)
    _mkparent(args.out_depth)
    save_raster(image, args.out_aif)
    save_depth(depth, args.out_depth, args.depth_unit)


def cmd_refine(args):
    primary = load_depth(args.depth, args.depth_unit)
    fill = load_depth(args.fill, args.depth_unit)
    if args.mask:
        mask = load_raster(args.mask)[:, :, 0] > 0.5
    else:
        mask = detect_invalid(primary)
    refined = refine_depth(primary, mask, fill)
    _mkparent(args.out)
    save_depth(refined, args.out, args.depth_unit)


def cmd_defocus(args):
    lens = _lens(args)
    depth = load_depth(args.depth, args.depth_unit)
    _mkparent(args.out)
    save_defocus(defocus_map_from_depth(depth, FocusSetting(args.focus_mm), lens), args.out)


def cmd_eval(args):
    if args.kind == "depth":
        pred, gt = load_depth(args.pred, args.depth_unit), load_depth(args.gt, args.depth_unit)
        if args.normalize:
            raise UsageError("--normalize applies to defocus evaluation only")
        report = depth_metrics(pred, gt)
    else:
        pred, gt = load_defocus(args.pred), load_defocus(args.gt)
        report = defocus_metrics(pred, gt, normalize=args.normalize)
    lines = []
    if args.header:
        lines.append(",".join(CSV_HEADER))
    lines.append(report.to_csv_row())
    text = "\n".join(lines) + "\n"
    if args.out:
        _mkparent(args.out)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.record:
        _mkparent(args.record)
        Path(args.record).write_text(report.to_record())


def cmd_gen_scene(args):
    lens = _lens(args)
    img = load_raster(args.aif)
    depth = load_depth(args.depth, args.depth_unit)
    generate_scene(
        img, depth, lens, _focus_list(args), args.out, _opts(args), args.threads,
        scene_id=args.scene_id, aif_format=args.aif_format, progress=args.verbose,
    )
    findings = validate_scene(SceneManifest.load(args.out))
    if findings:
        raise DataError(f"scene failed validation: {findings[0]} ({len(findings)} findings)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="defocuskit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def focus_range(q, default_count):
        q.add_argument("--focus-min", type=float, required=True)
        q.add_argument("--focus-max", type=float, required=True)
        q.add_argument("--focus-count", type=int, default=default_count)

    q = sub.add_parser("render", help="render one focused image")
    q.add_argument("--aif", required=True)
    q.add_argument("--depth", required=True)
    q.add_argument("--focus-mm", type=float, required=True)
    q.add_argument("--out", required=True)
    _add_lens(q), _add_render(q), _add_common(q)
    q.set_defaults(func=cmd_render)

    q = sub.add_parser("stack", help="render a focus stack into a directory")
    q.add_argument("--aif", required=True)
    q.add_argument("--depth", required=True)
    focus_range(q, 200)
    q.add_argument("--format", choices=("png", "pfm"), default="png")
    q.add_argument("--out", required=True)
    _add_lens(q), _add_render(q), _add_common(q)
    q.set_defaults(func=cmd_stack)

    q = sub.add_parser("compose", help="all-in-focus image and depth from a stack directory")
    q.add_argument("--stack", required=True)
    q.add_argument("--window", type=int, default=9)
    q.add_argument("--out-aif", required=True)
    q.add_argument("--out-depth", required=True)
    _add_common(q)
    q.set_defaults(func=cmd_compose)

    q = sub.add_parser("refine", help="fill invalid depth pixels from a second depth map")
    q.add_argument("--depth", required=True)
    q.add_argument("--fill", required=True)
    q.add_argument("--mask", default=None, help="image whose nonzero pixels are filled (default: auto)")
    q.add_argument("--out", required=True)
    _add_common(q)
    q.set_defaults(func=cmd_refine)

    q = sub.add_parser("defocus", help="ground-truth defocus map from depth")
    q.add_argument("--depth", required=True)
    q.add_argument("--focus-mm", type=float, required=True)
    q.add_argument("--out", required=True)
    _add_lens(q), _add_common(q)
    q.set_defaults(func=cmd_defocus)

    q = sub.add_parser("eval", help="evaluation metrics as a CSV row")
    q.add_argument("--pred", required=True)
    q.add_argument("--gt", required=True)
    q.add_argument("--kind", choices=("depth", "defocus"), default="depth")
    q.add_argument("--normalize", action="store_true")
    q.add_argument("--header", action="store_true")
    q.add_argument("--out", default=None)
    q.add_argument("--record", default=None, help="also write a key=value record here")
    _add_common(q)
    q.set_defaults(func=cmd_eval)

    q = sub.add_parser("gen-scene", help="generate and validate a synthetic scene")
    q.add_argument("--aif", required=True)
    q.add_argument("--depth", required=True)
    focus_range(q, 200)
    q.add_argument("--out", required=True)
    q.add_argument("--scene-id", default=None)
    q.add_argument("--aif-format", choices=("png", "pfm"), default="png")
    _add_lens(q), _add_render(q), _add_common(q)
    q.set_defaults(func=cmd_gen_scene)
    return p


def _fail(kind, code, msg) -> int:
    print(f"error kind={kind} msg={_one_line(msg)}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing command")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        if args.verbose:
            settings = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
            print("settings " + json.dumps(settings, sort_keys=True), file=sys.stderr)
        args.func(args)
    except UsageError as e:
        return _fail("usage", EXIT_USAGE, e)
    except FormatError as e:
        return _fail("io", EXIT_IO, e)
    except (DataError, DomainError, ValueError) as e:
        return _fail("data", EXIT_DATA, e)
    except OSError as e:
        return _fail("io", EXIT_IO, e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
