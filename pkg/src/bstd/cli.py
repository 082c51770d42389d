"""Command-line interface.

    bstd decompose <in>... [options]    soft tissue / bone split
    bstd mask <in> --out <file>         automatic mask only
    bstd bench <in>... | --synthetic WxH [--repeats N]

Exit codes: 0 success, 1 usage error, 2 unreadable or unsupported input,
3 mask dimension mismatch, 4 output could not be written. Solver
non-convergence is not an error: outputs are written and the report says
``"converged": false``.
"""

import argparse
import json
import logging
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from bstd.decompose import DecomposeOptions, run
from bstd.io import (
    ImageFormatError,
    MaskShapeError,
    Report,
    read_grayscale,
    write_grayscale,
    write_mask,
    write_report,
)
from bstd.laplace import SolverOptions
from bstd.masks import MaskParams, auto_mask

log = logging.getLogger("bstd")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_MASK = 3
EXIT_OUTPUT = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threshold(text):
    if text == "otsu":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'otsu' or a number in [0, 1], got {text!r}")
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold {value} is outside [0, 1]")
    return value


def _size(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")
    if w < 2 or h < 2:
        raise argparse.ArgumentTypeError("synthetic images need at least 2x2 pixels")
    return w, h


def _add_mask_flags(p):
    p.add_argument("--threshold", type=_threshold, default="otsu", help="otsu or a value in [0, 1]")
    p.add_argument("--close", type=int, default=3, metavar="N", help="closing radius (pixels)")
    p.add_argument("--dilate", type=int, default=5, metavar="N", help="dilation radius (pixels)")
    p.add_argument("--min-area", type=int, default=64, metavar="N",
                   help="drop thresholded components smaller than N pixels")
    p.add_argument("--no-fill-holes", action="store_true")


def _add_solver_flags(p):
    p.add_argument("--tol", type=float, default=1e-6, help="max Laplacian residual")
    p.add_argument("--max-vcycles", type=int, default=50, metavar="N")


def build_parser():
    parser = _Parser(prog="bstd", description="Bone and soft tissue decomposition of X-ray images.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decompose", help="split images into soft tissue and bone")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--mask", default="auto", help="'auto' or a mask image (pixel > 0.5 is inside)")
    _add_mask_flags(p)
    _add_solver_flags(p)
    p.add_argument("--depth", type=int, choices=(8, 16), default=16)
    p.add_argument("--out-dir", type=Path, default=None, help="default: next to each input")
    p.add_argument("--report", type=Path, default=None,
                   help="report path (single input only); default <out-dir>/<stem>_report.json")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("mask", help="write the automatic mask")
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, required=True)
    _add_mask_flags(p)
    p.add_argument("--depth", type=int, choices=(8, 16), default=8)

    p = sub.add_parser("bench", help="time the pipeline")
    p.add_argument("inputs", nargs="*", type=Path)
    p.add_argument("--synthetic", type=_size, action="append", default=[], metavar="WxH")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    _add_solver_flags(p)
    p.add_argument("--json", type=Path, default=None, help="also write the results here")
    return parser


def mask_params(args) -> MaskParams:
    return MaskParams(
        threshold=args.threshold,
        close_radius=args.close,
        dilate_radius=args.dilate,
        fill_holes=not args.no_fill_holes,
        min_component_area=args.min_area,
    )


def decompose_options(args) -> DecomposeOptions:
    mask = mask_params(args) if args.mask == "auto" else Path(args.mask)
    return DecomposeOptions(
        mask=mask,
        solver=SolverOptions(tol=args.tol, max_vcycles=args.max_vcycles),
        bit_depth=args.depth,
        report_path=args.report,
    )


def output_paths(input_path: Path, out_dir: Path | None, report: Path | None):
    out_dir = out_dir if out_dir is not None else input_path.parent
    ext = input_path.suffix.lower() if input_path.suffix.lower() in (".pgm", ".png") else ".png"
    stem = input_path.stem
    return (
        out_dir / f"{stem}_soft{ext}",
        out_dir / f"{stem}_bone{ext}",
        report if report is not None else out_dir / f"{stem}_report.json",
    )


def decompose_one(input_path: Path, opts: DecomposeOptions, out_dir: Path | None) -> tuple[int, str]:
    """Process one image; returns (exit code, message). Writes nothing on failure."""
    start = time.perf_counter()
    try:
        f = read_grayscale(input_path)
    except (OSError, ImageFormatError) as exc:
        return EXIT_INPUT, f"{input_path}: cannot read input: {exc}"
    try:
        result = run(f, opts)
    except MaskShapeError as exc:
        return EXIT_MASK, f"{input_path}: {exc}"
    except (OSError, ImageFormatError) as exc:
        return EXIT_INPUT, f"{input_path}: cannot read mask: {exc}"
    result.timings["total_s"] = time.perf_counter() - start

    soft_path, bone_path, report_path = output_paths(input_path, out_dir, opts.report_path)
    written = []
    try:
        soft_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        write_grayscale(result.soft_tissue, soft_path, opts.bit_depth)
        written.append(soft_path)
        write_grayscale(result.bone, bone_path, opts.bit_depth)
        written.append(bone_path)
        write_report(Report.from_result(input_path, result), report_path)
    except OSError as exc:
        for p in written:
            p.unlink(missing_ok=True)
        return EXIT_OUTPUT, f"{input_path}: cannot write outputs: {exc}"

    status = "" if result.converged else " (solver did not converge)"
    if result.degenerate:
        status += " (degenerate: no bone signal)"
    return EXIT_OK, f"{input_path}: alpha={result.alpha:.6f} total={result.timings['total_s']:.3f}s{status}"


def _decompose_job(job):
    return decompose_one(*job)


def cmd_decompose(args) -> int:
    if args.report is not None and len(args.inputs) > 1:
        raise UsageError("--report takes a single input; batch reports go to <out-dir>/<stem>_report.json")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    try:
        opts = decompose_options(args)
    except ValueError as exc:
        raise UsageError(str(exc))
    jobs = [(path, opts, args.out_dir) for path in args.inputs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_decompose_job, jobs))
    else:
        outcomes = [_decompose_job(job) for job in jobs]

    failures = []
    for (path, _, _), (code, message) in zip(jobs, outcomes):
        if code == EXIT_OK:
            print(message)
        else:
            print(message, file=sys.stderr)
            failures.append((path, code))
    if len(jobs) > 1 and failures:
        print(f"{len(failures)} of {len(jobs)} images failed:", file=sys.stderr)
        for path, code in failures:
            print(f"  {path} (exit {code})", file=sys.stderr)
    return failures[0][1] if failures else EXIT_OK


def cmd_mask(args) -> int:
    try:
        params = mask_params(args)
    except ValueError as exc:
        raise UsageError(str(exc))
    try:
        f = read_grayscale(args.input)
    except (OSError, ImageFormatError) as exc:
        print(f"{args.input}: cannot read input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    mask = auto_mask(f, params)
    try:
        write_mask(mask, args.out, args.depth)
    except (OSError, ImageFormatError) as exc:
        print(f"{args.out}: cannot write mask: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    print(f"{args.out}: {int(mask.sum())} of {mask.size} pixels inside the mask")
    return EXIT_OK


def bench_image(name, f, opts: DecomposeOptions, repeats: int) -> dict:
    run(f, opts)  # warm-up: loads the compiled kernels
    samples = []
    for _ in range(repeats):
        result = run(f, opts)
        samples.append(result.timings)
    h, w = f.shape
    medians = {k: statistics.median(s[k] for s in samples) for k in samples[0]}
    return {
        "name": name,
        "width": w,
        "height": h,
        "pixels": w * h,
        "repeats": repeats,
        "alpha": result.alpha,
        "solver_iterations": result.stats.iterations,
        "samples": samples,
        "median": medians,
        "megapixels_per_second": w * h / 1e6 / medians["total_s"],
    }


def scaling_table(entries: list[dict]) -> list[dict]:
    ordered = sorted(entries, key=lambda e: e["pixels"])
    rows = []
    for small, large in zip(ordered, ordered[1:]):
        rows.append({
            "from": small["name"],
            "to": large["name"],
            "pixel_ratio": large["pixels"] / small["pixels"],
            "time_ratio": large["median"]["total_s"] / small["median"]["total_s"],
        })
    return rows


def cmd_bench(args) -> int:
    if not args.inputs and not args.synthetic:
        raise UsageError("bench needs at least one input image or --synthetic WxH")
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    from bstd.phantoms import xray_phantom

    opts = DecomposeOptions(solver=SolverOptions(tol=args.tol, max_vcycles=args.max_vcycles))
    images = []
    for path in args.inputs:
        try:
            images.append((str(path), read_grayscale(path)))
        except (OSError, ImageFormatError) as exc:
            print(f"{path}: cannot read input: {exc}", file=sys.stderr)
            return EXIT_INPUT
    for w, h in args.synthetic:
        images.append((f"synthetic:{w}x{h}", xray_phantom(w, h, seed=args.seed).f))

    entries = [bench_image(name, f, opts, args.repeats) for name, f in images]
    out = {"images": entries, "scaling": scaling_table(entries)}
    text = json.dumps(out, indent=2)
    print(text)
    if args.json is not None:
        args.json.write_text(text + "\n")
    return EXIT_OK


COMMANDS = {"decompose": cmd_decompose, "mask": cmd_mask, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bstd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
