from __future__ import annotations

import sys
import time
from collections import Counter
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from flowtrack.cascade import (
    CascadeFormatError,
    CascadeModel,
    UnsupportedFeatureError,
    load_cascade,
    serialize_native,
    serialize_standard_xml,
)
from flowtrack.cli import Progress
from flowtrack.detector import ScanConfig, classic_detect, scan
from flowtrack.flow import write_flo
from flowtrack.formats import (
    DEFAULT_PATTERNS,
    FrameReadError,
    annotate,
    list_frames,
    load_frame,
    read_detections,
    read_ground_truth,
    read_timings,
    write_detections,
    write_per_frame,
    write_report,
    write_report_json,
    write_timings,
)
from flowtrack.imgcore import Frame
from flowtrack.likelihood import FaceBox, build_refresh_map, extract_faces, write_map_pgm
from flowtrack.logging import LogLevel, get_logger
from flowtrack.metrics import (
    GT_OFFSET_Y,
    MATCH_PX,
    FaceCenter,
    FrameCountError,
    MetricsReport,
    evaluate,
    summarize,
)
from flowtrack.pretty import pformat
from flowtrack.tracker import FrameResult, SessionError, Timings, Tracker, TrackerConfig, TrackerState

EXIT_INPUT = 2
EXIT_FRAME = 3
EXIT_FRAME_COUNT = 4
EXIT_FEATURE = 5

logger = get_logger()


class NoFramesError(FileNotFoundError):
    pass


@dataclass
class RunConfig:
    """Everything one track, classic or bench run needs."""

    frames: Path
    cascade: Path
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    patterns: tuple[str, ...] = DEFAULT_PATTERNS
    out: Path = Path("detections.txt")
    timings: Path | None = None
    annotate_dir: Path | None = None
    dump_maps: Path | None = None
    dump_flow: Path | None = None

    def frame_paths(self) -> list[Path]:
        if not self.frames.is_dir():
            raise NoFramesError(f"Frame directory not found: {self.frames}")
        paths = list_frames(self.frames, self.patterns)
        if len(paths) == 0:
            raise NoFramesError(f"No frames matching {', '.join(self.patterns)} in {self.frames}")
        return paths

    @property
    def timings_path(self) -> Path:
        return self.timings if self.timings is not None else self.out.with_suffix(".timings")


def _fail_(code: int, message: str):
    logger.error(message)
    sys.exit(code)


@contextmanager
def _exit_codes_():
    """Turn the library's errors into the cli's exit codes."""
    try:
        yield
    except UnsupportedFeatureError as error:
        _fail_(EXIT_FEATURE, str(error))
    except FrameCountError as error:
        _fail_(EXIT_FRAME_COUNT, str(error))
    except (FrameReadError, SessionError) as error:
        _fail_(EXIT_FRAME, str(error))
    except CascadeFormatError as error:
        _fail_(EXIT_INPUT, f"Invalid cascade: {error}")
    except (FileNotFoundError, ValueError) as error:
        _fail_(EXIT_INPUT, str(error))


def _frames_(paths: list[Path]) -> Iterator[tuple[Path, Frame]]:
    for path in paths:
        yield path, load_frame(path)


def _load_model_(path: Path) -> CascadeModel:
    if not path.is_file():
        raise FileNotFoundError(f"Cascade not found: {path}")
    model = load_cascade(path)
    logger.info(f"Loaded {path.name}: {model.num_stages} stages, {model.base_width}x{model.base_height} base window")
    return model


def _fmt_shrink_(shrink: float) -> str:
    fraction = Fraction(shrink).limit_denominator(100)
    if fraction.denominator != 1 and abs(float(fraction) - shrink) < 1e-9:
        return str(fraction)
    return f"{shrink:g}"


def _scan_header_(cfg: ScanConfig) -> str:
    header = f"scale_factor={cfg.scale_factor:g} step={cfg.step_fraction:g}"
    if cfg.min_window is not None:
        header += f" min_window={cfg.min_window}"
    if cfg.max_window is not None:
        header += f" max_window={cfg.max_window}"
    return header


def _tracker_header_(cfg: TrackerConfig) -> str:
    return f"n={cfg.n} α={cfg.alpha:g} τ={cfg.tau} s={_fmt_shrink_(cfg.shrink)} c={cfg.c:g}"


def _input_options_(func: Callable) -> Callable:
    func = click.option("--cascade", type=click.Path(path_type=Path), required=True, help="Cascade file, xml or native.")(func)
    func = click.option("--frames", type=click.Path(path_type=Path), required=True, help="Directory of frame images.")(func)
    func = click.option(
        "--pattern",
        "patterns",
        multiple=True,
        default=DEFAULT_PATTERNS,
        show_default=True,
        help="Frame filename glob, can be repeated.",
    )(func)
    return func


def _output_options_(func: Callable) -> Callable:
    func = click.option("--out", type=click.Path(path_type=Path), default=Path("detections.txt"), show_default=True)(func)
    func = click.option("--timings", type=click.Path(path_type=Path), default=None, help="Defaults to OUT with a .timings suffix.")(func)
    func = click.option("--annotate-dir", type=click.Path(path_type=Path), default=None, help="Write annotated PNG frames here.")(func)
    return func


def _scan_options_(func: Callable) -> Callable:
    func = click.option("--scale-factor", type=float, default=1.1, show_default=True)(func)
    func = click.option("--step", type=float, default=0.05, show_default=True, help="Window step as a fraction of its width.")(func)
    func = click.option("--min-window", type=int, default=None)(func)
    func = click.option("--max-window", type=int, default=None)(func)
    return func


def _tracker_options_(func: Callable) -> Callable:
    func = click.option("--n", "n", type=int, default=20, show_default=True, help="Frames between refreshes.")(func)
    func = click.option("--alpha", type=float, default=0.5, show_default=True, help="Weight of the propagated map.")(func)
    func = click.option("--tau", type=int, default=15, show_default=True, help="Minimum stages for a window to count.")(func)
    func = click.option("--shrink", type=float, default=1 / 3, show_default="1/3", help="Window shrink factor.")(func)
    func = click.option("--c", "c", type=float, default=65.0, show_default=True, help="Binarization threshold.")(func)
    return func


def _scan_config_(scale_factor: float, step: float, min_window: int | None, max_window: int | None) -> ScanConfig:
    return ScanConfig(scale_factor=scale_factor, step_fraction=step, min_window=min_window, max_window=max_window)


def _save_(cfg: RunConfig, results: list[FrameResult]):
    write_detections(cfg.out, ((result.frame_index, result.faces) for result in results))
    write_timings(cfg.timings_path, results)
    logger.info(f"Wrote {len(results)} frames to {cfg.out} and {cfg.timings_path}")


def _prepare_dirs_(cfg: RunConfig):
    for directory in (cfg.annotate_dir, cfg.dump_maps, cfg.dump_flow):
        if directory is not None:
            directory.mkdir(parents=True, exist_ok=True)


def _track_(cfg: RunConfig, model: CascadeModel, prompt: str = "tracking") -> tuple[list[FrameResult], list[float]]:
    """Run the tracker over the configured frames. Also returns the wall clock time of every step."""
    paths = cfg.frame_paths()
    tracker = Tracker(cfg.tracker, model, keep_maps=cfg.dump_maps is not None, keep_flow=cfg.dump_flow is not None)
    _prepare_dirs_(cfg)

    state = TrackerState()
    results, wall = [], []
    with Progress(prompt, len(paths)) as progress:
        for path, frame in _frames_(paths):
            tick = time.perf_counter()
            state, result = tracker.step(state, frame)
            wall.append((time.perf_counter() - tick) * 1e3)

            if cfg.annotate_dir is not None:
                annotate(frame, result, cfg.annotate_dir / f"{path.stem}.png")
            if cfg.dump_maps is not None and result.likelihood is not None:
                write_map_pgm(cfg.dump_maps / f"{path.stem}.pgm", result.likelihood)
            if cfg.dump_flow is not None and result.flow is not None:
                write_flo(cfg.dump_flow / f"{path.stem}.flo", result.flow)
            results.append(result)
            progress.advance()
    return results, wall


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log debug messages.")
@click.option("-q", "--quiet", is_flag=True, help="Only log errors.")
def cli(verbose: bool, quiet: bool):
    """Face tracking with cascade likelihood maps and dense optical flow."""
    if quiet:
        logger.min_level = LogLevel.Error
    elif verbose:
        logger.min_level = LogLevel.Debug
    else:
        logger.min_level = LogLevel.Info


@cli.command()
@_input_options_
@_output_options_
@click.option("--dump-maps", type=click.Path(path_type=Path), default=None, help="Write every frame's likelihood map as PGM here.")
@click.option("--dump-flow", type=click.Path(path_type=Path), default=None, help="Write the flow field of every propagated frame here.")
@_tracker_options_
@_scan_options_
def track(
    cascade: Path,
    frames: Path,
    patterns: tuple[str, ...],
    out: Path,
    timings: Path | None,
    annotate_dir: Path | None,
    dump_maps: Path | None,
    dump_flow: Path | None,
    n: int,
    alpha: float,
    tau: int,
    shrink: float,
    c: float,
    scale_factor: float,
    step: float,
    min_window: int | None,
    max_window: int | None,
):
    """Track faces through a directory of frames."""
    with _exit_codes_():
        cfg = RunConfig(
            frames=frames,
            cascade=cascade,
            tracker=TrackerConfig(
                n=n,
                alpha=alpha,
                tau=tau,
                shrink=shrink,
                c=c,
                scan=_scan_config_(scale_factor, step, min_window, max_window),
            ),
            patterns=patterns,
            out=out,
            timings=timings,
            annotate_dir=annotate_dir,
            dump_maps=dump_maps,
            dump_flow=dump_flow,
        )
        click.echo(f"flowtrack track {_tracker_header_(cfg.tracker)} {_scan_header_(cfg.tracker.scan)}")
        model = _load_model_(cascade)
        results, _ = _track_(cfg, model)
        _save_(cfg, results)
        refreshes = sum(result.refreshed for result in results)
        click.echo(f"{len(results)} frames, {refreshes} refreshes")
    sys.exit(0)


@cli.command()
@_input_options_
@_output_options_
@click.option("--min-neighbors", type=int, default=3, show_default=True)
@_scan_options_
def classic(
    cascade: Path,
    frames: Path,
    patterns: tuple[str, ...],
    out: Path,
    timings: Path | None,
    annotate_dir: Path | None,
    min_neighbors: int,
    scale_factor: float,
    step: float,
    min_window: int | None,
    max_window: int | None,
):
    """Per frame cascade detection with overlap grouping."""
    with _exit_codes_():
        scan_cfg = _scan_config_(scale_factor, step, min_window, max_window)
        cfg = RunConfig(
            frames=frames,
            cascade=cascade,
            tracker=TrackerConfig(scan=scan_cfg),
            patterns=patterns,
            out=out,
            timings=timings,
            annotate_dir=annotate_dir,
        )
        click.echo(f"flowtrack classic min_neighbors={min_neighbors} {_scan_header_(scan_cfg)}")
        model = _load_model_(cascade)
        paths = cfg.frame_paths()
        _prepare_dirs_(cfg)

        results = []
        with Progress("detecting", len(paths)) as progress:
            for index, (path, frame) in enumerate(_frames_(paths)):
                tick = time.perf_counter()
                rects = classic_detect(model, frame, scan_cfg, min_neighbors)
                elapsed = (time.perf_counter() - tick) * 1e3
                faces = [FaceBox(*rect.center, rect.width, rect.height, float(rect.neighbors), rect.x, rect.y) for rect in rects]
                result = FrameResult(index, faces, True, None, Timings(detect_ms=elapsed))
                if cfg.annotate_dir is not None:
                    annotate(frame, result, cfg.annotate_dir / f"{path.stem}.png")
                results.append(result)
                progress.advance()

        _save_(cfg, results)
        click.echo(f"{len(results)} frames, {sum(len(result.faces) for result in results)} detections")
    sys.exit(0)


def _print_report_(report: MetricsReport):
    click.echo(pformat(report.to_dict(), color=sys.stdout.isatty()))


@cli.command(name="eval")
@click.argument("detections", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("ground_truth", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--match-px", type=float, default=MATCH_PX, show_default=True, help="Match radius in pixels.")
@click.option("--gt-offset-y", type=float, default=GT_OFFSET_Y, show_default=True, help="Eye midpoint to face center offset.")
@click.option("--timings", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Key value report file.")
@click.option("--json", "json_path", type=click.Path(path_type=Path), default=None, help="Structured report file.")
@click.option("--per-frame", type=click.Path(path_type=Path), default=None, help="Per frame accuracy series.")
def eval_(
    detections: Path,
    ground_truth: Path,
    match_px: float,
    gt_offset_y: float,
    timings: Path | None,
    out: Path | None,
    json_path: Path | None,
    per_frame: Path | None,
):
    """Score a detections file against eye annotations."""
    with _exit_codes_():
        report = _evaluate_(detections, ground_truth, timings, match_px, gt_offset_y)
        _print_report_(report)
        if out is not None:
            write_report(out, report)
        if json_path is not None:
            write_report_json(json_path, report.to_dict())
        if per_frame is not None:
            write_per_frame(per_frame, report)
    sys.exit(0)


def _evaluate_(detections: Path, ground_truth: Path, timings: Path | None, match_px: float, offset_y: float) -> MetricsReport:
    rows = read_detections(detections)
    centers = [(index, [FaceCenter(face.center_x, face.center_y) for face in faces]) for index, faces in rows]
    return evaluate(
        centers,
        read_ground_truth(ground_truth),
        read_timings(timings) if timings is not None else None,
        match_px=match_px,
        offset_y=offset_y,
    )


@cli.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--match-px", type=float, default=MATCH_PX, show_default=True)
@click.option("--gt-offset-y", type=float, default=GT_OFFSET_Y, show_default=True)
@click.option("--json", "json_path", type=click.Path(path_type=Path), default=None)
def suite(directory: Path, match_px: float, gt_offset_y: float, json_path: Path | None):
    """Score every `<video>.det` against its `<video>.gt` and average over the videos.

    A `<video>.timings` file next to the pair is picked up when present.
    """
    with _exit_codes_():
        reports = {}
        for det in sorted(directory.glob("*.det")):
            gt = det.with_suffix(".gt")
            if not gt.is_file():
                logger.warn(f"No ground truth for {det.name}, skipping")
                continue
            timings = det.with_suffix(".timings")
            reports[det.stem] = _evaluate_(det, gt, timings if timings.is_file() else None, match_px, gt_offset_y)
        if len(reports) == 0:
            raise FileNotFoundError(f"No .det/.gt pairs in {directory}")

        summary = summarize(reports)
        width = max(len(name) for name in summary.reports)
        for name, report in summary.reports.items():
            accuracy = "-" if report.mean_accuracy is None else f"{report.mean_accuracy:.2f}"
            stab = "-" if report.mean_stability is None else f"{report.mean_stability:.2f}"
            click.echo(
                f"{name.ljust(width)}  r={report.detection_rate:.4f} accuracy={accuracy} stability={stab} "
                f"fp={report.false_positives} fn={report.false_negatives}",
            )
        click.echo(pformat(summary.to_dict(), color=sys.stdout.isatty()))
        if json_path is not None:
            write_report_json(
                json_path,
                {
                    "summary": summary.to_dict(),
                    "videos": {name: report.to_dict() for name, report in summary.reports.items()},
                },
            )
    sys.exit(0)


@cli.command()
@click.argument("source", type=click.Path(path_type=Path))
@click.argument("destination", type=click.Path(path_type=Path))
@click.option(
    "--format",
    "format_",
    type=click.Choice(["native", "xml"]),
    default=None,
    help="Output format. Defaults to xml for a .xml destination, native otherwise.",
)
def convert(source: Path, destination: Path, format_: str | None):
    """Convert a cascade between the xml schema and the native format."""
    with _exit_codes_():
        model = _load_model_(source)
        format_ = format_ or ("xml" if destination.suffix.lower() == ".xml" else "native")
        if format_ == "xml":
            destination.write_text(serialize_standard_xml(model), encoding="utf-8")
        else:
            destination.write_bytes(serialize_native(model))
        click.echo(f"{model.num_stages} stages, {model.base_width}x{model.base_height} base window -> {destination}")
    sys.exit(0)


@cli.command()
@_input_options_
@_tracker_options_
@_scan_options_
def bench(
    cascade: Path,
    frames: Path,
    patterns: tuple[str, ...],
    n: int,
    alpha: float,
    tau: int,
    shrink: float,
    c: float,
    scale_factor: float,
    step: float,
    min_window: int | None,
    max_window: int | None,
):
    """Mean per frame time of the tracker, split into flow, detection and the rest."""
    with _exit_codes_():
        cfg = RunConfig(
            frames=frames,
            cascade=cascade,
            tracker=TrackerConfig(
                n=n,
                alpha=alpha,
                tau=tau,
                shrink=shrink,
                c=c,
                scan=_scan_config_(scale_factor, step, min_window, max_window),
            ),
            patterns=patterns,
        )
        click.echo(f"flowtrack bench {_tracker_header_(cfg.tracker)} {_scan_header_(cfg.tracker.scan)}")
        model = _load_model_(cascade)
        results, wall = _track_(cfg, model, prompt="benchmarking")

        split = np.mean([(r.timings.flow_ms, r.timings.detect_ms, r.timings.other_ms) for r in results], axis=0)
        click.echo(
            pformat(
                {
                    "frames": len(results),
                    "flow_ms": float(split[0]),
                    "detect_ms": float(split[1]),
                    "other_ms": float(split[2]),
                    "total_ms": float(split.sum()),
                    "wall_ms": float(np.mean(wall)),
                },
                color=sys.stdout.isatty(),
            ),
        )
    sys.exit(0)


@cli.command()
@click.option("--cascade", type=click.Path(path_type=Path), required=True)
@click.argument("frame", type=click.Path(path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=Path("refresh_map.pgm"), show_default=True)
@click.option("--windows", type=click.Path(path_type=Path), default=None, help="Write every gated window as `x y w h stages`.")
@_tracker_options_
@_scan_options_
def detect(
    cascade: Path,
    frame: Path,
    out: Path,
    windows: Path | None,
    n: int,
    alpha: float,
    tau: int,
    shrink: float,
    c: float,
    scale_factor: float,
    step: float,
    min_window: int | None,
    max_window: int | None,
):
    """Run the stage counting detector on one frame and write its likelihood map."""
    with _exit_codes_():
        cfg = TrackerConfig(
            n=n,
            alpha=alpha,
            tau=tau,
            shrink=shrink,
            c=c,
            scan=_scan_config_(scale_factor, step, min_window, max_window),
        )
        model = _load_model_(cascade)
        if cfg.tau > model.num_stages:
            raise ValueError(f"tau {cfg.tau} exceeds the cascade's {model.num_stages} stages")
        if not frame.is_file():
            raise FileNotFoundError(f"Frame not found: {frame}")
        image = load_frame(frame)

        found = scan(model, image, cfg.scan, cfg.tau)
        likelihood = build_refresh_map(found, image.width, image.height, cfg.tau, cfg.shrink)
        faces = extract_faces(likelihood, cfg.c, cfg.shrink)
        write_map_pgm(out, likelihood)
        if windows is not None:
            windows.write_text(
                "".join(f"{w.x} {w.y} {w.width} {w.height} {w.stages_passed}\n" for w in found),
                encoding="utf-8",
            )

        levels = Counter(window.stages_passed for window in found)
        click.echo(
            pformat(
                {
                    "windows": len(found),
                    **{f"stages_{level}": levels[level] for level in sorted(levels)},
                    "peak": likelihood.peak,
                    "faces": len(faces),
                },
                color=sys.stdout.isatty(),
            ),
        )
        for face in faces:
            click.echo(f"face {face.center_x:.2f} {face.center_y:.2f} {face.width}x{face.height} peak={face.peak:.1f}")
    sys.exit(0)


if __name__ == "__main__":
    cli()
