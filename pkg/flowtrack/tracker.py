"""Refresh scheduling and map propagation.

The modified detector runs on refresh frames: frame 0, every `n` frames after the last
successful refresh, and every frame while refreshes keep failing. Between refreshes the
likelihood map is carried along by dense flow. A refresh fails when its own map,
without the blended history, holds no face.
"""
from __future__ import annotations

import time
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field, replace

from flowtrack.cascade import CascadeModel
from flowtrack.detector import DetectionWindow, ScanConfig, scan
from flowtrack.flow import FlowParams, compute_flow
from flowtrack.imgcore import FlowField, Frame, warp_by_flow
from flowtrack.likelihood import FaceBox, LikelihoodMap, blend, build_refresh_map, extract_faces
from flowtrack.logging import get_logger

__all__ = [
    "SessionError",
    "TrackerConfig",
    "TrackerState",
    "Timings",
    "FrameResult",
    "Tracker",
    "run_sequence",
]

Detect = Callable[[Frame], list[DetectionWindow]]
Flow = Callable[[Frame, Frame], FlowField]


class SessionError(ValueError):
    """Frame size changed in the middle of a session."""


@dataclass(frozen=True)
class TrackerConfig:
    n: int = 20
    alpha: float = 0.5
    tau: int = 15
    shrink: float = 1 / 3
    c: float = 65.0
    scan: ScanConfig = field(default_factory=ScanConfig)
    flow: FlowParams = field(default_factory=FlowParams)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be at least 1: {self.n}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1]: {self.alpha}")
        if self.tau < 0:
            raise ValueError(f"tau must be non negative: {self.tau}")
        if not 0.0 < self.shrink <= 1.0:
            raise ValueError(f"shrink must be in (0, 1]: {self.shrink}")
        if self.c <= 0:
            raise ValueError(f"c must be positive: {self.c}")


@dataclass(frozen=True)
class TrackerState:
    frame_index: int = 0
    likelihood: LikelihoodMap | None = None
    prev_frame: Frame | None = None
    frames_since_refresh: int = 0
    last_refresh_succeeded: bool = True


@dataclass(frozen=True)
class Timings:
    flow_ms: float = 0.0
    detect_ms: float = 0.0
    other_ms: float = 0.0

    @property
    def total_ms(self) -> float:
        return self.flow_ms + self.detect_ms + self.other_ms


@dataclass(frozen=True)
class FrameResult:
    frame_index: int
    faces: list[FaceBox]
    refreshed: bool
    refresh_succeeded: bool | None
    timings: Timings
    likelihood: LikelihoodMap | None = None
    flow: FlowField | None = None


class Tracker:
    """Runs the per frame state machine for one cascade and configuration.

    With `keep_maps` every result carries its likelihood map, with `keep_flow` the
    flow field the previous map was warped by.
    `detect` and `flow` default to the cascade scan (gated at `tau`) and the dense
    flow of this package. They can be replaced, for example by scripted doubles.
    Flow is always called as `flow(current, previous)`.
    """

    def __init__(
        self,
        cfg: TrackerConfig | None = None,
        model: CascadeModel | None = None,
        *,
        detect: Detect | None = None,
        flow: Flow | None = None,
        keep_maps: bool = False,
        keep_flow: bool = False,
    ):
        self.cfg = cfg or TrackerConfig()
        self.keep_maps = keep_maps
        self.keep_flow = keep_flow
        if detect is None:
            if model is None:
                raise ValueError("Either a cascade model or a detect callable is required")
            if self.cfg.tau > model.num_stages:
                raise ValueError(f"tau {self.cfg.tau} exceeds the cascade's {model.num_stages} stages")
            detect = self._scan_detector_(model)
        self.detect = detect
        self.flow = flow or (lambda current, previous: compute_flow(current, previous, self.cfg.flow))
        self.logger = get_logger()

    def _scan_detector_(self, model: CascadeModel) -> Detect:
        def detect(frame: Frame) -> list[DetectionWindow]:
            return scan(model, frame, self.cfg.scan, self.cfg.tau)

        return detect

    def step(self, state: TrackerState, frame: Frame) -> tuple[TrackerState, FrameResult]:
        cfg = self.cfg
        start = time.perf_counter()
        flow_s = detect_s = 0.0

        if state.prev_frame is not None and state.prev_frame.shape != frame.shape:
            raise SessionError(
                f"Frame {state.frame_index} is {frame.width}x{frame.height}, "
                f"session started at {state.prev_frame.width}x{state.prev_frame.height}",
            )

        warped = field_ = None
        if state.prev_frame is not None and state.likelihood is not None:
            tick = time.perf_counter()
            field_ = self.flow(frame, state.prev_frame)
            flow_s = time.perf_counter() - tick
            warped = LikelihoodMap(warp_by_flow(state.likelihood.values, field_))

        elapsed = state.frames_since_refresh + 1
        refresh = state.frame_index == 0 or elapsed >= cfg.n or not state.last_refresh_succeeded

        succeeded = None
        likelihood = warped
        if refresh:
            self.logger.debug(f"Refresh at frame {state.frame_index}")
            tick = time.perf_counter()
            windows = self.detect(frame)
            detect_s = time.perf_counter() - tick

            fresh = build_refresh_map(windows, frame.width, frame.height, cfg.tau, cfg.shrink)
            succeeded = len(extract_faces(fresh, cfg.c, cfg.shrink)) > 0
            if warped is not None:
                likelihood = blend(fresh, warped, cfg.alpha)
            elif succeeded:
                likelihood = fresh
            if not succeeded:
                self.logger.info(f"No face in refresh frame {state.frame_index}, retrying next frame")

        faces = extract_faces(likelihood, cfg.c, cfg.shrink) if likelihood is not None else []

        next_state = replace(
            state,
            frame_index=state.frame_index + 1,
            likelihood=likelihood,
            prev_frame=frame,
            frames_since_refresh=0 if succeeded else elapsed,
            last_refresh_succeeded=succeeded if refresh else state.last_refresh_succeeded,
        )

        total_s = time.perf_counter() - start
        timings = Timings(
            flow_ms=flow_s * 1e3,
            detect_ms=detect_s * 1e3,
            other_ms=max(0.0, total_s - flow_s - detect_s) * 1e3,
        )
        return next_state, FrameResult(
            state.frame_index,
            faces,
            refresh,
            succeeded,
            timings,
            likelihood if self.keep_maps else None,
            field_ if self.keep_flow else None,
        )

    def run(self, frames: Iterable[Frame]) -> list[FrameResult]:
        state = TrackerState()
        results = []
        for frame in frames:
            state, result = self.step(state, frame)
            results.append(result)
        if len(results) == 0:
            raise ValueError("A sequence needs at least one frame")
        return results


def run_sequence(
    frames: Iterable[Frame],
    cfg: TrackerConfig | None = None,
    model: CascadeModel | None = None,
    *,
    detect: Detect | None = None,
    flow: Flow | None = None,
    keep_maps: bool = False,
) -> list[FrameResult]:
    """One `FrameResult` per frame, in order."""
    return Tracker(cfg, model, detect=detect, flow=flow, keep_maps=keep_maps).run(frames)
