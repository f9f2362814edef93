"""Adam optimization of stroke control points and the round schedule.

Control points are optimized in pixel units, so the default learning rate
of 1.0 moves a point by roughly one pixel per step. Each round overlays
freshly initialized strokes for the next region onto the sketch from the
previous round and trains until the augmentation-free loss stops moving
(successive evaluations differing by less than the convergence threshold)
or the iteration cap is hit. Round 0 covers the global region; the loss is
always computed against the full photograph, never a region crop.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from strokeforge import edges as edges_mod
from strokeforge import placement
from strokeforge.errors import ConfigError, DomainError, NumericError
from strokeforge.geometry import Canvas, Sketch, Stroke
from strokeforge.loss import LossConfig, make_backend
from strokeforge.raster import render, render_backward
from strokeforge.regions import GLOBAL_REGION_ID, RegionMask

log = logging.getLogger(__name__)

PREVIEW_SIZE = 112


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 1.0
    max_iters_per_round: int = 800
    eval_interval: int = 10
    convergence_eps: float = 0.00001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    retrain_previous_rounds: bool = True

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.max_iters_per_round < 1:
            raise ConfigError("max_iters_per_round must be >= 1")
        if self.eval_interval < 1:
            raise ConfigError("eval_interval must be >= 1")
        if self.convergence_eps <= 0:
            raise ConfigError("convergence_eps must be positive")


@dataclass
class RoundState:
    round_id: int
    params: NDArray[np.float64]
    m: NDArray[np.float64]
    v: NDArray[np.float64]
    step_count: int = 0
    loss_history: list[tuple[int, float]] = field(default_factory=list)

    @classmethod
    def fresh(cls, round_id: int, params: NDArray[np.float64]) -> "RoundState":
        return cls(round_id=round_id, params=params.copy(),
                   m=np.zeros_like(params), v=np.zeros_like(params))


@dataclass(frozen=True)
class ProgressEvent:
    round_id: int
    iteration: int
    clean_loss: float
    preview_png: bytes | None = None


@dataclass(frozen=True)
class RoundReport:
    round_id: int
    region_id: int
    budget: int
    iterations: int
    initial_loss: float
    final_loss: float
    converged: bool
    skipped: bool = False
    loss_history: tuple[tuple[int, float], ...] = ()

    def as_dict(self) -> dict:
        return {
            "round_id": self.round_id,
            "region_id": self.region_id,
            "budget": self.budget,
            "iterations": self.iterations,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "converged": self.converged,
            "skipped": self.skipped,
            "loss_history": [[i, v] for i, v in self.loss_history],
        }


def adam_step(params: NDArray[np.float64], grads: NDArray[np.float64],
              state: RoundState, config: OptimConfig) -> NDArray[np.float64]:
    """One bias-corrected Adam update; mutates the state's moments/counter."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise DomainError("params, grads and moment vectors must share one shape")
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0]) // 8
        raise NumericError(f"non-finite gradient on stroke index {bad}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = config.adam_beta1, config.adam_beta2
    state.m = b1 * state.m + (1.0 - b1) * grads
    state.v = b2 * state.v + (1.0 - b2) * grads ** 2
    m_hat = state.m / (1.0 - b1 ** t)
    v_hat = state.v / (1.0 - b2 ** t)
    new_params = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    state.params = new_params
    return new_params


def encode_preview(image: NDArray[np.float64], size: int = PREVIEW_SIZE) -> bytes:
    u8 = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    pil = Image.fromarray(u8, mode="L").resize((size, size), Image.BILINEAR)
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def run_round(sketch: Sketch, new_strokes: list[Stroke], target: NDArray[np.float64],
              optim: OptimConfig, loss_cfg: LossConfig,
              progress_sink: Callable[[ProgressEvent], None] | None = None,
              *, backend=None, step_rng: np.random.Generator | None = None
              ) -> tuple[Sketch, RoundState]:
    """Overlay new_strokes and train to convergence or the iteration cap.

    On a loss-backend failure the exception propagates and the caller's
    sketch is untouched (all inputs are immutable values).
    """
    target = np.asarray(target, dtype=np.float64)
    if target.shape != sketch.canvas.shape:
        raise DomainError(f"target shape {target.shape} != canvas shape {sketch.canvas.shape}")
    if sketch.rounds_completed >= 1 and not new_strokes:
        raise DomainError("rounds after the first must contribute new strokes")
    work = sketch.with_strokes(sketch.strokes + tuple(new_strokes))
    if not work.strokes:
        raise DomainError("nothing to optimize: sketch and new_strokes both empty")

    n_frozen = 0 if optim.retrain_previous_rounds else len(sketch.strokes)
    backend = backend or make_backend(target, loss_cfg)
    step_rng = step_rng or np.random.default_rng(0)
    round_id = sketch.rounds_completed
    state = RoundState.fresh(round_id, work.control_points_px()[n_frozen:].reshape(-1))
    scale = sketch.canvas.scale()

    def emit(iteration: int, clean: float, image: NDArray[np.float64]) -> None:
        state.loss_history.append((iteration, clean))
        if progress_sink is not None:
            progress_sink(ProgressEvent(round_id=round_id, iteration=iteration,
                                        clean_loss=clean,
                                        preview_png=encode_preview(image)))

    converged = False
    iteration = 0
    while iteration < optim.max_iters_per_round:
        image = render(work).image
        if iteration % optim.eval_interval == 0:
            clean = backend.clean_loss(image)
            emit(iteration, clean, image)
            if len(state.loss_history) >= 2:
                prev, curr = state.loss_history[-2][1], state.loss_history[-1][1]
                if abs(curr - prev) < optim.convergence_eps:
                    converged = True
                    break

        report = backend.step_loss(image, seed=int(step_rng.integers(2 ** 31)))
        pgrad = render_backward(work, work.canvas, report.pixel_grad)
        grads_px = (pgrad.per_stroke[n_frozen:] / scale).reshape(-1)
        params = adam_step(state.params, grads_px, state, optim)

        cps_px = work.control_points_px()
        cps_px[n_frozen:] = params.reshape(-1, 4, 2)
        work = work.replace_control_points_px(cps_px)
        iteration += 1

    if not converged:
        image = render(work).image
        emit(iteration, backend.clean_loss(image), image)

    return work.with_strokes(work.strokes, rounds_completed=round_id + 1), state


def prepare_target(photo, canvas: Canvas) -> NDArray[np.float64]:
    """Grayscale photo resized to the render canvas, values in [0, 1]."""
    gray = photo if isinstance(photo, edges_mod.GrayImage) else edges_mod.to_grayscale(photo)
    u8 = np.clip(np.round(gray.pixels * 255.0), 0, 255).astype(np.uint8)
    pil = Image.fromarray(u8, mode="L").resize((canvas.width, canvas.height), Image.BILINEAR)
    return np.asarray(pil, dtype=np.float64) / 255.0


def region_seed_strokes(gray: edges_mod.GrayImage, region: RegionMask, budget: int,
                        *, round_id: int, rng_seed: int = 0,
                        sampler: str = "fps",
                        init_radius: float = placement.DEFAULT_INIT_RADIUS,
                        canny_low: float = edges_mod.DEFAULT_LOW_THRESHOLD,
                        canny_high: float = edges_mod.DEFAULT_HIGH_THRESHOLD,
                        edge_points: edges_mod.EdgePointSet | None = None
                        ) -> list[Stroke]:
    """Edge-detect a region and turn its budget into initial strokes.

    Returns [] when the region has no edge content. Both the batch session
    and the interactive server build rounds through this one path, so the
    two entry points stay bit-identical for identical inputs.
    """
    if edge_points is None:
        edge_points = edges_mod.detect_edges(gray, region, low=canny_low, high=canny_high)
    pts = edge_points.as_array()
    if len(pts) == 0 or budget == 0:
        return []
    k = min(budget, len(pts))
    if k < budget:
        log.warning("region %d has only %d edge points for a budget of %d",
                    region.region_id, len(pts), budget)
    if sampler == "fps":
        seeds_px = placement.fps(pts, k)
    elif sampler == "random":
        rng = np.random.default_rng((rng_seed, region.region_id, 0, 1))
        seeds_px = placement.sample_random(pts, k, rng)
    else:
        raise ConfigError(f"unknown sampler {sampler!r}")
    h, w = gray.shape
    seeds_norm = seeds_px / np.array([w, h], dtype=np.float64)
    seed_set = placement.SeedSet(region_id=region.region_id, seeds=seeds_norm)
    return placement.init_strokes(seed_set, radius=init_radius, rng_seed=rng_seed,
                                  round_id=round_id)


def round_report_from_state(state: RoundState, region_id: int, budget: int,
                            optim: OptimConfig) -> RoundReport:
    hist = state.loss_history
    converged = (len(hist) >= 2
                 and abs(hist[-1][1] - hist[-2][1]) < optim.convergence_eps
                 and hist[-1][0] < optim.max_iters_per_round)
    return RoundReport(
        round_id=state.round_id, region_id=region_id, budget=budget,
        iterations=hist[-1][0], initial_loss=hist[0][1], final_loss=hist[-1][1],
        converged=converged, skipped=False, loss_history=tuple(hist))


@dataclass(frozen=True)
class SessionResult:
    sketch: Sketch
    rounds: tuple[RoundReport, ...]
    plan: placement.AllocationPlan


def run_session(photo, regions: list[RegionMask], n_strokes: int,
                optim: OptimConfig | None = None, loss_cfg: LossConfig | None = None,
                *, canvas: Canvas = Canvas(224, 224), rng_seed: int = 0,
                sampler: str = "fps",
                init_radius: float = placement.DEFAULT_INIT_RADIUS,
                canny_low: float = edges_mod.DEFAULT_LOW_THRESHOLD,
                canny_high: float = edges_mod.DEFAULT_HIGH_THRESHOLD,
                progress_sink: Callable[[ProgressEvent], None] | None = None
                ) -> SessionResult:
    """Allocate the stroke budget across regions, then optimize round by round."""
    optim = optim or OptimConfig()
    loss_cfg = loss_cfg or LossConfig()
    if not regions:
        raise DomainError("at least the global region is required")
    if regions[0].region_id != GLOBAL_REGION_ID:
        raise DomainError("regions[0] must be the global (all-ones) region")

    gray = photo if isinstance(photo, edges_mod.GrayImage) else edges_mod.to_grayscale(photo)
    for r in regions:
        if r.shape != gray.shape:
            raise DomainError(f"region {r.region_id} mask shape {r.shape} != photo {gray.shape}")

    edge_sets = {r.region_id: edges_mod.detect_edges(gray, r, low=canny_low, high=canny_high)
                 for r in regions}
    plan = placement.allocate_strokes(
        [(r.region_id, len(edge_sets[r.region_id])) for r in regions], n_strokes)

    target = prepare_target(gray, canvas)
    sketch = Sketch(canvas=canvas)
    reports: list[RoundReport] = []

    for region in regions:
        budget = plan.budget_for(region.region_id)
        round_id = sketch.rounds_completed
        new_strokes = region_seed_strokes(
            gray, region, budget, round_id=round_id, rng_seed=rng_seed,
            sampler=sampler, init_radius=init_radius,
            edge_points=edge_sets[region.region_id])
        if not new_strokes:
            log.warning("skipping region %d: no edge points or zero budget",
                        region.region_id)
            reports.append(RoundReport(round_id=round_id, region_id=region.region_id,
                                       budget=budget, iterations=0, initial_loss=np.nan,
                                       final_loss=np.nan, converged=False, skipped=True))
            continue
        step_rng = np.random.default_rng((rng_seed, round_id, 0, 2))
        sketch, state = run_round(sketch, new_strokes, target, optim, loss_cfg,
                                  progress_sink, step_rng=step_rng)
        reports.append(round_report_from_state(state, region.region_id, budget, optim))

    return SessionResult(sketch=sketch, rounds=tuple(reports), plan=plan)
