"""Position estimation from detected links.

An obstructed link constrains the target to (near) the link's line, so
with several detected links the target is found by weighted least
squares over the squared point-to-line distances, each line weighted by
its squared attenuation estimate. Plain WLS is wrecked by interference
links far from the target, hence the robust pipeline:

  1. detect obstructed links,
  2. coarse-estimate the target by a weighted grid vote (each detected
     line votes for the cells within the vote radius of it),
  3. drop detected links farther than the filter radius from the coarse
     estimate,
  4. refine with WLS on the surviving links.

Step 2 tolerates interference because unrelated lines rarely agree on a
cell, and step 3 removes exactly the far links that bias step 4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .detection import DetectionResult, DetectorConfig, detect_links
from .errors import DegenerateGeometryError, NoDetectionError
from .rss import RssTensor
from .scene import MonitoredArea, Scene

#: relative condition number of the 2x2 normal matrix beyond which the
#: geometry (near-parallel lines) is rejected instead of solved
DEFAULT_CONDITION_CAP = 1e8


# ---------------------------------------------------------------------------
# weighted least squares
# ---------------------------------------------------------------------------

@dataclass
class WlsSystem:
    """Assembled WLS problem: rows (a, b | e) with weights w = est^2 / (a^2+b^2)."""

    h: np.ndarray  # (N, 2) columns a, b
    e: np.ndarray  # (N,)
    weights: np.ndarray  # (N,)
    link_ids: tuple[int, ...] = ()

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64)
        self.e = np.asarray(self.e, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        n = self.h.shape[0]
        if self.h.ndim != 2 or self.h.shape[1] != 2 or self.e.shape != (n,) or self.weights.shape != (n,):
            raise ValueError("inconsistent system shapes")
        if n < 2:
            raise ValueError(f"need at least 2 lines, got {n}")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise ValueError("weights must be positive and finite")

    @classmethod
    def from_detection(cls, scene: Scene, detection: DetectionResult) -> "WlsSystem":
        ids = detection.obstructed
        idx = [l - 1 for l in ids]
        a, b, e, norm = scene.line_arrays()
        est = detection.estimates[idx]
        return cls(
            h=np.column_stack([a[idx], b[idx]]),
            e=e[idx],
            weights=est**2 / norm[idx] ** 2,
            link_ids=ids,
        )

    def objective(self, point) -> float:
        """Weighted sum of squared residuals at ``point``."""
        r = self.e - self.h @ np.asarray(point, dtype=np.float64)
        return float(np.sum(self.weights * r * r))

    def gradient(self, point) -> np.ndarray:
        """Analytic gradient of :meth:`objective`."""
        r = self.e - self.h @ np.asarray(point, dtype=np.float64)
        return -2.0 * self.h.T @ (self.weights * r)


def wls_solve(system: WlsSystem, condition_cap: float = DEFAULT_CONDITION_CAP) -> tuple[float, float]:
    """Closed-form minimizer (H^T W H)^-1 H^T W e of the weighted objective.

    Raises DegenerateGeometryError instead of returning a meaningless
    point when the normal matrix is singular or its condition number
    exceeds ``condition_cap`` (all lines near-parallel).
    """
    wh = system.weights[:, None] * system.h
    normal = system.h.T @ wh
    rhs = system.h.T @ (system.weights * system.e)
    cond = np.linalg.cond(normal)
    if not np.isfinite(cond) or cond > condition_cap:
        raise DegenerateGeometryError(
            f"normal matrix condition {cond:.3g} exceeds cap {condition_cap:.3g}"
        )
    x, y = np.linalg.solve(normal, rhs)
    return float(x), float(y)


# ---------------------------------------------------------------------------
# coarse grid vote
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoarseGrid:
    """Discretization of the monitored area for the vote stage.

    Cell counts are ceil(extent / cell size); the effective stride is
    extent/count (== cell_size_m when it divides the extent), which
    keeps every center inside the area. Cells are indexed row-major,
    x fastest.
    """

    area: MonitoredArea
    cell_size_m: float = 0.1
    vote_radius_m: float = 0.3

    def __post_init__(self):
        if self.cell_size_m <= 0 or self.vote_radius_m <= 0:
            raise ValueError("cell size and vote radius must be positive")

    @property
    def n_x(self) -> int:
        return math.ceil(self.area.width / self.cell_size_m)

    @property
    def n_y(self) -> int:
        return math.ceil(self.area.height / self.cell_size_m)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        sx = self.area.width / self.n_x
        sy = self.area.height / self.n_y
        cx = self.area.x_min + (np.arange(self.n_x) + 0.5) * sx
        cy = self.area.y_min + (np.arange(self.n_y) + 0.5) * sy
        return cx, cy


@dataclass
class CoarseEstimate:
    position: tuple[float, float]
    votes: np.ndarray  # (n_y, n_x)
    cell_index: int  # row-major flat index of the argmax cell


def coarse_estimate(scene: Scene, detection: DetectionResult, grid: CoarseGrid,
                    clamp: bool = False) -> CoarseEstimate:
    """Weighted vote over grid cells; returns the argmax cell center.

    Each detected link adds its attenuation estimate (first power) to
    every cell within the vote radius of its line. Ties break toward
    the lowest row-major cell index. The full vote map is returned for
    inspection or rendering.
    """
    if not detection.obstructed:
        raise NoDetectionError("no detected links to vote with")
    idx = [l - 1 for l in detection.obstructed]
    x1, y1, x2, y2 = scene.endpoints()
    cx, cy = grid.centers()
    votes = _kernels.vote_map(
        x1[idx], y1[idx], x2[idx], y2[idx],
        detection.estimates[idx], cx, cy, grid.vote_radius_m, clamp=clamp,
    )
    flat = int(np.argmax(votes))
    row, col = divmod(flat, grid.n_x)
    return CoarseEstimate(position=(float(cx[col]), float(cy[row])), votes=votes, cell_index=flat)


# ---------------------------------------------------------------------------
# spatial filter and the full pipeline
# ---------------------------------------------------------------------------

def spatial_filter(scene: Scene, detection: DetectionResult, coarse: tuple[float, float],
                   filter_radius_m: float, clamp: bool = False) -> DetectionResult:
    """Keep only detected links within ``filter_radius_m`` of the coarse
    position (strict). Idempotent; the result's set is a subset."""
    if filter_radius_m <= 0:
        raise ValueError("filter radius must be positive")
    d = scene.distances(coarse, clamp=clamp)
    kept = tuple(l for l in detection.obstructed if d[l - 1] < filter_radius_m)
    return DetectionResult(obstructed=kept, estimates=detection.estimates, config=detection.config)


@dataclass(frozen=True)
class RwlsConfig:
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    grid_cell_m: float = 0.1
    vote_radius_m: float = 0.3
    filter_radius_m: float = 0.5
    use_spatial_filter: bool = True
    condition_cap: float = DEFAULT_CONDITION_CAP
    clamp_to_segment: bool = False


@dataclass
class PositionEstimate:
    coarse: tuple[float, float]
    refined: tuple[float, float]
    method: str  # "wls" when step 4 succeeded, "coarse-only" on fallback
    detection: DetectionResult  # step-1 output
    filtered: DetectionResult  # step-3 output (== detection when filter disabled)
    votes: np.ndarray

    def indicators(self) -> np.ndarray:
        """Post-filter 0/1 indicator per link."""
        return self.filtered.indicators()


def rwls_localize(scene: Scene, calibration: RssTensor, observation: RssTensor,
                  cfg: RwlsConfig = RwlsConfig()) -> PositionEstimate:
    """Run the 4-step pipeline and return the estimate with all
    intermediates.

    An empty detection set raises NoDetectionError. If filtering leaves
    fewer than 2 links, or the surviving geometry is degenerate, the
    coarse estimate is returned flagged "coarse-only" rather than
    failing: a usable position exists even when refinement cannot run.
    """
    detection = detect_links(scene, calibration, observation, cfg.detector)
    if not detection.obstructed:
        raise NoDetectionError(
            f"no link exceeded {cfg.detector.threshold_db} dB ({cfg.detector.estimator} estimator)"
        )
    grid = CoarseGrid(scene.area, cfg.grid_cell_m, cfg.vote_radius_m)
    coarse = coarse_estimate(scene, detection, grid, clamp=cfg.clamp_to_segment)
    if cfg.use_spatial_filter:
        filtered = spatial_filter(scene, detection, coarse.position, cfg.filter_radius_m,
                                  clamp=cfg.clamp_to_segment)
    else:
        filtered = detection
    refined = coarse.position
    method = "coarse-only"
    if len(filtered.obstructed) >= 2:
        try:
            refined = wls_solve(WlsSystem.from_detection(scene, filtered), cfg.condition_cap)
            method = "wls"
        except DegenerateGeometryError:
            pass
    return PositionEstimate(coarse=coarse.position, refined=refined, method=method,
                            detection=detection, filtered=filtered, votes=coarse.votes)
