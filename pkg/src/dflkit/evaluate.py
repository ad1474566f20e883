"""Metrics and experiment sweeps.

Detection quality is scored by the missed-detection and false-alarm
rates over all (position, link) pairs; localization by RMSE and the
empirical CDF of per-position errors. Sweeps re-run the detector /
localizer over a threshold grid or over growing channel subsets and
emit flat rows ready for CSV.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .detection import DetectionResult, DetectorConfig, link_attenuations
from .errors import NoDetectionError
from .localization import CoarseGrid, RwlsConfig, coarse_estimate, rwls_localize, spatial_filter
from .rss import RssTensor
from .scene import Scene


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass
class DetectionMetrics:
    """Missed-detection / false-alarm rates plus their raw counts.

    A rate is None (reported as undefined) when its denominator is
    zero, e.g. false alarms on a dataset with no clear links.
    """

    missed_detection: float | None
    false_alarm: float | None
    n_obstructed: int
    n_clear: int
    n_missed: int
    n_false: int


def detection_metrics(truth, predicted) -> DetectionMetrics:
    """Score 0/1 indicator tables of shape (positions, links)."""
    t = np.asarray(truth, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"truth {t.shape} and prediction {p.shape} shapes differ")
    n_obstructed = int(np.sum(t))
    n_clear = int(t.size - n_obstructed)
    n_missed = int(np.sum(t * (1 - p)))
    n_false = int(np.sum((1 - t) * p))
    return DetectionMetrics(
        missed_detection=n_missed / n_obstructed if n_obstructed else None,
        false_alarm=n_false / n_clear if n_clear else None,
        n_obstructed=n_obstructed,
        n_clear=n_clear,
        n_missed=n_missed,
        n_false=n_false,
    )


@dataclass
class LocalizationMetrics:
    rmse: float
    errors: np.ndarray  # per-position Euclidean error
    cdf_error: np.ndarray  # sorted errors
    cdf_fraction: np.ndarray  # cumulative fraction, ends at 1


def localization_metrics(truth, estimates) -> LocalizationMetrics:
    t = np.asarray(truth, dtype=np.float64)
    e = np.asarray(estimates, dtype=np.float64)
    if t.shape != e.shape or t.ndim != 2 or t.shape[1] != 2 or t.shape[0] < 1:
        raise ValueError(f"need matching (T, 2) arrays, got {t.shape} and {e.shape}")
    errors = np.hypot(*(e - t).T)
    rmse = float(np.sqrt(np.mean(errors**2)))
    order = np.sort(errors)
    frac = np.arange(1, errors.size + 1) / errors.size
    return LocalizationMetrics(rmse=rmse, errors=errors, cdf_error=order, cdf_fraction=frac)


def boxplot_stats(errors) -> tuple[float, float, float, int]:
    """(q1, median, q3, outlier count) with Tukey's 1.5*IQR fence."""
    e = np.asarray(errors, dtype=np.float64)
    q1, med, q3 = np.percentile(e, [25, 50, 75])
    iqr = q3 - q1
    outliers = int(np.sum((e < q1 - 1.5 * iqr) | (e > q3 + 1.5 * iqr)))
    return float(q1), float(med), float(q3), outliers


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """One calibration tensor plus per-position observations and truth."""

    scene: Scene
    calibration: RssTensor
    positions: np.ndarray  # (T, 2)
    observations: list[RssTensor]
    truth_radius_m: float
    clamp_to_segment: bool = False

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError("positions must be (T, 2)")
        if len(self.observations) != self.positions.shape[0]:
            raise ValueError("one observation tensor per position required")

    @property
    def n_positions(self) -> int:
        return self.positions.shape[0]

    def truth_indicators(self) -> np.ndarray:
        """(T, L) ground-truth obstruction labels."""
        return np.stack([
            self.scene.obstructed_indicators(p, self.truth_radius_m, clamp=self.clamp_to_segment)
            for p in self.positions
        ])

    def restrict_channels(self, count: int) -> "Dataset":
        return replace(
            self,
            calibration=self.calibration.select_channels(count),
            observations=[o.select_channels(count) for o in self.observations],
        )


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    sweep: str  # "gamma-th" | "channels"
    parameter: float
    variant: str
    p_md: float | None
    p_fa: float | None
    rmse: float | None = None
    q1: float | None = None
    median: float | None = None
    q3: float | None = None
    outlier_count: int | None = None


CSV_COLUMNS = ("sweep", "parameter", "variant", "p_md", "p_fa", "rmse",
               "q1", "median", "q3", "outlier_count")


def write_rows_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow(["" if getattr(r, c) is None else getattr(r, c) for c in CSV_COLUMNS])


@dataclass(frozen=True)
class SweepConfig:
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    grid_cell_m: float = 0.1
    vote_radius_m: float = 0.3
    filter_radius_m: float = 0.5
    include_single_channel: bool = True
    include_spatial_filter: bool = False


def _predicted_with_filter(dataset: Dataset, estimates: np.ndarray, threshold: float,
                           cfg: SweepConfig) -> np.ndarray:
    """Post-spatial-filter indicator table for one threshold."""
    grid = CoarseGrid(dataset.scene.area, cfg.grid_cell_m, cfg.vote_radius_m)
    rows = []
    base = DetectorConfig(threshold_db=threshold, estimator=cfg.detector.estimator,
                          single_channel=cfg.detector.single_channel,
                          variance_floor=cfg.detector.variance_floor)
    for t in range(dataset.n_positions):
        obstructed = tuple(int(i) + 1 for i in np.flatnonzero(estimates[t] > threshold))
        det = DetectionResult(obstructed=obstructed, estimates=estimates[t], config=base)
        if not obstructed:
            rows.append(np.zeros(dataset.scene.n_links, dtype=np.uint8))
            continue
        coarse = coarse_estimate(dataset.scene, det, grid, clamp=dataset.clamp_to_segment)
        kept = spatial_filter(dataset.scene, det, coarse.position, cfg.filter_radius_m,
                              clamp=dataset.clamp_to_segment)
        rows.append(kept.indicators())
    return np.stack(rows)


def sweep_threshold(dataset: Dataset, thresholds, cfg: SweepConfig = SweepConfig()) -> list[SweepRow]:
    """Missed-detection / false-alarm rates per threshold and detector
    variant (multichannel, single-channel, optionally post-filter)."""
    truth = dataset.truth_indicators()
    variants: list[tuple[str, np.ndarray]] = []
    multi = np.stack([
        link_attenuations(dataset.calibration, obs, cfg.detector) for obs in dataset.observations
    ])
    variants.append(("multichannel", multi))
    if cfg.include_single_channel:
        single_cfg = replace(cfg.detector, estimator="single")
        single = np.stack([
            link_attenuations(dataset.calibration, obs, single_cfg) for obs in dataset.observations
        ])
        variants.append(("single-channel", single))

    rows = []
    for threshold in thresholds:
        for name, estimates in variants:
            predicted = (estimates > threshold).astype(np.uint8)
            m = detection_metrics(truth, predicted)
            rows.append(SweepRow("gamma-th", float(threshold), name, m.missed_detection, m.false_alarm))
        if cfg.include_spatial_filter:
            predicted = _predicted_with_filter(dataset, multi, float(threshold), cfg)
            m = detection_metrics(truth, predicted)
            rows.append(SweepRow("gamma-th", float(threshold), "multichannel+filter",
                                 m.missed_detection, m.false_alarm))
    return rows


def sweep_channels(dataset: Dataset, channel_counts, cfg: SweepConfig = SweepConfig()) -> list[SweepRow]:
    """Detector and localizer quality versus the number of channels used.

    Channel subsets take the first C channels in plan order. The C=1 row
    is by definition the single-channel baseline (channel variance does
    not exist there), so it switches to the single-channel estimator.
    """
    truth = dataset.truth_indicators()
    rows = []
    for count in channel_counts:
        sub = dataset.restrict_channels(int(count))
        detector = cfg.detector if count > 1 else replace(cfg.detector, estimator="single", single_channel=0)
        rcfg = RwlsConfig(detector=detector, grid_cell_m=cfg.grid_cell_m,
                          vote_radius_m=cfg.vote_radius_m, filter_radius_m=cfg.filter_radius_m,
                          use_spatial_filter=cfg.include_spatial_filter,
                          clamp_to_segment=dataset.clamp_to_segment)
        predicted = np.zeros_like(truth)
        estimates = np.full((dataset.n_positions, 2), np.nan)
        for t, obs in enumerate(sub.observations):
            try:
                result = rwls_localize(sub.scene, sub.calibration, obs, rcfg)
            except NoDetectionError:
                continue
            predicted[t] = result.indicators() if cfg.include_spatial_filter else result.detection.indicators()
            estimates[t] = result.refined
        m = detection_metrics(truth, predicted)
        located = ~np.isnan(estimates[:, 0])
        if np.any(located):
            loc = localization_metrics(dataset.positions[located], estimates[located])
            q1, med, q3, outliers = boxplot_stats(loc.errors)
            rows.append(SweepRow("channels", float(count), "rwls" if cfg.include_spatial_filter else "wls",
                                 m.missed_detection, m.false_alarm, loc.rmse, q1, med, q3, outliers))
        else:
            rows.append(SweepRow("channels", float(count), "rwls" if cfg.include_spatial_filter else "wls",
                                 m.missed_detection, m.false_alarm))
    return rows
