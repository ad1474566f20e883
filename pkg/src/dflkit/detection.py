"""Obstructed-link detection from multichannel RSS.

The attenuation of a link's LOS path is estimated by comparing a
target-absent (calibration) tensor against a target-present
(observation) tensor. The workhorse is the variance estimator: the
per-channel power of a multipath link fluctuates with the random
channel phases, and blocking the LOS path shrinks exactly the variance
terms that involve the LOS amplitude, so

    attenuation = 10*log10( var_channels(calibration) / var_channels(observation) )

recovers the LOS attenuation and is exact in expectation for a
two-path link. The mean estimator (same ratio of channel means) is
biased whenever multipath is present, and the single-channel estimator
(plain RSS drop on one channel) is the baseline detector that multipath
defeats. A link is declared obstructed when its estimate strictly
exceeds the configured threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rss import RssTensor
from .scene import Scene

ESTIMATORS = ("variance", "mean", "single")

#: variances below this (mW^2) are clamped so noise-free synthetic data
#: cannot drive the log ratio to infinity
DEFAULT_VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class DetectorConfig:
    threshold_db: float = 4.0
    estimator: str = "variance"
    single_channel: int = 0  # column index used by the single-channel estimator
    variance_floor: float = DEFAULT_VARIANCE_FLOOR

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.variance_floor <= 0:
            raise ValueError("variance_floor must be positive")


@dataclass(frozen=True)
class AttenuationEstimate:
    link_id: int
    attenuation_db: float
    estimator: str


@dataclass
class DetectionResult:
    """Per-link attenuation estimates plus the set that beat the threshold."""

    obstructed: tuple[int, ...]  # link ids, ascending
    estimates: np.ndarray  # (L,) dB
    config: DetectorConfig

    def indicators(self) -> np.ndarray:
        """0/1 per link, shape (L,)."""
        out = np.zeros(self.estimates.size, dtype=np.uint8)
        out[[l - 1 for l in self.obstructed]] = 1
        return out

    def estimate_for(self, link_id: int) -> AttenuationEstimate:
        return AttenuationEstimate(link_id, float(self.estimates[link_id - 1]), self.config.estimator)


def _check_channel_powers(values, name):
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite power values")
    return arr


def estimate_attenuation_variance(calibration_mw, observation_mw,
                                  variance_floor: float = DEFAULT_VARIANCE_FLOOR) -> float:
    """Variance-ratio attenuation estimate (dB) from per-channel powers.

    Inputs are linear power (mW), one value per channel. Population
    (1/C) variances are used; the normalization cancels in the ratio.
    Positive output means the observation lost LOS power.
    """
    cal = _check_channel_powers(calibration_mw, "calibration")
    obs = _check_channel_powers(observation_mw, "observation")
    if cal.size < 2 or obs.size < 2:
        raise ValueError("variance estimator needs at least 2 channels")
    v_cal = max(cal.var(), variance_floor)
    v_obs = max(obs.var(), variance_floor)
    return float(10.0 * np.log10(v_cal / v_obs))


def estimate_attenuation_mean(calibration_mw, observation_mw) -> float:
    """Mean-ratio attenuation estimate (dB); biased when multipath exists."""
    cal = _check_channel_powers(calibration_mw, "calibration")
    obs = _check_channel_powers(observation_mw, "observation")
    if cal.size < 2 or obs.size < 2:
        raise ValueError("mean estimator needs at least 2 channels")
    m_cal, m_obs = cal.mean(), obs.mean()
    if m_cal <= 0 or m_obs <= 0:
        raise ValueError("mean power must be positive")
    return float(10.0 * np.log10(m_cal / m_obs))


def estimate_attenuation_single_channel(calibration_mw: float, observation_mw: float) -> float:
    """Naive one-channel RSS drop (dB); negative when RSS increased."""
    if calibration_mw <= 0 or observation_mw <= 0:
        raise ValueError("power must be positive")
    return float(10.0 * np.log10(calibration_mw / observation_mw))


def link_attenuations(calibration: RssTensor, observation: RssTensor, cfg: DetectorConfig) -> np.ndarray:
    """Vectorized per-link attenuation estimates, shape (L,).

    Tensors are dequantized to mW and sample-averaged per channel before
    the estimator runs across channels.
    """
    if calibration.codes.shape[:2] != observation.codes.shape[:2]:
        raise ValueError(
            f"calibration {calibration.codes.shape[:2]} and observation "
            f"{observation.codes.shape[:2]} disagree in (links, channels)"
        )
    if calibration.channels != observation.channels:
        raise ValueError("calibration and observation use different channel sets")
    cal = calibration.mean_power_mw()
    obs = observation.mean_power_mw()
    if cfg.estimator == "variance":
        if cal.shape[1] < 2:
            raise ValueError("variance estimator needs at least 2 channels")
        v_cal = np.maximum(cal.var(axis=1), cfg.variance_floor)
        v_obs = np.maximum(obs.var(axis=1), cfg.variance_floor)
        return 10.0 * np.log10(v_cal / v_obs)
    if cfg.estimator == "mean":
        if cal.shape[1] < 2:
            raise ValueError("mean estimator needs at least 2 channels")
        return 10.0 * np.log10(cal.mean(axis=1) / obs.mean(axis=1))
    col = cfg.single_channel
    if not (0 <= col < cal.shape[1]):
        raise ValueError(f"single-channel index {col} out of range for {cal.shape[1]} channels")
    return 10.0 * np.log10(cal[:, col] / obs[:, col])


def detect_links(scene: Scene, calibration: RssTensor, observation: RssTensor,
                 cfg: DetectorConfig) -> DetectionResult:
    """Classify every link; obstructed means estimate > threshold (strict)."""
    if calibration.n_links != scene.n_links:
        raise ValueError(f"tensor has {calibration.n_links} links, scene has {scene.n_links}")
    estimates = link_attenuations(calibration, observation, cfg)
    obstructed = tuple(int(i) + 1 for i in np.flatnonzero(estimates > cfg.threshold_db))
    return DetectionResult(obstructed=obstructed, estimates=estimates, config=cfg)
