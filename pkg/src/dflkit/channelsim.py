"""Narrowband multipath RSS simulator.

Each link's received signal is the phasor sum of P propagation paths,
path 0 being the line of sight (LOS). Path amplitudes are frozen per
link; phases are drawn independently per (path, channel), which is what
makes the per-channel power fluctuate. A target near a link attenuates
only the LOS amplitude, by a monotone-decreasing function of the
target-to-link distance, so sweeping a target over the scene produces
the ground truth every detector and localizer experiment runs against.

Closed-form mean/variance of the phasor-sum power (with and without LOS
attenuation) live here too, alongside a Monte-Carlo estimator of the
same moments used to verify them.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import _kernels
from .errors import ConfigError
from .rss import QuantizationMap, RssTensor, mw_to_dbm
from .scene import Scene

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# channel plan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelPlan:
    """Radio channels available for measurement.

    ``numbers`` are the protocol channel numbers carried in frames
    (11..26 for the 2.4 GHz band); ``frequencies_hz`` the center
    frequencies. The narrowband assumption (band span much smaller than
    the carrier) is recorded by :meth:`narrowband_ratio`.
    """

    numbers: tuple[int, ...]
    frequencies_hz: tuple[float, ...]

    def __post_init__(self):
        if len(self.numbers) < 1:
            raise ConfigError("channel plan needs at least one channel")
        if len(self.numbers) != len(self.frequencies_hz):
            raise ConfigError("channel numbers and frequencies differ in length")
        freqs = self.frequencies_hz
        if any(f2 <= f1 for f1, f2 in zip(freqs, freqs[1:])):
            raise ConfigError("channel frequencies must be strictly increasing")

    @property
    def count(self) -> int:
        return len(self.numbers)

    def narrowband_ratio(self) -> float:
        f = self.frequencies_hz
        return (max(f) - min(f)) / min(f)

    def first(self, count: int) -> "ChannelPlan":
        return ChannelPlan(self.numbers[:count], self.frequencies_hz[:count])

    @classmethod
    def ieee802154_2_4ghz(cls, count: int = 16) -> "ChannelPlan":
        """Channels 11..26 at 2.405..2.480 GHz, 5 MHz apart."""
        if not (1 <= count <= 16):
            raise ConfigError("the 2.4 GHz band has 16 channels (11..26)")
        numbers = tuple(range(11, 11 + count))
        freqs = tuple(2.405e9 + 5e6 * (n - 11) for n in numbers)
        return cls(numbers, freqs)


# ---------------------------------------------------------------------------
# per-link multipath profile
# ---------------------------------------------------------------------------

@dataclass
class MultipathProfile:
    """Path amplitudes plus per-channel random phases for one link.

    Amplitudes are identical across channels (narrowband); index 0 is
    the LOS path. ``phases`` has shape (P, C).
    """

    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.float64)
        self.phases = np.asarray(self.phases, dtype=np.float64)
        if self.amplitudes.ndim != 1:
            raise ValueError("amplitudes must be 1-D")
        if np.any(self.amplitudes < 0):
            raise ValueError("amplitudes must be nonnegative")
        if self.phases.ndim != 2 or self.phases.shape[0] != self.amplitudes.size:
            raise ValueError("phases must have shape (P, C)")
        if np.any(self.phases < 0) or np.any(self.phases >= TWO_PI):
            raise ValueError("phases must lie in [0, 2*pi)")

    @property
    def path_count(self) -> int:
        return self.amplitudes.size

    @property
    def n_channels(self) -> int:
        return self.phases.shape[1]

    @classmethod
    def random(cls, rng, path_count, n_channels, los_amplitude=1.0, multipath_scale=0.35):
        amps = np.empty(path_count)
        amps[0] = los_amplitude
        if path_count > 1:
            amps[1:] = rng.rayleigh(multipath_scale, path_count - 1)
        phases = rng.uniform(0.0, TWO_PI, (path_count, n_channels))
        return cls(amps, phases)


# ---------------------------------------------------------------------------
# obstruction model
# ---------------------------------------------------------------------------

def _linear_profile(d, radius, max_db):
    return max_db * (1.0 - d / radius)


_PROFILES = {"linear": _linear_profile}


@dataclass(frozen=True)
class ObstructionModel:
    """LOS attenuation as a function of target-to-link distance.

    Positive and monotone decreasing on [0, radius), zero beyond. The
    default linear ramp peaks at ``max_attenuation_db`` when the target
    sits on the line. ``per_link_max_db`` overrides the peak per link
    for heterogeneous environments.
    """

    radius_m: float = 0.4
    max_attenuation_db: float = 7.0
    profile: str = "linear"
    per_link_max_db: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.radius_m <= 0:
            raise ConfigError("obstruction radius must be positive")
        if self.profile not in _PROFILES:
            raise ConfigError(f"unknown obstruction profile {self.profile!r}")

    def attenuation_db(self, distances, link_indices=None) -> np.ndarray:
        """Attenuation per distance; zero where distance >= radius."""
        d = np.asarray(distances, dtype=np.float64)
        if self.per_link_max_db is not None:
            peaks = np.asarray(self.per_link_max_db, dtype=np.float64)
            if link_indices is not None:
                peaks = peaks[link_indices]
        else:
            peaks = self.max_attenuation_db
        shape_fn = _PROFILES[self.profile]
        gamma = np.where(d < self.radius_m, shape_fn(d, self.radius_m, peaks), 0.0)
        return np.maximum(gamma, 0.0)


# ---------------------------------------------------------------------------
# simulation config
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """Declarative knobs of the simulator.

    Non-LOS amplitudes are drawn once per link from a Rayleigh rule with
    scale ``multipath_scale`` and stay frozen across channels and across
    target-absent/present runs; only the LOS term reacts to the target.

    Two optional effects make target-present runs less pristine:
    ``phase_drift_rad`` jitters every path phase (the environment moved
    between the calibration pass and the observation), and
    ``confounder_rate`` lets the target block the strongest non-LOS path
    of that fraction of unobstructed links (by
    ``confounder_attenuation_db``), reproducing the false alarms a
    blocked reflection causes.
    """

    path_count: int = 5
    los_amplitude: float = 1.0
    multipath_scale: float = 0.2
    noise_db: float = 0.0
    sample_count: int = 100
    frequency_scaling: bool = False
    phase_drift_rad: float = 0.0
    confounder_rate: float = 0.0
    confounder_attenuation_db: float = 7.0
    quantization: QuantizationMap = field(default_factory=QuantizationMap)

    def __post_init__(self):
        if self.path_count < 1:
            raise ConfigError("path_count must be >= 1")
        if self.sample_count < 1:
            raise ConfigError("sample_count must be >= 1")
        if self.noise_db < 0 or self.phase_drift_rad < 0 or not (0.0 <= self.confounder_rate <= 1.0):
            raise ConfigError("invalid noise/drift/confounder settings")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "quantization"}
        d["quantization"] = {"offset_dbm": self.quantization.offset_dbm, "step_db": self.quantization.step_db}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        quant = d.pop("quantization", None)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown sim config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if quant is not None:
            cfg = replace(cfg, quantization=QuantizationMap(**quant))
        return cfg

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# single-link operations
# ---------------------------------------------------------------------------

def received_power(profile: MultipathProfile, channel: int, los_attenuation_db: float = 0.0) -> float:
    """Linear received power (mW) of one link on one channel.

    |g*A_0*e^{j t_0} + sum_{i>=1} A_i e^{j t_i}|^2 with
    g = 10^(-attenuation/20); zero attenuation is the target-absent
    power.
    """
    gain = 10.0 ** (-los_attenuation_db / 20.0)
    phases = profile.phases[:, channel][None, :]
    return float(_kernels.phasor_powers(profile.amplitudes, phases, gain)[0])


def path_loss_amplitude(frequency_hz: float, reference_amplitude: float, reference_hz: float) -> float:
    """Amplitude rescaled with carrier frequency (power falls as 1/f^2).

    Only used when the narrowband equal-amplitude simplification is
    disabled; at ``frequency_hz == reference_hz`` this is the identity.
    """
    if frequency_hz <= 0 or reference_hz <= 0:
        raise ValueError("frequencies must be positive")
    return reference_amplitude * reference_hz / frequency_hz


def single_channel_power_delta(profile: MultipathProfile, channel: int, attenuation_db: float):
    """Power drop P_absent - P_present on one channel, plus the
    aggregate multipath phasor.

    Returns (delta_mw, (magnitude, angle)) where the phasor is
    sum_{i>=1} A_i e^{j (t_i - t_0)}. The drop is negative (obstruction
    *raises* RSS) exactly when the LOS amplitude is below
    -2*magnitude*cos(angle) / (1 + 10^(-attenuation/20)).
    """
    if profile.path_count < 2:
        raise ValueError("single-channel delta needs at least 2 paths")
    p_absent = received_power(profile, channel, 0.0)
    p_present = received_power(profile, channel, attenuation_db)
    rel = profile.phases[1:, channel] - profile.phases[0, channel]
    z = np.sum(profile.amplitudes[1:] * np.exp(1j * rel))
    angle = float(np.angle(z)) % TWO_PI
    return p_absent - p_present, (float(np.abs(z)), angle)


# ---------------------------------------------------------------------------
# closed-form moments and their Monte-Carlo check
# ---------------------------------------------------------------------------

def power_mean_closed_form(amplitudes, attenuation_db: float = 0.0) -> float:
    """E[power] over iid uniform phases: attenuated LOS power plus the
    power sum of the other paths."""
    a = np.asarray(amplitudes, dtype=np.float64)
    g2 = 10.0 ** (-attenuation_db / 10.0)
    return float(g2 * a[0] ** 2 + np.sum(a[1:] ** 2))


def power_variance_closed_form(amplitudes, attenuation_db: float = 0.0) -> float:
    """var[power] over iid uniform phases.

    2*g^2*A_0^2*S + 2*sum_{1<=i<j} A_i^2 A_j^2 with S the non-LOS power
    sum; the pair sum is computed as (S^2 - sum A_i^4)/2.
    """
    a = np.asarray(amplitudes, dtype=np.float64)
    g2 = 10.0 ** (-attenuation_db / 10.0)
    s = np.sum(a[1:] ** 2)
    q = np.sum(a[1:] ** 4)
    return float(2.0 * g2 * a[0] ** 2 * s + (s * s - q))


def mc_power_moments(amplitudes, attenuation_db: float, draws: int, seed) -> tuple[float, float]:
    """Monte-Carlo (mean, variance) of received power over ``draws``
    iid uniform phase vectors."""
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, TWO_PI, (draws, amplitudes.size))
    gain = 10.0 ** (-attenuation_db / 20.0)
    powers = _kernels.phasor_powers(amplitudes, phases, gain)
    return float(powers.mean()), float(powers.var())


# ---------------------------------------------------------------------------
# whole-scene simulation
# ---------------------------------------------------------------------------

def _target_key(target) -> tuple[int, int]:
    if target is None:
        return (0, 0)
    digest = hashlib.blake2b(struct.pack("<dd", float(target[0]), float(target[1])), digest_size=8).digest()
    value = int.from_bytes(digest, "little")
    return (value & 0xFFFFFFFF, value >> 32)


def _stream(seed, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def draw_link_profiles(scene: Scene, plan: ChannelPlan, sim: SimConfig, seed):
    """Frozen per-link amplitudes (L, P) and phases (L, P, C).

    Uses its own substream of ``seed`` so target-absent and
    target-present simulations of the same experiment share identical
    profiles.
    """
    rng = _stream(seed, 0)
    n_links, p = scene.n_links, sim.path_count
    amps = np.empty((n_links, p))
    amps[:, 0] = sim.los_amplitude
    if p > 1:
        amps[:, 1:] = rng.rayleigh(sim.multipath_scale, (n_links, p - 1))
    phases = rng.uniform(0.0, TWO_PI, (n_links, p, plan.count))
    return amps, phases


def simulate_scene(scene: Scene, plan: ChannelPlan, obstruction: ObstructionModel,
                   target, sim: SimConfig, seed) -> RssTensor:
    """Synthesize the quantized RSS tensor of one measurement run.

    ``target=None`` produces a calibration tensor; a coordinate pair
    applies the obstruction model's LOS attenuation to every link
    within reach. Identical (seed, config, target) always reproduce the
    tensor bit for bit.
    """
    amps, phases = draw_link_profiles(scene, plan, sim, seed)
    tkey = _target_key(target)

    if target is None:
        gains = np.ones(scene.n_links)
    else:
        if not scene.area.contains(*target):
            warnings.warn(f"target {tuple(target)} outside the monitored area", stacklevel=2)
        attenuation = obstruction.attenuation_db(scene.distances(target))
        gains = 10.0 ** (-attenuation / 20.0)
        if sim.phase_drift_rad > 0.0:
            drift_rng = _stream(seed, 3, *tkey)
            phases = (phases + drift_rng.normal(0.0, sim.phase_drift_rad, phases.shape)) % TWO_PI
        if sim.confounder_rate > 0.0 and sim.path_count > 1:
            conf_rng = _stream(seed, 2, *tkey)
            hit = (attenuation <= 0.0) & (conf_rng.random(scene.n_links) < sim.confounder_rate)
            if np.any(hit):
                amps = amps.copy()
                rows = np.flatnonzero(hit)
                strongest = 1 + np.argmax(amps[rows, 1:], axis=1)
                amps[rows, strongest] *= 10.0 ** (-sim.confounder_attenuation_db / 20.0)

    powers = _kernels.link_channel_powers(amps, phases, gains)  # (L, C) mW
    if sim.frequency_scaling:
        freqs = np.asarray(plan.frequencies_hz)
        powers = powers * (freqs[0] / freqs) ** 2

    dbm = mw_to_dbm(powers)
    if sim.noise_db > 0.0:
        noise_rng = _stream(seed, 1, *tkey)
        samples = dbm[:, :, None] + noise_rng.normal(0.0, sim.noise_db, (*dbm.shape, sim.sample_count))
    else:
        samples = np.repeat(dbm[:, :, None], sim.sample_count, axis=2)
    return RssTensor(codes=sim.quantization.quantize(samples),
                     quantization=sim.quantization, channels=plan.numbers)
