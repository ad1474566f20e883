"""Deployment geometry: sensors, links, line coefficients, distances.

A scene is a set of perimeter sensors with known coordinates plus the
rectangular monitored area. Every unordered sensor pair forms a link, so
K sensors yield K*(K-1)/2 links. Each link carries the coefficients
(a, b, e) of its straight line a*x + b*y = e, from which all
point-to-line distances downstream are computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SceneError

SCENE_MAGIC = "#dflkit-scene v1"


@dataclass(frozen=True)
class Sensor:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class MonitoredArea:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise SceneError(f"degenerate monitored area: {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class Link:
    id: int
    i: int  # lower sensor id
    j: int  # higher sensor id


@dataclass(frozen=True)
class LineCoefficients:
    """Coefficients of a*x + b*y = e for the line through a link.

    With endpoints (x_i, y_i), (x_j, y_j): a = y_j - y_i, b = x_i - x_j,
    e = x_i*y_j - x_j*y_i. Both endpoints satisfy the equation exactly.
    """

    a: float
    b: float
    e: float


def line_through(p1, p2) -> LineCoefficients:
    x1, y1 = p1
    x2, y2 = p2
    return LineCoefficients(a=y2 - y1, b=x1 - x2, e=x1 * y2 - x2 * y1)


def point_line_distance(line: LineCoefficients, point) -> float:
    """Perpendicular distance from a point to the (infinite) link line."""
    x, y = point
    return abs(line.e - line.a * x - line.b * y) / math.hypot(line.a, line.b)


def point_segment_distance(p1, p2, point) -> float:
    """Distance from a point to the closed segment p1-p2."""
    x1, y1 = p1
    x2, y2 = p2
    x, y = point
    dx, dy = x2 - x1, y2 - y1
    t = ((x - x1) * dx + (y - y1) * dy) / (dx * dx + dy * dy)
    t = min(max(t, 0.0), 1.0)
    return math.hypot(x - (x1 + t * dx), y - (y1 + t * dy))


def ground_truth_indicator(line: LineCoefficients, target, radius: float) -> int:
    """1 when the target (radius ``radius``) obstructs the link, else 0.

    The boundary distance == radius counts as not obstructed.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    return 1 if point_line_distance(line, target) < radius else 0


class Scene:
    """Immutable deployment: safe for concurrent read by any worker."""

    def __init__(self, sensors: list[Sensor], area: MonitoredArea):
        self.sensors = tuple(sorted(sensors, key=lambda s: s.id))
        self.area = area
        self._validate()
        k = len(self.sensors)
        links = []
        for i in range(k):
            for j in range(i + 1, k):
                links.append(Link(id=len(links) + 1, i=self.sensors[i].id, j=self.sensors[j].id))
        self.links = tuple(links)
        by_id = {s.id: s for s in self.sensors}
        self._x1 = np.array([by_id[l.i].x for l in links])
        self._y1 = np.array([by_id[l.i].y for l in links])
        self._x2 = np.array([by_id[l.j].x for l in links])
        self._y2 = np.array([by_id[l.j].y for l in links])
        self._a = self._y2 - self._y1
        self._b = self._x1 - self._x2
        self._e = self._x1 * self._y2 - self._x2 * self._y1
        self._norm = np.hypot(self._a, self._b)
        if np.any(self._norm == 0.0):
            bad = links[int(np.argmin(self._norm))]
            raise SceneError(f"coincident sensors {bad.i} and {bad.j} give a zero-length link")

    def _validate(self):
        k = len(self.sensors)
        if k < 3:
            raise SceneError(f"need at least 3 sensors, got {k}")
        ids = [s.id for s in self.sensors]
        if len(set(ids)) != k:
            raise SceneError("duplicate sensor ids")
        if ids != list(range(1, k + 1)):
            raise SceneError(f"sensor ids must be contiguous from 1, got {ids}")
        for s in self.sensors:
            if not (math.isfinite(s.x) and math.isfinite(s.y)):
                raise SceneError(f"non-finite position for sensor {s.id}")

    # -- basic queries ------------------------------------------------

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def link(self, link_id: int) -> Link:
        return self.links[link_id - 1]

    def line(self, link_id: int) -> LineCoefficients:
        k = link_id - 1
        return LineCoefficients(a=self._a[k], b=self._b[k], e=self._e[k])

    def endpoints(self):
        """Per-link endpoint arrays (x1, y1, x2, y2), each shape (L,)."""
        return self._x1, self._y1, self._x2, self._y2

    def line_arrays(self):
        """Per-link (a, b, e, sqrt(a^2+b^2)) arrays, each shape (L,)."""
        return self._a, self._b, self._e, self._norm

    # -- geometry -----------------------------------------------------

    def distances(self, point, clamp: bool = False) -> np.ndarray:
        """Distance from ``point`` to every link, shape (L,).

        Distances go to the infinite line of the link; ``clamp=True``
        measures to the closed segment instead.
        """
        x, y = point
        if clamp:
            dx = self._x2 - self._x1
            dy = self._y2 - self._y1
            t = np.clip(((x - self._x1) * dx + (y - self._y1) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
            return np.hypot(x - (self._x1 + t * dx), y - (self._y1 + t * dy))
        return np.abs(self._e - self._a * x - self._b * y) / self._norm

    def obstructed_indicators(self, target, radius: float, clamp: bool = False) -> np.ndarray:
        """Ground-truth obstruction labels for every link, shape (L,) uint8."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        return (self.distances(target, clamp=clamp) < radius).astype(np.uint8)


def build_scene(sensors: list[Sensor], area: MonitoredArea) -> Scene:
    return Scene(sensors, area)


# ---------------------------------------------------------------------------
# plain-text scene config
# ---------------------------------------------------------------------------

def dump_scene(scene: Scene, path) -> None:
    lines = [SCENE_MAGIC, f"area {scene.area.x_min} {scene.area.x_max} {scene.area.y_min} {scene.area.y_max}"]
    for s in scene.sensors:
        lines.append(f"{s.id} {s.x} {s.y}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scene(path) -> Scene:
    with open(path) as fh:
        raw = fh.read().splitlines()
    area = None
    sensors = []
    saw_magic = False
    for ln, text in enumerate(raw, start=1):
        text = text.strip()
        if not text:
            continue
        if text.startswith("#"):
            if text == SCENE_MAGIC:
                saw_magic = True
            continue
        parts = text.split()
        try:
            if parts[0] == "area":
                if len(parts) != 5:
                    raise ValueError("expected: area x_min x_max y_min y_max")
                area = MonitoredArea(*(float(v) for v in parts[1:]))
            else:
                if len(parts) != 3:
                    raise ValueError("expected: id x y")
                sensors.append(Sensor(id=int(parts[0]), x=float(parts[1]), y=float(parts[2])))
        except (ValueError, SceneError) as exc:
            raise ConfigError(f"{path}:{ln}: {exc}") from exc
    if not saw_magic:
        raise ConfigError(f"{path}: missing magic line {SCENE_MAGIC!r}")
    if area is None:
        raise ConfigError(f"{path}: no 'area' header line")
    try:
        return Scene(sensors, area)
    except SceneError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


#: Approximate 16-sensor office deployment, 4.2 m x 3.6 m, numbered
#: counterclockwise. The 9-sensor outer group sits on the bottom and
#: left sides at 0.9 m spacing (the left side is exactly 4 x 0.9 m);
#: the 7-sensor inner group covers the right and top sides at 0.8 m
#: spacing. Exact as-built coordinates were never tabulated.
OFFICE_16_SENSORS = (
    (0.0, 0.0), (0.9, 0.0), (1.8, 0.0), (2.7, 0.0), (3.6, 0.0),
    (4.2, 0.6), (4.2, 1.4), (4.2, 2.2), (4.2, 3.0),
    (3.1, 3.6), (2.3, 3.6), (1.5, 3.6),
    (0.0, 3.6), (0.0, 2.7), (0.0, 1.8), (0.0, 0.9),
)


def office_16_layout() -> Scene:
    """The bundled 16-sensor example deployment (see OFFICE_16_SENSORS)."""
    area = MonitoredArea(0.0, 4.2, 0.0, 3.6)
    sensors = [Sensor(id=i + 1, x=x, y=y) for i, (x, y) in enumerate(OFFICE_16_SENSORS)]
    return Scene(sensors, area)
