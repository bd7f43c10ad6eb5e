"""Synthetic mobility: Manhattan-grid random waypoint, plus CSV trace replay.

Vehicles travel along grid edges at a constant per-vehicle speed, picking a
fresh random destination intersection on arrival. Routes are L-shaped
(horizontal leg first), so intersection traversal counts are well-defined
for RSU placement.
"""

from __future__ import annotations

import csv
import math
import random
from bisect import bisect_right
from dataclasses import dataclass


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    cell_m: float

    def intersection_xy(self, r: int, c: int) -> tuple[float, float]:
        return c * self.cell_m, r * self.cell_m

    @property
    def width_m(self) -> float:
        return self.cols * self.cell_m

    @property
    def height_m(self) -> float:
        return self.rows * self.cell_m

    def all_intersections(self) -> list[tuple[int, int]]:
        return [(r, c) for r in range(self.rows + 1) for c in range(self.cols + 1)]


def l_route(grid: GridSpec, src: tuple[int, int], dst: tuple[int, int]) -> list[tuple[int, int]]:
    """Intersections visited going from src to dst, horizontal leg first."""
    r0, c0 = src
    r1, c1 = dst
    step_c = 1 if c1 >= c0 else -1
    step_r = 1 if r1 >= r0 else -1
    path = [(r0, c) for c in range(c0, c1 + step_c, step_c)]
    path += [(r, c1) for r in range(r0 + step_r, r1 + step_r, step_r)]
    return path


def rank_intersections(
    grid: GridSpec, rng: random.Random, n_sample_trips: int = 600
) -> list[tuple[int, int]]:
    """Intersections ordered by expected traversal count, busiest first.

    Estimated by sampling random trips; ties broken by (row, col) so the
    ordering is total and deterministic for a given rng state.
    """
    counts: dict[tuple[int, int], int] = {k: 0 for k in grid.all_intersections()}
    nodes = grid.all_intersections()
    for _ in range(n_sample_trips):
        src = rng.choice(nodes)
        dst = rng.choice(nodes)
        if src == dst:
            continue
        for node in l_route(grid, src, dst):
            counts[node] += 1
    return sorted(counts, key=lambda k: (-counts[k], k))


class GridMotion:
    """One vehicle's random-waypoint walk on the grid.

    ``advance(dt)`` moves the vehicle along its current polyline; a private
    rng keeps destination choices independent of other event ordering.
    """

    def __init__(self, grid: GridSpec, rng: random.Random, speed_range=(10.0, 15.0)):
        self.grid = grid
        self.rng = rng
        self.speed = rng.uniform(*speed_range)
        start = rng.choice(grid.all_intersections())
        self._node = start
        self.x, self.y = grid.intersection_xy(*start)
        self._waypoints: list[tuple[float, float]] = []
        self._pick_destination()

    def _pick_destination(self) -> None:
        nodes = self.grid.all_intersections()
        dst = self._node
        while dst == self._node:
            dst = self.rng.choice(nodes)
        path = l_route(self.grid, self._node, dst)
        self._waypoints = [self.grid.intersection_xy(r, c) for r, c in path[1:]]
        self._node = dst

    def advance(self, dt_s: float) -> None:
        budget = self.speed * dt_s
        while budget > 0:
            if not self._waypoints:
                self._pick_destination()
            tx, ty = self._waypoints[0]
            dist = math.hypot(tx - self.x, ty - self.y)
            if dist <= budget:
                self.x, self.y = tx, ty
                self._waypoints.pop(0)
                budget -= dist
            else:
                frac = budget / dist
                self.x += (tx - self.x) * frac
                self.y += (ty - self.y) * frac
                budget = 0.0

    def position(self) -> tuple[float, float]:
        return self.x, self.y


class TraceMotion:
    """Replay of one vehicle's (time, x, y) samples with linear interpolation."""

    def __init__(self, samples: list[tuple[float, float, float]]):
        if not samples:
            raise ValueError("empty trace")
        self.samples = sorted(samples)
        self.times = [t for t, _, _ in self.samples]
        self.enter_s = self.times[0]
        self.leave_s = self.times[-1]
        self.x, self.y = self.samples[0][1], self.samples[0][2]
        self._clock = self.enter_s

    def advance(self, dt_s: float) -> None:
        self._clock += dt_s
        t = min(max(self._clock, self.enter_s), self.leave_s)
        i = bisect_right(self.times, t)
        if i == 0:
            _, self.x, self.y = self.samples[0]
            return
        if i >= len(self.samples):
            _, self.x, self.y = self.samples[-1]
            return
        t0, x0, y0 = self.samples[i - 1]
        t1, x1, y1 = self.samples[i]
        frac = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        self.x = x0 + (x1 - x0) * frac
        self.y = y0 + (y1 - y0) * frac

    def position(self) -> tuple[float, float]:
        return self.x, self.y


def load_trace(path: str) -> dict[str, list[tuple[float, float, float]]]:
    """Read a mobility trace CSV with columns time, vehicle_id, x, y."""
    out: dict[str, list[tuple[float, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            if row[0].strip().lower() in ("time", "t"):
                continue  # header
            t, vid, x, y = row[0], row[1], row[2], row[3]
            out.setdefault(vid, []).append((float(t), float(x), float(y)))
    return out
