"""Two-resolution discretization for the Hybrid A* search.

Cells are coarse along open lanes and fine within refine_radius of any
obstacle. A node key is (level, ix, iy, heading_bin, direction) with the
cell indices taken at the local resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import point_rect_signed, wrap_angle
from .world import Scenario

COARSE = 0
FINE = 1
FORWARD = 1
REVERSE = -1


@dataclass(frozen=True)
class GridConfig:
    coarse_cell: float = 1.0
    fine_cell: float = 0.25
    refine_radius: float = 3.0
    heading_bins: int = 36

    def __post_init__(self):
        if not 0 < self.fine_cell < self.coarse_cell:
            raise ValueError("need 0 < fine_cell < coarse_cell")
        if self.heading_bins < 8:
            raise ValueError("need at least 8 heading bins")
        if self.refine_radius <= 0:
            raise ValueError("refine_radius must be positive")


class GridNode(NamedTuple):
    level: int  # COARSE or FINE
    ix: int
    iy: int
    heading_bin: int
    direction: int  # FORWARD or REVERSE


class HybridGrid:
    """Immutable after construction; all queries are read-only."""

    def __init__(self, scenario: Scenario, config: GridConfig, bounds):
        self.config = config
        self.x_min, self.x_max, self.y_min, self.y_max = bounds
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("degenerate grid bounds")
        self._obstacle_rects = [ob.rect for ob in scenario.obstacles]
        self._bin_width = 2.0 * math.pi / config.heading_bins

    def in_bounds(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def fine_at(self, points: np.ndarray) -> np.ndarray:
        """Boolean (N,): point is within refine_radius of some obstacle."""
        points = np.atleast_2d(points)
        fine = np.zeros(points.shape[0], dtype=bool)
        for rect in self._obstacle_rects:
            fine |= point_rect_signed(points, rect) <= self.config.refine_radius
        return fine

    def cell_size_at(self, x: float, y: float) -> float:
        if bool(self.fine_at(np.array([[x, y]]))[0]):
            return self.config.fine_cell
        return self.config.coarse_cell

    def node_of(self, x: float, y: float, heading: float, direction: int) -> GridNode:
        """Quantize a pose; raises on out-of-bounds positions."""
        if not self.in_bounds(x, y):
            raise ValueError(f"position ({x:.2f}, {y:.2f}) outside grid bounds")
        fine = bool(self.fine_at(np.array([[x, y]]))[0])
        cell = self.config.fine_cell if fine else self.config.coarse_cell
        ix = int(math.floor((x - self.x_min) / cell))
        iy = int(math.floor((y - self.y_min) / cell))
        hbin = int(round(wrap_angle(heading) / self._bin_width)) % self.config.heading_bins
        return GridNode(FINE if fine else COARSE, ix, iy, hbin, direction)

    def node_of_state(self, state) -> GridNode:
        direction = REVERSE if state.speed < 0 else FORWARD
        return self.node_of(state.x, state.y, state.heading, direction)

    def representative(self, node: GridNode):
        """Cell-center pose of a node (inverse of node_of up to quantization)."""
        cell = self.config.fine_cell if node.level == FINE else self.config.coarse_cell
        x = self.x_min + (node.ix + 0.5) * cell
        y = self.y_min + (node.iy + 0.5) * cell
        heading = wrap_angle(node.heading_bin * self._bin_width)
        return x, y, heading


def build_grid(scenario: Scenario, config: GridConfig = None) -> HybridGrid:
    """Grid covering the scenario's lanes and obstacles plus a margin."""
    if config is None:
        config = grid_config_for(scenario)
    bounds = scenario.bounds(margin=2.0 * config.coarse_cell)
    return HybridGrid(scenario, config, bounds)


def grid_config_for(scenario: Scenario) -> GridConfig:
    """Defaults merged with the scenario's [grid] overrides."""
    kwargs = {}
    for key in ("coarse_cell", "fine_cell", "refine_radius", "heading_bins"):
        if key in scenario.grid_overrides:
            value = scenario.grid_overrides[key]
            kwargs[key] = int(value) if key == "heading_bins" else float(value)
    return GridConfig(**kwargs)
