"""Static SVG rendering of scenarios and executed episodes.

Hand-rolled SVG strings: lanes as corridor bands, obstacles as filled
boxes, the planned reference dashed, the executed trace solid and
colored by phase, the goal as a circle. No plotting dependency; the
files open in any browser.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .vehicle import footprint
from .world import EGO_DIRECTION, Scenario

_PHASE_COLORS = {
    "Nominal": "#1f77b4",
    "DeadlockDetected": "#d62728",
    "Replanned": "#ff7f0e",
    "Recovering": "#ff7f0e",
    "Recovered": "#2ca02c",
    "Failed": "#7f0000",
}


def _fmt(value: float) -> str:
    return f"{value:.2f}"


class _Canvas:
    """Maps world coordinates into a y-flipped SVG viewport."""

    def __init__(self, bounds, width=900, pad=1.0):
        x0, x1, y0, y1 = bounds
        x0, x1 = x0 - pad, x1 + pad
        y0, y1 = y0 - pad, y1 + pad
        self.scale = width / max(x1 - x0, 1e-9)
        self.width = width
        self.height = max(int((y1 - y0) * self.scale), 40)
        self.x0, self.y1 = x0, y1
        self.parts = []

    def x(self, wx: float) -> float:
        return (wx - self.x0) * self.scale

    def y(self, wy: float) -> float:
        return (self.y1 - wy) * self.scale

    def polyline(self, pts: np.ndarray, stroke, width=1.5, dash=None, opacity=1.0):
        if pts.shape[0] < 2:
            return
        coords = " ".join(f"{_fmt(self.x(p[0]))},{_fmt(self.y(p[1]))}" for p in pts)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}"'
            f' stroke-width="{width}" stroke-opacity="{opacity}"{dash_attr}/>'
        )

    def polygon(self, pts: np.ndarray, fill, stroke="none", opacity=1.0):
        coords = " ".join(f"{_fmt(self.x(p[0]))},{_fmt(self.y(p[1]))}" for p in pts)
        self.parts.append(
            f'<polygon points="{coords}" fill="{fill}" fill-opacity="{opacity}"'
            f' stroke="{stroke}"/>'
        )

    def circle(self, cx, cy, r, stroke, fill="none", dash=None):
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<circle cx="{_fmt(self.x(cx))}" cy="{_fmt(self.y(cy))}"'
            f' r="{_fmt(r * self.scale)}" fill="{fill}" stroke="{stroke}"'
            f' stroke-width="1.5"{dash_attr}/>'
        )

    def text(self, wx, wy, s, size=12, fill="#333"):
        self.parts.append(
            f'<text x="{_fmt(self.x(wx))}" y="{_fmt(self.y(wy))}"'
            f' font-size="{size}" fill="{fill}"'
            f' font-family="sans-serif">{s}</text>'
        )

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}"'
            f' height="{self.height}"'
            f' viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect width="100%" height="100%" fill="#fafafa"/>\n'
            f"{body}\n</svg>\n"
        )


def _lane_band(lane) -> np.ndarray:
    """Corridor outline polygon from the centerline and width."""
    line = lane.centerline
    d = np.diff(line, axis=0)
    # per-vertex normal, averaging adjoining segment normals
    seg_n = np.stack([-d[:, 1], d[:, 0]], axis=1)
    seg_n /= np.maximum(np.linalg.norm(seg_n, axis=1, keepdims=True), 1e-12)
    vert_n = np.vstack([seg_n[:1], 0.5 * (seg_n[:-1] + seg_n[1:]), seg_n[-1:]])
    vert_n /= np.maximum(np.linalg.norm(vert_n, axis=1, keepdims=True), 1e-12)
    half = 0.5 * lane.width
    return np.vstack([line + half * vert_n, (line - half * vert_n)[::-1]])


_REFERENCE_COLORS = ("#7b5ea7", "#d7a514", "#b8651f")  # initial, then replans


def plot_episode(
    scenario: Scenario,
    trajectory=None,
    phases: Optional[list] = None,
    references: Optional[list] = None,
    title: str = "",
) -> str:
    """Scenario (and optionally an executed episode) as an SVG string."""
    canvas = _Canvas(scenario.bounds(margin=2.0))

    for lane in scenario.lanes:
        fill = "#d8e4ee" if lane.direction == EGO_DIRECTION else "#e8e0d4"
        canvas.polygon(_lane_band(lane), fill=fill, opacity=0.8)
        canvas.polyline(lane.centerline, "#9fb2c4", width=1.0, dash="6,6", opacity=0.8)

    if scenario.intersection is not None:
        z = scenario.intersection
        box = np.array(
            [
                [z.x_min, z.y_min],
                [z.x_max, z.y_min],
                [z.x_max, z.y_max],
                [z.x_min, z.y_max],
            ]
        )
        canvas.polygon(box, fill="#f2e2b8", opacity=0.45)
        if z.stop_line is not None:
            sx, sy = z.stop_line
            canvas.circle(sx, sy, 0.25, stroke="#b8860b", fill="#b8860b")

    for ob in scenario.obstacles:
        canvas.polygon(ob.rect.corners(), fill="#8a4b4b", stroke="#5a2e2e", opacity=0.9)

    goal = scenario.goal
    canvas.circle(goal.center[0], goal.center[1], goal.radius, stroke="#2ca02c", dash="4,4")

    for i, ref in enumerate(references or []):
        ref = np.asarray(ref)
        if len(ref) >= 2:
            color = _REFERENCE_COLORS[min(i, len(_REFERENCE_COLORS) - 1)]
            canvas.polyline(ref[:, :2], color, width=1.4, dash="7,5")

    if trajectory is not None:
        arr = trajectory.as_array()
        if phases is None:
            phases = ["Nominal"] * arr.shape[0]
        # split the trace into runs of constant phase so each keeps its color
        start = 0
        for i in range(1, arr.shape[0] + 1):
            if i == arr.shape[0] or phases[i] != phases[start]:
                color = _PHASE_COLORS.get(phases[start], "#1f77b4")
                canvas.polyline(
                    arr[max(start - 1, 0) : i, :2], color, width=2.2
                )
                start = i
        # footprint at start and end
        for idx, color in ((0, "#1f77b4"), (len(trajectory.states) - 1, "#2ca02c")):
            rect = footprint(trajectory.states[idx], scenario.vehicle_params)
            canvas.polygon(rect.corners(), fill="none", stroke=color)

    if title:
        bx0, _, _, by1 = scenario.bounds(margin=2.0)
        canvas.text(bx0 + 0.5, by1 + 0.4, title, size=14)
    return canvas.render()


def save_episode_svg(path, scenario, result) -> None:
    """Render a finished episode (EpisodeResult) to an SVG file."""
    title = (
        f"{result.scenario_name} / {result.planner_name}"
        f" seed {result.seed}: {result.outcome}"
    )
    svg = plot_episode(
        scenario,
        trajectory=result.trajectory,
        phases=result.phases,
        references=result.references,
        title=title,
    )
    with open(path, "w") as fh:
        fh.write(svg)
