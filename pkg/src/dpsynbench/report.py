"""Score normalization and the nine-axis radar chart.

Each of the nine summary scores has an ideal value (ratio scores 1 for the
pMSE construction, 0 for Wasserstein; coverage 0.9; biases 0; covariance
ratio 1; prediction RMSE the irreducible noise floor). An axis radius is
1 at the ideal and shrinks linearly to 0 at a worst-case deviation anchored
at 110% of a baseline run's deviation, so a run plotted against itself sits
just inside the innermost ring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bench import NineScores

SCENARIO1_RMSE_FLOOR = 20.0

# (field, label, ideal); RMSE ideal is substituted with the configured floor
_AXES = (
    ("train_wasserstein_ratio", "Training Wasserstein distance ratio", 0.0),
    ("train_pmse_ratio", "Training pMSE ratio", 1.0),
    ("gen_wasserstein_ratio", "Generalisation Wasserstein distance ratio", 0.0),
    ("gen_pmse_ratio", "Generalisation pMSE ratio", 1.0),
    ("gen_coverage", "Generalisation Coverage Rate", 0.9),
    ("gen_bias_pct", "Generalisation Coef. Bias (%)", 0.0),
    ("gen_prediction_rmse", "Generalisation Prediction RMSE", None),
    ("train_covariance_ratio", "Training Covariance Ratio", 1.0),
    ("train_bias_pct", "Training Coef. Bias (%)", 0.0),
)


@dataclass(frozen=True)
class RadarAxis:
    label: str
    ideal: float
    worst_deviation: float
    observed: float
    radius: float


@dataclass(frozen=True)
class RadarSpec:
    axes: tuple[RadarAxis, ...]


def normalize_scores(scores: NineScores, baseline: NineScores | None = None,
                     rmse_floor: float = SCENARIO1_RMSE_FLOOR) -> RadarSpec:
    """Map nine scores to radii in [0, 1].

    ``baseline`` anchors the worst deviation per axis at 1.1 times the
    baseline's own deviation; without one, the run anchors itself (all radii
    1 - 1/1.1, the near-center rendering).
    """
    baseline = scores if baseline is None else baseline
    axes = []
    for fieldname, label, ideal in _AXES:
        ideal = rmse_floor if ideal is None else ideal
        observed = getattr(scores, fieldname)
        if not math.isfinite(observed):
            raise ValueError(f"score {fieldname} is not finite: {observed}")
        deviation = abs(observed - ideal)
        worst = 1.1 * abs(getattr(baseline, fieldname) - ideal)
        if worst == 0.0:
            radius = 1.0 if deviation == 0.0 else 0.0
        else:
            radius = 1.0 - min(max(deviation / worst, 0.0), 1.0)
        axes.append(RadarAxis(label=label, ideal=ideal, worst_deviation=worst,
                              observed=observed, radius=radius))
    return RadarSpec(tuple(axes))


_SIZE = 760
_CENTER = _SIZE / 2.0
_RADIUS = 260.0


def _point(axis_index: int, radius: float) -> tuple[float, float]:
    angle = math.radians(-90.0 + axis_index * 40.0)
    return (_CENTER + radius * _RADIUS * math.cos(angle),
            _CENTER + radius * _RADIUS * math.sin(angle))


def render_radar_svg(spec: RadarSpec) -> str:
    """Standalone SVG text for a nine-axis radar; byte-deterministic."""
    if len(spec.axes) != 9:
        raise ValueError(f"radar needs exactly 9 axes, got {len(spec.axes)}")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE}" height="{_SIZE}" '
        f'viewBox="0 0 {_SIZE} {_SIZE}">',
        f'<rect width="{_SIZE}" height="{_SIZE}" fill="white"/>',
    ]
    for ring in (0.25, 0.5, 0.75, 1.0):
        pts = " ".join("%.3f,%.3f" % _point(i, ring) for i in range(9))
        parts.append(f'<polygon points="{pts}" fill="none" stroke="#cccccc" '
                     'stroke-width="1"/>')
    for i in range(9):
        x, y = _point(i, 1.0)
        parts.append(f'<line x1="{_CENTER}" y1="{_CENTER}" x2="{x:.3f}" y2="{y:.3f}" '
                     'stroke="#999999" stroke-width="1"/>')
    poly = " ".join("%.3f,%.3f" % _point(i, axis.radius)
                    for i, axis in enumerate(spec.axes))
    parts.append(f'<polygon points="{poly}" fill="#e6b800" fill-opacity="0.45" '
                 'stroke="#b38f00" stroke-width="2"/>')
    for i, axis in enumerate(spec.axes):
        x, y = _point(i, 1.13)
        anchor = "middle"
        if x < _CENTER - 40:
            anchor = "end"
        elif x > _CENTER + 40:
            anchor = "start"
        parts.append(f'<text x="{x:.3f}" y="{y:.3f}" font-family="sans-serif" '
                     f'font-size="13" text-anchor="{anchor}">{axis.label}</text>')
        parts.append(f'<text x="{x:.3f}" y="{y + 15.0:.3f}" font-family="sans-serif" '
                     f'font-size="11" fill="#555555" text-anchor="{anchor}">'
                     f'{axis.observed:.4g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_radar(spec: RadarSpec, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_radar_svg(spec))
