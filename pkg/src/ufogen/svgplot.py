"""Self-contained SVG scatter plots for sample batches.

Fixed viewport [-5, 5]^2 per panel, mode centers as ring markers, samples as
dots.  Output is plain text with stable formatting, so regenerating a plot
from the same inputs yields byte-identical files.
"""

from __future__ import annotations

import numpy as np

PANEL = 420
MARGIN = 24
TITLE_BAND = 26
VIEW = (-5.0, 5.0)


def _to_px(xy: np.ndarray, x_off: float) -> np.ndarray:
    lo, hi = VIEW
    scaled = (np.asarray(xy, dtype=float) - lo) / (hi - lo) * PANEL
    out = np.empty_like(scaled)
    out[:, 0] = x_off + scaled[:, 0]
    out[:, 1] = MARGIN + TITLE_BAND + (PANEL - scaled[:, 1])  # y grows downward
    return out


def scatter_svg(panels: list[tuple[np.ndarray, str]], centers: np.ndarray | None = None,
                max_points: int = 4000) -> str:
    """Render one or more side-by-side scatter panels as an SVG document.

    ``panels`` is a list of (samples, title) pairs; ``centers`` adds ring
    markers to every panel.  Panels beyond ``max_points`` samples are thinned
    deterministically (even striding).
    """
    if not panels:
        raise ValueError("need at least one panel")
    width = MARGIN + len(panels) * (PANEL + MARGIN)
    height = 2 * MARGIN + TITLE_BAND + PANEL
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i, (samples, title) in enumerate(panels):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 2:
            raise ValueError(f"panel {i}: expected (n, 2) samples, got {samples.shape}")
        x_off = MARGIN + i * (PANEL + MARGIN)
        y_top = MARGIN + TITLE_BAND
        parts.append(
            f'<text x="{x_off + PANEL / 2:.1f}" y="{MARGIN + 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{_escape(title)}</text>')
        parts.append(
            f'<rect x="{x_off}" y="{y_top}" width="{PANEL}" height="{PANEL}" '
            f'fill="none" stroke="#888888" stroke-width="1"/>')
        if len(samples) > max_points:
            idx = np.linspace(0, len(samples) - 1, max_points).astype(int)
            samples = samples[idx]
        inside = samples[(np.abs(samples) <= VIEW[1]).all(axis=1)]
        pts = _to_px(inside, x_off)
        dots = "".join(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="1.6"/>' for x, y in pts)
        parts.append(f'<g fill="#1f77b4" fill-opacity="0.45">{dots}</g>')
        if centers is not None:
            rings = _to_px(np.asarray(centers, dtype=float), x_off)
            ring_tags = "".join(
                f'<circle cx="{x:.2f}" cy="{y:.2f}" r="5.0"/>' for x, y in rings)
            parts.append(
                f'<g fill="none" stroke="#d62728" stroke-width="1.2">{ring_tags}</g>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def write_scatter(path, panels, centers=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scatter_svg(panels, centers))
