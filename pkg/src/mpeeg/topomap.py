"""Scalp topographic maps rendered as standalone SVG.

Electrode positions are a flat 2-D projection of the 10-20/10-10 layout:
the circumferential ring sits at radius 0.8 of the unit head disk, midline
electrodes at 0.2 steps, and interior electrodes interpolate between their
row's midline and ring endpoints.  This is a visualization layout, not a
measurement-grade projection.

Interpolation is inverse-distance weighting (power 2) over a square grid
clipped to the unit disk.  Output bytes are deterministic for fixed inputs.
"""
from __future__ import annotations

import math

import numpy as np

_RING_RADIUS = 0.8

#: azimuth (degrees clockwise from nasion) of the circumferential ring
_RING_AZIMUTHS = {
    "FPZ": 0, "FP2": 18, "AF8": 36, "F8": 54, "FT8": 72, "T8": 90,
    "TP8": 108, "P8": 126, "PO8": 144, "O2": 162, "OZ": 180,
    "O1": -162, "PO7": -144, "P7": -126, "TP7": -108, "T7": -90,
    "FT7": -72, "F7": -54, "AF7": -36, "FP1": -18,
}

#: midline electrodes: name -> signed radius (front positive)
_MIDLINE = {
    "FPZ": 0.8, "AFZ": 0.6, "FZ": 0.4, "FCZ": 0.2, "CZ": 0.0,
    "CPZ": -0.2, "PZ": -0.4, "POZ": -0.6, "OZ": -0.8,
}

#: interior rows: (midline name, left ring name, members left of midline)
_ROWS = {
    "AF": ("AFZ", "AF7", (("AF3", 0.5),)),
    "F": ("FZ", "F7", (("F1", 0.25), ("F3", 0.5), ("F5", 0.75))),
    "FC": ("FCZ", "FT7", (("FC1", 0.25), ("FC3", 0.5), ("FC5", 0.75))),
    "C": ("CZ", "T7", (("C1", 0.25), ("C3", 0.5), ("C5", 0.75))),
    "CP": ("CPZ", "TP7", (("CP1", 0.25), ("CP3", 0.5), ("CP5", 0.75))),
    "P": ("PZ", "P7", (("P1", 0.25), ("P3", 0.5), ("P5", 0.75))),
    "PO": ("POZ", "PO7", (("PO3", 1 / 3), ("PO5", 2 / 3))),
}


def _build_positions() -> dict[str, tuple[float, float]]:
    pos = {}
    for name, az in _RING_AZIMUTHS.items():
        rad = math.radians(az)
        pos[name] = (_RING_RADIUS * math.sin(rad), _RING_RADIUS * math.cos(rad))
    for name, radius in _MIDLINE.items():
        pos[name] = (0.0, radius)
    for mid_name, ring_name, members in _ROWS.values():
        mx, my = pos[mid_name]
        rx, ry = pos[ring_name]
        for name, frac in members:
            x = mx + frac * (rx - mx)
            y = my + frac * (ry - my)
            pos[name] = (x, y)
            pos[_mirror(name)] = (-x, y)
    # cerebellar electrodes of the 64-channel cap, just behind the O ring
    for name, az in (("CB1", -171), ("CB2", 171)):
        rad = math.radians(az)
        pos[name] = (0.92 * math.sin(rad), 0.92 * math.cos(rad))
    return pos


def _mirror(name: str) -> str:
    # odd digits are left hemisphere, evens right: C5 <-> C6, AF3 <-> AF4
    head = name.rstrip("0123456789")
    digits = name[len(head):]
    return head + str(int(digits) + 1)


#: canonical upper-case electrode name -> unit-disk (x, y)
ELECTRODE_POSITIONS = _build_positions()


def electrode_position(name: str) -> tuple[float, float]:
    key = name.upper()
    if key not in ELECTRODE_POSITIONS:
        raise ValueError(
            f"unknown electrode {name!r}; known: "
            + ", ".join(sorted(ELECTRODE_POSITIONS))
        )
    return ELECTRODE_POSITIONS[key]


def interpolate_grid(values: dict[str, float], resolution: int = 64):
    """IDW (power 2) interpolation over the unit disk.

    Returns (grid [resolution, resolution] with NaN outside the disk,
    xs, ys) with ys oriented front-positive.
    """
    names = sorted(values)
    pts = np.array([electrode_position(n) for n in names])
    vals = np.array([float(values[n]) for n in names])
    xs = np.linspace(-1.0, 1.0, resolution)
    ys = np.linspace(-1.0, 1.0, resolution)
    gx, gy = np.meshgrid(xs, ys)
    d2 = (gx[..., None] - pts[:, 0]) ** 2 + (gy[..., None] - pts[:, 1]) ** 2
    exact = d2 < 1e-12
    weights = 1.0 / np.maximum(d2, 1e-12)
    grid = (weights * vals).sum(axis=-1) / weights.sum(axis=-1)
    hit = exact.any(axis=-1)
    if hit.any():
        grid[hit] = vals[np.argmax(exact[hit], axis=-1)]
    grid[gx**2 + gy**2 > 1.0] = np.nan
    return grid, xs, ys


def _color(t: float) -> str:
    """Diverging blue-white-red scale over t in [0, 1]."""
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        f = t / 0.5
        r, g, b = int(30 + f * 225), int(60 + f * 195), 255
    else:
        f = (t - 0.5) / 0.5
        r, g, b = 255, int(255 - f * 195), int(255 - f * 225)
    return f"#{r:02x}{g:02x}{b:02x}"


def render_topomap_svg(
    values: dict[str, float],
    resolution: int = 64,
    title: str = "",
    size: int = 420,
) -> str:
    """Standalone SVG 1.1 text for one topographic map."""
    grid, xs, ys = interpolate_grid(values, resolution)
    finite = grid[np.isfinite(grid)]
    vmin = float(finite.min())
    vmax = float(finite.max())
    span = vmax - vmin

    def t_of(v):
        return 0.5 if span <= 0 else (v - vmin) / span

    def sx(x):
        return (x + 1.3) / 2.6 * size

    def sy(y):
        return (1.3 - y) / 2.6 * size  # front of the head points up

    cell = 2.0 / resolution
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{size + 120}" height="{size}" '
        f'viewBox="0 0 {size + 120} {size}">',
        f'<rect width="{size + 120}" height="{size}" fill="white"/>',
    ]
    for iy in range(resolution):
        for ix in range(resolution):
            v = grid[iy, ix]
            if not np.isfinite(v):
                continue
            x0 = sx(xs[ix] - cell / 2)
            y0 = sy(ys[iy] + cell / 2)
            w = cell / 2.6 * size
            parts.append(
                f'<rect x="{x0:.4f}" y="{y0:.4f}" width="{w:.4f}" '
                f'height="{w:.4f}" fill="{_color(t_of(v))}"/>'
            )
    r_head = size / 2.6
    cx, cy = sx(0.0), sy(0.0)
    parts.append(
        f'<circle cx="{cx:.4f}" cy="{cy:.4f}" r="{r_head:.4f}" '
        'fill="none" stroke="black" stroke-width="2"/>'
    )
    nose = (
        (sx(-0.08), sy(0.995)), (sx(0.0), sy(1.12)), (sx(0.08), sy(0.995))
    )
    parts.append(
        '<polyline points="'
        + " ".join(f"{x:.4f},{y:.4f}" for x, y in nose)
        + '" fill="none" stroke="black" stroke-width="2"/>'
    )
    for side in (-1.0, 1.0):
        parts.append(
            f'<path d="M {sx(side):.4f} {sy(0.15):.4f} '
            f'A {0.07 * size / 2.6:.4f} {0.15 * size / 2.6:.4f} 0 0 '
            f'{1 if side > 0 else 0} {sx(side):.4f} {sy(-0.15):.4f}" '
            'fill="none" stroke="black" stroke-width="2"/>'
        )
    for name in sorted(values):
        x, y = electrode_position(name)
        parts.append(
            f'<circle cx="{sx(x):.4f}" cy="{sy(y):.4f}" r="3" fill="black"/>'
        )
        parts.append(
            f'<text x="{sx(x) + 4:.4f}" y="{sy(y) - 4:.4f}" '
            f'font-size="10" font-family="sans-serif">{name}</text>'
        )
    bar_x = size + 30
    steps = 24
    for i in range(steps):
        t = 1.0 - i / (steps - 1)
        parts.append(
            f'<rect x="{bar_x}" y="{30 + i * 10}" width="18" height="10" '
            f'fill="{_color(t)}"/>'
        )
    parts.append(
        f'<text x="{bar_x + 24}" y="40" font-size="11" '
        f'font-family="sans-serif">{vmax:.6g}</text>'
    )
    parts.append(
        f'<text x="{bar_x + 24}" y="{30 + steps * 10}" font-size="11" '
        f'font-family="sans-serif">{vmin:.6g}</text>'
    )
    if title:
        parts.append(
            f'<text x="10" y="20" font-size="13" '
            f'font-family="sans-serif">{title}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def trial_averaged_values(recordings, prompt: str, phase: str):
    """Mean absolute raw amplitude per channel across matching trials."""
    sums = None
    names = None
    count = 0
    prompts = set()
    phases = set()
    for rec in recordings:
        prompts.add(rec.prompt)
        for marker in rec.phase_markers:
            phases.add(marker.phase)
        if rec.prompt != prompt:
            continue
        for marker in rec.phase_markers:
            if marker.phase != phase:
                continue
            chunk = np.abs(rec.samples[:, marker.start:marker.end]).mean(axis=1)
            sums = chunk if sums is None else sums + chunk
            names = rec.channel_names
            count += 1
    if count == 0:
        raise ValueError(
            f"no trials for prompt={prompt!r} phase={phase!r}; "
            f"prompts: {sorted(prompts)}; phases: {sorted(phases)}"
        )
    return {name: float(v / count) for name, v in zip(names, sums)}
