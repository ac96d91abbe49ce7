"""Stacked-variable SVG overlay of an original sample and its counterfactual.

One row per variable in manifest order. The original trace is black; for
every substituted variable (clipped to its window when one is set) the
counterfactual values are drawn as a red polyline behind the black one.
Output bytes are a pure function of the inputs: fixed layout, fixed float
formatting, no timestamps.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .data import MultivariateSeries
from .search import SearchError, SubstitutionSet

_WIDTH = 960
_ROW_HEIGHT = 90
_HEADER = 46
_MARGIN_LEFT = 110
_MARGIN_RIGHT = 24
_ROW_PAD = 8
_FOOT = 16


def _points(values, t_range, x_of, y_of) -> str:
    return " ".join(f"{x_of(t):.2f},{y_of(values[t]):.2f}" for t in t_range)


def render_overlay(
    original: MultivariateSeries,
    counterfactual: MultivariateSeries,
    subs: SubstitutionSet,
    labels: dict[str, str],
) -> str:
    """Render the overlay as an SVG document string.

    ``labels`` carries the header text parts: ``original_pred`` and
    ``target``.
    """
    if original.values.shape != counterfactual.values.shape:
        raise SearchError(
            f"shape mismatch: original {original.values.shape} vs "
            f"counterfactual {counterfactual.values.shape}"
        )
    n_vars, n_t = original.values.shape
    lo = min(float(original.values.min()), float(counterfactual.values.min()))
    hi = max(float(original.values.max()), float(counterfactual.values.max()))
    pad = 0.05 * (hi - lo) if hi > lo else 1.0
    lo, hi = lo - pad, hi + pad

    height = _HEADER + n_vars * _ROW_HEIGHT + _FOOT
    plot_w = _WIDTH - _MARGIN_LEFT - _MARGIN_RIGHT

    def x_of(t):
        return _MARGIN_LEFT + (plot_w * t / (n_t - 1) if n_t > 1 else plot_w / 2)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_WIDTH} {height}" '
        f'width="{_WIDTH}" height="{height}">',
        f'<rect x="0" y="0" width="{_WIDTH}" height="{height}" fill="white"/>',
        f'<text x="{_MARGIN_LEFT}" y="28" font-family="sans-serif" font-size="16" fill="black">'
        f"prediction: {escape(labels['original_pred'])}; counterfactual target: "
        f"{escape(labels['target'])}</text>",
    ]

    windows_by_var: dict[int, list] = {}
    for var, window in subs.atoms:
        windows_by_var.setdefault(var, []).append(window)

    for vi in range(n_vars):
        band_top = _HEADER + vi * _ROW_HEIGHT + _ROW_PAD
        band_h = _ROW_HEIGHT - 2 * _ROW_PAD

        def y_of(value, top=band_top, h=band_h):
            return top + h * (1.0 - (value - lo) / (hi - lo))

        label_y = band_top + band_h / 2
        out.append(
            f'<text x="8" y="{label_y:.2f}" font-family="sans-serif" font-size="13" '
            f'fill="black" dominant-baseline="middle">{escape(original.variables[vi])}</text>'
        )
        # red first so the original trace paints over it
        for window in windows_by_var.get(vi, []):
            t0, t1 = (0, n_t) if window is None else window
            pts = _points(counterfactual.values[vi], range(t0, t1), x_of, y_of)
            out.append(
                f'<polyline fill="none" stroke="red" stroke-width="1.4" points="{pts}"/>'
            )
        pts = _points(original.values[vi], range(n_t), x_of, y_of)
        out.append(
            f'<polyline fill="none" stroke="black" stroke-width="1.1" points="{pts}"/>'
        )

    out.append("</svg>")
    return "\n".join(out) + "\n"
