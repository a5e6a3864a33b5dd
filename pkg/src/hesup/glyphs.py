"""Polyline skeletons for digits and uppercase letters.

Coordinates live in the unit square with y pointing down. Curves are
sampled arcs; the shapes are crude on purpose since every font class shares
them and only the stroke style differs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class GlyphSkeleton:
    glyph_id: str
    strokes: tuple

    def __post_init__(self):
        for line in self.strokes:
            if len(line) < 2:
                raise ValueError(f"glyph {self.glyph_id!r}: polyline needs >= 2 points")
            for x, y in line:
                if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                    raise ValueError(f"glyph {self.glyph_id!r}: point ({x}, {y}) outside unit square")


def arc(cx, cy, rx, ry, start, stop, n=10):
    """Points along an ellipse arc, angles in degrees (0 = +x, 90 = down)."""
    pts = []
    for i in range(n + 1):
        t = math.radians(start + (stop - start) * i / n)
        pts.append((round(cx + rx * math.cos(t), 4), round(cy + ry * math.sin(t), 4)))
    return pts


L, R, T, B, M = 0.15, 0.85, 0.0, 1.0, 0.5

_DEFS = {
    "0": [arc(0.5, 0.5, 0.35, 0.5, 0, 360, 16)],
    "1": [[(0.3, 0.2), (0.55, 0.0), (0.55, 1.0)], [(0.3, 1.0), (0.8, 1.0)]],
    "2": [arc(0.5, 0.27, 0.33, 0.27, 180, 360, 8) + [(0.15, 1.0), (0.85, 1.0)]],
    "3": [arc(0.5, 0.25, 0.3, 0.25, 200, 450, 8), arc(0.5, 0.75, 0.33, 0.25, 270, 520, 8)],
    "4": [[(0.65, 1.0), (0.65, 0.0), (0.15, 0.7), (0.85, 0.7)]],
    "5": [[(0.8, 0.0), (0.2, 0.0), (0.18, 0.45)] + arc(0.48, 0.68, 0.35, 0.32, 240, 500, 8)[1:]],
    "6": [[(0.75, 0.02), (0.35, 0.3), (0.16, 0.65)], arc(0.5, 0.7, 0.34, 0.3, 0, 360, 12)],
    "7": [[(0.15, 0.0), (0.85, 0.0), (0.4, 1.0)]],
    "8": [arc(0.5, 0.25, 0.28, 0.25, 0, 360, 12), arc(0.5, 0.75, 0.33, 0.25, 0, 360, 12)],
    "9": [arc(0.5, 0.3, 0.34, 0.3, 0, 360, 12), [(0.84, 0.35), (0.65, 0.7), (0.25, 0.98)]],
    "A": [[(L, B), (M, T), (R, B)], [(0.28, 0.62), (0.72, 0.62)]],
    "B": [[(0.2, T), (0.2, B)], [(0.2, 0.0), (0.6, 0.0)] + arc(0.6, 0.24, 0.22, 0.24, 270, 450, 6)[1:] + [(0.2, 0.48)],
          [(0.2, 0.48), (0.62, 0.48)] + arc(0.62, 0.74, 0.24, 0.26, 270, 450, 6)[1:] + [(0.2, 1.0)]],
    "C": [arc(0.55, 0.5, 0.4, 0.5, 40, 320, 12)],
    "D": [[(0.2, T), (0.2, B)], [(0.2, 0.0), (0.45, 0.0)] + arc(0.45, 0.5, 0.4, 0.5, 270, 450, 10)[1:] + [(0.2, 1.0)]],
    "E": [[(R, T), (0.2, T), (0.2, B), (R, B)], [(0.2, M), (0.7, M)]],
    "F": [[(R, T), (0.2, T), (0.2, B)], [(0.2, M), (0.7, M)]],
    "G": [arc(0.55, 0.5, 0.4, 0.5, 30, 340, 12), [(0.95, 0.62), (0.95, 0.55), (0.6, 0.55)]],
    "H": [[(0.2, T), (0.2, B)], [(0.8, T), (0.8, B)], [(0.2, M), (0.8, M)]],
    "I": [[(M, T), (M, B)], [(0.3, T), (0.7, T)], [(0.3, B), (0.7, B)]],
    "J": [[(0.75, T), (0.75, 0.7)] + arc(0.5, 0.7, 0.25, 0.3, 0, 180, 8)[1:]],
    "K": [[(0.2, T), (0.2, B)], [(0.8, T), (0.2, 0.6)], [(0.38, 0.45), (0.85, B)]],
    "L": [[(0.2, T), (0.2, B), (0.8, B)]],
    "M": [[(L, B), (L, T), (M, 0.6), (R, T), (R, B)]],
    "N": [[(0.2, B), (0.2, T), (0.8, B), (0.8, T)]],
    "O": [arc(0.5, 0.5, 0.38, 0.5, 0, 360, 16)],
    "P": [[(0.2, B), (0.2, T), (0.55, T)] + arc(0.55, 0.27, 0.27, 0.27, 270, 450, 8)[1:] + [(0.2, 0.54)]],
    "Q": [arc(0.5, 0.48, 0.38, 0.48, 0, 360, 16), [(0.55, 0.7), (0.9, 1.0)]],
    "R": [[(0.2, B), (0.2, T), (0.55, T)] + arc(0.55, 0.27, 0.27, 0.27, 270, 450, 8)[1:] + [(0.2, 0.54)],
          [(0.5, 0.54), (0.85, B)]],
    "S": [arc(0.5, 0.26, 0.32, 0.26, 330, 90, 8) + arc(0.5, 0.74, 0.33, 0.26, 270, 510, 8)[1:]],
    "T": [[(0.1, T), (0.9, T)], [(M, T), (M, B)]],
    "U": [[(0.18, T), (0.18, 0.65)] + arc(0.5, 0.65, 0.32, 0.35, 180, 0, 8)[1:] + [(0.82, T)]],
    "V": [[(0.1, T), (M, B), (0.9, T)]],
    "W": [[(0.05, T), (0.28, B), (M, 0.35), (0.72, B), (0.95, T)]],
    "X": [[(L, T), (R, B)], [(R, T), (L, B)]],
    "Y": [[(L, T), (M, M), (R, T)], [(M, M), (M, B)]],
    "Z": [[(L, T), (R, T), (L, B), (R, B)]],
}


def _clip(line):
    return tuple((min(1.0, max(0.0, x)), min(1.0, max(0.0, y))) for x, y in line)


SKELETONS = {gid: GlyphSkeleton(gid, tuple(_clip(s) for s in strokes)) for gid, strokes in _DEFS.items()}
GLYPH_IDS = tuple(SKELETONS)
