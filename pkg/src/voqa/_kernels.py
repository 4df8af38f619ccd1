"""Compiled per-pixel loops for watermark region scoring.

Scoring touches every pixel of the scene several times (luma, two Sobel
passes, magnitude, moments); fusing that into one compiled pass per region
keeps large scenes fast. ``watermark.region_stats`` is the plain
numpy/scipy reference these loops are tested against.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def gray_image(rgb):
    h, w = rgb.shape[0], rgb.shape[1]
    out = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = rgb[y, x, 0] * 0.299 + rgb[y, x, 1] * 0.587 + rgb[y, x, 2] * 0.114
    return out


@njit(cache=True)
def region_moments(gray, y0, x0, side):
    """(mean Sobel magnitude, variance, min, max) of one square window.

    The window is treated as its own image: neighbors outside it are
    mirrored (edge pixel repeated), matching scipy's ``reflect`` mode.
    """
    idx = np.empty(side + 2, np.int64)
    idx[0] = 0
    for i in range(side):
        idx[i + 1] = i
    idx[side + 1] = side - 1
    grad = 0.0
    total = 0.0
    lo = np.inf
    hi = -np.inf
    for y in range(side):
        r0 = y0 + idx[y]
        r1 = y0 + y
        r2 = y0 + idx[y + 2]
        for x in range(side):
            c0 = x0 + idx[x]
            c1 = x0 + x
            c2 = x0 + idx[x + 2]
            a = gray[r0, c0]
            b = gray[r0, c1]
            c = gray[r0, c2]
            d = gray[r1, c0]
            f = gray[r1, c2]
            g = gray[r2, c0]
            h = gray[r2, c1]
            k = gray[r2, c2]
            gx = (c - a) + 2.0 * (f - d) + (k - g)
            gy = (g - a) + 2.0 * (h - b) + (k - c)
            grad += math.sqrt(gx * gx + gy * gy)
            v = gray[r1, c1]
            total += v
            if v < lo:
                lo = v
            if v > hi:
                hi = v
    n = side * side
    mean = total / n
    acc = 0.0
    for y in range(side):
        for x in range(side):
            dv = gray[y0 + y, x0 + x] - mean
            acc += dv * dv
    return grad / n, acc / n, lo, hi


@njit(cache=True)
def hsv_moments(rgb):
    """Sums over a patch: (sat*sin(hue), sat*cos(hue), sat, val).

    Hue in radians, saturation and value on the 0-255 scale, using the same
    per-pixel conversion as ``watermark.rgb_to_hsv_array``.
    """
    ws = 0.0
    wc = 0.0
    s_sum = 0.0
    v_sum = 0.0
    for y in range(rgb.shape[0]):
        for x in range(rgb.shape[1]):
            r = float(rgb[y, x, 0])
            g = float(rgb[y, x, 1])
            b = float(rgb[y, x, 2])
            mx = max(r, g, b)
            mn = min(r, g, b)
            delta = mx - mn
            v_sum += mx
            if delta == 0.0:
                continue
            if mx == r:
                hue = ((g - b) / delta) % 6.0
            elif mx == g:
                hue = (b - r) / delta + 2.0
            else:
                hue = (r - g) / delta + 4.0
            rad = math.radians((hue * 60.0) % 360.0)
            sat = delta / mx * 255.0
            s_sum += sat
            ws += sat * math.sin(rad)
            wc += sat * math.cos(rad)
    return ws, wc, s_sum, v_sum
