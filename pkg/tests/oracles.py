"""Brute-force reference computations shared by the test modules.

Nothing here imports the code under test beyond plain data containers.
"""

from __future__ import annotations

import math

import numpy as np


def rect_corners_trig(row, col, angle, width, height):
    """Corners written out one by one with sin/cos, screen-counterclockwise from bottom-left."""
    a, b = width / 2.0, height / 2.0
    s, c = math.sin(angle), math.cos(angle)
    # closing axis (drow, dcol) = (-s, c); perpendicular (drow, dcol) = (-c, -s)
    bl = (row + a * s + b * c, col - a * c + b * s)
    br = (row - a * s + b * c, col + a * c + b * s)
    tr = (row - a * s - b * c, col + a * c - b * s)
    tl = (row + a * s - b * c, col - a * c - b * s)
    return np.array([bl, br, tr, tl])


def _inside_convex(corners, rows, cols):
    n = len(corners)
    signs = []
    for i in range(n):
        a, b = corners[i], corners[(i + 1) % n]
        signs.append((b[1] - a[1]) * (rows - a[0]) - (b[0] - a[0]) * (cols - a[1]))
    signs = np.stack(signs)
    return np.all(signs >= 0, axis=0) | np.all(signs <= 0, axis=0)


def raster_iou(corners_a, corners_b, step=0.1):
    """IoU by counting sample points of a regular grid with spacing ``step``."""
    pts = np.vstack([corners_a, corners_b])
    lo, hi = pts.min(axis=0) - step, pts.max(axis=0) + step
    rows = np.arange(lo[0] + step / 2, hi[0], step)
    cols = np.arange(lo[1] + step / 2, hi[1], step)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    ina = _inside_convex(corners_a, rr, cc)
    inb = _inside_convex(corners_b, rr, cc)
    union = np.count_nonzero(ina | inb)
    return np.count_nonzero(ina & inb) / union if union else 0.0


def pixel_log_prob(q, idx, eps=1e-6):
    flat = [min(max(float(v), eps), 1.0) for v in np.ravel(q)]
    return math.log(flat[idx] / sum(flat))


def scalar_mlgsl(q, s, c, w, labels, eps=1e-6, log_variant=False, delta=1e-8):
    """Loop-by-loop MLGSL over plain Python floats; labels are (row, col, angle, width_px)."""
    q = np.asarray(q, dtype=float)
    ncols = q.shape[1]
    pix = ang = wid = 0.0
    for r, col, phi, width in labels:
        idx = r * ncols + col
        pix -= pixel_log_prob(q, idx, eps)
        e_ang = (s[r][col] - math.sin(2 * phi)) ** 2 + (c[r][col] - math.cos(2 * phi)) ** 2
        e_wid = (w[r][col] - width / 150.0) ** 2
        if log_variant:
            ang += math.log(e_ang + delta)
            wid += math.log(e_wid + delta)
        else:
            ang += e_ang
            wid += e_wid
    return pix, ang, wid


def scalar_pix_mse(q, s, c, w, labels):
    total = 0.0
    for r, col, phi, width in labels:
        total += (q[r][col] - 1.0) ** 2
        total += (s[r][col] - math.sin(2 * phi)) ** 2 + (c[r][col] - math.cos(2 * phi)) ** 2
        total += (w[r][col] - width / 150.0) ** 2
    return total


def loop_img_mse(pred, dense):
    """Naive double loop over pixels for each of the four grids."""
    total = 0.0
    for p, d in zip(pred, dense):
        h, w = len(p), len(p[0])
        acc = 0.0
        for i in range(h):
            for j in range(w):
                acc += (float(p[i][j]) - float(d[i][j])) ** 2
        total += acc / (h * w)
    return total


def central_difference(f, x, h=1e-4):
    """Gradient of scalar ``f`` at float64 array ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def occupancy_collision(center_rc, angle, width, depth, finger, height_ratio, offset):
    """Per-pixel brute force of the finger test.

    Every pixel center is expressed in grasp coordinates (along the closing
    axis, across it) and classified as under-the-grasp or under-a-finger
    directly from the distances; no rectangles or rasterisers are built.
    """
    h_img, w_img = depth.shape
    ur, uc = -math.sin(angle), math.cos(angle)
    half_h = max(height_ratio * width, 2.0) / 2.0
    # finger extents reach beyond the image?
    for sgn in (1, -1):
        for along in (width / 2.0, width / 2.0 + finger):
            for across in (-half_h, half_h):
                r = center_rc[0] + sgn * along * ur - across * uc
                c = center_rc[1] + sgn * along * uc + across * ur
                if r < -0.5 or c < -0.5 or r > h_img - 0.5 or c > w_img - 0.5:
                    return True
    top = math.inf
    finger_depths = []
    half_w = max(width, 1.0) / 2.0
    for i in range(h_img):
        for j in range(w_img):
            dr, dc = i - center_rc[0], j - center_rc[1]
            along = dr * ur + dc * uc
            across = -dr * uc + dc * ur
            if abs(across) > half_h + 1e-9:
                continue
            if abs(along) <= half_w + 1e-9:
                top = min(top, depth[i, j])
            if width / 2.0 - 1e-9 <= abs(along) <= width / 2.0 + finger + 1e-9:
                finger_depths.append(depth[i, j])
    if top == math.inf:
        top = depth[center_rc]
    return any(d < top + offset for d in finger_depths)
