"""Independent oracles shared by the test suite.

Everything here is deliberately written the slow, obvious way (explicit
loops, direct formulas) so it cannot share bugs with the vectorized
implementations it checks.
"""
import numpy as np


def numeric_grad(f, x, eps=1e-5):
    """Central finite-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        up = f(x)
        xf[i] = orig - eps
        down = f(x)
        xf[i] = orig
        flat[i] = (up - down) / (2.0 * eps)
    return grad


def assert_grad_close(analytic, numeric, rtol=1e-4, atol=1e-8):
    """Relative-error comparison suited to finite-difference noise."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    assert analytic.shape == numeric.shape
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    rel = np.abs(analytic - numeric) / denom
    ok = (np.abs(analytic - numeric) <= atol) | (rel <= rtol)
    assert ok.all(), (
        f"gradient mismatch: worst rel err {rel[~ok].max():.3e} "
        f"at {np.argwhere(~ok)[0]}"
    )


def random_projection_loss(forward, shape, rng):
    """Build a scalar loss sum(forward(x) * R) with a fixed random R.

    Returns (loss_fn, R).  Projecting with a dense random tensor exercises
    the full Jacobian rather than just the row sums.
    """
    r = rng.normal(size=shape)

    def loss(x):
        return float((forward(x) * r).sum())

    return loss, r


def conv2d_direct(x, weights, bias, padding):
    """Quadruple-loop cross-correlation oracle."""
    n, c_in, h, w = x.shape
    c_out, _, kh, kw = weights.shape
    h_out = h + 2 * padding - kh + 1
    w_out = w + 2 * padding - kw + 1
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((n, c_out, h_out, w_out))
    for b in range(n):
        for co in range(c_out):
            for y in range(h_out):
                for xx in range(w_out):
                    acc = 0.0
                    for ci in range(c_in):
                        for i in range(kh):
                            for j in range(kw):
                                acc += xp[b, ci, y + i, xx + j] * weights[co, ci, i, j]
                    if bias is not None:
                        acc += bias[co]
                    out[b, co, y, xx] = acc
    return out


def bilinear_direct(grid, x, y):
    """Direct evaluation of unit-cell bilinear interpolation on a 2-D grid."""
    h, w = grid.shape
    x1 = int(np.floor(x))
    y1 = int(np.floor(y))
    x1 = min(max(x1, 0), w - 1)
    y1 = min(max(y1, 0), h - 1)
    x2 = min(x1 + 1, w - 1)
    y2 = min(y1 + 1, h - 1)
    if x2 == x1:
        wx2, wx1 = 0.0, 1.0
    else:
        wx2 = x - x1
        wx1 = x2 - x
    if y2 == y1:
        wy2, wy1 = 0.0, 1.0
    else:
        wy2 = y - y1
        wy1 = y2 - y
    return (
        grid[y1, x1] * wx1 * wy1
        + grid[y1, x2] * wx2 * wy1
        + grid[y2, x1] * wx1 * wy2
        + grid[y2, x2] * wx2 * wy2
    )


def edge_points_direct(c1, c2, count):
    """Uniform parametric points on a segment, endpoints included."""
    pts = []
    for t in range(count):
        f = t / (count - 1)
        pts.append((c1[0] + f * (c2[0] - c1[0]), c1[1] + f * (c2[1] - c1[1])))
    return pts


def score_edge_direct(prob2d, c1, c2, n_points=64, offsets=((0, -1), (0, 1), (-1, 0), (1, 0))):
    """Direct-loop edge score: along-edge mean plus offset means, averaged."""
    h, w = prob2d.shape

    def line_mean(a, b):
        total = 0.0
        for (px, py) in edge_points_direct(a, b, n_points):
            px = min(max(px, 0.0), w - 1.0)
            py = min(max(py, 0.0), h - 1.0)
            total += bilinear_direct(prob2d, px, py)
        return total / n_points

    scores = [line_mean(c1, c2)]
    for (dx, dy) in offsets:
        a = (c1[0] + dx, c1[1] + dy)
        b = (c2[0] + dx, c2[1] + dy)
        scores.append(line_mean(a, b))
    return sum(scores) / len(scores)


def bresenham_direct(x0, y0, x1, y1):
    """Reference Bresenham line, all octants, endpoints included."""
    points = []
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        points.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return points


def segments_cross(p1, p2, p3, p4):
    """True when open segments p1-p2 and p3-p4 properly intersect."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > 1e-12:
            return 1
        if v < -1e-12:
            return -1
        return 0

    o1 = orient(p1, p2, p3)
    o2 = orient(p1, p2, p4)
    o3 = orient(p3, p4, p1)
    o4 = orient(p3, p4, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)
