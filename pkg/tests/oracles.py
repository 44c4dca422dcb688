"""Independent oracles used by the test suite.

These deliberately avoid the library's solution paths: closest-point problems
are checked by exact KKT-candidate enumeration and by locally refined dense
grid search; neighbor queries by brute-force scans; VO exits by dense boundary
sampling.
"""

import numpy as np
from numba import njit


# ---------------------------------------------------------------------------
# exact enumeration for the closest-point LP (candidates from KKT structure)
# ---------------------------------------------------------------------------

def enumeration_closest(pts, nrm, target, cap, feas_slack=1e-9):
    """Exact optimum of min |v - target| over half-planes + disc, or None when
    infeasible: the optimum is the target, a single-constraint projection, a
    line-line vertex, a line-circle vertex, or the radial disc projection."""
    pts = np.asarray(pts, float).reshape(-1, 2)
    nrm = np.asarray(nrm, float).reshape(-1, 2)
    target = np.asarray(target, float)
    k = len(pts)
    cands = [target]
    t2 = float(target @ target)
    if t2 > 0:
        cands.append(target * (cap / np.sqrt(t2)))
    for i in range(k):
        p, n = pts[i], nrm[i]
        d = np.array([-n[1], n[0]])
        cands.append(p + ((target - p) @ d) * d)
        pd = float(p @ d)
        disc = pd * pd + cap * cap - float(p @ p)
        if disc >= 0:
            sq = np.sqrt(disc)
            cands.append(p + (-pd - sq) * d)
            cands.append(p + (-pd + sq) * d)
        for j in range(i):
            q, m = pts[j], nrm[j]
            dj = np.array([-m[1], m[0]])
            denom = d[0] * dj[1] - d[1] * dj[0]
            if abs(denom) < 1e-14:
                continue
            r = q - p
            t = (r[0] * dj[1] - r[1] * dj[0]) / denom
            cands.append(p + t * d)
    best, best_d = None, np.inf
    for v in cands:
        if float(v @ v) > cap * cap * (1 + 1e-12) + 1e-15:
            continue
        if any(float((v - pts[i]) @ nrm[i]) < -feas_slack for i in range(k)):
            continue
        dist = float(np.hypot(*(v - target)))
        if dist < best_d:
            best, best_d = v, dist
    return best


# ---------------------------------------------------------------------------
# dense-grid oracle with local refinement (numba; used by the acceptance gate)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _window_scan(pts, nrm, k, cap, tx, ty, cx, cy, ax, ay, half, step, cd):
    """Scan a square window centered at (cx, cy) whose grid axes are the unit
    vector (ax, ay) and its perpendicular, so the window can slide along a
    nearly grid-aligned active boundary."""
    bx = -ay
    by = ax
    nx, ny = cx, cy
    n_side = int(2.0 * half / step) + 1
    for i in range(n_side):
        u = -half + i * step
        for j in range(n_side):
            w = -half + j * step
            x = cx + u * ax + w * bx
            y = cy + u * ay + w * by
            if x * x + y * y > cap * cap:
                continue
            ok = True
            for c in range(k):
                if (x - pts[c, 0]) * nrm[c, 0] + (y - pts[c, 1]) * nrm[c, 1] < 0.0:
                    ok = False
                    break
            if not ok:
                continue
            d = (x - tx) * (x - tx) + (y - ty) * (y - ty)
            if d < cd:
                cd = d
                nx, ny = x, y
    return nx, ny, cd


@njit(cache=True)
def _tightest_boundary_direction(pts, nrm, k, cap, x, y):
    """Tangent direction of the boundary element (constraint line or disc rim)
    with the smallest absolute margin at (x, y); identity when nothing is
    nearby. The optimum of a closest-point problem sits on such an element, so
    refinement windows should slide along it."""
    best = abs(cap - np.sqrt(x * x + y * y))
    r = np.sqrt(x * x + y * y)
    if r > 1e-12:
        ax, ay = -y / r, x / r
    else:
        ax, ay = 1.0, 0.0
    for c in range(k):
        m = abs((x - pts[c, 0]) * nrm[c, 0] + (y - pts[c, 1]) * nrm[c, 1])
        if m < best:
            best = m
            ax, ay = -nrm[c, 1], nrm[c, 0]
    return ax, ay


@njit(cache=True)
def grid_closest(pts, nrm, k, cap, tx, ty):
    """Feasible grid argmin of the distance to the target over the disc: coarse
    pass, then multi-start local refinement that walks at each scale before
    shrinking (so flat directions along active boundaries are tracked).
    Returns (x, y, found)."""
    NT = 3
    top_x = np.zeros(NT)
    top_y = np.zeros(NT)
    top_d = np.full(NT, np.inf)
    n_coarse = 401
    h = 2.0 * cap / (n_coarse - 1)
    for i in range(n_coarse):
        x = -cap + i * h
        for j in range(n_coarse):
            y = -cap + j * h
            if x * x + y * y > cap * cap:
                continue
            ok = True
            for c in range(k):
                if (x - pts[c, 0]) * nrm[c, 0] + (y - pts[c, 1]) * nrm[c, 1] < 0.0:
                    ok = False
                    break
            if not ok:
                continue
            d = (x - tx) * (x - tx) + (y - ty) * (y - ty)
            if d < top_d[NT - 1]:
                p = NT - 1
                while p > 0 and top_d[p - 1] > d:
                    top_d[p] = top_d[p - 1]
                    top_x[p] = top_x[p - 1]
                    top_y[p] = top_y[p - 1]
                    p -= 1
                top_d[p] = d
                top_x[p] = x
                top_y[p] = y

    best_d = np.inf
    bx = 0.0
    by = 0.0
    found = False
    for t in range(NT):
        if not np.isfinite(top_d[t]):
            break
        cx = top_x[t]
        cy = top_y[t]
        ch = h
        cd = top_d[t]
        for _level in range(6):
            half = 4.0 * ch
            step = half / 30.0
            for _walk in range(256):
                ax, ay = _tightest_boundary_direction(pts, nrm, k, cap, cx, cy)
                nx, ny, nd = _window_scan(pts, nrm, k, cap, tx, ty,
                                          cx, cy, ax, ay, half, step, cd)
                moved = nx != cx or ny != cy
                cx, cy, cd = nx, ny, nd
                if not moved:
                    break
            ch = step
        if cd < best_d:
            best_d = cd
            bx, by = cx, cy
            found = True
    return bx, by, found


@njit(cache=True)
def grid_min_violation(pts, nrm, k, cap, refine_around_x, refine_around_y):
    """Grid minimum of max(0, worst signed violation) over the disc, refined
    around both the grid best and a caller-supplied point. Returns the value."""
    n_coarse = 401
    h = 2.0 * cap / (n_coarse - 1)
    best = np.inf
    bx = 0.0
    by = 0.0
    for i in range(n_coarse):
        x = -cap + i * h
        for j in range(n_coarse):
            y = -cap + j * h
            if x * x + y * y > cap * cap:
                continue
            worst = 0.0
            for c in range(k):
                v = (pts[c, 0] - x) * nrm[c, 0] + (pts[c, 1] - y) * nrm[c, 1]
                if v > worst:
                    worst = v
            if worst < best:
                best = worst
                bx, by = x, y
    for start in range(2):
        if start == 0:
            cx, cy = bx, by
        else:
            cx, cy = refine_around_x, refine_around_y
        ch = h
        for _level in range(6):
            half = 4.0 * ch
            step = half / 30.0
            nx, ny = cx, cy
            for i in range(61):
                x = cx - half + i * step
                for j in range(61):
                    y = cy - half + j * step
                    if x * x + y * y > cap * cap:
                        continue
                    worst = 0.0
                    for c in range(k):
                        v = (pts[c, 0] - x) * nrm[c, 0] + (pts[c, 1] - y) * nrm[c, 1]
                        if v > worst:
                            worst = v
                    if worst < best:
                        best = worst
                        nx, ny = x, y
            cx, cy, ch = nx, ny, step
    return best


# ---------------------------------------------------------------------------
# random problem generation (witness disc guarantees the inradius)
# ---------------------------------------------------------------------------

def random_feasible_problem(rng, max_constraints=16, min_inradius_frac=0.03):
    """Random constraints that provably keep a witness disc feasible, so the
    region's inradius is at least min_inradius_frac * cap."""
    cap = 0.5 + 2.5 * rng.random()
    rho = cap * (min_inradius_frac + 0.27 * rng.random())
    ang = 2 * np.pi * rng.random()
    rad = (cap - rho) * np.sqrt(rng.random())
    center = np.array([rad * np.cos(ang), rad * np.sin(ang)])
    k = int(rng.integers(0, max_constraints + 1))
    pts = np.empty((k, 2))
    nrm = np.empty((k, 2))
    for i in range(k):
        a = 2 * np.pi * rng.random()
        n = np.array([np.cos(a), np.sin(a)])
        slack = 2.0 * rng.random() ** 2
        shift = rng.normal() * cap
        perp = np.array([-n[1], n[0]])
        pts[i] = center - (rho + slack) * n + shift * perp
        nrm[i] = n
    target = rng.normal(size=2) * cap
    return pts, nrm, target, cap


def random_any_problem(rng, max_constraints=16):
    """Unconstrained-geometry random problem (may be infeasible)."""
    cap = 0.5 + 2.5 * rng.random()
    k = int(rng.integers(0, max_constraints + 1))
    pts = rng.normal(size=(k, 2)) * 1.2
    ang = 2 * np.pi * rng.random(size=k)
    nrm = np.column_stack([np.cos(ang), np.sin(ang)])
    target = rng.normal(size=2) * cap
    return pts, nrm, target, cap


# ---------------------------------------------------------------------------
# VO boundary sampling
# ---------------------------------------------------------------------------

def vo_boundary_samples(rel_pos, combined_radius, tau, n=100_000):
    """Dense sample of the truncated-cone VO boundary (cutoff arc between the
    tangent points plus the two tangent legs out to a far limit)."""
    rel_pos = np.asarray(rel_pos, float)
    d = np.linalg.norm(rel_pos)
    assert d > combined_radius, "boundary sampling expects non-overlapping agents"
    center = rel_pos / tau
    rr = combined_radius / tau
    axis = np.arctan2(rel_pos[1], rel_pos[0])
    # Seen from the cutoff center, the tangent points sit at +-(pi/2 + alpha)
    # from the forward axis, sin(alpha) = combined_radius / d; the boundary arc
    # is the piece through the backward pole between them.
    alpha = np.arcsin(combined_radius / d)
    half = np.pi / 2 - alpha
    arc_t = (axis + np.pi) + np.linspace(-half, half, n // 2)
    arc = center + rr * np.column_stack([np.cos(arc_t), np.sin(arc_t)])

    legs = []
    leg_len = np.sqrt(d * d - combined_radius * combined_radius)
    for side in (1, -1):
        ang = axis + side * alpha
        direction = np.array([np.cos(ang), np.sin(ang)])
        start = leg_len / tau  # distance from origin to the tangent point
        ts = np.linspace(start, start + 40.0 * max(1.0, rr), n // 4)
        legs.append(ts[:, None] * direction[None, :])
    return np.vstack([arc] + legs)
