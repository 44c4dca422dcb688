"""Compiled numerical kernels shared by the solver, constraint, grid and engine layers.

Conventions used throughout:
  * a half-plane constraint is (point p, unit normal n); velocity v satisfies it
    iff dot(v - p, n) >= 0, and its boundary line is v(t) = p + t * d with
    d = (-n_y, n_x);
  * the disc constraint is |v| <= cap;
  * the signed violation of a constraint at v is dot(p - v, n) (positive means
    the constraint is broken).

Every kernel is nogil so Python worker threads can run ranges of independent
problems concurrently; nothing here mutates shared state outside its own output
rows, which is what makes batch results bitwise identical for any worker count.
"""

import numpy as np
from numba import njit

KERNEL_OPTS = dict(cache=True, nogil=True)

FEASIBLE = 0
FALLBACK_USED = 1

# |d . n_j| below this treats the constraint boundary as parallel to line j.
_PARALLEL_EPS = 1e-12

_U64_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_U64_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_U64_MIX2 = np.uint64(0x94D049BB133111EB)


# ---------------------------------------------------------------------------
# deterministic RNG (splitmix64) and per-problem shuffling
# ---------------------------------------------------------------------------

@njit(**KERNEL_OPTS)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _U64_MIX1
    z = (z ^ (z >> np.uint64(27))) * _U64_MIX2
    return z ^ (z >> np.uint64(31))


@njit(**KERNEL_OPTS)
def _fisher_yates(perm, k, seed):
    """Fill perm[:k] with a seed-determined permutation of 0..k-1."""
    for i in range(k):
        perm[i] = i
    state = seed
    for i in range(k - 1, 0, -1):
        state = state + _U64_GOLDEN
        j = int(_mix64(state) % np.uint64(i + 1))
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp


@njit(**KERNEL_OPTS)
def _problem_seed(frame, agent_id):
    """Shuffle seed as a pure function of (agent id, frame index)."""
    z = (np.uint64(frame) << np.uint64(32)) | (np.uint64(agent_id) & np.uint64(0xFFFFFFFF))
    return _mix64(z)


@njit(**KERNEL_OPTS)
def shuffle_into(perm, k, seed):
    """Entry point for tests that compare the kernel shuffle with the Python twin."""
    _fisher_yates(perm, k, np.uint64(seed))


# ---------------------------------------------------------------------------
# incremental closest-point LP (half-planes + disc)
# ---------------------------------------------------------------------------

@njit(**KERNEL_OPTS)
def _lp1_target(pts, nrm, order, i_pos, cap, tx, ty):
    """Closest point to (tx, ty) on the boundary line of constraint order[i_pos],
    restricted to the disc and to constraints order[:i_pos].

    Returns (feasible, x, y)."""
    c = order[i_pos]
    px = pts[c, 0]
    py = pts[c, 1]
    nx = nrm[c, 0]
    ny = nrm[c, 1]
    dx = -ny
    dy = nx

    pd = px * dx + py * dy
    disc = pd * pd + cap * cap - (px * px + py * py)
    if disc < 0.0:
        return False, 0.0, 0.0
    sq = np.sqrt(disc)
    t_left = -pd - sq
    t_right = -pd + sq

    for j_pos in range(i_pos):
        j = order[j_pos]
        a = dx * nrm[j, 0] + dy * nrm[j, 1]
        b = (pts[j, 0] - px) * nrm[j, 0] + (pts[j, 1] - py) * nrm[j, 1]
        if -_PARALLEL_EPS <= a <= _PARALLEL_EPS:
            if b > 0.0:
                return False, 0.0, 0.0
            continue
        t = b / a
        if a > 0.0:
            if t > t_left:
                t_left = t
        else:
            if t < t_right:
                t_right = t
        if t_left > t_right:
            return False, 0.0, 0.0

    t = (tx - px) * dx + (ty - py) * dy
    if t < t_left:
        t = t_left
    elif t > t_right:
        t = t_right
    return True, px + t * dx, py + t * dy


@njit(**KERNEL_OPTS)
def _lp2_target(pts, nrm, order, k, cap, tx, ty):
    """Closest point to the target in the intersection of constraints order[:k]
    and the disc, inserting constraints incrementally.

    Returns (feasible, fail_pos, x, y); on failure (x, y) is the last point that
    satisfied order[:fail_pos]."""
    t2 = tx * tx + ty * ty
    if t2 > cap * cap:
        s = cap / np.sqrt(t2)
        vx = tx * s
        vy = ty * s
    else:
        vx = tx
        vy = ty

    for i_pos in range(k):
        c = order[i_pos]
        if (vx - pts[c, 0]) * nrm[c, 0] + (vy - pts[c, 1]) * nrm[c, 1] < 0.0:
            ok, nvx, nvy = _lp1_target(pts, nrm, order, i_pos, cap, tx, ty)
            if not ok:
                return False, i_pos, vx, vy
            vx = nvx
            vy = nvy
    return True, -1, vx, vy


# ---------------------------------------------------------------------------
# direction-objective LP (used by the least-penetration stage)
# ---------------------------------------------------------------------------

@njit(**KERNEL_OPTS)
def _lp1_dir(pts, nrm, upto, cap, ox, oy):
    """Maximize dot(v, o) on the boundary line of constraint `upto`, restricted
    to the disc and constraints [:upto]. Identity ordering."""
    px = pts[upto, 0]
    py = pts[upto, 1]
    nx = nrm[upto, 0]
    ny = nrm[upto, 1]
    dx = -ny
    dy = nx

    pd = px * dx + py * dy
    disc = pd * pd + cap * cap - (px * px + py * py)
    if disc < 0.0:
        return False, 0.0, 0.0
    sq = np.sqrt(disc)
    t_left = -pd - sq
    t_right = -pd + sq

    for j in range(upto):
        a = dx * nrm[j, 0] + dy * nrm[j, 1]
        b = (pts[j, 0] - px) * nrm[j, 0] + (pts[j, 1] - py) * nrm[j, 1]
        if -_PARALLEL_EPS <= a <= _PARALLEL_EPS:
            if b > 0.0:
                return False, 0.0, 0.0
            continue
        t = b / a
        if a > 0.0:
            if t > t_left:
                t_left = t
        else:
            if t < t_right:
                t_right = t
        if t_left > t_right:
            return False, 0.0, 0.0

    t = t_right if (dx * ox + dy * oy) > 0.0 else t_left
    return True, px + t * dx, py + t * dy


@njit(**KERNEL_OPTS)
def _lp2_dir(pts, nrm, m, cap, ox, oy):
    """Maximize dot(v, o) over constraints [:m] and the disc (|o| = 1)."""
    vx = cap * ox
    vy = cap * oy
    for i in range(m):
        if (vx - pts[i, 0]) * nrm[i, 0] + (vy - pts[i, 1]) * nrm[i, 1] < 0.0:
            ok, nvx, nvy = _lp1_dir(pts, nrm, i, cap, ox, oy)
            if not ok:
                return False, vx, vy
            vx = nvx
            vy = nvy
    return True, vx, vy


# ---------------------------------------------------------------------------
# least-penetration fallback
# ---------------------------------------------------------------------------

@njit(**KERNEL_OPTS)
def _lp3_minmax(pts, nrm, order, k, begin, cap, vx, vy, ppts, pnrm):
    """Minimize the maximum signed violation over constraints order[:k], starting
    from (vx, vy) which already satisfies order[:begin]. Violations are tracked
    clamped at zero. Returns (x, y, z) with z the achieved level."""
    dist = 0.0
    for i_pos in range(begin, k):
        c = order[i_pos]
        viol = (pts[c, 0] - vx) * nrm[c, 0] + (pts[c, 1] - vy) * nrm[c, 1]
        if viol > dist:
            # Optimize inside the region where constraint c attains the max:
            # for each j, require viol_j(v) <= viol_c(v), a half-plane with
            # normal (n_j - n_c) normalized.
            m = 0
            for j_pos in range(i_pos):
                j = order[j_pos]
                mx = nrm[j, 0] - nrm[c, 0]
                my = nrm[j, 1] - nrm[c, 1]
                ml2 = mx * mx + my * my
                if ml2 < 1e-24:
                    # Same normal: violations differ by a constant; constraint c
                    # can only attain the max where that constant allows, which
                    # is position independent, so no half-plane is induced.
                    continue
                rhs = (pts[j, 0] * nrm[j, 0] + pts[j, 1] * nrm[j, 1]
                       - pts[c, 0] * nrm[c, 0] - pts[c, 1] * nrm[c, 1])
                ml = np.sqrt(ml2)
                pnrm[m, 0] = mx / ml
                pnrm[m, 1] = my / ml
                ppts[m, 0] = mx * rhs / ml2
                ppts[m, 1] = my * rhs / ml2
                m += 1
            ok, nvx, nvy = _lp2_dir(ppts, pnrm, m, cap, nrm[c, 0], nrm[c, 1])
            if ok:
                vx = nvx
                vy = nvy
            dist = (pts[c, 0] - vx) * nrm[c, 0] + (pts[c, 1] - vy) * nrm[c, 1]
            if dist < 0.0:
                dist = 0.0
    return vx, vy, dist


@njit(**KERNEL_OPTS)
def _least_penetration(pts, nrm, order, k, begin, cap, wx, wy,
                       ppts, pnrm, spts, ident):
    """Velocity minimizing the worst violation (clamped at zero) over
    constraints order[:k] within the disc; ties broken by proximity to the warm
    start (wx, wy). (vx, vy) entering the min-max stage must satisfy
    order[:begin]."""
    w2 = wx * wx + wy * wy
    if w2 > cap * cap:
        s = cap / np.sqrt(w2)
        wx = wx * s
        wy = wy * s

    vx, vy, z = _lp3_minmax(pts, nrm, order, k, begin, cap, wx, wy, ppts, pnrm)

    # Re-solve as a closest-point problem toward the warm start on the z-relaxed
    # constraint set; retry with a touch of slack if rounding made z infeasible.
    for i in range(k):
        ident[i] = i
    slack = 0.0
    for _attempt in range(3):
        zz = z + slack
        for j in range(k):
            spts[j, 0] = pts[j, 0] - zz * nrm[j, 0]
            spts[j, 1] = pts[j, 1] - zz * nrm[j, 1]
        ok, _fail, rx, ry = _lp2_target(spts, nrm, ident, k, cap, wx, wy)
        if ok:
            return rx, ry
        slack = slack * 1e3 + 1e-12 * (1.0 + z)
    return vx, vy


# ---------------------------------------------------------------------------
# one full problem
# ---------------------------------------------------------------------------

@njit(**KERNEL_OPTS)
def _solve_one(pts, nrm, k, cap, tx, ty, seed, perm, ppts, pnrm, spts, ident):
    """Solve a single closest-point problem with seeded random insertion order.

    Returns (x, y, status, failed_at); failed_at is the original index of the
    constraint whose insertion emptied the region (-1 when feasible)."""
    _fisher_yates(perm, k, seed)
    ok, fail_pos, vx, vy = _lp2_target(pts, nrm, perm, k, cap, tx, ty)
    if ok:
        return vx, vy, FEASIBLE, -1
    failed_at = perm[fail_pos]
    rx, ry = _least_penetration(pts, nrm, perm, k, fail_pos, cap, vx, vy,
                                ppts, pnrm, spts, ident)
    return rx, ry, FALLBACK_USED, failed_at


@njit(**KERNEL_OPTS)
def solve_range(coff, cpts, cnrm, tgt, caps, seeds, out_v, out_status,
                out_failed, start, stop):
    """Solve problems [start, stop) from a flattened batch.

    coff is the CSR offset array: problem i owns constraint rows
    coff[i]:coff[i+1] of cpts/cnrm."""
    max_k = 0
    for i in range(start, stop):
        k = coff[i + 1] - coff[i]
        if k > max_k:
            max_k = k
    if max_k < 1:
        max_k = 1
    perm = np.empty(max_k, dtype=np.int64)
    ident = np.empty(max_k, dtype=np.int64)
    ppts = np.empty((max_k, 2), dtype=np.float64)
    pnrm = np.empty((max_k, 2), dtype=np.float64)
    spts = np.empty((max_k, 2), dtype=np.float64)

    for i in range(start, stop):
        lo = coff[i]
        k = coff[i + 1] - lo
        x, y, status, failed = _solve_one(
            cpts[lo:lo + k], cnrm[lo:lo + k], k, caps[i],
            tgt[i, 0], tgt[i, 1], np.uint64(seeds[i]),
            perm, ppts, pnrm, spts, ident)
        out_v[i, 0] = x
        out_v[i, 1] = y
        out_status[i] = status
        out_failed[i] = failed


# ---------------------------------------------------------------------------
# velocity-obstacle exit vector
# ---------------------------------------------------------------------------

@njit(**KERNEL_OPTS)
def vo_exit(rpx, rpy, rvx, rvy, comb_r, tau, dt):
    """Shortest displacement u from the relative velocity to the boundary of the
    truncated-cone velocity obstacle, and the outward unit normal there.

    Overlapping agents (|rel_pos| < comb_r) use the dt-horizon disc instead so
    the exit is achievable within one step. Returns (ux, uy, nx, ny, ok); ok is
    False only for exactly coincident centers."""
    if rpx == 0.0 and rpy == 0.0:
        return 0.0, 0.0, 0.0, 0.0, False

    d2 = rpx * rpx + rpy * rpy
    r2 = comb_r * comb_r

    if d2 < r2:
        # Already colliding: disc of radius comb_r/dt centered at rel_pos/dt.
        inv = 1.0 / dt
        cx = rpx * inv
        cy = rpy * inv
        rr = comb_r * inv
        wx = rvx - cx
        wy = rvy - cy
        wl2 = wx * wx + wy * wy
        if wl2 < 1e-24:
            d = np.sqrt(d2)
            ux_hat = -rpx / d
            uy_hat = -rpy / d
            wl = 0.0
        else:
            wl = np.sqrt(wl2)
            ux_hat = wx / wl
            uy_hat = wy / wl
        s = rr - wl
        return s * ux_hat, s * uy_hat, ux_hat, uy_hat, True

    inv = 1.0 / tau
    cx = rpx * inv
    cy = rpy * inv
    rr = comb_r * inv
    wx = rvx - cx
    wy = rvy - cy
    wl2 = wx * wx + wy * wy
    dot_wp = wx * rpx + wy * rpy

    if wl2 < 1e-24:
        # Exactly at the cutoff-disc center: every boundary direction ties;
        # exit radially toward the origin side.
        d = np.sqrt(d2)
        ux_hat = -rpx / d
        uy_hat = -rpy / d
        return rr * ux_hat, rr * uy_hat, ux_hat, uy_hat, True

    if dot_wp < 0.0 and dot_wp * dot_wp > r2 * wl2:
        # w falls in the cutoff-arc sector: project on the cutoff circle.
        wl = np.sqrt(wl2)
        ux_hat = wx / wl
        uy_hat = wy / wl
        s = rr - wl
        return s * ux_hat, s * uy_hat, ux_hat, uy_hat, True

    # Project on a tangent leg; pick the side by the sign of cross(rel_pos, w).
    leg = np.sqrt(d2 - r2)
    if rpx * wy - rpy * wx > 0.0:
        dx = (rpx * leg - rpy * comb_r) / d2
        dy = (rpx * comb_r + rpy * leg) / d2
    else:
        dx = -(rpx * leg + rpy * comb_r) / d2
        dy = (rpx * comb_r - rpy * leg) / d2
    t = rvx * dx + rvy * dy
    ux = t * dx - rvx
    uy = t * dy - rvy
    nx = -dy
    ny = dx
    if nx * rpx + ny * rpy > 0.0:
        nx = -nx
        ny = -ny
    return ux, uy, nx, ny, True


# ---------------------------------------------------------------------------
# uniform-grid neighbor machinery (CSR layout over sorted cell keys)
# ---------------------------------------------------------------------------

_CELL_OFFSET = np.int64(1) << np.int64(29)
_CELL_STRIDE = np.int64(1) << np.int64(30)


@njit(**KERNEL_OPTS)
def _cell_key(ix, iy):
    return (ix + _CELL_OFFSET) * _CELL_STRIDE + (iy + _CELL_OFFSET)


@njit(**KERNEL_OPTS)
def _find_cell(ukeys, key):
    lo = 0
    hi = ukeys.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if ukeys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if lo < ukeys.shape[0] and ukeys[lo] == key:
        return lo
    return -1


@njit(**KERNEL_OPTS)
def _collect_neighbors(i, pos, ids, sorted_idx, ukeys, starts, cell_size,
                       reach, rad2, max_n, nb_d2, nb_id, nb_ix):
    """Up to max_n nearest agents within sqrt(rad2) of agent i, ascending by
    (squared distance, id). Returns the count."""
    count = 0
    cxi = np.int64(np.floor(pos[i, 0] / cell_size))
    cyi = np.int64(np.floor(pos[i, 1] / cell_size))
    for gx in range(cxi - reach, cxi + reach + 1):
        for gy in range(cyi - reach, cyi + reach + 1):
            t = _find_cell(ukeys, _cell_key(gx, gy))
            if t < 0:
                continue
            for s in range(starts[t], starts[t + 1]):
                j = sorted_idx[s]
                if j == i:
                    continue
                dx = pos[j, 0] - pos[i, 0]
                dy = pos[j, 1] - pos[i, 1]
                d2 = dx * dx + dy * dy
                if d2 > rad2:
                    continue
                jid = ids[j]
                if count == max_n:
                    last = count - 1
                    if d2 > nb_d2[last] or (d2 == nb_d2[last] and jid >= nb_id[last]):
                        continue
                    p = last
                else:
                    p = count
                    count += 1
                while p > 0 and (nb_d2[p - 1] > d2 or
                                 (nb_d2[p - 1] == d2 and nb_id[p - 1] > jid)):
                    nb_d2[p] = nb_d2[p - 1]
                    nb_id[p] = nb_id[p - 1]
                    nb_ix[p] = nb_ix[p - 1]
                    p -= 1
                nb_d2[p] = d2
                nb_id[p] = jid
                nb_ix[p] = j
    return count


@njit(**KERNEL_OPTS)
def frame_solve_range(pos, vel, radius, max_speed, cls_code, ids, fmat, des,
                      sorted_idx, ukeys, starts, cell_size, reach, rad2,
                      max_n, tau, dt, frame, out_v, out_status, out_failed,
                      out_err, start, stop):
    """Per-agent pipeline for one frame over agents [start, stop): neighbor
    query, ORCA constraint construction with class-pair responsibility, and the
    closest-point solve. All reads are from the pre-step snapshot; writes are
    row i only. out_err[i] holds the offending neighbor's row on coincident
    centers, else -1."""
    cap_n = max_n if max_n > 0 else 1
    nb_d2 = np.empty(cap_n, dtype=np.float64)
    nb_id = np.empty(cap_n, dtype=np.int64)
    nb_ix = np.empty(cap_n, dtype=np.int64)
    cpts = np.empty((cap_n, 2), dtype=np.float64)
    cnrm = np.empty((cap_n, 2), dtype=np.float64)
    perm = np.empty(cap_n, dtype=np.int64)
    ident = np.empty(cap_n, dtype=np.int64)
    ppts = np.empty((cap_n, 2), dtype=np.float64)
    pnrm = np.empty((cap_n, 2), dtype=np.float64)
    spts = np.empty((cap_n, 2), dtype=np.float64)

    for i in range(start, stop):
        out_err[i] = -1
        if max_n > 0:
            count = _collect_neighbors(i, pos, ids, sorted_idx, ukeys, starts,
                                       cell_size, reach, rad2, max_n,
                                       nb_d2, nb_id, nb_ix)
        else:
            count = 0

        bad = False
        for t in range(count):
            j = nb_ix[t]
            rpx = pos[j, 0] - pos[i, 0]
            rpy = pos[j, 1] - pos[i, 1]
            rvx = vel[i, 0] - vel[j, 0]
            rvy = vel[i, 1] - vel[j, 1]
            ux, uy, nx, ny, ok = vo_exit(rpx, rpy, rvx, rvy,
                                         radius[i] + radius[j], tau, dt)
            if not ok:
                out_err[i] = j
                bad = True
                break
            f = fmat[cls_code[i], cls_code[j]]
            cpts[t, 0] = vel[i, 0] + f * ux
            cpts[t, 1] = vel[i, 1] + f * uy
            cnrm[t, 0] = nx
            cnrm[t, 1] = ny
        if bad:
            out_v[i, 0] = vel[i, 0]
            out_v[i, 1] = vel[i, 1]
            out_status[i] = FEASIBLE
            out_failed[i] = -1
            continue

        seed = _problem_seed(frame, ids[i])
        x, y, status, failed = _solve_one(cpts, cnrm, count, max_speed[i],
                                          des[i, 0], des[i, 1], seed,
                                          perm, ppts, pnrm, spts, ident)
        out_v[i, 0] = x
        out_v[i, 1] = y
        out_status[i] = status
        out_failed[i] = failed


@njit(**KERNEL_OPTS)
def min_sep_range(pos, radius, ids, sorted_idx, ukeys, starts, cell_size,
                  reach, rad2, coll_tol, start, stop):
    """(min separation, colliding-pair count) over pairs within sqrt(rad2),
    scanning agents [start, stop); each pair is counted from its lower-id side.
    Returns (inf, 0) when no pair is in range."""
    best = np.inf
    count = 0
    for i in range(start, stop):
        cxi = np.int64(np.floor(pos[i, 0] / cell_size))
        cyi = np.int64(np.floor(pos[i, 1] / cell_size))
        for gx in range(cxi - reach, cxi + reach + 1):
            for gy in range(cyi - reach, cyi + reach + 1):
                t = _find_cell(ukeys, _cell_key(gx, gy))
                if t < 0:
                    continue
                for s in range(starts[t], starts[t + 1]):
                    j = sorted_idx[s]
                    if ids[j] <= ids[i]:
                        continue
                    dx = pos[j, 0] - pos[i, 0]
                    dy = pos[j, 1] - pos[i, 1]
                    d2 = dx * dx + dy * dy
                    if d2 > rad2:
                        continue
                    sep = np.sqrt(d2) - (radius[i] + radius[j])
                    if sep < best:
                        best = sep
                    if sep < -coll_tol:
                        count += 1
    return best, count
