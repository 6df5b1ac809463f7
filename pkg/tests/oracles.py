"""Independent reference implementations used by the tests.

Written for clarity rather than speed; none of them shares code with the
package beyond its public types.
"""
import numpy as np

from trajlstm.neighborhood import NeighborSet
from trajlstm.smoothing import SmoothedTrack


def line_fit_oracle(series, window=11, period=0.1):
    """Fit a line by the normal equations in every (possibly truncated) window."""
    s = np.asarray(series, dtype=float)
    n, h = len(s), window // 2
    value, slope = np.empty(n), np.empty(n)
    for t in range(n):
        idx = np.arange(max(0, t - h), min(n, t + h + 1))
        a = np.column_stack([np.ones(len(idx)), idx - t])
        coef = np.linalg.solve(a.T @ a, a.T @ s[idx])
        value[t], slope[t] = coef
    return value, slope / period


def one_frame_tracks(vehicles, frame=1):
    """vehicles: iterable of (vid, lane, y, preceding, x, vx, vy, type)."""
    tracks = []
    for v in vehicles:
        vid, lane, y, prec = v[:4]
        x, vx, vy, typ = (v[4:] + (0.0, 0.0, 0.0, 0))[:4] if len(v) > 4 else (0.0, 0.0, 0.0, 0)
        tracks.append(SmoothedTrack(vid, np.array([frame]), np.array([x]), np.array([y]),
                                    np.array([vx]), np.array([vy]), np.array([lane]),
                                    type_code=typ, preceding=np.array([prec or 0])))
    return tracks


def brute_force_neighbors(vehicles, target):
    """All-pairs scan over one frame's (vid, lane, y, preceding) rows."""
    info = {v[0]: v for v in vehicles}

    def lead(vid):
        if vid is None:
            return None
        p = info[vid][3]
        return p if p in info else None

    def follow(vid):
        if vid is None:
            return None
        best = None
        for u in info:
            if lead(u) == vid and (best is None or (info[u][2], -u) > (info[best][2], -best)):
                best = u
        return best

    def closest(lane, y):
        best, key = None, None
        for u, (_, ln, yy, _) in ((u, info[u][:4]) for u in info):
            if ln != lane:
                continue
            k = (abs(yy - y), 0 if yy >= y else 1, u)
            if key is None or k < key:
                best, key = u, k
        return best

    _, lane, y, _ = info[target][:4]
    left, right, front = closest(lane - 1, y), closest(lane + 1, y), lead(target)
    return NeighborSet(l=left, r=right, f=front, b=follow(target), fl=lead(left), fr=lead(right),
                       bl=follow(left), br=follow(right), ff=lead(front))


def random_frame(rng, n):
    ids = rng.choice(np.arange(1, 500), size=n, replace=False).tolist()
    rows = []
    for vid in ids:
        lane = int(rng.integers(1, 6))
        # coarse grid so equal gaps and equal positions occur
        y = float(rng.integers(0, 40)) * 2.5
        rows.append([vid, lane, y, None])
    order = sorted(rows, key=lambda r: (r[2], r[0]))
    for i, r in enumerate(order):
        u = rng.random()
        if u < 0.6:
            ahead = [o for o in order[i + 1:] if o[1] == r[1]]
            r[3] = ahead[0][0] if ahead else None
        elif u < 0.8 and i + 1 < len(order):
            r[3] = order[int(rng.integers(i + 1, len(order)))][0]
        elif u < 0.9:
            r[3] = 999  # leader outside the scene
    return [tuple(r) for r in rows]
