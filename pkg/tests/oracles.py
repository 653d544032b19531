"""Independent reference implementations used by the tests.

Written as plain loops over Python floats, deliberately sharing no code
with the package beyond the data containers.
"""

from __future__ import annotations

import itertools
import math


# -- softmax / loss -----------------------------------------------------------


def softmax_list(values, allowed=None):
    """Softmax over ``values``; entries with ``allowed[k]`` False get 0."""
    if allowed is None:
        allowed = [True] * len(values)
    peak = max(v for v, a in zip(values, allowed) if a)
    exps = [math.exp(v - peak) if a else 0.0 for v, a in zip(values, allowed)]
    total = sum(exps)
    return [e / total for e in exps]


def forward_oracle(logits, n_valid_dets=None):
    n = len(logits) - 2
    out = []
    for i in range(n):
        allowed = [True] * (n + 2)
        if n_valid_dets is not None:
            for j in range(n_valid_dets, n):
                allowed[j] = False
        out.append(softmax_list([float(logits[i][j]) for j in range(n + 2)], allowed))
    return out


def backward_oracle(logits, n_valid_tracks=None):
    n = len(logits) - 2
    cols = []
    for j in range(n):
        allowed = [True] * (n + 2)
        if n_valid_tracks is not None:
            for i in range(n_valid_tracks, n):
                allowed[i] = False
        cols.append(softmax_list([float(logits[i][j]) for i in range(n + 2)], allowed))
    # back to (n + 2) x n
    return [[cols[j][i] for j in range(n)] for i in range(n + 2)]


def loss_oracle(fm, bm, gt_fm, gt_bm):
    def side(p, g):
        num, den = 0.0, 0.0
        for r in range(len(g)):
            for c in range(len(g[r])):
                if g[r][c]:
                    num += g[r][c] * -math.log(p[r][c])
                    den += g[r][c]
        return num / den if den else 0.0

    return 0.5 * (side(fm, gt_fm) + side(bm, gt_bm))


# -- confidence refinement ----------------------------------------------------


def reward(x, iou, tau):
    v = iou / tau * x
    if v > 1.0:
        v = 1.0
    return v


def refine_one(c3d, p_fp, fused, tau, beta1, beta2, prev=None):
    """One detection's refined track confidence. ``fused`` is None or
    ``(iou, c2d)``; ``prev`` is None for a newborn."""
    c_det = c3d
    b2 = beta2
    pfp = p_fp
    if fused is not None:
        iou, c2d = fused
        if iou > tau:
            c_det = reward(max(c3d, c2d), iou, tau)
            b2 = reward(beta2, iou, tau)
            pfp = 1.0 - reward(1.0 - p_fp, iou, tau)
    indicator = 1.0 if pfp < beta1 else 0.0
    if prev is None:
        return indicator * b2 * c_det
    return indicator * b2 * c_det + (1.0 - b2) * prev


# -- greedy matching by exhaustive enumeration --------------------------------


def all_matchings(edges):
    """Every set of pairwise-disjoint edges (edges are (a, b) tuples)."""
    edges = list(edges)
    out = []

    def rec(k, chosen, used_a, used_b):
        if k == len(edges):
            out.append(list(chosen))
            return
        rec(k + 1, chosen, used_a, used_b)
        a, b = edges[k]
        if a not in used_a and b not in used_b:
            chosen.append(edges[k])
            rec(k + 1, chosen, used_a | {a}, used_b | {b})
            chosen.pop()

    rec(0, [], frozenset(), frozenset())
    return out


def greedy_stable_matching(edges, rank):
    """The matching a greedy pass in ``rank`` order produces, found by
    enumeration: the unique matching in which every edge left out shares
    an endpoint with a chosen edge ranked ahead of it."""
    found = []
    for m in all_matchings(edges):
        chosen = set(m)
        ok = True
        for e in edges:
            if e in chosen:
                continue
            blocked = any(
                (f[0] == e[0] or f[1] == e[1]) and rank(f) < rank(e) for f in chosen
            )
            if not blocked:
                ok = False
                break
        if ok:
            found.append(sorted(m))
    return found


def associate_oracle(fm, bm, n_tracks, n_dets, tau_fp, tau_fn, tau_nb, tau_dt):
    n = len(fm)
    FP, NB, DT, FN = n, n + 1, n, n + 1
    eliminated = {j for j in range(n_dets) if bm[FP][j] >= tau_fp}
    vetoed = set()
    for j in range(n_dets):
        cands = list(range(n_tracks)) + [FP, NB]
        best = cands[0]
        for r in cands[1:]:
            if bm[r][j] > bm[best][j]:
                best = r
        if best == FP and bm[FP][j] >= tau_fp:
            vetoed.add(j)
        if best == NB and bm[NB][j] >= tau_nb:
            vetoed.add(j)
    edges = []
    for i in range(n_tracks):
        for j in range(n_dets):
            if j in eliminated or j in vetoed:
                continue
            if fm[i][j] > fm[i][DT] and fm[i][j] > fm[i][FN]:
                edges.append((i, j))
    candidates = greedy_stable_matching(edges, lambda e: (-fm[e[0]][e[1]], e[0], e[1]))
    assert len(candidates) == 1, candidates
    matches = candidates[0]
    used_t = {i for i, _ in matches}
    used_d = {j for _, j in matches}
    fn_set, dead, missed = set(), set(), set()
    for i in range(n_tracks):
        if i in used_t:
            continue
        if fm[i][FN] >= tau_fn:
            fn_set.add(i)
        elif fm[i][DT] >= tau_dt:
            dead.add(i)
        else:
            missed.add(i)
    newborn = {j for j in range(n_dets) if j not in used_d and j not in eliminated}
    return {
        "matches": matches,
        "eliminated": eliminated,
        "fn": fn_set,
        "dead": dead,
        "missed": missed,
        "newborn": newborn,
    }


def iou_oracle(a, b):
    ax0, ay0, aw, ah = a
    bx0, by0, bw, bh = b
    w = min(ax0 + aw, bx0 + bw) - max(ax0, bx0)
    h = min(ay0 + ah, by0 + bh) - max(ay0, by0)
    inter = max(w, 0.0) * max(h, 0.0)
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def match_2d_3d_oracle(dets2d, proj3d, tau, classes3d=None):
    """``dets2d``: (cam, (x, y, w, h), conf, cls); ``proj3d``: None or
    (cam, (x, y, w, h)). Returns {3d index: 2d index}."""
    edges, iou = [], {}
    for i, p in enumerate(proj3d):
        if p is None:
            continue
        for k, d in enumerate(dets2d):
            if d[0] != p[0]:
                continue
            if classes3d is not None and d[3] != classes3d[i]:
                continue
            v = iou_oracle(p[1], d[1])
            if v > tau:
                edges.append((i, k))
                iou[(i, k)] = v
    candidates = greedy_stable_matching(edges, lambda e: (-iou[e], e[0], e[1]))
    assert len(candidates) == 1
    return dict(candidates[0]), iou


# -- pinhole projection -------------------------------------------------------


def project_oracle(center, size, yaw, R, t, K, width, height):
    """Clipped hull of the projected corners as (x, y, w, h), or None."""
    l, w, h = size
    c, s = math.cos(yaw), math.sin(yaw)
    us, vs = [], []
    for sx, sy, sz in itertools.product((0.5, -0.5), repeat=3):
        lx, ly, lz = sx * l, sy * w, sz * h
        wx = center[0] + c * lx - s * ly
        wy = center[1] + s * lx + c * ly
        wz = center[2] + lz
        cam = [R[r][0] * wx + R[r][1] * wy + R[r][2] * wz + t[r] for r in range(3)]
        if cam[2] <= 0:
            continue
        px = K[0][0] * cam[0] + K[0][1] * cam[1] + K[0][2] * cam[2]
        py = K[1][0] * cam[0] + K[1][1] * cam[1] + K[1][2] * cam[2]
        pz = K[2][0] * cam[0] + K[2][1] * cam[1] + K[2][2] * cam[2]
        us.append(px / pz)
        vs.append(py / pz)
    if not us:
        return None
    clip = lambda v, hi: min(max(v, 0.0), hi)  # noqa: E731
    x0, x1 = clip(min(us), width), clip(max(us), width)
    y0, y1 = clip(min(vs), height), clip(max(vs), height)
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


# -- small network pieces -------------------------------------------------------


def mlp_oracle(x, weights, biases):
    """ReLU MLP on a single input vector via explicit loops."""
    h = [float(v) for v in x]
    for k, (W, b) in enumerate(zip(weights, biases)):
        out = []
        for c in range(len(b)):
            z = float(b[c])
            for r in range(len(h)):
                z += h[r] * float(W[r][c])
            out.append(z if k == len(weights) - 1 else max(z, 0.0))
        h = out
    return h


# -- metrics --------------------------------------------------------------------


def best_assignment_size(preds, gts, tp_distance):
    """Largest number of prediction/gt pairs within ``tp_distance``."""
    best = 0
    for m in all_matchings(
        [(k, g) for k, p in enumerate(preds) for g, q in enumerate(gts) if math.dist(p, q) <= tp_distance]
    ):
        best = max(best, len(m))
    return best
