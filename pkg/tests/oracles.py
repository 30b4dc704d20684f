"""Slow, loop-based reference implementations used only by the tests."""
import math

import numpy as np


def oks_pair(pc, gc, mask, area, sigmas, subset=None):
    num, n = 0.0, 0
    for k in range(len(sigmas)):
        if not mask[k] or (subset is not None and k not in subset):
            continue
        d2 = (pc[k][0] - gc[k][0]) ** 2 + (pc[k][1] - gc[k][1]) ** 2
        num += math.exp(-d2 / (2.0 * area * sigmas[k] ** 2))
        n += 1
    return None if n == 0 else num / n


def brute_ap(preds, gts, sigmas, thresholds, subset=None):
    """Greedy matching per threshold, then precision envelope by definition.

    Every gt must have at least one labeled keypoint inside ``subset``.
    Returns (ap per threshold, recall per threshold), or (None, None) with no gts.
    """
    n_gt = len(gts)
    if n_gt == 0:
        return None, None
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    aps, ars = [], []
    for t in thresholds:
        taken = set()
        flags = []
        for i in order:
            p = preds[i]
            best, best_g = None, None
            for gi, g in enumerate(gts):
                if g.image_id != p.image_id or gi in taken:
                    continue
                o = oks_pair(p.coords, g.coords, g.mask, g.area, sigmas, subset)
                if o is None or o < min(t, 1 - 1e-10):
                    continue
                if best is None or o > best:
                    best, best_g = o, gi
            if best_g is not None:
                taken.add(best_g)
            flags.append(best_g is not None)
        prec, rec = [], []
        tp = 0
        for n, f in enumerate(flags, start=1):
            tp += f
            prec.append(tp / n)
            rec.append(tp / n_gt)
        total = 0.0
        for r in np.linspace(0.0, 1.0, 101):
            cands = [p for p, rc in zip(prec, rec) if rc >= r]
            total += max(cands) if cands else 0.0
        aps.append(total / 101)
        ars.append(rec[-1] if rec else 0.0)
    return aps, ars


def brute_pck(preds, gts, thr, norm_fn, subset=None):
    hits, tot = {}, {}
    for p, g in zip(preds, gts):
        norm = norm_fn(g)
        if norm is None:
            continue
        for k in range(len(g.mask)):
            if not g.mask[k] or (subset is not None and k not in subset):
                continue
            d = math.dist(p.coords[k], g.coords[k])
            tot[k] = tot.get(k, 0) + 1
            hits[k] = hits.get(k, 0) + (d <= thr * norm)
    return {k: hits[k] / tot[k] for k in tot}
