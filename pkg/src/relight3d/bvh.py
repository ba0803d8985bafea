"""Median-split bounding volume hierarchy for ray-triangle queries.

Built once per frame from world-space triangle vertices; traversal is
vectorized over ray batches with per-node slab tests and Moller-Trumbore
leaf tests.
"""

from __future__ import annotations

import numpy as np

LEAF_SIZE = 8
EPS = 1e-12


class BVH:
    def __init__(self, tri_vertices):
        """tri_vertices: (T, 3, 3) world-space triangle corners."""
        self.tri = np.asarray(tri_vertices, dtype=np.float64)
        t = self.tri.shape[0]
        self.order = np.arange(t)
        lo = self.tri.min(axis=1)
        hi = self.tri.max(axis=1)
        centroids = self.tri.mean(axis=1)

        bounds_min, bounds_max = [], []
        left, right, start, count = [], [], [], []

        def build(idx):
            node = len(bounds_min)
            bounds_min.append(lo[idx].min(axis=0))
            bounds_max.append(hi[idx].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(-1)
            count.append(0)
            if len(idx) <= LEAF_SIZE:
                start[node] = len(ordered)
                count[node] = len(idx)
                ordered.extend(idx)
                return node
            c = centroids[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            mid = len(idx) // 2
            part = idx[np.argsort(c[:, axis], kind="stable")]
            left[node] = build(part[:mid])
            right[node] = build(part[mid:])
            return node

        ordered = []
        if t > 0:
            build(np.arange(t))
        self.order = np.array(ordered, dtype=np.int64) if ordered else np.empty(0, dtype=np.int64)
        self.bounds_min = np.array(bounds_min).reshape(-1, 3) if bounds_min else np.empty((0, 3))
        self.bounds_max = np.array(bounds_max).reshape(-1, 3) if bounds_max else np.empty((0, 3))
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)
        self.sorted_tri = self.tri[self.order] if len(self.order) else self.tri

    def _slab_hit(self, node, o, inv_d, t_best):
        t0 = (self.bounds_min[node] - o) * inv_d
        t1 = (self.bounds_max[node] - o) * inv_d
        tn = np.minimum(t0, t1).max(axis=1)
        tf = np.maximum(t0, t1).min(axis=1)
        return (tf >= np.maximum(tn, 0.0)) & (tn <= t_best)

    def _leaf_hits(self, node, o, d):
        """Moller-Trumbore against the node's triangles. Returns (n_rays, n_tris) t values (inf = miss)."""
        s, c = self.start[node], self.count[node]
        tri = self.sorted_tri[s:s + c]
        v0 = tri[:, 0]
        e1 = tri[:, 1] - tri[:, 0]
        e2 = tri[:, 2] - tri[:, 0]
        # broadcast rays (n,1,3) against triangles (1,m,3)
        pvec = np.cross(d[:, None, :], e2[None, :, :])
        det = np.einsum("nmk,mk->nm", pvec, e1)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_det = np.where(np.abs(det) > EPS, 1.0 / det, 0.0)
        tvec = o[:, None, :] - v0[None, :, :]
        u = np.einsum("nmk,nmk->nm", tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1[None, :, :])
        v = np.einsum("nk,nmk->nm", d, qvec) * inv_det
        t = np.einsum("mk,nmk->nm", e2, qvec) * inv_det
        valid = (np.abs(det) > EPS) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > EPS)
        return np.where(valid, t, np.inf)

    def intersect_closest(self, origins, dirs, t_max=np.inf):
        """Closest hit per ray: (t, triangle index); miss = (inf, -1)."""
        origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
        dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
        n = len(origins)
        best_t = np.full(n, t_max, dtype=np.float64)
        best_id = np.full(n, -1, dtype=np.int64)
        if self.tri.shape[0] == 0:
            return best_t, best_id
        with np.errstate(divide="ignore"):
            inv_d = 1.0 / dirs
        stack = [0]
        while stack:
            node = stack.pop()
            active = self._slab_hit(node, origins, inv_d, best_t)
            if not active.any():
                continue
            if self.count[node] > 0:
                ai = np.flatnonzero(active)
                ts = self._leaf_hits(node, origins[ai], dirs[ai])
                # deterministic tie-break: lowest original triangle index wins
                s, c = self.start[node], self.count[node]
                orig_ids = self.order[s:s + c]
                col_order = np.argsort(orig_ids, kind="stable")
                ts = ts[:, col_order]
                ids = orig_ids[col_order]
                jmin = np.argmin(ts, axis=1)
                tmin = ts[np.arange(len(ai)), jmin]
                better = tmin < best_t[ai]
                upd = ai[better]
                best_t[upd] = tmin[better]
                best_id[upd] = ids[jmin[better]]
            else:
                stack.append(self.right[node])
                stack.append(self.left[node])
        best_t[best_id < 0] = np.inf
        return best_t, best_id

    def intersect_any(self, origins, dirs, t_max=np.inf):
        """Occlusion query: True where any triangle lies within (0, t_max)."""
        origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
        dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
        n = len(origins)
        hit = np.zeros(n, dtype=bool)
        if self.tri.shape[0] == 0:
            return hit
        with np.errstate(divide="ignore"):
            inv_d = 1.0 / dirs
        t_lim = np.full(n, t_max, dtype=np.float64)
        stack = [0]
        while stack:
            node = stack.pop()
            active = ~hit & self._slab_hit(node, origins, inv_d, t_lim)
            if not active.any():
                continue
            if self.count[node] > 0:
                ai = np.flatnonzero(active)
                ts = self._leaf_hits(node, origins[ai], dirs[ai])
                hit[ai] |= (ts < t_lim[ai, None]).any(axis=1)
            else:
                stack.append(self.right[node])
                stack.append(self.left[node])
        return hit


def triangle_soup(positions, triangles):
    """Gather world-space triangle corners (T, 3, 3) from an indexed mesh."""
    return np.asarray(positions)[np.asarray(triangles)[:, :, 0]]
