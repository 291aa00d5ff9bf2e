"""numba-compiled versions of the hot loops (same contracts as ``_kernels_numpy``)."""

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True, fastmath=False)


@njit(**_OPTS)
def orthant_hits(batch, thresholds):
    n, k = batch.shape
    hits = 0
    for i in range(n):
        inside = True
        for j in range(k):
            if batch[i, j] < thresholds[j]:
                inside = False
                break
        if inside:
            hits += 1
    return hits


@njit(**_OPTS)
def project_simplex_rows(x):
    n, m = x.shape
    out = np.empty_like(x)
    u = np.empty(m)
    for i in range(n):
        # rows are short: insertion sort (descending) into a reused buffer
        for r in range(m):
            v = x[i, r]
            j = r
            while j > 0 and u[j - 1] < v:
                u[j] = u[j - 1]
                j -= 1
            u[j] = v
        css = 0.0
        theta = 0.0
        for r in range(m):
            css += u[r]
            t = (css - 1.0) / (r + 1)
            if u[r] - t > 0.0:
                theta = t
        for r in range(m):
            v = x[i, r] - theta
            out[i, r] = v if v > 0.0 else 0.0
    return out


@njit(**_OPTS)
def signed_quadform_min(y, pinv, proj, signs, range_tol):
    n, k = y.shape
    ns = signs.shape[0]
    out = np.full(n, np.inf)
    ye = np.empty(k)
    for i in range(n):
        for s in range(ns):
            for a in range(k):
                ye[a] = y[i, a] * signs[s, a]
            quad = 0.0
            rn = 0.0
            yn = 0.0
            for a in range(k):
                pa = 0.0
                ra = 0.0
                for b in range(k):
                    pa += pinv[a, b] * ye[b]
                    ra += proj[a, b] * ye[b]
                quad += ye[a] * pa
                d = ye[a] - ra
                rn += d * d
                yn += ye[a] * ye[a]
            if np.sqrt(rn) > range_tol * np.sqrt(yn):
                continue
            if quad < 0.0:
                quad = 0.0
            if quad < out[i]:
                out[i] = quad
    return out


@njit(**_OPTS)
def face_qp_min(t, sigma, p_table, sign_table, mask_table, sign_free):
    n, k = t.shape
    nc = p_table.shape[0]
    best = np.full(n, np.inf)
    best_y = np.zeros((n, k))
    w = np.zeros(k)
    y = np.empty(k)
    for i in range(n):
        scale = 0.0
        for j in range(k):
            if abs(t[i, j]) > scale:
                scale = abs(t[i, j])
        scale += 1.0
        for c in range(nc):
            skip = False
            if sign_free:
                for j in range(k):
                    if mask_table[c, j] and t[i, j] <= 0.0:
                        skip = True
                        break
            if skip:
                continue
            for a in range(k):
                w[a] = 0.0
                if mask_table[c, a]:
                    lam = 0.0
                    for b in range(k):
                        if mask_table[c, b]:
                            lam += p_table[c, a, b] * t[i, b]
                    w[a] = lam * sign_table[c, a]
            ok = True
            for a in range(k):
                ya = 0.0
                for b in range(k):
                    if mask_table[c, b]:
                        ya += w[b] * sigma[b, a]
                y[a] = ya
                if sign_free and t[i, a] <= 0.0:
                    continue
                if mask_table[c, a]:
                    lhs = ya * sign_table[c, a]
                elif sign_free:
                    lhs = abs(ya)
                else:
                    lhs = ya
                if lhs - t[i, a] + 1e-9 * abs(t[i, a]) + 1e-12 * scale < 0.0:
                    ok = False
                    break
            if not ok:
                continue
            val = 0.0
            for a in range(k):
                val += w[a] * y[a]
            val *= 0.5
            if val < best[i]:
                best[i] = val if val > 0.0 else 0.0
                for a in range(k):
                    best_y[i, a] = y[a]
    return best, best_y


@njit(**_OPTS)
def _oracle_k2(jgrid, n):
    best = np.inf
    b1 = 0
    b2 = 0
    for a1 in range(n + 1):
        for a2 in range(n + 1):
            v = jgrid[a1, a2] + jgrid[n - a1, n - a2]
            if v < best:
                best = v
                b1 = a1
                b2 = a2
    return best, b1, b2


@njit(**_OPTS)
def _oracle_k3(jgrid, n, ca, cb):
    nc = ca.shape[0]
    best = np.inf
    arg = np.zeros(3, dtype=np.int64)
    for r1 in range(nc):
        a1 = ca[r1]
        b1 = cb[r1]
        c1 = n - a1 - b1
        for r2 in range(nc):
            a2 = ca[r2]
            b2 = cb[r2]
            c2 = n - a2 - b2
            for r3 in range(nc):
                a3 = ca[r3]
                b3 = cb[r3]
                c3 = n - a3 - b3
                v = jgrid[a1, a2, a3] + jgrid[b1, b2, b3] + jgrid[c1, c2, c3]
                if v < best:
                    best = v
                    arg[0] = r1
                    arg[1] = r2
                    arg[2] = r3
    return best, arg


def oracle_min(jgrid, k, n):
    if k == 1:
        return float(jgrid[n]), np.array([[n]])
    if k == 2:
        best, a1, a2 = _oracle_k2(np.ascontiguousarray(jgrid), n)
        return float(best), np.array([[a1, a2], [n - a1, n - a2]])
    if k == 3:
        comps = np.array([(a, b) for a in range(n + 1) for b in range(n + 1 - a)],
                         dtype=np.int64)
        ca = np.ascontiguousarray(comps[:, 0])
        cb = np.ascontiguousarray(comps[:, 1])
        best, r = _oracle_k3(np.ascontiguousarray(jgrid), n, ca, cb)
        a = ca[r]
        b = cb[r]
        return float(best), np.array([a, b, n - a - b])
    raise ValueError("oracle_min supports k <= 3")
