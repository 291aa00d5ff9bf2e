"""Pure-numpy reference versions of the hot loops.

Every function here has a twin with the same signature in
``_kernels_numba``; the two are checked against each other in the tests.
"""

import numpy as np


def orthant_hits(batch, thresholds):
    return int(np.count_nonzero(np.all(batch >= thresholds, axis=1)))


def project_simplex_rows(x):
    """Euclidean projection of each row of ``x`` onto the probability simplex."""
    n, m = x.shape
    u = -np.sort(-x, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, m + 1)
    cond = u - css / ind > 0
    rho = m - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(n), rho] / (rho + 1)
    return np.maximum(x - theta[:, None], 0.0)


def signed_quadform_min(y, pinv, proj, signs, range_tol):
    """min over sign rows e of (e*y)' pinv (e*y); inf when off the range of proj."""
    n, k = y.shape
    out = np.full(n, np.inf)
    chunk = max(1, 2**16 // max(n, 1))
    for start in range(0, signs.shape[0], chunk):
        e = signs[start:start + chunk]
        ye = y[:, None, :] * e[None, :, :]
        quad = np.einsum("nsi,ij,nsj->ns", ye, pinv, ye)
        resid = ye - ye @ proj.T
        rn = np.sqrt(np.sum(resid * resid, axis=2))
        yn = np.sqrt(np.sum(ye * ye, axis=2))
        quad = np.where(rn > range_tol * yn, np.inf, np.maximum(quad, 0.0))
        out = np.minimum(out, quad.min(axis=1))
    return out


def face_qp_min(t, sigma, p_table, sign_table, mask_table, sign_free):
    """Minimum of 0.5 w'Sigma w over candidate faces, subject to e*(Sigma w) >= t.

    Each candidate c fixes an active set S and signs on S; its multiplier is
    lam = p_table[c] @ t (zero off S) and w = e * lam. On S the bound reads
    e_j y_j >= t_j. Off S the sign is free when ``sign_free`` holds, so the
    bound is |y_j| >= t_j, otherwise y_j >= t_j. With ``sign_free`` a zero
    target is vacuous and faces whose active set touches one are skipped.
    """
    n, k = t.shape
    best = np.full(n, np.inf)
    best_y = np.zeros((n, k))
    scale = 1.0 + np.max(np.abs(t), axis=1)
    zero = t <= 0.0
    tol = 1e-9 * np.abs(t) + 1e-12 * scale[:, None]
    for c in range(p_table.shape[0]):
        e = sign_table[c]
        on = mask_table[c]
        lam = t @ p_table[c].T
        w = lam * e
        y = w @ sigma
        off = np.abs(y) if sign_free else y
        slack = np.where(on[None, :], y * e, off) - t + tol
        if sign_free:
            ok = np.all((slack >= 0.0) | zero, axis=1)
            ok &= ~np.any(zero & on[None, :], axis=1)
        else:
            ok = np.all(slack >= 0.0, axis=1)
        val = 0.5 * np.einsum("ni,ni->n", w, y)
        better = ok & (val < best)
        best = np.where(better, np.maximum(val, 0.0), best)
        best_y[better] = y[better]
    return best, best_y


def oracle_min(jgrid, k, n):
    """Grid minimum of the sum of rate values over <= k parts.

    ``jgrid`` has shape (n+1,)*k; entry i is J(i/n * t). Returns the minimum
    and the (k, k) integer array of per-part grid indices.
    """
    if k == 1:
        return float(jgrid[n]), np.array([[n]])
    if k == 2:
        i = np.arange(n + 1)
        vals = jgrid + jgrid[np.ix_(n - i, n - i)]
        flat = int(np.argmin(vals))
        a1, a2 = divmod(flat, n + 1)
        return float(vals.flat[flat]), np.array([[a1, a2], [n - a1, n - a2]])
    if k == 3:
        comps = np.array([(a, b) for a in range(n + 1) for b in range(n + 1 - a)])
        ca, cb = comps[:, 0], comps[:, 1]
        cc = n - ca - cb
        best = np.inf
        arg = None
        for a1, b1 in comps:
            c1 = n - a1 - b1
            vals = (jgrid[a1][np.ix_(ca, ca)]
                    + jgrid[b1][np.ix_(cb, cb)]
                    + jgrid[c1][np.ix_(cc, cc)])
            flat = int(np.argmin(vals))
            if vals.flat[flat] < best:
                best = float(vals.flat[flat])
                r2, r3 = divmod(flat, len(comps))
                arg = np.array([[a1, ca[r2], ca[r3]],
                                [b1, cb[r2], cb[r3]],
                                [c1, cc[r2], cc[r3]]])
        return best, arg
    raise ValueError("oracle_min supports k <= 3")
