"""Compiled inner loops for partial evaluation and stochastic gradient descent."""

import numpy as np
from numba import njit


@njit(cache=True)
def interp_value(vox, dims, strides, origin, inv_spacing, q, base, frac):
    """Multilinear interpolant at ``q``; ``base``/``frac`` are caller-provided scratch."""
    d = dims.shape[0]
    for k in range(d):
        x = (q[k] - origin[k]) * inv_spacing[k]
        top = dims[k] - 1
        if x < 0.0:
            x = 0.0
        elif x > top:
            x = top
        i = int(np.floor(x))
        if i > top - 1:
            i = top - 1
        base[k] = i
        frac[k] = x - i
    value = 0.0
    for c in range(1 << d):
        w = 1.0
        off = 0
        for k in range(d):
            bit = (c >> k) & 1
            w *= frac[k] if bit else 1.0 - frac[k]
            off += (base[k] + bit) * strides[k]
        value += w * vox[off]
    return value


@njit(cache=True)
def interp_value_grad(vox, dims, strides, origin, inv_spacing, q, grad, base, frac, inside):
    """Value of the multilinear interpolant; writes its gradient (zero on clamped axes)."""
    d = dims.shape[0]
    for k in range(d):
        x = (q[k] - origin[k]) * inv_spacing[k]
        top = dims[k] - 1
        inside[k] = 0.0 <= x <= top
        if x < 0.0:
            x = 0.0
        elif x > top:
            x = top
        i = int(np.floor(x))
        if i > top - 1:
            i = top - 1
        base[k] = i
        frac[k] = x - i
        grad[k] = 0.0
    value = 0.0
    for c in range(1 << d):
        w = 1.0
        off = 0
        for k in range(d):
            bit = (c >> k) & 1
            w *= frac[k] if bit else 1.0 - frac[k]
            off += (base[k] + bit) * strides[k]
        v = vox[off]
        value += w * v
        for a in range(d):
            g = 1.0
            for k in range(d):
                bit = (c >> k) & 1
                if k == a:
                    g *= 1.0 if bit else -1.0
                else:
                    g *= frac[k] if bit else 1.0 - frac[k]
            grad[a] += g * v
    for k in range(d):
        grad[k] = grad[k] * inv_spacing[k] if inside[k] else 0.0
    return value


@njit(cache=True)
def bspline_move(sids, w0, w2, delta, disp, hess, sim_terms, bend_terms, points, target_values,
                 vox, dims, strides, origin, inv_spacing, mult):
    """Shift one control point by ``delta`` and refresh the per-sample terms it touches."""
    d = delta.shape[0]
    npair = mult.shape[0]
    q = np.empty(d)
    base = np.empty(d, dtype=np.int64)
    frac = np.empty(d)
    for n in range(sids.shape[0]):
        s = sids[n]
        for m in range(d):
            disp[s, m] += w0[n] * delta[m]
            q[m] = points[s, m] + disp[s, m]
        b = 0.0
        for p in range(npair):
            for m in range(d):
                h = hess[s, p, m] + w2[n, p] * delta[m]
                hess[s, p, m] = h
                b += mult[p] * h * h
        bend_terms[s] = b
        r = target_values[s] - interp_value(vox, dims, strides, origin, inv_spacing, q, base, frac)
        sim_terms[s] = r * r


@njit(cache=True)
def gather_rows(src, rows):
    """``src[rows]`` for a C-contiguous array, viewed as 2D rows."""
    flat = src.reshape(src.shape[0], -1)
    width = flat.shape[1]
    out = np.empty((rows.shape[0], width))
    for n in range(rows.shape[0]):
        r = rows[n]
        for j in range(width):
            out[n, j] = flat[r, j]
    return out


@njit(cache=True)
def scatter_rows(dst, rows, values):
    flat = dst.reshape(dst.shape[0], -1)
    width = flat.shape[1]
    for n in range(rows.shape[0]):
        r = rows[n]
        for j in range(width):
            flat[r, j] = values[n, j]


@njit(cache=True)
def bspline_basis(u, out, deriv):
    if deriv == 0:
        out[0] = (1 - u) ** 3 / 6
        out[1] = (3 * u**3 - 6 * u**2 + 4) / 6
        out[2] = (-3 * u**3 + 3 * u**2 + 3 * u + 1) / 6
        out[3] = u**3 / 6
    elif deriv == 1:
        out[0] = -0.5 * (1 - u) ** 2
        out[1] = 1.5 * u * u - 2 * u
        out[2] = -1.5 * u * u + u + 0.5
        out[3] = 0.5 * u * u
    else:
        out[0] = 1 - u
        out[1] = 3 * u - 2
        out[2] = 1 - 3 * u
        out[3] = u


@njit(cache=True)
def weighted_gradient_kernel(coef, ctrl_dims, grid_min, grid_spacing, cell_dims, points, target_values,
                             vox, dims, strides, img_origin, img_inv_spacing, w_sim, w_mag,
                             offsets, orders, mult, grad):
    """Accumulate the gradient of ``w_sim * SSD + w_mag * bending`` over ``points`` into ``grad``.

    ``orders[p, k]`` is the derivative order along axis ``k`` of Hessian pair ``p``.
    Returns the two (unweighted) objective values on these points.
    """
    d = points.shape[1]
    nk = offsets.shape[0]
    npair = orders.shape[0]
    n = points.shape[0]
    basis = np.empty((3, d, 4))
    cell = np.empty(d, dtype=np.int64)
    idx = np.empty(nk, dtype=np.int64)
    w = np.empty(nk)
    w2 = np.empty((nk, npair))
    q = np.empty(d)
    ig = np.empty(d)
    base = np.empty(d, dtype=np.int64)
    frac = np.empty(d)
    inside = np.empty(d, dtype=np.bool_)
    hs = np.empty((npair, d))
    sim_total = 0.0
    bend_total = 0.0
    gb = 2.0 * w_mag / n
    for s in range(n):
        for k in range(d):
            h = grid_spacing[k]
            t = (points[s, k] - grid_min[k]) / h
            c = int(np.floor(t))
            if c < 0:
                c = 0
            elif c > cell_dims[k] - 1:
                c = cell_dims[k] - 1
            cell[k] = c
            u = t - c
            u2 = u * u
            u3 = u2 * u
            v1 = 1 - u
            basis[0, k, 0] = v1 * v1 * v1 / 6
            basis[0, k, 1] = (3 * u3 - 6 * u2 + 4) / 6
            basis[0, k, 2] = (-3 * u3 + 3 * u2 + 3 * u + 1) / 6
            basis[0, k, 3] = u3 / 6
            basis[1, k, 0] = -0.5 * v1 * v1 / h
            basis[1, k, 1] = (1.5 * u2 - 2 * u) / h
            basis[1, k, 2] = (-1.5 * u2 + u + 0.5) / h
            basis[1, k, 3] = 0.5 * u2 / h
            h2 = h * h
            basis[2, k, 0] = (1 - u) / h2
            basis[2, k, 1] = (3 * u - 2) / h2
            basis[2, k, 2] = (1 - 3 * u) / h2
            basis[2, k, 3] = u / h2
        for m in range(d):
            q[m] = points[s, m]
            for p in range(npair):
                hs[p, m] = 0.0
        for j in range(nk):
            flat = 0
            wj = 1.0
            for k in range(d):
                o = offsets[j, k]
                flat = flat * ctrl_dims[k] + cell[k] + o
                wj *= basis[0, k, o]
            idx[j] = flat
            w[j] = wj
            for p in range(npair):
                v = 1.0
                for k in range(d):
                    v *= basis[orders[p, k], k, offsets[j, k]]
                w2[j, p] = v
            for m in range(d):
                cm = coef[flat, m]
                q[m] += wj * cm
                for p in range(npair):
                    hs[p, m] += w2[j, p] * cm
        value = interp_value_grad(vox, dims, strides, img_origin, img_inv_spacing, q, ig, base, frac, inside)
        r = target_values[s] - value
        sim_total += r * r
        bterm = 0.0
        for p in range(npair):
            for m in range(d):
                bterm += mult[p] * hs[p, m] * hs[p, m]
        bend_total += bterm
        gs = -2.0 * r * w_sim / n
        for m in range(d):
            ig[m] *= gs
            for p in range(npair):
                hs[p, m] *= gb * mult[p]
        for j in range(nk):
            flat = idx[j]
            for m in range(d):
                acc = ig[m] * w[j]
                for p in range(npair):
                    acc += hs[p, m] * w2[j, p]
                grad[flat, m] += acc
    return sim_total / n, bend_total / n


@njit(cache=True)
def sgd_kernel(coef, ctrl_dims, grid_min, grid_spacing, cell_dims, batch_points, batch_values,
               vox, dims, strides, img_origin, img_inv_spacing, w_sim, w_mag, offsets, orders, mult,
               steps, limit):
    """Plain SGD over precomputed minibatches; returns the diverging iteration or -1."""
    grad = np.zeros_like(coef)
    for t in range(steps.shape[0]):
        grad[:] = 0.0
        weighted_gradient_kernel(coef, ctrl_dims, grid_min, grid_spacing, cell_dims, batch_points[t],
                                 batch_values[t], vox, dims, strides, img_origin, img_inv_spacing,
                                 w_sim, w_mag, offsets, orders, mult, grad)
        bad = False
        for i in range(coef.shape[0]):
            for m in range(coef.shape[1]):
                c = coef[i, m] - steps[t] * grad[i, m]
                coef[i, m] = c
                if not np.isfinite(c) or abs(c) > limit:
                    bad = True
        if bad:
            return t
    return -1


@njit(cache=True)
def locate_points(points, sids, group, cand_ptr, cand_idx, v0, inv, tol, owner, bary):
    """Assign each sample ``sids[n]`` to the lowest-index candidate simplex containing it.

    Candidates for sample ``n`` are ``cand_idx[cand_ptr[g]:cand_ptr[g + 1]]`` with
    ``g = group[n]``, sorted ascending.  When none contains the point, the
    candidate with the largest minimum barycentric coordinate is used.
    Returns the number of samples that needed that fallback.
    """
    d = points.shape[1]
    lam = np.empty(d + 1)
    best = np.empty(d + 1)
    misses = 0
    for n in range(sids.shape[0]):
        s = sids[n]
        g = group[n]
        chosen = -1
        fallback = -1
        best_min = -np.inf
        for c in range(cand_ptr[g], cand_ptr[g + 1]):
            t = cand_idx[c]
            total = 0.0
            for a in range(d):
                acc = 0.0
                for b in range(d):
                    acc += inv[t, a, b] * (points[s, b] - v0[t, b])
                lam[a + 1] = acc
                total += acc
            lam[0] = 1.0 - total
            low = lam[0]
            for a in range(1, d + 1):
                if lam[a] < low:
                    low = lam[a]
            if low >= tol:
                chosen = t
                for a in range(d + 1):
                    best[a] = lam[a]
                break
            if low > best_min:
                best_min = low
                fallback = t
                for a in range(d + 1):
                    best[a] = lam[a]
        if chosen < 0:
            chosen = fallback
            misses += 1
        owner[s] = chosen
        for a in range(d + 1):
            bary[s, a] = best[a]
    return misses


@njit(cache=True)
def mesh_similarity(sids, owner, bary, simplices, src, target_values, vox, dims, strides,
                    origin, inv_spacing, sim_terms):
    """Map samples through their source simplices and refresh squared intensity differences."""
    d = src.shape[1]
    q = np.empty(d)
    base = np.empty(d, dtype=np.int64)
    frac = np.empty(d)
    for n in range(sids.shape[0]):
        s = sids[n]
        t = owner[s]
        for m in range(d):
            acc = 0.0
            for a in range(d + 1):
                acc += bary[s, a] * src[simplices[t, a], m]
            q[m] = acc
        r = target_values[s] - interp_value(vox, dims, strides, origin, inv_spacing, q, base, frac)
        sim_terms[s] = r * r
