"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports cleanly and the environment variable
``OBCSAA_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are always importable
as ``np_<name>`` / ``nb_<name>`` so tests and benchmarks can compare them; the
public names below are bound to whichever path is active.
"""
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("OBCSAA_DISABLE_NUMBA", "0") in ("", "0")


def backend():
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# top-k selection, ties broken towards the lower index
# ---------------------------------------------------------------------------

def np_topk_indices(mag, k):
    d = mag.shape[0]
    if k >= d:
        return np.arange(d)
    thr = np.partition(mag, d - k)[d - k]
    above = np.flatnonzero(mag > thr)
    tied = np.flatnonzero(mag == thr)[: k - above.size]
    return np.sort(np.concatenate((above, tied)))


def _topk_indices_loop(mag, k):
    d = mag.shape[0]
    out = np.empty(k, dtype=np.int64)
    if k >= d:
        for i in range(d):
            out[i] = i
        return out
    thr = np.partition(mag, d - k)[d - k]
    n_above = 0
    for i in range(d):
        if mag[i] > thr:
            n_above += 1
    n_tied = k - n_above
    j = 0
    for i in range(d):
        m = mag[i]
        if m > thr:
            out[j] = i
            j += 1
        elif m == thr and n_tied > 0:
            out[j] = i
            j += 1
            n_tied -= 1
    return out


# ---------------------------------------------------------------------------
# y = Phi[:, idx] @ vals without materialising the column gather
# ---------------------------------------------------------------------------

def np_column_matvec(phi, idx, vals):
    return phi[:, idx] @ vals


def _column_matvec_loop(phi, idx, vals):
    s = phi.shape[0]
    y = np.zeros(s)
    for j in range(idx.shape[0]):
        v = vals[j]
        if v == 0.0:
            continue
        col = idx[j]
        for r in range(s):
            y[r] += phi[r, col] * v
    return y


# ---------------------------------------------------------------------------
# exhaustive schedule search: R over all 2^U - 1 non-empty masks
# ---------------------------------------------------------------------------
# R(mask) = rho1 * (K_tot - sumK) / K_tot + base + noise / (sumK * min b_cap)^2
#           + n_selected * spars
# with base = C^2 (1 + (1+delta)(D-kappa)G^2/(DS)), noise = C^2 sigma^2 and
# spars = (1+delta)(D-kappa)G^2/D.  The first minimal mask in increasing
# integer order wins ties.

def np_enumerate_schedules(k, b_cap, rho1, base, noise, spars, chunk=1 << 16):
    u = k.shape[0]
    k_tot = k.sum()
    bits = np.arange(u, dtype=np.int64)
    best_mask, best_r = 0, np.inf
    n_masks = 1 << u
    for start in range(1, n_masks, chunk):
        masks = np.arange(start, min(start + chunk, n_masks), dtype=np.int64)
        sel = ((masks[:, None] >> bits) & 1).astype(bool)
        sum_k = sel @ k
        min_b = np.where(sel, b_cap, np.inf).min(axis=1)
        n_sel = sel.sum(axis=1)
        r = rho1 * (k_tot - sum_k) / k_tot + base + noise / (sum_k * min_b) ** 2 + n_sel * spars
        j = int(np.argmin(r))
        if r[j] < best_r:
            best_r, best_mask = float(r[j]), int(masks[j])
    return best_mask, best_r


def _enumerate_schedules_loop(k, b_cap, rho1, base, noise, spars):
    u = k.shape[0]
    k_tot = 0.0
    for i in range(u):
        k_tot += k[i]
    best_mask = 0
    best_r = np.inf
    for mask in range(1, 1 << u):
        sum_k = 0.0
        min_b = np.inf
        n_sel = 0
        for i in range(u):
            if (mask >> i) & 1:
                sum_k += k[i]
                n_sel += 1
                if b_cap[i] < min_b:
                    min_b = b_cap[i]
        r = rho1 * (k_tot - sum_k) / k_tot + base + noise / (sum_k * min_b) ** 2 + n_sel * spars
        if r < best_r:
            best_r = r
            best_mask = mask
    return best_mask, best_r


# ---------------------------------------------------------------------------
# ADMM step 1, r-block: root of s = sum_i K_i r_i(s)
# ---------------------------------------------------------------------------
# r_i(s) = max(floor, (num_i + g K_i s^-3) / den_i) is the per-coordinate
# minimiser once the coupling term's derivative -g s^-3 K_i is frozen at s.
# phi(s) = s - sum K_i r_i(s) is strictly increasing, so a Newton step
# safeguarded by a bracket converges to the unique root.

def np_admm_r_block(num, den, k, g, floor, tol=1e-9, max_iter=200):
    def r_of(s):
        return np.maximum(floor, (num + g * k * s**-3.0) / den)

    lo = floor * k.sum()
    s = max(lo, float(k @ r_of(1.0)), 1e-300)
    hi = np.inf
    for _ in range(max_iter):
        r = r_of(s)
        phi = s - float(k @ r)
        if abs(phi) <= tol * max(s, 1e-300):
            break
        if phi < 0:
            lo = s
        else:
            hi = s
        active = r > floor
        dphi = 1.0 + 3.0 * g * s**-4.0 * float(np.sum(k[active] ** 2 / den[active]))
        s_new = s - phi / dphi
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * max(s, lo)
        s = s_new
    return r_of(s)


def _admm_r_block_loop(num, den, k, g, floor, tol=1e-9, max_iter=200):
    u = k.shape[0]
    r = np.empty(u)
    lo = 0.0
    for i in range(u):
        lo += floor * k[i]
    s = 0.0
    for i in range(u):
        s += k[i] * max(floor, (num[i] + g * k[i]) / den[i])
    s = max(lo, s, 1e-300)
    hi = np.inf
    for _ in range(max_iter):
        tot = 0.0
        curv = 0.0
        for i in range(u):
            ri = (num[i] + g * k[i] * s**-3.0) / den[i]
            if ri > floor:
                curv += k[i] * k[i] / den[i]
            else:
                ri = floor
            r[i] = ri
            tot += k[i] * ri
        phi = s - tot
        if abs(phi) <= tol * max(s, 1e-300):
            break
        if phi < 0:
            lo = s
        else:
            hi = s
        s_new = s - phi / (1.0 + 3.0 * g * s**-4.0 * curv)
        if not (lo < s_new < hi):
            if np.isfinite(hi):
                s_new = 0.5 * (lo + hi)
            else:
                s_new = 2.0 * max(s, lo)
        s = s_new
    for i in range(u):
        r[i] = max(floor, (num[i] + g * k[i] * s**-3.0) / den[i])
    return r


if HAVE_NUMBA:
    nb_topk_indices = numba.njit(cache=True)(_topk_indices_loop)
    nb_column_matvec = numba.njit(cache=True)(_column_matvec_loop)
    nb_enumerate_schedules = numba.njit(cache=True)(_enumerate_schedules_loop)
    nb_admm_r_block = numba.njit(cache=True)(_admm_r_block_loop)
else:  # pragma: no cover
    nb_topk_indices = _topk_indices_loop
    nb_column_matvec = _column_matvec_loop
    nb_enumerate_schedules = _enumerate_schedules_loop
    nb_admm_r_block = _admm_r_block_loop


if USE_NUMBA:
    topk_indices = nb_topk_indices
    column_matvec = nb_column_matvec
    enumerate_schedules = nb_enumerate_schedules
    admm_r_block = nb_admm_r_block
else:
    topk_indices = np_topk_indices
    column_matvec = np_column_matvec
    enumerate_schedules = np_enumerate_schedules
    admm_r_block = np_admm_r_block
