# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: path/range enumeration and Monte-Carlo sweeps.

Mirrors the API of rfphi4._kernels_py; rfphi4._backend picks whichever is
importable.  The random-number stream is consumed in bulk per rejection
round, so results are deterministic per backend for a fixed seed.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p, sqrt

cnp.import_array()

BACKEND_NAME = "cython"


def range_kernels(cnp.int64_t[:, :] adj, cnp.int64_t[:] deg, double u,
                  int L_max, full_mask=None):
    """Path weights u^{|path|+1} binned by visited-site mask (see fallback docs)."""
    cdef int k = deg.shape[0]
    cdef int want_full = 0
    cdef unsigned long long fmask = 0
    if full_mask is not None:
        want_full = 1
        fmask = <unsigned long long> int(full_mask)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] weights = u ** (1 + np.arange(L_max + 2, dtype=np.float64))
    cdef double[:] w = weights

    out = {}
    cdef cnp.ndarray[cnp.float64_t, ndim=2] full_mat = None
    if want_full:
        full_mat = np.zeros((k, k))
        out[int(fmask)] = full_mat

    # explicit DFS stacks
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pos_s = np.empty(L_max + 2, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] mask_s = np.empty(L_max + 2, dtype=np.uint64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cur_s = np.empty(L_max + 2, dtype=np.int64)
    cdef cnp.int64_t[:] pos_v = pos_s
    cdef cnp.uint64_t[:] mask_v = mask_s
    cdef cnp.int64_t[:] cur_v = cur_s

    cdef int start, depth, pos, nxt
    cdef unsigned long long mask, nmask
    cdef cnp.ndarray[cnp.float64_t, ndim=2] mat

    for start in range(k):
        mask = (<unsigned long long> 1) << start
        if want_full:
            if mask == fmask:
                full_mat[start, start] += w[0]
        else:
            mat = _get(out, mask, k)
            mat[start, start] += w[0]
        depth = 0
        pos_v[0] = start
        mask_v[0] = mask
        cur_v[0] = 0
        while depth >= 0:
            pos = pos_v[depth]
            if depth >= L_max or cur_v[depth] >= deg[pos]:
                depth -= 1
                continue
            nxt = <int> adj[pos, cur_v[depth]]
            cur_v[depth] += 1
            nmask = mask_v[depth] | ((<unsigned long long> 1) << nxt)
            if want_full:
                if nmask == fmask:
                    full_mat[start, nxt] += w[depth + 1]
            else:
                mat = _get(out, nmask, k)
                mat[start, nxt] += w[depth + 1]
            depth += 1
            pos_v[depth] = nxt
            mask_v[depth] = nmask
            cur_v[depth] = 0
    return out


cdef cnp.ndarray[cnp.float64_t, ndim=2] _get(dict out, unsigned long long mask, int k):
    cdef object key = int(mask)
    mat = out.get(key)
    if mat is None:
        mat = np.zeros((k, k))
        out[key] = mat
    return mat


def closed_range_counts(cnp.int64_t[:, :] adj, cnp.int64_t[:] deg, int t_max):
    """Closed-path counts binned by (range mask, length); see fallback docs."""
    cdef int k = deg.shape[0]
    out = {}
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pos_s = np.empty(t_max + 2, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] mask_s = np.empty(t_max + 2, dtype=np.uint64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cur_s = np.empty(t_max + 2, dtype=np.int64)
    cdef cnp.int64_t[:] pos_v = pos_s
    cdef cnp.uint64_t[:] mask_v = mask_s
    cdef cnp.int64_t[:] cur_v = cur_s

    cdef int start, depth, pos, nxt
    cdef unsigned long long mask, nmask
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cnt

    for start in range(k):
        mask = (<unsigned long long> 1) << start
        cnt = _get_counts(out, mask, t_max)
        cnt[0] += 1
        depth = 0
        pos_v[0] = start
        mask_v[0] = mask
        cur_v[0] = 0
        while depth >= 0:
            pos = pos_v[depth]
            if depth >= t_max or cur_v[depth] >= deg[pos]:
                depth -= 1
                continue
            nxt = <int> adj[pos, cur_v[depth]]
            cur_v[depth] += 1
            nmask = mask_v[depth] | ((<unsigned long long> 1) << nxt)
            if nxt == start:
                cnt = _get_counts(out, nmask, t_max)
                cnt[depth + 1] += 1
            depth += 1
            pos_v[depth] = nxt
            mask_v[depth] = nmask
            cur_v[depth] = 0
    return out


cdef cnp.ndarray[cnp.int64_t, ndim=1] _get_counts(dict out, unsigned long long mask, int t_max):
    cdef object key = int(mask)
    cnt = out.get(key)
    if cnt is None:
        cnt = np.zeros(t_max + 1, dtype=np.int64)
        out[key] = cnt
    return cnt


cdef inline double _phi4(double m, double m_star) nogil:
    cdef double s = m * m - m_star * m_star
    return s * s / (8.0 * m_star * m_star)


cdef inline double _log_envelope(double m, double m_star) nogil:
    cdef double e1 = -(m - m_star) * (m - m_star) / 8.0
    cdef double e2 = -(m + m_star) * (m + m_star) / 8.0
    if e1 >= e2:
        return e1 + log1p(exp(e2 - e1))
    return e2 + log1p(exp(e1 - e2))


def heatbath_update(cnp.float64_t[:] m_ext, cnp.int64_t[:] sites,
                    cnp.float64_t[:] tvals, double m_star, double kappa2, rng):
    """Exact heat-bath resampling via two-Gaussian-envelope rejection."""
    cdef int n = sites.shape[0]
    cdef double lam = 0.25 + kappa2
    cdef double sqrt_lam = sqrt(lam)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mu_p = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mu_m = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] prob_p = np.empty(n)
    cdef double[:] mup = mu_p, mum = mu_m, pp = prob_p
    cdef int i
    cdef double t, lwp, lwm, dd
    for i in range(n):
        t = tvals[i]
        mup[i] = (m_star / 4.0 + t) / lam
        mum[i] = (-m_star / 4.0 + t) / lam
        lwp = 0.5 * lam * mup[i] * mup[i]
        lwm = 0.5 * lam * mum[i] * mum[i]
        dd = lwm - lwp
        if dd > 700.0:
            dd = 700.0
        elif dd < -700.0:
            dd = -700.0
        pp[i] = 1.0 / (1.0 + exp(dd))

    cdef cnp.ndarray[cnp.int64_t, ndim=1] todo = np.arange(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] upick, z, uacc
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ntodo
    cdef double[:] upick_v, z_v, uacc_v
    cdef cnp.int64_t[:] todo_v, nv
    cdef int m_rem, j, nrem
    cdef long idx
    cdef double mu, prop, log_acc
    while todo.shape[0] > 0:
        m_rem = todo.shape[0]
        upick = rng.random(m_rem)
        z = rng.standard_normal(m_rem)
        uacc = rng.random(m_rem)
        ntodo = np.empty(m_rem, dtype=np.int64)
        upick_v = upick; z_v = z; uacc_v = uacc
        todo_v = todo; nv = ntodo
        nrem = 0
        for j in range(m_rem):
            idx = todo_v[j]
            mu = mup[idx] if upick_v[j] < pp[idx] else mum[idx]
            prop = mu + z_v[j] / sqrt_lam
            log_acc = -_phi4(prop, m_star) - _log_envelope(prop, m_star)
            if log(uacc_v[j]) < log_acc:
                m_ext[sites[idx]] = prop
            else:
                nv[nrem] = idx
                nrem += 1
        todo = ntodo[:nrem]


def metropolis_update(cnp.float64_t[:] m_ext, cnp.int64_t[:] sites,
                      cnp.float64_t[:] tvals, double m_star, double kappa2,
                      double scale, rng):
    """Random-walk Metropolis step; returns acceptance count."""
    cdef int n = sites.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] z = rng.standard_normal(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = rng.random(n)
    cdef double[:] z_v = z, u_v = u
    cdef int i, acc = 0
    cdef double cur, prop, dlog
    for i in range(n):
        cur = m_ext[sites[i]]
        prop = cur + scale * z_v[i]
        dlog = (-_phi4(prop, m_star) + _phi4(cur, m_star)
                - 0.5 * kappa2 * (prop * prop - cur * cur)
                + tvals[i] * (prop - cur))
        if log(u_v[i]) < dlog:
            m_ext[sites[i]] = prop
            acc += 1
    return acc


def sweep(cnp.float64_t[:] m_ext, colors, cnp.int64_t[:, :] nbr,
          cnp.float64_t[:] eta, double q, double m_star, double kappa2, rng,
          algorithm="heatbath", double scale=1.0):
    """One full lattice sweep over checkerboard colors; see fallback docs."""
    cdef int accepted = 0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tvals
    cdef cnp.int64_t[:] sites
    cdef double[:] t_v
    cdef int i, j, twod
    cdef double s
    cdef bint heat = (algorithm == "heatbath")
    twod = nbr.shape[1]
    for color in colors:
        sites = color
        tvals = np.empty(sites.shape[0])
        t_v = tvals
        for i in range(sites.shape[0]):
            s = 0.0
            for j in range(twod):
                s += m_ext[nbr[sites[i], j]]
            t_v[i] = q * s + eta[sites[i]]
        if heat:
            heatbath_update(m_ext, sites, tvals, m_star, kappa2, rng)
            accepted += sites.shape[0]
        else:
            accepted += metropolis_update(m_ext, sites, tvals, m_star, kappa2,
                                          scale, rng)
    return accepted
