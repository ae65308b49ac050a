"""Pure-Python/NumPy implementations of the hot kernels.

Same call signatures as the compiled extension `rfphi4._kernels`; the
active backend is chosen in `rfphi4._backend`.  Path enumeration is
depth-first with range (visited-set) tracking; Monte-Carlo sweeps are
vectorized over checkerboard colors.

Adjacency is passed as a padded index array `adj[k, max_deg]` (entries
past `deg[i]` unused) so both backends share one calling convention.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def range_kernels(adj, deg, u, L_max, full_mask=None):
    """Sum path weights u^{|path|+1} binned by visited-site mask.

    Paths of every length 0..L_max starting anywhere are enumerated; each
    prefix contributes to entry (start, end) of the matrix for its current
    range mask.  If full_mask is given, only that mask is accumulated (the
    fixed-range kernel); otherwise a dict mask -> (k,k) matrix is returned.
    """
    k = len(deg)
    out = {} if full_mask is None else {int(full_mask): np.zeros((k, k))}
    weights = u ** (1 + np.arange(L_max + 2))
    for start in range(k):
        mask0 = 1 << start
        _accumulate(out, full_mask, start, start, mask0, weights[0], k)
        # stack entries: (position, mask, depth, next-neighbor cursor)
        stack = [(start, mask0, 0, 0)]
        while stack:
            pos, mask, depth, cur = stack.pop()
            if depth >= L_max or cur >= deg[pos]:
                continue
            stack.append((pos, mask, depth, cur + 1))
            nxt = int(adj[pos, cur])
            nmask = mask | (1 << nxt)
            _accumulate(out, full_mask, start, nxt, nmask, weights[depth + 1], k)
            stack.append((nxt, nmask, depth + 1, 0))
    return out


def _accumulate(out, full_mask, start, pos, mask, w, k):
    if full_mask is not None:
        if mask == full_mask:
            out[full_mask][start, pos] += w
        return
    mat = out.get(mask)
    if mat is None:
        mat = out[mask] = np.zeros((k, k))
    mat[start, pos] += w


def closed_range_counts(adj, deg, t_max):
    """Counts of closed paths (start == end) binned by (range mask, length).

    Returns dict mask -> int64 array of length t_max+1; entry [t] counts
    closed paths of length t from every basepoint whose visited set is the
    mask.  Cross-checks the trace-based determinant corrections.
    """
    out = {}
    for start in range(len(deg)):
        mask0 = 1 << start
        counts = out.setdefault(mask0, np.zeros(t_max + 1, dtype=np.int64))
        counts[0] += 1
        stack = [(start, mask0, 0, 0)]
        while stack:
            pos, mask, depth, cur = stack.pop()
            if depth >= t_max or cur >= deg[pos]:
                continue
            stack.append((pos, mask, depth, cur + 1))
            nxt = int(adj[pos, cur])
            nmask = mask | (1 << nxt)
            if nxt == start:
                cnt = out.setdefault(nmask, np.zeros(t_max + 1, dtype=np.int64))
                cnt[depth + 1] += 1
            stack.append((nxt, nmask, depth + 1, 0))
    return out


def _phi4(m, m_star):
    return (m * m - m_star * m_star) ** 2 / (8.0 * m_star * m_star)


def _log_envelope(m, m_star):
    # log( e^{-(m-m*)^2/8} + e^{-(m+m*)^2/8} ); pointwise upper bound on -V
    e1 = -((m - m_star) ** 2) / 8.0
    e2 = -((m + m_star) ** 2) / 8.0
    hi = np.maximum(e1, e2)
    return hi + np.log1p(np.exp(np.minimum(e1, e2) - hi))


def heatbath_update(m_ext, sites, tvals, m_star, kappa2, rng):
    """Exact heat-bath resampling of the given sites (conditionally independent).

    Target density per site: exp(-V(m) - kappa2 m^2 / 2 + t m) with the
    quartic double well V.  Exact rejection from a two-Gaussian envelope
    built from the pointwise bound V(m) >= min((m-m*)^2, (m+m*)^2)/8.
    """
    t = np.asarray(tvals, dtype=float)
    lam = 0.25 + kappa2
    mu_p = (m_star / 4.0 + t) / lam
    mu_m = (-m_star / 4.0 + t) / lam
    lw_p = 0.5 * lam * mu_p**2
    lw_m = 0.5 * lam * mu_m**2
    prob_p = 1.0 / (1.0 + np.exp(np.clip(lw_m - lw_p, -700.0, 700.0)))

    n = len(sites)
    result = np.empty(n)
    todo = np.arange(n)
    sqrt_lam = np.sqrt(lam)
    while todo.size:
        upick = rng.random(todo.size)
        z = rng.standard_normal(todo.size)
        uacc = rng.random(todo.size)
        mu = np.where(upick < prob_p[todo], mu_p[todo], mu_m[todo])
        prop = mu + z / sqrt_lam
        log_acc = -_phi4(prop, m_star) - _log_envelope(prop, m_star)
        ok = np.log(uacc) < log_acc
        result[todo[ok]] = prop[ok]
        todo = todo[~ok]
    m_ext[sites] = result


def metropolis_update(m_ext, sites, tvals, m_star, kappa2, scale, rng):
    """Random-walk Metropolis step on the given sites; returns acceptance count."""
    t = np.asarray(tvals, dtype=float)
    cur = m_ext[sites]
    prop = cur + scale * rng.standard_normal(len(sites))
    dlog = (-_phi4(prop, m_star) + _phi4(cur, m_star)
            - 0.5 * kappa2 * (prop**2 - cur**2) + t * (prop - cur))
    accept = np.log(rng.random(len(sites))) < dlog
    m_ext[sites] = np.where(accept, prop, cur)
    return int(np.sum(accept))


def sweep(m_ext, colors, nbr, eta, q, m_star, kappa2, rng,
          algorithm="heatbath", scale=1.0):
    """One full lattice sweep (checkerboard colors in fixed order).

    m_ext is the extended field (volume sites first, then frozen boundary
    slots); nbr indexes into m_ext.  Returns the accepted-move count
    (heat-bath counts every site).
    """
    accepted = 0
    for sites in colors:
        tvals = q * m_ext[nbr[sites]].sum(axis=1) + eta[sites]
        if algorithm == "heatbath":
            heatbath_update(m_ext, sites, tvals, m_star, kappa2, rng)
            accepted += len(sites)
        else:
            accepted += metropolis_update(m_ext, sites, tvals, m_star, kappa2,
                                          scale, rng)
    return accepted
