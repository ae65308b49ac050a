"""Quadrature support: per-site composite Gauss-Legendre grids and exact
contraction of small tensor-network integrands.

Single-spin integrands live on at most two windows around the potential
wells (everything between is doubly-exponentially small once the wells are
deep), carry indicator gates with known breakpoints (the window U, event
thresholds), and are otherwise products of Gaussians and smooth factors.
Grids are therefore built as composite Gauss-Legendre panels aligned with
the breakpoints, pruned to the wells, and refined near the origin when the
sign kernel still varies there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SiteGrid", "site_grid", "integrate_tensor", "logsumexp_sign"]


@dataclass(frozen=True)
class SiteGrid:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)


def _gl_panels(segments, nodes_per_panel):
    x0, w0 = np.polynomial.legendre.leggauss(nodes_per_panel)
    nodes, weights = [], []
    for lo, hi in segments:
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        nodes.append(mid + half * x0)
        weights.append(half * w0)
    return np.concatenate(nodes), np.concatenate(weights)


def _split(lo, hi, width):
    n = max(1, int(np.ceil((hi - lo) / width)))
    edges = np.linspace(lo, hi, n + 1)
    return list(zip(edges[:-1], edges[1:]))


def site_grid(m_star: float, a: float = 1.0, extra_breaks=(),
              half_width: float | None = None, panel_width: float = 2.0,
              nodes_per_panel: int = 16, origin_scale: float | None = None) -> SiteGrid:
    """Composite GL grid adapted to a double well at +-m_star.

    The kept domain is the union of [-m_star-K, -m_star+K] and
    [m_star-K, m_star+K] (merged when overlapping), K = half_width or
    12/sqrt(a) by default.  `extra_breaks` become panel boundaries so that
    indicator gates integrate exactly; `origin_scale` (e.g. 1/(a m_star)
    for the tanh kernel) forces fine panels near zero when the origin is
    inside the kept domain.
    """
    K = half_width if half_width is not None else 12.0 / np.sqrt(a)
    windows = [(-m_star - K, -m_star + K), (m_star - K, m_star + K)]
    if windows[0][1] >= windows[1][0]:
        windows = [(-m_star - K, m_star + K)]

    breaks = sorted(set(float(b) for b in extra_breaks))
    segments = []
    for lo, hi in windows:
        pts = [lo] + [b for b in breaks if lo < b < hi] + [hi]
        for s_lo, s_hi in zip(pts[:-1], pts[1:]):
            segments.append((s_lo, s_hi))

    if origin_scale is not None and any(lo < 0 < hi for lo, hi in windows):
        w0 = min(6.0 * origin_scale, 1.0)
        refined = []
        for s_lo, s_hi in segments:
            if s_lo < w0 and s_hi > -w0:  # overlaps the origin region
                cuts = sorted({s_lo, max(s_lo, -w0), min(s_hi, w0), s_hi})
                for u, v in zip(cuts[:-1], cuts[1:]):
                    width = origin_scale / 2 if (u >= -w0 and v <= w0) else panel_width
                    refined.extend(_split(u, v, width))
            else:
                refined.append((s_lo, s_hi))
        segments = refined

    final = []
    for s_lo, s_hi in segments:
        final.extend(_split(s_lo, s_hi, panel_width))
    nodes, weights = _gl_panels(final, nodes_per_panel)
    order = np.argsort(nodes)
    return SiteGrid(nodes[order], weights[order])


def integrate_tensor(n_axes: int, factors):
    """Contract a list of (axes, array) factors over all axes.

    Each factor's array dimension matches its axes tuple; axes are site
    labels 0..n_axes-1.  Factors are rescaled by their max magnitude before
    contraction; the result is returned as (mantissa, log_scale) with
    value = mantissa * exp(log_scale), so deep-well integrals that
    over/underflow in linear scale stay representable.
    """
    letters = "abcdefghijklmnopqrstuvwxyz"
    if n_axes > len(letters):
        raise ValueError("too many axes")
    subscripts = []
    arrays = []
    log_scale = 0.0
    for axes, arr in factors:
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != len(axes):
            raise ValueError("factor rank does not match its axes")
        peak = np.max(np.abs(arr))
        if peak == 0.0:
            return 0.0, 0.0
        log_scale += np.log(peak)
        arrays.append(arr / peak)
        subscripts.append("".join(letters[ax] for ax in axes))
    expr = ",".join(subscripts) + "->"
    val = float(np.einsum(expr, *arrays, optimize=True))
    return val, log_scale


def factor_from_log(axes, log_mag):
    """Normalize a log-magnitude factor: returns ((axes, exp(log - max)), max).

    Keeps every stored factor in [0, 1] so that deep-well exponents never
    overflow; the discarded scale is returned for the caller's log ledger.
    """
    log_mag = np.asarray(log_mag, dtype=float)
    hi = float(np.max(log_mag))
    if not np.isfinite(hi):
        return (tuple(axes), np.zeros_like(log_mag)), 0.0
    return (tuple(axes), np.exp(log_mag - hi)), hi


def quadratic_factors(A, z, axes, node_arrays, site_logs=None):
    """Normalized factor list for exp(-1/2 m^T A m + z^T m) on a tensor grid.

    axes[i] is the tensor axis of variable i; node_arrays[i] its grid;
    site_logs[i], if given, is an extra per-site log factor (gates and
    quadrature weights).  Returns (factors, log_shift): unary factors
    exp(-A_ii x^2/2 + z_i x + site_log), pair factors exp(-A_ij x y), each
    rescaled to peak 1 with the total scale in log_shift.
    """
    A = np.asarray(A, dtype=float)
    z = np.asarray(z, dtype=float)
    k = A.shape[0]
    factors = []
    shift = 0.0
    for i in range(k):
        x = node_arrays[i]
        lg = -0.5 * A[i, i] * x * x + z[i] * x
        if site_logs is not None:
            lg = lg + site_logs[i]
        fac, s = factor_from_log((axes[i],), lg)
        factors.append(fac)
        shift += s
    for i in range(k):
        for j in range(i + 1, k):
            if A[i, j] != 0.0:
                x, y = node_arrays[i], node_arrays[j]
                fac, s = factor_from_log((axes[i], axes[j]), -A[i, j] * np.outer(x, y))
                factors.append(fac)
                shift += s
    return factors, shift


def logsumexp_sign(log_mags, signs):
    """Signed log-sum-exp: returns (log|sum|, sign) of sum signs*exp(log_mags)."""
    log_mags = np.asarray(log_mags, dtype=float)
    signs = np.asarray(signs, dtype=float)
    finite = np.isfinite(log_mags)
    if not np.any(finite):
        return -np.inf, 0.0
    hi = np.max(log_mags[finite])
    s = float(np.sum(signs[finite] * np.exp(log_mags[finite] - hi)))
    if s == 0.0:
        return -np.inf, 0.0
    return hi + np.log(abs(s)), float(np.sign(s))
