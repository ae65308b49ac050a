"""Anharmonic weights: the gated product expansion, the conditional-Gaussian
activities I_G, and the assembled coarse-grained weight.

The expansion identity rewrites prod (1 + w_x) as a sum over supports G of
component-factorized terms gated by window indicators on the component
boundaries.  Integrating each term against the conditional Gaussian given
the boundary spins defines the activities; re-assembling all supports with
the fluctuation-split determinant prefactors must reproduce the original
integral, which is this module's master equivalence (exercised against a
dense quadrature oracle in the tests).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .gaussian import (constant_term, energy_split, shifted_operator,
                       source_vector)
from .lattice import (LatticeVolume, SiteSet, connected_components,
                      outer_boundary)
from .model import BoundaryField, ModelParams
from .potential import log1p_w, w_remainder
from .quadrature import (SiteGrid, integrate_tensor, logsumexp_sign,
                         quadratic_factors, site_grid)

__all__ = [
    "AnharmonicTerm",
    "expand_product_identity",
    "anharmonic_weight",
    "assemble_weight",
    "log_weight_by_quadrature",
    "default_grid",
]


def default_grid(p: ModelParams, extra_breaks=()) -> SiteGrid:
    """Per-site grid adapted to the model: window-edge breaks built in."""
    breaks = list(extra_breaks)
    if p.A2 > 0:
        breaks += [p.m_star - p.A2, p.m_star + p.A2,
                   -p.m_star + p.A2, -p.m_star - p.A2]
    return site_grid(p.m_star, p.a, extra_breaks=breaks,
                     origin_scale=1.0 / (p.a * p.m_star))


import functools as _functools


@_functools.lru_cache(maxsize=8)
def _support_catalog(shape, size_cap):
    """Per nonempty subset of the box: its components with their boundaries."""
    volume = LatticeVolume(shape)
    n = volume.nsites
    if n > size_cap:
        raise ValueError(f"volume of {n} sites exceeds expansion cap {size_cap}")
    catalog = []
    sites = list(range(n))
    for k in range(1, n + 1):
        for combo in itertools.combinations(sites, k):
            G = SiteSet(volume, combo)
            comps = [(Gi.members, outer_boundary(Gi).members)
                     for Gi in connected_components(G)]
            catalog.append((combo, comps))
    return catalog


def expand_product_identity(volume: LatticeVolume, in_universe, w_values,
                            size_cap: int = 14) -> dict:
    """Terms of the gated expansion of prod_x (1 + w_x) over supports G.

    in_universe: boolean per site (the set where the gate indicator fires);
    w_values: the per-site variables.  Returns {SiteSet G: term value} with

      term(G) = prod over components G_i of
                prod_{x in dG_i} 1_{x in U} *
                [ prod_{x in G_i} (1_{x notin U} + w_x) - prod_{x in G_i} 1_{x notin U} ]

    and 1 + sum_G term(G) equals prod_x (1 + w_x) exactly.
    """
    in_u = np.asarray(in_universe, dtype=bool)
    w = np.asarray(w_values, dtype=float)
    out = {}
    for combo, comps in _support_catalog(volume.shape, size_cap):
        term = 1.0
        for members, bnd in comps:
            if any(not in_u[x] for x in bnd):
                term = 0.0
                break
            prod_full = 1.0
            prod_ind = 1.0
            for x in members:
                if in_u[x]:
                    prod_full *= w[x]
                    prod_ind = 0.0
                else:
                    prod_full *= 1.0 + w[x]
            term *= prod_full - prod_ind
            if term == 0.0:
                break
        if term != 0.0:
            out[SiteSet(volume, combo)] = term
    return out


@dataclass(frozen=True)
class AnharmonicTerm:
    """One connected support's activity with its one-site product bounds.

    part_full/part_indicator are the two integrals whose difference is the
    value (full gated product, and the bare off-window indicator product).
    """

    support: SiteSet
    value: float
    lower_bound: float
    upper_bound: float
    part_full: float = 0.0
    part_indicator: float = 0.0
    context: dict = field(default_factory=dict)


def _component_factors(volume, Gi, boundary_sites, axis_of, grids, sigma_full,
                       eta_full, p, boundary, gates):
    """Tensor factors of exp(-DH_{G_i}) * gates over inner axes, conditional
    on the boundary-site axes.

    DH is the conditional fluctuation form; expanding its centering gives
    sparse inner-outer contact couplings plus a dense compensation among
    the outer axes (see the bound derivation in the tests).  Returns
    (factors, log_const).
    """
    pos = {int(s): k for k, s in enumerate(volume.all_sites().members)}
    isel = [pos[s] for s in Gi.members]
    A = shifted_operator(Gi, p)
    zero_bc = {int(s): 0.0 for s in boundary_sites}
    z = source_vector(Gi, sigma_full[isel], eta_full[isel], p, boundary,
                      inside_values=zero_bc if zero_bc else None)
    Ainv = np.linalg.inv(A)

    inner_axes = [axis_of[s] for s in Gi.members]
    inner_nodes = [grids[s].nodes for s in Gi.members]
    factors, log_shift = quadratic_factors(A, z, inner_axes, inner_nodes)
    # gates and quadrature weights on the inner axes
    for k, s in enumerate(Gi.members):
        factors.append(((axis_of[s],), gates[k](grids[s].nodes) * grids[s].weights))

    from .lattice import contact_matrix
    bnd = SiteSet(volume, tuple(boundary_sites))
    if len(bnd):
        D = contact_matrix(Gi, bnd)  # |Gi| x |bnd|
        # inner-outer couplings exp(q m_x m_b) on actual contacts
        for i in range(len(Gi)):
            for jb, sb in enumerate(bnd.members):
                if D[i, jb]:
                    x = grids[Gi.members[i]].nodes
                    y = grids[sb].nodes
                    factors.append(((inner_axes[i], axis_of[sb]),
                                    np.exp(p.q * np.outer(x, y))))
        # compensation -1/2 mhat^T A mhat, quadratic in the boundary values
        Q_out = p.q**2 * D.T @ Ainv @ D
        lin = p.q * D.T @ Ainv @ z
        bnd_axes = [axis_of[s] for s in bnd.members]
        bnd_nodes = [grids[s].nodes for s in bnd.members]
        comp, comp_shift = quadratic_factors(Q_out, -lin, bnd_axes, bnd_nodes)
        factors.extend(comp)
        log_shift += comp_shift
    log_const = -0.5 * float(z @ Ainv @ z) + log_shift
    return factors, log_const


def anharmonic_weight(G: SiteSet, boundary_values: dict, eta, sigma,
                      p: ModelParams, boundary: BoundaryField,
                      grids=None, inner_cap: int = 3,
                      zero_remainder: bool = False) -> AnharmonicTerm:
    """Activity I_G: conditional-Gaussian integral of the gated remainder
    bracket over a connected support G, given spins on its boundary.

      I_G = int dm_G e^{-DH_G(m_G)} [ prod (1_{m notin U} + w(m)) - prod 1_{m notin U} ]

    Also returns the one-site product bounds that must bracket it (lower:
    stiffened-curvature product of window w-integrals minus the loose
    off-window product; upper: relaxed-curvature product of the combined
    integrand), both evaluated at the conditional centering.
    """
    volume = G.volume
    if len(connected_components(G)) != 1:
        raise ValueError("G must be connected")
    if len(G) > inner_cap:
        raise ValueError(f"|G|={len(G)} beyond the tensor-quadrature cap {inner_cap}")
    sigma = np.asarray(sigma, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if grids is None:
        grids = {s: default_grid(p) for s in G.members}

    pos = {int(s): k for k, s in enumerate(volume.all_sites().members)}
    sigma_full = np.zeros(volume.nsites)
    eta_full = np.zeros(volume.nsites)
    for k, s in enumerate(G.members):
        sigma_full[pos[s]] = sigma[k]
        eta_full[pos[s]] = eta[k]

    axis_of = {s: i for i, s in enumerate(G.members)}
    in_window = lambda m: p.in_window(m).astype(float)
    out_window = lambda m: 1.0 - p.in_window(m).astype(float)

    def gate_full(m):
        if zero_remainder:
            return out_window(m)
        return out_window(m) + w_remainder(m, p)

    bnd_sites = list(boundary_values.keys())
    # boundary axes are fixed numbers here, not tensor axes: fold the values in
    # by treating them as zero-width "grids"
    fixed = {s: SiteGrid(np.array([boundary_values[s]]), np.array([1.0])) for s in bnd_sites}
    all_grids = dict(grids)
    all_grids.update(fixed)
    axis_all = dict(axis_of)
    for j, s in enumerate(bnd_sites):
        axis_all[s] = len(G) + j

    parts = []
    for gates in ([gate_full] * len(G), [out_window] * len(G)):
        factors, log_const = _component_factors(
            volume, G, bnd_sites, axis_all, all_grids, sigma_full, eta_full,
            p, boundary, gates)
        mant, log_scale = integrate_tensor(len(G) + len(bnd_sites), factors)
        parts.append(mant * np.exp(log_scale + log_const))
    value = parts[0] - parts[1]

    lower, upper = _product_bounds(G, boundary_values, eta, sigma, p, boundary, grids)
    return AnharmonicTerm(G, float(value), lower, upper,
                          part_full=float(parts[0]), part_indicator=float(parts[1]),
                          context={"boundary": dict(boundary_values)})


def _product_bounds(G, boundary_values, eta, sigma, p, boundary, grids):
    """One-site product bracket around I_G at the conditional centering."""
    from .gaussian import minimizer
    center = minimizer(G, sigma, eta, p, boundary,
                       inside_values=boundary_values if boundary_values else None,
                       mode="conditional")
    stiff = p.a + 4 * p.d * p.q
    lower_lo, upper_hi = 1.0, 1.0
    loose_prod = 1.0
    for k, s in enumerate(G.members):
        m = grids[s].nodes
        wts = grids[s].weights
        inU = p.in_window(m)
        gauss_stiff = np.exp(-0.5 * stiff * (m - center[k]) ** 2)
        gauss_loose = np.exp(-0.5 * p.a * (m - center[k]) ** 2)
        wvals = w_remainder(m, p)
        lower_lo *= float(np.sum(wts * gauss_stiff * wvals * inU))
        loose_prod *= float(np.sum(wts * gauss_loose * (~inU)))
        upper_hi *= float(np.sum(wts * gauss_loose * (wvals * inU + np.exp(log1p_w(m, p)) * (~inU))))
    return lower_lo - loose_prod, upper_hi


def assemble_weight(volume: LatticeVolume, sigma, eta, p: ModelParams,
                    boundary: BoundaryField, grids=None, master_cap: int = 4,
                    zero_remainder: bool = False):
    """Assembled coarse-grained weight: log of e^{b|box|} Z(sigma).

    Sums over all supports G the product of (i) the Gaussian determinant
    prefactor of the untouched region, (ii) the window-gated boundary-spin
    integral against the projected fluctuation form, and (iii) the
    component activities, all times e^{-inf H}.  Exact identity against the
    dense quadrature of the full integrand.
    """
    n = volume.nsites
    if n > master_cap:
        raise ValueError(f"assembly cap is {master_cap} sites")
    sigma = np.asarray(sigma, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if grids is None:
        g = default_grid(p)
        grids = {s: g for s in range(n)}
    V = volume.all_sites()

    log_terms, signs = [], []
    for bits in range(1 << n):
        members = tuple(i for i in range(n) if bits >> i & 1)
        G = SiteSet(volume, members)
        dG = outer_boundary(G, V)
        Gbar = G.union(dG)
        rest = V.difference(Gbar)

        # prefactor of the untouched region
        log_pref = 0.0
        if len(rest):
            sign_det, logdet = np.linalg.slogdet(shifted_operator(rest, p))
            if sign_det <= 0:
                raise ArithmeticError("untouched-region operator not positive definite")
            log_pref = 0.5 * len(rest) * np.log(2 * np.pi) - 0.5 * logdet

        outer, _, inf_h = energy_split(volume, G, sigma, eta, p, boundary)

        comps = connected_components(G)
        axis_of = {s: i for i, s in enumerate(dG.members)}
        for j, s in enumerate(G.members):
            axis_of[s] = len(dG) + j
        n_axes = len(dG) + len(G)

        shared = []
        if len(dG):
            M, mbar = outer.matrix, outer.center
            bnd_axes = [axis_of[s] for s in dG.members]
            bnd_nodes = [grids[s].nodes for s in dG.members]
            facs, shift = quadratic_factors(M, M @ mbar, bnd_axes, bnd_nodes)
            shared.extend(facs)
            for s in dG.members:
                m = grids[s].nodes
                shared.append(((axis_of[s],),
                               p.in_window(m).astype(float) * grids[s].weights))
            shared_const = -0.5 * float(mbar @ M @ mbar) + shift
        else:
            shared_const = 0.0

        # expand the product of per-component brackets into gate choices
        out_w = lambda m: 1.0 - p.in_window(m).astype(float)

        def full_w(m):
            if zero_remainder:
                return out_w(m)
            return out_w(m) + w_remainder(m, p)

        choice_logs, choice_signs = [], []
        for choice in itertools.product((0, 1), repeat=len(comps)):
            factors = list(shared)
            log_const = shared_const
            sign = (-1.0) ** sum(choice)
            for ci, Gi in enumerate(comps):
                gates = [full_w if choice[ci] == 0 else out_w] * len(Gi)
                bnd_i = [int(s) for s in outer_boundary(Gi, V).members]
                fs, lc = _component_factors(volume, Gi, bnd_i, axis_of, grids,
                                            sigma, eta, p, boundary, gates)
                factors.extend(fs)
                log_const += lc
            if n_axes == 0:
                choice_logs.append(log_const)
                choice_signs.append(sign)
                continue
            mant, log_scale = integrate_tensor(n_axes, factors)
            if mant == 0.0:
                continue
            choice_logs.append(log_scale + log_const + np.log(abs(mant)))
            choice_signs.append(sign * np.sign(mant))
        if not choice_logs:
            continue
        log_mag, sgn = logsumexp_sign(choice_logs, choice_signs)
        if sgn == 0.0:
            continue
        log_terms.append(log_pref + log_mag - inf_h)
        signs.append(sgn)

    log_sum, sign = logsumexp_sign(log_terms, signs)
    if sign <= 0:
        raise ArithmeticError("assembled weight is not positive")
    return float(log_sum)


def log_weight_by_quadrature(volume: LatticeVolume, sigma, eta, p: ModelParams,
                             boundary: BoundaryField, grids=None) -> float:
    """Dense-quadrature oracle for log of e^{b|box|} Z(sigma):

    the full integral of exp(-H) prod_x (1 + w(m_x)) over the box.
    """
    n = volume.nsites
    sigma = np.asarray(sigma, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if grids is None:
        g = default_grid(p)
        grids = {s: g for s in range(n)}
    V = volume.all_sites()
    A = shifted_operator(V, p)
    z = source_vector(V, sigma, eta, p, boundary)
    C0 = constant_term(V, p, boundary)
    axes = list(range(n))
    nodes = [grids[s].nodes for s in range(n)]
    factors, shift = quadratic_factors(A, z, axes, nodes)
    for s in range(n):
        m = grids[s].nodes
        factors.append(((s,), np.exp(log1p_w(m, p)) * grids[s].weights))
    mant, log_scale = integrate_tensor(n, factors)
    if mant <= 0:
        raise ArithmeticError("weight integral not positive")
    return float(np.log(mant) + log_scale + shift - C0)
