"""Exact Gaussian machinery on finite volumes.

Dirichlet Laplacians, resolvents by symmetric positive-definite solve,
global/conditional quadratic minimizers, the fluctuation split of the
quadratic Hamiltonian, determinant factorizations, and the Gaussian
partition value.

The quadratic Hamiltonian on a volume V with sign field sigma, random
field eta and boundary values (continuous spins on the in-box boundary,
an ambient BoundaryField outside the box) is

    H(m) = (q/2) sum_{<xy> in V} (m_x - m_y)^2
         + (q/2) sum_{x in V, y in dV} (m_x - bc_y)^2
         + (a/2) sum_x (m_x - m* sigma_x)^2 - sum_x eta_x m_x

which in normal form reads H = (1/2)<m, A m> - <m, z> + C0 with
A = a - q*Lap_V,  z = a m* sigma + eta + q * (boundary contact sums).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .lattice import LatticeVolume, SiteSet, outer_boundary
from .model import BoundaryField, ModelParams

__all__ = [
    "GaussianSpec",
    "ConditionalGaussian",
    "laplacian",
    "resolvent_direct",
    "shifted_operator",
    "source_vector",
    "constant_term",
    "direct_energy",
    "minimizer",
    "min_energy",
    "min_energy_normalized",
    "energy_split",
    "det_split",
    "log_gaussian_partition",
    "gaussian_partition",
]


@dataclass(frozen=True)
class GaussianSpec:
    """A positive-definite quadratic form with centering and offset.

    value(m) = (1/2) <m - center, matrix (m - center)> + constant
    """

    support: SiteSet
    matrix: np.ndarray
    center: np.ndarray
    constant: float = 0.0

    def evaluate(self, m) -> float:
        if len(self.support) == 0:
            return float(self.constant)
        dm = np.asarray(m, dtype=float) - self.center
        return 0.5 * float(dm @ self.matrix @ dm) + self.constant

    def validate(self, atol=1e-10):
        M = self.matrix
        if M.size:
            if not np.allclose(M, M.T, atol=atol):
                raise ValueError("matrix not symmetric")
            sla.cholesky(M)  # raises LinAlgError if not positive definite
        return True


@dataclass(frozen=True)
class ConditionalGaussian:
    """Gaussian fluctuation form whose center is affine in the conditioning field.

    center(m_bnd) = base_center + response @ m_bnd; the quadratic matrix is
    block-diagonal over connected components of the support.
    """

    support: SiteSet
    matrix: np.ndarray
    base_center: np.ndarray
    response: np.ndarray  # shape (|support|, |boundary|)

    def center(self, m_bnd=None) -> np.ndarray:
        if self.response.shape[1] == 0 or m_bnd is None:
            return self.base_center
        return self.base_center + self.response @ np.asarray(m_bnd, dtype=float)

    def evaluate(self, m, m_bnd=None) -> float:
        if len(self.support) == 0:
            return 0.0
        dm = np.asarray(m, dtype=float) - self.center(m_bnd)
        return 0.5 * float(dm @ self.matrix @ dm)


def laplacian(V: SiteSet) -> np.ndarray:
    """Dirichlet lattice Laplacian on V: 1 on nn pairs inside V, -2d on the diagonal."""
    vol = V.volume
    idx = V.indices()
    pos = {int(s): k for k, s in enumerate(idx)}
    n, d = len(idx), vol.dim
    table, _ = vol.neighbor_table()
    L = np.zeros((n, n))
    np.fill_diagonal(L, -2.0 * d)
    for k, s in enumerate(idx):
        for j in table[s]:
            if j >= 0 and int(j) in pos:
                L[k, pos[int(j)]] = 1.0
    return L


def resolvent_direct(V: SiteSet, c: float, check_residual: float | None = None) -> np.ndarray:
    """R_V = (c - Lap_V)^{-1} by SPD direct solve."""
    if len(V) == 0:
        raise ValueError("resolvent on the empty set")
    if c <= 0:
        raise ValueError("resolvent shift c must be positive")
    A = c * np.eye(len(V)) - laplacian(V)
    cf = sla.cho_factor(A)
    R = sla.cho_solve(cf, np.eye(len(V)))
    R = 0.5 * (R + R.T)
    if check_residual is not None:
        resid = np.max(np.abs(A @ R - np.eye(len(V))))
        if resid > check_residual:
            raise ArithmeticError(f"resolvent residual {resid:.3e} above {check_residual:.1e}")
    return R


def shifted_operator(V: SiteSet, p: ModelParams) -> np.ndarray:
    """A_V = a - q * Lap_V."""
    return p.a * np.eye(len(V)) - p.q * laplacian(V)


def _contact_vectors(V: SiteSet, inside_values: dict | None, boundary: BoundaryField):
    """Per-site boundary contact sums (values and squares) for V.

    Neighbors of V that are inside the box but outside V take values from
    `inside_values`; out-of-box neighbors take values from `boundary`.
    """
    vol = V.volume
    table, _ = vol.neighbor_table()
    vset = set(V.members)
    contact = np.zeros(len(V))
    contact_sq = np.zeros(len(V))
    for k, s in enumerate(V.members):
        for j in table[s]:
            if j >= 0 and int(j) not in vset:
                if inside_values is None or int(j) not in inside_values:
                    raise ValueError(f"missing boundary value for in-box site {int(j)}")
                v = float(inside_values[int(j)])
                contact[k] += v
                contact_sq[k] += v * v
        for coordinate in vol.ambient_neighbors(s):
            v = boundary(coordinate)
            contact[k] += v
            contact_sq[k] += v * v
    return contact, contact_sq


def source_vector(V: SiteSet, sigma, eta, p: ModelParams,
                  boundary: BoundaryField, inside_values: dict | None = None) -> np.ndarray:
    """z = a m* sigma + eta + q * (contact sums) on V."""
    sigma = np.asarray(sigma, dtype=float)
    eta = np.asarray(eta, dtype=float)
    contact, _ = _contact_vectors(V, inside_values, boundary)
    return p.a * p.m_star * sigma + eta + p.q * contact


def constant_term(V: SiteSet, p: ModelParams, boundary: BoundaryField,
                  inside_values: dict | None = None) -> float:
    """C0 = (a m*^2/2)|V| + (q/2) * sum of squared boundary contacts."""
    _, contact_sq = _contact_vectors(V, inside_values, boundary)
    return 0.5 * p.a * p.m_star**2 * len(V) + 0.5 * p.q * float(np.sum(contact_sq))


def direct_energy(V: SiteSet, m, sigma, eta, p: ModelParams,
                  boundary: BoundaryField, inside_values: dict | None = None) -> float:
    """Evaluate the quadratic Hamiltonian term by term (oracle-style)."""
    vol = V.volume
    m = np.asarray(m, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    eta = np.asarray(eta, dtype=float)
    idx = V.indices()
    pos = {int(s): k for k, s in enumerate(idx)}
    table, _ = vol.neighbor_table()
    e = 0.0
    for k, s in enumerate(idx):
        for j in table[s]:
            if j < 0:
                continue
            if int(j) in pos:
                if int(j) > s:  # each in-V pair once
                    e += 0.5 * p.q * (m[k] - m[pos[int(j)]]) ** 2
            else:
                if inside_values is None or int(j) not in inside_values:
                    raise ValueError(f"missing boundary value for in-box site {int(j)}")
                e += 0.5 * p.q * (m[k] - inside_values[int(j)]) ** 2
        for coordinate in vol.ambient_neighbors(s):
            e += 0.5 * p.q * (m[k] - boundary(coordinate)) ** 2
    e += 0.5 * p.a * float(np.sum((m - p.m_star * sigma) ** 2))
    e -= float(eta @ m)
    return e


def minimizer(V: SiteSet, sigma, eta, p: ModelParams, boundary: BoundaryField,
              inside_values: dict | None = None, mode: str = "global",
              per_component: bool = True) -> np.ndarray:
    """Minimizer of the quadratic Hamiltonian on V.

    mode="global": V is the whole domain, boundary data comes from the
    ambient field only.  mode="conditional": V sits inside a larger box and
    `inside_values` supplies the continuous spins on the separating in-box
    boundary; the solve decouples over connected components of V.
    """
    if mode not in ("global", "conditional"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "conditional" and inside_values is None:
        # legal only if V has no in-box exterior neighbors
        if len(outer_boundary(V)) > 0:
            raise ValueError("conditional mode requires boundary values on the separating set")
    sigma = np.asarray(sigma, dtype=float)
    eta = np.asarray(eta, dtype=float)

    if mode == "conditional" and per_component:
        from .lattice import connected_components
        out = np.zeros(len(V))
        pos = {int(s): k for k, s in enumerate(V.members)}
        for comp in connected_components(V):
            sel = [pos[s] for s in comp.members]
            z = source_vector(comp, sigma[sel], eta[sel], p, boundary, inside_values)
            A = shifted_operator(comp, p)
            out[sel] = sla.cho_solve(sla.cho_factor(A), z)
        return out

    z = source_vector(V, sigma, eta, p, boundary, inside_values)
    A = shifted_operator(V, p)
    return sla.cho_solve(sla.cho_factor(A), z)


def min_energy(volume: LatticeVolume, sigma, eta, p: ModelParams,
               boundary: BoundaryField) -> float:
    """Minimum of the quadratic Hamiltonian on the full box, closed form.

    inf H = -(a^2 m*^2 / 2q) <sigma, R sigma> + (a m*^2 / 2)|box|
            - (a m* / q) <eta + eta~, R sigma> - (1/2q) <eta + eta~, R (eta + eta~)>
            + (q/2) sum of squared boundary contacts,

    with eta~ = q * (ambient boundary contact sums) and R the resolvent at
    c = a/q.  Verified against direct minimization in the tests.
    """
    V = volume.all_sites()
    sigma = np.asarray(sigma, dtype=float)
    eta = np.asarray(eta, dtype=float)
    R = resolvent_direct(V, p.c)
    contact, contact_sq = _contact_vectors(V, None, boundary)
    eta_t = eta + p.q * contact
    t1 = -(p.a**2 * p.m_star**2 / (2 * p.q)) * float(sigma @ R @ sigma)
    t2 = 0.5 * p.a * p.m_star**2 * len(V)
    t3 = -(p.a * p.m_star / p.q) * float(eta_t @ R @ sigma)
    t4 = -(1 / (2 * p.q)) * float(eta_t @ R @ eta_t)
    t5 = 0.5 * p.q * float(np.sum(contact_sq))
    return t1 + t2 + t3 + t4 + t5


def min_energy_normalized(volume: LatticeVolume, sigma, eta, p: ModelParams,
                          boundary: BoundaryField) -> float:
    """Minimum energy with the sign-independent parts subtracted:

    inf H(sigma) - inf H(+1) - (a m*/q) <eta, R 1>.

    The raw closed form is `min_energy`; this variant isolates the pieces
    that distinguish sign configurations (pair term, disorder coupling,
    boundary coupling).
    """
    V = volume.all_sites()
    eta = np.asarray(eta, dtype=float)
    R = resolvent_direct(V, p.c)
    base = min_energy(volume, np.ones(len(V)), eta, p, boundary)
    shift = (p.a * p.m_star / p.q) * float(eta @ R @ np.ones(len(V)))
    return min_energy(volume, sigma, eta, p, boundary) - base - shift


def energy_split(volume: LatticeVolume, G: SiteSet, sigma, eta, p: ModelParams,
                 boundary: BoundaryField):
    """Fluctuation split of H on the box: H = DH_outer + DH_cond + inf H.

    Returns (outer, conditional, min_energy) where `outer` is the Gaussian
    form on dG (matrix = inverse of the projected inverse of a - q*Lap,
    centered at the global minimizer) and `conditional` is the fluctuation
    form on box \\ dG centered at the conditional minimizer given m_dG.
    """
    V = volume.all_sites()
    if not G.issubset(V):
        raise ValueError("G must lie inside the box")
    dG = outer_boundary(G, V)
    rest = V.difference(dG)
    sigma = np.asarray(sigma, dtype=float)
    eta = np.asarray(eta, dtype=float)
    pos = {int(s): k for k, s in enumerate(V.members)}

    mbar = minimizer(V, sigma, eta, p, boundary, mode="global")
    inf_h = min_energy(volume, sigma, eta, p, boundary)

    bsel = [pos[s] for s in dG.members]
    rsel = [pos[s] for s in rest.members]

    A = shifted_operator(V, p)
    if len(dG) > 0:
        # Schur complement of A onto dG = inverse of the projected inverse
        A_bb = A[np.ix_(bsel, bsel)]
        A_br = A[np.ix_(bsel, rsel)]
        A_rr = A[np.ix_(rsel, rsel)]
        M = A_bb - A_br @ sla.cho_solve(sla.cho_factor(A_rr), A_br.T)
        outer = GaussianSpec(dG, 0.5 * (M + M.T), mbar[bsel], 0.0)
    else:
        outer = GaussianSpec(dG, np.zeros((0, 0)), np.zeros(0), 0.0)

    A_sub = shifted_operator(rest, p)
    if len(rest) > 0:
        base_boundary = {int(s): 0.0 for s in dG.members}
        z0 = source_vector(rest, sigma[rsel], eta[rsel], p, boundary, base_boundary)
        cf = sla.cho_factor(A_sub)
        base = sla.cho_solve(cf, z0)
        # response of the conditional center to the dG values: q * A^{-1} d_{rest,dG}
        contact_mat = np.zeros((len(rest), len(dG)))
        table, _ = volume.neighbor_table()
        bpos = {int(s): k for k, s in enumerate(dG.members)}
        for k, s in enumerate(rest.members):
            for j in table[s]:
                if j >= 0 and int(j) in bpos:
                    contact_mat[k, bpos[int(j)]] += 1.0
        response = p.q * sla.cho_solve(cf, contact_mat) if len(dG) else np.zeros((len(rest), 0))
        conditional = ConditionalGaussian(rest, A_sub, base, response)
    else:
        conditional = ConditionalGaussian(rest, np.zeros((0, 0)), np.zeros(0), np.zeros((0, len(dG))))

    return outer, conditional, inf_h


def split_energy_value(outer: GaussianSpec, conditional: ConditionalGaussian,
                       inf_h: float, volume: LatticeVolume, m) -> float:
    """Evaluate the three-part split at a full-box configuration m."""
    m = np.asarray(m, dtype=float)
    pos = {int(s): k for k, s in enumerate(volume.all_sites().members)}
    mb = m[[pos[s] for s in outer.support.members]]
    mr = m[[pos[s] for s in conditional.support.members]]
    return outer.evaluate(mb) + conditional.evaluate(mr, mb) + inf_h


def det_split(Q: np.ndarray, V_positions) -> tuple[float, float]:
    """Factor det Q = det(Pi_V Q^{-1} Pi_V)^{-1} * det Q_{rest}.

    V_positions indexes rows/columns of Q.  Returns both factors.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    V_positions = sorted(int(i) for i in V_positions)
    rest = [i for i in range(n) if i not in set(V_positions)]
    Qinv = sla.cho_solve(sla.cho_factor(Q), np.eye(n))
    block = Qinv[np.ix_(V_positions, V_positions)]
    det_block = sla.det(block)
    if det_block <= 0 or not np.isfinite(det_block):
        raise ArithmeticError("projected block of the inverse is numerically singular")
    f1 = 1.0 / det_block
    f2 = sla.det(Q[np.ix_(rest, rest)]) if rest else 1.0
    return f1, f2


def log_gaussian_partition(volume: LatticeVolume, sigma, eta, p: ModelParams,
                           boundary: BoundaryField) -> float:
    """log of integral e^{-H} dm = (n/2) log 2pi - (1/2) log det(a - q Lap) - inf H."""
    V = volume.all_sites()
    n = len(V)
    sign, logdet = np.linalg.slogdet(shifted_operator(V, p))
    if sign <= 0:
        raise ArithmeticError("a - q*Lap is not positive definite")
    return 0.5 * n * np.log(2 * np.pi) - 0.5 * logdet - min_energy(volume, sigma, eta, p, boundary)


def gaussian_partition(volume: LatticeVolume, sigma, eta, p: ModelParams,
                       boundary: BoundaryField) -> float:
    """exp of log_gaussian_partition; may under/overflow for deep wells."""
    return float(np.exp(log_gaussian_partition(volume, sigma, eta, p, boundary)))
