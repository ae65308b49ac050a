"""Model parameters and field containers shared across modules."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .lattice import LatticeVolume, SiteSet

__all__ = ["ModelParams", "BoundaryField", "SpinField", "IsingConfig", "DisorderField"]


@dataclass(frozen=True)
class ModelParams:
    """Scalar couplings of the double-well model and its quadratic comparison.

    q      nearest-neighbor coupling (>= 0)
    m_star well location (> 0); wells of the quartic potential sit at +-m_star
    a      curvature of the comparison Gaussians (>= 1)
    b      additive offset of the comparison wells (>= 0)
    delta  uniform bound on the random field
    d      lattice dimension
    A2     half-width of the sign window U+ = [m_star - A2, m_star + A2]
    """

    q: float
    m_star: float
    a: float = 1.0
    b: float = 0.0
    delta: float = 0.0
    d: int = 3
    A2: float = 0.0

    def __post_init__(self):
        if self.q < 0 or self.m_star <= 0 or self.a < 1 or self.d < 1:
            raise ValueError("invalid model parameters")
        if self.b < 0 or self.delta < 0 or self.A2 < 0:
            raise ValueError("b, delta, A2 must be nonnegative")

    @property
    def c(self) -> float:
        """Resolvent shift c = a/q."""
        if self.q == 0:
            raise ZeroDivisionError("c = a/q undefined at q = 0")
        return self.a / self.q

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)

    def in_window(self, m) -> np.ndarray:
        """Membership in U = U+ union (-U+)."""
        m = np.asarray(m, dtype=float)
        return np.abs(np.abs(m) - self.m_star) <= self.A2


class BoundaryField:
    """Continuous-spin boundary condition on the ambient lattice.

    Either a constant value (the usual +m* condition) or a mapping from
    out-of-box coordinates to values.
    """

    def __init__(self, value=0.0, mapping=None):
        self.value = float(value)
        self.mapping = dict(mapping) if mapping else None

    @classmethod
    def constant(cls, value) -> "BoundaryField":
        return cls(value=value)

    def __call__(self, coord) -> float:
        if self.mapping is not None:
            return float(self.mapping.get(tuple(coord), self.value))
        return self.value

    def negated(self) -> "BoundaryField":
        mapping = {k: -v for k, v in self.mapping.items()} if self.mapping else None
        return BoundaryField(-self.value, mapping)

    def contact_sum(self, volume: LatticeVolume, site: int) -> float:
        """Sum of boundary values over ambient neighbors of a site."""
        return sum(self(c) for c in volume.ambient_neighbors(site))

    def contact_sq_sum(self, volume: LatticeVolume, site: int) -> float:
        return sum(self(c) ** 2 for c in volume.ambient_neighbors(site))


def _field_array(values, n, name, dtype=float):
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim == 0:
        arr = np.full(n, arr, dtype=dtype)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have one value per site")
    return arr


@dataclass(frozen=True)
class SpinField:
    """Real-valued field on a site set."""

    support: SiteSet
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _field_array(self.values, len(self.support), "values"))


@dataclass(frozen=True)
class IsingConfig:
    """Sign field on a site set, values in {-1, +1}."""

    support: SiteSet
    values: np.ndarray

    def __post_init__(self):
        vals = _field_array(self.values, len(self.support), "values")
        if not np.all(np.abs(vals) == 1):
            raise ValueError("Ising values must be +-1")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class DisorderField:
    """Quenched random field on a site set, bounded by delta."""

    support: SiteSet
    values: np.ndarray
    delta: float = np.inf

    def __post_init__(self):
        vals = _field_array(self.values, len(self.support), "values")
        if np.any(np.abs(vals) > self.delta + 1e-12):
            raise ValueError("disorder exceeds the bound delta")
        object.__setattr__(self, "values", vals)
