"""Reference P1 Lagrange elements on simplices: quadrature rules and the
tabulation of basis values/derivatives at quadrature points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidDimensionError, UnsupportedOrderError

__all__ = [
    "QuadratureRule",
    "Tabulation",
    "p1_basis",
    "quadrature_rule",
    "two_point_rule",
    "tabulate",
    "reference_volume",
]


def reference_volume(dim: int) -> float:
    """Volume of the unit right simplex (1/2 in 2D, 1/6 in 3D)."""
    if dim not in (2, 3):
        raise InvalidDimensionError(f"dim must be 2 or 3, got {dim}")
    return 0.5 if dim == 2 else 1.0 / 6.0


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    points: np.ndarray  # (n_q, dim) reference coordinates
    weights: np.ndarray  # (n_q,) positive

    @property
    def n_q(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Tabulation:
    """Basis values B[q][b] and reference derivatives D[q][b][k]."""

    dim: int
    n_b: int
    basis: np.ndarray  # (n_q, n_b)
    basis_der: np.ndarray  # (n_q, n_b, dim)

    @property
    def n_q(self) -> int:
        return self.basis.shape[0]


def p1_basis(dim: int, point) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the d+1 hat functions and their (constant) gradients at a
    reference point.

    The reference simplex has vertices at the origin and the unit axis
    points, so the functions are (1 - sum(x), x_0, ..., x_{d-1}).
    """
    if dim not in (2, 3):
        raise InvalidDimensionError(f"dim must be 2 or 3, got {dim}")
    x = np.asarray(point, dtype=np.float64)
    if x.shape != (dim,):
        raise DomainError(f"point has shape {x.shape}, expected ({dim},)")
    tol = 1e-12
    if (x < -tol).any() or x.sum() > 1.0 + tol:
        raise DomainError(f"point {x.tolist()} lies outside the reference simplex")

    values = np.empty(dim + 1)
    values[0] = 1.0 - x.sum()
    values[1:] = x
    gradients = np.zeros((dim + 1, dim))
    gradients[0, :] = -1.0
    gradients[1:, :] = np.eye(dim)
    return values, gradients


def quadrature_rule(dim: int, order: int = 1) -> QuadratureRule:
    """Midpoint rule: one point at the barycenter, weight = reference volume.

    Only order 1 is provided; it integrates affine integrands exactly, which
    covers every shipped form on P1 elements.
    """
    if dim not in (2, 3):
        raise InvalidDimensionError(f"dim must be 2 or 3, got {dim}")
    if order != 1:
        raise UnsupportedOrderError(f"only the 1-point rule is available, got order {order}")
    point = np.full((1, dim), 1.0 / (dim + 1))
    weight = np.array([reference_volume(dim)])
    return QuadratureRule(dim=dim, points=point, weights=weight)


def two_point_rule(dim: int) -> QuadratureRule:
    """Barycenter duplicated with half weights.

    Numerically identical to the 1-point rule but with n_q = 2, so schedules
    that interleave quadrature points get exercised without changing any
    integral value.
    """
    base = quadrature_rule(dim, 1)
    points = np.vstack([base.points, base.points])
    weights = np.concatenate([base.weights * 0.5, base.weights * 0.5])
    return QuadratureRule(dim=dim, points=points, weights=weights)


def tabulate(dim: int, rule: QuadratureRule) -> Tabulation:
    """Evaluate the P1 basis at every rule point."""
    n_b = dim + 1
    basis = np.empty((rule.n_q, n_b))
    basis_der = np.empty((rule.n_q, n_b, dim))
    for q in range(rule.n_q):
        values, gradients = p1_basis(dim, rule.points[q])
        basis[q] = values
        basis_der[q] = gradients
    return Tabulation(dim=dim, n_b=n_b, basis=basis, basis_der=basis_der)
