"""Orthogonal polynomial bases, Gauss quadrature and gPC expansions.

Two families are supported: probabilists' Hermite polynomials (weight = the
standard normal density) and Legendre polynomials (weight = the uniform
probability density on [-1, 1]).  All expectations are taken against the
normalized weight, so ``E[Phi_0] = 1``.

Coefficients are always stored with the normalized projection
``g_m = E[g Phi_m] / ||Phi_m||^2`` so that ``g = sum_m g_m Phi_m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

HERMITE = "hermite"
LEGENDRE = "legendre"
FAMILIES = (HERMITE, LEGENDRE)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss nodes and probability weights (summing to one)."""

    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def __len__(self) -> int:
        return len(self.nodes)


def gauss_nodes(family: str, count: int) -> QuadratureRule:
    """Gauss rule with ``count`` nodes for the family's weight function."""
    if count < 1:
        raise ValueError(f"quadrature needs at least one node, got {count}")
    if family == HERMITE:
        x, w = hermegauss(count)
    elif family == LEGENDRE:
        x, w = leggauss(count)
    else:
        raise ValueError(f"unknown polynomial family {family!r}")
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(nodes=x, weights=w)


def _norms(family: str, order: int) -> np.ndarray:
    n = np.arange(order + 1)
    if family == HERMITE:
        return np.array([float(math.factorial(k)) for k in n])
    return 1.0 / (2.0 * n + 1.0)


def _orthonormal_table(family: str, order: int, x: np.ndarray) -> np.ndarray:
    # rows: degree, columns: points; stable for large order since the
    # orthonormal recurrence has O(1) coefficients
    x = np.asarray(x, dtype=float)
    table = np.empty((order + 1,) + x.shape)
    table[0] = 1.0
    if order == 0:
        return table
    if family == HERMITE:
        table[1] = x
        for n in range(1, order):
            table[n + 1] = (x * table[n] - math.sqrt(n) * table[n - 1]) / math.sqrt(n + 1)
    else:
        def a(n):
            return n / math.sqrt(4.0 * n * n - 1.0)

        table[1] = x / a(1)
        for n in range(1, order):
            table[n + 1] = (x * table[n] - a(n) * table[n - 1]) / a(n + 1)
    return table


@dataclass(frozen=True)
class GpcBasis:
    """Truncated orthogonal basis ``Phi_0..Phi_M`` with its quadrature rule."""

    family: str
    order: int
    norms: np.ndarray = field(repr=False)
    quadrature: QuadratureRule = field(repr=False)
    # orthonormal polynomials at the quadrature nodes, shape (M+1, Q)
    ortho_at_nodes: np.ndarray = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.order + 1

    @property
    def native_law(self) -> str:
        return "normal" if self.family == HERMITE else "uniform"


def make_basis(family: str, order: int, nodes: int | None = None) -> GpcBasis:
    """Build a basis of order ``order``; default quadrature uses 2M+2 nodes."""
    if family not in FAMILIES:
        raise ValueError(f"unknown polynomial family {family!r}")
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    rule = gauss_nodes(family, 2 * order + 2 if nodes is None else nodes)
    norms = _norms(family, order)
    norms.setflags(write=False)
    table = _orthonormal_table(family, order, rule.nodes)
    table.setflags(write=False)
    return GpcBasis(family, order, norms, rule, table)


def eval_poly(basis: GpcBasis, h: int, xi):
    """Value of ``Phi_h`` at ``xi`` by the family's three-term recurrence."""
    if not 0 <= h <= basis.order:
        raise IndexError(f"polynomial index {h} outside 0..{basis.order}")
    return _eval_all(basis.family, h, xi)[h]


def _eval_all(family: str, order: int, xi) -> np.ndarray:
    """Monic-normalized (He_n) or classical (P_n) values for degrees 0..order."""
    xi = np.asarray(xi, dtype=float)
    out = np.empty((order + 1,) + xi.shape)
    out[0] = 1.0
    if order >= 1:
        out[1] = xi
    for n in range(1, order):
        if family == HERMITE:
            out[n + 1] = xi * out[n] - n * out[n - 1]
        else:
            out[n + 1] = ((2 * n + 1) * xi * out[n] - n * out[n - 1]) / (n + 1)
    return out


def eval_all(basis: GpcBasis, xi) -> np.ndarray:
    """All basis polynomials at ``xi``; shape ``(M+1,) + shape(xi)``."""
    return _eval_all(basis.family, basis.order, xi)


@dataclass(frozen=True)
class TripleTensor:
    """``e[l, m, h] = E[Phi_l Phi_m Phi_h]``."""

    e: np.ndarray

    def __getitem__(self, idx):
        return self.e[idx]


def triple_tensor(basis: GpcBasis) -> TripleTensor:
    """Triple products by quadrature, with exact structural zeros enforced."""
    M = basis.order
    need = math.ceil((3 * M + 1) / 2)
    if len(basis.quadrature) < need:
        raise ValueError(
            f"triple products of order {M} need >= {need} quadrature nodes, "
            f"basis has {len(basis.quadrature)}"
        )
    w = basis.quadrature.weights
    scaled = basis.ortho_at_nodes * np.cbrt(w)
    e = np.einsum("lq,mq,hq->lmh", scaled, scaled, scaled)
    # both families have a symmetric weight: odd total degree vanishes, and
    # the product Phi_l Phi_m has no component above degree l+m
    l, m, h = np.ogrid[: M + 1, : M + 1, : M + 1]
    mask = ((l + m + h) % 2 == 0) & (h <= l + m) & (m <= l + h) & (l <= m + h)
    e = np.where(mask, e, 0.0)
    root = np.sqrt(basis.norms)
    e = e * root[:, None, None] * root[None, :, None] * root[None, None, :]
    # copy each sorted-index entry to all its permutations: symmetry holds bitwise
    idx = np.sort(np.indices(e.shape), axis=0)
    e = e[idx[0], idx[1], idx[2]]
    if basis.family == HERMITE:
        # round to the exact integers where they are representable
        small = e.copy()
        ok = np.abs(small) < 2.0**52
        small[ok] = np.rint(small[ok])
        e = small
    e.setflags(write=False)
    return TripleTensor(e)


def hermite_triple_closed_form(l: int, m: int, h: int) -> float:
    """``E[He_l He_m He_h]`` from the classical linearization formula."""
    total = l + m + h
    if total % 2:
        return 0.0
    s = total // 2
    if s < l or s < m or s < h:
        return 0.0
    return float(
        math.factorial(l) * math.factorial(m) * math.factorial(h)
        // (math.factorial(s - l) * math.factorial(s - m) * math.factorial(s - h))
    )


@dataclass(frozen=True)
class GpcScalar:
    coeffs: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.coeffs[0])


def project(sampler: Callable, basis: GpcBasis) -> GpcScalar:
    """Normalized projection of ``sampler`` onto the basis."""
    rule = basis.quadrature
    values = np.asarray(sampler(rule.nodes), dtype=float)
    if values.shape != rule.nodes.shape:
        values = np.array([float(sampler(x)) for x in rule.nodes])
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("non-finite sampler value at a quadrature node")
    return GpcScalar(project_values(values, basis))


def project_values(values: np.ndarray, basis: GpcBasis) -> np.ndarray:
    """Coefficients from samples at the basis quadrature nodes (last axis)."""
    w = basis.quadrature.weights
    ortho = (values * w) @ basis.ortho_at_nodes.T
    return ortho / np.sqrt(basis.norms)


def reconstruct_at_nodes(coeffs: np.ndarray, basis: GpcBasis) -> np.ndarray:
    """Evaluate expansions (coefficients on the last axis) at the quadrature nodes."""
    return (coeffs * np.sqrt(basis.norms)) @ basis.ortho_at_nodes


def eval_expansion(g: GpcScalar | np.ndarray, basis: GpcBasis, xi):
    coeffs = g.coeffs if isinstance(g, GpcScalar) else np.asarray(g)
    return np.tensordot(coeffs, eval_all(basis, xi), axes=(0, 0))


def variance_of_expansion(g: GpcScalar | np.ndarray, basis: GpcBasis):
    """Variance ``sum_{h>=1} g_h^2 ||Phi_h||^2``; vectorized over leading axes."""
    coeffs = g.coeffs if isinstance(g, GpcScalar) else np.asarray(g)
    return np.sum(coeffs[..., 1:] ** 2 * basis.norms[1:], axis=-1)
