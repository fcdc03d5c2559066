"""Uniform structured grids and their finite-difference operators.

Fields are plain :class:`numpy.ndarray` objects shaped like ``grid.shape``
(C order, axis order x, y[, z]).  No-flux boundaries use mirrored ghost
nodes together with trapezoidal nodal weights, which makes ``W @ L``
symmetric and the discrete operators mass-conserving; on a tensor grid
this is the mass-lumped Q1 finite element discretisation.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.fft
import scipy.sparse as sp

BoundaryKind = Literal["periodic", "no-flux"]


class GridError(ValueError):
    """Raised for invalid grids or fields that do not match their grid."""


@dataclass(frozen=True)
class GridSpec:
    """Node layout of a 2D or 3D box.

    Args:
        nodes_per_dim: number of nodes along each axis
        lengths: physical extent of each axis (defaults to the unit box)
        bc: ``"periodic"`` or ``"no-flux"``
    """

    nodes_per_dim: tuple[int, ...]
    lengths: tuple[float, ...] = ()
    bc: BoundaryKind = "periodic"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(int(n) for n in self.nodes_per_dim)
        lengths = tuple(float(x) for x in self.lengths) or (1.0,) * len(nodes)
        object.__setattr__(self, "nodes_per_dim", nodes)
        object.__setattr__(self, "lengths", lengths)
        if len(nodes) not in (2, 3):
            raise GridError(f"grid must be 2D or 3D, got {len(nodes)} axes")
        if len(lengths) != len(nodes):
            raise GridError("lengths and nodes_per_dim differ in length")
        if any(n < 4 for n in nodes):
            raise GridError(f"every axis needs at least 4 nodes, got {nodes}")
        if any(not math.isfinite(x) or x <= 0 for x in lengths):
            raise GridError(f"lengths must be positive, got {lengths}")
        if self.bc not in ("periodic", "no-flux"):
            raise GridError(f"unknown boundary kind {self.bc!r}")

    @classmethod
    def square(cls, n: int, dims: int = 2, length: float = 1.0, bc: BoundaryKind = "periodic"):
        return cls((n,) * dims, (length,) * dims, bc)

    @property
    def dims(self) -> int:
        return len(self.nodes_per_dim)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes_per_dim

    @property
    def size(self) -> int:
        return math.prod(self.nodes_per_dim)

    @property
    def periodic(self) -> bool:
        return self.bc == "periodic"

    @property
    def spacing(self) -> tuple[float, ...]:
        if self.periodic:
            return tuple(L / n for L, n in zip(self.lengths, self.nodes_per_dim))
        return tuple(L / (n - 1) for L, n in zip(self.lengths, self.nodes_per_dim))

    @property
    def volume(self) -> float:
        return math.prod(self.lengths)

    def axes(self) -> list[np.ndarray]:
        """Node coordinates along each axis."""
        return [np.arange(n) * h for n, h in zip(self.nodes_per_dim, self.spacing)]

    def coordinates(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape != self.shape:
            raise GridError(f"field of shape {f.shape} does not match grid {self.shape}")
        return f

    # -- cached operator data ------------------------------------------------

    def _cached(self, key, factory):
        try:
            return self._cache[key]
        except KeyError:
            value = self._cache[key] = factory()
            return value

    def _weights_1d(self, axis: int) -> np.ndarray:
        n, h = self.nodes_per_dim[axis], self.spacing[axis]
        w = np.full(n, h)
        if not self.periodic:
            w[0] = w[-1] = h / 2
        return w

    @property
    def weights(self) -> np.ndarray:
        """Nodal quadrature weights; they sum to the domain volume."""

        def build():
            w = self._weights_1d(0)
            for axis in range(1, self.dims):
                w = np.multiply.outer(w, self._weights_1d(axis))
            return w

        return self._cached("weights", build)

    def _laplacian_1d(self, axis: int) -> sp.csr_matrix:
        n, h = self.nodes_per_dim[axis], self.spacing[axis]
        main = np.full(n, -2.0)
        off = np.ones(n - 1)
        mat = sp.diags([off, main, off], [-1, 0, 1], format="lil")
        if self.periodic:
            mat[0, n - 1] = 1.0
            mat[n - 1, 0] = 1.0
        else:
            # mirrored ghost node: f[-1] = f[1], f[n] = f[n-2]
            mat[0, 1] = 2.0
            mat[n - 1, n - 2] = 2.0
        return (mat / h**2).tocsr()

    @property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Sparse 5-point (2D) or 7-point (3D) Laplacian acting on flattened fields."""

        def build():
            eyes = [sp.identity(n, format="csr") for n in self.nodes_per_dim]
            total = None
            for axis in range(self.dims):
                factors = list(eyes)
                factors[axis] = self._laplacian_1d(axis)
                term = functools.reduce(lambda a, b: sp.kron(a, b, format="csr"), factors)
                total = term if total is None else total + term
            return total.tocsr()

        return self._cached("laplacian", build)

    # -- operators ---------------------------------------------------------

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        f = self.check(f)
        return (self.laplacian_matrix @ f.ravel()).reshape(self.shape)

    def integrate(self, f: np.ndarray) -> float:
        f = self.check(f)
        return float(np.sum(self.weights * f))

    def mean(self, f: np.ndarray) -> float:
        f = self.check(f)
        if f.size == 0:
            raise GridError("cannot average an empty field")
        return self.integrate(f) / self.volume

    def grad_norm_sq_integral(self, f: np.ndarray) -> float:
        """Discrete ``∫|∇f|²`` built from edge differences.

        Equals ``-integrate(f * laplacian(f))`` to round-off for both boundary kinds.
        """
        f = self.check(f)
        total = 0.0
        for axis in range(self.dims):
            if self.periodic:
                diff = np.roll(f, -1, axis=axis) - f
            else:
                diff = np.diff(f, axis=axis)
            # edge weights: product of the nodal weights of the other axes
            w = np.ones(())
            for other in range(self.dims):
                wo = np.ones(diff.shape[other]) if other == axis else self._weights_1d(other)
                w = np.multiply.outer(w, wo)
            total += float(np.sum(w * diff**2)) / self.spacing[axis]
        return total

    # -- spectral representation of the discrete Laplacian -----------------

    @property
    def spectral(self) -> SpectralBasis:
        return self._cached("spectral", lambda: SpectralBasis(self))


class SpectralBasis:
    """Eigenbasis of the discrete Laplacian (FFT for periodic, DCT-I for no-flux).

    Used for fast exact inverses of constant-coefficient operators built
    from :meth:`GridSpec.laplacian`.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        eig = np.zeros(())
        for axis, (n, h) in enumerate(zip(grid.nodes_per_dim, grid.spacing)):
            if grid.periodic:
                last = axis == grid.dims - 1
                k = np.arange(n // 2 + 1) if last else np.arange(n)
                theta = 2 * np.pi * k / n
            else:
                theta = np.pi * np.arange(n) / (n - 1)
            eig = np.add.outer(eig, 2.0 * (np.cos(theta) - 1.0) / h**2)
        self.eigenvalues = eig

    def forward(self, f: np.ndarray) -> np.ndarray:
        if self.grid.periodic:
            return scipy.fft.rfftn(f)
        return scipy.fft.dctn(f, type=1)

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        if self.grid.periodic:
            return scipy.fft.irfftn(coeffs, s=self.grid.shape)
        return scipy.fft.idctn(coeffs, type=1)
