from dataclasses import dataclass

import numpy as np
from django.db import models
from numpy.typing import NDArray

from .exceptions import ShapeMismatch

# Dense general matrices (S, P, M_s, iteration matrices) are plain read-only
# float arrays; only symmetric matrices carry extra state.
GenMatrix = NDArray[np.float64]
Vector = NDArray[np.float64]


class SpdStatus(models.TextChoices):
    UNKNOWN = 'unknown', 'Unknown'
    VERIFIED = 'verified', 'Verified SPD'
    REJECTED = 'rejected', 'Verified not SPD'


def as_gen_matrix(entries, rows=None, cols=None) -> GenMatrix:
    """Copy into a read-only 2D float array, optionally checking the shape"""
    arr = np.array(entries, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeMismatch(f"Expected a 2D matrix, got {arr.ndim} dimensions")
    if rows is not None and arr.shape[0] != rows:
        raise ShapeMismatch(f"Expected {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise ShapeMismatch(f"Expected {cols} columns, got {arr.shape[1]}")
    arr.setflags(write=False)
    return arr


class SymMatrix:
    """
    Dense symmetric matrix.

    Symmetry is enforced on construction by averaging with the transpose.
    spd_checked caches the outcome of the Cholesky certification; it is the
    only state that changes after construction.
    """

    __slots__ = ('_entries', 'spd_checked')

    def __init__(self, entries, spd_checked=SpdStatus.UNKNOWN):
        arr = np.array(entries, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ShapeMismatch(f"SymMatrix needs a square matrix, got shape {arr.shape}")
        arr = 0.5 * (arr + arr.T)
        arr.setflags(write=False)
        self._entries = arr
        self.spd_checked = SpdStatus(spd_checked)

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), spd_checked=SpdStatus.VERIFIED)

    @classmethod
    def diag(cls, values):
        return cls(np.diag(np.asarray(values, dtype=np.float64)))

    @property
    def entries(self):
        return self._entries

    @property
    def n(self):
        return self._entries.shape[0]

    @property
    def shape(self):
        return self._entries.shape

    @property
    def max_abs(self):
        return float(np.max(np.abs(self._entries))) if self.n else 0.0

    def diagonal(self):
        return np.diag(self._entries).copy()

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self._entries.astype(dtype)
        return self._entries

    def __matmul__(self, other):
        return self._entries @ np.asarray(other)

    def __rmatmul__(self, other):
        return np.asarray(other) @ self._entries

    def __repr__(self):
        return f"SymMatrix(n={self.n}, spd={self.spd_checked.value})"


@dataclass(frozen=True)
class EigDecomp:
    """Ascending eigenvalues with orthonormal eigenvector columns"""
    values: Vector
    vectors: GenMatrix

    @property
    def lambda_min(self):
        return float(self.values[0])

    @property
    def lambda_max(self):
        return float(self.values[-1])

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T
