"""MatrixMarket reading and writing for SymMatrix and general matrices."""

import logging
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse

from .exceptions import IoError
from .models import SymMatrix, as_gen_matrix

logger = logging.getLogger(__name__)

# 17 significant digits make every double round-trip exactly.
MM_PRECISION = 17


def write_matrix(path, M, comment=''):
    """
    Write a matrix in coordinate format.

    SymMatrix values are stored with the symmetric qualifier (lower triangle
    only); anything else is written as a general real matrix.
    """
    path = Path(path)
    symmetric = isinstance(M, SymMatrix)
    dense = np.asarray(M, dtype=np.float64)
    try:
        # opened here so a missing directory raises instead of being skipped by the writer
        with open(path, 'wb') as handle:
            scipy.io.mmwrite(
                handle,
                scipy.sparse.coo_matrix(dense),
                comment=comment,
                field='real',
                precision=MM_PRECISION,
                symmetry='symmetric' if symmetric else 'general',
            )
    except OSError as e:
        raise IoError(f"Cannot write {path}: {e}", path=str(path)) from e
    logger.debug(f"Wrote {dense.shape[0]}x{dense.shape[1]} matrix to {path}")
    return path


def read_matrix(path, symmetric=False):
    path = Path(path)
    try:
        data = scipy.io.mmread(str(path))
    except (OSError, ValueError) as e:
        raise IoError(f"Cannot read {path}: {e}", path=str(path)) from e

    if scipy.sparse.issparse(data):
        data = data.toarray()
    dense = np.asarray(data, dtype=np.float64)
    if symmetric:
        return SymMatrix(dense)
    return as_gen_matrix(dense)


def read_header(path):
    """First line of a MatrixMarket file"""
    path = Path(path)
    try:
        with open(path) as f:
            return f.readline().strip()
    except OSError as e:
        raise IoError(f"Cannot read {path}: {e}", path=str(path)) from e
