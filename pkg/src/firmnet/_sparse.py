"""Small helpers for boolean-ish CSR set algebra."""

import numpy as np
import scipy.sparse as sp


def binarize(mat):
    """CSR copy with all stored values set to 1 (int32), zeros dropped."""
    mat = mat.tocsr()
    mat.eliminate_zeros()
    out = mat.copy()
    out.data = np.ones_like(out.data, dtype=np.int32)
    return out


def subtract_mask(mat, mask):
    """Entries of ``mat`` not present in ``mask`` (both 0/1 CSR)."""
    hit = mat.multiply(mask)
    out = (mat - hit).tocsr()
    out.eliminate_zeros()
    return out


def drop_diagonal(mat):
    mat = mat.tocsr()
    diag = mat.diagonal()
    if not diag.any():
        return mat
    out = (mat - sp.diags(diag, format="csr", dtype=mat.dtype)).tocsr()
    out.eliminate_zeros()
    return out


def identity_like(mat):
    return sp.identity(mat.shape[0], dtype=np.int32, format="csr")
