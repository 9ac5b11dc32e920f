# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Per-row top-k selection with deterministic tie-break (compiled)."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline bint _better(const double[:] a, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    # larger magnitude wins; on ties the smaller index wins
    return a[i] > a[j] or (a[i] == a[j] and i < j)


cdef void _sift_down(const double[:] a, Py_ssize_t* heap, Py_ssize_t n,
                     Py_ssize_t pos) noexcept nogil:
    # min-heap keyed on "worst first"
    cdef Py_ssize_t child, tmp
    while True:
        child = 2 * pos + 1
        if child >= n:
            return
        if child + 1 < n and _better(a, heap[child], heap[child + 1]):
            child += 1
        if _better(a, heap[pos], heap[child]):
            tmp = heap[pos]
            heap[pos] = heap[child]
            heap[child] = tmp
            pos = child
        else:
            return


cdef void _sift_up(const double[:] a, Py_ssize_t* heap, Py_ssize_t pos) noexcept nogil:
    cdef Py_ssize_t parent, tmp
    while pos > 0:
        parent = (pos - 1) // 2
        if _better(a, heap[parent], heap[pos]):
            tmp = heap[pos]
            heap[pos] = heap[parent]
            heap[parent] = tmp
            pos = parent
        else:
            return


def mark_row_topk(const double[:, :] absval, const cnp.uint8_t[:, :] observed,
                  const cnp.intp_t[:] k, cnp.uint8_t[:, :] out):
    """Set out[i, j] = 1 for the k[i] largest observed entries of row i.

    Works on arbitrary strides, so columns are handled by passing transposed
    views. Uses a bounded heap, O(n log k) per row.
    """
    cdef Py_ssize_t nrows = absval.shape[0], ncols = absval.shape[1]
    cdef Py_ssize_t i, j, ki, size, kmax = 0
    cdef Py_ssize_t* heap
    for i in range(nrows):
        if k[i] > kmax:
            kmax = k[i]
    if kmax == 0:
        return
    heap = <Py_ssize_t*> malloc(kmax * sizeof(Py_ssize_t))
    if heap == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(nrows):
                ki = k[i]
                if ki <= 0:
                    continue
                size = 0
                for j in range(ncols):
                    if not observed[i, j]:
                        continue
                    if size < ki:
                        heap[size] = j
                        _sift_up(absval[i], heap, size)
                        size += 1
                    elif _better(absval[i], j, heap[0]):
                        heap[0] = j
                        _sift_down(absval[i], heap, size, 0)
                for j in range(size):
                    out[i, heap[j]] = 1
    finally:
        free(heap)
