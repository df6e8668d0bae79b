"""Compiled inner loops. Semantics mirror :mod:`fadinghh.summary` and
:mod:`fadinghh.merge` exactly, including tie-breaking."""

import numba
import numpy as np

MERSENNE_61 = np.uint64((1 << 61) - 1)
EMPTY_ITEM = np.uint64(2**64 - 1)

_LO32 = np.uint64(0xFFFFFFFF)
_S29 = np.uint64(29)
_S32 = np.uint64(32)
_S61 = np.uint64(61)
_LO29 = np.uint64((1 << 29) - 1)
_EIGHT = np.uint64(8)


@numba.njit(inline="always")
def _reduce61(x):
    x = (x & MERSENNE_61) + (x >> _S61)
    if x >= MERSENNE_61:
        x -= MERSENNE_61
    return x


@numba.njit(inline="always")
def _mulmod61(a, x):
    # a, x < 2^61; 2^64 == 8 (mod 2^61 - 1)
    a_hi = a >> _S32
    a_lo = a & _LO32
    x_hi = x >> _S32
    x_lo = x & _LO32
    hi = a_hi * x_hi * _EIGHT
    mid = a_hi * x_lo + a_lo * x_hi
    mid = (mid >> _S29) + ((mid & _LO29) << _S32)
    lo = _reduce61(a_lo * x_lo)
    return _reduce61(_reduce61(hi + mid) + lo)


@numba.njit(inline="always")
def _column(a, b, item, w):
    x = _reduce61(item)
    return np.int64(_reduce61(_mulmod61(a, x) + b) % np.uint64(w))


@numba.njit(nogil=True, cache=True)
def hash_columns(hash_a, hash_b, items, w, out):
    """Fill ``out[j, k]`` with the row-``j`` column of ``items[k]``."""
    for j in range(hash_a.shape[0]):
        a = hash_a[j]
        b = hash_b[j]
        for k in range(items.shape[0]):
            out[j, k] = _column(a, b, items[k], w)


@numba.njit(inline="always")
def _ss_update(cell_items, cell_freqs, j, c, item, x):
    i0 = cell_items[j, c, 0]
    i1 = cell_items[j, c, 1]
    f0 = cell_freqs[j, c, 0]
    f1 = cell_freqs[j, c, 1]
    if f0 > 0.0 and i0 == item:
        cell_freqs[j, c, 0] = f0 + x
    elif f1 > 0.0 and i1 == item:
        cell_freqs[j, c, 1] = f1 + x
    elif not f0 > 0.0:
        cell_items[j, c, 0] = item
        cell_freqs[j, c, 0] = x
    elif not f1 > 0.0:
        cell_items[j, c, 1] = item
        cell_freqs[j, c, 1] = x
    elif f0 < f1 or (f0 == f1 and i0 < i1):
        cell_items[j, c, 0] = item
        cell_freqs[j, c, 0] = f0 + x
    else:
        cell_items[j, c, 1] = item
        cell_freqs[j, c, 1] = f1 + x


@numba.njit(nogil=True, cache=True)
def ingest(items, weights, hash_a, hash_b, cell_items, cell_freqs, state, guard):
    """Process records in order; stop before the first one that trips ``guard``.

    ``state[0]`` is the running local count. Returns the number of records
    consumed.
    """
    d = cell_items.shape[0]
    w = cell_items.shape[1]
    count = state[0]
    n = items.shape[0]
    for k in range(n):
        x = weights[k]
        if not (x <= guard) or count + x > guard:
            state[0] = count
            return k
        item = items[k]
        count += x
        for j in range(d):
            c = _column(hash_a[j], hash_b[j], item, w)
            _ss_update(cell_items, cell_freqs, j, c, item, x)
    state[0] = count
    return n


@numba.njit(inline="always")
def _before(fa, ia, fb, ib):
    return fa < fb or (fa == fb and ia < ib)


@numba.njit(nogil=True, cache=True)
def merge_cells(items1, freqs1, items2, freqs2, out_items, out_freqs):
    """Combine-and-purge every cell pair; output slots hold (smaller, larger)."""
    d = items1.shape[0]
    w = items1.shape[1]
    ci = np.empty(4, dtype=np.uint64)
    cf = np.empty(4, dtype=np.float64)
    for j in range(d):
        for c in range(w):
            a0 = freqs1[j, c, 0] > 0.0
            a1 = freqs1[j, c, 1] > 0.0
            b0 = freqs2[j, c, 0] > 0.0
            b1 = freqs2[j, c, 1] > 0.0
            m1 = min(freqs1[j, c, 0], freqs1[j, c, 1]) if (a0 and a1) else 0.0
            m2 = min(freqs2[j, c, 0], freqs2[j, c, 1]) if (b0 and b1) else 0.0
            used0 = False
            used1 = False
            n = 0
            for s in range(2):
                if not freqs1[j, c, s] > 0.0:
                    continue
                it = items1[j, c, s]
                f = freqs1[j, c, s]
                if b0 and items2[j, c, 0] == it:
                    f += freqs2[j, c, 0]
                    used0 = True
                elif b1 and items2[j, c, 1] == it:
                    f += freqs2[j, c, 1]
                    used1 = True
                else:
                    f += m2
                ci[n] = it
                cf[n] = f
                n += 1
            if b0 and not used0:
                ci[n] = items2[j, c, 0]
                cf[n] = freqs2[j, c, 0] + m1
                n += 1
            if b1 and not used1:
                ci[n] = items2[j, c, 1]
                cf[n] = freqs2[j, c, 1] + m1
                n += 1
            # insertion sort ascending by (freq, item)
            for p in range(1, n):
                ki = ci[p]
                kf = cf[p]
                q = p - 1
                while q >= 0 and _before(kf, ki, cf[q], ci[q]):
                    ci[q + 1] = ci[q]
                    cf[q + 1] = cf[q]
                    q -= 1
                ci[q + 1] = ki
                cf[q + 1] = kf
            if n >= 2:
                out_items[j, c, 0] = ci[n - 2]
                out_freqs[j, c, 0] = cf[n - 2]
                out_items[j, c, 1] = ci[n - 1]
                out_freqs[j, c, 1] = cf[n - 1]
            elif n == 1:
                out_items[j, c, 0] = ci[0]
                out_freqs[j, c, 0] = cf[0]
                out_items[j, c, 1] = EMPTY_ITEM
                out_freqs[j, c, 1] = 0.0
            else:
                out_items[j, c, 0] = EMPTY_ITEM
                out_freqs[j, c, 0] = 0.0
                out_items[j, c, 1] = EMPTY_ITEM
                out_freqs[j, c, 1] = 0.0
