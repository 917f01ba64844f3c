"""Hot reduction kernels behind the trial simulator.

Every kernel consumes a block of uniform variates (drawn by the caller from a
seeded generator) plus precomputed cut tables, and returns integer sums over
the encoded outcomes.  Two interchangeable backends are provided:

* a pure-numpy vectorised implementation, and
* a numba ``@njit`` implementation compiled lazily on first use.

The backend is selected with the ``SPINSQ_BACKEND`` environment variable
(``auto`` — numba when importable, the default; ``numba``; ``numpy``).  Both
backends map a uniform ``u`` to a category as the count of cut points
``<= u`` (identical to ``np.searchsorted(cuts, u, side="right")``), so their
outputs are bit-identical and also match the per-slot samplers in
:mod:`spinsq.states`.

Category conventions:

* total spin: category ``g`` on the ``N+1``-point grid encodes ``2m = 2g - N``
* joint pair: categories 0..3 encode ``(+,+), (+,-), (-,+), (-,-)`` so the
  first member is ``1 - 2*(cat >> 1)`` and the second ``1 - 2*(cat & 1)``
* single qubit: one cut at ``P(+1)``; the outcome is ``1 - 2*(cut <= u)``
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is an install-time choice
    njit = None
    HAS_NUMBA = False

_PAIR_FIRST = np.array([1, 1, -1, -1], dtype=np.int64)
_PAIR_SECOND = np.array([1, -1, 1, -1], dtype=np.int64)


def requested_backend() -> str:
    """The backend asked for via ``SPINSQ_BACKEND`` (unvalidated)."""
    return os.environ.get("SPINSQ_BACKEND", "auto").strip().lower()


def active_backend() -> str:
    """Resolve the backend actually used for the next kernel call."""
    choice = requested_backend()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"SPINSQ_BACKEND must be one of auto|numba|numpy, got {choice!r}"
        )
    if choice == "numba" and not HAS_NUMBA:
        raise RuntimeError("SPINSQ_BACKEND=numba but numba is not importable")
    if choice == "auto":
        return "numba" if HAS_NUMBA else "numpy"
    return choice


# --------------------------------------------------------------------------
# numpy backend
# --------------------------------------------------------------------------


def _total_spin_reduce_np(u, cuts, n):
    g = np.searchsorted(cuts, u, side="right")
    enc = 2 * g.astype(np.int64) - n
    return int(enc.sum()), int((enc * enc).sum())


def _pairs_reduce_np(u, cuts, reps):
    n_slots = cuts.shape[0]
    uu = u.reshape(n_slots, reps)
    cat = (cuts[:, None, :] <= uu[:, :, None]).sum(axis=2)
    s1 = _PAIR_FIRST[cat]
    s2 = _PAIR_SECOND[cat]
    a = s1.sum(axis=0)  # per-repetition sums over slots
    b = s2.sum(axis=0)
    return (
        int((s1 * s2).sum()),
        int(a.sum()),
        int(b.sum()),
        int((a * b).sum()),
    )


def _split_reduce_np(u, first_cuts, second_cuts, reps):
    n_slots = first_cuts.shape[0]
    half = reps // 2
    uu = u.reshape(n_slots, reps)
    s1 = 1 - 2 * (first_cuts[:, None] <= uu[:, :half]).astype(np.int64)
    s2 = 1 - 2 * (second_cuts[:, None] <= uu[:, half:]).astype(np.int64)
    return int((s1 * s2).sum())


def _rand_pairs_reduce_np(u_idx, u_out, cuts, reps):
    n_slots = cuts.shape[0]
    idx = np.minimum((u_idx * n_slots).astype(np.int64), n_slots - 1)
    rows = cuts[idx]
    uu = u_out.reshape(idx.shape[0], reps)
    cat = (rows[:, None, :] <= uu[:, :, None]).sum(axis=2)
    s1 = _PAIR_FIRST[cat]
    s2 = _PAIR_SECOND[cat]
    a = s1.sum(axis=1)  # per-slot sums over repetitions
    b = s2.sum(axis=1)
    return (
        int((s1 * s2).sum()),
        int(a.sum()),
        int(b.sum()),
        int((a * b).sum()),
    )


def _rand_split_reduce_np(u_idx, u_out, plus_cuts, reps):
    n = plus_cuts.shape[0]
    cells = n * n
    idx = np.minimum((u_idx * cells).astype(np.int64), cells - 1)
    i = idx // n
    j = idx % n
    half = reps // 2
    uu = u_out.reshape(idx.shape[0], reps)
    s1 = 1 - 2 * (plus_cuts[i][:, None] <= uu[:, :half]).astype(np.int64)
    s2 = 1 - 2 * (plus_cuts[j][:, None] <= uu[:, half:]).astype(np.int64)
    return int((s1 * s2).sum())


# --------------------------------------------------------------------------
# numba backend (same semantics, loop form)
# --------------------------------------------------------------------------


def _total_spin_reduce_loop(u, cuts, n):
    s1 = np.int64(0)
    s2 = np.int64(0)
    n_cuts = cuts.shape[0]
    for t in range(u.shape[0]):
        ut = u[t]
        lo = 0
        hi = n_cuts
        while lo < hi:
            mid = (lo + hi) // 2
            if cuts[mid] <= ut:
                lo = mid + 1
            else:
                hi = mid
        enc = 2 * lo - n
        s1 += enc
        s2 += enc * enc
    return s1, s2


def _pairs_reduce_loop(u, cuts, reps):
    n_slots = cuts.shape[0]
    a = np.zeros(reps, dtype=np.int64)
    b = np.zeros(reps, dtype=np.int64)
    prod = np.int64(0)
    for s in range(n_slots):
        c0 = cuts[s, 0]
        c1 = cuts[s, 1]
        c2 = cuts[s, 2]
        base = s * reps
        for t in range(reps):
            ut = u[base + t]
            cat = 0
            if c0 <= ut:
                cat += 1
            if c1 <= ut:
                cat += 1
            if c2 <= ut:
                cat += 1
            s1 = 1 - 2 * (cat >> 1)
            s2 = 1 - 2 * (cat & 1)
            prod += s1 * s2
            a[t] += s1
            b[t] += s2
    sa = np.int64(0)
    sb = np.int64(0)
    sab = np.int64(0)
    for t in range(reps):
        sa += a[t]
        sb += b[t]
        sab += a[t] * b[t]
    return prod, sa, sb, sab


def _split_reduce_loop(u, first_cuts, second_cuts, reps):
    n_slots = first_cuts.shape[0]
    half = reps // 2
    prod = np.int64(0)
    for s in range(n_slots):
        base = s * reps
        cf = first_cuts[s]
        cs = second_cuts[s]
        for t in range(half):
            s1 = 1 - 2 * (cf <= u[base + t])
            s2 = 1 - 2 * (cs <= u[base + half + t])
            prod += s1 * s2
    return prod


def _rand_pairs_reduce_loop(u_idx, u_out, cuts, reps):
    n_slots = cuts.shape[0]
    n_draws = u_idx.shape[0]
    prod = np.int64(0)
    sa = np.int64(0)
    sb = np.int64(0)
    sab = np.int64(0)
    for l in range(n_draws):
        idx = int(u_idx[l] * n_slots)
        if idx >= n_slots:
            idx = n_slots - 1
        c0 = cuts[idx, 0]
        c1 = cuts[idx, 1]
        c2 = cuts[idx, 2]
        base = l * reps
        al = np.int64(0)
        bl = np.int64(0)
        for t in range(reps):
            ut = u_out[base + t]
            cat = 0
            if c0 <= ut:
                cat += 1
            if c1 <= ut:
                cat += 1
            if c2 <= ut:
                cat += 1
            s1 = 1 - 2 * (cat >> 1)
            s2 = 1 - 2 * (cat & 1)
            prod += s1 * s2
            al += s1
            bl += s2
        sa += al
        sb += bl
        sab += al * bl
    return prod, sa, sb, sab


def _rand_split_reduce_loop(u_idx, u_out, plus_cuts, reps):
    n = plus_cuts.shape[0]
    cells = n * n
    half = reps // 2
    prod = np.int64(0)
    for l in range(u_idx.shape[0]):
        idx = int(u_idx[l] * cells)
        if idx >= cells:
            idx = cells - 1
        cf = plus_cuts[idx // n]
        cs = plus_cuts[idx % n]
        base = l * reps
        for t in range(half):
            s1 = 1 - 2 * (cf <= u_out[base + t])
            s2 = 1 - 2 * (cs <= u_out[base + half + t])
            prod += s1 * s2
    return prod


if HAS_NUMBA:
    _jit = njit(cache=True, nogil=True)
    _total_spin_reduce_nb = _jit(_total_spin_reduce_loop)
    _pairs_reduce_nb = _jit(_pairs_reduce_loop)
    _split_reduce_nb = _jit(_split_reduce_loop)
    _rand_pairs_reduce_nb = _jit(_rand_pairs_reduce_loop)
    _rand_split_reduce_nb = _jit(_rand_split_reduce_loop)


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------


def total_spin_reduce(u, cuts, n):
    """Sum of encoded outcomes and of their squares for one direction."""
    if active_backend() == "numba":
        s1, s2 = _total_spin_reduce_nb(u, cuts, n)
        return int(s1), int(s2)
    return _total_spin_reduce_np(u, cuts, n)


def pairs_reduce(u, cuts, reps):
    """(product sum, sum of A_k, sum of B_k, sum of A_k*B_k).

    ``A_k``/``B_k`` are the per-repetition sums of the first/second member
    outcomes over all slots; ``u`` is consumed slot-major.
    """
    if active_backend() == "numba":
        prod, sa, sb, sab = _pairs_reduce_nb(u, cuts, reps)
        return int(prod), int(sa), int(sb), int(sab)
    return _pairs_reduce_np(u, cuts, reps)


def split_reduce(u, first_cuts, second_cuts, reps):
    """Sum of first*second products over slots; halves paired by repetition."""
    if active_backend() == "numba":
        return int(_split_reduce_nb(u, first_cuts, second_cuts, reps))
    return _split_reduce_np(u, first_cuts, second_cuts, reps)


def rand_pairs_reduce(u_idx, u_out, cuts, reps):
    """Like :func:`pairs_reduce` for randomly indexed slots.

    The slot for draw ``l`` is ``min(int(u_idx[l] * M), M - 1)`` with ``M``
    the number of cut rows.  The returned cross sums are per-slot (``a_l`` is
    the sum of first-member outcomes within slot ``l``).
    """
    if active_backend() == "numba":
        prod, sa, sb, sab = _rand_pairs_reduce_nb(u_idx, u_out, cuts, reps)
        return int(prod), int(sa), int(sb), int(sab)
    return _rand_pairs_reduce_np(u_idx, u_out, cuts, reps)


def rand_split_reduce(u_idx, u_out, plus_cuts, reps):
    """Split-run product sum over randomly indexed cells of the full square."""
    if active_backend() == "numba":
        return int(_rand_split_reduce_nb(u_idx, u_out, plus_cuts, reps))
    return _rand_split_reduce_np(u_idx, u_out, plus_cuts, reps)
