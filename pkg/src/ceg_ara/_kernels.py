"""Tree-sweep kernels with a numba path and a pure-numpy fallback.

All sweep kernels take vertices in depth-first preorder, so ``parent[i] < i``
for every non-root ``i`` and the root sits at index 0. The numba versions do
one forward pass; the numpy versions vectorise over one depth level at a time
and need the level index produced by :func:`depth_levels`.

Set ``CEG_ARA_DISABLE_NUMBA=1`` to force the numpy path. Both paths perform
the same floating point operations in the same order, so results are
bit-identical.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() not in ("", "0", "false", "no")


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _flag("CEG_ARA_DISABLE_NUMBA")
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def sorted_children(parent: np.ndarray, label: np.ndarray, backend: str | None = None
                    ) -> tuple[np.ndarray, np.ndarray]:
    """CSR child lists, children of each vertex ordered by label index (ties by index)."""
    if (backend or BACKEND) == "numba":
        return _nb_sorted_children(np.ascontiguousarray(parent, dtype=np.int64),
                                   np.ascontiguousarray(label, dtype=np.int64))
    return np_sorted_children(parent, label)


def np_sorted_children(parent: np.ndarray, label: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = parent.shape[0]
    has_parent = parent >= 0
    kids = np.nonzero(has_parent)[0]
    order = np.lexsort((label[kids], parent[kids]))
    kids = kids[order]
    counts = np.bincount(parent[kids], minlength=n)
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, kids.astype(np.int64)


def _gather_children(ptr: np.ndarray, kids: np.ndarray, frontier: np.ndarray) -> np.ndarray:
    starts = ptr[frontier]
    counts = ptr[frontier + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    base = np.repeat(starts - (np.cumsum(counts) - counts), counts)
    return kids[base + np.arange(total)]


def depth_levels(parent: np.ndarray, backend: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Group preorder positions by depth: returns ``(ptr, idx)``."""
    n = parent.shape[0]
    ptr, kids = sorted_children(parent, np.zeros(n, dtype=np.int64), backend)
    levels = [np.zeros(1, dtype=np.int64)]
    while True:
        nxt = _gather_children(ptr, kids, levels[-1])
        if nxt.size == 0:
            break
        levels.append(nxt)
    lptr = np.zeros(len(levels) + 1, dtype=np.int64)
    np.cumsum([lv.size for lv in levels], out=lptr[1:])
    return lptr, np.concatenate(levels)


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def np_preorder(parent: np.ndarray, label: np.ndarray, root: int) -> np.ndarray:
    n = parent.shape[0]
    ptr, kids = np_sorted_children(parent, label)
    levels = [np.array([root], dtype=np.int64)]
    while True:
        nxt = _gather_children(ptr, kids, levels[-1])
        if nxt.size == 0:
            break
        levels.append(nxt)
    size = np.ones(n, dtype=np.int64)
    for lv in reversed(levels[1:]):
        np.add.at(size, parent[lv], size[lv])
    pos = np.zeros(n, dtype=np.int64)
    for lv in levels[1:]:
        p = parent[lv]
        s = size[lv]
        excl = np.cumsum(s) - s
        run_start = np.ones(lv.size, dtype=bool)
        run_start[1:] = p[1:] != p[:-1]
        starts = np.nonzero(run_start)[0]
        run_len = np.diff(np.append(starts, lv.size))
        excl = excl - np.repeat(excl[starts], run_len)
        pos[lv] = pos[p] + 1 + excl
    order = np.empty(n, dtype=np.int64)
    order[pos] = np.arange(n, dtype=np.int64)
    return order


def np_path_products(parent, factor, reset, lptr, lidx):
    out = np.empty(parent.shape[0], dtype=np.float64)
    out[0] = 1.0
    for d in range(1, lptr.shape[0] - 1):
        idx = lidx[lptr[d]:lptr[d + 1]]
        vals = out[parent[idx]] * factor[idx]
        vals[reset[idx]] = 1.0
        out[idx] = vals
    return out


def np_path_sums(parent, weight, lptr, lidx):
    out = np.empty(parent.shape[0], dtype=np.float64)
    out[0] = 0.0
    for d in range(1, lptr.shape[0] - 1):
        idx = lidx[lptr[d]:lptr[d + 1]]
        out[idx] = out[parent[idx]] + weight[idx]
    return out


def np_nearest_marked(parent, mark, lptr, lidx):
    out = np.empty(parent.shape[0], dtype=np.int64)
    out[0] = 0 if mark[0] else -1
    for d in range(1, lptr.shape[0] - 1):
        idx = lidx[lptr[d]:lptr[d + 1]]
        out[idx] = np.where(mark[idx], idx, out[parent[idx]])
    return out


def np_sibling_disorder(parent: np.ndarray, label: np.ndarray) -> int:
    n = parent.shape[0]
    if n < 2:
        return -1
    kids = np.arange(1, n, dtype=np.int64)
    grouped = kids[np.argsort(parent[1:], kind="stable")]
    same = parent[grouped[1:]] == parent[grouped[:-1]]
    bad = same & (label[grouped[1:]] <= label[grouped[:-1]])
    return int(grouped[1:][bad].min()) if bad.any() else -1


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _njit = numba.njit(cache=True, nogil=True)

    @_njit
    def _nb_sorted_children(parent, label):  # pragma: no cover - compiled
        # counting sort by parent keeps index order, then insertion sort by label
        n = parent.shape[0]
        ptr = np.zeros(n + 1, dtype=np.int64)
        for i in range(n):
            if parent[i] >= 0:
                ptr[parent[i] + 1] += 1
        for i in range(n):
            ptr[i + 1] += ptr[i]
        fill = ptr[:-1].copy()
        kids = np.empty(ptr[n], dtype=np.int64)
        for i in range(n):
            p = parent[i]
            if p >= 0:
                kids[fill[p]] = i
                fill[p] += 1
        for v in range(n):
            for j in range(ptr[v] + 1, ptr[v + 1]):
                c = kids[j]
                k = j - 1
                while k >= ptr[v] and label[kids[k]] > label[c]:
                    kids[k + 1] = kids[k]
                    k -= 1
                kids[k + 1] = c
        return ptr, kids

    @_njit
    def _nb_sibling_disorder(parent, label):  # pragma: no cover - compiled
        n = parent.shape[0]
        last = np.full(n, -1, dtype=np.int64)
        for i in range(1, n):
            p = parent[i]
            if last[p] >= 0 and label[i] <= label[last[p]]:
                return i
            last[p] = i
        return -1

    @_njit
    def _nb_preorder(ptr, kids, root, n):  # pragma: no cover - compiled
        order = np.empty(n, dtype=np.int64)
        stack = np.empty(n, dtype=np.int64)
        top = 0
        stack[0] = root
        k = 0
        while top >= 0:
            v = stack[top]
            top -= 1
            order[k] = v
            k += 1
            for j in range(ptr[v + 1] - 1, ptr[v] - 1, -1):
                top += 1
                stack[top] = kids[j]
        return order

    @_njit
    def _nb_path_products(parent, factor, reset):  # pragma: no cover
        n = parent.shape[0]
        out = np.empty(n, dtype=np.float64)
        out[0] = 1.0
        for i in range(1, n):
            if reset[i]:
                out[i] = 1.0
            else:
                out[i] = out[parent[i]] * factor[i]
        return out

    @_njit
    def _nb_path_sums(parent, weight):  # pragma: no cover
        n = parent.shape[0]
        out = np.empty(n, dtype=np.float64)
        out[0] = 0.0
        for i in range(1, n):
            out[i] = out[parent[i]] + weight[i]
        return out

    @_njit
    def _nb_nearest_marked(parent, mark):  # pragma: no cover
        n = parent.shape[0]
        out = np.empty(n, dtype=np.int64)
        out[0] = 0 if mark[0] else -1
        for i in range(1, n):
            out[i] = i if mark[i] else out[parent[i]]
        return out

    def nb_preorder(parent, label, root):
        ptr, kids = _nb_sorted_children(parent, label)
        return _nb_preorder(ptr, kids, np.int64(root), parent.shape[0])

    def nb_path_products(parent, factor, reset, lptr=None, lidx=None):
        return _nb_path_products(parent, factor, reset)

    def nb_path_sums(parent, weight, lptr=None, lidx=None):
        return _nb_path_sums(parent, weight)

    def nb_nearest_marked(parent, mark, lptr=None, lidx=None):
        return _nb_nearest_marked(parent, mark)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


class Sweeper:
    """Runs the sweep kernels over one preorder parent array.

    Holds the depth-level index lazily so the numba path never pays for it.
    """

    def __init__(self, parent: np.ndarray, backend: str | None = None):
        self.parent = np.ascontiguousarray(parent, dtype=np.int64)
        self.backend = backend or BACKEND
        if self.backend == "numba" and not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        self._levels: tuple[np.ndarray, np.ndarray] | None = None
        self._no_reset = np.zeros(self.parent.shape[0], dtype=np.bool_)

    @property
    def levels(self) -> tuple[np.ndarray, np.ndarray]:
        if self._levels is None:
            self._levels = depth_levels(self.parent, self.backend)
        return self._levels

    def products(self, factor: np.ndarray, reset: np.ndarray | None = None) -> np.ndarray:
        factor = np.ascontiguousarray(factor, dtype=np.float64)
        reset = self._no_reset if reset is None else np.ascontiguousarray(reset, dtype=np.bool_)
        if self.backend == "numba":
            return nb_path_products(self.parent, factor, reset)
        return np_path_products(self.parent, factor, reset, *self.levels)

    def sums(self, weight: np.ndarray) -> np.ndarray:
        weight = np.ascontiguousarray(weight, dtype=np.float64)
        if self.backend == "numba":
            return nb_path_sums(self.parent, weight)
        return np_path_sums(self.parent, weight, *self.levels)

    def nearest_marked(self, mark: np.ndarray) -> np.ndarray:
        mark = np.ascontiguousarray(mark, dtype=np.bool_)
        if self.backend == "numba":
            return nb_nearest_marked(self.parent, mark)
        return np_nearest_marked(self.parent, mark, *self.levels)


def sibling_disorder(parent: np.ndarray, label: np.ndarray, backend: str | None = None) -> int:
    """First vertex whose label does not exceed its previous sibling's, or -1.

    On preorder arrays a result of -1 means siblings carry distinct labels and
    appear in label order.
    """
    parent = np.ascontiguousarray(parent, dtype=np.int64)
    label = np.ascontiguousarray(label, dtype=np.int64)
    if (backend or BACKEND) == "numba":
        return int(_nb_sibling_disorder(parent, label))
    return np_sibling_disorder(parent, label)


def preorder(parent: np.ndarray, label: np.ndarray, root: int, backend: str | None = None) -> np.ndarray:
    """Depth-first preorder of a rooted tree, children visited by label index."""
    parent = np.ascontiguousarray(parent, dtype=np.int64)
    label = np.ascontiguousarray(label, dtype=np.int64)
    if (backend or BACKEND) == "numba":
        return nb_preorder(parent, label, root)
    return np_preorder(parent, label, root)
