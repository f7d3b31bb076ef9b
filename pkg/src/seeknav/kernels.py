"""Hot numeric kernels with a numba path and a pure numpy/scipy path.

Each kernel exists twice: ``<name>_nb`` (numba, loop form) and ``<name>_np``
(vectorized numpy, or scipy's C Dijkstra).  The unsuffixed names dispatch to
one of them according to :data:`seeknav._jit.USE_JIT`.  Both paths do the same
floating point operations in the same order wherever that is possible, so the
line and value-iteration kernels agree bit for bit; grid distances agree to
rounding.

Grid conventions: ``free`` is a 2D boolean array indexed ``[row, col]``.  Motion
is 8-connected with unit cost for axis steps and sqrt(2) for diagonals; a
diagonal step is allowed only when both orthogonal neighbours are free (no
corner cutting).  Distances are in cell units.
"""
import heapq

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from ._jit import USE_JIT, njit

SQRT2 = float(np.sqrt(2.0))

# neighbour order is part of the tie-breaking contract of descend_path
NEIGHBOURS = np.array(
    [[-1, 0], [0, -1], [0, 1], [1, 0], [-1, -1], [-1, 1], [1, -1], [1, 1]], dtype=np.int64
)


# ---------------------------------------------------------------------------
# line rasterization / line of sight

def line_cells_np(r0, c0, r1, c1):
    n = max(abs(r1 - r0), abs(c1 - c0))
    if n == 0:
        return np.array([[r0, c0]], dtype=np.int64)
    t = np.arange(n + 1, dtype=np.float64)
    rows = np.floor(r0 + t * (r1 - r0) / n + 0.5).astype(np.int64)
    cols = np.floor(c0 + t * (c1 - c0) / n + 0.5).astype(np.int64)
    return np.stack((rows, cols), axis=1)


@njit
def line_cells_nb(r0, c0, r1, c1):
    n = max(abs(r1 - r0), abs(c1 - c0))
    out = np.empty((n + 1, 2), dtype=np.int64)
    if n == 0:
        out[0, 0] = r0
        out[0, 1] = c0
        return out
    for k in range(n + 1):
        t = float(k)
        out[k, 0] = np.int64(np.floor(r0 + t * (r1 - r0) / n + 0.5))
        out[k, 1] = np.int64(np.floor(c0 + t * (c1 - c0) / n + 0.5))
    return out


def los_clear_np(free, r0, c0, r1, c1):
    cells = line_cells_np(r0, c0, r1, c1)
    return bool(free[cells[:, 0], cells[:, 1]].all())


@njit
def los_clear_nb(free, r0, c0, r1, c1):
    n = max(abs(r1 - r0), abs(c1 - c0))
    if n == 0:
        return free[r0, c0]
    for k in range(n + 1):
        t = float(k)
        r = np.int64(np.floor(r0 + t * (r1 - r0) / n + 0.5))
        c = np.int64(np.floor(c0 + t * (c1 - c0) / n + 0.5))
        if not free[r, c]:
            return False
    return True


def line_walkable_np(free, r0, c0, r1, c1):
    """True if the rasterized line is a legal 8-connected walk."""
    cells = line_cells_np(r0, c0, r1, c1)
    if not free[cells[:, 0], cells[:, 1]].all():
        return False
    if len(cells) < 2:
        return True
    a, b = cells[:-1], cells[1:]
    diag = (a[:, 0] != b[:, 0]) & (a[:, 1] != b[:, 1])
    if not diag.any():
        return True
    a, b = a[diag], b[diag]
    return bool(free[a[:, 0], b[:, 1]].all() and free[b[:, 0], a[:, 1]].all())


@njit
def line_walkable_nb(free, r0, c0, r1, c1):
    cells = line_cells_nb(r0, c0, r1, c1)
    m = cells.shape[0]
    for k in range(m):
        if not free[cells[k, 0], cells[k, 1]]:
            return False
    for k in range(m - 1):
        ra, ca = cells[k, 0], cells[k, 1]
        rb, cb = cells[k + 1, 0], cells[k + 1, 1]
        if ra != rb and ca != cb:
            if not (free[ra, cb] and free[rb, ca]):
                return False
    return True


# ---------------------------------------------------------------------------
# grid Dijkstra

@njit
def grid_dijkstra_nb(free, sr, sc, tr, tc):
    rows, cols = free.shape
    dist = np.full((rows, cols), np.inf)
    done = np.zeros((rows, cols), dtype=np.bool_)
    dist[sr, sc] = 0.0
    heap = [(0.0, sr * cols + sc)]
    sq2 = np.sqrt(2.0)
    while len(heap) > 0:
        d, idx = heapq.heappop(heap)
        r = idx // cols
        c = idx - r * cols
        if done[r, c]:
            continue
        done[r, c] = True
        if r == tr and c == tc:
            break
        for k in range(8):
            dr = NEIGHBOURS[k, 0]
            dc = NEIGHBOURS[k, 1]
            nr = r + dr
            nc = c + dc
            if nr < 0 or nr >= rows or nc < 0 or nc >= cols:
                continue
            if not free[nr, nc] or done[nr, nc]:
                continue
            if dr != 0 and dc != 0:
                if not (free[r, nc] and free[nr, c]):
                    continue
                nd = d + sq2
            else:
                nd = d + 1.0
            if nd < dist[nr, nc]:
                dist[nr, nc] = nd
                heapq.heappush(heap, (nd, nr * cols + nc))
    return dist


def grid_adjacency(free):
    """Sparse 8-connected adjacency matrix over all cells of ``free``."""
    rows, cols = free.shape
    idx = np.arange(rows * cols).reshape(rows, cols)
    src, dst, w = [], [], []
    for dr, dc in NEIGHBOURS:
        r0, r1 = max(0, -dr), rows - max(0, dr)
        c0, c1 = max(0, -dc), cols - max(0, dc)
        a = (slice(r0, r1), slice(c0, c1))
        b = (slice(r0 + dr, r1 + dr), slice(c0 + dc, c1 + dc))
        ok = free[a] & free[b]
        if dr != 0 and dc != 0:
            ok &= free[(slice(r0, r1), slice(c0 + dc, c1 + dc))]
            ok &= free[(slice(r0 + dr, r1 + dr), slice(c0, c1))]
            cost = SQRT2
        else:
            cost = 1.0
        src.append(idx[a][ok])
        dst.append(idx[b][ok])
        w.append(np.full(int(ok.sum()), cost))
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    w = np.concatenate(w)
    return sparse.csr_matrix((w, (src, dst)), shape=(rows * cols, rows * cols))


def grid_dijkstra_np(free, sr, sc, tr=-1, tc=-1, adjacency=None):
    rows, cols = free.shape
    if not free[sr, sc]:
        dist = np.full((rows, cols), np.inf)
        dist[sr, sc] = 0.0
        return dist
    if adjacency is None:
        adjacency = grid_adjacency(free)
    dist = csgraph.dijkstra(adjacency, directed=True, indices=sr * cols + sc)
    return dist.reshape(rows, cols)


# ---------------------------------------------------------------------------
# value iteration (stochastic shortest path, absorbing goal with J = 0)

@njit
def value_iteration_nb(move_cost, search_cost, g_move, g_search, tol, max_iter):
    n = search_cost.shape[0]
    J = np.zeros(n)
    Jn = np.zeros(n)
    residual = np.inf
    it = 0
    while it < max_iter:
        it += 1
        residual = 0.0
        for i in range(n):
            best = search_cost[i] + (1.0 - g_search[i]) * J[i]
            for j in range(n):
                if j == i:
                    continue
                q = move_cost[i, j] + (1.0 - g_move[j]) * J[j]
                if q < best:
                    best = q
            Jn[i] = best
        for i in range(n):
            diff = abs(Jn[i] - J[i])
            if diff > residual:
                residual = diff
            J[i] = Jn[i]
        if residual < tol:
            break
    return J, it, residual


def value_iteration_np(move_cost, search_cost, g_move, g_search, tol, max_iter):
    n = search_cost.shape[0]
    J = np.zeros(n)
    diag = np.arange(n)
    stay_move = 1.0 - g_move
    stay_search = 1.0 - g_search
    residual = np.inf
    it = 0
    while it < max_iter:
        it += 1
        Q = move_cost + stay_move * J
        Q[diag, diag] = search_cost + stay_search * J
        Jn = Q.min(axis=1)
        residual = float(np.abs(Jn - J).max())
        J = Jn
        if residual < tol:
            break
    return J, it, residual


if USE_JIT:
    line_cells = line_cells_nb
    los_clear = los_clear_nb
    line_walkable = line_walkable_nb
    value_iteration = value_iteration_nb

    def grid_dijkstra(free, sr, sc, tr=-1, tc=-1, adjacency=None):
        return grid_dijkstra_nb(free, sr, sc, tr, tc)
else:
    line_cells = line_cells_np
    los_clear = los_clear_np
    line_walkable = line_walkable_np
    value_iteration = value_iteration_np
    grid_dijkstra = grid_dijkstra_np

BACKEND = "numba" if USE_JIT else "numpy"


def descend_path(free, dist, tr, tc):
    """Cell path from the Dijkstra source to ``(tr, tc)`` by steepest descent.

    Works on a distance field from either backend.  Ties between equally good
    predecessors go to the earliest entry of NEIGHBOURS.
    """
    if not np.isfinite(dist[tr, tc]):
        return None
    rows, cols = free.shape
    path = [(tr, tc)]
    r, c = tr, tc
    while dist[r, c] > 0.0:
        best = None
        best_val = np.inf
        for dr, dc in NEIGHBOURS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < rows and 0 <= nc < cols) or not free[nr, nc]:
                continue
            if dr != 0 and dc != 0:
                if not (free[r, nc] and free[nr, c]):
                    continue
                step = SQRT2
            else:
                step = 1.0
            val = dist[nr, nc] + step
            if val < best_val - 1e-9:
                best_val = val
                best = (int(nr), int(nc))
        if best is None or dist[best] >= dist[r, c]:
            raise RuntimeError("distance field is not a valid Dijkstra field")
        r, c = best
        path.append(best)
    path.reverse()
    return path
