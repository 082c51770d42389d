"""Dirichlet problem for the 5-point Laplacian on a masked region.

Given an image ``f`` and a mask, find ``S`` with ``S = f`` outside the mask
and a vanishing discrete Laplacian at every mask pixel. Mask pixels on the
image frame only see their in-image neighbours (zero flux across the frame).

The workhorse is a geometric multigrid V-cycle with red-black Gauss-Seidel
smoothing; ``solve_direct`` assembles the same linear system and factorizes
it, and is used as a reference.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from numba import njit
from scipy import ndimage

from bstd.image import as_image, as_mask

log = logging.getLogger(__name__)

METHODS = ("multigrid", "gauss_seidel", "direct")
DIRECT_MAX_UNKNOWNS = 10_000
_DENSE_MAX_UNKNOWNS = 3_000
_FOUR_NEIGHBOURS = ndimage.generate_binary_structure(2, 1)


@dataclass
class SolverOptions:
    method: str = "multigrid"
    tol: float = 1e-6
    max_vcycles: int = 50
    pre_sweeps: int = 2
    post_sweeps: int = 2
    coarsest_size: int = 16
    # wrap the V-cycle in conjugate gradients; plain V-cycles stall on ragged masks
    accelerate: bool = True
    # only used by method="gauss_seidel"
    max_sweeps: int = 200_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}; expected one of {METHODS}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        for name in ("max_vcycles", "pre_sweeps", "post_sweeps", "coarsest_size", "max_sweeps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class SolveStats:
    iterations: int = 0
    final_residual: float = 0.0
    wall_time: float = 0.0
    converged: bool = True
    method: str = "multigrid"
    # mask pixels in components without any Dirichlet neighbour; left at f
    floating_pixels: int = 0
    history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# kernels
#
# All kernels solve  deg(p) u(p) - sum_{q ~ p} u(q) = b(p)  at mask pixels p,
# where q runs over the in-image 4-neighbours and deg(p) is their count.
# Values of u outside the mask act as fixed boundary data.


@njit(cache=True)
def _update_edge(u, b, mask, y, x):
    h, w = u.shape
    s = 0.0 if b is None else b[y, x]
    n = 0
    if x > 0:
        s += u[y, x - 1]
        n += 1
    if x < w - 1:
        s += u[y, x + 1]
        n += 1
    if y > 0:
        s += u[y - 1, x]
        n += 1
    if y < h - 1:
        s += u[y + 1, x]
        n += 1
    if mask[y, x]:
        u[y, x] = s / n


@njit(cache=True)
def _sweep(u, b, mask, sweeps, reverse):
    h, w = u.shape
    for _ in range(sweeps):
        for k in range(2):
            color = 1 - k if reverse else k
            for y in range(h):
                x0 = (y + color) & 1
                if y == 0 or y == h - 1 or w < 3:
                    for x in range(x0, w, 2):
                        _update_edge(u, b, mask, y, x)
                    continue
                if x0 == 0:
                    _update_edge(u, b, mask, y, 0)
                    x0 = 2
                for x in range(x0, w - 1, 2):
                    # branch-free on the mask: ragged masks defeat branch prediction
                    new = u[y, x - 1] + u[y, x + 1] + u[y - 1, x] + u[y + 1, x]
                    if b is not None:
                        new += b[y, x]
                    new *= 0.25
                    u[y, x] += mask[y, x] * (new - u[y, x])
                if (w - 1 + y + color) & 1 == 0:
                    _update_edge(u, b, mask, y, w - 1)


@njit(cache=True)
def _residual(u, b, mask, r):
    h, w = u.shape
    worst = 0.0
    for y in range(h):
        for x in range(w):
            if y == 0 or y == h - 1 or x == 0 or x == w - 1:
                v = mask[y, x] * _residual_edge(u, b, y, x)
            else:
                v = u[y, x - 1] + u[y, x + 1] + u[y - 1, x] + u[y + 1, x] - 4.0 * u[y, x]
                if b is not None:
                    v += b[y, x]
                v *= mask[y, x]
            r[y, x] = v
            worst = max(worst, abs(v))
    return worst


@njit(cache=True)
def _residual_edge(u, b, y, x):
    h, w = u.shape
    s = 0.0 if b is None else b[y, x]
    n = 0
    if x > 0:
        s += u[y, x - 1]
        n += 1
    if x < w - 1:
        s += u[y, x + 1]
        n += 1
    if y > 0:
        s += u[y - 1, x]
        n += 1
    if y < h - 1:
        s += u[y + 1, x]
        n += 1
    return s - n * u[y, x]


@njit(cache=True)
def _restrict(fine, coarse):
    # full weighting (1 2 1) x (1 2 1), renormalized where the stencil leaves the grid
    hf, wf = fine.shape
    hc, wc = coarse.shape
    for yc in range(hc):
        for xc in range(wc):
            acc = 0.0
            wsum = 0.0
            for dy in range(-1, 2):
                y = 2 * yc + dy
                if y < 0 or y >= hf:
                    continue
                wy = 2.0 if dy == 0 else 1.0
                for dx in range(-1, 2):
                    x = 2 * xc + dx
                    if x < 0 or x >= wf:
                        continue
                    wgt = wy * (2.0 if dx == 0 else 1.0)
                    acc += wgt * fine[y, x]
                    wsum += wgt
            coarse[yc, xc] = acc / wsum


@njit(cache=True)
def _prolong(coarse, fine, mask, add):
    # bilinear; fine (2i, 2j) sits on coarse (i, j)
    hf, wf = fine.shape
    hc, wc = coarse.shape
    for y in range(hf):
        y0 = y >> 1
        y1 = y0 + 1 if (y & 1) and y0 + 1 < hc else y0
        for x in range(wf):
            if mask is not None and not mask[y, x]:
                continue
            x0 = x >> 1
            x1 = x0 + 1 if (x & 1) and x0 + 1 < wc else x0
            v = 0.25 * (coarse[y0, x0] + coarse[y0, x1] + coarse[y1, x0] + coarse[y1, x1])
            if add:
                fine[y, x] += v
            else:
                fine[y, x] = v


def _coarse_shape(shape):
    return tuple((n + 1) // 2 for n in shape)


def restrict(fine) -> np.ndarray:
    """Full-weighting restriction to a grid of half the size (rounded up)."""
    fine = np.ascontiguousarray(fine, dtype=np.float64)
    coarse = np.empty(_coarse_shape(fine.shape))
    _restrict(fine, coarse)
    return coarse


def prolong(coarse, shape) -> np.ndarray:
    """Bilinear interpolation of a coarse grid onto a fine grid of ``shape``."""
    coarse = np.ascontiguousarray(coarse, dtype=np.float64)
    if _coarse_shape(shape) != coarse.shape:
        raise ValueError(f"coarse grid {coarse.shape} does not match fine shape {shape}")
    fine = np.empty(shape)
    _prolong(coarse, fine, None, False)
    return fine


def coarsen_mask(mask) -> np.ndarray:
    """Coarse mask: coarse (i, j) is interior iff fine (2i, 2j) and its 4 neighbours are.

    Components that lose all boundary data on the coarse grid are dropped so
    every coarse operator stays nonsingular.
    """
    inner = ndimage.binary_erosion(mask, structure=_FOUR_NEIGHBOURS, border_value=1)
    solvable, _ = split_floating(np.ascontiguousarray(inner[::2, ::2]))
    return solvable


def smooth(S, f, mask, sweeps: int = 1) -> np.ndarray:
    """Red-black Gauss-Seidel sweeps on the Dirichlet problem; returns a new grid."""
    f = as_image(f)
    mask = as_mask(mask, f.shape)
    u = np.array(S, dtype=np.float64)
    u[~mask] = f[~mask]
    _sweep(u, None, mask, int(sweeps), False)
    return u


def residual(S, mask) -> float:
    """Largest 5-point Laplacian defect over mask pixels (0 for an empty mask)."""
    S = np.ascontiguousarray(as_image(S))
    mask = as_mask(mask, S.shape)
    if not mask.any():
        return 0.0
    return float(_residual(S, None, mask, np.empty_like(S)))


# ---------------------------------------------------------------------------


def split_floating(mask):
    """Split a mask into components with Dirichlet data and those without.

    A 4-connected component that never touches a non-mask pixel (for example a
    mask covering the whole frame) has no boundary values and no unique
    harmonic fill.
    """
    labels, n = ndimage.label(mask, structure=_FOUR_NEIGHBOURS)
    if n == 0:
        return mask, np.zeros_like(mask)
    touching = ndimage.binary_dilation(~mask, structure=_FOUR_NEIGHBOURS) & mask
    anchored = np.zeros(n + 1, dtype=bool)
    anchored[np.unique(labels[touching])] = True
    anchored[0] = False
    solvable = anchored[labels]
    return solvable, mask & ~solvable


def _assemble(mask):
    """Sparse operator over mask pixels plus the index map used to build it."""
    h, w = mask.shape
    index = -np.ones(mask.shape, dtype=np.int64)
    ys, xs = np.nonzero(mask)
    n = ys.size
    index[ys, xs] = np.arange(n)
    deg = np.zeros(n)
    rows, cols = [], []
    for dy, dx in ((0, -1), (0, 1), (-1, 0), (1, 0)):
        ny, nx = ys + dy, xs + dx
        inside = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        deg += inside
        nb = np.full(n, -1, dtype=np.int64)
        nb[inside] = index[ny[inside], nx[inside]]
        linked = nb >= 0
        rows.append(np.arange(n)[linked])
        cols.append(nb[linked])
    rows = np.concatenate([np.arange(n)] + rows)
    cols = np.concatenate([np.arange(n)] + cols)
    vals = np.concatenate([deg, -np.ones(rows.size - n)])
    A = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return A, ys, xs


def _dirichlet_rhs(f, mask, ys, xs):
    h, w = f.shape
    outside = np.where(mask, 0.0, f)
    padded = np.zeros((h + 2, w + 2))
    padded[1:-1, 1:-1] = outside
    y, x = ys + 1, xs + 1
    return padded[y, x - 1] + padded[y, x + 1] + padded[y - 1, x] + padded[y + 1, x]


def solve_direct(f, mask) -> np.ndarray:
    """Assemble the masked 5-point system and solve it by factorization."""
    f = as_image(f)
    mask = as_mask(mask, f.shape)
    solvable, _ = split_floating(mask)
    n = int(solvable.sum())
    if n > DIRECT_MAX_UNKNOWNS:
        raise ValueError(f"{n} unknowns exceeds the direct-solve limit of {DIRECT_MAX_UNKNOWNS}")
    S = f.copy()
    if n == 0:
        return S
    A, ys, xs = _assemble(solvable)
    rhs = _dirichlet_rhs(f, solvable, ys, xs)
    if n <= _DENSE_MAX_UNKNOWNS:
        sol = scipy.linalg.solve(A.toarray(), rhs, assume_a="sym")
    else:
        sol = scipy.sparse.linalg.splu(A.tocsc()).solve(rhs)
    S[ys, xs] = sol
    return S


@njit(cache=True)
def _restrict_adjoint(r, coarse, coarse_mask):
    # transpose of _prolong; in the interior this is 4x full weighting
    hc, wc = coarse.shape
    hf, wf = r.shape
    coarse[:, :] = 0.0
    for y in range(hf):
        y0 = y >> 1
        y1 = y0 + 1 if (y & 1) and y0 + 1 < hc else y0
        for x in range(wf):
            v = r[y, x]
            if v == 0.0:
                continue
            v *= 0.25
            x0 = x >> 1
            x1 = x0 + 1 if (x & 1) and x0 + 1 < wc else x0
            coarse[y0, x0] += v
            coarse[y0, x1] += v
            coarse[y1, x0] += v
            coarse[y1, x1] += v
    for y in range(hc):
        for x in range(wc):
            if not coarse_mask[y, x]:
                coarse[y, x] = 0.0


@njit(cache=True)
def _apply(p, mask, out):
    """out = A p for p vanishing outside the mask; returns p . out"""
    h, w = p.shape
    dot = 0.0
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                out[y, x] = 0.0
                continue
            s = 0.0
            n = 0
            if x > 0:
                s += p[y, x - 1]
                n += 1
            if x < w - 1:
                s += p[y, x + 1]
                n += 1
            if y > 0:
                s += p[y - 1, x]
                n += 1
            if y < h - 1:
                s += p[y + 1, x]
                n += 1
            v = n * p[y, x] - s
            out[y, x] = v
            dot += v * p[y, x]
    return dot


@njit(cache=True)
def _step(u, r, p, Ap, a):
    h, w = u.shape
    worst = 0.0
    for y in range(h):
        for x in range(w):
            u[y, x] += a * p[y, x]
            r[y, x] -= a * Ap[y, x]
            if abs(r[y, x]) > worst:
                worst = abs(r[y, x])
    return worst


@njit(cache=True)
def _direction(p, z, beta):
    h, w = p.shape
    for y in range(h):
        for x in range(w):
            p[y, x] = z[y, x] + beta * p[y, x]


class _Hierarchy:
    """Coarse masks, scratch grids and the coarsest-level solve for one fine mask."""

    def __init__(self, mask, opts: SolverOptions):
        self.opts = opts
        self.masks = [mask]
        while max(self.masks[-1].shape) > opts.coarsest_size and self.masks[-1].any():
            self.masks.append(coarsen_mask(self.masks[-1]))
        self.u = [np.zeros(m.shape) for m in self.masks]
        self.b = [np.zeros(m.shape) for m in self.masks]
        self.r = [np.zeros(m.shape) for m in self.masks]
        A, self.ys, self.xs = _assemble(self.masks[-1])
        self.bottom = scipy.linalg.cho_factor(A.toarray()) if self.ys.size else None

    def vcycle(self, level, u, b):
        """One V-cycle on A u = b at ``level``; symmetric when started from u = 0."""
        opts = self.opts
        mask = self.masks[level]
        if level == len(self.masks) - 1:
            if self.bottom is not None:
                u[self.ys, self.xs] = scipy.linalg.cho_solve(self.bottom, b[self.ys, self.xs])
            return
        _sweep(u, b, mask, opts.pre_sweeps, False)
        r = self.r[level]
        _residual(u, b, mask, r)
        uc, bc = self.u[level + 1], self.b[level + 1]
        _restrict_adjoint(r, bc, self.masks[level + 1])
        uc[:] = 0.0
        self.vcycle(level + 1, uc, bc)
        _prolong(uc, u, mask, True)
        _sweep(u, b, mask, opts.post_sweeps, True)

    def precondition(self, r, z):
        z[:] = 0.0
        self.vcycle(0, z, r)


def _pcg(S, mask, hierarchy, opts, stats):
    """Multigrid-preconditioned conjugate gradients on the Dirichlet problem, in place."""
    r = np.empty_like(S)
    z = np.empty_like(S)
    Ap = np.empty_like(S)
    res = _residual(S, None, mask, r)
    stats.history.append(float(res))
    while res > opts.tol and stats.iterations < opts.max_vcycles:
        hierarchy.precondition(r, z)
        stats.iterations += 1
        p = z.copy()
        rz = np.vdot(r, z)
        while stats.iterations < opts.max_vcycles:
            pAp = _apply(p, mask, Ap)
            if pAp <= 0.0:
                break
            a = rz / pAp
            res = _step(S, r, p, Ap, a)
            stats.history.append(float(res))
            if res <= opts.tol:
                break
            hierarchy.precondition(r, z)
            stats.iterations += 1
            rz_next = np.vdot(r, z)
            _direction(p, z, rz_next / rz)
            rz = rz_next
        # guard against drift of the recursively updated residual
        res = _residual(S, None, mask, r)


def _vcycles(S, mask, hierarchy, opts, stats):
    r = np.empty_like(S)
    res = _residual(S, None, mask, r)
    stats.history.append(float(res))
    while res > opts.tol and stats.iterations < opts.max_vcycles:
        hierarchy.vcycle(0, S, None)
        stats.iterations += 1
        res = _residual(S, None, mask, r)
        stats.history.append(float(res))


def _gauss_seidel(S, mask, opts, stats):
    r = np.empty_like(S)
    res = _residual(S, None, mask, r)
    while res > opts.tol and stats.iterations < opts.max_sweeps:
        todo = min(16, opts.max_sweeps - stats.iterations)
        _sweep(S, None, mask, todo, False)
        stats.iterations += todo
        res = _residual(S, None, mask, r)


def _crop_box(mask):
    """Bounding box of the mask grown by the one-pixel ring holding its boundary data."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    h, w = mask.shape
    return (slice(max(rows[0] - 1, 0), min(rows[-1] + 2, h)),
            slice(max(cols[0] - 1, 0), min(cols[-1] + 2, w)))


def solve_dirichlet(f, mask, opts: SolverOptions | None = None) -> tuple[np.ndarray, SolveStats]:
    """Harmonic fill of ``f`` inside ``mask`` with ``f`` as boundary data.

    Pixels outside the mask are copied from ``f`` unchanged. The residual in
    the returned stats is recomputed from the returned grid. If the iteration
    cap is hit first, the last iterate is returned with ``converged=False``.
    """
    opts = opts or SolverOptions()
    f = np.ascontiguousarray(as_image(f))
    mask = as_mask(mask, f.shape)
    start = time.perf_counter()
    solvable, floating = split_floating(mask)
    n_floating = int(floating.sum())
    if n_floating:
        log.warning("%d mask pixels have no boundary data and are left unchanged", n_floating)
    stats = SolveStats(method=opts.method, floating_pixels=n_floating)

    S = f.copy()
    if not solvable.any():
        stats.wall_time = time.perf_counter() - start
        return S, stats

    if opts.method == "direct":
        S = solve_direct(f, solvable)
        stats.iterations = 1
    else:
        # the frame rule is unaffected: the box only leaves the frame where the
        # mask does not reach it
        box = _crop_box(solvable)
        sub = np.ascontiguousarray(S[box])
        sub_mask = np.ascontiguousarray(solvable[box])
        if opts.method == "gauss_seidel":
            _gauss_seidel(sub, sub_mask, opts, stats)
        elif opts.accelerate:
            _pcg(sub, sub_mask, _Hierarchy(sub_mask, opts), opts, stats)
        else:
            _vcycles(sub, sub_mask, _Hierarchy(sub_mask, opts), opts, stats)
        S[box] = sub

    stats.final_residual = residual(S, solvable)
    stats.converged = bool(stats.final_residual <= opts.tol) or opts.method == "direct"
    if not stats.converged:
        log.warning("solver stopped after %d iterations with residual %.3g > tol %.3g",
                    stats.iterations, stats.final_residual, opts.tol)
    stats.wall_time = time.perf_counter() - start
    return S, stats
