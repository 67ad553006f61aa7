"""Discrete realizations of the memory operators I and J.

(If)(t) = integral_0^t I(t-tau) f(tau) dtau is discretized by product
integration: the kernel is integrated exactly over each cell (weights are
differences of the antiderivative N), and f is sampled per cell.  The same
construction applies to (Jf)(t) with the kernel -gamma - log(t-tau), whose
cell integrals come from the closed-form antiderivative s*(1-gamma-log s).

Product weights absorb the 1/(t log^2 t) kernel singularity exactly, so the
rules stay accurate on graded grids where polynomial quadrature fails.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DomainError
from .specfun import EULER_GAMMA, EvalPolicy, volterra_N, volterra_P

_SAMPLINGS = ("midpoint", "left", "current_node")


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes on [0, T] with nodes[0] = 0."""

    nodes: np.ndarray
    grading: str = "uniform"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 2:
            raise DomainError("TimeGrid needs at least 2 nodes")
        if nodes[0] != 0.0:
            raise DomainError("TimeGrid must start at 0")
        if not np.all(np.diff(nodes) > 0.0):
            raise DomainError("TimeGrid nodes must be strictly increasing")

    def __len__(self):
        return self.nodes.size

    @property
    def t_max(self):
        return float(self.nodes[-1])

    @property
    def widths(self):
        return np.diff(self.nodes)

    @property
    def midpoints(self):
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    @classmethod
    def uniform(cls, t_max, num_nodes):
        if t_max <= 0.0 or num_nodes < 2:
            raise DomainError("uniform grid needs t_max > 0 and >= 2 nodes")
        return cls(np.linspace(0.0, t_max, num_nodes), grading="uniform")

    @classmethod
    def geometric(cls, t_max, num_nodes, ratio=0.7, floor=1e-10):
        """Grid graded toward 0: cell widths shrink by `ratio` per cell.

        The first positive node is t_max * ratio^(num_nodes-2), but never
        below floor * t_max; below the floor the nodes are log-spaced, which
        keeps the grid representable for large node counts.
        """
        if t_max <= 0.0 or num_nodes < 3:
            raise DomainError("geometric grid needs t_max > 0 and >= 3 nodes")
        if not (0.0 < ratio < 1.0):
            raise DomainError(f"grading ratio must lie in (0,1), got {ratio}")
        first = t_max * max(ratio ** (num_nodes - 2), floor)
        inner = np.geomspace(first, t_max, num_nodes - 1)
        nodes = np.concatenate(([0.0], inner))
        return cls(nodes, grading=f"geometric({ratio})")


@dataclass(frozen=True)
class SampledSignal:
    """Complex samples attached to the nodes of a TimeGrid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.grid),):
            raise DomainError("signal length must match its grid")
        if not np.all(np.isfinite(values)):
            raise DomainError("signal values must be finite")

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, np.asarray([fn(t) for t in grid.nodes], dtype=complex))


class KernelTable:
    """Cached splines of N(t) and P(t) for fast weight computation.

    Discrete operators need N (cell kernel masses) and the first moment
    P(t) = integral_0^t tau I(tau) dtau (piecewise-linear rule) at O(n^2)
    distinct arguments; direct quadrature per argument is far too slow.
    Both are sampled once on a log-spaced grid and interpolated as log
    value vs log t (slowly varying), giving ~1e-11 relative accuracy.
    """

    T_MIN = 1e-300

    def __init__(self, t_max, policy=None):
        if t_max <= 0.0:
            raise DomainError("KernelTable needs t_max > 0")
        policy = policy or EvalPolicy()
        t_hi = max(t_max, 1.0)
        # Coarse sampling deep in the log-flat region (N, P vary like
        # 1/log(1/t) there; blow-up layers of strong nonlinearities live at
        # t ~ e^(-1/N*), which double precision represents down to 1e-300),
        # fine near t_max.
        lo = np.log10(self.T_MIN)
        split = -4.0
        hi = np.log10(t_hi) + 0.01
        exps = np.concatenate([
            np.linspace(lo, split, int((split - lo) * 16), endpoint=False),
            np.linspace(split, hi, int((hi - split) * 400) + 2),
        ])
        ts = 10.0 ** exps
        ns = np.array([volterra_N(t, policy) for t in ts])
        ps = np.array([volterra_P(t, policy) for t in ts])
        self.t_max = float(t_hi)
        self._spline = CubicSpline(np.log(ts), np.log(ns))
        self._spline_p = CubicSpline(np.log(ts), np.log(ps))

    def __call__(self, t):
        """Vectorized N(t) for 0 <= t <= t_max (N(0) = 0 exactly)."""
        t = np.asarray(t, dtype=float)
        clipped = np.clip(t, self.T_MIN, self.t_max)
        out = np.exp(self._spline(np.log(clipped)))
        return np.where(t <= 0.0, 0.0, out)

    def first_moment(self, t):
        """Vectorized P(t) for 0 <= t <= t_max (P(0) = 0 exactly)."""
        t = np.asarray(t, dtype=float)
        clipped = np.clip(t, self.T_MIN, self.t_max)
        out = np.exp(self._spline_p(np.log(clipped)))
        return np.where(t <= 0.0, 0.0, out)


_TABLE_CACHE = {}


def kernel_table(t_max, policy=None):
    """Shared KernelTable covering [0, t_max], cached per power-of-two span."""
    t_hi = 2.0 ** np.ceil(np.log2(max(t_max, 1.0)))
    key = t_hi
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = KernelTable(t_hi, policy)
    return _TABLE_CACHE[key]


def product_weights(grid, n, table=None):
    """Exact cell integrals w_k = N(t_n - t_k) - N(t_n - t_{k+1}), k < n.

    The weights are nonnegative and telescope to N(t_n).
    """
    if not (1 <= n < len(grid)):
        raise DomainError(f"node index {n} out of range for grid of {len(grid)}")
    table = table or kernel_table(grid.t_max)
    d = grid.nodes[n] - grid.nodes[: n + 1]
    nvals = table(d)
    return nvals[:-1] - nvals[1:]


def refine_grid(grid, factor=2):
    """Split every cell into `factor` equal subcells (nodes are nested)."""
    if factor < 2:
        return grid
    t = grid.nodes
    sub = (t[:-1, None] + np.arange(factor)[None, :] * (np.diff(t) / factor)[:, None])
    nodes = np.append(sub.ravel(), t[-1])
    return TimeGrid(nodes, grading=f"{grid.grading}/refined{factor}")


def log_refine_grid(grid, factor=2, t_cut=0.0):
    """Split cells geometrically into `factor` subcells; nodes are nested.

    The first cell [0, t1] is always kept whole: it cannot be subdivided
    geometrically, and on floored graded grids it closes the logarithmic
    boundary layer, which both resolutions must close with the identical
    single-cell rule so that the closure error is common.  Cells starting
    below t_cut are likewise kept whole: near the floor the solution layer
    varies on log scales no representable grid resolves, so refining there
    measures the layer artifact rather than scheme convergence.
    """
    if factor < 2:
        return grid
    t = grid.nodes[1:]
    frac = np.arange(factor) / factor
    sub = t[:-1, None] * (t[1:, None] / t[:-1, None]) ** frac[None, :]
    keep = t[:-1] < t_cut
    sub[keep, 1:] = np.nan
    flat = sub.ravel()
    nodes = np.concatenate(([0.0, t[0]], flat[1:][np.isfinite(flat[1:])], [t[-1]]))
    return TimeGrid(nodes, grading=f"{grid.grading}/log-refined{factor}")


def weight_matrix(grid, table=None):
    """All product-weight rows as a dense (nodes x cells) matrix.

    Row n holds w_k for cells k < n and zeros beyond; (If)_n is then the
    matrix product with per-cell samples.  Memory is O(n^2); intended for
    repeated applications on one grid (global fixed-point iterations).
    """
    table = table or kernel_table(grid.t_max)
    n = len(grid)
    w = np.zeros((n, n - 1))
    for k in range(1, n):
        w[k, :k] = product_weights(grid, k, table)
    return w


def _moment_split(s_left, dn, dp, h):
    """Fraction b of a cell's kernel mass assigned to its right node.

    b = m/h with m the exact first moment about the left node; clipped to
    the mathematically guaranteed range [0, dn].  For cells that are thin
    relative to their distance from the evaluation node (h << s), dn and
    dp are differences of nearly equal table values and m/h amplifies the
    table noise by s/h, so the midpoint split dn/2 (exact to O(h/s)) is
    used instead.
    """
    dn = np.clip(dn, 0.0, None)
    with np.errstate(invalid="ignore", divide="ignore"):
        b = (s_left * dn - dp) / h
    thin = h < 1e-7 * s_left
    b = np.where(thin, 0.5 * dn, b)
    return np.clip(b, 0.0, dn)


def node_weight_row(grid, n, table=None):
    """Node weights of the piecewise-linear product rule at node t_n.

    Integrating the linear interpolant of f exactly against the kernel
    gives (If)(t_n) = sum_j row[j] f(t_j) with j = 0..n.  Per cell k the
    exact kernel mass is dN_k = N(s_k) - N(s_{k+1}) (s = t_n - t) and the
    exact first moment about t_k is m_k = s_k dN_k - (P(s_k) - P(s_{k+1}));
    the cell contributes dN_k - m_k/h_k to node k and m_k/h_k to node k+1.
    The rule is exact for piecewise-linear f and places the near-diagonal
    kernel mass correctly, which midpoint sampling cannot.
    """
    if not (1 <= n < len(grid)):
        raise DomainError(f"node index {n} out of range for grid of {len(grid)}")
    table = table or kernel_table(grid.t_max)
    s = grid.nodes[n] - grid.nodes[: n + 1]
    nvals = table(s)
    pvals = table.first_moment(s)
    dn = nvals[:-1] - nvals[1:]
    b = _moment_split(s[:-1], dn, pvals[:-1] - pvals[1:], grid.widths[:n])
    row = np.zeros(n + 1)
    row[:n] = np.clip(dn, 0.0, None) - b
    row[1:] += b
    return row


def node_weight_matrix(grid, table=None):
    """All piecewise-linear rule rows as a dense (nodes x nodes) matrix.

    (If) at every node is the matrix product with the node values of f.
    Memory is O(n^2); intended for repeated applications on one grid.
    Rows are built in chunks from the vectorized N and P splines; entries
    at or above the diagonal come out exactly zero because the tables
    return 0 for non-positive arguments.
    """
    table = table or kernel_table(grid.t_max)
    t = grid.nodes
    n = len(grid)
    a = np.zeros((n, n))
    widths = grid.widths
    chunk = max(1, int(2 ** 22 / n))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        s = t[lo:hi, None] - t[None, :]
        nv = table(s)
        pv = table.first_moment(s)
        dn = nv[:, :-1] - nv[:, 1:]
        b = _moment_split(s[:, :-1], dn, pv[:, :-1] - pv[:, 1:],
                          widths[None, :])
        a[lo:hi, :-1] = np.clip(dn, 0.0, None) - b
        a[lo:hi, 1:] += b
    return a


def _j_antiderivative(s):
    """Antiderivative of the J-kernel -gamma - log: s*(1 - gamma - log s)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0.0
    out[pos] = s[pos] * (1.0 - EULER_GAMMA - np.log(s[pos]))
    return out


def j_weights(grid, n):
    """Exact cell integrals of the J-kernel -gamma - log(t_n - tau)."""
    if not (1 <= n < len(grid)):
        raise DomainError(f"node index {n} out of range for grid of {len(grid)}")
    d = grid.nodes[n] - grid.nodes[: n + 1]
    m = _j_antiderivative(d)
    return m[:-1] - m[1:]


def _cell_samples(values, n, sampling):
    """Per-cell sample of a node-valued signal for cells 0..n-1."""
    if sampling == "midpoint":
        return 0.5 * (values[:n] + values[1 : n + 1])
    if sampling == "left":
        return values[:n]
    if sampling == "current_node":
        s = 0.5 * (values[:n] + values[1 : n + 1])
        s[-1] = values[n]
        return s
    raise DomainError(f"unknown sampling {sampling!r}; choose from {_SAMPLINGS}")


def _apply_product_rule(grid, samples_per_cell, weight_fn):
    out = np.zeros(len(grid), dtype=complex)
    for n in range(1, len(grid)):
        out[n] = weight_fn(n) @ samples_per_cell(n)
    return out


def apply_I(f, table=None, sampling="linear"):
    """Discrete (If)(t_n) with product-integration weights.

    (If)(0) = 0.  sampling="linear" integrates the piecewise-linear
    interpolant of f exactly against the kernel (second-order accurate);
    the cell samplings "midpoint", "left" and "current_node" use the
    plain cell-mass weights.
    """
    table = table or kernel_table(f.grid.t_max)
    if sampling == "linear":
        vals = _apply_product_rule(
            f.grid,
            lambda n: f.values[: n + 1],
            lambda n: node_weight_row(f.grid, n, table),
        )
    else:
        vals = _apply_product_rule(
            f.grid,
            lambda n: _cell_samples(f.values, n, sampling),
            lambda n: product_weights(f.grid, n, table),
        )
    return SampledSignal(f.grid, vals)


def apply_I_fn(grid, fn, table=None):
    """Discrete I applied to a callable evaluated at exact cell midpoints.

    Unlike apply_I this never touches node 0, so integrands that diverge at
    tau = 0 (e.g. the J-kernel itself) are admissible.  At the first node
    the single cell contains both the kernel's diagonal singularity and any
    singularity of fn at 0, so midpoint sampling is replaced by direct
    adaptive quadrature of the product there.
    """
    table = table or kernel_table(grid.t_max)
    mids = np.asarray([fn(t) for t in grid.midpoints], dtype=complex)
    out = _apply_product_rule(
        grid,
        lambda n: mids[:n],
        lambda n: product_weights(grid, n, table),
    )
    out[1] = _first_node_quad(grid.nodes[1], fn, table)
    return out


def _first_node_quad(t1, fn, table, cells_per_decade=4):
    """integral_0^t1 I(t1 - tau) fn(tau) dtau on a double-graded subgrid.

    The substitution s = t1 - tau puts the kernel singularity at s = 0 and
    a possible fn singularity at s = t1.  Sub-cells are log-spaced toward
    both ends; kernel mass per sub-cell is the exact difference of N, so
    the slowly decaying ~1/log(1/s) mass near the diagonal is never
    truncated (a [0, s_min] cell with weight N(s_min) closes the rule).
    """
    s_floor = 1e-28  # kernel mass below this is lumped into one exact cell
    decades = np.log10(0.5 * t1 / s_floor)
    m = max(int(decades * cells_per_decade), 8)
    lower = np.geomspace(s_floor, 0.5 * t1, m)  # s-breakpoints in (0, t1/2]
    upper = (t1 - lower[::-1])[1:]              # resolves fn near tau = 0
    edges = np.concatenate((lower, upper, [t1]))
    weights = np.diff(table(edges))
    s_mid = np.sqrt(edges[:-1] * edges[1:])
    tau = np.clip(t1 - s_mid, 0.25 * s_floor, None)
    vals = np.asarray([fn(x) for x in tau], dtype=complex)
    # [0, s_floor] closing cell: fn is flat there (tau ~ t1).
    head = table(s_floor) * complex(fn(t1 - 0.5 * s_floor))
    return head + weights @ vals


def apply_J(f, sampling="midpoint"):
    """Discrete (Jf)(t_n) with exact cell integrals of -gamma - log."""
    vals = _apply_product_rule(
        f.grid,
        lambda n: _cell_samples(f.values, n, sampling),
        lambda n: j_weights(f.grid, n),
    )
    return SampledSignal(f.grid, vals)


def cumulative_midpoint(f):
    """Cumulative integral of a signal with the midpoint cell rule."""
    mids = 0.5 * (f.values[:-1] + f.values[1:])
    out = np.concatenate(([0.0 + 0.0j], np.cumsum(f.grid.widths * mids)))
    return SampledSignal(f.grid, out)


def check_inversion(f, table=None):
    """Residual of the inversion identity J(If) = integral_0^t f.

    Returns max_n |(J(If))(t_n) - cumulative(f)(t_n)| with the same
    midpoint discretization on both sides.
    """
    jif = apply_J(apply_I(f, table=table))
    ref = cumulative_midpoint(f)
    return float(np.max(np.abs(jif.values - ref.values)))
