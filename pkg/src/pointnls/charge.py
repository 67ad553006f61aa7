"""Forcing construction and the nonlinear charge equation solver.

The charge q(t) solves

    q(t) + int_0^t I(t-tau) [4 pi beta0 |q|^(2 sigma) q + kappa q](tau) dtau
         = f(t),

with f the I-transform of the freely evolved initial datum at the center.
The solver marches node by node with product-integration weights; at each
node the scalar complex unknown solves a small implicit equation (damped
fixed point, Newton fallback).  Adaptive continuation tracks |q| into a
possible finite-time blow-up.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy import optimize

from . import ops
from .errors import DomainError, SolverError
from .field import free_regular_at_center
from .ops import SampledSignal, TimeGrid, kernel_table
from .specfun import EULER_GAMMA, KAPPA, q_series


@dataclass(frozen=True)
class Completed:
    t_end: float


@dataclass(frozen=True)
class BlowUp:
    t_star: float
    window: Tuple[float, float]


@dataclass(frozen=True)
class SolverConfig:
    """Stepping and iteration knobs of the charge solver."""

    step_init: float = 1e-3
    step_min: float = 1e-12
    step_growth: float = 1.15
    step_target_rel: float = 0.05
    picard_tol: float = 1e-10
    picard_max_iters: int = 200
    blowup_threshold: float = 1e6
    refinement_levels: int = 2

    def __post_init__(self):
        if self.step_min <= 0.0 or self.step_min > self.step_init:
            raise DomainError("need 0 < step_min <= step_init")
        if self.step_growth <= 1.0:
            raise DomainError("step_growth must exceed 1")
        if not (0.0 < self.picard_tol <= 1e-4):
            raise DomainError(f"picard_tol must lie in (0, 1e-4], got {self.picard_tol}")
        if self.picard_max_iters < 8:
            raise DomainError("picard_max_iters must be >= 8")

    def refined(self, factor=2.0):
        """Config for one refinement level: smaller steps, tighter target."""
        return SolverConfig(
            step_init=self.step_init / factor, step_min=self.step_min,
            step_growth=self.step_growth,
            step_target_rel=self.step_target_rel / factor,
            picard_tol=self.picard_tol, picard_max_iters=self.picard_max_iters,
            blowup_threshold=self.blowup_threshold,
            refinement_levels=self.refinement_levels)


@dataclass(frozen=True)
class ChargeTrajectory:
    """Solved charge samples with solver status and residual certificate."""

    grid: TimeGrid
    q: np.ndarray
    status: Union[Completed, BlowUp]
    residual_sup: float
    q0: complex

    def __post_init__(self):
        q = np.asarray(self.q, dtype=complex)
        object.__setattr__(self, "q", q)
        if q.shape != (len(self.grid),):
            raise DomainError("trajectory length must match its grid")
        if not np.all(np.isfinite(q)):
            raise DomainError("trajectory samples must be finite")
        if q[0] != self.q0:
            raise DomainError("trajectory must start at the initial charge")
        if isinstance(self.status, BlowUp):
            lo, hi = self.status.window
            if not (lo < hi and lo <= self.grid.t_max <= hi):
                raise DomainError("blow-up window must contain the last node")

    def signal(self):
        return SampledSignal(self.grid, self.q)


def nonlinearity(z, params):
    """g(z) = 4 pi beta0 |z|^(2 sigma) z + kappa z."""
    z = np.asarray(z, dtype=complex)
    return 4.0 * np.pi * params.beta0 * np.abs(z) ** (2.0 * params.sigma) * z \
        + KAPPA * z


def forcing_integrand(datum):
    """Scalar callable g(tau) whose I-transform (plus q0) is the forcing.

    The forcing is f = I[A1] + q0 (1 + I[a21] + I[A22]) with
    A1(tau) = 4 pi (U0(tau) phi_{lam,0})(0),
    a21(tau) = (e^(i lam tau) - 1)(-gamma - log tau)        (bounded),
    A22(tau) = e^(i lam tau)/pi * (-pi log lam + Q(lam;tau)) (smooth);
    the exact identity I[-gamma - log(.)] = 1 removes the log singularity
    analytically, so quadrature only ever sees bounded integrands.
    """
    lam = datum.lam
    q0 = complex(datum.q0)

    def g(tau):
        val = 4.0 * np.pi * free_regular_at_center(datum, tau)
        if q0 != 0.0:
            phase = np.exp(1j * lam * tau)
            # a21 -> 0 as tau -> 0 (the log is beaten by the vanishing phase
            # factor); evaluating at tau = 0 directly would form 0 * inf.
            a21 = 0.0 if tau == 0.0 else \
                (phase - 1.0) * (-EULER_GAMMA - np.log(tau))
            a22 = phase / np.pi * (-np.pi * np.log(lam) + q_series(lam, tau))
            val = val + q0 * (a21 + a22)
        return val

    return g


def build_forcing(datum, grid, table=None):
    """Forcing signal on a grid; f(0) = q0 (the continuous limit value)."""
    table = table or kernel_table(grid.t_max)
    g = forcing_integrand(datum)
    vals = np.asarray([g(tau) for tau in grid.nodes], dtype=complex)
    q0 = complex(datum.q0)
    out = np.empty(len(grid), dtype=complex)
    out[0] = q0
    for n in range(1, len(grid)):
        row = ops.node_weight_row(grid, n, table)
        out[n] = q0 + row @ vals[: n + 1]
    return SampledSignal(grid, out)


def picard_map(q, f, params, table=None, sampling="linear"):
    """One application of G(q) = f - I[nonlinearity(q)]."""
    if q.grid.nodes.shape != f.grid.nodes.shape or \
            not np.array_equal(q.grid.nodes, f.grid.nodes):
        raise DomainError("picard_map needs matching grids")
    h = SampledSignal(q.grid, nonlinearity(q.values, params))
    ih = ops.apply_I(h, table=table, sampling=sampling)
    return SampledSignal(q.grid, f.values - ih.values)


def _near_branch(z, rhs, scale, params):
    """Whether z can be the contractive root of x + w g(x) = rhs.

    Only the focusing nonlinear case (beta0 < 0, sigma > 0) has multiple
    roots: there, at any root with w |g'| < 1 one has Re(z rhs*) >=
    |z|^2 sigma/(2 sigma+1) > 0, so the physical (continuable) branch
    always lies within 90 degrees of rhs, while spurious far-branch roots
    sit flipped against rhs and must be rejected -- accepting one silently
    jumps the trajectory across the fold of the layer equation.  For
    sigma = 0 or beta0 >= 0 the modulus equation is strictly monotone, the
    root is unique (possibly non-contractive near a linear resonance
    1 + w(4 pi beta0 + kappa) ~ 0), and no branch test applies.
    """
    if params.sigma == 0.0 or params.beta0 >= 0.0:
        return True
    if abs(z) > 10.0 * scale:
        return False
    return rhs == 0.0 or (z * np.conj(rhs)).real >= 0.0


def _step_solve(q_prev, q_guess, w_diag, rhs, params, config):
    """Solve x + w_diag * g(x) = rhs for the next node value.

    Damped fixed point first (damping 0.5 on stall); if the diagonal term
    is not contractive (large |q| makes w_diag |g'| >= 1 since w_diag
    shrinks only logarithmically with the step), fall back to a 2D real
    Newton solve of the same scalar complex equation.  Only near-branch
    roots are accepted; a focusing fold (no such root) reports failure.
    """
    scale = max(abs(rhs), abs(q_prev), 1.0)
    x = q_guess
    prev_delta = np.inf
    # Transient iterates of a diverging fixed point may overflow; they are
    # discarded (reset to q_prev before the Newton fallback), so the numpy
    # warnings carry no information.
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(config.picard_max_iters):
            x_new = rhs - w_diag * nonlinearity(x, params)
            delta = abs(x_new - x)
            if delta > 0.9 * prev_delta:
                x_new = 0.5 * (x_new + x)
                delta = abs(x_new - x)
            if delta <= config.picard_tol * max(1.0, abs(x_new)):
                if _near_branch(x_new, rhs, scale, params):
                    return complex(x_new), True
                break
            prev_delta = delta
            x = x_new

    def residual(v):
        z = (v[0] + 1j * v[1]) * scale
        r = z + w_diag * nonlinearity(z, params) - rhs
        return [r.real / scale, r.imag / scale]

    if not np.isfinite([x.real, x.imag]).all():
        x = q_prev
    for start in (x, q_prev, rhs):
        sol = optimize.root(residual, [start.real / scale, start.imag / scale],
                            method="hybr", tol=1e-13)
        z = (sol.x[0] + 1j * sol.x[1]) * scale
        # sol.success is unreliable at tight tol (hybr reports "not making
        # good progress" once it stalls at machine precision); the scaled
        # residual itself certifies the root.
        if np.max(np.abs(sol.fun)) < 1e4 * config.picard_tol \
                and _near_branch(z, rhs, scale, params):
            return complex(z), True
    return complex(x), False


def _fold_sample(q_prev, w_diag, rhs, params):
    """Best-approximation sample where the node equation has no root.

    Past the fold of the layer equation the defect min |x + w g(x) - rhs|
    is positive; the minimizer is returned so the trajectory can end on a
    well-defined sample whose defect shows up in the residual certificate.
    """
    scale = max(abs(rhs), abs(q_prev), 1.0)

    def residual(v):
        z = (v[0] + 1j * v[1]) * scale
        r = z + w_diag * nonlinearity(z, params) - rhs
        return [r.real / scale, r.imag / scale]

    best = None
    for start in (q_prev, rhs):
        sol = optimize.least_squares(
            residual, [start.real / scale, start.imag / scale])
        if best is None or sol.cost < best.cost:
            best = sol
    return complex(best.x[0] + 1j * best.x[1]) * scale


def _residual_certificate(grid, q, f_vals, params, table):
    traj_sig = SampledSignal(grid, q)
    g = picard_map(traj_sig, SampledSignal(grid, f_vals), params, table=table)
    return float(np.max(np.abs(g.values - q)))


def _estimate_blowup(times, q_abs):
    """T* by linear extrapolation of 1/|q| through its last decade.

    The fit runs in shifted/scaled coordinates: log-layer blow-ups sit at
    t ~ e^(-1/N*) with microscopic relative spreads, which raw least
    squares cannot scale.
    """
    mask = q_abs >= q_abs[-1] / 10.0
    if np.count_nonzero(mask) < 3:
        mask = np.zeros_like(mask)
        mask[-3:] = True
    ts = times[mask]
    ys = 1.0 / q_abs[mask]
    span = ts[-1] - ts[0]
    t_star = float(times[-1])
    if span > 0.0 and ys[0] > 0.0:
        coef = np.polyfit((ts - ts[0]) / span, ys / ys[0], 1)
        if coef[0] < 0.0:
            t_star = max(ts[0] - span * coef[1] / coef[0], t_star)
    window = (float(ts[0]), float(max(t_star * 1.001, times[-1] * 1.001)))
    return t_star, window


def solve_charge(datum, params, config, grid, table=None, forcing=None):
    """March the charge equation on a fixed grid.

    At node n the unknown q_n solves
        q_n + row_n[n] g(q_n) = f_n - sum_{j<n} row_n[j] g(q_j),
    with row_n the piecewise-linear product-rule weights, which coincides
    with the global discretization, so the returned residual certificate
    ||G(q) - q||_inf is at the per-step iteration tolerance.
    """
    config = config or SolverConfig()
    table = table or kernel_table(grid.t_max)
    f = forcing if forcing is not None else build_forcing(datum, grid, table)
    n_nodes = len(grid)
    q = np.empty(n_nodes, dtype=complex)
    q[0] = complex(datum.q0)
    hnode = np.zeros(n_nodes, dtype=complex)
    hnode[0] = nonlinearity(q[0], params)
    for n in range(1, n_nodes):
        row = ops.node_weight_row(grid, n, table)
        rhs = f.values[n] - row[:n] @ hnode[:n]
        guess = q[n - 1] if n == 1 else q[n - 1] + (q[n - 1] - q[n - 2])
        q_n, ok = _step_solve(q[n - 1], guess, row[n], rhs, params, config)
        if not ok:
            raise SolverError(
                f"per-step iteration failed at t={grid.nodes[n]:.6g} "
                f"(|q| ~ {abs(q[n - 1]):.3e})")
        q[n] = q_n
        hnode[n] = nonlinearity(q[n], params)
        if abs(q_n) > config.blowup_threshold:
            sub_nodes = grid.nodes[: n + 1]
            sub = TimeGrid(sub_nodes, grading=grid.grading)
            t_star, window = _estimate_blowup(sub_nodes, np.abs(q[: n + 1]))
            res = _residual_certificate(sub, q[: n + 1], f.values[: n + 1],
                                        params, table)
            return ChargeTrajectory(sub, q[: n + 1],
                                    BlowUp(t_star, window), res, q[0])
    res = _residual_certificate(grid, q, f.values, params, table)
    return ChargeTrajectory(grid, q, Completed(grid.t_max), res, q[0])


def _layer_start(datum, params, config):
    """First node small enough that the nonlinearity is contractive there.

    The memory weight of the first cell is ~N(t), which decays only like
    1/log(1/t); strong nonlinearities (their blow-up sits at N* =
    1/(8 pi sigma |q0|^(2 sigma)), i.e. t* ~ e^(-1/N*)) need a start deep
    in the log scale so that N(t_start) |g'(q0)| stays below ~1/2.  The
    start is clamped at 1e-300 (the representable log depth).
    """
    amp = max(abs(complex(datum.q0)), 1e-8)
    slope = abs(4.0 * np.pi * params.beta0) * (2.0 * params.sigma + 1.0) \
        * amp ** (2.0 * params.sigma) + abs(KAPPA)
    ell = min(max(slope / 0.3, 40.0), 690.0)
    return float(min(np.exp(-ell), config.step_init * 2.0 ** -20))


def continue_until(datum, params, config, t_max, table=None):
    """Adaptive continuation to t_max or detected blow-up.

    Stepping starts at a layer-resolving first node (geometrically small)
    and tracks the relative change of q per step (config.step_target_rel);
    steps halve on rejection and grow multiplicatively on easy acceptance,
    so the log layer is traversed in O(log(1/t_start)) steps.  Blow-up is
    declared when |q| crosses blowup_threshold, or when the per-step solve
    stops converging at the step floor while |q| is rising: the memory
    weight of a cell is N(width), which decays only logarithmically, so
    near a focusing blow-up the node equation reaches a fold (its
    continuable root ceases to exist) and stepping cannot proceed -- that
    fold is the discrete blow-up event.  T* comes from reciprocal
    extrapolation of |q|; for data whose fold lies below the deepest
    representable time (~1e-300) the reported T* is an upper bound at the
    time-resolution floor and the final sample is the best-approximation
    value, with its defect visible in residual_sup.
    """
    if t_max <= 0.0:
        raise DomainError("continue_until needs t_max > 0")
    config = config or SolverConfig()
    table = table or kernel_table(t_max)
    g_fn = forcing_integrand(datum)
    q0 = complex(datum.q0)
    t_start = min(_layer_start(datum, params, config), 0.5 * t_max)

    nodes = [0.0]
    q = [q0]
    g_nodes = [g_fn(0.0)]
    hnode = [nonlinearity(q0, params)]

    def weight_row(t_new):
        edges = np.append(nodes, t_new)
        s = t_new - edges
        nv = table(s)
        pv = table.first_moment(s)
        dn = nv[:-1] - nv[1:]
        b = ops._moment_split(s[:-1], dn, pv[:-1] - pv[1:], np.diff(edges))
        row = np.zeros(len(edges))
        row[:-1] += np.clip(dn, 0.0, None) - b
        row[1:] += b
        return row

    def try_step(t_new):
        row = weight_row(t_new)
        g_new = g_fn(t_new)
        f_new = q0 + row @ np.append(np.asarray(g_nodes, dtype=complex), g_new)
        rhs = f_new - row[:-1] @ np.asarray(hnode, dtype=complex)
        guess = q[-1] if len(q) < 2 else q[-1] + (q[-1] - q[-2])
        return _step_solve(q[-1], guess, row[-1], rhs, params, config)

    def accept(t_new, q_new):
        g_nodes.append(g_fn(t_new))
        hnode.append(nonlinearity(q_new, params))
        nodes.append(t_new)
        q.append(q_new)

    h = t_start
    status = None
    while nodes[-1] < t_max - 1e-14 * t_max:
        t_new = min(nodes[-1] + h, t_max)
        q_new, ok = try_step(t_new)
        scale = max(abs(q[-1]), 1.0)
        change = abs(q_new - q[-1]) / scale if ok else np.inf
        floor = config.step_min * max(nodes[-1], t_start)
        # Never place a node below the kernel table's floor: there N and P
        # are clipped, so weights lose consistency and fake roots appear.
        if (not ok or change > config.step_target_rel) and \
                t_new - nodes[-1] > floor and 0.5 * t_new > table.T_MIN:
            h = 0.5 * (t_new - nodes[-1])
            continue
        if not ok:
            # Per-step iteration dead at the step floor: a rising |q| that
            # ends at its maximum marks the fold of the layer equation (the
            # near-branch root ceases to exist), i.e. blow-up; otherwise the
            # stall is a genuine stiffness failure.
            qa = np.abs(np.asarray(q))
            if len(q) >= 2 and qa[-1] > 1.1 * qa[0] and \
                    qa[-1] >= 0.95 * qa.max():
                status = "blowup"
                break
            if len(q) == 1 and params.beta0 < 0.0:
                # Focusing datum whose fold lies below the deepest
                # representable start: blow-up happens inside the first
                # resolvable cell.  The trajectory ends on the
                # best-approximation sample there; its defect is reported
                # by the residual certificate, and the extrapolated T* is
                # an upper bound at the time-resolution floor.
                row = weight_row(t_start)
                g_new = g_fn(t_start)
                f_new = q0 + row @ np.append(
                    np.asarray(g_nodes, dtype=complex), g_new)
                rhs = f_new - row[:-1] @ np.asarray(hnode, dtype=complex)
                accept(t_start, _fold_sample(q0, row[-1], rhs, params))
                status = "blowup"
                break
            raise SolverError(
                f"step iteration stalled at t={nodes[-1]:.6g} with step floor")
        accept(t_new, q_new)
        if abs(q_new) > config.blowup_threshold:
            status = "blowup"
            break
        if change < 0.05 * config.step_target_rel:
            h = min(4.0 * h, t_max)
        elif change < 0.5 * config.step_target_rel:
            h = min(h * config.step_growth, t_max)

    nodes_arr = np.asarray(nodes)
    q_arr = np.asarray(q, dtype=complex)
    grid = TimeGrid(nodes_arr, grading="adaptive")
    f_vals = np.empty(len(grid), dtype=complex)
    f_vals[0] = q0
    g_arr = np.asarray(g_nodes, dtype=complex)
    for n in range(1, len(grid)):
        row = ops.node_weight_row(grid, n, table)
        f_vals[n] = q0 + row @ g_arr[: n + 1]
    res = _residual_certificate(grid, q_arr, f_vals, params, table)
    if status == "blowup":
        t_star, window = _estimate_blowup(nodes_arr, np.abs(q_arr))
        return ChargeTrajectory(grid, q_arr, BlowUp(t_star, window), res, q0)
    return ChargeTrajectory(grid, q_arr, Completed(float(nodes_arr[-1])), res, q0)
