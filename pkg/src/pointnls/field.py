"""Initial data, spectral reconstruction and observables.

A form-domain state splits as psi = phi_lam + (q/2pi) K0(sqrt(lam)|x|)
with the interaction center pinned at the origin; all momentum integrals
are radial.  Fourier convention is symmetric: f_hat(p) =
(1/2pi) int e^(-i p.x) f(x) dx, so the K0 part transforms to
q/(2pi (p^2+lam)).

The wave function is reconstructed from the charge trajectory as

    psi_hat_t(p) = e^(-i p^2 t) psi_hat_0(p)
                   + (i/2pi) int_0^t e^(-i p^2 (t-tau)) q(tau) dtau,

with the oscillatory time integral done by exact per-cell antiderivatives
against piecewise-linear q, so no time-step restriction from p^2 t phases.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .errors import DomainError, ResolutionError, TailBoundError
from .specfun import EULER_GAMMA, q_series


@dataclass(frozen=True)
class ModelParams:
    """Nonlinearity power sigma and coupling beta0 (center at origin)."""

    sigma: float = 1.0
    beta0: float = 1.0
    allow_subcritical: bool = False

    def __post_init__(self):
        if self.sigma < 0.0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma}")
        if self.subcritical and not self.allow_subcritical:
            raise DomainError(
                "sigma in (0, 1/2) is outside the well-posedness theory; "
                "set allow_subcritical=True to run it as an experiment")

    @property
    def subcritical(self):
        return 0.0 < self.sigma < 0.5


@dataclass(frozen=True)
class GaussianProfile:
    """Regular part with hat phi(p) = amplitude * exp(-width p^2)."""

    amplitude: complex = 1.0
    width: float = 1.0

    def __post_init__(self):
        if self.width <= 0.0:
            raise DomainError(f"gaussian width must be > 0, got {self.width}")

    def hat(self, p):
        return self.amplitude * np.exp(-self.width * np.asarray(p) ** 2)

    def free_center(self, t):
        """(U0(t) phi)(0) = amplitude / (2 (width + i t)), closed form."""
        return self.amplitude / (2.0 * (self.width + 1j * t))

    def tail_check(self, eps):
        return None  # super-exponential decay, nothing to check

    def l2_sq(self):
        """|phi|_2^2 = 2 pi int |hat|^2 p dp = |a|^2 pi / (2 width)."""
        return abs(self.amplitude) ** 2 * np.pi / (2.0 * self.width)

    def h1_sq(self):
        """H^1 norm squared: |a|^2 pi (1/(2b) + 1/(4b^2))."""
        a2 = abs(self.amplitude) ** 2
        b = self.width
        return a2 * np.pi * (1.0 / (2.0 * b) + 1.0 / (4.0 * b * b))


@dataclass(frozen=True)
class SampledProfile:
    """Radial momentum samples with declared algebraic tail decay."""

    p_nodes: np.ndarray
    values: np.ndarray
    decay_exponent: float = 4.0

    def __post_init__(self):
        p = np.asarray(self.p_nodes, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "p_nodes", p)
        object.__setattr__(self, "values", v)
        if p.ndim != 1 or p.size < 4 or not np.all(np.diff(p) > 0) or p[0] < 0:
            raise DomainError("sampled profile needs an increasing p grid from >= 0")
        if v.shape != p.shape or not np.all(np.isfinite(v)):
            raise DomainError("sampled profile values must be finite, same length")
        if self.decay_exponent <= 2.0:
            raise DomainError("declared decay exponent must exceed 2")

    def hat(self, p):
        p = np.asarray(p, dtype=float)
        inside = np.interp(p, self.p_nodes, self.values.real) \
            + 1j * np.interp(p, self.p_nodes, self.values.imag)
        p_last = self.p_nodes[-1]
        with np.errstate(divide="ignore"):
            tail = self.values[-1] * (np.maximum(p, p_last) / p_last) ** (
                -self.decay_exponent)
        return np.where(p <= p_last, inside, tail)

    def tail_check(self, eps):
        """(1 + p^eps)|hat| must be p-integrable in 2D: decay > 2 + eps."""
        if self.decay_exponent <= 2.0 + eps:
            raise TailBoundError(
                f"declared decay {self.decay_exponent} too slow for "
                f"eps={eps} weighted integrability")


RegularProfile = Union[GaussianProfile, SampledProfile]


@dataclass(frozen=True)
class InitialDatum:
    """lambda > 0, initial charge q0, and the regular profile (or None)."""

    lam: float = 1.0
    q0: complex = 0.0
    regular: Optional[RegularProfile] = None
    eps: float = 0.5

    def __post_init__(self):
        if self.lam <= 0.0:
            raise DomainError(f"lambda must be > 0, got {self.lam}")
        if not (0.0 < self.eps <= 1.0):
            raise DomainError(f"eps must lie in (0, 1], got {self.eps}")
        if self.regular is not None:
            self.regular.tail_check(self.eps)

    def psi0_hat(self, p):
        p = np.asarray(p, dtype=float)
        out = np.zeros(p.shape, dtype=complex)
        if self.regular is not None:
            out = out + self.regular.hat(p)
        if self.q0 != 0.0:
            out = out + self.q0 / (2.0 * np.pi * (p ** 2 + self.lam))
        return out


@dataclass(frozen=True)
class SpectralField:
    """Radial samples of psi_hat at one time, with the charge value."""

    p_nodes: np.ndarray
    values: np.ndarray
    q_at_t: complex
    t: float

    def __post_init__(self):
        p = np.asarray(self.p_nodes, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "p_nodes", p)
        object.__setattr__(self, "values", v)
        if p.ndim != 1 or p[0] != 0.0 or not np.all(np.diff(p) > 0):
            raise DomainError("p_nodes must increase strictly from 0")
        if v.shape != p.shape or not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite, same length as p_nodes")


def free_regular_at_center(datum, t):
    """(U0(t) phi_{lam,0})(0), the freely evolved regular part at 0."""
    if t < 0.0:
        raise DomainError("free_regular_at_center needs t >= 0")
    if datum.regular is None:
        return 0.0 + 0.0j
    if isinstance(datum.regular, GaussianProfile):
        return datum.regular.free_center(t)
    return _osc_radial_integral(datum.regular, t)


def _osc_radial_integral(profile, t):
    """int_0^inf e^(-i p^2 t) hat(p) p dp for a sampled profile.

    Uses u = p^2 and exact oscillatory cell integrals against linear
    interpolation of hat in u, plus the declared-power tail.
    """
    u_hi = profile.p_nodes[-1] ** 2
    m = max(512, int(40.0 * u_hi * max(t, 0.02)))
    m = min(m, 400000)
    u = np.linspace(0.0, u_hi, m)
    g = profile.hat(np.sqrt(u))
    du = u[1] - u[0]
    w0, w1 = _osc_linear_weights(np.full(m - 1, t * du))
    phase = np.exp(-1j * t * u[:-1])
    inner = 0.5 * np.sum(du * phase * (w0 * g[:-1] + w1 * g[1:]))
    # Tail: |hat| ~ C p^-d beyond the grid; bounded by its absolute integral.
    d = profile.decay_exponent
    tail_bound = abs(profile.values[-1]) * profile.p_nodes[-1] ** 2 / (d - 2.0)
    if abs(tail_bound) > 1e-6 * (abs(inner) + 1e-30):
        # Integrate the tail model non-oscillatorily only if it matters.
        p_ext = np.geomspace(profile.p_nodes[-1], profile.p_nodes[-1] * 1e3, 2048)
        g_ext = profile.hat(p_ext) * np.exp(-1j * t * p_ext ** 2)
        inner = inner + np.trapezoid(g_ext * p_ext, p_ext)
    return complex(inner)


class FreeSingularSplit(NamedTuple):
    value: complex
    log_part: complex     # e^(i lam t) * (-gamma - log t), singular at 0
    smooth_part: complex  # e^(i lam t) * (-log lam + Q(lam;t)/pi)


def free_singular_at_center(lam, t, policy=None):
    """(U0(t) K0(sqrt(lam)|.|))(0) with its log-singular/smooth split.

    Equals (1/2) e^(i lam t) [-gamma - log lam - log t + Q(lam;t)/pi];
    value = (log_part + smooth_part) / 2.
    """
    if t <= 0.0:
        raise DomainError("free_singular_at_center needs t > 0")
    if lam <= 0.0:
        raise DomainError("free_singular_at_center needs lam > 0")
    phase = np.exp(1j * lam * t)
    qv = q_series(lam, t) if policy is None else q_series(lam, t, policy)
    log_part = phase * (-EULER_GAMMA - np.log(t))
    smooth_part = phase * (-np.log(lam) + qv / np.pi)
    return FreeSingularSplit(0.5 * (log_part + smooth_part), log_part, smooth_part)


def _osc_linear_weights(theta):
    """Filon weights for int_0^1 e^(-i theta x) ((1-x) g0 + x g1) dx.

    Returns (w0, w1) with the integral equal to w0 g0 + w1 g1.  A Taylor
    branch below |theta| = 1e-3 avoids cancellation.
    """
    theta = np.asarray(theta, dtype=float)
    z = -1j * theta
    small = np.abs(theta) < 1e-3
    zs = np.where(small, 0.0, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        e1 = (np.exp(zs) - 1.0) / zs
        e2 = (np.exp(zs) * (zs - 1.0) + 1.0) / zs ** 2
    zt = np.where(small, z, 0.0)
    e1_s = 1.0 + zt / 2.0 + zt ** 2 / 6.0 + zt ** 3 / 24.0
    e2_s = 0.5 + zt / 3.0 + zt ** 2 / 8.0 + zt ** 3 / 30.0
    e1 = np.where(small, e1_s, e1)
    e2 = np.where(small, e2_s, e2)
    return e1 - e2, e2


def _charge_integral_accumulator(u):
    """Incremental S(u; t) = int_0^t e^(i u tau) q(tau) dtau over cells."""
    state = {"s": np.zeros(len(u), dtype=complex)}

    def push(t0, t1, q0v, q1v):
        dt = t1 - t0
        w0, w1 = _osc_linear_weights(-u * dt)
        state["s"] += dt * np.exp(1j * u * t0) * (w0 * q0v + w1 * q1v)

    def value():
        return state["s"].copy()

    return push, value


def reconstruct_spectral(datum, traj, t, p_nodes, check_resolution=True):
    """SpectralField at a trajectory node t from the solved charge."""
    p_nodes = np.asarray(p_nodes, dtype=float)
    nodes = traj.grid.nodes
    idx = int(np.searchsorted(nodes, t))
    if idx >= nodes.size or nodes[idx] != t:
        raise DomainError(f"t={t} is not a node of the trajectory grid")
    u = p_nodes ** 2
    if check_resolution and t > 0.0 and p_nodes.size > 1:
        if float(np.max(np.diff(u))) * t > np.pi:
            raise ResolutionError(
                "p grid too coarse for the p_max^2 * t oscillation budget")
    push, value = _charge_integral_accumulator(u)
    q = traj.q
    for k in range(idx):
        push(nodes[k], nodes[k + 1], q[k], q[k + 1])
    psi = np.exp(-1j * u * t) * (datum.psi0_hat(p_nodes) + (0.5j / np.pi) * value())
    return SpectralField(p_nodes, psi, q_at_t=complex(q[idx]), t=float(t))


def mass(fieldv):
    """||psi_t||_2 by radial Plancherel quadrature with an analytic tail.

    The K0-component tail q/(2pi(p^2+1)) beyond p_max is integrated in
    closed form; everything else decays at least like p^-4 pointwise.
    """
    p = fieldv.p_nodes
    main = np.trapezoid(np.abs(fieldv.values) ** 2 * p, p)
    tail = abs(fieldv.q_at_t) ** 2 / (8.0 * np.pi ** 2 * (p[-1] ** 2 + 1.0))
    return float(np.sqrt(2.0 * np.pi * (main + tail)))


def regular_component(fieldv):
    """phi_hat_{1,t} = psi_hat_t - q(t)/(2 pi (p^2+1)), lam=1 split."""
    return fieldv.values - fieldv.q_at_t / (2.0 * np.pi * (fieldv.p_nodes ** 2 + 1.0))


BOUNDARY_CONST = (EULER_GAMMA - np.log(2.0)) / (2.0 * np.pi)


def energy(fieldv, params, h1_tail=0.0):
    """E(t) = ||phi_{1,t}||_H1^2 + nonlinear charge term (lam=1 split).

    h1_tail adds an externally estimated contribution of the H1 integral
    beyond p_max (see observables); the raw truncation converges only
    logarithmically in p_max because the charge derivative is unbounded
    at t=0.
    """
    p = fieldv.p_nodes
    phi1 = regular_component(fieldv)
    h1 = 2.0 * np.pi * np.trapezoid((1.0 + p ** 2) * np.abs(phi1) ** 2 * p, p) + h1_tail
    q = fieldv.q_at_t
    charge_term = (params.beta0 / (params.sigma + 1.0) * abs(q) ** (2.0 * params.sigma)
                   + BOUNDARY_CONST) * abs(q) ** 2
    return float(h1 + charge_term)


def boundary_residual(fieldv, params, traj=None, t=None):
    """Residual of the nonlinear boundary condition at lam = 1.

    Computes lim_{x->0} phi_1(x) = int_0^inf phi_hat_{1,t}(p) p dp and
    subtracts (beta0 |q|^(2 sigma) + (gamma - log 2)/(2 pi)) q.
    """
    p = fieldv.p_nodes
    phi1 = regular_component(fieldv)
    limit = np.trapezoid(phi1 * p, p)
    # K0-component tail: q/(2pi) int_pmax (1/p^2 - 1/(p^2+1)) p dp.
    limit = limit + fieldv.q_at_t / (4.0 * np.pi) * np.log1p(1.0 / p[-1] ** 2)
    q = fieldv.q_at_t
    target = (params.beta0 * abs(q) ** (2.0 * params.sigma) + BOUNDARY_CONST) * q
    return complex(limit - target)


def h_half_seminorm(f, nu=0.5):
    """Discrete Gagliardo seminorm squared root... returns the seminorm.

    [f]^2 = double integral of |f(t)-f(s)|^2 / |t-s|^(1+2 nu).  Same-cell
    blocks use the exact integral for the linear interpolant; distinct
    cell pairs use midpoint sampling.  Exact (=1 for nu=1/2) on f(t)=t.
    """
    if not (0.0 < nu < 1.0):
        raise DomainError(f"nu must lie in (0,1), got {nu}")
    if len(f.grid) < 4:
        raise DomainError("h_half_seminorm needs at least 4 nodes")
    t = f.grid.nodes
    v = f.values
    h = np.diff(t)
    slope = np.diff(v) / h
    same = np.sum(np.abs(slope) ** 2 * h ** (3.0 - 2.0 * nu)) \
        * 2.0 / ((2.0 - 2.0 * nu) * (3.0 - 2.0 * nu))
    tm = 0.5 * (t[:-1] + t[1:])
    vm = 0.5 * (v[:-1] + v[1:])
    dt = np.abs(tm[:, None] - tm[None, :])
    dv2 = np.abs(vm[:, None] - vm[None, :]) ** 2
    np.fill_diagonal(dt, 1.0)  # masked below
    kern = dv2 / dt ** (1.0 + 2.0 * nu)
    np.fill_diagonal(kern, 0.0)
    cross = float(np.sum((h[:, None] * h[None, :]) * kern))
    return float(np.sqrt(same + cross))


def planar_snapshot(fieldv, n=64, p_extent=None):
    """Planar-grid samples of psi_hat for visualization only.

    Returns (px, py, values) arrays of shape (n, n); the radial samples
    are interpolated at |p|.  No observables are computed from this.
    """
    if p_extent is None:
        p_extent = float(fieldv.p_nodes[-1]) / np.sqrt(2.0)
    axis = np.linspace(-p_extent, p_extent, n)
    px, py = np.meshgrid(axis, axis)
    rad = np.hypot(px, py)
    vals = np.interp(rad, fieldv.p_nodes, fieldv.values.real) \
        + 1j * np.interp(rad, fieldv.p_nodes, fieldv.values.imag)
    return px, py, vals


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    q: complex
    mass: float
    energy: float
    boundary_residual: complex


@dataclass(frozen=True)
class ObservableSeries:
    records: list

    @property
    def t(self):
        return np.array([r.t for r in self.records])

    @property
    def mass_drift(self):
        m = np.array([r.mass for r in self.records])
        return float(np.max(np.abs(m - m[0])) / m[0])

    @property
    def energy_drift(self):
        e = np.array([r.energy for r in self.records])
        scale = max(abs(e[0]), 1e-30)
        return float(np.max(np.abs(e - e[0])) / scale)

    @property
    def max_boundary_residual(self):
        return float(np.max(np.abs([r.boundary_residual for r in self.records[1:]]))) \
            if len(self.records) > 1 else 0.0


@dataclass(frozen=True)
class ObservableConfig:
    """Resolution knobs of the observables pipeline."""

    count: int = 25
    p_max: float = 40.0
    du_structure: float = 0.02
    u_structure: float = 25.0
    phase_budget: float = 0.35
    tail_theta_drop: float = 1e6
    tail_theta_freeze: float = 0.3
    tail_per_efold: int = 24

    def u_grid(self, t_max):
        """Nonuniform u = p^2 grid: fine where psi_hat has structure,
        phase-budget limited beyond."""
        du_osc = self.phase_budget / max(t_max, 0.5)
        du_fine = min(self.du_structure, du_osc)
        u_hi = self.p_max ** 2
        u_split = min(self.u_structure, u_hi)
        fine = np.arange(0.0, u_split, du_fine)
        coarse = np.arange(u_split, u_hi + du_osc, du_osc)
        return np.concatenate((fine, coarse))


def h1_tail_deep(nodes, q, idx, u_lo, config=None):
    """H1 mass of phi_1 beyond u = u_lo from the charge's deep structure.

    For u = p^2 >> 1 integration by parts gives
    phi1_hat(p) ~= -e^(-i u t) A(u) / (2 pi u) with
    A(u) = int_0^t e^(i u tau) q'(tau) dtau, so the H1 density per d(log u)
    is |A(u)|^2 / (4 pi).  A log-layer charge spreads this mass almost
    uniformly over log u out to u ~ 1/t_first (hundreds of e-folds), so
    polynomial p_max refinement can never capture it; instead A is summed
    coherently over the trajectory cells (piecewise-linear q gives exact
    per-cell antiderivatives).  Cells with u * t_cell > tail_theta_drop are
    dropped: their amplitude is O(|dq_cell| / (u t_cell)) and keeping all
    retained phases below theta_drop keeps them exactly representable at
    any depth.  The sampling stops where the first cell starts to
    oscillate (u = theta_freeze / t_first); below the first node the true
    layer continues with the rigorous 1/log(1/tau) envelope, closed by
    extrapolating the measured density as env / log^2(u).
    """
    config = config or ObservableConfig()
    t_first = nodes[1]
    u_hi = max(config.tail_theta_freeze / t_first, u_lo * np.e)
    n = max(int(config.tail_per_efold * np.log(u_hi / u_lo)), 8)
    ln_u = np.linspace(np.log(u_lo), np.log(u_hi), n)
    u = np.exp(ln_u)
    t_cell = nodes[: idx + 1]
    slope = np.diff(q[: idx + 1]) / np.diff(t_cell)
    a = np.zeros(u.size, dtype=complex)
    for k in range(idx):
        keep = u * t_cell[k + 1] < config.tail_theta_drop
        if not np.any(keep):
            break
        uk = u[keep]
        a[keep] += slope[k] * (np.exp(1j * uk * t_cell[k + 1])
                               - np.exp(1j * uk * t_cell[k])) / (1j * uk)
    dens = np.abs(a) ** 2 / (4.0 * np.pi)
    env = np.mean(dens[-6:] * ln_u[-6:] ** 2)
    return float(np.trapezoid(dens, ln_u) + env / ln_u[-1])


def observables(datum, params, traj, config=None):
    """Mass/energy/boundary-residual series along a solved trajectory.

    Observation times are config.count values evenly spread over the
    trajectory (snapped to grid nodes, always including 0 and the end).
    The H1 energy tail beyond p_max comes from h1_tail_deep.
    """
    config = config or ObservableConfig()
    nodes = traj.grid.nodes
    t_end = nodes[-1]
    targets = np.linspace(0.0, t_end, config.count)
    obs_idx = np.unique(np.searchsorted(nodes, targets).clip(0, nodes.size - 1))
    obs_times = nodes[obs_idx]

    u_main = config.u_grid(t_end)
    psi0 = datum.psi0_hat(np.sqrt(u_main))
    push, value = _charge_integral_accumulator(u_main)
    q = traj.q

    records = []
    cell = 0
    for idx, tj in zip(obs_idx, obs_times):
        while cell < idx:
            push(nodes[cell], nodes[cell + 1], q[cell], q[cell + 1])
            cell += 1
        psi = np.exp(-1j * u_main * tj) * (psi0 + (0.5j / np.pi) * value())
        fieldv = SpectralField(np.sqrt(u_main), psi,
                               q_at_t=complex(q[idx]), t=float(tj))
        h1_tail = h1_tail_deep(nodes, q, idx, config.p_max ** 2, config) \
            if tj > 0.0 else 0.0
        records.append(ObservableRecord(
            t=float(tj), q=complex(q[idx]), mass=mass(fieldv),
            energy=energy(fieldv, params, h1_tail=h1_tail),
            boundary_residual=boundary_residual(fieldv, params)))
    return ObservableSeries(records)
