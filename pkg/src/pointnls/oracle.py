"""Independent brute-force references used by tests and the verify CLI.

Everything here goes back to defining integrals or closed forms and avoids
the evaluation strategies of the main modules: the kernel is integrated in
its raw form with peak splitting, N by nested quadrature of the kernel,
K0 and si/ci from their integral representations, and the free-decay
momentum integral by semi-infinite Fourier quadrature.  These paths are
allowed to be slow.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import ops
from .errors import ConvergenceError, DomainError
from .specfun import EULER_GAMMA


@dataclass(frozen=True)
class OracleReport:
    """Machine-checkable discrepancy record for one compared quantity."""

    name: str
    oracle_value: complex
    main_value: complex
    budget: int = 0

    @property
    def abs_discrepancy(self):
        return abs(self.main_value - self.oracle_value)

    @property
    def rel_discrepancy(self):
        scale = max(abs(self.oracle_value), 1e-300)
        return self.abs_discrepancy / scale

    def line(self, tol):
        ok = "PASS" if self.rel_discrepancy <= tol else "FAIL"
        return (f"{ok}  {self.name:<44s} rel={self.rel_discrepancy:.3e} "
                f"(tol {tol:.1e})")


def quad_defining_I(t, budget=200):
    """Kernel value from the raw defining integral of t^(s-1)/Gamma(s).

    Peak-splitting only: for t < 1 the integrand peaks near s ~ 1/log(1/t),
    for t > 1 near s ~ t.  No substitution is shared with the main path.
    """
    t = float(t)
    if t <= 0.0:
        raise DomainError("quad_defining_I needs t > 0")

    def integrand(s):
        return t ** (s - 1.0) * special.rgamma(s)

    if t < 1.0:
        peak = min(1.0 / np.log(1.0 / t), 0.5)
        head = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-12,
                              points=[peak, 4.0 * peak], limit=budget)[0]
        tail = integrate.quad(integrand, 1.0, 60.0, epsabs=1e-280,
                              epsrel=1e-12, limit=budget)[0]
        return head + tail
    hi = t + 14.0 * np.sqrt(t) + 80.0
    return integrate.quad(integrand, 0.0, hi, epsabs=0.0, epsrel=1e-12,
                          points=[1.0, t], limit=budget)[0]


def quad_defining_N(t, budget=200):
    """N(t) by nested quadrature of the kernel, split at the s = 0 end.

    The kernel mass near s = 0 decays only like 1/log(1/s), so the nested
    integral is split over geometric slices down to s_floor = 1e-250.  The
    remaining mass int_0^{s_floor} I is evaluated exactly by interchanging
    the order of integration (int_0^d s^(sigma-1) ds = d^sigma/sigma), which
    turns it into a single well-behaved integral in sigma.
    """
    t = float(t)
    if t < 0.0:
        raise DomainError("quad_defining_N needs t >= 0")
    if t == 0.0:
        return 0.0
    s_floor = min(1e-250, 1e-6 * t)
    s_split = min(t, 0.5)
    gx, gw = np.polynomial.legendre.leggauss(10)

    def gauss_panel(a, b, fn):
        half = 0.5 * (b - a)
        xs = 0.5 * (a + b) + half * gx
        return half * np.sum(gw * [fn(x) for x in xs])

    # Composite Gauss-Legendre in x = log s below s_split: I(e^x) e^x is
    # smooth and slowly varying (~1/x^2) there.  Above s_split (only for
    # t > 1/2, where I grows like e^s) plain panels in s are used.  Tests
    # double the panel counts to confirm convergence.
    edges = np.log(np.geomspace(s_floor, s_split, 120))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += gauss_panel(a, b, lambda x: quad_defining_I(np.exp(x)) * np.exp(x))
    if t > s_split:
        lin = np.linspace(s_split, t, max(int(8 * (t - s_split)) + 2, 4))
        for a, b in zip(lin[:-1], lin[1:]):
            total += gauss_panel(a, b, quad_defining_I)
    # Exact closing mass below s_floor via Fubini on the defining integral.
    ell = np.log(1.0 / s_floor)

    def closing(sigma):
        return s_floor ** sigma * special.rgamma(sigma + 1.0)

    peak = min(1.0 / ell, 0.5)
    total += integrate.quad(closing, 0.0, 1.0, epsabs=0.0, epsrel=1e-12,
                            points=[peak, 4.0 * peak], limit=budget)[0]
    total += integrate.quad(closing, 1.0, 60.0, epsabs=1e-280, epsrel=1e-12,
                            limit=budget)[0]
    return total


def quad_defining_P(t, budget=200):
    """P(t) = int_0^t tau I(tau) dtau by quadrature of the kernel.

    tau * I(tau) is bounded (like 1/log^2(1/tau)) at 0, so composite
    Gauss-Legendre in x = log tau applies directly; the mass below the
    geometric floor is closed exactly by Fubini
    (int_0^d tau^sigma dtau = d^(sigma+1)/(sigma+1)).
    """
    t = float(t)
    if t < 0.0:
        raise DomainError("quad_defining_P needs t >= 0")
    if t == 0.0:
        return 0.0
    s_floor = min(1e-250, 1e-6 * t)
    s_split = min(t, 0.5)
    gx, gw = np.polynomial.legendre.leggauss(10)

    def gauss_panel(a, b, fn):
        half = 0.5 * (b - a)
        xs = 0.5 * (a + b) + half * gx
        return half * np.sum(gw * [fn(x) for x in xs])

    edges = np.log(np.geomspace(s_floor, s_split, 120))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += gauss_panel(
            a, b, lambda x: quad_defining_I(np.exp(x)) * np.exp(2.0 * x))
    if t > s_split:
        lin = np.linspace(s_split, t, max(int(8 * (t - s_split)) + 2, 4))
        for a, b in zip(lin[:-1], lin[1:]):
            total += gauss_panel(a, b, lambda x: x * quad_defining_I(x))
    ell = np.log(1.0 / s_floor)

    def closing(sigma):
        return s_floor ** (sigma + 1.0) * special.rgamma(sigma) / (sigma + 1.0)

    peak = min(1.0 / ell, 0.5)
    total += integrate.quad(closing, 0.0, 1.0, epsabs=1e-280, epsrel=1e-12,
                            points=[peak, 4.0 * peak], limit=budget)[0]
    total += integrate.quad(closing, 1.0, 60.0, epsabs=1e-280, epsrel=1e-12,
                            limit=budget)[0]
    return total


def quad_k0(x, budget=200):
    """K0(x) from the integral representation int_0^inf e^(-x cosh u) du."""
    x = float(x)
    if x <= 0.0:
        raise DomainError("quad_k0 needs x > 0")
    hi = np.arccosh(max(720.0 / x, 2.0))

    def integrand(u):
        return np.exp(-x * np.cosh(u))

    return integrate.quad(integrand, 0.0, hi, epsabs=1e-280, epsrel=1e-13,
                          limit=budget)[0]


def quad_sici(x, budget=200):
    """(si, ci) from the defining integrals.

    si(x) = -int_x^inf sin(u)/u du, evaluated as int_0^x sin(u)/u du - pi/2;
    ci(x) = gamma + log x + int_0^x (cos u - 1)/u du.
    """
    x = float(x)
    if x <= 0.0:
        raise DomainError("quad_sici needs x > 0")
    si = integrate.quad(lambda u: np.sinc(u / np.pi), 0.0, x, epsabs=0.0,
                        epsrel=1e-13, limit=budget)[0] - 0.5 * np.pi

    def cosm1(u):
        return -2.0 * np.sin(0.5 * u) ** 2 / u

    ci = EULER_GAMMA + np.log(x) + integrate.quad(
        cosm1, 0.0, x, epsabs=0.0, epsrel=1e-13, limit=budget)[0]
    return si, ci


def momentum_free_decay(lam, t, budget=400):
    """int_{R^2} e^(-i p^2 t) / (p^2 + lam) d^2p by Fourier quadrature.

    Radially, the integral equals pi * int_0^inf e^(-i u t)/(u + lam) du;
    the oscillatory semi-infinite parts use QUADPACK's QAWF weights.
    """
    lam = float(lam)
    t = float(t)
    if lam <= 0.0 or t <= 0.0:
        raise DomainError("momentum_free_decay needs lam > 0 and t > 0")

    def rational(u):
        return 1.0 / (u + lam)

    re = integrate.quad(rational, 0.0, np.inf, weight="cos", wvar=t,
                        limit=budget, maxp1=budget)[0]
    im = integrate.quad(rational, 0.0, np.inf, weight="sin", wvar=t,
                        limit=budget, maxp1=budget)[0]
    return np.pi * (re - 1j * im)


def gaussian_free_evolution(a, b, t):
    """Free evolution at the origin of the profile with hat = a*e^(-b p^2).

    (U0(t) phi)(0) = int_0^inf e^(-i p^2 t) a e^(-b p^2) p dp = a/(2(b+it)).
    """
    if b <= 0.0:
        raise DomainError("gaussian width must be positive")
    return a / (2.0 * (b + 1j * t))


def nested_I_of(fn, t, budget=200):
    """(I fn)(t) by singularity-subtracted nested quadrature.

    Writes int_0^t I(s) fn(t-s) ds = fn(t) N(t) + int I(s)(fn(t-s)-fn(t)) ds;
    the second integrand is bounded at s = 0, so plain adaptive quadrature
    applies.  fn must be smooth on [0, t].
    """
    t = float(t)
    base = complex(fn(t)) * quad_defining_N(t, budget)

    def diff_re(s):
        return (quad_defining_I(s) * (fn(t - s) - fn(t))).real

    def diff_im(s):
        return (quad_defining_I(s) * (fn(t - s) - fn(t))).imag

    kw = dict(epsabs=1e-11, epsrel=1e-9, limit=budget,
              points=[t * 1e-6, t * 1e-3, 0.5 * t])
    corr = (integrate.quad(diff_re, 0.0, t, **kw)[0]
            + 1j * integrate.quad(diff_im, 0.0, t, **kw)[0])
    return base + corr


def _report(name, oracle_value, main_value, tol, budget=0):
    return OracleReport(name, complex(oracle_value), complex(main_value),
                        budget), float(tol)


def suite_kernels():
    """Dual-route checks of the special functions: (report, tol) pairs."""
    from . import specfun
    out = []
    for t in (1e-10, 1e-6, 1e-3, 0.04, 0.5, 2.0, 8.0, 30.0):
        out.append(_report(f"I({t:g})", quad_defining_I(t),
                           specfun.volterra_I(t), 1e-7, budget=200))
    for t in (1e-6, 0.03, 0.5, 1.0, 4.0):
        out.append(_report(f"N({t:g})", quad_defining_N(t),
                           specfun.volterra_N(t), 1e-7, budget=1200))
    for t in (1e-6, 0.03, 1.0, 4.0):
        out.append(_report(f"P({t:g})", quad_defining_P(t),
                           specfun.volterra_P(t), 1e-7, budget=1200))
    for x in (0.05, 1.0, 6.0):
        out.append(_report(f"K0({x:g})", quad_k0(x),
                           specfun.macdonald_K0(x), 1e-9, budget=200))
    for x in (0.2, 2.0, 15.0):
        si_o, ci_o = quad_sici(x)
        si_m, ci_m = specfun.sici(x)
        out.append(_report(f"si({x:g})", si_o, si_m, 1e-9, budget=200))
        out.append(_report(f"ci({x:g})", ci_o, ci_m, 1e-9, budget=200))
    for lam, t in ((1.0, 0.3), (2.5, 1.0), (1.0, 20.0)):
        x = lam * t
        si_o, ci_o = quad_sici(x)
        q_o = np.pi * ((EULER_GAMMA + np.log(x) - ci_o) + 1j * si_o)
        out.append(_report(f"Q({lam:g};{t:g})", q_o,
                           specfun.q_series(lam, t), 1e-8, budget=200))
    from . import field
    for lam, t in ((1.0, 0.3), (1.0, 20.0)):
        out.append(_report(f"(U0 K0)(0) lam={lam:g} t={t:g}",
                           momentum_free_decay(lam, t) / (2.0 * np.pi),
                           field.free_singular_at_center(lam, t).value,
                           1e-8, budget=400))
    return out


def suite_operators():
    """Discrete I against nested quadrature, inversion, exact-one identity."""
    from . import specfun
    out = []
    grid = ops.TimeGrid.geometric(1.0, 512)
    table = ops.kernel_table(1.0)
    for label, fn in (("exp(it)", lambda t: np.exp(1j * t)),
                      ("1-t/2", lambda t: 1.0 - 0.5 * t)):
        sig = ops.SampledSignal.from_function(grid, fn)
        disc = ops.apply_I(sig, table=table)
        for frac in (0.5, 1.0):
            n = int(frac * (len(grid) - 1))
            t = grid.nodes[n]
            out.append(_report(f"(I {label})({t:g})",
                               nested_I_of(fn, t, budget=800),
                               disc.values[n], 2e-4, budget=800))
    inv = ops.check_inversion(ops.SampledSignal.from_function(
        grid, lambda t: np.exp(1j * t)), table=table)
    out.append(_report("inversion residual J(I e^it)", 1.0, 1.0 + inv, 1e-2))
    jk = ops.apply_I_fn(grid, lambda t: -EULER_GAMMA - np.log(t), table=table)
    mid = len(grid) // 2
    out.append(_report("I[-gamma-log] midpoint node", 1.0, jk[mid], 5e-3))
    out.append(_report("I[-gamma-log] last node", 1.0, jk[-1], 5e-3))
    return out


def suite_charge():
    """Linear-case marching against the dense global Picard oracle."""
    from . import charge, field
    out = []
    datum = field.InitialDatum(lam=1.0, q0=1.0 + 0.0j,
                               regular=field.GaussianProfile(1.0, 1.0))
    params = field.ModelParams(sigma=0, beta0=1.0)
    grid = ops.TimeGrid.geometric(0.25, 512)
    table = ops.kernel_table(0.25)
    traj = charge.solve_charge(datum, params, charge.SolverConfig(), grid,
                               table)
    fine = ops.log_refine_grid(grid, 4, t_cut=1e-6)
    forcing = charge.build_forcing(datum, fine, table)
    coeff = 4.0 * np.pi * params.beta0 + charge.KAPPA
    qo, _ = picard_linear(forcing, coeff, table)
    idx = np.searchsorted(fine.nodes, grid.nodes)
    for frac in (0.25, 0.5, 1.0):
        n = int(frac * (len(grid) - 1))
        out.append(_report(f"sigma=0 charge at t={grid.nodes[n]:.4g}",
                           qo.values[idx[n]], traj.q[n], 1e-5,
                           budget=len(fine)))
    f_main = charge.build_forcing(datum, grid, table)
    g_fn = charge.forcing_integrand(datum)
    t_end = grid.nodes[-1]
    out.append(_report(f"forcing f({t_end:g})",
                       complex(datum.q0) + nested_I_of(g_fn, t_end, budget=800),
                       f_main.values[-1], 2e-5, budget=800))
    return out


def suite_conservation():
    """Mass/energy conservation and the boundary condition on a short run."""
    from . import charge, field
    from scipy.special import exp1
    out = []
    datum = field.InitialDatum(lam=1.0, q0=1.0 + 0.0j,
                               regular=field.GaussianProfile(1.0, 1.0))
    params = field.ModelParams(sigma=1, beta0=1.0)
    table = ops.kernel_table(2.0)
    traj = charge.continue_until(datum, params, charge.SolverConfig(), 2.0,
                                 table)
    obs = field.observables(datum, params, traj)
    # Closed-form initial mass: Gaussian + cross + K0 components.
    a, b, q0 = 1.0, 1.0, complex(datum.q0)
    m0_sq = abs(a) ** 2 * np.pi / (2.0 * b) \
        + (q0.conjugate() * a).real * np.exp(b) * exp1(b) \
        + abs(q0) ** 2 / (4.0 * np.pi)
    out.append(_report("mass(0) closed form", np.sqrt(m0_sq),
                       obs.records[0].mass, 1e-3))
    g = datum.regular
    e0 = g.h1_sq() + (params.beta0 / (params.sigma + 1.0)
                      * abs(q0) ** (2.0 * params.sigma)
                      + field.BOUNDARY_CONST) * abs(q0) ** 2
    out.append(_report("energy(0) closed form", e0,
                       obs.records[0].energy, 1e-3))
    m = np.array([r.mass for r in obs.records])
    e = np.array([r.energy for r in obs.records])
    out.append(_report("mass drift sup_t", m[0],
                       m[0] + np.max(np.abs(m - m[0])), 1e-3))
    out.append(_report("energy drift sup_t", e[0],
                       e[0] + np.max(np.abs(e - e[0])), 1e-2))
    out.append(_report("boundary condition sup_t", 1.0,
                       1.0 + obs.max_boundary_residual, 5e-2))
    return out


VERIFY_SUITES = {
    "kernels": suite_kernels,
    "operators": suite_operators,
    "charge": suite_charge,
    "conservation": suite_conservation,
}


def picard_linear(f, coeff, table=None, tol=1e-12, max_iters=2000,
                  relax=0.5):
    """Fixed point of q = f - coeff * I[q] by global affine iteration.

    Iterates q <- (1-relax) q + relax (rhs - coeff I[q]) from 0 on the full
    grid with piecewise-linear kernel weights.  The relaxation keeps the map
    contractive when wide cells make |coeff| N(h)/2 >= 1 (graded grids put
    such cells near t_max); the fixed point is unchanged.  For |coeff| N(T)
    well above 1 the iteration is strongly non-normal: errors are amplified
    by ~exp-large transients before contracting, which leaves a roundoff
    floor of (amplification * eps).  The iteration is therefore wrapped in
    defect correction: once a sweep stalls, the exact residual
    r = f - q - coeff I[q] is formed in fresh arithmetic and the same
    iteration solves the correction equation, shrinking the floor by the
    same relative factor each pass.  Returns (signal, total iterations).
    """
    table = table or ops.kernel_table(f.grid.t_max)
    a = ops.node_weight_matrix(f.grid, table)

    def apply(q):
        # Real matrix times the (re, im) columns: avoids numpy upcasting
        # the large weight matrix to complex on every product.
        y = a @ np.column_stack((q.real, q.imag))
        return coeff * (y[:, 0] + 1j * y[:, 1])

    def sweep(rhs):
        scale = float(np.max(np.abs(rhs)))
        if scale == 0.0:
            return np.zeros_like(rhs), 0
        q = np.zeros_like(rhs)
        best = np.inf
        stalled = 0
        for it in range(1, max_iters + 1):
            q_new = (1.0 - relax) * q + relax * (rhs - apply(q))
            delta = float(np.max(np.abs(q_new - q)))
            q = q_new
            if delta < tol * relax * scale:
                return q, it
            if delta < 0.9 * best:
                best, stalled = delta, 0
            else:
                stalled += 1
                if best < 1e-4 * scale and stalled >= 40:
                    return q, it  # roundoff floor; defect correction refines
        raise ConvergenceError(
            f"picard_linear sweep did not converge in {max_iters} iterations",
            achieved=delta)

    q, total = sweep(f.values)
    f_scale = max(float(np.max(np.abs(f.values))), 1e-300)
    for _ in range(6):
        resid = f.values - q - apply(q)
        if float(np.max(np.abs(resid))) <= tol * f_scale:
            return ops.SampledSignal(f.grid, q), total
        corr, its = sweep(resid)
        q = q + corr
        total += its
    raise ConvergenceError(
        "picard_linear defect correction did not reach tolerance",
        achieved=float(np.max(np.abs(resid))) / f_scale)
