"""Special functions for the point-interaction charge dynamics.

Provides the weakly singular memory kernel

    I(t) = integral_0^inf t^(s-1) / Gamma(s) ds,

its antiderivative N(t) = integral_0^t I, the Macdonald function K0, the
shifted sine/cosine integrals si/ci, and the oscillatory remainder Q(lam; t)
that appears in the free evolution of the K0 singularity.

I behaves like 1/(t log^2(1/t)) as t -> 0 and like e^t as t -> infinity;
N behaves like 1/log(1/t) near 0.  Both are positive and increasing in t.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ConvergenceError, DomainError

EULER_GAMMA = np.euler_gamma

# Coupling constant of the memory term in the charge equation:
# kappa = -2*(log 2 - gamma + i*pi/4).
KAPPA = -2.0 * (np.log(2.0) - EULER_GAMMA + 0.25j * np.pi)

# exp(t) overflows IEEE doubles just above 709; the e^t growth of I makes
# larger arguments unrepresentable.
_T_OVERFLOW = 700.0


@dataclass(frozen=True)
class EvalPolicy:
    """Accuracy budget for special-function evaluation.

    rel_tol        : target relative tolerance.
    series_cutoff  : maximum number of series terms.
    quad_nodes     : subdivision limit for adaptive quadrature.
    """

    rel_tol: float = 1e-10
    series_cutoff: int = 400
    quad_nodes: int = 200

    def __post_init__(self):
        if not (0.0 < self.rel_tol <= 1e-3):
            raise DomainError(f"rel_tol must lie in (0, 1e-3], got {self.rel_tol}")
        if self.series_cutoff < 16:
            raise DomainError(f"series_cutoff must be >= 16, got {self.series_cutoff}")
        if self.quad_nodes < 32:
            raise DomainError(f"quad_nodes must be >= 32, got {self.quad_nodes}")


DEFAULT_POLICY = EvalPolicy()


def _checked_quad(func, a, b, policy, points=None):
    """scipy quad with the policy's tolerance, raising on bad estimates."""
    val, err = integrate.quad(
        func, a, b,
        epsabs=0.0, epsrel=policy.rel_tol,
        limit=policy.quad_nodes, points=points,
    )
    if err > 10.0 * policy.rel_tol * abs(val) + 1e-300:
        raise ConvergenceError(
            f"quadrature stalled at error estimate {err:.3e}", achieved=err)
    return val


def volterra_I(t, policy=DEFAULT_POLICY):
    """Memory kernel I(t) = integral_0^inf t^(s-1)/Gamma(s) ds, t > 0.

    For t < 1 the integrand peaks in a boundary layer of width
    ~1/log(1/t) near s = 0; integrating e^(-s*log(1/t))/Gamma(s) with a
    split at the peak keeps the quadrature well scaled down to t ~ 1e-300.
    For t >= 1 the peak sits near s = t and the factor e^t is pulled out
    so the integrand stays of order one.
    """
    t = float(t)
    if t <= 0.0:
        raise DomainError(f"volterra_I requires t > 0, got {t}")
    if t > _T_OVERFLOW:
        raise DomainError(f"volterra_I overflows for t > {_T_OVERFLOW}, got {t}")
    if t < 1.0:
        ell = np.log(1.0 / t)

        def integrand(s):
            return np.exp(-s * ell) * special.rgamma(s)

        peak = min(1.0 / ell, 0.5)
        head = _checked_quad(integrand, 0.0, 1.0, policy, points=[peak, 4.0 * peak])
        tail = _checked_quad(integrand, 1.0, np.inf, policy)
        return (head + tail) / t
    lnt = np.log(t)

    def integrand(s):
        return np.exp((s - 1.0) * lnt - special.gammaln(s) - t)

    s_max = t + 12.0 * np.sqrt(t) + 60.0
    val = _checked_quad(integrand, 0.0, s_max, policy, points=[1.0, t])
    return val * np.exp(t)


def volterra_N(t, policy=DEFAULT_POLICY):
    """Antiderivative N(t) = integral_0^t I(tau) dtau, t >= 0.

    Evaluated directly as the order-0 Volterra function
    integral_0^inf t^s/Gamma(s+1) ds, whose derivative is I; this avoids
    nested quadrature.  Same variable splits as volterra_I.
    """
    t = float(t)
    if t < 0.0:
        raise DomainError(f"volterra_N requires t >= 0, got {t}")
    if t == 0.0:
        return 0.0
    if t > _T_OVERFLOW:
        raise DomainError(f"volterra_N overflows for t > {_T_OVERFLOW}, got {t}")
    if t < 1.0:
        ell = np.log(1.0 / t)

        def integrand(s):
            return np.exp(-s * ell) * special.rgamma(s + 1.0)

        peak = min(1.0 / ell, 0.5)
        head = _checked_quad(integrand, 0.0, 1.0, policy, points=[peak, 4.0 * peak])
        tail = _checked_quad(integrand, 1.0, np.inf, policy)
        return head + tail
    lnt = np.log(t)

    def integrand(s):
        return np.exp(s * lnt - special.gammaln(s + 1.0) - t)

    s_max = t + 12.0 * np.sqrt(t) + 60.0
    val = _checked_quad(integrand, 0.0, s_max, policy, points=[1.0, t])
    return val * np.exp(t)


def volterra_P(t, policy=DEFAULT_POLICY):
    """First moment P(t) = integral_0^t tau * I(tau) dtau, t >= 0.

    Evaluated as integral_0^inf t^(s+1)/((s+1) Gamma(s)) ds, whose
    derivative is t*I(t).  P supplies the exact first moments of the
    kernel over grid cells, which the piecewise-linear product rule needs.
    Behaves like t/log^2(1/t) near 0.
    """
    t = float(t)
    if t < 0.0:
        raise DomainError(f"volterra_P requires t >= 0, got {t}")
    if t == 0.0:
        return 0.0
    if t > _T_OVERFLOW:
        raise DomainError(f"volterra_P overflows for t > {_T_OVERFLOW}, got {t}")
    if t < 1.0:
        ell = np.log(1.0 / t)

        def integrand(s):
            return np.exp(-s * ell) * special.rgamma(s) / (s + 1.0)

        peak = min(1.0 / ell, 0.5)
        head = _checked_quad(integrand, 0.0, 1.0, policy, points=[peak, 4.0 * peak])
        tail = _checked_quad(integrand, 1.0, np.inf, policy)
        return (head + tail) * t
    lnt = np.log(t)

    def integrand(s):
        return np.exp((s + 1.0) * lnt - special.gammaln(s) - t) / (s + 1.0)

    s_max = t + 12.0 * np.sqrt(t) + 60.0
    val = _checked_quad(integrand, 0.0, s_max, policy, points=[1.0, t])
    return val * np.exp(t)


def macdonald_K0(x, policy=DEFAULT_POLICY):
    """Macdonald function K0(x) for x > 0 (modified Bessel, second kind)."""
    x = float(x)
    if x <= 0.0:
        raise DomainError(f"macdonald_K0 requires x > 0, got {x}")
    return float(special.k0(x))


def sici(x):
    """Shifted sine integral and cosine integral at x > 0.

    Returns (si, ci) with si(x) = Si(x) - pi/2 and ci(x) = Ci(x); both
    tend to 0 as x -> infinity and si(0+) = -pi/2.
    """
    x = float(x)
    if x <= 0.0:
        raise DomainError(f"sici requires x > 0 (ci diverges at 0), got {x}")
    si_raw, ci_raw = special.sici(x)
    return float(si_raw) - 0.5 * np.pi, float(ci_raw)


def q_series(lam, t, policy=DEFAULT_POLICY):
    """Oscillatory remainder Q(lam; t) of the free K0 evolution.

    Q(lam; t) = -pi * ( sum_{n>=1} (-(t*lam)^2)^n / (2n (2n)!) - i*si(t*lam) ),

    entire in t*lam, with Q(0; t) = -i pi^2 / 2.  The sum equals
    Ci(x) - gamma - log(x) at x = t*lam, which is used directly once the
    series would need too many terms.
    """
    lam = float(lam)
    t = float(t)
    if lam < 0.0:
        raise DomainError(f"q_series requires lam >= 0, got {lam}")
    if t < 0.0:
        raise DomainError(f"q_series requires t >= 0, got {t}")
    x = lam * t
    if x == 0.0:
        return -0.5j * np.pi ** 2
    si_val = special.sici(x)[0] - 0.5 * np.pi
    if x > 12.0:
        ci_val = special.sici(x)[1]
        real_sum = ci_val - EULER_GAMMA - np.log(x)
        return -np.pi * (real_sum - 1j * si_val)
    total = 0.0
    term = 1.0
    x2 = x * x
    for n in range(1, policy.series_cutoff + 1):
        # term tracks (-x^2)^n / (2n)!; the summand divides by 2n.
        term *= -x2 / ((2 * n - 1) * (2 * n))
        contrib = term / (2 * n)
        total += contrib
        if abs(contrib) <= policy.rel_tol * abs(total) + 1e-300:
            return -np.pi * (total - 1j * si_val)
    raise ConvergenceError(
        f"Q series did not converge within {policy.series_cutoff} terms",
        achieved=abs(contrib))


def q_series_vec(lam, t_array, policy=DEFAULT_POLICY):
    """Vectorized q_series over an array of times (lam fixed)."""
    t_array = np.asarray(t_array, dtype=float)
    out = np.empty(t_array.shape, dtype=complex)
    flat = t_array.ravel()
    res = out.ravel()
    for i, ti in enumerate(flat):
        res[i] = q_series(lam, ti, policy)
    return out
