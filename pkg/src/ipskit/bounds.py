"""Closed-form evaluators for every inequality right-hand side the toolkit
certifies, with constants traced factor by factor where the underlying
derivation leaves them implicit.

Each evaluator returns a BoundReport echoing its inputs; reports whose
constant was re-derived step by step carry the full provenance list, one
multiplicative factor per inequality step, so a reviewer can audit the
number rather than trust it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .profiles import RateProfile, SpeedPiece, SpeedUpProfile, quadratic_cost


@dataclass(frozen=True)
class BoundReport:
    value: float
    formula_id: str
    inputs: dict
    constant_provenance: tuple[tuple[str, float], ...] | None = None

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"bound value must be finite and >= 0, got {self.value}")

    @property
    def provenance_kind(self) -> str:
        return "proof_traced" if self.constant_provenance else "explicit"


def thm_restriction_bound(f_inf: float, c1: float, c_sl: float, c_rho: float,
                          c_gamma: float, t: float, tail: float) -> BoundReport:
    """Upper bound on the total variation error, observed in a finite window,
    of freezing all updates outside a blow-up of that window:

        ||f||_inf * (C_1 C_SL / (C_rho^2 C_gamma)) * exp(C_gamma C_rho t) * tail,

    where ``tail`` is the decay-weight sum over sites outside the shrunk
    blow-up.  For the total variation form take f_inf = 1.
    """
    value = (f_inf * c1 * c_sl / (c_rho**2 * c_gamma)
             * math.exp(c_gamma * c_rho * t) * tail)
    return BoundReport(value, "thm_restriction_bound", dict(
        f_inf=f_inf, c1=c1, c_sl=c_sl, c_rho=c_rho, c_gamma=c_gamma, t=t,
        tail=tail))


def traced_refined_constant(dim: int, alpha: float, c1: float, c_sl: float,
                            c_rho: float, c_gamma: float
                            ) -> tuple[float, tuple[tuple[str, float], ...]]:
    """The constant of the time-dependent restriction estimate, assembled by
    re-deriving the proof chain with exact shell counts for d in {1, 2}.

    Factors, in derivation order:
      telescope          C_1 * C_SL per dropped update region
      flow_prefactor     1 / C_rho from the kernel spreading estimate
      shell_coefficient  sites at distance r number <= coef * r^(d-1)
      change_of_variable u = alpha r contributes alpha^(-d)
      incomplete_gamma   Gamma(d, x) <= e (d-1)! e^(-x) x^(d-1)
      time_integral      d=1: int_0^inf e^(-cu) du = 1/c  (c = C_gamma C_rho)
                         d=2: (2 + alpha k)/c <= 3 alpha k / c, valid for
                              alpha k > d - 1; the k rides on the k^(d-1)
                              factor of the bound itself
    """
    if dim not in (1, 2):
        raise ValueError("traced constant available for d in {1, 2} only")
    c = c_gamma * c_rho
    shell_coef = 2.0 if dim == 1 else 4.0
    time_integral = 1.0 / c if dim == 1 else 3.0 * alpha / c
    provenance = (
        ("telescope", c1 * c_sl),
        ("flow_prefactor", 1.0 / c_rho),
        ("shell_coefficient", shell_coef),
        ("change_of_variable", alpha ** (-dim)),
        ("incomplete_gamma", math.e * math.factorial(dim - 1)),
        ("time_integral", time_integral),
    )
    value = 1.0
    for _, fac in provenance:
        value *= fac
    return value, provenance


def prop_refined_bound(dim: int, alpha: float, k: float, lam_size: int,
                       c1: float, c_sl: float, c_rho: float, c_gamma: float
                       ) -> BoundReport:
    """Traced bound C |Lambda| e^(-alpha k) k^(d-1) for the error of the
    shrinking time-dependent restriction with offset distance k.

    Requires k > (d-1)/alpha, the regime where the integral comparison of the
    lattice tail is monotone.
    """
    if not k > (dim - 1) / alpha:
        raise ValueError(f"need k > (d-1)/alpha = {(dim - 1) / alpha}")
    c_const, provenance = traced_refined_constant(
        dim, alpha, c1, c_sl, c_rho, c_gamma)
    value = c_const * lam_size * math.exp(-alpha * k) * k ** (dim - 1)
    return BoundReport(value, "prop_refined_bound", dict(
        dim=dim, alpha=alpha, k=k, lam_size=lam_size, c1=c1, c_sl=c_sl,
        c_rho=c_rho, c_gamma=c_gamma, traced_constant=c_const),
        constant_provenance=provenance)


def thm_correlation_bound(norm_f: float, norm_g: float, c1: float,
                          rho_l: float, c_rho: float, c_gamma: float,
                          t: float, rho_dist: float) -> BoundReport:
    """Spatial decay of dynamic correlations:

        (C_1 / (rho(L) C_rho^2 C_gamma)) |||f||| |||g|||
            * exp(2 C_rho C_gamma t) * rho(dist(supp f, supp g)).
    """
    value = (c1 / (rho_l * c_rho**2 * c_gamma) * norm_f * norm_g
             * math.exp(2.0 * c_rho * c_gamma * t) * rho_dist)
    return BoundReport(value, "thm_correlation_bound", dict(
        norm_f=norm_f, norm_g=norm_g, c1=c1, rho_l=rho_l, c_rho=c_rho,
        c_gamma=c_gamma, t=t, rho_dist=rho_dist))


@dataclass(frozen=True)
class MixingConstants:
    s_star: float
    k_const: float
    alpha_exponent: float


def thm_mixing_constants(k_hat: float, alpha_hat: float, c1: float,
                         c_rho: float, c_gamma: float, rho_l: float,
                         rho_dist: float, dist_fg: float, l_max: float
                         ) -> MixingConstants:
    """Constants of the stationary spatial-mixing bound obtained by trading
    time against distance under exponentially fast convergence.

    The convergence-rate constant of the hypothesis is identified with the
    delta appearing in the optimisation (a known ambiguity of the source
    derivation; see the repository notes).  Requires dist > L * C_rho.

      s*    = log(8 delta rho(L) / (C_gamma rho(dist))) / (C_rho C_gamma + delta)
      K     = max(C_1, K_hat) (C_rho C_gamma + delta)
                 * (C_rho^2 C_gamma rho(L))^(-delta / (C_rho C_gamma + delta))
                 * (8 / delta)^(C_rho C_gamma / (C_rho C_gamma + delta))
      alpha = delta / (C_rho C_gamma + delta)
    """
    if not dist_fg > l_max * c_rho:
        raise ValueError(f"need dist > L * C_rho = {l_max * c_rho}")
    delta = alpha_hat
    cc = c_rho * c_gamma
    s_star = math.log(8.0 * delta * rho_l / (c_gamma * rho_dist)) / (cc + delta)
    exponent = delta / (cc + delta)
    k_const = (max(c1, k_hat) * (cc + delta)
               * (c_rho**2 * c_gamma * rho_l) ** (-exponent)
               * (8.0 / delta) ** (cc / (cc + delta)))
    return MixingConstants(s_star=s_star, k_const=k_const,
                           alpha_exponent=exponent)


@dataclass(frozen=True)
class GammaIncomplete:
    exact: float
    bound: float


def gamma_incomplete(d: int, x: float) -> GammaIncomplete:
    """Upper incomplete gamma function at integer order, exact closed form
    Gamma(d, x) = (d-1)! e^(-x) sum_{n<d} x^n/n!, with the elementary bound
    Gamma(d, x) <= e (d-1)! e^(-x) x^(d-1)."""
    if d < 1 or x <= 0:
        raise ValueError("need d >= 1 and x > 0")
    fact = math.factorial(d - 1)
    exact = fact * math.exp(-x) * sum(x**n / math.factorial(n) for n in range(d))
    bound = math.e * fact * math.exp(-x) * x ** (d - 1)
    return GammaIncomplete(exact=exact, bound=bound)


def entropic_cost_bound(cap: RateProfile, lam: SpeedUpProfile,
                        t: float) -> float:
    """The path-entropy cost cap: int_0^t cap(s) (lambda(s) - 1)^2 ds,
    evaluated exactly for the closed-form profile families."""
    if not math.isclose(cap.t_end, t, abs_tol=1e-12) or \
       not math.isclose(lam.t_end, t, abs_tol=1e-12):
        raise ValueError("profiles must cover [0, t]")
    return quadratic_cost(cap, lam)


@dataclass(frozen=True)
class MinimalCost:
    min_value: float
    lam_star: SpeedUpProfile
    constraint_residual: float


def minimal_cost(f: RateProfile, t: float, tau: float) -> MinimalCost:
    """Minimise int f (lambda-1)^2 over speed-ups with total shift tau.

    The minimum is tau^2 / int_0^t ds/f(s), attained at
    lambda*(s) = 1 + (tau / int ds/f) / f(s); both are closed forms for the
    shipped profile families, and the shift constraint is re-verified from
    the closed-form integral of lambda* - 1.
    """
    if not math.isclose(f.t_end, t, abs_tol=1e-12):
        raise ValueError("profile must cover [0, t]")
    inv_integral = f.integral_reciprocal()
    min_value = tau**2 / inv_integral
    scale = tau / inv_integral
    pieces = tuple(SpeedPiece(p.s0, p.s1, p.a, p.b, scale) for p in f.pieces)
    lam_star = SpeedUpProfile(pieces)
    residual = abs(lam_star.shift() - tau)
    return MinimalCost(min_value=min_value, lam_star=lam_star,
                       constraint_residual=residual)


def combined_attractor_bound(lam_size: int, alpha: float, k: float,
                             c_speed: float, l_max: float, t: float,
                             tau: float, c1: float, c_sl: float,
                             c_rho: float, c_gamma: float,
                             tv_convention: str = "half_l1") -> BoundReport:
    """Distance between the time-t and time-(t+tau) laws in a window, via
    restriction to a linearly growing region plus the entropy of the optimal
    speed-up (d = 1):

        2 C |Lambda| e^(-alpha k) + (tau/sqrt(2)) (int_0^t ds / (2 h(s)))^(-1/2),

    with h(s) = c_speed s + L + k, so the integral is
    log((c_speed t + L + k) / (L + k)) / (2 c_speed).

    The second term is the Pinsker form for half-l1 total variation; under
    the l1 convention (sup over ||f||_inf <= 1) it doubles, selected via
    ``tv_convention``.
    """
    if tv_convention not in ("half_l1", "l1"):
        raise ValueError("tv_convention must be 'half_l1' or 'l1'")
    first = 2.0 * prop_refined_bound(
        1, alpha, k, lam_size, c1, c_sl, c_rho, c_gamma).value
    if tau == 0.0:
        second = 0.0
    else:
        integral = math.log((c_speed * t + l_max + k) / (l_max + k)) / (2.0 * c_speed)
        second = (tau / math.sqrt(2.0)) * integral ** (-0.5)
        if tv_convention == "l1":
            second *= 2.0
    return BoundReport(first + second, "combined_attractor_bound", dict(
        lam_size=lam_size, alpha=alpha, k=k, c_speed=c_speed, l_max=l_max,
        t=t, tau=tau, c1=c1, c_sl=c_sl, c_rho=c_rho, c_gamma=c_gamma,
        tv_convention=tv_convention, first_term=first, second_term=second))


def optimize_attractor_k(lam_size: int, alpha: float, c_speed: float,
                         l_max: float, t: float, tau: float, c1: float,
                         c_sl: float, c_rho: float, c_gamma: float,
                         k_min: float | None = None, k_max: float = 60.0,
                         tv_convention: str = "half_l1"
                         ) -> tuple[float, BoundReport]:
    """Minimise the combined bound over k by a coarse grid followed by
    golden-section refinement."""
    lo = max(k_min if k_min is not None else 0.0, 1e-6)

    def value(k: float) -> float:
        return combined_attractor_bound(
            lam_size, alpha, k, c_speed, l_max, t, tau, c1, c_sl, c_rho,
            c_gamma, tv_convention).value

    grid = [lo + (k_max - lo) * i / 200 for i in range(201)]
    k_best = min(grid, key=value)
    span = (k_max - lo) / 200
    a, b = max(lo, k_best - span), min(k_max, k_best + span)
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - phi * (b - a), a + phi * (b - a)
    for _ in range(60):
        if value(c) < value(d):
            b, d = d, c
            c = b - phi * (b - a)
        else:
            a, c = c, d
            d = a + phi * (b - a)
    k_opt = 0.5 * (a + b)
    return k_opt, combined_attractor_bound(
        lam_size, alpha, k_opt, c_speed, l_max, t, tau, c1, c_sl, c_rho,
        c_gamma, tv_convention)
