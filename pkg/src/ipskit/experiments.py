"""Experiment drivers: each takes a validated config and produces CSV rows,
a JSON-able summary, and the list of inequality failures (normally empty).

Column names carry the conventions: distances suffixed ``_l1`` are the
sup-over-bounded-observables total variation (the l1 distance of marginals);
``_half_l1`` is the probabilists' normalisation.  Every driver is
deterministic given the config and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bd
from . import entropy as ent
from .config import ExperimentConfig
from .exact_engine import (
    Distribution,
    SingleSiteAssembler,
    StateSpace,
    build_generator,
    correlation,
    embed_distribution,
    evolve,
    evolve_time_dependent,
    marginal,
    stationary_distribution,
    tv_distance,
)
from .gamma_flow import (
    L1Vector,
    check_propagation,
    propagation_order,
    required_window,
    spread_bound_check,
    taylor_order,
    triple_norm,
)
from .geometry import Region, c_SL, certify_c_rho, interval, tail_sum
from .mc_engine import TimedGenerator, girsanov_log_weight, make_rng, simulate_chain
from .observables import spin_observable
from .profiles import RateProfile, SpeedUpProfile
from .rates import BoundaryRule, configuration, constants, influence_matrix
from .schedules import Schedule


@dataclass
class ExperimentResult:
    experiment: str
    columns: list[str]
    rows: list[list]
    summary: dict
    failures: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def _context(cfg: ExperimentConfig):
    rho = cfg.decay()
    fam = cfg.rate_family()
    dyn = constants(fam, rho, cfg.dim, mode="analytic")
    cert = certify_c_rho(rho)
    c_sl = float(c_SL(cfg.dim, fam.L, "single_site"))
    summary_constants = {
        "c1": dyn.c1,
        "m_gamma": dyn.m_gamma,
        "c_gamma": dyn.c_gamma,
        "c_rho": cert.c_rho,
        "c_sl": c_sl,
        "influence_mode": dyn.mode,
        "truncation_radius": dyn.truncation_radius,
        "tail_remainder": dyn.remainder,
    }
    return rho, fam, dyn, cert.c_rho, c_sl, summary_constants


def run_constants(cfg: ExperimentConfig) -> ExperimentResult:
    rho, fam, dyn, c_rho, c_sl, const = _context(cfg)
    exact = constants(fam, rho, cfg.dim, mode="exact")
    rows = [
        ["c1", dyn.c1, dyn.truncation_radius, 0.0, "sup of per-site exit rate"],
        ["m_gamma_analytic", dyn.m_gamma, dyn.truncation_radius, 0.0,
         "row sum of coupling bounds"],
        ["m_gamma_exact", exact.m_gamma, exact.truncation_radius, 0.0,
         "row sum of brute-force oscillations"],
        ["c_gamma_analytic", dyn.c_gamma, dyn.truncation_radius, 0.0,
         "rho-weighted row sum"],
        ["c_gamma_exact", exact.c_gamma, exact.truncation_radius, 0.0,
         "rho-weighted row sum, brute force"],
        ["c_rho", c_rho, 0, 0.0, "triangle constant of the decay weight"],
        ["c_sl", c_sl, 0, 0.0, "update regions through a site"],
    ]
    failures = []
    if exact.m_gamma > dyn.m_gamma + 1e-12 or exact.c_gamma > dyn.c_gamma + 1e-12:
        failures.append({"check": "exact <= analytic", "detail": rows})
    return ExperimentResult(
        "constants", ["name", "value", "truncation_radius", "remainder", "note"],
        rows, {"constants": const}, failures)


def run_gamma_flow(cfg: ExperimentConfig) -> ExperimentResult:
    rho, fam, dyn, c_rho, c_sl, const = _context(cfg)
    interior = Region.of(
        interval(-int(cfg.geometry.get("interior_radius", 30)),
                 int(cfg.geometry.get("interior_radius", 30))).sites
        if cfg.dim == 1 else
        [(0, 0)], dim=cfg.dim)
    rows, failures = [], []
    rng_hop = fam.dependency_radius if fam.dependency_radius else 1
    for t in cfg.t_values(default=(0.5, 1.0, 2.0)):
        order = propagation_order(t, dyn.c_gamma, c_rho, 1e-10)
        window = required_window(interior, rng_hop, order)
        gm = influence_matrix(fam, window, mode="analytic")
        rep = check_propagation(gm, rho, c_rho, dyn.c_gamma, t, interior)
        for site, lhs, rhsv in zip(rep.sites, rep.lhs, rep.rhs):
            rows.append(["propagation", t, _fmt_site(site), lhs, rhsv,
                         rhsv - lhs, "pass" if lhs <= rhsv + rep.tolerance else "fail"])
        if not rep.passed:
            failures.append({"check": "propagation", "t": t,
                             "worst_margin": rep.worst_margin})
        n_sp, _ = taylor_order(t * dyn.m_gamma, cfg.tol)
        sp_window = required_window(cfg.lam(), rng_hop, n_sp)
        gm_sp = influence_matrix(fam, sp_window, mode="analytic")
        beta = L1Vector.indicator(next(iter(cfg.lam())))
        rep2 = spread_bound_check(gm_sp, rho, c_rho, dyn.c_gamma, beta, t)
        worst = int(np.argmin(rep2.margins))
        rows.append(["spread_worst_site", t, _fmt_site(rep2.sites[worst]),
                     rep2.lhs[worst], rep2.rhs[worst], rep2.worst_margin,
                     "pass" if rep2.passed else "fail"])
        if not rep2.passed:
            failures.append({"check": "spread", "t": t,
                             "worst_margin": rep2.worst_margin})
    return ExperimentResult(
        "gamma-flow", ["check", "t", "x", "value", "bound", "margin", "status"],
        rows, {"constants": const}, failures)


def run_restriction(cfg: ExperimentConfig) -> ExperimentResult:
    rho, fam, dyn, c_rho, c_sl, const = _context(cfg)
    universe = cfg.window()
    lam = cfg.lam()
    space = StateSpace.over(universe, q=fam.q)
    boundary = cfg.boundary()
    eta0 = configuration(universe, cfg.initial_pattern, boundary, q=fam.q)
    mu0 = Distribution.from_configuration(space, eta0)
    assembler = SingleSiteAssembler(fam, space, boundary)
    gen_full = assembler.generator(universe)
    rows, failures = [], []
    h_values = [int(h) for h in cfg.geometry.get("h_values", [2, 3, 4])]
    for t in cfg.t_values():
        mu_ref = evolve(gen_full, mu0, t, cfg.tol)
        for h in h_values:
            active = Region.of({s for s in universe
                                if min(_l1(s, u) for u in lam.sites) <= h},
                               dim=cfg.dim)
            mu_h = evolve(assembler.generator(active), mu0, t, cfg.tol)
            tv = tv_distance(mu_ref, mu_h, lam)
            tail = tail_sum(rho, h - fam.L, cfg.dim).upper
            report = bd.thm_restriction_bound(
                1.0, dyn.c1, c_sl, c_rho, dyn.c_gamma, t, tail)
            margin = report.value - tv
            ok = tv <= report.value + 2.0 * cfg.tol
            rows.append([t, h, tv, report.value, margin,
                         "pass" if ok else "fail"])
            if not ok:
                failures.append({"check": "restriction", "t": t, "h": h,
                                 "tv": tv, "bound": report.value})
    return ExperimentResult(
        "restriction",
        ["t", "h", "tv_l1", "bound_l1", "margin", "status"],
        rows, {"constants": const, "universe_sites": len(universe)}, failures)


def run_refined_restriction(cfg: ExperimentConfig) -> ExperimentResult:
    rho, fam, dyn, c_rho, c_sl, const = _context(cfg)
    if rho.kind != rho.EXPONENTIAL:
        raise ValueError("the refined restriction schedule needs an "
                         "exponential decay weight")
    alpha = rho.alpha
    universe = cfg.window()
    lam = cfg.lam()
    space = StateSpace.over(universe, q=fam.q)
    boundary = cfg.boundary()
    eta0 = configuration(universe, cfg.initial_pattern, boundary, q=fam.q)
    mu0 = Distribution.from_configuration(space, eta0)
    assembler = SingleSiteAssembler(fam, space, boundary)
    gen_full = assembler.generator(universe)
    t_end = cfg.t_values(default=(2.0,))[-1]
    mu_ref = evolve(gen_full, mu0, t_end, cfg.tol)
    slope = 2.0 * c_rho * dyn.c_gamma / alpha
    rows, failures, tvs = [], [], []
    for k in [float(k) for k in cfg.geometry.get("k_values", [3, 4, 5])]:
        # offset L + 1 + k: the derivation's schedule, one unit above the
        # stated one, which is what the traced constant is valid for
        sched = Schedule.backward_linear(slope, t_end, fam.L + 1.0 + k)
        mu_h = evolve_time_dependent(fam, lam, sched, boundary, mu0, t_end,
                                     cfg.tol, assembler=assembler)
        tv = tv_distance(mu_ref, mu_h, lam)
        report = bd.prop_refined_bound(cfg.dim, alpha, k, len(lam), dyn.c1,
                                       c_sl, c_rho, dyn.c_gamma)
        ok = tv <= report.value + 2.0 * cfg.tol
        rows.append([k, t_end, slope, tv, report.value, report.value - tv,
                     "pass" if ok else "fail"])
        tvs.append(tv)
        if not ok:
            failures.append({"check": "refined-restriction", "k": k,
                             "tv": tv, "bound": report.value})
    decreasing = all(a >= b for a, b in zip(tvs[:-1], tvs[1:]))
    if not decreasing:
        failures.append({"check": "tv decreasing in k", "tvs": tvs})
    _, provenance = bd.traced_refined_constant(cfg.dim, alpha, dyn.c1, c_sl,
                                               c_rho, dyn.c_gamma)
    return ExperimentResult(
        "refined-restriction",
        ["k", "t", "slope", "tv_l1", "bound_l1", "margin", "status"],
        rows, {"constants": const, "tv_decreasing_in_k": decreasing,
               "traced_constant_factors": dict(provenance)}, failures)


def run_correlation(cfg: ExperimentConfig) -> ExperimentResult:
    rho, fam, dyn, c_rho, c_sl, const = _context(cfg)
    window = cfg.window()
    f = spin_observable(int(cfg.geometry.get("f_site", -3)))
    g = spin_observable(int(cfg.geometry.get("g_site", 3)))
    dist_fg = _l1(f.sites[0], g.sites[0])
    norm_f, norm_g = triple_norm(f), triple_norm(g)
    cases = cfg.geometry.get("cases") or [
        ["all_plus", "all_plus"], ["all_plus", "alternating"],
        ["all_minus", "all_minus"], ["alternating", "all_plus"],
        ["alternating", "alternating"]]
    rows, failures = [], []
    for bname, iname in cases:
        boundary = BoundaryRule(bname)
        gen = build_generator(fam, window, boundary)
        eta = configuration(window, iname, boundary, q=fam.q)
        for t in cfg.t_values():
            corr = correlation(gen, eta, f, g, t, cfg.tol)
            report = bd.thm_correlation_bound(
                norm_f, norm_g, dyn.c1, rho(fam.L), c_rho, dyn.c_gamma, t,
                rho(dist_fg))
            ok = abs(corr) <= report.value + 2.0 * cfg.tol
            rows.append([bname, iname, t, corr, report.value,
                         report.value - abs(corr), "pass" if ok else "fail"])
            if not ok:
                failures.append({"check": "correlation", "boundary": bname,
                                 "initial": iname, "t": t, "corr": corr,
                                 "bound": report.value})
    return ExperimentResult(
        "correlation",
        ["boundary", "initial", "t", "correlation", "bound", "margin",
         "status"],
        rows, {"constants": const, "dist_fg": dist_fg,
               "norm_f": norm_f, "norm_g": norm_g}, failures)


def run_stationary(cfg: ExperimentConfig) -> ExperimentResult:
    rho, fam, dyn, c_rho, c_sl, const = _context(cfg)
    lam = cfg.lam()
    boundary = cfg.boundary()
    h_max = int(cfg.geometry.get("h_max", 4))
    rows, failures = [], []
    marginals = {}
    small_spaces = {}
    for h in range(1, h_max + 1):
        active = interval(-h, h) if cfg.dim == 1 else cfg.window()
        gen = build_generator(fam, active, boundary)
        mu = stationary_distribution(gen)
        marginals[h] = marginal(mu, lam)
        small_spaces[h] = (gen, mu)
    tvs = []
    for h in range(1, h_max):
        d = float(np.abs(marginals[h].weights - marginals[h + 1].weights).sum())
        tvs.append(d)
        rows.append(["successive", h, h + 1, d, math.nan, math.nan, ""])
    contracting = all(a >= b for a, b in zip(tvs[:-1], tvs[1:]))
    if not contracting:
        failures.append({"check": "successive stationary TVs decreasing",
                         "tvs": tvs})
    universe = cfg.window()
    space = StateSpace.over(universe, q=fam.q)
    gen_h, mu_h = small_spaces[h_max]
    fill = {s: boundary.spin(s, fam.q) for s in universe.sites
            if s not in gen_h.space.region.sites}
    mu_emb = embed_distribution(mu_h, space, fill)
    gen_full = build_generator(fam, universe, boundary)
    t = cfg.t_values(default=(1.0,))[-1]
    mu_t = evolve(gen_full, mu_emb, t, cfg.tol)
    d = tv_distance(mu_t, mu_emb, lam)
    tail = tail_sum(rho, h_max - fam.L, cfg.dim).upper
    report = bd.thm_restriction_bound(1.0, dyn.c1, c_sl, c_rho, dyn.c_gamma,
                                      t, tail)
    ok = d <= report.value + 1e-8
    rows.append(["fixed_point", h_max, t, d, report.value, report.value - d,
                 "pass" if ok else "fail"])
    if not ok:
        failures.append({"check": "stationary fixed point", "tv": d,
                         "bound": report.value})
    return ExperimentResult(
        "stationary",
        ["check", "h", "h_next_or_t", "tv_l1", "bound_l1", "margin", "status"],
        rows, {"constants": const, "successive_tvs": tvs,
               "contracting": contracting}, failures)


def run_entropy(cfg: ExperimentConfig) -> ExperimentResult:
    rho, fam, dyn, c_rho, c_sl, const = _context(cfg)
    rows, failures = [], []
    boundary = cfg.boundary()

    def record(check, instance, value, bound, ok):
        rows.append([check, instance, value, bound,
                     (bound - value) if not math.isnan(bound) else math.nan,
                     "pass" if ok else "fail"])
        if not ok:
            failures.append({"check": check, "instance": instance,
                             "value": value, "bound": bound})

    # speed-up/time-shift identity on growing windows
    for n_sites in (2, 4, 8):
        win = interval(0, n_sites - 1)
        gen = build_generator(fam, win, boundary)
        eta = configuration(win, cfg.initial_pattern, boundary, q=fam.q)
        mu0 = Distribution.from_configuration(gen.space, eta)
        rep = ent.speedup_semigroup_identity(gen, mu0, 1.0, 1.0)
        record("semigroup_identity", f"{n_sites}_sites", rep.tv, rep.tolerance,
               rep.passed)

    # constant-speed-up closed form on the unit-rate two-state chain
    from .rates import IndependentFlip

    chain = build_generator(IndependentFlip(1.0), Region.of([0]), boundary)
    mu0 = Distribution.point_mass(chain.space, 0)
    lam_c = 1.5
    h_num = ent.path_entropy_speedup(
        chain, mu0, SpeedUpProfile.constant(lam_c, 1.0), 1.0, tol=1e-10)
    h_ref = ent.psi(lam_c) * 1.0
    record("constant_speedup_closed_form", f"lambda={lam_c}",
           abs(h_num - h_ref), 1e-8, abs(h_num - h_ref) <= 1e-8)

    # likelihood-ratio martingale, Monte Carlo
    q2 = np.array([[-1.0, 1.0], [1.0, -1.0]])
    num = TimedGenerator.constant(lam_c * q2, 1.0)
    den = TimedGenerator.constant(q2, 1.0)
    weights = np.empty(cfg.replicas)
    for i in range(cfg.replicas):
        traj = simulate_chain(q2, 0, 1.0, make_rng(cfg.seed, i))
        weights[i] = math.exp(girsanov_log_weight(traj, num, den))
    mean = float(weights.mean())
    se = float(weights.std(ddof=1) / math.sqrt(cfg.replicas))
    record("martingale_mean", f"replicas={cfg.replicas}", abs(mean - 1.0),
           3.0 * se, abs(mean - 1.0) <= 3.0 * se)

    # path entropy below the quadratic cost cap for random profiles
    rng = make_rng(cfg.seed, 10_000)
    cap_value = float((-chain.q_matrix.diagonal()).max())
    for trial in range(20):
        n_pieces = int(rng.integers(1, 5))
        breaks = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, n_pieces - 1)), [1.0]])
        values = rng.uniform(0.5, 2.5, n_pieces)
        lam_prof = SpeedUpProfile.piecewise_constant(list(breaks), list(values))
        h_path = ent.path_entropy_speedup(chain, mu0, lam_prof, 1.0, tol=1e-9)
        cap = RateProfile.constant(cap_value, 1.0)
        cost = bd.entropic_cost_bound(cap, lam_prof, 1.0)
        record("entropic_cost_cap", f"trial={trial}", h_path, cost + 1e-9,
               h_path <= cost + 1e-9)

    # Pinsker on random distribution pairs over one q-ary site
    rng_p = make_rng(cfg.seed, 20_000)
    n_failed = 0
    for _ in range(1000):
        n = int(rng_p.integers(2, 17))
        space = StateSpace(sites=((0,),), q=n)
        p = rng_p.dirichlet(np.ones(n))
        qv = rng_p.dirichlet(np.ones(n))
        rep = ent.pinsker_check(Distribution(space, p), Distribution(space, qv))
        if not (rep.passed and rep.l1_chain_holds):
            n_failed += 1
            failures.append({"check": "pinsker", "p": p.tolist(),
                             "q": qv.tolist()})
    record("pinsker_random_pairs", "pairs=1000", float(n_failed), 0.0,
           n_failed == 0)

    # data processing on growing windows, fixed and optimal speed-ups
    for n_sites in (2, 4, 6):
        win = interval(0, n_sites - 1)
        gen = build_generator(fam, win, boundary)
        eta = configuration(win, cfg.initial_pattern, boundary, q=fam.q)
        mu0w = Distribution.from_configuration(gen.space, eta)
        for label, lam_prof in (
            ("lambda=1.2", SpeedUpProfile.constant(1.2, 1.0)),
            ("lambda=optimal", bd.minimal_cost(
                RateProfile.constant(dyn.c1 * n_sites, 1.0), 1.0, 0.5).lam_star),
        ):
            rep = ent.data_processing_check(gen, mu0w, lam_prof, 1.0)
            record("data_processing", f"{n_sites}_sites_{label}",
                   rep.marginal_entropy, rep.path_entropy + rep.tolerance,
                   rep.passed)

    return ExperimentResult(
        "entropy",
        ["check", "instance", "value", "bound", "margin", "status"],
        rows, {"constants": const, "seed": cfg.seed,
               "replicas": cfg.replicas}, failures)


def run_attractor(cfg: ExperimentConfig) -> ExperimentResult:
    rho, fam, dyn, c_rho, c_sl, const = _context(cfg)
    if rho.kind != rho.EXPONENTIAL:
        raise ValueError("the attractor experiment needs an exponential "
                         "decay weight")
    window = cfg.window()
    lam = cfg.lam()
    demo_rows = ent.attractor_demo(
        fam, window, cfg.boundary(), cfg.initial_pattern,
        cfg.t_values(default=(1.0, 2.0, 4.0, 8.0, 16.0)),
        cfg.tau_values(default=(0.25, 1.0)), lam,
        c1=dyn.c1, c_sl=c_sl, c_rho=c_rho, c_gamma=dyn.c_gamma,
        alpha=rho.alpha,
        c_speed=float(cfg.geometry.get("c_speed", 2.0)),
        k=float(cfg.geometry.get("schedule_k", 2.0)))
    rows, failures = [], []
    for r in demo_rows:
        ok = (r.tv_exact <= r.pinsker_chain_bound + 1e-12 or r.tau == 0.0) and \
            r.tv_exact <= r.combined_formula_bound + 1e-12
        rows.append([r.t, r.tau, r.tv_exact, r.pinsker_chain_bound,
                     r.combined_formula_bound, "pass" if ok else "fail"])
        if not ok:
            failures.append({"check": "attractor bounds", "t": r.t,
                             "tau": r.tau, "tv": r.tv_exact})
    for tau in sorted({r.tau for r in demo_rows}):
        series = [r.tv_exact for r in demo_rows
                  if r.tau == tau and r.t >= 2.0]
        if any(a < b - 1e-12 for a, b in zip(series[:-1], series[1:])):
            failures.append({"check": "tv non-increasing", "tau": tau,
                             "series": series})
    return ExperimentResult(
        "attractor",
        ["t", "tau", "tv_exact_l1", "pinsker_chain_bound_l1",
         "combined_formula_bound_l1", "status"],
        rows, {"constants": const,
               "tv_convention": "l1 (sup over observables bounded by 1)"},
        failures)


RUNNERS = {
    "constants": run_constants,
    "gamma-flow": run_gamma_flow,
    "restriction": run_restriction,
    "refined-restriction": run_refined_restriction,
    "correlation": run_correlation,
    "stationary": run_stationary,
    "entropy": run_entropy,
    "attractor": run_attractor,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg)


def _fmt_site(site) -> str:
    return str(site[0]) if len(site) == 1 else f"{site[0]}:{site[1]}"


def _l1(a, b) -> int:
    return sum(abs(u - v) for u, v in zip(a, b))
