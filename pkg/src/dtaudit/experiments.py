"""Named, reproducible audit experiments.

Each experiment maps a parameter dictionary plus a seed and a worker
count to an `ExperimentResult`: an exit status (0 when every audited
claim held, 1 when at least one claim was falsified), scalar metrics,
and tabular series destined for CSV and gnuplot files. Workers only
split independent slices (sampling periods, controller variants, audit
clauses) and reductions run in a fixed order, so results are identical
for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._sampling import Box, sample_ball, sample_box
from .cascade import (CascadeSystem, Trajectory, _k_probes,
                      check_interconnection_bound, usc_probe)
from .discretize import (VectorField, consistency_order, euler_map,
                         exact_proxy_map, modified_euler_map, ParameterizedMap)
from .numerics import (ClassKFunction, fit_kl_envelope, horizon_index,
                       kl_compose)
from .stability import (CertificateParams, LyapunovCandidate,
                        build_ugb_certificate, check_boundedness,
                        check_summability, falsify_spuas, audit_lyapunov)
from .unicycle import (_chain_grid, _refs_from_config, audit_lyapunov_chain,
                       check_pe, closed_loop_euler_cascade,
                       compute_case_constants, demo_gains, demo_references,
                       error_dynamics_field, lyap_U, pe_window_sums,
                       run_comparison_experiment, validated_gains,
                       validated_references)
from .verdict import StabilityVerdict


class ConfigError(ValueError):
    """An experiment configuration is malformed or names unknown options."""


@dataclass(frozen=True)
class ExperimentResult:
    """Status plus report payload of one experiment run.

    `tables` and `plots` map file stems to (column names, row array)
    pairs; the CLI serializes them as CSV and whitespace-separated data
    files respectively.
    """

    name: str
    status: int
    metrics: dict
    tables: dict
    plots: dict


def _map_ordered(fn, items, jobs: int) -> list:
    # reductions must not depend on completion order
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
        return list(pool.map(fn, items))


def _with_defaults(params: dict, defaults: dict, name: str) -> dict:
    params = dict(params or {})
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown option(s) for {name}: {', '.join(unknown)}")
    out = dict(defaults)
    out.update(params)
    return out


def _rows(array) -> np.ndarray:
    return np.atleast_2d(np.asarray(array, dtype=float))


# --- double integrator under period-scaled feedback ------------------


def double_integrator_field() -> VectorField:
    """Position/velocity chain driven by a scalar force."""

    def rhs(t, s, u):
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        vel = s[..., 1]
        # the integrator may add a batch axis after the held input was formed
        return np.stack([vel, vel * 0.0 + u[..., 0]], axis=-1)

    return VectorField(2, 1, rhs)


def period_scaled_feedback():
    """u = -(x1 + 2 x2)/T; the gain grows as the period shrinks."""

    def ctrl(T, k, s):
        s = np.asarray(s, dtype=float)
        return (-(s[..., 0] + 2.0 * s[..., 1]) / T)[..., None]

    return ctrl


def _map_matrix(pmap: ParameterizedMap, T: float, k: int, dim: int) -> np.ndarray:
    """Matrix of a linear one-step map, column by column."""
    base = np.asarray(pmap.step(T, k, np.zeros(dim)), dtype=float)
    eye = np.eye(dim)
    cols = [np.asarray(pmap.step(T, k, eye[i]), dtype=float) - base for i in range(dim)]
    return np.column_stack(cols)


_EXAMPLE1_DEFAULTS = {
    "T": None,
    "T_values": (0.01, 0.1, 0.19, 0.3),
    "n_random_T": 6,
    "n_states": 100,
    "decay_horizon_s": 20.0,
    "decay_rate": 0.5,
    "nonconv_steps": 10000,
    "nonconv_floor": 0.1,
    "table_T": 0.19,
    "table_steps": 300,
}


def _run_example1(params: dict, seed: int, jobs: int) -> ExperimentResult:
    p = _with_defaults(params, _EXAMPLE1_DEFAULTS, "example1")
    if p["T"] is not None:  # scalar shorthand for a single-period run
        T_values = [float(p["T"])]
    else:
        T_values = [float(t) for t in p["T_values"]]
    if any(not 0.0 < T < 0.5 for T in T_values):
        raise ConfigError("T_values must lie strictly inside (0, 0.5)")
    field = double_integrator_field()
    ctrl = period_scaled_feedback()
    emap = euler_map(field, ctrl)
    xmap = exact_proxy_map(field, ctrl)

    def spectrum(T):
        A = _map_matrix(emap, T, 0, 2)
        ev = np.sort_complex(np.linalg.eigvals(A))
        expect = np.array([-math.sqrt(1.0 - T), math.sqrt(1.0 - T)])
        dev = float(np.max(np.abs(ev - expect)))
        radius = float(np.max(np.abs(np.linalg.eigvals(_map_matrix(xmap, T, 0, 2)))))
        return T, dev, radius, float(ev[0].real), float(ev[1].real)

    spectra = _map_ordered(spectrum, T_values, jobs)
    eig_dev = max(row[1] for row in spectra)
    radius_dev = max(abs(row[2] - 1.0) for row in spectra)

    # decay envelope of the first-order closed loop, one b for all draws
    rng = np.random.default_rng(seed)
    T_decay = T_values + [float(t) for t in rng.uniform(0.02, 0.49, int(p["n_random_T"]))]
    x0 = rng.standard_normal((int(p["n_states"]), 2))
    x0 = x0 * rng.uniform(0.1, 10.0, size=(len(x0), 1))

    def simulate_batch(T):
        steps = min(horizon_index(float(p["decay_horizon_s"]), T), 2000)
        states = np.empty((steps + 1,) + x0.shape)
        states[0] = x0
        y = x0
        for k in range(steps):
            y = np.asarray(emap.step(T, k, y), dtype=float)
            states[k + 1] = y
        return T, states

    lam = float(p["decay_rate"])
    trajs = []
    for T, states in _map_ordered(simulate_batch, T_decay, jobs):
        trajs.extend(Trajectory(T, 0, states[:, j]) for j in range(len(x0)))
    beta = fit_kl_envelope(trajs, lam_grid=[lam])
    b = float(beta.params["M"])
    worst = 0.0
    for traj in trajs:
        if traj.norms[0] <= 0.0:
            continue
        bound = traj.norms[0] * np.exp(-lam * np.arange(len(traj.norms)) * traj.T)
        worst = max(worst, float(np.max(traj.norms / bound)))

    # the integrated plant keeps a unit-circle mode: generic states stall
    x0_nc = np.array([[1.0, 0.3], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]])

    def stalled_fraction(T):
        y = x0_nc.copy()
        floor = np.linalg.norm(y, axis=1)
        for k in range(int(p["nonconv_steps"])):
            y = np.asarray(xmap.step(T, k, y), dtype=float)
            floor = np.minimum(floor, np.linalg.norm(y, axis=1))
        return floor / np.linalg.norm(x0_nc, axis=1)

    ratios = np.array(_map_ordered(stalled_fraction, T_values, jobs))
    min_ratio = float(np.min(ratios))
    nonconv_floor = float(p["nonconv_floor"])

    T_tab = float(p["table_T"]) if p["T"] is None else float(p["T"])
    steps_tab = int(p["table_steps"])
    tabs = {}
    for label, pmap in (("euler", emap), ("exact", xmap)):
        y = np.array([1.0, 0.3])
        rows = [(0, 0.0, y[0], y[1], float(np.linalg.norm(y)))]
        for k in range(steps_tab):
            y = np.asarray(pmap.step(T_tab, k, y), dtype=float)
            rows.append((k + 1, (k + 1) * T_tab, y[0], y[1], float(np.linalg.norm(y))))
        tabs[f"trajectory_{label}"] = (["k", "t", "x1", "x2", "norm"], _rows(rows))

    status = 0 if (eig_dev <= 1e-10 and radius_dev <= 1e-6
                   and worst <= b * (1.0 + 1e-6) and min_ratio >= nonconv_floor) else 1
    metrics = {
        "euler_eig_deviation": eig_dev,
        "exact_unit_circle_deviation": radius_dev,
        "envelope_b": b,
        "envelope_rate": lam,
        "measured_sup_ratio": worst,
        "n_trajectories": len(trajs),
        "nonconvergence_min_ratio": min_ratio,
        "nonconvergence_floor": nonconv_floor,
        "spectra": [{"T": r[0], "euler_eig_deviation": r[1], "exact_spectral_radius": r[2]}
                    for r in spectra],
    }
    plots = {"eigenvalues": (["T", "eig_lo", "eig_hi", "exact_spectral_radius"],
                             _rows([(r[0], r[3], r[4], r[2]) for r in spectra]))}
    return ExperimentResult("example1", status, metrics, tabs, plots)


# --- correction-variant comparison ------------------------------------


def _run_unicycle_compare(params: dict, seed: int, jobs: int) -> ExperimentResult:
    cfg = dict(params or {})
    unknown = sorted(set(cfg) - {"T", "horizon_s", "initial_error", "plant", "variants",
                                 "refs", "gains", "divergence_norm"})
    if unknown:
        raise ConfigError(f"unknown option(s) for unicycle-compare: {', '.join(unknown)}")
    variants = list(cfg.get("variants", ("none", "scaled", "full")))

    def run_variant(name):
        single = dict(cfg)
        single["variants"] = (name,)
        out = run_comparison_experiment(single)
        return name, out["config"], out["variants"][name]

    results = _map_ordered(run_variant, variants, jobs)
    merged_cfg = dict(results[0][1])
    merged_cfg["variants"] = tuple(variants)

    tables, plots, per_variant = {}, {}, {}
    cols = ["k", "t", "x_e", "y_e", "theta_e", "v", "omega", "correction"]
    for name, _, payload in results:
        rows = _rows(payload["rows"])
        tables[f"trajectory_{name}"] = (cols, rows)
        pos = np.hypot(rows[:, 2], rows[:, 3])
        full = np.linalg.norm(rows[:, 2:5], axis=1)
        plots[f"errors_{name}"] = (["t", "position_error", "full_error"],
                                   np.column_stack([rows[:, 1], pos, full]))
        per_variant[name] = payload["metrics"]

    diverged = {name: per_variant[name]["diverged"] for name in per_variant}
    settled = {name: per_variant[name]["settle_step_full"] is not None
               for name in per_variant}
    ise = {name: per_variant[name]["ise_position"] for name in per_variant}
    ordering = {}
    if "none" in ise:
        for name in per_variant:
            if name != "none":
                ordering[f"ise_{name}_below_none"] = bool(ise[name] <= ise["none"])
    status = 0 if (not any(diverged.values()) and all(settled.values())) else 1
    metrics = {
        "config": merged_cfg,
        "variants": per_variant,
        "any_diverged": any(diverged.values()),
        "all_settled": all(settled.values()),
        **ordering,
    }
    return ExperimentResult("unicycle-compare", status, metrics, tables, plots)


# --- one-step consistency sweep ---------------------------------------


_CONSISTENCY_DEFAULTS = {
    "plant": "unicycle",
    "regime": "validated",
    "held_input": (0.5, 0.3),
    "T_list": tuple(float(t) for t in np.logspace(-3.0, -1.0, 9)),
    "k_set": (0, 7, 50, 157),
    "n_samples": 64,
    "box_halfwidth": 1.0,
    "proxy_tol": 1e-10,
    "euler_slope_window": (1.85, 2.15),
    "modified_slope_min": 1.9,
}


def _run_consistency(params: dict, seed: int, jobs: int) -> ExperimentResult:
    p = _with_defaults(params, _CONSISTENCY_DEFAULTS, "consistency-sweep")
    if p["plant"] != "unicycle":
        raise ConfigError("only the unicycle tracking-error plant is wired in")
    if p["regime"] == "validated":
        refs = validated_references()
    elif p["regime"] == "demo":
        refs = demo_references()
    else:
        raise ConfigError("regime must be 'validated' or 'demo'")
    held = np.asarray(p["held_input"], dtype=float)
    if held.shape != (2,):
        raise ConfigError("held_input must be a pair (v, omega)")
    field = error_dynamics_field(refs)
    ref_map = exact_proxy_map(field, held, tol=float(p["proxy_tol"]))
    box = Box.centered(float(p["box_halfwidth"]), 3)
    T_list = [float(t) for t in p["T_list"]]
    k_set = [int(k) for k in p["k_set"]]
    n = int(p["n_samples"])

    def sweep(label):
        make = euler_map if label == "euler" else modified_euler_map
        rep = consistency_order(ref_map, make(field, held), box,
                                k_set=k_set, T_list=T_list, n_samples=n)
        return label, rep

    reports = dict(_map_ordered(sweep, ["euler", "modified-euler"], jobs))
    lo, hi = (float(v) for v in p["euler_slope_window"])
    e_slope = reports["euler"].slope
    m_slope = reports["modified-euler"].slope
    status = 0 if (e_slope is not None and lo <= e_slope <= hi
                   and m_slope is not None and m_slope >= float(p["modified_slope_min"])) else 1

    tables, plots = {}, {}
    for label, rep in reports.items():
        stem = label.replace("-", "_")
        Ts = np.asarray(rep.T_samples)
        errs = np.asarray(rep.max_errors)
        data = np.column_stack([Ts, errs, errs / Ts, errs / Ts ** 2])
        tables[f"consistency_{stem}"] = (["T", "max_error", "error_over_T", "error_over_T2"], data)
        plots[f"consistency_{stem}"] = (["T", "max_error"], np.column_stack([Ts, errs]))
    metrics = {
        "regime": p["regime"],
        "held_input": [float(v) for v in held],
        "euler_slope": e_slope,
        "modified_euler_slope": m_slope,
        "euler_max_error_smallest_T": float(reports["euler"].max_errors[-1]),
        "modified_euler_max_error_smallest_T": float(reports["modified-euler"].max_errors[-1]),
    }
    return ExperimentResult("consistency-sweep", status, metrics, tables, plots)


# --- tracking regimes --------------------------------------------------


def _regime(name: str, T: float):
    if name == "validated":
        return validated_references(T), validated_gains("full")
    if name == "demo":
        return demo_references(T), demo_gains(T, "full")
    raise ConfigError("regime must be 'validated' or 'demo'")


_LYAP_DEFAULTS = {
    "regime": "validated",
    "T": 0.01,
    "L_pe": 2.0,
    "grid_n": 41,
    "radius": 5.0,
    "margin_rows": True,
}


def _run_lyapunov_audit(params: dict, seed: int, jobs: int) -> ExperimentResult:
    p = _with_defaults(params, _LYAP_DEFAULTS, "lyapunov-audit")
    T = float(p["T"])
    refs, gains = _regime(p["regime"], T)
    grid_n, radius = int(p["grid_n"]), float(p["radius"])
    consts = compute_case_constants(refs, gains, T, float(p["L_pe"]),
                                    grid_n=grid_n, radius=radius)
    metrics = {"regime": p["regime"], "T": T, "constants": consts.to_json()}
    if not consts.all_valid:
        metrics["violated_flag"] = consts.first_violated()
        return ExperimentResult("lyapunov-audit", 1, metrics, {}, {})

    chain = audit_lyapunov_chain(refs, gains, consts, T, grid_n=grid_n, radius=radius)
    metrics["chain"] = chain.to_json()

    # the same function, audited against the definition-style conditions
    gains_full = replace(gains, use_correction="full")
    sysm = closed_loop_euler_cascade(refs, gains_full)

    def unforced(TT, k, x):
        x = np.asarray(x, dtype=float)
        return sysm.f(TT, k, x, np.zeros(x.shape[:-1] + (1,)))

    F = ParameterizedMap(2, sysm.T_max, unforced, "custom")
    cand = LyapunovCandidate(
        eval=lambda TT, k, x: np.asarray(lyap_U(int(k), x, refs, gains_full, consts, TT),
                                         dtype=float),
        alpha1=ClassKFunction.power(consts.c1 / 2.0, 2.0),
        alpha2=ClassKFunction.power(consts.c2, 2.0),
        alpha3=ClassKFunction.power(consts.c3_tilde, 2.0),
        L_mod=ClassKFunction.linear(2.0 * (consts.c2 + consts.eps_small * consts.c3)),
    )
    X, Y = _chain_grid(grid_n, radius)
    pts = np.stack([X, Y], axis=-1)
    k_hi = int(math.ceil(2.0 * math.pi / T))
    Delta = radius * math.sqrt(2.0) + 1.0

    def def_audit(k_block):
        return audit_lyapunov(cand, F, Delta, 0.0, [T], pts, k_set=k_block)

    blocks = np.array_split(np.arange(k_hi + 1), max(1, min(8, int(jobs) or 1)))
    verdicts = _map_ordered(def_audit, [list(b) for b in blocks if len(b)], jobs)
    definition = next((v for v in verdicts if v.kind != "pass"), None)
    if definition is None:
        worst = {key: max(v.margins[key] for v in verdicts)
                 for key in verdicts[0].margins}
        definition = StabilityVerdict("pass", None, verdicts[0].detail, worst)
    metrics["definition_audit"] = definition.to_json()

    tables, plots = {}, {}
    if p["margin_rows"]:
        probe = audit_lyapunov(cand, F, Delta, 0.0, [T], pts,
                               k_set=_k_probes(T), collect_margins=True)
        rows = probe.margins.get("rows", [])
        tables["decrease_margins"] = (["sample_id", "norm", "bound", "measured", "margin"],
                                      _rows(rows))
    ks = list(range(0, k_hi + 1, 7))
    prof = []
    fstep = sysm.f
    z0 = np.zeros((len(pts), 1))
    for k in ks:
        u_now = np.asarray(lyap_U(k, pts, refs, gains_full, consts, T), dtype=float)
        nxt = np.asarray(fstep(T, k, pts, z0), dtype=float)
        u_next = np.asarray(lyap_U(k + 1, nxt, refs, gains_full, consts, T), dtype=float)
        margin = -consts.c3_tilde * np.sum(pts ** 2, axis=-1) - (u_next - u_now) / T
        prof.append((k, k * T, float(np.min(margin))))
    plots["decrease_profile"] = (["k", "t", "min_margin"], _rows(prof))

    status = 0 if (chain.kind == "pass" and definition.kind == "pass") else 1
    return ExperimentResult("lyapunov-audit", status, metrics, tables, plots)


# --- sliding-window excitation ----------------------------------------


_PE_DEFAULTS = {
    "regime": "demo",
    "refs": None,
    "wr": None,
    "L": math.pi,
    "mu": 600.0,
    "T_list": (0.01,),
}


def _run_pe_check(params: dict, seed: int, jobs: int) -> ExperimentResult:
    p = _with_defaults(params, _PE_DEFAULTS, "pe-check")
    T_list = [float(t) for t in p["T_list"]]
    if p["wr"] is not None and p["refs"] is None:
        # shorthand: give just the turning-rate signal, constant if scalar
        wr = p["wr"] if isinstance(p["wr"], dict) else {"kind": "const",
                                                        "amplitude": float(p["wr"])}
        p = dict(p)
        p["refs"] = {"vr": 1.0, "wr": wr}
    if p["refs"] is not None:
        try:
            refs = _refs_from_config({"refs": p["refs"]}, T_list[0])
        except (KeyError, ValueError, TypeError) as err:
            raise ConfigError(f"bad reference description: {err}") from err
    elif p["regime"] == "validated":
        refs = validated_references(T_list[0])
    elif p["regime"] == "demo":
        refs = demo_references(T_list[0])
    else:
        raise ConfigError("regime must be 'validated' or 'demo'")
    L, mu = float(p["L"]), float(p["mu"])

    verdict = check_pe(refs, L, mu, T_list)
    T0 = T_list[0]
    j_max = int(math.ceil(2.0 * math.pi / T0))
    sums = pe_window_sums(refs, T0, L, j_max)
    js = np.arange(len(sums))
    plots = {"window_sums": (["j", "t", "window_sum"],
                             np.column_stack([js, js * T0, sums]))}
    metrics = {
        "L": L,
        "mu": mu,
        "T_list": T_list,
        "verdict": verdict.to_json(),
        "min_window_sum": float(np.min(sums)),
    }
    return ExperimentResult("pe-check", 0 if verdict.kind == "pass" else 1,
                            metrics, {}, plots)


# --- cascade theorem walkthrough --------------------------------------


_THEOREM_DEFAULTS = {
    "T": 0.01,
    "T_list": (0.01, 0.02, 0.05),
    "L_pe": 2.0,
    "Delta": 5.0,
    "Delta_z": 2.0,
    "eta": 2.0,
    "eps": 0.5,
    "usc_L": 2.0,
    "mu_grid": (0.2, 0.1, 0.05, 0.02, 0.01),
    "horizon_s": 40.0,
    "grid_n": 41,
    "radius": 5.0,
    "theta_values": (-0.5, -0.25, 0.0, 0.25, 0.5),
    "k_stride": 7,
    "n_ball": 33,
    "usc_x0_count": 8,
}


def _simulate_map_trajs(step, grid_pts, T_list, horizon_s, k0s=None):
    # start-index probes must match the falsifiers' sweep
    trajs = []
    for T in T_list:
        steps = horizon_index(horizon_s, T)
        for k0 in (_k_probes(T) if k0s is None else k0s):
            states = np.empty((steps + 1,) + grid_pts.shape)
            states[0] = grid_pts
            y = grid_pts
            for k in range(steps):
                y = np.asarray(step(T, k0 + k, y), dtype=float)
                states[k + 1] = y
            trajs.extend(Trajectory(T, k0, states[:, j]) for j in range(len(grid_pts)))
    return trajs


def _run_theorem_demo(params: dict, seed: int, jobs: int) -> ExperimentResult:
    p = _with_defaults(params, _THEOREM_DEFAULTS, "cascade-theorem-demo")
    T = float(p["T"])
    T_list = sorted(float(t) for t in p["T_list"])
    horizon_s = float(p["horizon_s"])
    Delta, Delta_z = float(p["Delta"]), float(p["Delta_z"])
    refs, gains = validated_references(T), validated_gains("full")
    sysm = closed_loop_euler_cascade(refs, gains)
    if T_list[-1] > sysm.T_max:
        raise ConfigError(f"T_list exceeds the admissible T_max {sysm.T_max}")
    consts = compute_case_constants(refs, gains, T, float(p["L_pe"]),
                                    grid_n=int(p["grid_n"]), radius=float(p["radius"]))
    if not consts.all_valid:
        return ExperimentResult("cascade-theorem-demo", 1,
                                {"violated_flag": consts.first_violated(),
                                 "constants": consts.to_json()}, {}, {})

    def zstep(TT, k, z):
        return sysm.g(TT, k, np.asarray(z, dtype=float))

    zmap = ParameterizedMap(1, sysm.T_max, zstep, "custom")

    def xstep(TT, k, x):
        x = np.asarray(x, dtype=float)
        return sysm.f(TT, k, x, np.zeros(x.shape[:-1] + (1,)))

    xmap = ParameterizedMap(2, sysm.T_max, xstep, "custom")

    def cascade_step(TT, k, y):
        y = np.asarray(y, dtype=float)
        xn = np.asarray(sysm.f(TT, k, y[..., :2], y[..., 2:]), dtype=float)
        zn = np.asarray(sysm.g(TT, k, y[..., 2:]), dtype=float)
        return np.concatenate([xn, zn], axis=-1)

    n_ball = int(p["n_ball"])

    def h_driving_decay():
        grid = sample_ball(Delta_z, 1, 17)
        trajs = _simulate_map_trajs(zmap.step, grid, T_list, horizon_s)
        beta = fit_kl_envelope(trajs)
        verdict = falsify_spuas(zmap, beta, Delta_z, 0.0, T_list, grid, horizon_s)
        return {"beta": beta.to_json(), "verdict": verdict.to_json()}, beta, verdict

    def h_unforced_decay():
        grid = sample_ball(Delta, 2, n_ball)
        trajs = _simulate_map_trajs(xmap.step, grid, T_list, horizon_s)
        beta = fit_kl_envelope(trajs)
        verdict = falsify_spuas(xmap, beta, Delta, 0.0, T_list, grid, horizon_s)
        return {"beta": beta.to_json(), "verdict": verdict.to_json()}, beta, verdict

    def h_small_inputs():
        mu_star = usc_probe(sysm, Delta, float(p["eta"]), float(p["eps"]),
                            float(p["usc_L"]), [T], list(p["mu_grid"]),
                            x0_count=int(p["usc_x0_count"]))
        return {"mu_star": mu_star}, mu_star, None

    def h_interconnection():
        dom = Box((-Delta, -Delta, -Delta_z), (Delta, Delta, Delta_z))
        pts = sample_box(dom, 2048)
        X, Z = pts[:, :2], pts[:, 2:]
        xi = np.linalg.norm(pts, axis=1)
        xn = np.linalg.norm(X, axis=1)
        zn = np.linalg.norm(Z, axis=1)
        Z0 = np.zeros_like(Z)

        def fit(system):
            g1 = c = 0.0
            for TT in T_list:
                for k in _k_probes(TT):
                    F = np.asarray(system.f(TT, k, X, Z), dtype=float)
                    F0 = np.asarray(system.f(TT, k, X, Z0), dtype=float)
                    keep = xi > 0
                    g1 = max(g1, float(np.max(np.linalg.norm(F, axis=1)[keep] / xi[keep])))
                    keep = zn > 1e-15
                    gap = np.linalg.norm(F - F0, axis=1)[keep]
                    c = max(c, float(np.max(gap / (TT * (xn[keep] + 1.0) * zn[keep]))))
            return g1 * (1.0 + 1e-9), c * (1.0 + 1e-9)

        g1, c = fit(sysm)
        gamma2 = ClassKFunction.affine_capped(c, c)
        gamma3 = ClassKFunction.identity()
        ok = check_interconnection_bound(sysm, ClassKFunction.linear(g1), gamma2,
                                         gamma3, dom, T_list, n_samples=2048)

        def inflated(TT, k, XX, ZZ):
            base = np.asarray(sysm.f(TT, k, XX, np.zeros_like(np.atleast_2d(ZZ))), dtype=float)
            return base + (np.asarray(sysm.f(TT, k, XX, ZZ), dtype=float) - base) / TT

        doctored = CascadeSystem(2, 1, inflated, sysm.g, sysm.T_max)
        g1d, _ = fit(doctored)
        bad = check_interconnection_bound(doctored, ClassKFunction.linear(g1d), gamma2,
                                          gamma3, dom, T_list, n_samples=2048)
        payload = {"gamma1_gain": g1, "gamma2_gain": c,
                   "verdict": ok.to_json(), "doctored_verdict": bad.to_json()}
        return payload, (ok, bad, c), None

    def h_growth_certificate():
        X, Y = _chain_grid(int(p["grid_n"]), float(p["radius"]))
        base = np.stack([X, Y], axis=-1)
        pts = np.concatenate([np.column_stack([base, np.full(len(base), th)])
                              for th in p["theta_values"]])
        k_hi = int(math.ceil(2.0 * math.pi / T))
        k_cert = sorted(set(range(0, k_hi + 1, int(p["k_stride"]))) | {k_hi})

        cand = LyapunovCandidate(
            eval=lambda TT, k, x: np.asarray(
                lyap_U(int(k), x, refs, gains, consts, TT), dtype=float),
            alpha1=ClassKFunction.power(consts.c1 / 2.0, 2.0),
            alpha2=ClassKFunction.power(consts.c2, 2.0),
            alpha3=ClassKFunction.power(consts.c3_tilde, 2.0),
            L_mod=ClassKFunction.linear(2.0 * (consts.c2 + consts.eps_small * consts.c3)),
        )
        Xs, Zs = pts[:, :2], pts[:, 2:]
        zn = np.linalg.norm(Zs, axis=1)
        keep = zn > 1e-15
        d = 0.0
        for k in k_cert:
            v = np.asarray(lyap_U(k, Xs, refs, gains, consts, T), dtype=float)
            Fz = np.asarray(sysm.f(T, k, Xs, Zs), dtype=float)
            F0 = np.asarray(sysm.f(T, k, Xs, np.zeros_like(Zs)), dtype=float)
            drift = (np.asarray(lyap_U(k + 1, Fz, refs, gains, consts, T), dtype=float)
                     - np.asarray(lyap_U(k + 1, F0, refs, gains, consts, T), dtype=float))
            d = max(d, float(np.max(drift[keep] / (T * zn[keep] * (v[keep] + 1.0)))))
        d *= 1.0 + 1e-9

        cert_params = CertificateParams(
            alpha1=ClassKFunction.power(consts.c1 / 2.0, 2.0),
            alpha2=ClassKFunction.power(consts.c2, 2.0),
            c=0.0,
            gamma1=ClassKFunction.linear(d),
            gamma2=ClassKFunction.linear(d),
            phi=ClassKFunction.identity(),
        )
        cert, verdict = build_ugb_certificate(cand, sysm, cert_params, pts, [T],
                                              k_set=k_cert)

        z_grid = sample_ball(Delta_z, 1, 17)
        z_trajs = _simulate_map_trajs(zmap.step, z_grid, [T], horizon_s, k0s=[0])
        budget = 0.0
        for traj in z_trajs:
            if traj.norms[0] <= 0.0:
                continue
            total = T * float(np.sum(np.asarray(cert.mu_fn(traj.norms), dtype=float)))
            budget = max(budget, total / traj.norms[0])
        summable = check_summability(z_trajs, cert.mu_fn,
                                     ClassKFunction.linear(budget * 1.05), T)
        payload = {"drift_gain": d, "mu_gain": float(cert.mu_fn.params["gain"]),
                   "summability_budget_gain": budget * 1.05,
                   "rho_at_half": float(cert.rho_built(0.5)),
                   "rho_at_e": float(cert.rho_built(math.e)),
                   "verdict": verdict.to_json(), "summability": summable.to_json()}
        return payload, (verdict, summable), None

    def c_cascade_decay():
        grid = sample_ball(Delta, 3, n_ball)
        trajs = _simulate_map_trajs(cascade_step, grid, T_list, horizon_s)
        beta = fit_kl_envelope(trajs)
        verdict = falsify_spuas(sysm, beta, Delta, 0.0, T_list, grid, horizon_s)
        kappa = 0.0
        for traj in trajs:
            if traj.norms[0] > 0.0:
                kappa = max(kappa, float(np.max(traj.norms)) / traj.norms[0])
        bounded = check_boundedness(sysm, ClassKFunction.linear(kappa * (1.0 + 1e-9)),
                                    0.0, Delta, T_list, grid, horizon_s)
        payload = {"beta": beta.to_json(), "kappa_gain": kappa * (1.0 + 1e-9),
                   "verdict": verdict.to_json(), "bounded": bounded.to_json()}
        return payload, (beta, verdict, bounded), None

    tasks = [("driving_decay", h_driving_decay),
             ("unforced_decay", h_unforced_decay),
             ("small_inputs", h_small_inputs),
             ("interconnection", h_interconnection),
             ("growth_certificate", h_growth_certificate),
             ("cascade", c_cascade_decay)]
    outcomes = dict(zip([name for name, _ in tasks],
                        _map_ordered(lambda t: t[1](), tasks, jobs)))

    metrics = {"T": T, "T_list": T_list, "constants": consts.to_json()}
    for name, (payload, _, _) in outcomes.items():
        metrics[name] = payload

    beta_z = outcomes["driving_decay"][1]
    beta_x = outcomes["unforced_decay"][1]
    mu_star = outcomes["small_inputs"][1]
    ok_inter, bad_inter, c_gain = outcomes["interconnection"][1]
    cert_verdict, summable = outcomes["growth_certificate"][1]
    beta_c, cascade_verdict, bounded = outcomes["cascade"][1]

    composed = kl_compose(beta_x, beta_z, beta_c, ClassKFunction.linear(c_gain))
    t_grid = np.linspace(0.0, horizon_s, 81)
    plots = {"envelopes": (["t", "fitted_cascade", "composed"],
                           np.column_stack([t_grid,
                                            np.asarray(beta_c(Delta, t_grid), dtype=float),
                                            np.asarray(composed(Delta, t_grid), dtype=float)]))}
    metrics["composed_bound_at_0"] = float(composed(Delta, 0.0))

    hypotheses = (outcomes["driving_decay"][2].kind == "pass"
                  and outcomes["unforced_decay"][2].kind == "pass"
                  and mu_star > 0.0
                  and ok_inter.kind == "pass"
                  and cert_verdict.kind == "pass"
                  and summable.kind == "pass")
    conclusions = cascade_verdict.kind == "pass" and bounded.kind == "pass"
    metrics["hypotheses_hold"] = bool(hypotheses)
    metrics["conclusions_hold"] = bool(conclusions)
    metrics["doctored_falsified"] = bad_inter.kind == "falsified"
    status = 0 if (hypotheses and conclusions and bad_inter.kind == "falsified") else 1
    return ExperimentResult("cascade-theorem-demo", status, metrics, {}, plots)


EXPERIMENTS = {
    "example1": _run_example1,
    "unicycle-compare": _run_unicycle_compare,
    "consistency-sweep": _run_consistency,
    "lyapunov-audit": _run_lyapunov_audit,
    "pe-check": _run_pe_check,
    "cascade-theorem-demo": _run_theorem_demo,
}


def list_experiments() -> list[str]:
    return sorted(EXPERIMENTS)


def run_named(name: str, params: dict | None, seed: int = 0,
              jobs: int = 1) -> ExperimentResult:
    """Run a registered experiment; unknown names are configuration errors."""
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from "
                          + ", ".join(list_experiments()))
    params = dict(params or {})
    inline = params.pop("name", None)  # configs may restate the experiment
    if inline is not None and inline != name:
        raise ConfigError(f"config names experiment {inline!r} but {name!r} was requested")
    return EXPERIMENTS[name](params, int(seed), int(jobs))
