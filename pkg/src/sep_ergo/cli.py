"""Command line front end.

Four subcommands:

  decay           estimate the discrepancy-density decay curve and fit its
                  exponent against the dimension-dependent prediction
  validate        run the pinned oracle validation suite and report
                  pass/fail per check
  simulate        run replicas of one process and write run-length-encoded
                  snapshot files plus a manifest
  oracle-compare  compare empirical state laws of both engines against the
                  exact evolved law on a small torus

Every run writes JSON (and for decay, CSV) into --out with the fully
resolved config and its sha256 embedded, so outputs are reproducible
byte for byte from their own headers.  Exit codes: 0 success, 1 a
validation or comparison check failed, 2 bad config, 3 a resource cap
was hit.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import dynamics, metrics, oracle
from .core import ResourceLimitError, TorusLattice, TwoSpeciesConfig, replica_rng
from .ensembles import (
    Bernoulli,
    DiffLawSpec,
    MarkovChain1d,
    block_xor,
    exact_difference_distribution,
    exact_state_distribution,
    measure_to_dict,
    parse_measure,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3

# exact-oracle checks in `validate` enumerate full state spaces; the coupled
# generator is 4^n so the knob-selectable lattice stays small
VALIDATE_SITE_CAP = 6

_PINNED_CHAIN = ((0.7, 0.3), (0.4, 0.6))


# ---------------------------------------------------------------------------
# config plumbing


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(resolved: dict) -> str:
    return hashlib.sha256(_canonical_json(resolved).encode()).hexdigest()


def _write_json(path: str, payload: dict):
    with open(path, "w") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _check_keys(cfg: dict, required: set, optional: set, ctx: str):
    unknown = set(cfg) - required - optional
    if unknown:
        raise ValueError(f"{ctx}: unknown keys {sorted(unknown)}")
    missing = required - set(cfg)
    if missing:
        raise ValueError(f"{ctx}: missing keys {sorted(missing)}")


def _positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return value


def _times(raw) -> list:
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ValueError("times must be a nonempty list")
    ts = [float(v) for v in raw]
    if ts[0] < 0 or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("times must be nonnegative and strictly increasing")
    return ts


def _resolve_side(raw, times: list, eps: float) -> int:
    """Pinned integer side, or 'auto' for the light-cone rule at max(times)."""
    if raw == "auto":
        return dynamics.light_cone_side(max(times), eps)
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ValueError(f"side must be an integer or 'auto', got {raw!r}")
    return raw


def _resolve_seed(cfg: dict, args, default=None) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed", default)
    if seed is None:
        raise ValueError("a master seed is required (config 'seed' or --seed)")
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ValueError(f"seed must be an integer, got {seed!r}")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in 64 bits")
    return seed


def _load_config(args, default=None) -> dict:
    if args.config is None:
        if default is None:
            raise ValueError("--config is required for this subcommand")
        return dict(default)
    with open(args.config) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config root must be a JSON object")
    return cfg


# ---------------------------------------------------------------------------
# decay


def cmd_decay(args) -> int:
    cfg = _load_config(args)
    _check_keys(cfg, {"dimension", "side", "measure", "rho", "times", "replicas"},
                {"epsilon", "engine", "seed", "fit_window"}, "decay")
    dim = _positive_int(cfg["dimension"], "dimension")
    times = _times(cfg["times"])
    eps = float(cfg.get("epsilon", dynamics.DEFAULT_LIGHT_CONE_EPS))
    side = _resolve_side(cfg["side"], times, eps)
    lattice = TorusLattice(dim, side)
    mu = parse_measure(cfg["measure"], dim)
    diff = DiffLawSpec(mu, float(cfg["rho"]))
    replicas = _positive_int(cfg["replicas"], "replicas")
    engine = metrics.canonical_engine(cfg.get("engine", "gillespie"))
    seed = _resolve_seed(cfg, args)
    window = cfg.get("fit_window")
    if window is not None:
        if not isinstance(window, (list, tuple)) or len(window) != 2:
            raise ValueError("fit_window must be a [lo, hi] pair")
        window = [float(window[0]), float(window[1])]

    resolved = {
        "subcommand": "decay",
        "dimension": dim,
        "side": side,
        "epsilon": eps,
        "measure": measure_to_dict(mu),
        "rho": diff.rho,
        "times": times,
        "replicas": replicas,
        "engine": engine,
        "seed": seed,
        "fit_window": window,
    }
    digest = config_digest(resolved)

    series = metrics.dbar_bound_series(diff, lattice, times, replicas, seed,
                                       engine, args.workers)
    gamma = series.metadata["gamma"]
    # the envelope ratio is estimate * t^gamma / sqrt(A), so on the log-log
    # scale its slope is the fitted slope shifted by exactly gamma
    try:
        fit = metrics.fit_decay_exponent(series, window)
        ratio_slope = fit.slope + gamma
        fit_report = {
            "slope": fit.slope,
            "half_width": fit.half_width,
            "intercept": fit.intercept,
            "used_times": list(fit.used_times),
            "dropped_times": list(fit.dropped_times),
            "expected_slope": -gamma,
            "ratio_slope": ratio_slope,
            "ratio_trend_ok": bool(abs(ratio_slope) <= 0.1),
        }
    except ValueError as err:
        fit_report = {"error": str(err), "expected_slope": -gamma}

    csv_path = os.path.join(args.out, "decay.csv")
    lines = [
        "# config = " + _canonical_json(resolved),
        "# config_sha256 = " + digest,
        "# master_seed = " + str(seed),
        "time,estimate,stderr,replicas,ratio_to_envelope",
    ]
    lines += [",".join(row) for row in series.to_csv_rows()]
    with open(csv_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    json_path = os.path.join(args.out, "decay.json")
    _write_json(json_path, {
        "config": resolved,
        "config_sha256": digest,
        "series": series.to_json_dict(),
        "fit": fit_report,
    })

    if "error" in fit_report:
        print(f"decay: fit skipped ({fit_report['error']})")
    else:
        print(f"decay: slope {fit_report['slope']:+.4f} "
              f"+/- {fit_report['half_width']:.4f} "
              f"(prediction {-gamma:+.4f}), ratio trend "
              f"{'flat' if fit_report['ratio_trend_ok'] else 'NOT FLAT'}")
    print(f"decay: wrote {csv_path} and {json_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate


def _row(check: str, statistic: float, tolerance: float, **extra) -> dict:
    out = {"check": check, "statistic": float(statistic),
           "tolerance": float(tolerance),
           "pass": bool(statistic <= tolerance)}
    out.update(extra)
    return out


def _walk_generator(lattice: TorusLattice) -> np.ndarray:
    n = lattice.n_sites
    Q = np.zeros((n, n))
    for a, b in lattice.edge_sites:
        Q[a, b] += 1.0
        Q[b, a] += 1.0
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def _generator_row_audit(lattice: TorusLattice) -> dict:
    """Audit generator rows against independently built expected objects.

    Single-particle sectors of sep and annihilation must equal the rate-1
    edge walk, and the coupled generator must lump onto sep along either
    occupancy marginal (each marginal of the coupling is autonomous).
    """
    n = lattice.n_sites
    walk = _walk_generator(lattice)

    g_sep = oracle.build_generator("sep", lattice)
    codes2 = 1 << np.arange(n)
    dev = float(np.abs(g_sep.matrix[np.ix_(codes2, codes2)] - walk).max())

    g_ann = oracle.build_generator("annihilation", lattice)
    empty3 = (3**n - 1) // 2  # all digits 1
    pow3 = 3 ** np.arange(n)
    for sign in (+1, -1):
        codes3 = empty3 + sign * pow3
        dev = max(dev, float(np.abs(g_ann.matrix[np.ix_(codes3, codes3)] - walk).max()))

    g_cpl = oracle.build_generator("coupled", lattice)
    shift = 1 << n
    s = np.arange(shift * shift)
    for part in (s // shift, s % shift):
        onehot = np.zeros((shift * shift, shift))
        onehot[s, part] = 1.0
        lump = g_cpl.matrix @ onehot - onehot @ g_sep.matrix
        dev = max(dev, float(np.abs(lump).max()))

    offdiag = 0.0
    for g in (g_sep, g_ann, g_cpl, oracle.build_generator("free", lattice)):
        m = g.matrix.copy()
        np.fill_diagonal(m, 0.0)
        offdiag = min(offdiag, float(m.min()))
    dev = max(dev, -offdiag)
    return _row("generator_rows", dev, 1e-12, sites=n)


def _mean_discrepancy_monotone(times: list) -> dict:
    """E|xi_t| under annihilation never increases (mass only annihilates)."""
    lat = TorusLattice(1, 3)
    diff = DiffLawSpec(Bernoulli(0.5), 0.5)
    dist = exact_difference_distribution(diff, lat)
    g = oracle.build_generator("annihilation", lat)
    digits = (np.arange(g.n_states)[:, None] // 3 ** np.arange(3)[None, :]) % 3
    n_occupied = (digits != 1).sum(axis=1) / 3.0
    means = [float(oracle.evolve_exact(g, dist, t).values @ n_occupied)
             for t in times]
    worst = max(b - a for a, b in zip(means, means[1:]))
    return _row("mean_discrepancy_monotone", worst, 1e-12,
                times=list(times), means=means)


def cmd_validate(args) -> int:
    cfg = _load_config(args, default={})
    _check_keys(cfg, set(),
                {"seed", "replicas", "annihilation_rate", "dimension", "side"},
                "validate")
    dim = _positive_int(cfg.get("dimension", 1), "dimension")
    side = _positive_int(cfg.get("side", 5), "side")
    replicas = _positive_int(cfg.get("replicas", 2000), "replicas")
    rate = float(cfg.get("annihilation_rate", 2.0))
    seed = _resolve_seed(cfg, args, default=271828)

    resolved = {"subcommand": "validate", "dimension": dim, "side": side,
                "replicas": replicas, "annihilation_rate": rate, "seed": seed}
    digest = config_digest(resolved)

    lattice = TorusLattice(dim, side)
    if lattice.n_sites > VALIDATE_SITE_CAP:
        raise ResourceLimitError(
            f"validate's exact checks are capped at {VALIDATE_SITE_CAP} sites, "
            f"got {lattice.n_sites}")

    checks = []
    checks.append(_generator_row_audit(lattice))

    # the rate knob exists to let a deliberate fault surface here
    proj = oracle.difference_projection_check(TorusLattice(1, 4), [0.1, 1.0, 5.0],
                                              annihilation_rate=rate)
    checks.append(_row("difference_projection", proj["max_tv"], 1e-9,
                       annihilation_rate=rate, per_time=proj["per_time"]))

    occ = oracle.occupancy_correlation_check(lattice, [0.5, 1.0, 2.0])
    dep = oracle.negative_dependence_check(lattice, [0.5, 1.0])
    checks.append(_row("occupancy_negative_correlation",
                       max(occ["max_excess"], dep["max_cross_channel_gap"]),
                       1e-10,
                       max_occupancy_excess=occ["max_excess"],
                       max_cross_channel_gap=dep["max_cross_channel_gap"],
                       # the ordered marker pair is NOT dominated entrywise by
                       # independent walks; kept visible as data, not asserted
                       marker_excess_stirring=dep["max_stirring_violation"],
                       marker_excess_exclusion=dep["max_exclusion_violation"]))

    lat4 = TorusLattice(1, 4)
    worst_dual = 0.0
    dual_rows = []
    for mu in (Bernoulli(0.3), MarkovChain1d(_PINNED_CHAIN)):
        for t in (0.5, 2.0):
            for x, y in ((0, 1), (0, 2)):
                d = metrics.duality_check(mu, x, y, t, lat4, mode="oracle")
                dual_rows.append({"measure": measure_to_dict(mu), "t": t,
                                  "sites": [x, y],
                                  "discrepancy": d["discrepancy"]})
                worst_dual = max(worst_dual, d["discrepancy"])
    checks.append(_row("duality", worst_dual, 1e-8, cases=dual_rows))

    var_lat = TorusLattice(1, dynamics.light_cone_side(4.0))
    var = metrics.variance_bound_check(DiffLawSpec(Bernoulli(0.5), 0.5), 8,
                                       [1.0, 4.0], replicas, seed, var_lat,
                                       workers=args.workers)
    est = np.asarray(var["estimates"])
    se = np.asarray(var["stderrs"])
    slack = var["bound"] * (1.0 + 4.0 * np.where(est > 0, se / np.where(est > 0, est, 1.0), 0.0))
    checks.append(_row("window_variance", float((est / slack).max()), 1.0,
                       bound=var["bound"], estimates=var["estimates"],
                       stderrs=var["stderrs"], times=var["times"],
                       replicas=replicas))

    w = oracle.wasserstein_metric_check(3, 60, seed=7)
    checks.append(_row("transport_metric_axioms",
                       max(w["max_identity_gap"], w["max_symmetry_gap"],
                           w["max_triangle_excess"]),
                       1e-12, triples=w["triples"]))

    lat6 = TorusLattice(1, 6)
    sup = oracle.superadditivity_check(
        exact_state_distribution(MarkovChain1d(_PINNED_CHAIN), lat6),
        exact_state_distribution(Bernoulli(0.5), lat6), 6)
    checks.append(_row("transport_superadditivity",
                       max(sup["max_split_excess"], sup["max_doubling_excess"]),
                       1e-12))

    worst_sum = -np.inf
    for mu in (Bernoulli(0.3), block_xor(1, 0.3), MarkovChain1d(_PINNED_CHAIN)):
        diff = DiffLawSpec(mu, mu.density())
        a, b, sigma = mu.correlation_sum(), diff.correlation_sum(), diff.sigma
        worst_sum = max(worst_sum, abs(b - (a + sigma)), b - 2.0 * a)
    checks.append(_row("correlation_sums", worst_sum, 1e-10))

    checks.append(_mean_discrepancy_monotone([0.0, 0.5, 1.0, 2.0, 4.0]))

    failures = [c["check"] for c in checks if not c["pass"]]
    _write_json(os.path.join(args.out, "validate.json"), {
        "config": resolved,
        "config_sha256": digest,
        "checks": checks,
        "failures": failures,
        "pass": not failures,
    })
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['check']:34s} "
              f"statistic {c['statistic']:.3e}  tolerance {c['tolerance']:.0e}")
    print(f"validate: {len(checks) - len(failures)}/{len(checks)} checks passed")
    return EXIT_CHECK_FAILED if failures else EXIT_OK


# ---------------------------------------------------------------------------
# simulate


_SNAPSHOT_KINDS = {"sep": "occupancy", "annihilation": "signed",
                   "free": "two_species"}


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    _check_keys(cfg, {"process", "dimension", "side", "measure", "times"},
                {"epsilon", "rho", "replicas", "seed"}, "simulate")
    process = cfg["process"]
    if process not in dynamics.PROCESS_NAMES:
        raise ValueError(f"unknown process {process!r}")
    dim = _positive_int(cfg["dimension"], "dimension")
    times = _times(cfg["times"])
    eps = float(cfg.get("epsilon", dynamics.DEFAULT_LIGHT_CONE_EPS))
    side = _resolve_side(cfg["side"], times, eps)
    lattice = TorusLattice(dim, side)
    mu = parse_measure(cfg["measure"], dim)
    if process == "sep":
        if "rho" in cfg:
            raise ValueError("sep starts from the measure itself; drop 'rho'")
        rho = None
    else:
        if "rho" not in cfg:
            raise ValueError(f"{process} needs 'rho' for the reference field")
        rho = float(cfg["rho"])
        diff = DiffLawSpec(mu, rho)
    replicas = _positive_int(cfg.get("replicas", 1), "replicas")
    seed = _resolve_seed(cfg, args)
    horizon = times[-1] if times[-1] > 0 else 1.0

    resolved = {
        "subcommand": "simulate",
        "process": process,
        "dimension": dim,
        "side": side,
        "epsilon": eps,
        "measure": measure_to_dict(mu),
        "rho": rho,
        "times": times,
        "replicas": replicas,
        "seed": seed,
    }
    digest = config_digest(resolved)

    if process == "coupled":
        paths = {"eta": os.path.join(args.out, "simulate_eta.bin"),
                 "zeta": os.path.join(args.out, "simulate_zeta.bin")}
        handles = {k: open(p, "wb") for k, p in paths.items()}
        for fh in handles.values():
            dynamics.write_snapshot_header(fh, lattice, "occupancy")
    else:
        paths = {"states": os.path.join(args.out, "simulate_states.bin")}
        handles = {"states": open(paths["states"], "wb")}
        dynamics.write_snapshot_header(handles["states"], lattice,
                                       _SNAPSHOT_KINDS[process])
    try:
        for r in range(replicas):
            rng = replica_rng(seed, r)
            if process == "sep":
                init = mu._sample(lattice, rng)
            elif process == "annihilation":
                init = diff._sample(lattice, rng)
            elif process == "free":
                init = TwoSpeciesConfig(lattice, diff._sample(lattice, rng).values.copy())
            else:
                eta = mu._sample(lattice, rng)
                zeta = Bernoulli(rho)._sample(lattice, rng)
                init = (eta, zeta)
            kseed = int(rng.integers(1, 2**63))
            traj = dynamics.gillespie(process, init, horizon, times, seed=kseed)
            for t, state in zip(traj.times, traj.states):
                if process == "coupled":
                    dynamics.append_snapshot(handles["eta"], r, t, state[0].values)
                    dynamics.append_snapshot(handles["zeta"], r, t, state[1].values)
                else:
                    dynamics.append_snapshot(handles["states"], r, t, state.values)
    finally:
        for fh in handles.values():
            fh.close()

    files = [{"name": os.path.basename(p), "role": role,
              "sha256": _sha256_file(p)} for role, p in sorted(paths.items())]
    _write_json(os.path.join(args.out, "simulate.json"), {
        "config": resolved,
        "config_sha256": digest,
        "files": files,
        "snapshots_per_file": replicas * len(times),
    })
    names = ", ".join(f["name"] for f in files)
    print(f"simulate: {replicas} replica(s) x {len(times)} time(s) -> {names}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle-compare


def cmd_oracle_compare(args) -> int:
    cfg = _load_config(args, default={})
    _check_keys(cfg, set(),
                {"process", "dimension", "side", "t", "replicas", "engine",
                 "seed"}, "oracle-compare")
    process = cfg.get("process", "all")
    if process != "all" and process not in dynamics.PROCESS_NAMES:
        raise ValueError(f"unknown process {process!r}")
    dim = _positive_int(cfg.get("dimension", 1), "dimension")
    side = _positive_int(cfg.get("side", 3), "side")
    t = float(cfg.get("t", 1.0))
    replicas = _positive_int(cfg.get("replicas", 20_000), "replicas")
    engine = cfg.get("engine", "both")
    if engine != "both":
        engine = metrics.canonical_engine(engine)
    seed = _resolve_seed(cfg, args, default=424242)

    resolved = {"subcommand": "oracle-compare", "process": process,
                "dimension": dim, "side": side, "t": t, "replicas": replicas,
                "engine": engine, "seed": seed}
    digest = config_digest(resolved)

    lattice = TorusLattice(dim, side)
    processes = list(dynamics.PROCESS_NAMES) if process == "all" else [process]
    engines = list(metrics.ENGINES) if engine == "both" else [engine]
    rows = []
    for p in processes:
        for e in engines:
            rows.append(metrics.state_distribution_comparison(
                p, lattice, t, replicas, seed, engine=e))

    ok = all(r["pass"] for r in rows)
    _write_json(os.path.join(args.out, "oracle_compare.json"), {
        "config": resolved,
        "config_sha256": digest,
        "comparisons": rows,
        "pass": ok,
    })
    for r in rows:
        print(f"{'PASS' if r['pass'] else 'FAIL'}  {r['process']:13s} "
              f"{r['engine']:14s} max |emp - exact| {r['max_abs_error']:.2e}  "
              f"excess over band {r['max_excess']:+.2e}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sep-ergo",
        description="Simulation and exact-oracle validation of the symmetric "
                    "exclusion process and its annihilating two-species coupling.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    specs = {
        "decay": (cmd_decay, "estimate the discrepancy decay curve and exponent"),
        "validate": (cmd_validate, "run the pinned validation suite"),
        "simulate": (cmd_simulate, "write snapshot files for one process"),
        "oracle-compare": (cmd_oracle_compare,
                           "check both engines against exact small-torus state laws"),
    }
    for name, (fn, help_text) in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed; overrides the config")
        p.add_argument("--workers", type=int,
                       help="worker threads for replica batches (results do "
                            "not depend on this)")
        p.add_argument("--out", default=".", help="output directory")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        os.makedirs(args.out, exist_ok=True)
        return args.handler(args)
    except ResourceLimitError as err:
        print(f"resource limit: {err}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ValueError, KeyError, TypeError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
