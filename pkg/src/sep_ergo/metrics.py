"""Monte Carlo estimators and the quantitative decay checks.

The central estimate is the discrepancy density E|xi_0(t)| of the annihilating
difference process started from a matched-density difference law.  By the
coupling argument this bounds the transport distance between the evolved
measure and the stationary product law from above, and it should decay like
t^{-gamma(d)} with gamma = d/4 below four dimensions.

Estimators average over all torus sites (translation invariance) and report
replica-to-replica standard errors only; per-site errors would be correlated.
Replica r draws everything from `replica_rng(master, r)`, so estimates are a
pure function of (config, master seed) regardless of worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BOTH, OccupancyConfig, ResourceLimitError, SignedConfig, TorusLattice,
    TwoSpeciesConfig, replica_rng,
)
from .ensembles import (
    DiffLawSpec, MeasureSpec, exact_state_distribution, measure_to_dict,
    pair_occupation_matrix,
)
from . import dynamics, oracle

ENGINES = ("gillespie", "stirring+thin")

ORACLE_SITE_CAP = 12


def default_workers() -> int:
    env = os.environ.get("SEP_ERGO_WORKERS", "")
    if env.strip():
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def theoretical_exponent(dim: int) -> float:
    """Decay exponent gamma(d): d/4 up to dimension four, then 1."""
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dimension must be a positive integer, got {dim!r}")
    return dim / 4.0 if dim <= 4 else 1.0


def canonical_engine(name: str) -> str:
    if name == "stirring":
        return "stirring+thin"
    if name not in ENGINES:
        raise ValueError(f"unknown engine {name!r}, expected one of {ENGINES}")
    return name


@dataclass
class EstimateSeries:
    """Point estimates with replica standard errors on a fixed time grid."""

    kind: str
    times: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    replicas: int
    master_seed: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        self.estimates = np.asarray(self.estimates, dtype=np.float64).reshape(-1)
        self.stderrs = np.asarray(self.stderrs, dtype=np.float64).reshape(-1)
        if not (self.times.size == self.estimates.size == self.stderrs.size):
            raise ValueError("times, estimates and stderrs must align")
        if self.times.size == 0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.stderrs < 0):
            raise ValueError("standard errors cannot be negative")
        if np.any(self.estimates < 0) or np.any(self.estimates > 1):
            raise ValueError("density estimates must lie in [0, 1]")
        if self.replicas < 2:
            raise ValueError("need at least two replicas")

    def envelope_ratio(self) -> np.ndarray:
        """estimate * t^gamma / sqrt(A); the bounded column of the decay law."""
        gamma = self.metadata["gamma"]
        a = self.metadata["correlation_sum_a"]
        if a <= 0:
            raise ValueError("the envelope needs a positive correlation sum")
        return self.estimates * self.times**gamma / np.sqrt(a)

    def to_json_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "times": self.times.tolist(),
            "estimates": self.estimates.tolist(),
            "stderrs": self.stderrs.tolist(),
            "replicas": self.replicas,
            "master_seed": self.master_seed,
            "metadata": dict(self.metadata),
        }
        if "correlation_sum_a" in self.metadata:
            out["ratio_to_envelope"] = self.envelope_ratio().tolist()
        return out

    def to_csv_rows(self) -> list:
        """Rows under the fixed header time,estimate,stderr,replicas,ratio_to_envelope."""
        ratio = (self.envelope_ratio() if "correlation_sum_a" in self.metadata
                 else np.full(self.times.size, np.nan))
        rows = []
        for i in range(self.times.size):
            r = "" if np.isnan(ratio[i]) else repr(float(ratio[i]))
            rows.append((repr(float(self.times[i])), repr(float(self.estimates[i])),
                         repr(float(self.stderrs[i])), str(self.replicas), r))
        return rows


def _replica_matrix(worker, replicas: int, workers) -> np.ndarray:
    """Evaluate worker(r) for each replica; stack rows by replica index.

    Indexing by replica keeps the reduction independent of scheduling.
    """
    n_workers = workers if workers else default_workers()
    if n_workers <= 1 or replicas <= 1:
        rows = [worker(r) for r in range(replicas)]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(worker, range(replicas)))
    return np.stack(rows)


def estimate_discrepancy_density(diff: DiffLawSpec, lattice: TorusLattice,
                                 times, replicas: int, seed: int,
                                 engine: str = "gillespie",
                                 workers=None) -> EstimateSeries:
    """E|xi_0(t)| of the annihilating difference process, per observation time.

    The caller sizes the torus (the light-cone rule, unless pinned); both
    engines realize the same law, as independent implementations.
    """
    engine = canonical_engine(engine)
    if replicas < 2:
        raise ValueError("need at least two replicas for a variance estimate")
    obs = np.asarray(times, dtype=np.float64).reshape(-1)
    if obs.size == 0 or np.any(np.diff(obs) <= 0) or obs[0] < 0:
        raise ValueError("times must be nonnegative and strictly increasing")
    horizon = float(obs[-1]) if obs[-1] > 0 else 1.0

    def one(r: int) -> np.ndarray:
        rng = replica_rng(seed, r)
        xi0 = diff._sample(lattice, rng)
        kseed = int(rng.integers(1, 2**63))
        if engine == "gillespie":
            traj = dynamics.gillespie("annihilation", xi0, horizon, obs, seed=kseed)
            snaps = np.stack([s.values for s in traj.states])
        else:
            log = dynamics.gen_stirring(lattice, horizon, kseed, channels=2)
            snaps = dynamics.thin_snapshots(xi0, log, obs)
        return np.count_nonzero(snaps, axis=1) / lattice.n_sites

    per_rep = _replica_matrix(one, replicas, workers)
    return EstimateSeries(
        kind="discrepancy_density",
        times=obs,
        estimates=per_rep.mean(axis=0),
        stderrs=per_rep.std(axis=0, ddof=1) / np.sqrt(replicas),
        replicas=replicas,
        master_seed=int(seed),
        metadata={
            "dim": lattice.dim,
            "side": lattice.side,
            "measure": measure_to_dict(diff.mu),
            "rho": diff.rho,
            "engine": engine,
        },
    )


def dbar_bound_series(diff: DiffLawSpec, lattice: TorusLattice, times,
                      replicas: int, seed: int, engine: str = "gillespie",
                      workers=None) -> EstimateSeries:
    """The discrepancy series labeled as the transport-distance upper bound.

    Identical numbers; the metadata adds both correlation sums and the decay
    exponent so the envelope ratio estimate * t^gamma / sqrt(A) can be
    reported (the proportionality constant is not pinned by the theory, so
    only boundedness of the ratio is meaningful).
    """
    series = estimate_discrepancy_density(diff, lattice, times, replicas,
                                          seed, engine, workers)
    series.kind = "dbar_upper_bound"
    series.metadata.update({
        "gamma": theoretical_exponent(lattice.dim),
        "correlation_sum_a": diff.mu.correlation_sum(),
        "correlation_sum_b": diff.correlation_sum(),
    })
    return series


@dataclass(frozen=True)
class DecayFit:
    """OLS fit of log(estimate) on log(time)."""

    slope: float
    half_width: float  # 2 sigma by the delta method
    intercept: float
    used_times: tuple
    dropped_times: tuple


def fit_decay_exponent(series: EstimateSeries, window=None) -> DecayFit:
    """Least-squares decay exponent over a time window.

    Points with nonpositive estimates (or t = 0) cannot enter the log-log
    fit; they are dropped and recorded.  The half-width is two standard
    errors of the slope, propagating the series stderrs by the delta method
    (var log e = (stderr/e)^2), so it reflects Monte Carlo error only.
    """
    lo, hi = (-np.inf, np.inf) if window is None else (float(window[0]), float(window[1]))
    inside = (series.times >= lo) & (series.times <= hi)
    usable = inside & (series.estimates > 0) & (series.times > 0)
    dropped = tuple(float(t) for t in series.times[inside & ~usable])
    if usable.sum() < 4:
        raise ValueError(f"need at least 4 usable points, got {int(usable.sum())}")
    t = np.log(series.times[usable])
    y = np.log(series.estimates[usable])
    var_y = (series.stderrs[usable] / series.estimates[usable]) ** 2
    tc = t - t.mean()
    sxx = float(tc @ tc)
    slope = float(tc @ y / sxx)
    intercept = float(y.mean() - slope * t.mean())
    slope_var = float((tc**2) @ var_y) / sxx**2
    return DecayFit(
        slope=slope,
        half_width=2.0 * float(np.sqrt(slope_var)),
        intercept=intercept,
        used_times=tuple(float(v) for v in series.times[usable]),
        dropped_times=dropped,
    )


def _window_mean_square(net: np.ndarray, lattice: TorusLattice, box: int) -> float:
    """Mean over all placements of the squared window sum of a site field."""
    arr = net.reshape(lattice.shape).astype(np.int64)
    for ax in range(lattice.dim):
        arr = sum(np.roll(arr, -k, axis=ax) for k in range(box))
    return float((arr.astype(np.float64) ** 2).mean())


def variance_bound_check(diff: DiffLawSpec, box: int, times, replicas: int,
                         seed: int, lattice: TorusLattice,
                         workers=None) -> dict:
    """Window variance of the free two-species process against 2 |window| B.

    The signed window count N_+ - N_- is computed from the stirring
    realization of the free dynamics, squared, and averaged over every
    window placement and over replicas.  Pass per time means
    estimate <= bound * (1 + 4 * relative stderr).
    """
    if box < 1 or box > lattice.side:
        raise ValueError(f"window side must lie in [1, {lattice.side}]")
    obs = np.asarray(times, dtype=np.float64).reshape(-1)
    if obs.size == 0 or np.any(np.diff(obs) <= 0) or obs[0] < 0:
        raise ValueError("times must be nonnegative and strictly increasing")
    if replicas < 2:
        raise ValueError("need at least two replicas for a variance estimate")
    horizon = float(obs[-1]) if obs[-1] > 0 else 1.0
    window_sites = box**lattice.dim
    bound = 2.0 * window_sites * diff.correlation_sum()

    def one(r: int) -> np.ndarray:
        rng = replica_rng(seed, r)
        xi0 = diff._sample(lattice, rng)
        init = TwoSpeciesConfig(lattice, xi0.values.copy())
        log = dynamics.gen_stirring(lattice, horizon, int(rng.integers(1, 2**63)),
                                    channels=2)
        out = np.empty(obs.size)
        for j, t in enumerate(obs):
            state = dynamics.realize_two_species_free(init, log, float(t))
            v = state.values
            net = np.where(v == BOTH, 0, v)
            out[j] = _window_mean_square(net, lattice, box)
        return out

    per_rep = _replica_matrix(one, replicas, workers)
    est = per_rep.mean(axis=0)
    se = per_rep.std(axis=0, ddof=1) / np.sqrt(replicas)
    with np.errstate(divide="ignore", invalid="ignore"):
        slack = np.where(est > 0, bound * (1.0 + 4.0 * se / np.where(est > 0, est, 1.0)),
                         bound)
    ok = est <= slack + 1e-12
    return {
        "check": "window_variance_bound",
        "box": int(box),
        "window_sites": int(window_sites),
        "times": obs.tolist(),
        "estimates": est.tolist(),
        "stderrs": se.tolist(),
        "bound": bound,
        "pass_per_time": [bool(b) for b in ok],
        "pass": bool(ok.all()),
    }


def compare_initial_state(process: str, lattice: TorusLattice):
    """Pinned low-occupancy initial data for oracle comparisons."""
    n = lattice.n_sites
    if process == "sep":
        v = np.zeros(n, dtype=np.int8)
        v[0] = 1
        return OccupancyConfig(lattice, v)
    if process == "annihilation":
        v = np.zeros(n, dtype=np.int8)
        v[0], v[1] = 1, -1
        return SignedConfig(lattice, v)
    if process == "free":
        v = np.zeros(n, dtype=np.int8)
        v[0], v[1] = -1, 1
        return TwoSpeciesConfig(lattice, v)
    if process == "coupled":
        e = np.zeros(n, dtype=np.int8)
        z = np.zeros(n, dtype=np.int8)
        e[0], z[1] = 1, 1
        return OccupancyConfig(lattice, e), OccupancyConfig(lattice, z)
    raise ValueError(f"unknown process {process!r}")


def state_distribution_comparison(process: str, lattice: TorusLattice,
                                  t: float, replicas: int, seed: int,
                                  engine: str = "gillespie") -> dict:
    """Empirical state law vs the exact evolved law, per state.

    Passes when every state's empirical frequency sits within four binomial
    standard errors of the exact probability (unreachable states must have
    frequency exactly zero).
    """
    engine = canonical_engine(engine)
    if replicas < 1:
        raise ValueError("need at least one replica")
    g = oracle.build_generator(process, lattice)
    init = compare_initial_state(process, lattice)
    if process == "coupled":
        s0 = g.encode(init[0].values, init[1].values)
    else:
        s0 = g.encode(init.values)
    exact = oracle.evolve_exact(g, oracle.point_distribution(g.n_states, s0), t).values

    counts = np.zeros(g.n_states, dtype=np.int64)
    obs = [t] if t > 0 else [0.0]
    horizon = t if t > 0 else 1.0
    for r in range(replicas):
        rng = replica_rng(seed, r)
        kseed = int(rng.integers(1, 2**63))
        if engine == "gillespie":
            final = dynamics.gillespie(process, init, horizon, obs, seed=kseed).states[0]
            if process == "coupled":
                code = g.encode(final[0].values, final[1].values)
            else:
                code = g.encode(final.values)
        else:
            channels = 1 if process == "sep" else 2
            log = dynamics.gen_stirring(lattice, horizon, kseed, channels=channels)
            if process == "sep":
                code = g.encode(dynamics.realize_sep(init, log, t).values)
            elif process == "annihilation":
                code = g.encode(dynamics.thin_snapshots(init, log, obs)[0])
            elif process == "free":
                code = g.encode(dynamics.realize_two_species_free(init, log, t).values)
            else:
                oe, oz = dynamics.coupled_snapshots(init[0], init[1], log, obs)
                code = g.encode(oe[0], oz[0])
        counts[code] += 1
    emp = counts / replicas
    band = 4.0 * np.sqrt(exact * (1.0 - exact) / replicas)
    excess = np.abs(emp - exact) - band
    return {
        "check": "state_distribution",
        "process": process,
        "engine": engine,
        "t": float(t),
        "replicas": int(replicas),
        "max_abs_error": float(np.abs(emp - exact).max()),
        "max_excess": float(excess.max()),
        "pass": bool(excess.max() <= 1e-12),
    }


def _minimal_offset(lattice: TorusLattice, u: int, v: int) -> tuple:
    cu, cv = lattice.coords(u), lattice.coords(v)
    half = lattice.side // 2
    return tuple(int(((b - a + half) % lattice.side) - half)
                 for a, b in zip(cu, cv))


def _mu_pair_probability(mu: MeasureSpec, lattice: TorusLattice,
                         u: int, v: int) -> float:
    """mu(eta_u = 1, eta_v = 1) from density and two-point covariance."""
    if u == v:
        return mu.density()
    return mu.density() ** 2 + mu.covariance(_minimal_offset(lattice, u, v))


def duality_check(mu: MeasureSpec, x: int, y: int, t: float,
                  lattice: TorusLattice, mode: str = "oracle",
                  replicas: int = 20_000, seed: int = 0) -> dict:
    """Two-point function of the evolved measure vs the two-marker dual.

    Oracle mode computes both sides exactly on lattices of at most
    ORACLE_SITE_CAP sites.  Monte Carlo mode estimates the left side by
    exclusion runs from mu and the right side by stirring markers started
    at (x, y), using the exact two-point values of mu at the markers'
    displacement; the report carries a joint standard error.
    """
    if x == y:
        raise ValueError("duality needs two distinct sites")
    n = lattice.n_sites
    if mode == "oracle":
        if n > ORACLE_SITE_CAP:
            raise ResourceLimitError(
                f"oracle duality capped at {ORACLE_SITE_CAP} sites, got {n}")
        g = oracle.build_generator("sep", lattice)
        dist0 = exact_state_distribution(mu, lattice)
        dist_t = oracle.evolve_exact(g, dist0, t)
        bits = ((np.arange(2**n, dtype=np.int64)[:, None] >> np.arange(n)[None, :]) & 1)
        occ = bits.astype(np.float64)
        lhs = float(dist_t.values @ (occ[:, x] * occ[:, y]))
        pair_dist, pairs = oracle.two_particle_exclusion(lattice, (x, y), t)
        m0 = pair_occupation_matrix(mu, lattice)
        rhs = float(pair_dist.values @ m0[pairs[:, 0], pairs[:, 1]])
        return {"check": "duality", "mode": "oracle", "t": float(t),
                "sites": [int(x), int(y)], "lhs": lhs, "rhs": rhs,
                "discrepancy": abs(lhs - rhs)}
    if mode != "monte_carlo":
        raise ValueError(f"mode must be 'oracle' or 'monte_carlo', got {mode!r}")
    if replicas < 2:
        raise ValueError("need at least two replicas")

    lhs_vals = np.empty(replicas)
    rhs_vals = np.empty(replicas)
    for r in range(replicas):
        rng = replica_rng(seed, r)
        eta0 = mu._sample(lattice, rng)
        kseed = int(rng.integers(1, 2**63))
        traj = dynamics.gillespie("sep", eta0, t if t > 0 else 1.0,
                                  [t] if t > 0 else [0.0], seed=kseed)
        ev = traj.states[0].values
        lhs_vals[r] = float(ev[x] * ev[y])
        log = dynamics.gen_stirring(lattice, t if t > 0 else 1.0,
                                    int(rng.integers(1, 2**63)), channels=1)
        content = dynamics.stirring_content(log, 0, float(t))
        pos = np.empty(n, dtype=np.int64)
        pos[content] = np.arange(n)
        rhs_vals[r] = _mu_pair_probability(mu, lattice, int(pos[x]), int(pos[y]))
    lhs, rhs = float(lhs_vals.mean()), float(rhs_vals.mean())
    se = float(np.hypot(lhs_vals.std(ddof=1), rhs_vals.std(ddof=1)) / np.sqrt(replicas))
    return {"check": "duality", "mode": "monte_carlo", "t": float(t),
            "sites": [int(x), int(y)], "lhs": lhs, "rhs": rhs,
            "discrepancy": abs(lhs - rhs), "stderr": se,
            "pass": abs(lhs - rhs) <= 4.0 * se}
