"""Initial-measure families with exact correlation functionals.

Three translation-invariant families ship:

* ``Bernoulli(rho)``: iid occupancy.
* ``BlockFactor``: eta_x = f(U restricted to the window x + [-r, r]^d) for an
  iid Bernoulli(p) driving field U and a truth table f.  Covariances vanish
  beyond sup-norm distance 2r and are computed by exact enumeration of the
  union of the two windows.
* ``MarkovChain1d``: the stationary two-state chain read around the ring
  (exact circular law, sampled by bridge conditioning through powers of P).

``correlation_sum`` is the summed absolute covariance of the field; for the
difference law (spec minus an independent Bernoulli field at the same
density) ``correlation_sum`` adds the on-site term of the signed field, which
is twice sigma = rho(1-rho).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import (OccupancyConfig, ResourceLimitError, SignedConfig,
                   TorusLattice, make_rng)
from .oracle import Distribution

DENSITY_MATCH_TOL = 1e-12
GEOMETRIC_TAIL_RTOL = 1e-12
_TABLE_CAP = 2**20


def _popcounts(n_bits: int) -> np.ndarray:
    table = np.zeros(1 << n_bits, dtype=np.int64)
    for j in range(n_bits):
        table[(np.arange(1 << n_bits) >> j) & 1 == 1] += 1
    return table


def _offset_tuple(offset, dim: int) -> tuple:
    if np.isscalar(offset):
        offset = (int(offset),)
    off = tuple(int(o) for o in offset)
    if len(off) != dim:
        raise ValueError(f"offset must have {dim} components, got {off}")
    return off


@dataclass(frozen=True)
class Bernoulli:
    """iid occupancy at density rho."""

    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"density must lie in [0, 1], got {self.rho}")

    @property
    def dim(self):
        return None  # any dimension

    def density(self) -> float:
        return self.rho

    def covariance(self, offset) -> float:
        off = np.atleast_1d(np.asarray(offset))
        return self.rho * (1.0 - self.rho) if not off.any() else 0.0

    def correlation_sum(self) -> float:
        return self.rho * (1.0 - self.rho)

    def sample(self, lattice: TorusLattice, seed) -> OccupancyConfig:
        return self._sample(lattice, make_rng(seed))

    def _sample(self, lattice: TorusLattice, rng) -> OccupancyConfig:
        return OccupancyConfig(lattice, rng.random(lattice.n_sites) < self.rho)


@dataclass(frozen=True)
class BlockFactor:
    """eta_x = table[window bits], window = x + [-reach, reach]^dim.

    Window cells are ordered lexicographically over their offsets; cell j
    contributes bit j of the table index.
    """

    dim: int
    reach: int
    table: tuple
    p: float

    def __post_init__(self):
        if self.dim < 1 or self.reach < 1:
            raise ValueError("need dim >= 1 and reach >= 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"driving density must lie in [0, 1], got {self.p}")
        w = self.window_size
        if 2**w > _TABLE_CAP:
            raise ResourceLimitError(f"window of {w} cells is beyond the table cap")
        if len(self.table) != 2**w:
            raise ValueError(f"table must have 2**{w} entries, got {len(self.table)}")
        if any(v not in (0, 1) for v in self.table):
            raise ValueError("table entries must be 0 or 1")

    @property
    def window_size(self) -> int:
        return (2 * self.reach + 1) ** self.dim

    @property
    def offsets(self) -> list[tuple]:
        span = range(-self.reach, self.reach + 1)
        return list(itertools.product(span, repeat=self.dim))

    @classmethod
    def from_function(cls, dim: int, reach: int, p: float, fn) -> "BlockFactor":
        """Build the table from fn(window) with window a dict offset -> bit."""
        span = range(-reach, reach + 1)
        offsets = list(itertools.product(span, repeat=dim))
        w = len(offsets)
        table = []
        for idx in range(2**w):
            window = {off: (idx >> j) & 1 for j, off in enumerate(offsets)}
            bit = int(fn(window))
            if bit not in (0, 1):
                raise ValueError("factor must return 0 or 1")
            table.append(bit)
        return cls(dim, reach, tuple(table), p)

    def density(self) -> float:
        w = self.window_size
        probs = self._assignment_probs(w)
        return float(probs @ np.asarray(self.table, dtype=np.float64))

    def _assignment_probs(self, n_bits: int) -> np.ndarray:
        k = _popcounts(n_bits)
        return self.p**k * (1.0 - self.p) ** (n_bits - k)

    def covariance(self, offset) -> float:
        off = _offset_tuple(offset, self.dim)
        rho = self.density()
        if all(o == 0 for o in off):
            return rho * (1.0 - rho)
        if max(abs(o) for o in off) > 2 * self.reach:
            return 0.0
        cells_a = self.offsets
        cells_b = [tuple(np.add(off, o)) for o in self.offsets]
        union = sorted(set(cells_a) | set(cells_b))
        pos = {c: j for j, c in enumerate(union)}
        m = len(union)
        assign = np.arange(1 << m, dtype=np.int64)
        idx_a = np.zeros_like(assign)
        idx_b = np.zeros_like(assign)
        for j, c in enumerate(cells_a):
            idx_a |= ((assign >> pos[c]) & 1) << j
        for j, c in enumerate(cells_b):
            idx_b |= ((assign >> pos[c]) & 1) << j
        table = np.asarray(self.table, dtype=np.float64)
        probs = self._assignment_probs(m)
        joint = float(probs @ (table[idx_a] * table[idx_b]))
        return joint - rho * rho

    def correlation_sum(self) -> float:
        span = range(-2 * self.reach, 2 * self.reach + 1)
        return float(sum(abs(self.covariance(off))
                         for off in itertools.product(span, repeat=self.dim)))

    def sample(self, lattice: TorusLattice, seed) -> OccupancyConfig:
        return self._sample(lattice, make_rng(seed))

    def _sample(self, lattice: TorusLattice, rng) -> OccupancyConfig:
        if lattice.dim != self.dim:
            raise ValueError(f"spec is {self.dim}-dimensional, lattice is {lattice.dim}")
        drive = (rng.random(lattice.n_sites) < self.p).astype(np.int64)
        sites = np.arange(lattice.n_sites)
        index = np.zeros(lattice.n_sites, dtype=np.int64)
        for j, off in enumerate(self.offsets):
            index |= drive[lattice.translate(sites, off)] << j
        table = np.asarray(self.table, dtype=np.int8)
        return OccupancyConfig(lattice, table[index])


def block_xor(dim: int, p: float, reach: int = 1) -> BlockFactor:
    """XOR of the driving bits at offsets 0 and +e1."""
    e1 = (1,) + (0,) * (dim - 1)
    origin = (0,) * dim
    return BlockFactor.from_function(dim, reach, p,
                                     lambda w: w[origin] ^ w[e1])


@dataclass(frozen=True)
class MarkovChain1d:
    """Stationary two-state chain read around a one-dimensional ring."""

    matrix: tuple

    def __post_init__(self):
        P = np.asarray(self.matrix, dtype=np.float64)
        if P.shape != (2, 2) or (P < 0).any():
            raise ValueError("need a nonnegative 2x2 matrix")
        if np.abs(P.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("rows must sum to 1")
        a, b = P[0, 1], P[1, 0]
        if a <= 0.0 or b <= 0.0:
            raise ValueError("both off-diagonal entries must be positive (irreducible)")
        if a + b >= 2.0:
            raise ValueError("the flip chain is periodic; need a + b < 2")

    @property
    def dim(self):
        return 1

    def _P(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=np.float64)

    def density(self) -> float:
        P = self._P()
        a, b = P[0, 1], P[1, 0]
        return a / (a + b)

    def covariance(self, offset) -> float:
        (k,) = _offset_tuple(offset, 1)
        pi1 = self.density()
        Pk = np.linalg.matrix_power(self._P(), abs(k))
        return pi1 * (Pk[1, 1] - pi1)

    def correlation_sum(self) -> float:
        # |cov(k)| = pi0 pi1 |lam|^k exactly; stop on the geometric tail bound
        P = self._P()
        lam = 1.0 - P[0, 1] - P[1, 0]
        acc = abs(self.covariance(0))
        if lam == 0.0:
            return acc
        k = 1
        while True:
            term = 2.0 * abs(self.covariance(k))
            acc += term
            tail = term * abs(lam) / (1.0 - abs(lam))
            if tail < GEOMETRIC_TAIL_RTOL * acc:
                return acc
            k += 1

    def sample(self, lattice: TorusLattice, seed) -> OccupancyConfig:
        return self._sample(lattice, make_rng(seed))

    def _sample(self, lattice: TorusLattice, rng) -> OccupancyConfig:
        if lattice.dim != 1:
            raise ValueError("the chain spec is one-dimensional")
        L = lattice.side
        P = self._P()
        powers = [np.eye(2)]
        for _ in range(L):
            powers.append(powers[-1] @ P)
        out = np.empty(L, dtype=np.int8)
        w = np.array([powers[L][0, 0], powers[L][1, 1]])
        u = rng.random(L)
        out[0] = 1 if u[0] * w.sum() >= w[0] else 0
        # bridge: condition each step on returning to out[0] after the wrap
        for i in range(1, L):
            prev = int(out[i - 1])
            rem = L - i
            p0 = P[prev, 0] * powers[rem][0, int(out[0])]
            p1 = P[prev, 1] * powers[rem][1, int(out[0])]
            out[i] = 1 if u[i] * (p0 + p1) >= p0 else 0
        return OccupancyConfig(lattice, out)


MeasureSpec = Bernoulli | BlockFactor | MarkovChain1d


def _offsite_abs_covariance_sum(spec) -> float:
    if isinstance(spec, Bernoulli):
        return 0.0
    if isinstance(spec, BlockFactor):
        span = range(-2 * spec.reach, 2 * spec.reach + 1)
        return float(sum(abs(spec.covariance(off))
                         for off in itertools.product(span, repeat=spec.dim)
                         if any(o != 0 for o in off)))
    if isinstance(spec, MarkovChain1d):
        P = spec._P()
        lam = 1.0 - P[0, 1] - P[1, 0]
        if lam == 0.0:
            return 0.0
        acc = 0.0
        k = 1
        while True:
            term = 2.0 * abs(spec.covariance(k))
            acc += term
            if term * abs(lam) / (1.0 - abs(lam)) < GEOMETRIC_TAIL_RTOL * max(acc, 1e-300):
                return acc
            k += 1
    raise TypeError(f"unknown measure spec {type(spec).__name__}")


@dataclass(frozen=True)
class DiffLawSpec:
    """Law of eta - eta~ with eta ~ mu and eta~ an independent Bernoulli(rho).

    rho must match the density of mu (the coupling argument needs equal
    densities); a mismatch is rejected at construction.
    """

    mu: MeasureSpec
    rho: float

    def __post_init__(self):
        gap = abs(self.mu.density() - self.rho)
        if gap > DENSITY_MATCH_TOL:
            raise ValueError(
                f"density(mu) = {self.mu.density()!r} does not match rho = {self.rho!r}"
            )

    @property
    def sigma(self) -> float:
        """Probability that a site holds a (signed) particle: rho(1-rho) each sign."""
        return self.rho * (1.0 - self.rho)

    def sample(self, lattice: TorusLattice, seed) -> SignedConfig:
        return self._sample(lattice, make_rng(seed))

    def _sample(self, lattice: TorusLattice, rng) -> SignedConfig:
        eta = self.mu._sample(lattice, rng)
        tilde = Bernoulli(self.rho)._sample(lattice, rng)
        return SignedConfig(lattice, eta.values - tilde.values)

    def correlation_sum(self) -> float:
        """Summed absolute signed-pair correlations of the difference field.

        The on-site term is 2 sigma; independence of the Bernoulli field makes
        every off-site term equal to the corresponding |cov| of mu.
        """
        return 2.0 * self.sigma + _offsite_abs_covariance_sum(self.mu)


# ---------------------------------------------------------------------------
# exact finite-volume laws (duality and oracle comparisons)


def exact_state_distribution(spec: MeasureSpec, lattice: TorusLattice) -> Distribution:
    """Exact law of the measure on a small torus, as a vector over 2^n states."""
    n = lattice.n_sites
    if n > 20:
        raise ResourceLimitError(f"exact law capped at 20 sites, got {n}")
    S = 1 << n
    bits = ((np.arange(S, dtype=np.int64)[:, None] >> np.arange(n)[None, :]) & 1)
    if isinstance(spec, Bernoulli):
        k = bits.sum(axis=1)
        probs = spec.rho**k * (1.0 - spec.rho) ** (n - k)
        return Distribution(probs)
    if isinstance(spec, BlockFactor):
        if lattice.dim != spec.dim:
            raise ValueError("lattice dimension does not match the measure")
        sites = np.arange(n)
        eta_bits = np.zeros((S, n), dtype=np.int64)
        table = np.asarray(spec.table, dtype=np.int64)
        for x in range(n):
            idx = np.zeros(S, dtype=np.int64)
            for j, off in enumerate(spec.offsets):
                src = int(lattice.translate(np.array([x]), off)[0])
                idx |= bits[:, src] << j
            eta_bits[:, x] = table[idx]
        k = bits.sum(axis=1)
        drive_probs = spec.p**k * (1.0 - spec.p) ** (n - k)
        state = (eta_bits << np.arange(n)[None, :]).sum(axis=1)
        probs = np.bincount(state, weights=drive_probs, minlength=S)
        return Distribution(probs)
    if isinstance(spec, MarkovChain1d):
        if lattice.dim != 1:
            raise ValueError("the chain spec is one-dimensional")
        P = spec._P()
        probs = np.ones(S)
        for i in range(n):
            probs *= P[bits[:, i], bits[:, (i + 1) % n]]
        return Distribution(probs / probs.sum())
    raise TypeError(f"unknown measure spec {type(spec).__name__}")


def pair_occupation_matrix(spec: MeasureSpec, lattice: TorusLattice) -> np.ndarray:
    """M[u, v] = mu(eta_u = 1, eta_v = 1), exact, from the finite-volume law."""
    dist = exact_state_distribution(spec, lattice)
    n = lattice.n_sites
    S = 1 << n
    bits = ((np.arange(S, dtype=np.int64)[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
    return bits.T @ (dist.values[:, None] * bits)


def exact_difference_distribution(diff: DiffLawSpec,
                                  lattice: TorusLattice) -> Distribution:
    """Exact law of eta - eta~ over the 3^n signed states of a small torus.

    State codes follow the annihilation oracle (digit i = value at site i
    plus one, base 3).  The difference code splits into independent halves,
    so the joint enumeration is an outer sum of two per-word code vectors.
    """
    n = lattice.n_sites
    if n > 10:
        raise ResourceLimitError(f"exact difference law capped at 10 sites, got {n}")
    mu_dist = exact_state_distribution(diff.mu, lattice).values
    bern = exact_state_distribution(Bernoulli(diff.rho), lattice).values
    S = 1 << n
    bits = ((np.arange(S, dtype=np.int64)[:, None] >> np.arange(n)[None, :]) & 1)
    pow3 = 3 ** np.arange(n, dtype=np.int64)
    fe = bits @ pow3
    gz = (1 - bits) @ pow3
    codes = (fe[:, None] + gz[None, :]).ravel()
    weights = (mu_dist[:, None] * bern[None, :]).ravel()
    return Distribution(np.bincount(codes, weights=weights, minlength=3**n))


# ---------------------------------------------------------------------------
# config-dict parsing (CLI surface)


def parse_measure(cfg: dict, dim: int) -> MeasureSpec:
    """Build a spec from a config mapping; unknown kinds or keys are errors."""
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValueError("measure config must be a mapping with a 'kind'")
    kind = cfg["kind"]
    extra = set(cfg) - {"kind"}
    if kind == "bernoulli":
        if extra != {"rho"}:
            raise ValueError(f"bernoulli takes exactly 'rho', got {sorted(extra)}")
        return Bernoulli(float(cfg["rho"]))
    if kind == "block_xor":
        allowed = {"p", "range"}
        if not extra <= allowed or "p" not in extra:
            raise ValueError(f"block_xor takes 'p' and optional 'range', got {sorted(extra)}")
        return block_xor(dim, float(cfg["p"]), int(cfg.get("range", 1)))
    if kind == "block_factor":
        if extra != {"dim", "reach", "p", "table"}:
            raise ValueError(
                f"block_factor takes 'dim', 'reach', 'p', 'table', got {sorted(extra)}")
        if int(cfg["dim"]) != dim:
            raise ValueError(
                f"block_factor dim {cfg['dim']} does not match the experiment dim {dim}")
        return BlockFactor(int(cfg["dim"]), int(cfg["reach"]),
                           tuple(int(v) for v in cfg["table"]), float(cfg["p"]))
    if kind == "markov_chain":
        if extra != {"matrix"}:
            raise ValueError(f"markov_chain takes exactly 'matrix', got {sorted(extra)}")
        rows = cfg["matrix"]
        return MarkovChain1d(tuple(tuple(float(v) for v in row) for row in rows))
    raise ValueError(f"unknown measure kind {kind!r}")


def measure_to_dict(spec: MeasureSpec) -> dict:
    if isinstance(spec, Bernoulli):
        return {"kind": "bernoulli", "rho": spec.rho}
    if isinstance(spec, BlockFactor):
        return {"kind": "block_factor", "dim": spec.dim, "reach": spec.reach,
                "p": spec.p, "table": list(spec.table)}
    if isinstance(spec, MarkovChain1d):
        return {"kind": "markov_chain", "matrix": [list(r) for r in spec.matrix]}
    raise TypeError(f"unknown measure spec {type(spec).__name__}")
