"""Torus geometry and the three site-configuration alphabets.

Everything downstream works on a finite d-dimensional periodic cubic lattice
with equal side L.  Sites are flat integers in [0, L**d), row-major over
coordinates.  Three kinds of site fields appear:

* occupancy fields with values {0, 1} (the exclusion process state),
* signed fields with values {-1, 0, +1} (the difference of two occupancies),
* two-species fields with values {-1, 0, +1, BOTH}, where BOTH marks a site
  holding one particle of each species at once.

Configs are value objects: transforms return new instances and the backing
arrays are marked read-only.
"""

from __future__ import annotations

import numpy as np

# Fourth symbol of the two-species alphabet: one particle of each species on
# the same site.  Kept as 2 so int8 arrays cover all alphabets.
BOTH = 2

CHANNEL_MINUS = 0
CHANNEL_PLUS = 1


class ResourceLimitError(RuntimeError):
    """An exact computation would exceed its documented size cap."""


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator stream for a seed; generators pass through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def replica_rng(master_seed: int, index: int) -> np.random.Generator:
    """Replica stream: Philox keyed by (master XOR replica index).

    Every draw a replica needs comes sequentially from this stream, so
    results are a pure function of (master seed, index) independent of
    worker count or scheduling.
    """
    key = np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF) ^ np.uint64(index)
    return np.random.Generator(np.random.Philox(key=key))


class TorusLattice:
    """Periodic cubic lattice in `dim` dimensions with side `side`.

    side >= 3 is required: on a 2-ring the two axis edges would join the same
    pair of sites and every edge rate would silently double.

    Unordered edges are indexed axis-major: edge k*n_sites + x joins x to its
    +e_k neighbor.  `neighbors[x, k]` is the +e_k neighbor for k < dim and the
    -e_k neighbor for k >= dim.
    """

    def __init__(self, dim: int, side: int):
        if dim < 1:
            raise ValueError(f"dimension must be >= 1, got {dim}")
        if side < 3:
            raise ValueError(f"side must be >= 3, got {side}")
        self.dim = dim
        self.side = side
        self.n_sites = side**dim
        self.n_edges = dim * self.n_sites
        self.shape = (side,) * dim

        sites = np.arange(self.n_sites)
        coords = np.stack(np.unravel_index(sites, self.shape), axis=1)
        nbrs = np.empty((self.n_sites, 2 * dim), dtype=np.int64)
        for k in range(dim):
            for sign, col in ((1, k), (-1, dim + k)):
                shifted = coords.copy()
                shifted[:, k] = (shifted[:, k] + sign) % side
                nbrs[:, col] = np.ravel_multi_index(shifted.T, self.shape)
        self._coords = coords
        self.neighbors = nbrs
        self.neighbors.setflags(write=False)

        # edge_sites[e] = (x, x + e_k) with e = k*n_sites + x
        ea = np.tile(sites, dim)
        eb = np.concatenate([nbrs[:, k] for k in range(dim)])
        self.edge_sites = np.stack([ea, eb], axis=1)
        self.edge_sites.setflags(write=False)
        # contiguous endpoint vectors, the layout the event kernels expect
        self.edge_a = np.ascontiguousarray(ea, dtype=np.int64)
        self.edge_b = np.ascontiguousarray(eb, dtype=np.int64)
        self.edge_a.setflags(write=False)
        self.edge_b.setflags(write=False)

        # edges incident on each site: the +e_k edge at x and the one at x-e_k
        inc = np.empty((self.n_sites, 2 * dim), dtype=np.int64)
        for k in range(dim):
            inc[:, 2 * k] = k * self.n_sites + sites
            inc[:, 2 * k + 1] = k * self.n_sites + nbrs[:, dim + k]
        self.incident_edges = inc
        self.incident_edges.setflags(write=False)

    def coords(self, sites):
        return self._coords[np.asarray(sites)]

    def site(self, coords) -> int:
        c = np.mod(np.asarray(coords), self.side)
        return int(np.ravel_multi_index(c, self.shape))

    def translate(self, sites, shift):
        """Shift site indices by a coordinate vector; a bijection on sites."""
        shift = np.asarray(shift)
        if shift.shape != (self.dim,):
            raise ValueError(f"shift must have {self.dim} components")
        c = (self._coords[np.asarray(sites)] + shift) % self.side
        return np.ravel_multi_index(np.moveaxis(c, -1, 0), self.shape)

    def box(self, origin, lengths) -> np.ndarray:
        """Site indices of the box origin + [0,lengths) (wrapped), row-major."""
        origin = np.asarray(origin)
        lengths = tuple(int(m) for m in np.atleast_1d(lengths))
        if origin.shape != (self.dim,) or len(lengths) != self.dim:
            raise ValueError("origin and lengths must match the dimension")
        if any(not 1 <= m <= self.side for m in lengths):
            raise ValueError("box lengths must lie in [1, side]")
        offs = np.stack(
            [g.ravel() for g in np.meshgrid(*[np.arange(m) for m in lengths], indexing="ij")],
            axis=1,
        )
        c = (origin + offs) % self.side
        return np.ravel_multi_index(c.T, self.shape)

    def same_geometry(self, other: "TorusLattice") -> bool:
        return self.dim == other.dim and self.side == other.side

    def __repr__(self):
        return f"TorusLattice(dim={self.dim}, side={self.side})"


class _SiteField:
    """Common machinery for the three config kinds."""

    kind = ""
    symbols: dict[int, str] = {}

    def __init__(self, lattice: TorusLattice, values):
        arr = np.array(values, dtype=np.int8).reshape(-1)
        if arr.shape != (lattice.n_sites,):
            raise ValueError(
                f"expected {lattice.n_sites} site values, got {arr.shape[0]}"
            )
        allowed = np.array(sorted(self.symbols), dtype=np.int8)
        if not np.isin(arr, allowed).all():
            bad = arr[~np.isin(arr, allowed)][0]
            raise ValueError(f"value {bad} not in the {self.kind} alphabet")
        arr.setflags(write=False)
        self.lattice = lattice
        self.values = arr

    def replace(self, values) -> "_SiteField":
        return type(self)(self.lattice, values)

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and self.lattice.same_geometry(other.lattice)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((type(self).__name__, self.values.tobytes()))

    def __repr__(self):
        body = "".join(self.symbols[int(v)] for v in self.values[:24])
        tail = "..." if self.lattice.n_sites > 24 else ""
        return f"{type(self).__name__}({body}{tail})"

    def to_text(self) -> str:
        """One-line header `d L kind`, then the symbol string, row-major."""
        body = "".join(self.symbols[int(v)] for v in self.values)
        return f"{self.lattice.dim} {self.lattice.side} {self.kind}\n{body}\n"

    @staticmethod
    def from_text(text: str) -> "_SiteField":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if len(lines) != 2:
            raise ValueError("config text must be a header line plus a symbol line")
        parts = lines[0].split()
        if len(parts) != 3:
            raise ValueError(f"malformed config header: {lines[0]!r}")
        dim, side, kind = int(parts[0]), int(parts[1]), parts[2]
        cls = _KIND_TO_CLS.get(kind)
        if cls is None:
            raise ValueError(f"unknown config kind {kind!r}")
        lattice = TorusLattice(dim, side)
        decode = {s: v for v, s in cls.symbols.items()}
        body = lines[1].strip()
        if len(body) != lattice.n_sites:
            raise ValueError(
                f"expected {lattice.n_sites} symbols, got {len(body)}"
            )
        try:
            vals = [decode[ch] for ch in body]
        except KeyError as exc:
            raise ValueError(f"symbol {exc.args[0]!r} not in the {kind} alphabet")
        return cls(lattice, vals)


class OccupancyConfig(_SiteField):
    """Exclusion-process state: 0/1 per site."""

    kind = "occupancy"
    symbols = {0: "0", 1: "1"}


class SignedConfig(_SiteField):
    """Difference field: -1, 0, +1 per site."""

    kind = "signed"
    symbols = {-1: "-", 0: "0", 1: "+"}


class TwoSpeciesConfig(_SiteField):
    """Free two-species state: 0, -1, +1, or BOTH per site ('2' in text form)."""

    kind = "two_species"
    symbols = {-1: "-", 0: "0", 1: "+", BOTH: "2"}


_KIND_TO_CLS = {c.kind: c for c in (OccupancyConfig, SignedConfig, TwoSpeciesConfig)}

config_from_text = _SiteField.from_text


def _check_pair(config: _SiteField, x: int, y: int):
    n = config.lattice.n_sites
    if not (0 <= x < n and 0 <= y < n):
        raise ValueError(f"sites ({x}, {y}) out of range for {n} sites")
    if x == y:
        raise ValueError("the two sites must be distinct")


def swap(config: _SiteField, x: int, y: int) -> _SiteField:
    """Exchange the values at sites x and y (adjacency not required)."""
    _check_pair(config, x, y)
    v = config.values.copy()
    v[x], v[y] = v[y], v[x]
    return config.replace(v)


def annihilate_pair(config: SignedConfig, x: int, y: int) -> SignedConfig:
    """Zero out sites x and y of a signed config."""
    if not isinstance(config, SignedConfig):
        raise TypeError("annihilate_pair acts on signed configs")
    _check_pair(config, x, y)
    v = config.values.copy()
    v[x] = 0
    v[y] = 0
    return config.replace(v)


def set_pair(config: TwoSpeciesConfig, x: int, y: int, a: int, b: int) -> TwoSpeciesConfig:
    """Write values (a, b) at sites (x, y) of a two-species config."""
    if not isinstance(config, TwoSpeciesConfig):
        raise TypeError("set_pair acts on two-species configs")
    _check_pair(config, x, y)
    for val in (a, b):
        if val not in TwoSpeciesConfig.symbols:
            raise ValueError(f"value {val} not in the two-species alphabet")
    v = config.values.copy()
    v[x] = a
    v[y] = b
    return config.replace(v)


def difference(eta: OccupancyConfig, zeta: OccupancyConfig) -> SignedConfig:
    """Site-wise eta - zeta of two occupancy configs on the same lattice."""
    if not isinstance(eta, OccupancyConfig) or not isinstance(zeta, OccupancyConfig):
        raise TypeError("difference acts on occupancy configs")
    if not eta.lattice.same_geometry(zeta.lattice):
        raise ValueError("configs live on different lattices")
    return SignedConfig(eta.lattice, eta.values - zeta.values)


def count_species(config: _SiteField, sites, species: int) -> int:
    """Number of sites in `sites` holding a particle of the given species.

    species is +1 or -1; a BOTH site counts toward both species.  For
    occupancy configs only species +1 makes sense and counts occupied sites.
    """
    if species not in (-1, 1):
        raise ValueError("species must be +1 or -1")
    sites = np.asarray(sites, dtype=np.int64)
    if sites.size == 0:
        return 0
    if sites.min() < 0 or sites.max() >= config.lattice.n_sites:
        raise ValueError("site index out of range")
    v = config.values[sites]
    if isinstance(config, OccupancyConfig):
        if species != 1:
            raise ValueError("occupancy configs hold only +1 particles")
        return int(np.count_nonzero(v == 1))
    hit = v == species
    if isinstance(config, TwoSpeciesConfig):
        hit |= v == BOTH
    return int(np.count_nonzero(hit))


def hamming(a: _SiteField, b: _SiteField) -> int:
    """Number of disagreeing sites between two same-kind configs."""
    if type(a) is not type(b) or not a.lattice.same_geometry(b.lattice):
        raise ValueError("hamming distance needs two configs of the same kind and lattice")
    return int(np.count_nonzero(a.values != b.values))
