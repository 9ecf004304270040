"""Stochastic dynamics: stirring logs, their realizations, event simulation.

Two independent routes produce each process:

* ``gillespie``: thinned global Poisson clocks (see _kernels).
* stirring: a pre-generated arrow log (one Poisson clock per edge and
  channel) replayed deterministically.  The exclusion process reads marker
  positions off one channel; the free two-species process moves each species
  by its own channel; thinning the free replay (remove an opposite pair the
  moment it shares a site) yields the annihilation dynamics.

Their agreement is part of the validation suite.

Torus sizing: influence spreads at a finite rate, so a run to time t is
faithful to the infinite lattice once the side exceeds the light cone.  We
use side = max(3, ceil(8 t + 10 sqrt(t ln(1/eps)) + 20)): 8t covers twice the
per-axis drift bound of the rate-2 walks with a factor-2 margin, the sqrt
term buries large deviations beyond level eps, and the constant floor covers
small t.  An explicitly configured side always wins.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import (BOTH, CHANNEL_MINUS, CHANNEL_PLUS, OccupancyConfig,
                   SignedConfig, TorusLattice, TwoSpeciesConfig, make_rng)

DEFAULT_LIGHT_CONE_EPS = 1e-3
PROCESS_NAMES = ("sep", "annihilation", "free", "coupled")


def light_cone_side(t: float, eps: float = DEFAULT_LIGHT_CONE_EPS) -> int:
    if t < 0:
        raise ValueError("time must be nonnegative")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    return max(3, int(np.ceil(8.0 * t + 10.0 * np.sqrt(t * np.log(1.0 / eps)) + 20.0)))


# ---------------------------------------------------------------------------
# stirring construction


@dataclass
class StirringLog:
    """Arrow log: strictly ordered times, one edge and channel per arrow."""

    lattice: TorusLattice
    horizon: float
    times: np.ndarray = field(repr=False)
    edge_ids: np.ndarray = field(repr=False)
    channels: np.ndarray = field(repr=False)
    n_channels: int = 1

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.n_channels not in (1, 2):
            raise ValueError("one or two channels")
        n = len(self.times)
        if not (len(self.edge_ids) == len(self.channels) == n):
            raise ValueError("times, edges, channels must align")
        if n:
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("event times must be strictly increasing")
            if self.times[0] <= 0 or self.times[-1] > self.horizon:
                raise ValueError("event times must lie in (0, horizon]")
            if self.edge_ids.min() < 0 or self.edge_ids.max() >= self.lattice.n_edges:
                raise ValueError("edge id out of range")
            if self.channels.min() < 0 or self.channels.max() >= self.n_channels:
                raise ValueError("channel out of range")

    def __len__(self):
        return len(self.times)

    def events_until(self, t: float) -> int:
        if not 0 <= t <= self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        return int(np.searchsorted(self.times, t, side="right"))


def _draw_stirring(lattice: TorusLattice, horizon: float, rng,
                   channels: int) -> StirringLog:
    for _ in range(8):
        count = rng.poisson(channels * lattice.n_edges * horizon)
        times = np.sort(horizon * (1.0 - rng.random(count)))
        edges = rng.integers(0, lattice.n_edges, count, dtype=np.int64)
        chans = rng.integers(0, channels, count, dtype=np.int64).astype(np.int8)
        if count < 2 or not np.any(np.diff(times) == 0.0):
            return StirringLog(lattice, horizon, times, edges, chans, channels)
    # ~1e-10 per attempt at realistic sizes; eight misses means a broken rng
    raise RuntimeError("persistent tied arrow times")


def gen_stirring(lattice: TorusLattice, horizon: float, seed,
                 channels: int = 1) -> StirringLog:
    """Poisson arrow log at rate 1 per (edge, channel) up to the horizon.

    Drawn as one global clock of rate channels * n_edges with uniform edge
    and channel marks, which is the same point process.  Tied times (possible
    only through float rounding) are rejected and redrawn.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if channels not in (1, 2):
        raise ValueError("one or two channels")
    return _draw_stirring(lattice, horizon, make_rng(seed), channels)


def stirring_content(log: StirringLog, channel: int, t: float) -> np.ndarray:
    """content[x] = label of the marker sitting at x at time t.

    Markers start as content[x] = x and arrows of the channel exchange the
    contents of their two endpoints.
    """
    if not 0 <= channel < log.n_channels:
        raise ValueError(f"channel {channel} not in the log")
    m = log.events_until(t)
    keep = log.channels[:m] == channel
    ids = log.edge_ids[:m][keep]
    content = np.arange(log.lattice.n_sites, dtype=np.int64)
    _kernels.replay_swaps(content,
                          np.ascontiguousarray(log.lattice.edge_a[ids]),
                          np.ascontiguousarray(log.lattice.edge_b[ids]))
    return content


def stirring_position(log: StirringLog, channel: int, site: int, t: float) -> int:
    """Where the marker that started at `site` sits at time t."""
    if not 0 <= site < log.lattice.n_sites:
        raise ValueError("site out of range")
    content = stirring_content(log, channel, t)
    return int(np.flatnonzero(content == site)[0])


def realize_sep(zeta: OccupancyConfig, log: StirringLog, t: float,
                channel: int = 0) -> OccupancyConfig:
    """Exclusion state at time t: each particle rides its stirring marker."""
    if not isinstance(zeta, OccupancyConfig):
        raise TypeError("realize_sep starts from an occupancy config")
    if not zeta.lattice.same_geometry(log.lattice):
        raise ValueError("config and log lattices differ")
    content = stirring_content(log, channel, t)
    return OccupancyConfig(zeta.lattice, zeta.values[content])


def realize_two_species_free(init: TwoSpeciesConfig, log: StirringLog,
                             t: float) -> TwoSpeciesConfig:
    """Free two-species state: each species rides its own channel."""
    if not isinstance(init, TwoSpeciesConfig):
        raise TypeError("realize_two_species_free starts from a two-species config")
    if log.n_channels != 2:
        raise ValueError("the free process needs a two-channel log")
    if not init.lattice.same_geometry(log.lattice):
        raise ValueError("config and log lattices differ")
    v = init.values
    minus0 = ((v == -1) | (v == BOTH)).astype(np.int8)
    plus0 = ((v == 1) | (v == BOTH)).astype(np.int8)
    m = minus0[stirring_content(log, CHANNEL_MINUS, t)]
    p = plus0[stirring_content(log, CHANNEL_PLUS, t)]
    vals = np.where(m & p, BOTH, np.where(m == 1, -1, np.where(p == 1, 1, 0)))
    return TwoSpeciesConfig(init.lattice, vals)


def thin_snapshots(init: SignedConfig, log: StirringLog, times) -> np.ndarray:
    """Annihilation states at the given times from one log replay."""
    if not isinstance(init, SignedConfig):
        raise TypeError("thinning starts from a signed config")
    if log.n_channels != 2:
        raise ValueError("thinning needs a two-channel log")
    if not init.lattice.same_geometry(log.lattice):
        raise ValueError("config and log lattices differ")
    obs = np.asarray(times, dtype=np.float64).reshape(-1)
    if obs.size == 0 or np.any(np.diff(obs) <= 0):
        raise ValueError("need strictly increasing observation times")
    if obs[0] < 0 or obs[-1] > log.horizon:
        raise ValueError("observation times must lie in [0, horizon]")
    minus = (init.values == -1).astype(np.int8)
    plus = (init.values == 1).astype(np.int8)
    out = np.empty((obs.size, init.lattice.n_sites), dtype=np.int8)
    _kernels.thin_replay(minus, plus, log.times, log.lattice.edge_a[log.edge_ids],
                         log.lattice.edge_b[log.edge_ids], log.channels, obs, out)
    return out


def thin_to_annihilation(init: SignedConfig, log: StirringLog,
                         t: float) -> SignedConfig:
    """Annihilation state at time t: free motion minus met opposite pairs."""
    snap = thin_snapshots(init, log, np.array([t], dtype=np.float64))
    return SignedConfig(init.lattice, snap[0])


def coupled_snapshots(eta: OccupancyConfig, zeta: OccupancyConfig,
                      log: StirringLog, times) -> tuple[np.ndarray, np.ndarray]:
    """Coupled-pair states at the given times from one two-channel log.

    On a both-discordant edge the channels act as independent marginal
    swaps; everywhere else channel 0 is the joint swap and channel 1 is
    dropped, which reproduces the coupled rates edge by edge.
    """
    if not (isinstance(eta, OccupancyConfig) and isinstance(zeta, OccupancyConfig)):
        raise TypeError("the coupled pair is two occupancy configs")
    if log.n_channels != 2:
        raise ValueError("the coupled replay needs a two-channel log")
    if not eta.lattice.same_geometry(log.lattice) \
            or not zeta.lattice.same_geometry(log.lattice):
        raise ValueError("config and log lattices differ")
    obs = np.asarray(times, dtype=np.float64).reshape(-1)
    if obs.size == 0 or np.any(np.diff(obs) <= 0):
        raise ValueError("need strictly increasing observation times")
    if obs[0] < 0 or obs[-1] > log.horizon:
        raise ValueError("observation times must lie in [0, horizon]")
    e = eta.values.copy()
    z = zeta.values.copy()
    out_eta = np.empty((obs.size, eta.lattice.n_sites), dtype=np.int8)
    out_zeta = np.empty_like(out_eta)
    _kernels.coupled_replay(e, z, log.times, log.lattice.edge_a[log.edge_ids],
                            log.lattice.edge_b[log.edge_ids], log.channels,
                            obs, out_eta, out_zeta)
    return out_eta, out_zeta


# ---------------------------------------------------------------------------
# event-driven simulation


@dataclass
class Trajectory:
    """Snapshots of one replica at the requested times."""

    process: str
    lattice: TorusLattice
    times: np.ndarray
    states: list

    def __post_init__(self):
        if self.process not in PROCESS_NAMES:
            raise ValueError(f"unknown process {self.process!r}")
        if len(self.times) != len(self.states) or len(self.times) == 0:
            raise ValueError("one state per observation time")
        if np.any(np.asarray(self.times) < 0) or np.any(np.diff(self.times) <= 0):
            raise ValueError("observation times must be nonnegative and increasing")


def _obs_array(obs_times, horizon: float) -> np.ndarray:
    obs = np.asarray(obs_times, dtype=np.float64).reshape(-1)
    if obs.size == 0:
        raise ValueError("need at least one observation time")
    if np.any(np.diff(obs) <= 0):
        raise ValueError("observation times must be strictly increasing")
    if obs[0] < 0 or obs[-1] > horizon:
        raise ValueError("observation times must lie in [0, horizon]")
    return obs


def kernel_seed(rng) -> np.uint64:
    return np.uint64(rng.integers(1, 2**63, dtype=np.uint64))


def gillespie(process: str, init, horizon: float, obs_times, seed) -> Trajectory:
    """Run one replica of a process, observing at the given times."""
    obs = _obs_array(obs_times, horizon)
    rng = make_rng(seed)
    return _gillespie_rng(process, init, obs, rng)


def _gillespie_rng(process: str, init, obs: np.ndarray, rng) -> Trajectory:
    seed = kernel_seed(rng)
    if process == "sep":
        if not isinstance(init, OccupancyConfig):
            raise TypeError("sep starts from an occupancy config")
        lattice = init.lattice
        out = np.empty((obs.size, lattice.n_sites), dtype=np.int8)
        _kernels.run_sep(init.values.copy(), lattice.edge_a, lattice.edge_b,
                         obs, out, seed)
        states = [OccupancyConfig(lattice, row) for row in out]
    elif process == "annihilation":
        if not isinstance(init, SignedConfig):
            raise TypeError("annihilation starts from a signed config")
        lattice = init.lattice
        out = np.empty((obs.size, lattice.n_sites), dtype=np.int8)
        _kernels.run_annihilation(init.values.copy(), lattice.edge_a,
                                  lattice.edge_b, obs, out, seed)
        states = [SignedConfig(lattice, row) for row in out]
    elif process == "free":
        if not isinstance(init, TwoSpeciesConfig):
            raise TypeError("free starts from a two-species config")
        lattice = init.lattice
        v = init.values
        minus = ((v == -1) | (v == BOTH)).astype(np.int8)
        plus = ((v == 1) | (v == BOTH)).astype(np.int8)
        out_m = np.empty((obs.size, lattice.n_sites), dtype=np.int8)
        out_p = np.empty_like(out_m)
        _kernels.run_free(minus, plus, lattice.edge_a, lattice.edge_b,
                          obs, out_m, out_p, seed)
        vals = np.where(out_m & out_p, BOTH,
                        np.where(out_m == 1, -1, np.where(out_p == 1, 1, 0)))
        states = [TwoSpeciesConfig(lattice, row) for row in vals]
    elif process == "coupled":
        try:
            eta, zeta = init
        except TypeError:
            raise TypeError("coupled starts from a pair of occupancy configs")
        if not isinstance(eta, OccupancyConfig) or not isinstance(zeta, OccupancyConfig):
            raise TypeError("coupled starts from a pair of occupancy configs")
        if not eta.lattice.same_geometry(zeta.lattice):
            raise ValueError("the two marginals live on different lattices")
        lattice = eta.lattice
        out_e = np.empty((obs.size, lattice.n_sites), dtype=np.int8)
        out_z = np.empty_like(out_e)
        _kernels.run_coupled(eta.values.copy(), zeta.values.copy(),
                             lattice.edge_a, lattice.edge_b, obs, out_e, out_z, seed)
        states = [(OccupancyConfig(lattice, a), OccupancyConfig(lattice, b))
                  for a, b in zip(out_e, out_z)]
    else:
        raise ValueError(f"unknown process {process!r}")
    return Trajectory(process, lattice, obs, states)


# ---------------------------------------------------------------------------
# binary snapshot stream

SNAPSHOT_FORMAT_VERSION = 1
_KIND_CODES = {"occupancy": 0, "signed": 1, "two_species": 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_RUN_DTYPE = np.dtype([("count", "<u4"), ("value", "i1")])


def write_snapshot_header(fh, lattice: TorusLattice, kind: str):
    if kind not in _KIND_CODES:
        raise ValueError(f"unknown config kind {kind!r}")
    fh.write(struct.pack("<BBBI", SNAPSHOT_FORMAT_VERSION, _KIND_CODES[kind],
                         lattice.dim, lattice.side))


def append_snapshot(fh, replica: int, time: float, values: np.ndarray):
    v = np.asarray(values, dtype=np.int8)
    ends = np.flatnonzero(np.diff(v)) + 1
    starts = np.concatenate([[0], ends])
    stops = np.concatenate([ends, [v.size]])
    runs = np.empty(starts.size, dtype=_RUN_DTYPE)
    runs["count"] = stops - starts
    runs["value"] = v[starts]
    fh.write(struct.pack("<IdI", replica, float(time), runs.size))
    fh.write(runs.tobytes())


def read_snapshot_stream(fh):
    """Yield (replica, time, values) after validating the header.

    The header is returned first as ('header', lattice, kind).
    """
    head = fh.read(7)
    if len(head) != 7:
        raise ValueError("truncated snapshot header")
    version, kind_code, dim, side = struct.unpack("<BBBI", head)
    if version != SNAPSHOT_FORMAT_VERSION:
        raise ValueError(f"unsupported snapshot format version {version}")
    if kind_code not in _CODE_KINDS:
        raise ValueError(f"unknown config kind code {kind_code}")
    lattice = TorusLattice(dim, side)
    yield ("header", lattice, _CODE_KINDS[kind_code])
    rec_head = struct.Struct("<IdI")
    while True:
        chunk = fh.read(rec_head.size)
        if not chunk:
            return
        if len(chunk) != rec_head.size:
            raise ValueError("truncated snapshot record")
        replica, time, n_runs = rec_head.unpack(chunk)
        raw = fh.read(n_runs * _RUN_DTYPE.itemsize)
        if len(raw) != n_runs * _RUN_DTYPE.itemsize:
            raise ValueError("truncated snapshot record")
        runs = np.frombuffer(raw, dtype=_RUN_DTYPE)
        values = np.repeat(runs["value"], runs["count"])
        if values.size != lattice.n_sites:
            raise ValueError("snapshot length does not match the lattice")
        yield (replica, time, values)
