"""Event-loop kernels.

All four processes run as thinned global Poisson clocks: propose (time, edge)
from a rate `channels * n_edges` clock, then apply the edge action, which is
either unconditional (sep: swap; free: swap one species' presence) or an
accept/reject on the endpoint values (annihilation, coupled).  Identity
moves are harmless no-ops, so no rate bookkeeping is needed and the chains
are exact in law.

Randomness comes from an in-kernel splitmix64 stream; the 64-bit seed is
drawn outside from the replica's counter-based generator.  Snapshots are the
state just before the first event past each requested time (right-continuous
paths, tie times have probability zero).
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(inline="always")
def _unit(s):
    s = s + _GOLDEN
    z = s
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    z = z ^ (z >> _S31)
    return s, (np.float64(z >> _S11) + 0.5) * _INV53


@njit(cache=True, nogil=True)
def run_sep(values, edge_a, edge_b, obs, out, seed):
    n_edges = edge_a.shape[0]
    total = np.float64(n_edges)
    n_obs = obs.shape[0]
    s = np.uint64(seed)
    t = 0.0
    k = 0
    while True:
        s, u = _unit(s)
        t_next = t - np.log(u) / total
        while k < n_obs and obs[k] < t_next:
            out[k, :] = values
            k += 1
        if k == n_obs:
            return
        t = t_next
        s, u = _unit(s)
        e = int(u * n_edges)
        x = edge_a[e]
        y = edge_b[e]
        tmp = values[x]
        values[x] = values[y]
        values[y] = tmp


@njit(cache=True, nogil=True)
def run_annihilation(values, edge_a, edge_b, obs, out, seed):
    # values: int8 in {-1, 0, +1}; opposite neighbors vanish at rate 2,
    # everything else swaps at rate 1 (accept probability 1/2 under the
    # rate-2 proposal clock)
    n_edges = edge_a.shape[0]
    total = 2.0 * n_edges
    n_obs = obs.shape[0]
    s = np.uint64(seed)
    t = 0.0
    k = 0
    while True:
        s, u = _unit(s)
        t_next = t - np.log(u) / total
        while k < n_obs and obs[k] < t_next:
            out[k, :] = values
            k += 1
        if k == n_obs:
            return
        t = t_next
        s, u = _unit(s)
        e = int(u * n_edges)
        x = edge_a[e]
        y = edge_b[e]
        vx = values[x]
        vy = values[y]
        if vx * vy == -1:
            values[x] = 0
            values[y] = 0
        elif vx != vy:
            s, u = _unit(s)
            if u < 0.5:
                values[x] = vy
                values[y] = vx


@njit(cache=True, nogil=True)
def run_free(minus, plus, edge_a, edge_b, obs, out_minus, out_plus, seed):
    # presence bits per species; a proposal picks a species channel and
    # swaps its bits across the edge, which realizes every free transition
    n_edges = edge_a.shape[0]
    total = 2.0 * n_edges
    n_obs = obs.shape[0]
    s = np.uint64(seed)
    t = 0.0
    k = 0
    while True:
        s, u = _unit(s)
        t_next = t - np.log(u) / total
        while k < n_obs and obs[k] < t_next:
            out_minus[k, :] = minus
            out_plus[k, :] = plus
            k += 1
        if k == n_obs:
            return
        t = t_next
        s, u = _unit(s)
        e = int(u * n_edges)
        x = edge_a[e]
        y = edge_b[e]
        s, u = _unit(s)
        if u < 0.5:
            tmp = minus[x]
            minus[x] = minus[y]
            minus[y] = tmp
        else:
            tmp = plus[x]
            plus[x] = plus[y]
            plus[y] = tmp


@njit(cache=True, nogil=True)
def run_coupled(eta, zeta, edge_a, edge_b, obs, out_eta, out_zeta, seed):
    # edges with both endpoints discordant carry two independent marginal
    # swaps at rate 1 each; every other edge swaps jointly at rate 1
    n_edges = edge_a.shape[0]
    total = 2.0 * n_edges
    n_obs = obs.shape[0]
    s = np.uint64(seed)
    t = 0.0
    k = 0
    while True:
        s, u = _unit(s)
        t_next = t - np.log(u) / total
        while k < n_obs and obs[k] < t_next:
            out_eta[k, :] = eta
            out_zeta[k, :] = zeta
            k += 1
        if k == n_obs:
            return
        t = t_next
        s, u = _unit(s)
        e = int(u * n_edges)
        x = edge_a[e]
        y = edge_b[e]
        s, u = _unit(s)
        if eta[x] != zeta[x] and eta[y] != zeta[y]:
            if u < 0.5:
                tmp = eta[x]
                eta[x] = eta[y]
                eta[y] = tmp
            else:
                tmp = zeta[x]
                zeta[x] = zeta[y]
                zeta[y] = tmp
        elif u < 0.5:
            tmp = eta[x]
            eta[x] = eta[y]
            eta[y] = tmp
            tmp = zeta[x]
            zeta[x] = zeta[y]
            zeta[y] = tmp


@njit(cache=True, nogil=True)
def replay_swaps(content, ev_a, ev_b):
    # content[x] = marker currently at site x; arrows exchange site contents
    for i in range(ev_a.shape[0]):
        a = ev_a[i]
        b = ev_b[i]
        tmp = content[a]
        content[a] = content[b]
        content[b] = tmp


@njit(cache=True, nogil=True)
def coupled_replay(eta, zeta, ev_t, ev_a, ev_b, ev_ch, obs, out_eta, out_zeta):
    # drive the coupled pair from a two-channel log: on a both-discordant
    # edge, channel 0 swaps the first marginal and channel 1 the second;
    # elsewhere channel 0 swaps jointly and channel 1 is ignored.  Per-edge
    # rates then match the coupled generator exactly.
    n_obs = obs.shape[0]
    k = 0
    for i in range(ev_t.shape[0]):
        te = ev_t[i]
        while k < n_obs and obs[k] < te:
            out_eta[k, :] = eta
            out_zeta[k, :] = zeta
            k += 1
        if k == n_obs:
            return
        a = ev_a[i]
        b = ev_b[i]
        if eta[a] != zeta[a] and eta[b] != zeta[b]:
            if ev_ch[i] == 0:
                tmp = eta[a]
                eta[a] = eta[b]
                eta[b] = tmp
            else:
                tmp = zeta[a]
                zeta[a] = zeta[b]
                zeta[b] = tmp
        elif ev_ch[i] == 0:
            tmp = eta[a]
            eta[a] = eta[b]
            eta[b] = tmp
            tmp = zeta[a]
            zeta[a] = zeta[b]
            zeta[b] = tmp
    while k < n_obs:
        out_eta[k, :] = eta
        out_zeta[k, :] = zeta
        k += 1


@njit(cache=True, nogil=True)
def thin_replay(minus, plus, ev_t, ev_a, ev_b, ev_ch, obs, out):
    # replay a two-channel log, moving each species by its own channel and
    # removing an opposite pair the moment it shares a site
    n_obs = obs.shape[0]
    n = minus.shape[0]
    k = 0
    for i in range(ev_t.shape[0]):
        te = ev_t[i]
        while k < n_obs and obs[k] < te:
            for j in range(n):
                out[k, j] = np.int8(plus[j]) - np.int8(minus[j])
            k += 1
        if k == n_obs:
            return
        a = ev_a[i]
        b = ev_b[i]
        if ev_ch[i] == 1:
            tmp = plus[a]
            plus[a] = plus[b]
            plus[b] = tmp
        else:
            tmp = minus[a]
            minus[a] = minus[b]
            minus[b] = tmp
        if minus[a] == 1 and plus[a] == 1:
            minus[a] = 0
            plus[a] = 0
        if minus[b] == 1 and plus[b] == 1:
            minus[b] = 0
            plus[b] = 0
    while k < n_obs:
        for j in range(n):
            out[k, j] = np.int8(plus[j]) - np.int8(minus[j])
        k += 1
