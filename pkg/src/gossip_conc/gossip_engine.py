"""Pairwise gossip with stubborn agents.

Each step activates one unordered pair with probability ``w_ij``.  A
regular-regular pair moves both endpoints to their mean; a regular agent
meeting a stubborn agent moves halfway to the stubborn opinion.

Step ``t`` draws its pair from the hash of ``(seed, t)``, so the state of a
trajectory is fully described by ``(seed, t, x, running_sum)``.

The running sum ``sum_{i<t} X(i)`` is kept lazily: an agent's value is only
added to its partial sum when the agent changes, weighted by how long it
held.  Partials are folded into a compensated (Neumaier) total at fixed
block boundaries of the absolute step counter.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .graph_models import ExpectedGraph, SampledGraph
from .rng import DOMAIN_GOSSIP, GOLDEN, INV_2_53, hash_stream, mix, stream_key

FLUSH_BLOCK = 1 << 16


@dataclass(frozen=True, eq=False)
class InteractionDistribution:
    """Unordered pairs ``(i, j)`` (``i`` regular, lexicographic) with selection weights.

    ``j >= n_r`` marks a stubborn partner.  For 0/1 graphs all weights are
    equal and the table is flagged ``uniform``.
    """

    n_r: int
    n_s: int
    pairs: np.ndarray
    weights: np.ndarray
    kind: str
    uniform: bool
    cdf: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.pairs.shape[0] == 0:
            raise ValueError("interaction table is empty: the graph has no edges")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("interaction weights must sum to 1")
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        object.__setattr__(self, "cdf", cdf)

    @property
    def n_pairs(self) -> int:
        return self.pairs.shape[0]

    @classmethod
    def from_graph(cls, g: SampledGraph | ExpectedGraph) -> "InteractionDistribution":
        if isinstance(g, ExpectedGraph):
            m = g.model
            a = np.hstack([np.triu(m.psi_r, 1), m.psi_s])
            i, j = np.nonzero(a)
            w = a[i, j]
            pairs = np.column_stack([i, j]).astype(np.int64)
            return cls(m.n_r, m.n_s, pairs, w / w.sum(), "expected", False)
        e = np.asarray(g.edges, dtype=np.int64)
        return cls(g.n_r, g.n_s, e, np.full(e.shape[0], 1.0 / max(e.shape[0], 1)),
                   "sampled", True)


class UndefinedAverageError(ValueError):
    pass


@nb.njit(inline="always")
def _neumaier(hi, lo, a, v):
    s = hi[a] + v
    if abs(hi[a]) >= abs(v):
        lo[a] += (hi[a] - s) + v
    else:
        lo[a] += (v - s) + hi[a]
    hi[a] = s


@nb.njit(nogil=True, cache=True)
def _steps_uniform(y, pi, pj, pjw, key, t_lo, t_hi, part, last):
    mm = np.uint64(pi.shape[0])
    for t in range(t_lo, t_hi):
        h = mix(key + np.uint64(t) * GOLDEN)
        # multiply-shift maps the top 32 bits onto 0..m-1 (inverse CDF of a uniform table)
        k = np.int64(((h >> np.uint64(32)) * mm) >> np.uint64(32))
        i = pi[k]
        jw = pjw[k]
        t1 = t + 1
        part[i] += (t1 - last[i]) * y[i]
        last[i] = t1
        part[jw] += (t1 - last[jw]) * y[jw]
        last[jw] = t1
        v = 0.5 * (y[i] + y[pj[k]])
        y[i] = v
        y[jw] = v


@nb.njit(nogil=True, cache=True)
def _steps_cdf(y, pi, pj, pjw, cdf, key, t_lo, t_hi, part, last):
    m = pi.shape[0]
    for t in range(t_lo, t_hi):
        h = mix(key + np.uint64(t) * GOLDEN)
        u = np.float64(h >> np.uint64(11)) * INV_2_53
        k = min(np.searchsorted(cdf, u, side="right"), m - 1)
        i = pi[k]
        jw = pjw[k]
        t1 = t + 1
        part[i] += (t1 - last[i]) * y[i]
        last[i] = t1
        part[jw] += (t1 - last[jw]) * y[jw]
        last[jw] = t1
        v = 0.5 * (y[i] + y[pj[k]])
        y[i] = v
        y[jw] = v


@nb.njit(nogil=True, cache=True)
def _run(y, pi, pj, pjw, cdf, uniform, key, t0, steps, part, last, hi, lo, n_r, block):
    """Advance ``steps`` gossip steps from absolute step ``t0``.

    ``y`` holds ``[x, z, scratch]``; ``pjw`` is the write target of the
    partner, equal to ``pj`` for regular partners and the scratch slot for
    stubborn ones, so stubborn opinions are never overwritten.  Partial sums
    are folded into ``hi + lo`` whenever the step counter crosses a multiple
    of ``block``.
    """
    t = t0
    end = t0 + steps
    while t < end:
        stop = min(end, (t // block + 1) * block)
        if uniform:
            _steps_uniform(y, pi, pj, pjw, key, t, stop, part, last)
        else:
            _steps_cdf(y, pi, pj, pjw, cdf, key, t, stop, part, last)
        t = stop
        if t % block == 0:
            for a in range(n_r):
                part[a] += (t - last[a]) * y[a]
                last[a] = t
                _neumaier(hi, lo, a, part[a])
                part[a] = 0.0


@dataclass(eq=False)
class GossipTrajectory:
    """Opinion state ``X(t)``, stubborn opinions and the running sum of past states."""

    x: np.ndarray
    z_s: np.ndarray
    seed: int
    t: int = 0
    _hi: np.ndarray = field(default=None, repr=False)
    _lo: np.ndarray = field(default=None, repr=False)
    _part: np.ndarray = field(default=None, repr=False)
    _last: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n_r = self.x.shape[0]
        for name in ("_hi", "_lo"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(n_r))
        if self._part is None:
            self._part = np.zeros(n_r + 1)
        if self._last is None:
            self._last = np.full(n_r + 1, self.t, dtype=np.int64)

    @property
    def n_r(self) -> int:
        return self.x.shape[0]

    @property
    def c_x(self) -> float:
        return float(max(np.abs(self.x).max(initial=0.0), np.abs(self.z_s).max(initial=0.0)))

    @property
    def running_sum(self) -> np.ndarray:
        """``sum_{i<t} X(i)`` for the regular agents."""
        n = self.n_r
        pend = self._part[:n] + (self.t - self._last[:n]) * self.x
        return self._hi + (self._lo + pend)

    def copy(self) -> "GossipTrajectory":
        return GossipTrajectory(self.x.copy(), self.z_s.copy(), self.seed, self.t,
                                self._hi.copy(), self._lo.copy(), self._part.copy(),
                                self._last.copy())

    def checkpoint(self) -> dict:
        return {"seed": int(self.seed), "t": int(self.t), "x": self.x.tolist(),
                "running_sum": self.running_sum.tolist(), "z_s": self.z_s.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.checkpoint())

    @classmethod
    def from_checkpoint(cls, rec: dict | str, z_s: np.ndarray | None = None) -> "GossipTrajectory":
        if isinstance(rec, str):
            rec = json.loads(rec)
        z = np.asarray(rec["z_s"] if z_s is None else z_s, dtype=np.float64)
        t = int(rec["t"])
        x = np.asarray(rec["x"], dtype=np.float64)
        traj = cls(x, z, int(rec["seed"]), t)
        traj._hi = np.asarray(rec["running_sum"], dtype=np.float64).copy()
        return traj


def init_trajectory(x0, z_s, seed: int) -> GossipTrajectory:
    x0 = np.array(x0, dtype=np.float64).ravel()
    z_s = np.array(z_s, dtype=np.float64).ravel()
    if x0.size < 1:
        raise ValueError("at least one regular agent is required")
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(z_s))):
        raise ValueError("opinions must be finite")
    return GossipTrajectory(x0, z_s, int(seed))


def _check_dims(traj: GossipTrajectory, dist: InteractionDistribution) -> None:
    if traj.n_r != dist.n_r or traj.z_s.shape[0] != dist.n_s:
        raise ValueError(
            f"trajectory has {traj.n_r}+{traj.z_s.shape[0]} agents, "
            f"interaction table expects {dist.n_r}+{dist.n_s}")


def _advance(traj: GossipTrajectory, dist: InteractionDistribution, steps: int) -> None:
    n_r, n_s = dist.n_r, dist.n_s
    scratch = n_r + n_s
    y = np.concatenate([traj.x, traj.z_s, [0.0]])
    pj = dist.pairs[:, 1]
    pjw = np.where(pj < n_r, pj, scratch)
    # scratch writes land in the last slot of the partial-sum arrays
    part = np.zeros(scratch + 1)
    part[:n_r] = traj._part[:n_r]
    last = np.full(scratch + 1, traj.t, dtype=np.int64)
    last[:n_r] = traj._last[:n_r]
    _run(y, dist.pairs[:, 0], pj, pjw, dist.cdf, dist.uniform,
         stream_key(traj.seed, DOMAIN_GOSSIP), traj.t, steps, part, last,
         traj._hi, traj._lo, n_r, FLUSH_BLOCK)
    traj.x = y[:n_r].copy()
    traj._part[:n_r] = part[:n_r]
    traj._last[:n_r] = last[:n_r]
    traj.t += steps


def run(traj: GossipTrajectory, dist: InteractionDistribution, t_max: int) -> GossipTrajectory:
    """Return a new trajectory advanced by ``t_max`` steps."""
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    _check_dims(traj, dist)
    out = traj.copy()
    if t_max:
        _advance(out, dist, int(t_max))
    return out


def run_inplace(traj: GossipTrajectory, dist: InteractionDistribution, t_max: int) -> GossipTrajectory:
    """Like :func:`run` but mutates ``traj``; avoids copies in long loops."""
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    _check_dims(traj, dist)
    if t_max:
        _advance(traj, dist, int(t_max))
    return traj


def step(traj: GossipTrajectory, dist: InteractionDistribution) -> GossipTrajectory:
    return run(traj, dist, 1)


def time_average(traj: GossipTrajectory) -> np.ndarray:
    """``S(t) = (1/t) sum_{i<t} X(i)``."""
    if traj.t < 1:
        raise UndefinedAverageError("the time average is undefined at t = 0")
    return traj.running_sum / traj.t


def drawn_pairs(dist: InteractionDistribution, seed: int, t0: int, steps: int) -> np.ndarray:
    """Indices into ``dist.pairs`` activated at steps ``t0 .. t0+steps-1`` (for inspection)."""
    h = hash_stream(stream_key(seed, DOMAIN_GOSSIP), t0, steps)
    if dist.uniform:
        return (((h >> np.uint64(32)) * np.uint64(dist.n_pairs)) >> np.uint64(32)).astype(np.int64)
    u = (h >> np.uint64(11)).astype(np.float64) * INV_2_53
    return np.minimum(np.searchsorted(dist.cdf, u, side="right"), dist.n_pairs - 1)


def trajectory_csv_rows(t: int, x: np.ndarray):
    for a, v in enumerate(x):
        yield (t, a, repr(float(v)))
