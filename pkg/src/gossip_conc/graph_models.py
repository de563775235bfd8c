"""Random graphs with stubborn agents: link-probability models, sampling,
expected graphs and the matrices every other module works with.

Agents are indexed globally as ``0..n_r-1`` (regular) followed by
``n_r..n-1`` (stubborn).  A model is the pair of probability blocks
``psi_r`` (regular-regular, symmetric, hollow) and ``psi_s``
(regular-stubborn).  Stubborn agents are never linked to each other.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .rng import DOMAIN_EDGES, GOLDEN, INV_2_53, mix, stream_key


class ModelError(ValueError):
    """Raised for malformed link-probability inputs."""


def _check_probabilities(a: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ModelError(f"{name} contains non-finite entries")
    if a.size and (a.min() < 0.0 or a.max() > 1.0):
        raise ModelError(f"{name} entries must lie in [0, 1]")


def check_link_matrix(psi: np.ndarray, name: str = "psi") -> np.ndarray:
    """Validate a symmetric, hollow probability matrix and return it as float64."""
    psi = np.asarray(psi, dtype=np.float64)
    if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
        raise ModelError(f"{name} must be square, got shape {psi.shape}")
    _check_probabilities(psi, name)
    if np.any(np.diag(psi) != 0.0):
        raise ModelError(f"{name} must have a zero diagonal (no self-loops)")
    if not np.array_equal(psi, psi.T):
        raise ModelError(f"{name} must be symmetric")
    return psi


@dataclass(frozen=True, eq=False)
class RgsModel:
    """Link probabilities of a random graph with ``n_s`` stubborn agents.

    ``communities`` optionally labels every agent (regular first, then
    stubborn) with a community index, as produced by :func:`build_sbm_model`.
    """

    psi_r: np.ndarray
    psi_s: np.ndarray
    communities: np.ndarray | None = None
    description: str = ""

    def __post_init__(self):
        psi_r = check_link_matrix(self.psi_r, "psi_r")
        if psi_r.shape[0] < 1:
            raise ModelError("a model needs at least one regular agent")
        psi_s = np.asarray(self.psi_s, dtype=np.float64)
        if psi_s.ndim == 1 and psi_s.size == 0:
            psi_s = psi_s.reshape(psi_r.shape[0], 0)
        if psi_s.ndim != 2 or psi_s.shape[0] != psi_r.shape[0]:
            raise ModelError(
                f"psi_s must have shape ({psi_r.shape[0]}, n_s), got {psi_s.shape}")
        _check_probabilities(psi_s, "psi_s")
        psi_r.setflags(write=False)
        psi_s.setflags(write=False)
        object.__setattr__(self, "psi_r", psi_r)
        object.__setattr__(self, "psi_s", psi_s)
        if self.communities is not None:
            c = np.asarray(self.communities, dtype=np.int64)
            if c.shape != (self.n,):
                raise ModelError("communities must label all n agents")
            c.setflags(write=False)
            object.__setattr__(self, "communities", c)

    @property
    def n_r(self) -> int:
        return self.psi_r.shape[0]

    @property
    def n_s(self) -> int:
        return self.psi_s.shape[1]

    @property
    def n(self) -> int:
        return self.n_r + self.n_s

    @property
    def model_id(self) -> str:
        """Content hash identifying the model in manifests and graph records."""
        h = hashlib.sha256()
        h.update(np.array([self.n_r, self.n_s], dtype=np.int64).tobytes())
        h.update(self.psi_r.tobytes())
        h.update(self.psi_s.tobytes())
        return h.hexdigest()[:16]

    @classmethod
    def from_full_psi(cls, psi: np.ndarray, n_r: int, **kw) -> "RgsModel":
        """Split an ``n x n`` probability matrix into the model blocks.

        Nonzero stubborn-stubborn entries are rejected: the model has no
        such edges and silently dropping them would hide an input mistake.
        """
        psi = check_link_matrix(psi)
        ss = psi[n_r:, n_r:]
        if np.any(ss != 0.0):
            i, j = np.argwhere(ss != 0.0)[0]
            raise ModelError(
                f"stubborn-stubborn link ({n_r + i}, {n_r + j}) has nonzero probability")
        return cls(psi[:n_r, :n_r].copy(), psi[:n_r, n_r:].copy(), **kw)


def build_er_psi(n: int, p: float) -> np.ndarray:
    """Erdos-Renyi link matrix: every pair linked with probability ``p``."""
    if n < 1:
        raise ModelError("n must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise ModelError(f"invalid probability {p}")
    psi = np.full((n, n), float(p))
    np.fill_diagonal(psi, 0.0)
    return psi


def build_chung_lu_psi(w: Sequence[float]) -> np.ndarray:
    """Chung-Lu link matrix ``w_i w_j / sum(w)`` for an expected-degree sequence.

    Requires ``max w_i^2 < sum w`` so that every entry is a probability.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise ModelError("weights must be a non-empty 1-D sequence")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ModelError("weights must be finite and nonnegative")
    total = w.sum()
    bad = np.flatnonzero(w * w >= total)
    if bad.size:
        raise ModelError(
            f"weight condition max w_i^2 < sum w violated at index {int(bad[0])}")
    psi = np.outer(w, w) / total
    np.fill_diagonal(psi, 0.0)
    return psi


def build_sbm_model(community_sizes: Sequence[int], pi: np.ndarray,
                    stubborn_flags: Sequence[bool], description: str = "") -> RgsModel:
    """Stochastic block model with some communities made of stubborn agents.

    Regular communities come first and stubborn ones after, each group in its
    given order.  Community ids in the result refer to positions in
    ``community_sizes``.  Stubborn-stubborn blocks of ``pi`` are ignored,
    since the model never links two stubborn agents.
    """
    sizes = np.asarray(community_sizes, dtype=np.int64)
    pi = np.asarray(pi, dtype=np.float64)
    flags = np.asarray(stubborn_flags, dtype=bool)
    k = sizes.size
    if pi.shape != (k, k) or flags.shape != (k,):
        raise ModelError(
            f"dimension mismatch: {k} sizes, pi {pi.shape}, {flags.size} flags")
    if np.any(sizes < 1):
        raise ModelError("community sizes must be positive")
    _check_probabilities(pi, "pi")
    if not np.array_equal(pi, pi.T):
        raise ModelError("pi must be symmetric")
    order = np.concatenate([np.flatnonzero(~flags), np.flatnonzero(flags)])
    labels = np.repeat(order, sizes[order])
    is_stub = flags[labels]
    psi = pi[np.ix_(labels, labels)]
    psi[np.ix_(is_stub, is_stub)] = 0.0
    np.fill_diagonal(psi, 0.0)
    n_r = int((~is_stub).sum())
    if n_r < 1:
        raise ModelError("at least one regular community is required")
    return RgsModel(psi[:n_r, :n_r].copy(), psi[:n_r, n_r:].copy(),
                    communities=labels, description=description)


def five_community_sbm(n_per_regular: int = 600, n_per_stubborn: int = 100, gamma: float = 2.0,
                 c21: float = 0.0, c22: float = 0.0, beta1: float = 2.0,
                 beta2: float = 1.1) -> RgsModel:
    """Five-community benchmark: three regular communities, two stubborn ones.

    ``p1 = (log n)^beta1/n`` within regular communities, ``p2 = (log n)^beta2/n``
    between them, and stubborn influence ``p3 = (log n)^gamma/n``.  The first
    stubborn community talks to the first regular one, the second to the
    third; ``c21`` and ``c22`` scale the links of the middle community to the
    two stubborn communities.
    """
    n = 3 * n_per_regular + 2 * n_per_stubborn
    ln = np.log(n)
    p1, p2, p3 = ln ** beta1 / n, ln ** beta2 / n, ln ** gamma / n
    if max(p1, p2, p3 * max(1.0, c21, c22)) > 1.0:
        raise ModelError("link probabilities exceed 1 for this n and exponent")
    ps = np.array([[p3, 0.0], [c21 * p3, c22 * p3], [0.0, p3]])
    pi = np.zeros((5, 5))
    pi[:3, :3] = p2
    np.fill_diagonal(pi[:3, :3], p1)
    pi[:3, 3:] = ps
    pi[3:, :3] = ps.T
    return build_sbm_model([n_per_regular] * 3 + [n_per_stubborn] * 2, pi,
                           [False, False, False, True, True],
                           description=f"five-community SBM gamma={gamma} c21={c21} c22={c22}")


def uniform_stubborn_model(n: int, c_s: float, psi: float | None = None) -> RgsModel:
    """Every non stubborn-stubborn pair linked with the same probability.

    ``n_s = round(c_s n)``; the default ``psi`` is ``(log n)^2 / n``.
    """
    n_s = int(round(c_s * n))
    n_r = n - n_s
    if psi is None:
        psi = np.log(n) ** 2 / n
    return RgsModel(build_er_psi(n_r, psi), np.full((n_r, n_s), float(psi)),
                    description=f"uniform stubborn model n={n} c_s={c_s} psi={psi:.6g}")


# ---------------------------------------------------------------- sampling

@nb.njit(cache=True)
def _edge_pass(psi_r, psi_s, key, n, out, fill):
    n_r = psi_r.shape[0]
    count = 0
    for i in range(n_r):
        for j in range(i + 1, n):
            p = psi_r[i, j] if j < n_r else psi_s[i, j - n_r]
            if p <= 0.0:
                continue
            c = np.uint64(i) * np.uint64(n) + np.uint64(j)
            u = np.float64(mix(key + c * GOLDEN) >> np.uint64(11)) * INV_2_53
            if u < p:
                if fill:
                    out[count, 0] = i
                    out[count, 1] = j
                count += 1
    return count


def _sample_edges(psi_r, psi_s, key, n):
    # count first, then fill; the hash makes both passes see the same edges
    dummy = np.empty((0, 2), dtype=np.int64)
    m = _edge_pass(psi_r, psi_s, key, n, dummy, False)
    out = np.empty((m, 2), dtype=np.int64)
    _edge_pass(psi_r, psi_s, key, n, out, True)
    return out


@dataclass(frozen=True, eq=False)
class SampledGraph:
    """One realization: sorted edge list ``(i, j)`` with ``i < j``, global indices."""

    n_r: int
    n_s: int
    edges: np.ndarray
    seed: int
    model_id: str = ""
    communities: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.n_r + self.n_s

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def adjacency_sparse(self) -> sp.csr_matrix:
        m = self.edge_count
        i, j = self.edges[:, 0], self.edges[:, 1]
        a = sp.coo_matrix((np.ones(2 * m), (np.r_[i, j], np.r_[j, i])),
                          shape=(self.n, self.n))
        return a.tocsr()

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self.edges[:, 0], self.edges[:, 1]] = 1.0
        a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def neighbors(self, i: int) -> np.ndarray:
        a = self.adjacency_sparse()
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def stubborn_reachability(self) -> list[dict]:
        """Per connected component: its regular agents and whether a stubborn agent is attached."""
        return component_report(self.adjacency_sparse(), self.n_r)

    def to_edge_list(self) -> str:
        lines = [f"# n_r={self.n_r} n_s={self.n_s} seed={self.seed}"]
        lines += [f"{i + 1} {j + 1}" for i, j in self.edges]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text: str) -> "SampledGraph":
        header, *rows = [ln for ln in text.splitlines() if ln.strip()]
        meta = dict(tok.split("=") for tok in header.lstrip("#").split())
        e = np.array([[int(a) - 1, int(b) - 1] for a, b in (r.split() for r in rows)],
                     dtype=np.int64).reshape(-1, 2)
        return cls(int(meta["n_r"]), int(meta["n_s"]), e, int(meta["seed"]))


def component_report(adj: sp.spmatrix, n_r: int) -> list[dict]:
    """Connected components restricted to regular agents, with stubborn contact."""
    adj = sp.csr_matrix(adj)
    n_comp, labels = connected_components(adj[:n_r, :n_r], directed=False)
    touch = np.asarray(adj[:n_r, n_r:].sum(axis=1)).ravel() > 0
    out = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        out.append({"component": c, "agents": members,
                    "touches_stubborn": bool(touch[members].any())})
    return out


def sample_graph(model: RgsModel, seed: int) -> SampledGraph:
    """Draw every regular-regular and regular-stubborn edge independently.

    Edge ``{i, j}`` is present iff the hash of ``(seed, i, j)`` falls below
    its probability, so the result is independent of iteration order.
    """
    key = stream_key(seed, DOMAIN_EDGES)
    edges = _sample_edges(model.psi_r, model.psi_s, key, model.n)
    edges.setflags(write=False)
    return SampledGraph(model.n_r, model.n_s, edges, int(seed), model.model_id,
                        model.communities)


@dataclass(frozen=True, eq=False)
class ExpectedGraph:
    """The weighted graph ``E{A}`` obtained by averaging the random graph."""

    model: RgsModel

    @property
    def n_r(self) -> int:
        return self.model.n_r

    @property
    def n_s(self) -> int:
        return self.model.n_s

    @property
    def alpha_star(self) -> float:
        return float(np.triu(self.model.psi_r, 1).sum() + self.model.psi_s.sum())

    def expected_adjacency(self) -> np.ndarray:
        m = self.model
        a = np.zeros((m.n, m.n))
        a[:m.n_r, :m.n_r] = m.psi_r
        a[:m.n_r, m.n_r:] = m.psi_s
        a[m.n_r:, :m.n_r] = m.psi_s.T
        return a


def expected_graph(model: RgsModel) -> ExpectedGraph:
    return ExpectedGraph(model)


# ---------------------------------------------------------------- matrices

@dataclass(frozen=True, eq=False)
class SystemMatrices:
    """``m_bar = diag(total degree) - A_rr``, ``u_bar = A_rs``, ``l_bar = m_bar - diag(u_bar 1)``."""

    m_bar: np.ndarray
    u_bar: np.ndarray
    l_bar: np.ndarray
    alpha: float
    kind: str

    @property
    def n_r(self) -> int:
        return self.m_bar.shape[0]

    @property
    def n_s(self) -> int:
        return self.u_bar.shape[1]

    @property
    def stubborn_degree(self) -> np.ndarray:
        return self.u_bar.sum(axis=1)


def _system_from_blocks(a_rr: np.ndarray, a_rs: np.ndarray, alpha: float, kind: str):
    d_s = a_rs.sum(axis=1)
    l_bar = -a_rr
    l_bar[np.diag_indices_from(l_bar)] = a_rr.sum(axis=1)
    m_bar = l_bar.copy()
    m_bar[np.diag_indices_from(m_bar)] += d_s
    return SystemMatrices(m_bar, a_rs, l_bar, float(alpha), kind)


def assemble_system(g: SampledGraph | ExpectedGraph) -> SystemMatrices:
    """Dense system matrices of a sampled or expected graph."""
    if isinstance(g, ExpectedGraph):
        return _system_from_blocks(g.model.psi_r.copy(), g.model.psi_s.copy(),
                                   g.alpha_star, "expected")
    a = g.adjacency()
    return _system_from_blocks(a[:g.n_r, :g.n_r].copy(), a[:g.n_r, g.n_r:].copy(),
                               g.edge_count, "sampled")


@dataclass(frozen=True)
class DegreeSummary:
    """Expected-degree statistics of the regular agents that drive every bound."""

    delta_r_max: float
    delta_rr_max: float
    delta_rs_max: float
    delta_sr_max: float
    delta_rs_min: float
    delta_rs_min_pos: float
    delta_rr_max_pos: float
    r0: float
    psi_s_norm: float
    n_r1: int
    n_r2: int
    n_r: int
    n_s: int

    @property
    def n(self) -> int:
        return self.n_r + self.n_s

    @property
    def d_rs_sr(self) -> float:
        """``max(Delta_rs, Delta_sr)``, the stubborn-side degree scale."""
        return max(self.delta_rs_max, self.delta_sr_max)


def spectral_norm(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(scipy.linalg.svdvals(a)[0])


def degree_summary(model: RgsModel) -> DegreeSummary:
    d_rr = model.psi_r.sum(axis=1)
    d_rs = model.psi_s.sum(axis=1)
    d_sr = model.psi_s.sum(axis=0)
    pos = d_rs > 0
    return DegreeSummary(
        delta_r_max=float((d_rr + d_rs).max()),
        delta_rr_max=float(d_rr.max()),
        delta_rs_max=float(d_rs.max()),
        delta_sr_max=float(d_sr.max()) if d_sr.size else 0.0,
        delta_rs_min=float(d_rs.min()),
        delta_rs_min_pos=float(d_rs[pos].min()) if pos.any() else 0.0,
        delta_rr_max_pos=float(d_rr[pos].max()) if pos.any() else 0.0,
        r0=model.n_r / model.n,
        psi_s_norm=spectral_norm(model.psi_s),
        n_r1=int(pos.sum()),
        n_r2=int((~pos).sum()),
        n_r=model.n_r,
        n_s=model.n_s,
    )
