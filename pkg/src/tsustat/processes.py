"""Strictly stationary process generators and finite-state Markov chains.

Process kinds: iid normals, AR(1), m-dependent moving windows over an iid
base, finite-state Markov chains started from the stationary distribution,
and a Gaussian-copula vector process (latent vector AR(1) pushed through the
standard normal CDF, giving uniform marginals and exponential mixing).

All generation is deterministic given (spec, seed, length): replication i
draws from a counter-based Philox stream keyed by SeedSequence(seed,
spawn_key=(i,)), so parallel replications reproduce independently of
scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtr

_ROW_SUM_TOL = 1e-12
_STATIONARY_TOL = 1e-10

PROCESS_KINDS = ("iid", "ar1", "m_dependent", "markov_chain", "gaussian_copula_vector")


@dataclass
class FiniteMarkovChain:
    """Row-stochastic transition matrix with its stationary distribution.

    ``state_values`` optionally maps state indices to real vectors so state
    paths can feed real-valued kernels. Matrix powers are memoized.
    """

    transition: np.ndarray
    stationary: np.ndarray | None = None
    state_values: np.ndarray | None = None
    _powers: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 2:
            raise ValueError(f"transition matrix must be square with >= 2 states, got {P.shape}")
        if np.any(P < 0):
            raise ValueError("transition matrix has negative entries")
        rows = P.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > _ROW_SUM_TOL:
            raise ValueError("transition matrix rows must sum to 1 within 1e-12")
        self.transition = P
        if self.stationary is None:
            self.stationary = _solve_stationary(P)
        pi = np.asarray(self.stationary, dtype=float)
        if abs(pi.sum() - 1.0) > _STATIONARY_TOL or np.any(pi < -_STATIONARY_TOL):
            raise ValueError("stationary vector must be a probability distribution")
        if np.max(np.abs(pi @ P - pi)) > _STATIONARY_TOL:
            raise ValueError("stationary vector does not satisfy pi P = pi within 1e-10")
        self.stationary = np.clip(pi, 0.0, None)
        self.stationary /= self.stationary.sum()
        if self.state_values is not None:
            sv = np.asarray(self.state_values, dtype=float)
            if sv.ndim == 1:
                sv = sv[:, None]
            if sv.shape[0] != self.state_count:
                raise ValueError("state_values must have one row per state")
            self.state_values = sv

    @property
    def state_count(self) -> int:
        return self.transition.shape[0]

    def power(self, n: int) -> np.ndarray:
        """P^n, memoized per chain."""
        if n < 0:
            raise ValueError("matrix power needs n >= 0")
        got = self._powers.get(n)
        if got is None:
            got = np.linalg.matrix_power(self.transition, n)
            self._powers[n] = got
        return got


def _solve_stationary(P: np.ndarray) -> np.ndarray:
    s = P.shape[0]
    A = np.vstack([P.T - np.eye(s), np.ones((1, s))])
    b = np.zeros(s + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi


def iid_chain(pi: Sequence[float]) -> FiniteMarkovChain:
    """Chain whose every row equals pi: successive states are independent."""
    pi = np.asarray(pi, dtype=float)
    return FiniteMarkovChain(np.tile(pi, (pi.size, 1)))


def two_state_chain(p: float, q: float | None = None) -> FiniteMarkovChain:
    """Two states with flip probabilities p (0 -> 1) and q (1 -> 0)."""
    if q is None:
        q = p
    return FiniteMarkovChain(np.array([[1.0 - p, p], [q, 1.0 - q]]))


def cycle_chain(s: int = 2) -> FiniteMarkovChain:
    """Deterministic cycle over s states (periodic, non-mixing)."""
    P = np.zeros((s, s))
    for i in range(s):
        P[i, (i + 1) % s] = 1.0
    return FiniteMarkovChain(P, stationary=np.full(s, 1.0 / s))


def random_chain(s: int, rng: np.random.Generator, concentration: float = 1.0) -> FiniteMarkovChain:
    """Random chain with Dirichlet rows: irreducible and aperiodic a.s."""
    P = rng.dirichlet(np.full(s, concentration), size=s)
    # keep rows safely inside the simplex so log/ratio machinery stays finite
    P = (P + 1e-6) / (1.0 + s * 1e-6)
    return FiniteMarkovChain(P)


@dataclass(frozen=True)
class ProcessSpec:
    """Declarative description of a stationary process plus its master seed."""

    kind: str
    seed: int
    ar_coefficient: float | None = None
    window: int | None = None
    chain: FiniteMarkovChain | None = None
    dimension: int | None = None
    cross_correlation: np.ndarray | None = None
    temporal_coefficient: float | None = None

    def __post_init__(self):
        if self.kind not in PROCESS_KINDS:
            raise ValueError(f"unknown process kind '{self.kind}'")
        if self.kind == "ar1":
            phi = self.ar_coefficient
            if phi is None or not (-1.0 < phi < 1.0):
                raise ValueError("AR(1) coefficient must lie strictly inside (-1, 1)")
        if self.kind == "m_dependent":
            if self.window is None or self.window < 0:
                raise ValueError("m_dependent needs window >= 0")
        if self.kind == "markov_chain" and self.chain is None:
            raise ValueError("markov_chain spec needs a chain")
        if self.kind == "gaussian_copula_vector":
            p = self.dimension
            if p is None or p < 1:
                raise ValueError("gaussian_copula_vector needs dimension >= 1")
            phi = self.temporal_coefficient
            if phi is None or not (-1.0 < phi < 1.0):
                raise ValueError("temporal coefficient must lie strictly inside (-1, 1)")
            R = self.cross_correlation
            if R is None:
                R = np.eye(p)
            R = np.asarray(R, dtype=float)
            if R.shape != (p, p):
                raise ValueError(f"cross correlation must be {p}x{p}")
            if np.max(np.abs(R - R.T)) > 1e-12 or np.max(np.abs(np.diag(R) - 1.0)) > 1e-12:
                raise ValueError("cross correlation must be symmetric with unit diagonal")
            if np.min(np.linalg.eigvalsh(R)) < -1e-10:
                raise ValueError("cross correlation must be positive semidefinite")
            object.__setattr__(self, "cross_correlation", R)

    def with_seed(self, seed: int) -> "ProcessSpec":
        return replace(self, seed=seed)


@dataclass
class SeriesPath:
    """A generated path: real-valued (T x d) or a state-index sequence."""

    values: np.ndarray | None = None
    states: np.ndarray | None = None
    spec: ProcessSpec | None = None

    def __post_init__(self):
        if (self.values is None) == (self.states is None):
            raise ValueError("a path holds either values or states")
        if self.values is not None:
            v = np.asarray(self.values, dtype=float)
            if v.ndim == 1:
                v = v[:, None]
            self.values = v
        else:
            self.states = np.asarray(self.states, dtype=np.int64)

    @property
    def length(self) -> int:
        arr = self.values if self.values is not None else self.states
        return arr.shape[0]

    @property
    def dimension(self) -> int:
        return self.values.shape[1] if self.values is not None else 1

    def to_csv(self, fh) -> None:
        if self.states is not None:
            fh.write("t,state\n")
            for t, s in enumerate(self.states):
                fh.write(f"{t},{int(s)}\n")
            return
        d = self.dimension
        fh.write("t," + ",".join(f"x{j + 1}" for j in range(d)) + "\n")
        for t in range(self.length):
            row = ",".join(f"{v:.17g}" for v in self.values[t])
            fh.write(f"{t},{row}\n")


def path_from_csv(fh) -> SeriesPath:
    header = fh.readline().strip().split(",")
    rows = [line.strip().split(",") for line in fh if line.strip()]
    if header[1:] == ["state"]:
        return SeriesPath(states=np.array([int(r[1]) for r in rows]))
    vals = np.array([[float(x) for x in r[1:]] for r in rows])
    return SeriesPath(values=vals)


def _rep_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(rep,))))


def correlation_factor(R: np.ndarray) -> np.ndarray:
    """A factor L with L L^T = R for positive SEMIdefinite R.

    Cholesky when possible; otherwise an eigenvalue square root, so singular
    cross-correlations (perfectly dependent coordinates) are reproduced
    exactly rather than through a jitter.
    """
    try:
        return np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(R)
        return V @ np.diag(np.sqrt(np.clip(w, 0.0, None)))


def generate(spec: ProcessSpec, length: int) -> SeriesPath:
    """One path; equals replication 0 of ``generate_batch``."""
    batch = generate_batch(spec, length, 1)
    if spec.kind == "markov_chain":
        return SeriesPath(states=batch[0], spec=spec)
    return SeriesPath(values=batch[0], spec=spec)


def generate_batch(spec: ProcessSpec, length: int, replications: int,
                   rep_offset: int = 0) -> np.ndarray:
    """Paths for replications [rep_offset, rep_offset + replications).

    Returns float (R, T, d) for real-valued kinds, int (R, T) for chains.
    Replication i depends only on (spec.seed, rep_offset + i), never on how
    the batch is split.
    """
    if length < 1:
        raise ValueError("path length must be >= 1")
    T, R = int(length), int(replications)
    rngs = [_rep_rng(spec.seed, rep_offset + i) for i in range(R)]

    if spec.kind == "iid":
        out = np.stack([rng.standard_normal((T, 1)) for rng in rngs])
        return out

    if spec.kind == "ar1":
        phi = spec.ar_coefficient
        draws = np.stack([rng.standard_normal(T) for rng in rngs])  # (R, T)
        x0 = draws[:, 0] * np.sqrt(1.0 / (1.0 - phi * phi))
        out = np.empty((R, T))
        out[:, 0] = x0
        if T > 1:
            filtered, _ = lfilter([1.0], [1.0, -phi], draws[:, 1:], axis=1,
                                  zi=(phi * x0)[:, None])
            out[:, 1:] = filtered
        return out[:, :, None]

    if spec.kind == "m_dependent":
        m = spec.window
        scale = 1.0 / np.sqrt(m + 1.0)
        base = np.stack([rng.standard_normal(T + m) for rng in rngs])
        win = np.lib.stride_tricks.sliding_window_view(base, m + 1, axis=1)
        return (win.sum(axis=2) * scale)[:, :, None]

    if spec.kind == "markov_chain":
        chain = spec.chain
        cum = np.cumsum(chain.transition, axis=1)
        cum_pi = np.cumsum(chain.stationary)
        u = np.stack([rng.random(T) for rng in rngs])
        states = np.empty((R, T), dtype=np.int64)
        states[:, 0] = np.searchsorted(cum_pi, u[:, 0], side="right").clip(max=chain.state_count - 1)
        for t in range(1, T):
            rows = cum[states[:, t - 1]]
            states[:, t] = (u[:, t, None] > rows).sum(axis=1)
        return states

    if spec.kind == "gaussian_copula_vector":
        p = spec.dimension
        phi = spec.temporal_coefficient
        L = correlation_factor(spec.cross_correlation)
        eps = np.stack([rng.standard_normal((T, p)) for rng in rngs])  # (R, T, p)
        latent_innov = eps @ L.T
        z = np.empty((R, T, p))
        z[:, 0, :] = latent_innov[:, 0, :]
        if T > 1:
            scale = np.sqrt(1.0 - phi * phi)
            filtered, _ = lfilter([1.0], [1.0, -phi], scale * latent_innov[:, 1:, :],
                                  axis=1, zi=(phi * z[:, 0, :])[:, None, :])
            z[:, 1:, :] = filtered
        return ndtr(z)

    raise ValueError(f"unknown process kind '{spec.kind}'")


def truncate_to_finite(path: SeriesPath, cuts: Sequence[float]) -> SeriesPath:
    """Map a one-dimensional real path to partition-cell indices.

    Cell i is [cut_{i-1}, cut_i); values below the first cut map to state 0.
    """
    cuts = np.asarray(cuts, dtype=float)
    if cuts.size == 0:
        raise ValueError("partition needs at least one cut point")
    if np.any(np.diff(cuts) <= 0):
        raise ValueError("cut points must be strictly increasing")
    if path.values is None or path.dimension != 1:
        raise ValueError("truncation needs a one-dimensional real path")
    states = np.searchsorted(cuts, path.values[:, 0], side="right")
    return SeriesPath(states=states, spec=path.spec)


def m_dependent_from_iid(base: SeriesPath, window: int,
                         aggregator: Callable[[np.ndarray], np.ndarray]) -> SeriesPath:
    """Sliding-window transform: output t is aggregator(base[t : t + window + 1]).

    ``aggregator`` receives the (T - window, window + 1) matrix of windows and
    returns one value per row. Output length is base length - window.
    """
    if window < 0:
        raise ValueError("window must be >= 0")
    if base.values is None or base.dimension != 1:
        raise ValueError("m-dependent construction needs a one-dimensional real base")
    T = base.length
    if T < window + 1:
        raise ValueError(f"base length {T} too short for window {window}")
    win = np.lib.stride_tricks.sliding_window_view(base.values[:, 0], window + 1)
    out = np.asarray(aggregator(win), dtype=float)
    if out.shape != (T - window,):
        raise ValueError("aggregator must return one value per window")
    return SeriesPath(values=out[:, None], spec=base.spec)
