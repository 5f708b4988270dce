"""Random nonnegative matrices: Perron-Frobenius triples and stationary distributions.

Conventions: a cocycle stores ``A[w]`` of shape ``(l_w, l_{step w})``.  A
:class:`PFTriple` satisfies

    h[w] @ A[w] = lam[w] * h[step w],   A[w] @ mu[step w] = lam[w] * mu[w],   h[w] @ mu[w] = 1,

with every ``mu[w]`` a probability vector.  This is the gauge in which ``mu``
holds the 1-cylinder masses of the conformal measure of ``log p_ij`` and
``h`` its eigenfunction.

Stationary distributions use the reverse-time transpose convention: the
chain with transition matrices ``A`` is paired with the shift over the
inverse base whose matrix at ``w`` is ``A[step^-1 w]^T``, with potential
``log`` of those entries.  Its conformal measure on 1-cylinders is ``pi``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .base import BaseSystem, advance
from .errors import ConfigError, NoConvergence, NotStochastic, TruncationUnsound, ZeroRow
from .potential import Potential, matrix_log_potential
from .shift import BipCertificate, RandomShift, verify_bip


@dataclass(frozen=True, eq=False)
class MatrixCocycle:
    base: BaseSystem
    matrices: tuple

    def __post_init__(self):
        mats = tuple(np.array(m, dtype=float) for m in self.matrices)
        if len(mats) != self.base.n_states:
            raise ConfigError("one matrix per base state is required")
        for w, m in enumerate(mats):
            if m.ndim != 2 or np.any(m < 0) or not np.all(np.isfinite(m)):
                raise ConfigError(f"matrix of state {w} must be a finite nonnegative 2-d array")
            nxt = self.base.step[w]
            if m.shape[1] != mats[nxt].shape[0]:
                raise ConfigError(f"matrix of state {w} does not chain with state {nxt}")
            m.setflags(write=False)
        object.__setattr__(self, "matrices", mats)

    @classmethod
    def from_environments(cls, base: BaseSystem, env_matrices: Sequence) -> "MatrixCocycle":
        return cls(base, tuple(env_matrices[base.label(w)] for w in base.states))

    def signum(self) -> RandomShift:
        zero = [w for w, m in enumerate(self.matrices) if not (m > 0).any(axis=1).all()]
        if zero:
            raise ZeroRow(f"matrix of state {zero[0]} has a zero row")
        return RandomShift(self.base, tuple(m > 0 for m in self.matrices), generator="matrix")

    def potential(self, shift: RandomShift | None = None) -> Potential:
        shift = self.signum() if shift is None else shift
        return matrix_log_potential(shift, self.matrices)

    def transpose(self) -> "MatrixCocycle":
        """Reverse-time transpose: matrix ``A[step^-1 w]^T`` at ``w`` over the inverse base."""
        inv = self.base.inverse()
        return MatrixCocycle(inv, tuple(self.matrices[self.base.inverse_step(w)].T for w in self.base.states))

    def is_stochastic(self, tol: float = 1e-12) -> bool:
        return all(np.all(np.abs(m.sum(axis=1) - 1) <= tol) for m in self.matrices)


# -- summable b.i.p. ------------------------------------------------------


def ratio_sup(m: np.ndarray) -> float:
    """``sup p_ij / p_ik`` over rows ``i`` and entries with ``p_ik > 0``."""
    best = 1.0
    for row in m:
        pos = row[row > 0]
        if pos.size:
            best = max(best, float(row.max() / pos.min()))
    return best


@dataclass
class SummableBipReport:
    signum_bip: bool
    ratio_bounded: bool
    column_sums_bounded: bool
    bip_witnesses: dict
    ratios: dict
    column_sums: dict

    @property
    def ok(self) -> bool:
        return self.signum_bip and self.ratio_bounded and self.column_sums_bounded

    def as_dict(self) -> dict:
        return {
            "i": self.signum_bip, "ii": self.ratio_bounded, "iii": self.column_sums_bounded,
            "bip_witnesses": self.bip_witnesses,
            "ratios": {str(k): v for k, v in self.ratios.items()},
            "column_sums": {str(k): v for k, v in self.column_sums.items()},
        }


def check_summable_bip(A: MatrixCocycle, cert: BipCertificate, shift: RandomShift | None = None) -> SummableBipReport:
    """Conditions (i)-(iii) for a summable random matrix with big images and preimages.

    The ratio condition is required on ``step^-1(Omega_bi | Omega_bp)``;
    column sums must be positive and finite at every state.
    """
    base = A.base
    shift = A.signum() if shift is None else shift
    try:
        rep = verify_bip(shift, cert)
        ok_i = rep.ok
        wit = {"image_failures": rep.image_failures, "preimage_failures": rep.preimage_failures}
    except TruncationUnsound as exc:
        ok_i, wit = False, {"truncation": str(exc)}
    required = sorted({base.inverse_step(w) for w in cert.omega_bi | cert.omega_bp})
    ratios = {w: ratio_sup(A.matrices[w]) for w in required}
    cols = {}
    for w in base.states:
        c = A.matrices[w].sum(axis=0)
        cols[w] = (float(c.min()), float(c.max()))
    ok_iii = all(lo > 0 and np.isfinite(hi) for lo, hi in cols.values())
    return SummableBipReport(ok_i, all(np.isfinite(list(ratios.values()))), ok_iii, wit, ratios, cols)


# -- Perron-Frobenius -----------------------------------------------------


@dataclass
class PFTriple:
    lam: np.ndarray
    h: tuple
    mu: tuple
    residual_left: float
    residual_right: float
    residual_norm: float
    sweeps: int

    @property
    def residual(self) -> float:
        return max(self.residual_left, self.residual_right, self.residual_norm)

    def log_Lambda(self, base: BaseSystem, omega: int, n: int) -> float:
        return float(sum(np.log(self.lam[w]) for w in base.orbit(omega, n)))


def _residuals(A: MatrixCocycle, lam, h, mu):
    base = A.base
    left = right = norm = 0.0
    for w in base.states:
        nxt = base.step[w]
        M = A.matrices[w]
        left = max(left, float(np.abs(h[w] @ M - lam[w] * h[nxt]).max() / np.abs(h[nxt]).max()))
        right = max(right, float(np.abs(M @ mu[nxt] - lam[w] * mu[w]).max() / np.abs(mu[w]).max()))
        norm = max(norm, abs(float(h[w] @ mu[w]) - 1.0))
    return left, right, norm


def random_pf(A: MatrixCocycle, tol: float = 1e-12, iter_cap: int = 100_000) -> PFTriple:
    """Random Perron-Frobenius triple by normalized power sweeps over the cocycle.

    ``h`` is swept forwards (``h[step w] <- h[w] @ A[w]``, sup-normalized) and
    ``mu`` backwards (``mu[w] <- A[w] @ mu[step w]``, normalized to a
    probability vector).  Then ``lam[w] = sum(A[w] @ mu[step w])`` and each
    ``h[w]`` is rescaled so that ``h[w] @ mu[w] = 1``.
    """
    base = A.base
    A.signum()  # raises ZeroRow
    for w, m in enumerate(A.matrices):
        if not (m > 0).any(axis=0).all():
            raise ZeroRow(f"matrix of state {w} has a zero column")
    h = [np.ones(m.shape[0]) for m in A.matrices]
    mu = [np.full(m.shape[0], 1.0 / m.shape[0]) for m in A.matrices]
    change = np.inf
    for sweep in range(1, iter_cap + 1):
        nh, nmu = [None] * base.n_states, [None] * base.n_states
        for w in base.states:
            nxt = base.step[w]
            v = h[w] @ A.matrices[w]
            nh[nxt] = v / v.max()
            u = A.matrices[w] @ mu[nxt]
            nmu[w] = u / u.sum()
        change = max(max(np.abs(x - y).max() for x, y in zip(nh, h)),
                     max(np.abs(x - y).max() for x, y in zip(nmu, mu)))
        h, mu = nh, nmu
        if change < tol:
            break
    else:
        raise NoConvergence(f"power sweeps did not settle within {iter_cap} sweeps (last change {change})")
    lam = np.array([float((A.matrices[w] @ mu[base.step[w]]).sum()) for w in base.states])
    h = [x / float(x @ mu[w]) for w, x in enumerate(h)]
    left, right, norm = _residuals(A, lam, h, mu)
    return PFTriple(lam, tuple(h), tuple(mu), left, right, norm, sweep)


@dataclass
class DecayTable:
    n: np.ndarray
    deviation: np.ndarray


def rank_one_convergence(A: MatrixCocycle, pf: PFTriple, omega: int, i: int, n_max: int) -> DecayTable:
    """``sum_j |(A^w ... A^{step^{n-1} w})_ij / Lambda_n - mu_i h_j| mu_j`` for ``n = 1..n_max``.

    The row is divided by ``lam`` at every step, so no growth has to be absorbed.
    """
    base = A.base
    row = np.zeros(A.matrices[omega].shape[0])
    row[i] = 1.0
    w = omega
    dev = np.empty(n_max)
    for n in range(1, n_max + 1):
        row = row @ A.matrices[w] / pf.lam[w]
        w = base.step[w]
        dev[n - 1] = float((np.abs(row - pf.mu[omega][i] * pf.h[w]) * pf.mu[w]).sum())
    return DecayTable(np.arange(1, n_max + 1), dev)


# -- stationary distributions ---------------------------------------------


def reversed_system(A: MatrixCocycle) -> tuple[RandomShift, Potential]:
    """Shift and depth-2 potential of the reverse-time transpose convention."""
    T = A.transpose()
    shift = T.signum()
    return shift, matrix_log_potential(shift, T.matrices)


@dataclass
class StationaryResult:
    pi: tuple
    residual: float
    restart_agreement: float
    sweeps: int
    seed: int

    def as_dict(self) -> dict:
        return {"residual": self.residual, "restart_agreement": self.restart_agreement,
                "sweeps": self.sweeps, "seed": self.seed,
                "pi": [[float(x) for x in p] for p in self.pi]}


def _stationary_sweeps(A: MatrixCocycle, start: list, tol: float, iter_cap: int):
    base = A.base
    pi = [p / p.sum() for p in start]
    for sweep in range(1, iter_cap + 1):
        new = [None] * base.n_states
        for w in base.states:
            new[base.step[w]] = pi[w] @ A.matrices[w]
        change = max(np.abs(x - y).max() for x, y in zip(new, pi))
        pi = new
        if change < tol:
            return pi, sweep
    raise NoConvergence(f"stationary sweeps did not settle within {iter_cap} sweeps (last change {change})")


def stationary_distribution(A: MatrixCocycle, tol: float = 1e-14, iter_cap: int = 100_000,
                            seed: int = 0, stochastic_tol: float = 1e-12) -> StationaryResult:
    """Random stationary distribution ``pi[w] @ A[w] = pi[step w]``.

    Iterates the cocycle forwards from the uniform vectors, then twice more
    from seeded random starting vectors.  ``restart_agreement`` is the
    largest difference between the three answers.
    """
    base = A.base
    for w, m in enumerate(A.matrices):
        if np.any(np.abs(m.sum(axis=1) - 1) > stochastic_tol):
            raise NotStochastic(f"rows of the matrix of state {w} do not sum to 1")
    uniform = [np.full(m.shape[0], 1.0 / m.shape[0]) for m in A.matrices]
    pi, sweeps = _stationary_sweeps(A, uniform, tol, iter_cap)
    rng = np.random.default_rng(seed)
    agree = 0.0
    for _ in range(2):
        start = [rng.dirichlet(np.ones(m.shape[0])) for m in A.matrices]
        other, _ = _stationary_sweeps(A, start, tol, iter_cap)
        agree = max(agree, max(np.abs(x - y).max() for x, y in zip(pi, other)))
    res = max(float(np.abs(pi[w] @ A.matrices[w] - pi[base.step[w]]).max()) for w in base.states)
    return StationaryResult(tuple(pi), res, agree, sweeps, seed)


def backward_product_convergence(A: MatrixCocycle, pi: Sequence, f, omega: int, n_max: int) -> DecayTable:
    """``sum_j pi_j |(A^{step^-n w} ... A^{step^-1 w} f)_j - <f, pi^w>|`` for ``n = 1..n_max``."""
    base = A.base
    g = np.asarray(f, dtype=float)
    target = float(g @ pi[omega])
    dev = np.empty(n_max)
    w = omega
    for n in range(1, n_max + 1):
        w = base.inverse_step(w)
        g = A.matrices[w] @ g
        dev[n - 1] = float((pi[w] * np.abs(g - target)).sum())
    return DecayTable(np.arange(1, n_max + 1), dev)


def time_reversal_residual(A: MatrixCocycle, pi: Sequence, mu, n: int) -> tuple[float, tuple]:
    """Compare the reversed system's depth-``n+1`` measure with path probabilities.

    ``mu`` is a :class:`~randtmc.spectral.CylinderMeasure` of the reversed
    system (states indexed as in ``A.base``).  For every admissible word
    ``v = (v_0 .. v_n)`` at ``w`` the expected mass is
    ``pi^{step^-n w}_{v_n} p^{step^-n w}_{v_n v_{n-1}} ... p^{step^-1 w}_{v_1 v_0}``.
    Returns the largest absolute difference and its ``(state, word)``.
    """
    base = A.base
    if mu.depth < n + 1:
        raise ValueError(f"measure depth {mu.depth} is below {n + 1}")
    m = mu.marginal(n + 1)
    worst, witness = -1.0, None
    for w in base.states:
        # expected[v_0, ..., v_n] built from the far end: start with pi at step^-n w
        exp_t = np.asarray(pi[advance(base, w, -n)], dtype=float)
        for k in range(n, 0, -1):
            P = A.matrices[advance(base, w, -k)]  # p_{v_k v_{k-1}}
            exp_t = exp_t[..., None] * P.reshape((1,) * (exp_t.ndim - 1) + P.shape)
        exp_t = np.transpose(exp_t, tuple(range(exp_t.ndim - 1, -1, -1)))
        diff = np.abs(exp_t - m.masses[w])
        k = int(np.argmax(diff))
        if diff.flat[k] > worst:
            worst = float(diff.flat[k])
            witness = (w, tuple(int(i) for i in np.unravel_index(k, diff.shape)))
    return worst, witness
