"""Potentials on the fibered shift: evaluation, Birkhoff sums, variations and bounds.

Locally constant potentials of depth 1 or 2 are stored as per-state tables of
log-weights.  A depth-1 table ``t`` of state ``w`` has shape ``(l_w,)``; a
depth-2 table has shape ``(l_w, l_{step(w)})`` and entry ``[i, j]`` is the
value on the cylinder ``[ij]``.  General potentials are callables that read a
fixed number ``d`` of leading symbols; everything computed for them is exact
for that depth-``d`` truncation and only a lower bound for the potential it
approximates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .base import BaseSystem, advance, base_average
from .errors import ConfigError, EmptyFiber, EnumerationOverflow, InsufficientWordLength, NonFinite
from .shift import BipCertificate, RandomShift, Word, greedy_extension, word_array


@dataclass(frozen=True, eq=False)
class Potential:
    depth: int
    tables: tuple | None = None
    func: Callable | None = None
    kappa: tuple | float = 1.0
    r: float = 0.5
    tail_mass: float | None = None
    name: str = "table"

    def __post_init__(self):
        if (self.tables is None) == (self.func is None):
            raise ConfigError("give exactly one of tables or func")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.tables is not None:
            if self.depth > 2:
                raise ConfigError("tables are supported for depth 1 and 2 only")
            tabs = tuple(np.array(t, dtype=float) for t in self.tables)
            for t in tabs:
                t.setflags(write=False)
                if t.ndim != self.depth:
                    raise ConfigError(f"depth-{self.depth} tables need {self.depth} axes")
            object.__setattr__(self, "tables", tabs)
        if not 0 < self.r < 1:
            raise ConfigError("r must lie in (0, 1)")
        k = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        if np.any(k < 1):
            raise ConfigError("kappa must be >= 1")

    @property
    def locally_constant(self) -> bool:
        return self.func is None

    def kappa_at(self, omega: int) -> float:
        if np.ndim(self.kappa) == 0:
            return float(self.kappa)
        return float(self.kappa[omega])

    # -- evaluation -------------------------------------------------------

    def evaluate(self, omega: int, words: np.ndarray) -> np.ndarray:
        """``phi^omega`` on rows of ``words`` (each row at least ``depth`` long)."""
        words = np.asarray(words)
        if words.shape[1] < self.depth:
            raise InsufficientWordLength(f"need {self.depth} symbols, got {words.shape[1]}")
        if self.func is not None:
            return np.asarray(self.func(omega, words[:, : self.depth]), dtype=float)
        t = self.tables[omega]
        if self.depth == 1:
            return t[words[:, 0]]
        return t[words[:, 0], words[:, 1]]

    def log_weights(self, shift: RandomShift, omega: int) -> np.ndarray:
        """Log of the weight matrix: ``phi([ij])`` on allowed pairs, ``-inf`` elsewhere."""
        if self.func is not None or self.depth > 2:
            raise ConfigError("weight matrices exist only for locally constant potentials of depth <= 2")
        alpha = shift.adjacency(omega)
        t = self.tables[omega]
        full = np.broadcast_to(t[:, None], alpha.shape) if self.depth == 1 else t
        return np.where(alpha, full, -np.inf)

    def weight_matrix(self, shift: RandomShift, omega: int) -> np.ndarray:
        """``W[i, j] = exp(phi([ij]))`` if ``ij`` is allowed, else 0."""
        with np.errstate(over="ignore"):
            return np.exp(self.log_weights(shift, omega))

    def validate(self, shift: RandomShift) -> "Potential":
        base = shift.base
        if np.ndim(self.kappa) != 0 and len(self.kappa) != base.n_states:
            raise ConfigError("one kappa per base state is required")
        if self.tables is None:
            return self
        if len(self.tables) != base.n_states:
            raise ConfigError("one potential table per base state is required")
        for w in base.states:
            t = self.tables[w]
            want = (shift.alphabet_size(w),) if self.depth == 1 else shift.adjacency(w).shape
            if t.shape != want:
                raise ConfigError(f"potential table of state {w} has shape {t.shape}, expected {want}")
            vals = self.log_weights(shift, w)[shift.adjacency(w)]
            if not np.all(np.isfinite(vals)):
                raise ConfigError(f"potential of state {w} is not finite on allowed cylinders")
        return self


# -- generators -----------------------------------------------------------


def zero_potential(shift: RandomShift, kappa=1.0, r: float = 0.5) -> Potential:
    tabs = tuple(np.zeros(shift.alphabet_size(w)) for w in shift.base.states)
    return Potential(1, tabs, kappa=kappa, r=r, tail_mass=None, name="zero").validate(shift)


def bernoulli_potential(shift: RandomShift, probs: Sequence[float], kappa=1.0, r: float = 0.5) -> Potential:
    """``phi([b]) = log p_b`` on every fiber."""
    p = np.asarray(probs, dtype=float)
    if np.any(p <= 0):
        raise ConfigError("Bernoulli weights must be positive")
    tabs = []
    for w in shift.base.states:
        if shift.alphabet_size(w) != p.size:
            raise ConfigError(f"state {w} has {shift.alphabet_size(w)} symbols but {p.size} weights given")
        tabs.append(np.log(p))
    return Potential(1, tuple(tabs), kappa=kappa, r=r, name="bernoulli").validate(shift)


def geometric_potential(shift: RandomShift, kappa=1.0, r: float = 0.5) -> Potential:
    """``phi([b]) = -(b + 1) log 2``; the mass beyond the truncation is ``2^-L``."""
    tabs = tuple(-(np.arange(shift.alphabet_size(w)) + 1.0) * np.log(2.0) for w in shift.base.states)
    tail = 2.0 ** -shift.truncation if shift.truncation is not None else 0.0
    return Potential(1, tabs, kappa=kappa, r=r, tail_mass=tail, name="geometric").validate(shift)


def matrix_log_potential(shift: RandomShift, matrices: Sequence, kappa=1.0, r: float = 0.5) -> Potential:
    """Depth-2 potential ``phi([ij]) = log p_ij``; the pattern of ``p > 0`` must match the shift."""
    tabs = []
    for w in shift.base.states:
        p = np.asarray(matrices[w], dtype=float)
        alpha = shift.adjacency(w)
        if p.shape != alpha.shape:
            raise ConfigError(f"matrix of state {w} has shape {p.shape}, expected {alpha.shape}")
        if np.any(p < 0) or np.any((p > 0) != alpha):
            raise ConfigError(f"matrix of state {w} does not match the adjacency pattern")
        with np.errstate(divide="ignore"):
            tabs.append(np.where(alpha, np.log(np.where(alpha, p, 1.0)), -np.inf))
    return Potential(2, tuple(tabs), kappa=kappa, r=r, name="matrix-log").validate(shift)


def table_potential(shift: RandomShift, tables: Sequence, depth: int, kappa=1.0, r: float = 0.5) -> Potential:
    return Potential(depth, tuple(tables), kappa=kappa, r=r).validate(shift)


def decaying_sum_potential(shift: RandomShift, coeffs: Sequence[float], g: Sequence[float],
                           r: float, eval_depth: int) -> Potential:
    """``phi^w(x) = c_w * sum_{i < d} r^i g(x_i)``, a Hölder potential read to depth ``d``.

    Its variations satisfy ``V_n <= |c_w| spread(g) r^n / (1 - r)``, which fixes
    the declared ``kappa``.
    """
    g = np.asarray(g, dtype=float)
    c = np.asarray(coeffs, dtype=float)
    powers = r ** np.arange(eval_depth)
    spread = float(g.max() - g.min())
    kappa = tuple(max(1.0, abs(ci) * spread / (1 - r)) for ci in c)

    def func(omega, words):
        return c[omega] * (g[words] @ powers[: words.shape[1]])

    return Potential(eval_depth, func=func, kappa=kappa, r=r, name="decaying-sum").validate(shift)


# -- Birkhoff sums --------------------------------------------------------


def extend_words(shift: RandomShift, omega: int, words: np.ndarray, length: int):
    """All admissible extensions of each row of ``words`` to ``length`` symbols.

    Returns ``(extended, parent)`` where ``parent[k]`` is the row of ``words``
    that row ``k`` extends.
    """
    words = np.asarray(words, dtype=np.int64)
    parent = np.arange(words.shape[0])
    w = advance(shift.base, omega, words.shape[1] - 1)
    while words.shape[1] < length:
        succ = shift.matrices[w][words[:, -1]]
        if int(succ.sum()) > shift.word_cap:
            raise EnumerationOverflow(f"more than {shift.word_cap} extensions")
        rows, cols = np.nonzero(succ)
        words = np.concatenate([words[rows], cols[:, None]], axis=1)
        parent = parent[rows]
        w = shift.base.step[w]
    return words, parent


def birkhoff(pot: Potential, shift: RandomShift, omega: int, words: np.ndarray, n: int) -> np.ndarray:
    """``phi_n^omega`` on rows that are long enough to fix every term."""
    words = np.asarray(words)
    if words.shape[1] < n + pot.depth - 1:
        raise InsufficientWordLength(
            f"Birkhoff sum of {n} terms needs {n + pot.depth - 1} symbols, got {words.shape[1]}"
        )
    total = np.zeros(words.shape[0])
    w = omega
    for i in range(n):
        total += pot.evaluate(w, words[:, i:])
        w = shift.base.step[w]
    return total


def birkhoff_range(pot: Potential, shift: RandomShift, omega: int, words: np.ndarray, n: int):
    """``(sup, inf)`` of ``phi_n^omega`` over each cylinder ``[w]``."""
    words = np.asarray(words)
    need = n + pot.depth - 1
    if words.shape[1] >= need:
        v = birkhoff(pot, shift, omega, words, n)
        return v, v.copy()
    ext, parent = extend_words(shift, omega, words, need)
    v = birkhoff(pot, shift, omega, ext, n)
    hi = np.full(words.shape[0], -np.inf)
    lo = np.full(words.shape[0], np.inf)
    np.maximum.at(hi, parent, v)
    np.minimum.at(lo, parent, v)
    return hi, lo


def phi_sum(pot: Potential, shift: RandomShift, omega: int, w, n: int, mode: str = "sup",
            point: Sequence[int] | None = None) -> float:
    """Birkhoff sum ``phi_n^omega`` over the cylinder of ``w``.

    ``mode`` is ``sup`` or ``inf`` over the cylinder, ``exact`` (the word must
    fix every term) or ``point`` (evaluated at ``point``, by default the
    lexicographically minimal greedy extension of ``w``).
    """
    symbols = tuple(w.symbols if isinstance(w, Word) else w)
    if n > len(symbols):
        raise ValueError("n must not exceed the word length")
    need = n + pot.depth - 1
    if mode in ("sup", "inf"):
        hi, lo = birkhoff_range(pot, shift, omega, np.array([symbols]), n)
        return float(hi[0] if mode == "sup" else lo[0])
    if mode == "exact":
        if len(symbols) < need:
            raise InsufficientWordLength(f"exact Birkhoff sum needs {need} symbols, got {len(symbols)}")
        return float(birkhoff(pot, shift, omega, np.array([symbols]), n)[0])
    if mode == "point":
        x = tuple(point) if point is not None else greedy_extension(shift, omega, symbols, need)
        if x[: len(symbols)] != symbols or len(x) < need:
            raise ValueError("point must extend the word and fix every term")
        return float(birkhoff(pot, shift, omega, np.array([x[:need]]), n)[0])
    raise ValueError(f"unknown mode {mode!r}")


# -- variation, distortion, summability ----------------------------------


def variation(pot: Potential, shift: RandomShift, omega: int, n: int) -> float:
    """``V_n^omega``: largest oscillation of ``phi^omega`` on an ``n``-cylinder.

    ``n = 0`` gives the oscillation over the whole fiber.  Locally constant
    potentials (and depth-capped general ones) have ``V_n = 0`` for ``n >= depth``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    d = pot.depth
    if n >= d:
        return 0.0
    if n == 0:
        vals = pot.evaluate(omega, word_array(shift, omega, d))
        return float(vals.max() - vals.min())
    hi, lo = birkhoff_range(pot, shift, omega, word_array(shift, omega, n), 1)
    return float(np.max(hi - lo))


def _distortion_log(pot: Potential, base: BaseSystem, omega: int) -> float:
    p = base.orbit_period(omega)
    block = sum(pot.kappa_at(advance(base, omega, -k)) * pot.r**k for k in range(1, p + 1))
    return block / (1.0 - pot.r**p)


def distortion(pot: Potential, base: BaseSystem, omega: int) -> float:
    """``B_omega = exp sum_{k>=1} kappa(step^-k omega) r^k``, summed in closed form over the cycle."""
    return float(np.exp(_distortion_log(pot, base, omega)))


def distortion_interval(pot: Potential, base: BaseSystem, omega: int, K_max: int) -> tuple[float, float]:
    """Partial sum up to ``K_max`` together with the geometric tail bound."""
    partial = sum(pot.kappa_at(advance(base, omega, -k)) * pot.r**k for k in range(1, K_max + 1))
    kmax = max(pot.kappa_at(w) for w in base.states)
    tail = kmax * pot.r ** (K_max + 1) / (1.0 - pot.r)
    return float(np.exp(partial)), float(np.exp(partial + tail))


def preimage_sums(pot: Potential, shift: RandomShift, omega: int) -> np.ndarray:
    """``L^omega 1`` on the cylinders of ``X_{step(omega)}`` that determine it.

    For depth <= 2 these are the symbols of the next fiber (column sums of the
    weight matrix); general potentials use cylinders of length ``depth - 1``.
    """
    nxt = shift.base.step[omega]
    alpha = shift.adjacency(omega)
    dead = np.flatnonzero(~alpha.any(axis=0))
    if dead.size:
        raise EmptyFiber(f"symbol {int(dead[0])} of state {nxt} has no predecessor in state {omega}")
    if pot.locally_constant:
        return pot.weight_matrix(shift, omega).sum(axis=0)
    C = word_array(shift, nxt, max(pot.depth - 1, 1))
    out = np.zeros(C.shape[0])
    for i in range(shift.alphabet_size(omega)):
        ok = alpha[i, C[:, 0]]
        if ok.any():
            rows = np.concatenate([np.full((int(ok.sum()), 1), i), C[ok]], axis=1)
            out[ok] += np.exp(pot.evaluate(omega, rows))
    return out


def summability_bounds(pot: Potential, shift: RandomShift, omega: int) -> tuple[float, float]:
    """``(m_omega, M_omega)``: inf and sup of ``L^omega 1`` over the next fiber."""
    s = preimage_sums(pot, shift, omega)
    return float(s.min()), float(s.max())


@dataclass
class ConditionReport:
    H1: bool
    H2: bool
    Hstar: bool
    S1: bool
    S2: bool
    mean_log_B: float
    mean_log_M: float
    mean_neg_log_m: float
    variations: dict
    global_spread: dict
    truncation: int | None
    exact: bool
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "H1": self.H1, "H2": self.H2, "H*": self.Hstar, "S1": self.S1, "S2": self.S2,
            "mean_log_B": self.mean_log_B, "mean_log_M": self.mean_log_M,
            "mean_neg_log_m": self.mean_neg_log_m,
            "variations": {str(k): v for k, v in self.variations.items()},
            "global_spread": {str(k): v for k, v in self.global_spread.items()},
            "truncation": self.truncation, "exact": self.exact, "notes": list(self.notes),
        }


def check_conditions(pot: Potential, shift: RandomShift, cert: BipCertificate | None = None,
                     n_check: int = 8) -> ConditionReport:
    """Evaluate the regularity and summability hypotheses on the truncated system.

    On a finite base every average is a finite sum, so the integrability
    requirements become finiteness checks; the report says so in ``notes``.
    """
    base = shift.base
    var = {w: [variation(pot, shift, w, n) for n in range(1, n_check + 1)] for w in base.states}

    def holder_from(k):
        return all(
            var[w][n - 1] <= pot.kappa_at(w) * pot.r**n * (1 + 1e-12)
            for w in base.states for n in range(k, n_check + 1)
        )

    bounds = [summability_bounds(pot, shift, w) for w in base.states]
    log_M = [np.log(M) for _, M in bounds]
    with np.errstate(divide="ignore"):
        log_m = [np.log(m) for m, _ in bounds]
    log_B = [_distortion_log(pot, base, w) for w in base.states]

    def avg(vals):
        try:
            return base_average(base, vals)
        except NonFinite:
            return float("inf") if any(v == np.inf for v in vals) else float("-inf")

    mean_log_M, mean_log_m = avg(log_M), avg(log_m)
    notes = ["finite base: integrability conditions reduce to finiteness of per-state values"]
    if cert is not None:
        required = {base.inverse_step(w) for w in cert.omega_bi | cert.omega_bp}
    else:
        required = set(base.states)
        notes.append("no certificate given: V_1 checked on every state")
    hstar = all(np.isfinite(var[w][0]) for w in required)
    spread = {w: variation(pot, shift, w, 0) for w in base.states}
    if shift.truncation is not None and pot.locally_constant and pot.depth == 1:
        grows = any(
            np.ptp(pot.tables[w]) > np.ptp(pot.tables[w][:-1]) + 1e-12
            for w in base.states if pot.tables[w].size > 1
        )
        if grows:
            notes.append(
                f"oscillation over the fiber grows with the truncation level L={shift.truncation}; "
                "it may be unbounded on the untruncated alphabet"
            )
    if not pot.locally_constant:
        notes.append(f"general potential evaluated to depth {pot.depth}: variations are lower bounds")
    return ConditionReport(
        H1=holder_from(1), H2=holder_from(2), Hstar=hstar,
        S1=bool(np.isfinite(mean_log_M)), S2=bool(np.isfinite(mean_log_m)),
        mean_log_B=avg(log_B), mean_log_M=mean_log_M, mean_neg_log_m=-mean_log_m,
        variations=var, global_spread=spread, truncation=shift.truncation,
        exact=pot.locally_constant, notes=notes,
    )
