"""Ruelle operator, partition functions and relative Gurevič pressure.

For locally constant potentials of depth at most 2 every weighted path sum is
an entry (or a row/column sum) of a product of weight matrices
``W_omega W_{step omega} ... W_{step^{n-1} omega}``.  Products are carried in
log-space: the running row vector is divided by its maximum after each
factor and the logs of the divisors are accumulated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .base import advance, return_times
from .errors import (
    AnchorMissing,
    DepthUnderflow,
    DivergentDiagnostics,
    HypothesisFail,
    NotMixedWithinHorizon,
)
from .potential import Potential, birkhoff_range, distortion, variation
from .shift import BipCertificate, RandomShift, greedy_extension, mixing_time

# pressure values below this are reported as -inf ("below -1e3 within horizon")
PRESSURE_FLOOR = -1e3


def weight_matrices(shift: RandomShift, pot: Potential) -> list[np.ndarray]:
    return [pot.weight_matrix(shift, w) for w in shift.base.states]


# -- cylinder functions ---------------------------------------------------


def cylinder_mask(shift: RandomShift, omega: int, d: int) -> np.ndarray:
    """Boolean tensor with ``d`` axes marking the admissible depth-``d`` words at ``omega``."""
    mask = np.ones(shift.alphabet_size(omega), dtype=bool)
    w = omega
    for k in range(d - 1):
        alpha = shift.adjacency(w)
        mask = mask[..., None] & alpha.reshape((1,) * k + alpha.shape)
        w = shift.base.step[w]
    return mask


@dataclass
class CylinderFunction:
    """A function on ``X_omega`` that is constant on depth-``d`` cylinders."""

    omega: int
    values: np.ndarray

    @property
    def depth(self) -> int:
        return self.values.ndim

    @classmethod
    def constant(cls, shift: RandomShift, omega: int, d: int = 1, c: float = 1.0) -> "CylinderFunction":
        return cls(omega, np.where(cylinder_mask(shift, omega, d), c, 0.0))

    @classmethod
    def indicator(cls, shift: RandomShift, omega: int, word: Sequence[int], d: int | None = None):
        d = max(len(word), 1) if d is None else d
        if d < len(word):
            raise DepthUnderflow("indicator of a word needs depth at least its length")
        v = np.zeros(cylinder_mask(shift, omega, d).shape)
        v[tuple(word)] = 1.0
        return cls(omega, np.where(cylinder_mask(shift, omega, d), v, 0.0))

    @classmethod
    def from_values(cls, shift: RandomShift, omega: int, values) -> "CylinderFunction":
        values = np.asarray(values, dtype=float)
        mask = cylinder_mask(shift, omega, values.ndim)
        if values.shape != mask.shape:
            raise ValueError(f"values have shape {values.shape}, expected {mask.shape}")
        return cls(omega, np.where(mask, values, 0.0))

    def at(self, point: Sequence[int]) -> float:
        return float(self.values[tuple(point[: self.depth])])

    def refine(self, shift: RandomShift, d: int) -> "CylinderFunction":
        """The same function written on depth-``d`` cylinders (``d >= depth``)."""
        if d < self.depth:
            raise DepthUnderflow(f"cannot write a depth-{self.depth} function at depth {d}")
        mask = cylinder_mask(shift, self.omega, d)
        v = self.values.reshape(self.values.shape + (1,) * (d - self.depth))
        return CylinderFunction(self.omega, np.where(mask, np.broadcast_to(v, mask.shape), 0.0))


def ruelle_apply(shift: RandomShift, pot: Potential, omega: int, f: CylinderFunction,
                 out_depth: int | None = None, W: np.ndarray | None = None) -> CylinderFunction:
    """``(L^omega f)(x) = sum_{T y = x} e^{phi(y)} f(y)`` for depth <= 2 potentials.

    The result is exact at depth ``max(f.depth - 1, 1)``; a larger
    ``out_depth`` refines it, a smaller one raises :class:`DepthUnderflow`.
    """
    if f.omega != omega:
        raise ValueError("f lives on a different fiber")
    W = pot.weight_matrix(shift, omega) if W is None else W
    if f.depth == 1:
        vals = W.T @ f.values
    else:
        vals = np.einsum("ij,ij...->j...", W, f.values)
    out = CylinderFunction(shift.base.step[omega], vals)
    natural = out.depth
    if out_depth is None or out_depth == natural:
        return out
    if out_depth < natural:
        raise DepthUnderflow(f"L f is not constant on depth-{out_depth} cylinders")
    return out.refine(shift, out_depth)


# -- anchors --------------------------------------------------------------


def anchor_point(shift: RandomShift, omega: int, a: int, length: int) -> tuple:
    """Lexicographically minimal greedy point of ``[a]_omega``, cut to ``length`` symbols."""
    if not 0 <= a < shift.alphabet_size(omega):
        raise AnchorMissing(f"symbol {a} is not available at state {omega}")
    return greedy_extension(shift, omega, (a,), length)


@dataclass(frozen=True)
class AnchorFamily:
    """Points ``xi_omega`` in ``[symbol]_omega`` (symbol 0 where ``symbol`` is unavailable).

    The fallback only matters for the full preimage function off ``Omega_a``;
    every quantity tied to ``[a]`` checks membership itself.
    """

    shift: RandomShift
    symbol: int

    def in_cylinder(self, omega: int) -> bool:
        return self.symbol < self.shift.alphabet_size(omega)

    def first_symbol(self, omega: int) -> int:
        return self.symbol if self.in_cylinder(omega) else 0

    def point(self, omega: int, length: int) -> tuple:
        return anchor_point(self.shift, omega, self.first_symbol(omega), length)


# -- partition functions --------------------------------------------------


class _LogRow:
    """Row vector ``v * exp(scale)`` with ``max(v) == 1`` (or ``v == 0``)."""

    def __init__(self, v):
        self.v = np.asarray(v, dtype=float)
        self.scale = 0.0
        self._norm()

    def _norm(self):
        m = self.v.max() if self.v.size else 0.0
        if m > 0:
            self.v = self.v / m
            self.scale += float(np.log(m))
        else:
            self.scale = -np.inf

    def times(self, W):
        if np.isfinite(self.scale):
            self.v = self.v @ W
            self._norm()
        else:
            self.v = np.zeros(W.shape[1])

    def log_entry(self, j) -> float:
        if j >= self.v.size or self.v[j] <= 0 or not np.isfinite(self.scale):
            return -np.inf
        return float(np.log(self.v[j]) + self.scale)

    def log_dot(self, r) -> float:
        s = float(self.v @ r)
        if s <= 0 or not np.isfinite(self.scale):
            return -np.inf
        return float(np.log(s) + self.scale)


@dataclass
class PartitionProfile:
    """Logs of the four path sums at ``omega`` for ``n = 1..n_max``.

    ``logZ[n-1]`` is ``log Z_n(a)``, ``logCZ`` the local preimage function
    (``nan`` where ``step^n omega`` misses ``Omega_a``), ``logCZ_full`` the
    preimage function anchored by the family and ``logA`` the sum of sups.
    """

    omega: int
    a: int
    logZ: np.ndarray
    logCZ: np.ndarray
    logCZ_full: np.ndarray
    logA: np.ndarray


def partition_profile(shift: RandomShift, pot: Potential, anchors: AnchorFamily, omega: int,
                      n_max: int, Ws: list | None = None) -> PartitionProfile:
    a = anchors.symbol
    if not 0 <= a < shift.alphabet_size(omega):
        raise AnchorMissing(f"state {omega} is not in Omega_{a}")
    Ws = weight_matrices(shift, pot) if Ws is None else Ws
    e = np.zeros(shift.alphabet_size(omega))
    e[a] = 1.0
    loop, full = _LogRow(e), _LogRow(np.ones(shift.alphabet_size(omega)))
    logZ, logCZ, logF, logA = (np.empty(n_max) for _ in range(4))
    w = omega
    for n in range(1, n_max + 1):
        W = Ws[w]
        logA[n - 1] = full.log_dot(W.max(axis=1))
        loop.times(W)
        full.times(W)
        w = shift.base.step[w]
        logZ[n - 1] = loop.log_entry(a)
        logCZ[n - 1] = logZ[n - 1] if anchors.in_cylinder(w) else np.nan
        logF[n - 1] = full.log_entry(anchors.first_symbol(w))
    return PartitionProfile(omega, a, logZ, logCZ, logF, logA)


def _one(shift, pot, anchors, omega, n, attr):
    if n < 1:
        raise ValueError("n must be >= 1")
    prof = partition_profile(shift, pot, anchors, omega, n)
    return float(np.exp(getattr(prof, attr)[n - 1]))


def gurevic_Z(shift: RandomShift, pot: Potential, omega: int, a: int, n: int) -> float:
    """``Z_n^omega(a)``: weighted loops at ``a`` (0 when there are none)."""
    return _one(shift, pot, AnchorFamily(shift, a), omega, n, "logZ")


def local_preimage_Z(shift: RandomShift, pot: Potential, anchors: AnchorFamily, omega: int, a: int, n: int) -> float:
    if anchors.symbol != a:
        anchors = AnchorFamily(shift, a)
    w = advance(shift.base, omega, n)
    if not anchors.in_cylinder(w):
        raise AnchorMissing(f"step^{n}({omega}) = {w} is not in Omega_{a}")
    return _one(shift, pot, anchors, omega, n, "logCZ")


def full_preimage_Z(shift: RandomShift, pot: Potential, anchors: AnchorFamily, omega: int, n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    Ws = weight_matrices(shift, pot)
    row = _LogRow(np.ones(shift.alphabet_size(omega)))
    w = omega
    for _ in range(n):
        row.times(Ws[w])
        w = shift.base.step[w]
    return float(np.exp(row.log_entry(anchors.first_symbol(w))))


def sup_partition_A(shift: RandomShift, pot: Potential, omega: int, n: int) -> float:
    """``A_n^omega = sum_{w in W_n} sup_{[w]} e^{phi_n}``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    Ws = weight_matrices(shift, pot)
    row = _LogRow(np.ones(shift.alphabet_size(omega)))
    w = omega
    for _ in range(n - 1):
        row.times(Ws[w])
        w = shift.base.step[w]
    return float(np.exp(row.log_dot(Ws[w].max(axis=1))))


# -- pressure -------------------------------------------------------------


def omega_star(shift: RandomShift, a: int, N: int, horizon: int) -> frozenset:
    """``{omega in Omega_a : N_aa(omega) <= N}`` with mixing certified up to ``horizon``."""
    out = set()
    for w in shift.base.states:
        if a < shift.alphabet_size(w):
            try:
                t = mixing_time(shift, w, a, a, max(horizon, N))
            except NotMixedWithinHorizon:
                continue
            if t <= N:
                out.add(w)
    return frozenset(out)


@dataclass
class PressureEstimate:
    value: float
    gap: float
    value_Z: float
    value_CZ: float
    omega: int
    a: int
    N: int
    omega_star: frozenset
    spacing: int
    secant_ends: list
    n: np.ndarray
    in_return_set: np.ndarray
    logZ_over_n: np.ndarray
    logCZ_over_n: np.ndarray
    below_floor: bool = False
    truncation: int | None = None

    def as_dict(self) -> dict:
        return {
            "value": self.value, "gap": self.gap, "value_Z": self.value_Z, "value_CZ": self.value_CZ,
            "omega": self.omega, "a": self.a, "N": self.N, "omega_star": sorted(self.omega_star),
            "spacing": self.spacing, "secant_ends": list(self.secant_ends),
            "below_floor": self.below_floor, "truncation": self.truncation,
        }


def _secants(logs: np.ndarray, ends: list[int], spacing: int) -> np.ndarray:
    return np.array([(logs[n - 1] - logs[n - spacing - 1]) / spacing for n in ends])


def pressure(shift: RandomShift, pot: Potential, anchors: AnchorFamily | None, a: int, N: int, n_max: int,
             omega: int | None = None, q: int = 5) -> PressureEstimate:
    """Relative Gurevič pressure from loops at ``a`` along returns to ``Omega*``.

    Both ``(1/n) log Z_n`` and ``(1/n) log cZ_n`` are recorded for the CSV.
    The estimate itself uses secant slopes
    ``(log Z_n - log Z_{n-p}) / p`` where ``p`` is the orbit period of
    ``omega``; on a finite base the bounded ``log Z_n - nP`` term then
    cancels up to an exponentially small remainder instead of decaying like
    ``1/n``.  The value is the mean of the last ``q`` slopes and the gap their
    spread.
    """
    anchors = AnchorFamily(shift, a) if anchors is None or anchors.symbol != a else anchors
    star = omega_star(shift, a, N, n_max)
    if not star:
        raise NotMixedWithinHorizon(f"Omega* is empty for a={a}, N={N}")
    omega = min(star) if omega is None else omega
    if omega not in star:
        raise NotMixedWithinHorizon(f"state {omega} is not in Omega*")
    prof = partition_profile(shift, pot, anchors, omega, n_max)
    J = return_times(shift.base, omega, star, n_max)
    p = shift.base.orbit_period(omega)
    spacing = p
    valid = [n for n in J if n - spacing in J and np.isfinite(prof.logZ[n - 1])
             and np.isfinite(prof.logZ[n - spacing - 1])]
    ends = valid[-q:]
    ns = np.arange(1, n_max + 1)
    with np.errstate(invalid="ignore"):
        logZ_n = prof.logZ / ns
        logCZ_n = prof.logCZ / ns
    in_J = np.isin(ns, J)
    if not ends:
        finite = [n for n in J if np.isfinite(prof.logZ[n - 1])]
        if not finite:
            return PressureEstimate(-np.inf, 0.0, -np.inf, -np.inf, omega, a, N, star, spacing, [],
                                    ns, in_J, logZ_n, logCZ_n, True, shift.truncation)
        ends_raw = finite[-q:]
        sZ = np.array([logZ_n[n - 1] for n in ends_raw])
        sC = np.array([logCZ_n[n - 1] for n in ends_raw])
    else:
        sZ = _secants(prof.logZ, ends, spacing)
        sC = _secants(prof.logCZ, ends, spacing)
    vZ, vC = float(sZ.mean()), float(sC.mean())
    gap = float(max(np.ptp(sZ), np.ptp(sC)))
    logB = max(np.log(distortion(pot, shift.base, w)) for w in star)
    allowed = 2 * logB / spacing + gap + 1e-9
    if abs(vZ - vC) > allowed:
        raise DivergentDiagnostics(
            f"Z and local preimage estimates disagree: {vZ} vs {vC} (allowed {allowed})"
        )
    value = vZ
    below = value < PRESSURE_FLOOR
    if below:
        value = -np.inf
    return PressureEstimate(value, gap, vZ, vC, omega, a, N, star, spacing, list(ends),
                            ns, in_J, logZ_n, logCZ_n, below, shift.truncation)


@dataclass
class DivergenceTable:
    s: float
    n: np.ndarray
    log_terms: np.ndarray
    log_partial: np.ndarray
    slope: float
    monotone: bool
    tail_increment: float

    @property
    def partial(self) -> np.ndarray:
        return np.exp(self.log_partial)


def divergence_diagnostic(shift: RandomShift, pot: Potential, anchors: AnchorFamily, omega: int,
                          target, s: float, n_max: int) -> DivergenceTable:
    """Partial sums of ``sum_{n in J_omega(target)} s^n cZ_n^omega``.

    ``slope`` is the least-squares slope of log(partial sum) against
    ``log n`` over the second half of the range: about 1 for a series that
    diverges like the number of terms, about 0 for a convergent one.
    ``tail_increment`` is the growth over the last quarter of the range.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    Ws = weight_matrices(shift, pot)
    J = return_times(shift.base, omega, target, n_max)
    row = _LogRow(np.ones(shift.alphabet_size(omega)))
    logs = np.full(n_max, -np.inf)
    w = omega
    Jset = set(J)
    for n in range(1, n_max + 1):
        row.times(Ws[w])
        w = shift.base.step[w]
        if n in Jset:
            logs[n - 1] = n * np.log(s) + row.log_entry(anchors.first_symbol(w))
    log_partial = np.logaddexp.accumulate(logs)
    ns = np.arange(1, n_max + 1)
    half = ns > n_max // 2
    y = log_partial[half]
    ok = np.isfinite(y)
    slope = float(np.polyfit(np.log(ns[half][ok]), y[ok], 1)[0]) if ok.sum() >= 2 else float("nan")
    in_J = np.isin(ns, J)
    lp = log_partial[in_J]
    monotone = bool(np.all(np.diff(lp) > 0)) if lp.size > 1 else True
    cut = (3 * n_max) // 4
    tail = float(np.exp(log_partial[-1]) - np.exp(log_partial[cut - 1])) if cut >= 1 else float("nan")
    return DivergenceTable(s, ns, logs, log_partial, slope, monotone, tail)


# -- connector constants --------------------------------------------------


def lexmin_path(shift: RandomShift, omega: int, start: int, end: int, length: int) -> tuple | None:
    """Smallest admissible word of ``length`` symbols from ``start`` to ``end``, or ``None``."""
    if length < 1 or not 0 <= start < shift.alphabet_size(omega):
        return None
    states = shift.base.orbit(omega, length)
    last = states[-1]
    if not 0 <= end < shift.alphabet_size(last):
        return None
    can = [None] * length
    can[-1] = np.zeros(shift.alphabet_size(last), dtype=bool)
    can[-1][end] = True
    for i in range(length - 2, -1, -1):
        can[i] = (shift.adjacency(states[i]).astype(np.int64) @ can[i + 1].astype(np.int64)) > 0
    if not can[0][start]:
        return None
    path = [start]
    for i in range(1, length):
        succ = np.flatnonzero(shift.adjacency(states[i - 1])[path[-1]] & can[i])
        path.append(int(succ[0]))
    return tuple(path)


def _min_inf_weight(pot, shift, omega, words, k) -> float:
    _, lo = birkhoff_range(pot, shift, omega, np.array(words), k)
    return float(np.exp(lo.min()))


def constant_C(shift: RandomShift, pot: Potential, cert: BipCertificate, omega: int, a: int, k: int) -> float:
    """Constant in ``cZ_n^{step^k omega} <= C * cZ_{k+n}^omega(a)``.

    The connectors are the smallest words of length ``k`` from ``a`` to each
    big-preimage symbol of ``step^k omega``.
    """
    if k < 1:
        raise HypothesisFail("k must be >= 1")
    if not 0 <= a < shift.alphabet_size(omega):
        raise HypothesisFail(f"state {omega} is not in Omega_{a}")
    target = advance(shift.base, omega, k)
    if target not in cert.omega_bp:
        raise HypothesisFail(f"step^{k}({omega}) = {target} is not in Omega_bp")
    conns = []
    for c in sorted(cert.preimages[target]):
        v = lexmin_path(shift, omega, a, c, k)
        if v is None:
            raise HypothesisFail(f"no word of length {k} from {a} to {c} at state {omega}")
        conns.append(v)
    prev = advance(shift.base, omega, k - 1)
    covered = shift.adjacency(prev)[[v[-1] for v in conns]].any(axis=0)
    if not covered.all():
        raise HypothesisFail(f"big preimages fail at state {target}")
    return max(1.0, 1.0 / _min_inf_weight(pot, shift, omega, conns, k))


def constant_D(shift: RandomShift, pot: Potential, cert: BipCertificate, omega: int, a: int, k: int) -> float:
    """Constant in ``A_n^w <= B_omega D^{-1} cZ_{n+k}^w`` where ``omega = step^n w``.

    The connectors are the smallest words of length ``k`` from each big-image
    symbol of ``omega`` that can be followed by ``a``.  ``D`` is capped at 1,
    which only weakens the inequality.
    """
    if k < 1:
        raise HypothesisFail("k must be >= 1")
    if omega not in cert.omega_bi:
        raise HypothesisFail(f"state {omega} is not in Omega_bi")
    if not 0 <= a < shift.alphabet_size(advance(shift.base, omega, k)):
        raise HypothesisFail(f"step^{k}({omega}) is not in Omega_{a}")
    conns = []
    for c in sorted(cert.images[omega]):
        if c >= shift.alphabet_size(omega):
            continue
        v = lexmin_path(shift, omega, c, a, k + 1)
        if v is None:
            raise HypothesisFail(f"no word of length {k} from {c} into {a} at state {omega}")
        conns.append(v[:-1])
    if not conns:
        raise HypothesisFail(f"no big-image symbol available at state {omega}")
    v1 = variation(pot, shift, shift.base.inverse_step(omega), 1)
    return min(1.0, float(np.exp(-v1)) * _min_inf_weight(pot, shift, omega, conns, k))


def bound_constants_CD(shift: RandomShift, pot: Potential, cert: BipCertificate, omega: int, a: int,
                       k: int) -> tuple[float, float]:
    return constant_C(shift, pot, cert, omega, a, k), constant_D(shift, pot, cert, omega, a, k)


def log_sum(values) -> float:
    """Stable ``log sum exp`` for a sequence of logs."""
    values = np.asarray(values, dtype=float)
    return float(logsumexp(values)) if values.size else -np.inf
