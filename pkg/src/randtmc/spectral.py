"""Random power series, eigenvalues, conformal measures and eigenfunctions.

The measures ``S_omega = sum_{n in J_omega} s^n (L^{omega,n})^* delta_{xi}``
behind the random power series satisfy the one-step relation

    S_omega = s * (L^omega)^* (1[step omega in target] delta_{xi_{step omega}} + S_{step omega}),

so on a finite base all of them solve one sparse linear system.  Below the
radius of convergence that system has a unique nonnegative solution, which
is the untruncated series restricted to depth-``d`` cylinders.  A truncated
mode (``n_max`` given) sums the first terms directly instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .base import advance, base_average
from .errors import DepthUnderflow, NoConvergence, SandwichViolation
from .potential import Potential, birkhoff_range, distortion, summability_bounds
from .shift import BipCertificate, RandomShift, word_array
from .transfer import (
    AnchorFamily,
    CylinderFunction,
    cylinder_mask,
    divergence_diagnostic,
    partition_profile,
    ruelle_apply,
    weight_matrices,
)

DEFAULT_LEVELS = 30


def default_schedule(P_hat: float, J: int = DEFAULT_LEVELS, gap: float = 0.0) -> np.ndarray:
    """``s_j = (1 - 2^-j) e^{-P}`` for ``j = 1..J``.

    With a pressure gap the last level keeps ``2^-J >= 100 gap`` so that the
    schedule stays inside the radius of convergence despite the error in ``P``.
    """
    if gap > 0:
        J = max(5, min(J, int(np.floor(-np.log2(100 * gap)))))
    j = np.arange(1, J + 1)
    return (1.0 - 2.0 ** (-j)) * np.exp(-P_hat)


# -- cylinder measures ----------------------------------------------------


@dataclass
class CylinderMeasure:
    """Per-state masses of the depth-``d`` cylinders (tensors with ``d`` axes)."""

    depth: int
    masses: tuple
    normalized: bool = True

    def marginal(self, d: int) -> "CylinderMeasure":
        if d > self.depth:
            raise DepthUnderflow(f"cannot refine a depth-{self.depth} measure to depth {d}")
        axes = tuple(range(d, self.depth))
        return CylinderMeasure(d, tuple(m.sum(axis=axes) if axes else m for m in self.masses), self.normalized)

    def mass(self, omega: int, word: Sequence[int]) -> float:
        m = self.marginal(len(word)).masses[omega] if len(word) < self.depth else self.masses[omega]
        if len(word) > self.depth:
            raise DepthUnderflow(f"word of length {len(word)} is finer than depth {self.depth}")
        try:
            return float(m[tuple(word)])
        except IndexError:
            return 0.0

    def tv_distance(self, other: "CylinderMeasure") -> np.ndarray:
        d = min(self.depth, other.depth)
        a, b = self.marginal(d), other.marginal(d)
        return np.array([0.5 * np.abs(x - y).sum() for x, y in zip(a.masses, b.masses)])

    def rows(self):
        """``(state, cylinder, mass)`` for every admissible cylinder, in lexicographic order."""
        for w, m in enumerate(self.masses):
            for idx in zip(*np.nonzero(m > 0)):
                yield w, "-".join(str(int(i)) for i in idx), float(m[idx])


def dual_operator(shift: RandomShift, W: np.ndarray, omega: int, d: int) -> sparse.csr_matrix:
    """Sparse matrix of ``(L^omega)^*`` from depth-``d`` masses on the next fiber to depth ``d`` at ``omega``.

    ``((L^omega)^* nu)[c_0 .. c_{d-1}] = W[c_0, c_1] * nu([c_1 .. c_{d-1}])``; for
    ``d = 1`` this is ``W @ nu``.
    """
    if d == 1:
        return sparse.csr_matrix(W)
    sizes = [shift.alphabet_size(advance(shift.base, omega, i)) for i in range(d + 1)]
    inner = int(np.prod(sizes[1:d]))
    rest = int(np.prod(sizes[2:d])) if d > 2 else 1
    marg = sparse.kron(sparse.identity(inner, format="csr"), np.ones((1, sizes[d])), format="csr")
    spread = sparse.kron(np.ones((sizes[0], 1)), sparse.identity(inner, format="csr"), format="csr")
    weights = sparse.diags(np.repeat(W.ravel(), rest))
    return (weights @ spread @ marg).tocsr()


def _dirac(shift: RandomShift, anchors: AnchorFamily, omega: int, d: int) -> np.ndarray:
    shape = cylinder_mask(shift, omega, d).shape
    v = np.zeros(shape)
    v[anchors.point(omega, d)] = 1.0
    return v.ravel()


def series_measures(shift: RandomShift, pot: Potential, anchors: AnchorFamily, target, s: float,
                    d: int = 1, Ws: list | None = None) -> list[np.ndarray]:
    """Unnormalized measures ``S_omega`` (depth ``d``) of the untruncated power series at ``s``."""
    base = shift.base
    target = frozenset(target)
    Ws = weight_matrices(shift, pot) if Ws is None else Ws
    shapes = [cylinder_mask(shift, w, d).shape for w in base.states]
    sizes = [int(np.prod(sh)) for sh in shapes]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    ops = [dual_operator(shift, Ws[w], w, d) for w in base.states]
    blocks = [[None] * base.n_states for _ in base.states]
    rhs = np.zeros(offsets[-1])
    for w in base.states:
        nxt = base.step[w]
        blocks[w][w] = sparse.identity(sizes[w], format="csr")
        blocks[w][nxt] = (blocks[w][nxt] if blocks[w][nxt] is not None else 0) - s * ops[w]
        if nxt in target:
            rhs[offsets[w]:offsets[w + 1]] = s * (ops[w] @ _dirac(shift, anchors, nxt, d))
    A = sparse.bmat(blocks, format="csc")
    sol = np.atleast_1d(spsolve(A, rhs))
    return [sol[offsets[w]:offsets[w + 1]].reshape(shapes[w]) for w in base.states]


def power_series(shift: RandomShift, pot: Potential, anchors: AnchorFamily, omega: int, target, s: float,
                 n_max: int | None = None) -> float:
    """``P_omega(s) = sum_{n in J_omega(target)} s^n cZ_n^omega``.

    With ``n_max`` the sum is cut after ``n_max`` terms; without it the value
    is the full series (finite only below the radius of convergence).
    """
    if s <= 0:
        raise ValueError("s must be positive")
    if n_max is not None:
        tab = divergence_diagnostic(shift, pot, anchors, omega, target, s, n_max)
        return float(np.exp(tab.log_partial[-1]))
    return float(series_measures(shift, pot, anchors, target, s, 1)[omega].sum())


def _series_totals(shift, pot, anchors, target, s, n_max, Ws):
    """Per-state ``(P_omega, P_{step omega})`` pairs used for the quotient."""
    base = shift.base
    if n_max is None:
        tot = np.array([S.sum() for S in series_measures(shift, pot, anchors, target, s, 1, Ws)])
        return tot, tot[list(base.step)]
    num = np.empty(base.n_states)
    den = np.empty(base.n_states)
    for w in base.states:
        num[w] = np.exp(divergence_diagnostic(shift, pot, anchors, w, target, s, n_max).log_partial[-1])
        nxt = base.step[w]
        if n_max > 1:
            den[w] = np.exp(divergence_diagnostic(shift, pot, anchors, nxt, target, s, n_max - 1).log_partial[-1])
        else:
            den[w] = 0.0
    return num, den


@dataclass
class LambdaEstimate:
    s: np.ndarray
    quotients: np.ndarray   # shape (len(s), n_states)
    series: np.ndarray      # P_omega(s_j), same shape
    lam: np.ndarray
    gap: float
    checks: int
    P_hat: float
    n_max: int | None = None

    def log_Lambda(self, base, omega: int, n: int) -> float:
        """``log(lambda(omega) ... lambda(step^{n-1} omega))``."""
        return float(sum(np.log(self.lam[w]) for w in base.orbit(omega, n)))

    def as_dict(self) -> dict:
        return {"lambda": [float(x) for x in self.lam], "gap": self.gap, "checks": self.checks,
                "P_hat": self.P_hat, "n_max": self.n_max, "s_last": float(self.s[-1])}


def lambda_quotient(shift: RandomShift, pot: Potential, anchors: AnchorFamily, target, P_hat: float,
                    schedule: Sequence[float] | None = None, n_max: int | None = None,
                    rtol: float = 1e-12, gap: float = 0.0) -> LambdaEstimate:
    """``lambda(omega) = lim P_omega(s) / P_{step omega}(s)`` along ``s -> e^{-P}``.

    At every schedule point and state the quotient must lie in
    ``[s m_omega, s M_omega (1 + 1/P_{step omega}(s))]``; any violation (or a
    series that is not finite and positive) raises :class:`SandwichViolation`.
    In truncated mode the numerator has ``n_max`` terms and the denominator
    ``n_max - 1``, which keeps the bound exact.
    """
    base = shift.base
    s_grid = default_schedule(P_hat, gap=gap) if schedule is None else np.asarray(schedule, dtype=float)
    Ws = weight_matrices(shift, pot)
    bounds = [summability_bounds(pot, shift, w) for w in base.states]
    Q = np.empty((s_grid.size, base.n_states))
    Ps = np.empty_like(Q)
    bad = []
    for j, s in enumerate(s_grid):
        num, den = _series_totals(shift, pot, anchors, target, s, n_max, Ws)
        Ps[j] = num
        for w in base.states:
            m, M = bounds[w]
            if not (np.isfinite(num[w]) and np.isfinite(den[w]) and num[w] > 0 and den[w] > 0):
                bad.append((w, float(s), float(num[w]), float(den[w])))
                Q[j, w] = np.nan
                continue
            q = num[w] / den[w]
            lo, hi = s * m, s * M * (1 + 1 / den[w])
            if q < lo * (1 - rtol) or q > hi * (1 + rtol):
                bad.append((w, float(s), float(q), (float(lo), float(hi))))
            Q[j, w] = q
    if bad:
        raise SandwichViolation(f"{len(bad)} quotient bound violations, first: {bad[0]}")
    gap = float(np.max(np.abs(Q[-1] - Q[-2]))) if s_grid.size > 1 else float("nan")
    return LambdaEstimate(s_grid, Q, Ps, Q[-1].copy(), gap, Q.size, P_hat, n_max)


# -- conformal measures ---------------------------------------------------


def conformal_measure(shift: RandomShift, pot: Potential, anchors: AnchorFamily | None, lam, P_hat: float,
                      d: int = 1, method: str = "series", target=None, s: float | None = None,
                      tol: float = 1e-10, max_sweeps: int = 100_000) -> CylinderMeasure:
    """Random conformal measure on depth-``d`` cylinders.

    ``series`` normalizes the power-series measures at ``s`` (default: the
    last point of the default schedule).  ``dual`` iterates
    ``nu_omega <- (L^omega)^* nu_{step omega}`` with per-state normalization
    until the largest total-variation step drops below ``tol``.  The
    eigenvalue ``lam`` fixes the scale of each step but the normalization
    removes it, so it only matters for residual checks.
    """
    if pot.depth > 2 or not pot.locally_constant:
        raise DepthUnderflow("conformal measures need a locally constant potential of depth <= 2")
    if d < max(pot.depth - 1, 1):
        raise DepthUnderflow(f"depth {d} is too coarse for a depth-{pot.depth} potential")
    base = shift.base
    Ws = weight_matrices(shift, pot)
    if method == "series":
        if anchors is None or target is None:
            raise ValueError("the series method needs anchors and a target set")
        s = default_schedule(P_hat)[-1] if s is None else s
        S = series_measures(shift, pot, anchors, target, s, d, Ws)
        # forbidden cylinders only pick up cancellation noise; pin them to zero
        S = [np.where(cylinder_mask(shift, w, d), x, 0.0) for w, x in zip(base.states, S)]
        return CylinderMeasure(d, tuple(x / x.sum() for x in S))
    if method != "dual":
        raise ValueError(f"unknown method {method!r}")
    ops = [dual_operator(shift, Ws[w], w, d) for w in base.states]
    masks = [cylinder_mask(shift, w, d) for w in base.states]
    nu = [m.ravel() / m.sum() for m in masks]
    for sweep in range(1, max_sweeps + 1):
        new = []
        for w in base.states:
            v = ops[w] @ nu[base.step[w]]
            new.append(v / v.sum())
        step = max(0.5 * np.abs(x - y).sum() for x, y in zip(new, nu))
        nu = new
        if step < tol:
            break
    else:
        raise NoConvergence(f"dual iteration did not settle within {max_sweeps} sweeps (last step {step})")
    return CylinderMeasure(d, tuple(v.reshape(m.shape) for v, m in zip(nu, masks)))


def conformality_residual(shift: RandomShift, pot: Potential, mu: CylinderMeasure, lam, P_hat: float):
    """Largest ``|mu_{step w}(T[a c]) - lambda(w) e^{P - phi([a c])} mu_w([a c])|``.

    Returns ``(residual, (state, cylinder))``.
    """
    d = mu.depth
    if d < pot.depth:
        raise DepthUnderflow(f"a depth-{d} measure cannot resolve a depth-{pot.depth} potential")
    base = shift.base
    worst, witness = -1.0, None
    for w in base.states:
        nxt = base.step[w]
        mask = cylinder_mask(shift, w, d)
        logw = pot.log_weights(shift, w)
        if d == 1:
            image = shift.adjacency(w).astype(float) @ mu.marginal(1).masses[nxt]
            phi = pot.tables[w]
        else:
            image = np.broadcast_to(mu.marginal(d - 1).masses[nxt][None], mask.shape)
            phi = logw.reshape(logw.shape + (1,) * (d - 2))
        with np.errstate(invalid="ignore", over="ignore"):
            rhs = lam[w] * np.exp(P_hat - phi) * mu.masses[w]
        res = np.where(mask, np.abs(image - rhs), 0.0)
        k = int(np.argmax(res))
        if res.flat[k] > worst:
            worst = float(res.flat[k])
            witness = (w, tuple(int(i) for i in np.unravel_index(k, res.shape)))
    return worst, witness


# -- eigenfunctions -------------------------------------------------------


@dataclass
class EigenData:
    lam: np.ndarray
    P_hat: float
    h: tuple
    residual: float
    lam_reestimate: np.ndarray
    sweeps: int

    def log_Lambda(self, base, omega: int, n: int) -> float:
        return float(sum(np.log(self.lam[w]) for w in base.orbit(omega, n)))

    def function(self, omega: int) -> CylinderFunction:
        return CylinderFunction(omega, self.h[omega])


def eigenfunction(shift: RandomShift, pot: Potential, mu: CylinderMeasure, lam, P_hat: float,
                  n: int = 100_000, tol: float = 1e-14) -> EigenData:
    """Eigenfunctions ``L^w h^w = lambda(w) e^P h^{step w}`` with ``int h^w dmu_w = 1``.

    For depth <= 2 potentials ``h`` depends on the first symbol only.  It is
    the limit of sup-normalized sweeps ``h^{step w} <- W_w^T h^w``.  The
    eigenvalue is re-estimated as ``e^{-P} int L^w h^w dmu_{step w}``.
    """
    base = shift.base
    Ws = weight_matrices(shift, pot)
    lam = np.asarray(lam, dtype=float)
    h = [np.ones(shift.alphabet_size(w)) for w in base.states]
    change = np.inf
    for sweep in range(1, n + 1):
        new = [None] * base.n_states
        for w in base.states:
            v = Ws[w].T @ h[w]
            new[base.step[w]] = v / v.max()
        change = max(np.abs(x - y).max() for x, y in zip(new, h))
        h = new
        if change < tol:
            break
    else:
        if change > 1e-9:
            raise NoConvergence(f"eigenfunction sweeps did not settle (last change {change})")
    mu1 = mu.marginal(1).masses
    h = [x / float(x @ mu1[w]) for w, x in enumerate(h)]
    re = np.empty(base.n_states)
    res = 0.0
    for w in base.states:
        nxt = base.step[w]
        Lh = Ws[w].T @ h[w]
        re[w] = float(Lh @ mu1[nxt]) * np.exp(-P_hat)
        res = max(res, np.abs(Lh - lam[w] * np.exp(P_hat) * h[nxt]).max() / np.abs(h[nxt]).max())
    return EigenData(lam, P_hat, tuple(h), float(res), re, sweep)


# -- inequality suites ----------------------------------------------------


def image_mass(shift: RandomShift, mu: CylinderMeasure, omega: int) -> np.ndarray:
    """``mu_omega(T[b])`` for every symbol ``b`` of the previous fiber."""
    prev = shift.base.inverse_step(omega)
    return shift.adjacency(prev).astype(float) @ mu.marginal(1).masses[omega]


@dataclass
class GibbsReport:
    rows: list
    violations: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


def gibbs_report(shift: RandomShift, pot: Potential, cert: BipCertificate, mu: CylinderMeasure, lam,
                 P_hat: float, n_max: int, states: Sequence[int] | None = None,
                 rtol: float = 1e-9) -> GibbsReport:
    """Check ``D/B <= Lambda_n mu([a]) e^{nP - phi_n(x)} <= B`` on all words of length ``<= n_max``.

    ``B`` and ``D`` are taken at ``step^n omega`` (only ``n`` with that state in
    ``Omega_bi`` are checked).  The ratio is evaluated at the extreme points of
    each cylinder, so both bounds are tested for every ``x in [a]``.
    """
    base = shift.base
    lam = np.asarray(lam, dtype=float)
    rows, bad = [], 0
    for omega in (base.states if states is None else states):
        logLam = 0.0
        for n in range(1, min(n_max, mu.depth) + 1):
            logLam += np.log(lam[advance(base, omega, n - 1)])
            sigma = advance(base, omega, n)
            if sigma not in cert.omega_bi:
                continue
            B = distortion(pot, base, sigma)
            D = float(image_mass(shift, mu, sigma).min())
            words = word_array(shift, omega, n)
            hi, lo = birkhoff_range(pot, shift, omega, words, n)
            masses = mu.marginal(n).masses[omega][tuple(words.T)]
            with np.errstate(divide="ignore"):
                base_log = logLam + np.log(masses) + n * P_hat
            r_lo, r_hi = np.exp(base_log - hi), np.exp(base_log - lo)
            for k in range(words.shape[0]):
                ok = r_lo[k] >= D / B * (1 - rtol) and r_hi[k] <= B * (1 + rtol)
                bad += not ok
                rows.append((omega, n, "-".join(map(str, words[k])), float(r_lo[k]), float(r_hi[k]),
                             D / B, B, bool(ok)))
    return GibbsReport(rows, bad)


@dataclass
class RecurrenceReport:
    omega: int
    a: int
    n: list
    ratio: list
    start: int
    low: float
    high: float

    @property
    def bounded(self) -> bool:
        return np.isfinite(self.high) and self.low > 0


def recurrence_report(shift: RandomShift, pot: Potential, lam, P_hat: float, a: int, omega: int,
                      n_range: Sequence[int]) -> RecurrenceReport:
    """``Z_n^{step^-n w}(a) / (Lambda_n(step^-n w) e^{nP})`` over ``n_range``.

    Only ``n`` with both ``w`` and ``step^-n w`` in ``Omega_a`` are listed.
    ``start`` is the first listed ``n`` after which every ratio is positive;
    ``low`` and ``high`` are taken from there on.
    """
    base = shift.base
    lam = np.asarray(lam, dtype=float)
    if a >= shift.alphabet_size(omega):
        raise ValueError(f"state {omega} is not in Omega_{a}")
    Ws = weight_matrices(shift, pot)
    anchors = AnchorFamily(shift, a)
    ns, ratios = [], []
    for n in n_range:
        first = advance(base, omega, -n)
        if a >= shift.alphabet_size(first):
            continue
        logZ = partition_profile(shift, pot, anchors, first, n, Ws).logZ[-1]
        logL = sum(np.log(lam[w]) for w in base.orbit(first, n))
        ns.append(int(n))
        ratios.append(float(np.exp(logZ - logL - n * P_hat)))
    r = np.array(ratios)
    zero = np.flatnonzero(r <= 0)
    k0 = int(zero[-1]) + 1 if zero.size else 0
    tail = r[k0:]
    start = ns[k0] if k0 < len(ns) else -1
    low = float(tail.min()) if tail.size else 0.0
    high = float(tail.max()) if tail.size else float("inf")
    return RecurrenceReport(omega, a, ns, ratios, start, low, high)


@dataclass
class DecayTable:
    n: np.ndarray
    deviation: np.ndarray
    rate: float


def empirical_rate(dev: np.ndarray, lo: float = 1e-9, hi: float = 1e-1) -> float:
    """Geometric decay rate fitted on the entries within ``[lo, hi]``."""
    n = np.arange(1, dev.size + 1)
    keep = (dev > lo) & (dev < hi)
    if keep.sum() < 3:
        return float("nan")
    return float(np.exp(np.polyfit(n[keep], np.log(dev[keep]), 1)[0]))


def exactness_convergence(shift: RandomShift, pot: Potential, mu: CylinderMeasure, eig: EigenData,
                          f: CylinderFunction, n_max: int) -> DecayTable:
    """``|| L^n f / (Lambda_n e^{nP}) - h^{step^n w} int f dmu_w ||`` in ``L^1(mu_{step^n w})``."""
    base = shift.base
    omega = f.omega
    if mu.depth < f.depth:
        raise DepthUnderflow("the measure must be at least as fine as f")
    integral = float((f.values * mu.marginal(f.depth).masses[omega]).sum())
    Ws = weight_matrices(shift, pot)
    g, w = f, omega
    dev = np.empty(n_max)
    scale = np.exp(eig.P_hat)
    for n in range(1, n_max + 1):
        g = ruelle_apply(shift, pot, w, g, W=Ws[w])
        g = CylinderFunction(g.omega, g.values / (eig.lam[w] * scale))
        w = base.step[w]
        h = CylinderFunction(w, eig.h[w]).refine(shift, g.depth).values
        m = mu.marginal(g.depth).masses[w]
        dev[n - 1] = float((np.abs(g.values - h * integral) * m).sum())
    return DecayTable(np.arange(1, n_max + 1), dev, empirical_rate(dev))


def log_lambda_average(shift: RandomShift, lam) -> float:
    return base_average(shift.base, np.log(np.asarray(lam, dtype=float)))
