"""Random shift spaces: fibered alphabets, adjacency, words and b.i.p. checks.

A :class:`RandomShift` stores one 0/1 matrix per base state.  The matrix of
state ``w`` has shape ``(l_w, l_{step(w)})``.  Countable alphabets are handled
by materializing a generator rule on the symbols ``< L``; the truncation level
is recorded on the shift and echoed in every report.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterable, Sequence

import numpy as np

from .base import BaseSystem, advance, weight_of
from .errors import ConfigError, EnumerationOverflow, NotMixedWithinHorizon, TruncationUnsound

DEFAULT_WORD_CAP = 10**7


@dataclass(frozen=True, eq=False)
class RandomShift:
    base: BaseSystem
    matrices: tuple
    truncation: int | None = None
    generator: str | None = None
    # whether checks on symbols < L say anything about symbols >= L
    tail_images_sound: bool = True
    tail_preimages_sound: bool = True
    word_cap: int = DEFAULT_WORD_CAP

    def __post_init__(self):
        mats = tuple(np.asarray(m).astype(bool) for m in self.matrices)
        object.__setattr__(self, "matrices", mats)
        for m in mats:
            m.setflags(write=False)
        if len(mats) != self.base.n_states:
            raise ConfigError("one adjacency matrix per base state is required")
        for w in self.base.states:
            a = mats[w]
            if a.ndim != 2 or a.shape[0] < 1:
                raise ConfigError(f"adjacency of state {w} is not a nonempty matrix")
            nxt = self.base.step[w]
            if a.shape[1] != mats[nxt].shape[0]:
                raise ConfigError(
                    f"adjacency of state {w} has {a.shape[1]} columns but state {nxt} has "
                    f"{mats[nxt].shape[0]} symbols"
                )
            dead = np.flatnonzero(~a.any(axis=1))
            if dead.size:
                raise ConfigError(f"symbol {int(dead[0])} has no successor in state {w}")

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_environments(cls, base: BaseSystem, env_matrices: Sequence, **kw) -> "RandomShift":
        """One matrix per environment label; states pick theirs by label."""
        return cls(base, tuple(env_matrices[base.label(w)] for w in base.states), **kw)

    @classmethod
    def from_rule(cls, base: BaseSystem, rule: Callable[[int, int, int], bool], L: int, **kw) -> "RandomShift":
        """Materialize ``rule(state, i, j)`` on the symbols ``< L``."""
        mats = []
        for w in base.states:
            mats.append(np.array([[bool(rule(w, i, j)) for j in range(L)] for i in range(L)]))
        kw.setdefault("truncation", L)
        return cls(base, tuple(mats), **kw)

    # -- basic accessors --------------------------------------------------

    def alphabet_size(self, omega: int) -> int:
        return self.matrices[omega].shape[0]

    def adjacency(self, omega: int) -> np.ndarray:
        return self.matrices[omega]

    def allowed(self, omega: int, i: int, j: int) -> bool:
        m = self.matrices[omega]
        return 0 <= i < m.shape[0] and 0 <= j < m.shape[1] and bool(m[i, j])


def full_shift(base: BaseSystem, k: int, countable: bool = False) -> RandomShift:
    m = np.ones((k, k), dtype=bool)
    return RandomShift(base, (m,) * base.n_states, truncation=k if countable else None,
                       generator="full")


def golden_mean(base: BaseSystem) -> RandomShift:
    m = np.array([[1, 1], [1, 0]], dtype=bool)
    return RandomShift(base, (m,) * base.n_states, generator="golden")


def band_shift(base: BaseSystem, k: int, L: int) -> RandomShift:
    """``i -> j`` allowed iff ``i <= j <= i + k`` (on the symbols ``< L``)."""
    return RandomShift.from_rule(
        base, lambda w, i, j: i <= j <= i + k, L, generator=f"band({k})",
        tail_images_sound=False, tail_preimages_sound=False,
    )


def renewal_shift(base: BaseSystem, L: int) -> RandomShift:
    """``0 -> j`` for every ``j`` and ``i -> i-1`` for ``i >= 1``."""
    return RandomShift.from_rule(
        base, lambda w, i, j: i == 0 or j == i - 1, L, generator="renewal",
        tail_images_sound=False, tail_preimages_sound=True,
    )


# -- words ----------------------------------------------------------------


@dataclass(frozen=True)
class Word:
    anchor: int
    symbols: tuple

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)


def is_admissible(shift: RandomShift, omega: int, symbols: Sequence[int]) -> bool:
    w = omega
    if not symbols:
        return True
    if not 0 <= symbols[0] < shift.alphabet_size(omega):
        return False
    for x, y in zip(symbols, symbols[1:]):
        if not shift.allowed(w, x, y):
            return False
        w = shift.base.step[w]
    return True


def word_array(shift: RandomShift, omega: int, n: int, first: int | None = None) -> np.ndarray:
    """Admissible words of length ``n`` as rows of an int array, lexicographically sorted."""
    if n < 1:
        raise ValueError("word length must be >= 1")
    size = shift.alphabet_size(omega)
    if first is None:
        words = np.arange(size)[:, None]
    elif 0 <= first < size:
        words = np.array([[first]])
    else:
        return np.zeros((0, n), dtype=int)
    w = omega
    for _ in range(n - 1):
        succ = shift.matrices[w][words[:, -1]]
        count = int(succ.sum())
        if count > shift.word_cap:
            raise EnumerationOverflow(f"more than {shift.word_cap} words of length {n}")
        rows, cols = np.nonzero(succ)
        words = np.concatenate([words[rows], cols[:, None]], axis=1)
        w = shift.base.step[w]
    return words


def admissible_words(shift: RandomShift, omega: int, n: int) -> list[Word]:
    return [Word(omega, tuple(int(x) for x in row)) for row in word_array(shift, omega, n)]


def words_between(shift: RandomShift, omega: int, n: int, a: int, b: int) -> list[Word]:
    """``W_n(a, b)``: words starting with ``a`` that can be followed by ``b``."""
    arr = word_array(shift, omega, n, first=a)
    last = advance(shift.base, omega, n - 1)
    m = shift.matrices[last]
    if not 0 <= b < m.shape[1]:
        return []
    keep = m[arr[:, -1], b]
    return [Word(omega, tuple(int(x) for x in row)) for row in arr[keep]]


def greedy_extension(shift: RandomShift, omega: int, symbols: Sequence[int], length: int) -> tuple:
    """Extend an admissible word to ``length`` by always taking the smallest successor.

    The resulting infinite sequence is eventually periodic because the pair
    (state, symbol) ranges over a finite set.
    """
    out = list(symbols)
    if not out:
        raise ValueError("need at least one symbol to extend")
    w = advance(shift.base, omega, len(out) - 1)
    while len(out) < length:
        succ = np.flatnonzero(shift.matrices[w][out[-1]])
        out.append(int(succ[0]))
        w = shift.base.step[w]
    return tuple(out)


def omega_set(shift: RandomShift, word: Sequence[int] | Word) -> frozenset:
    """States at which the word is admissible (hence its cylinder is nonempty)."""
    symbols = tuple(word.symbols if isinstance(word, Word) else word)
    return frozenset(w for w in shift.base.states if is_admissible(shift, w, symbols))


def reach_sequence(shift: RandomShift, omega: int, a: int, horizon: int) -> list[np.ndarray]:
    """``out[n-1][b]`` is True iff ``W_n(a, b)`` at ``omega`` is nonempty, for ``n = 1..horizon``."""
    v = np.zeros(shift.alphabet_size(omega), dtype=bool)
    v[a] = True
    out = []
    w = omega
    for _ in range(horizon):
        v = (v.astype(np.int64) @ shift.matrices[w].astype(np.int64)) > 0
        out.append(v)
        w = shift.base.step[w]
    return out


def mixing_time(shift: RandomShift, omega: int, a: int, b: int, horizon: int) -> int:
    """Horizon-certified mixing time ``N_ab(omega)``.

    Returns the smallest ``N <= horizon`` such that every ``N <= n <= horizon``
    with ``b`` available at ``step^n(omega)`` admits a connecting word.  The
    value is only a certificate up to ``horizon``; if no such ``N`` exists,
    :class:`NotMixedWithinHorizon` is raised.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not 0 <= a < shift.alphabet_size(omega):
        raise ValueError(f"symbol {a} is not in the alphabet of state {omega}")
    last_fail = 0
    for n, reach in enumerate(reach_sequence(shift, omega, a, horizon), start=1):
        if b < reach.shape[0] and not reach[b]:
            last_fail = n
    N = last_fail + 1
    if N > horizon:
        raise NotMixedWithinHorizon(f"N_{a}{b}({omega}) exceeds horizon {horizon}")
    return N


# -- big images and preimages ---------------------------------------------


@dataclass(frozen=True)
class BipCertificate:
    omega_bi: frozenset
    images: dict
    omega_bp: frozenset
    preimages: dict
    global_bi: frozenset = field(default=frozenset())
    global_bp: frozenset = field(default=frozenset())

    def __post_init__(self):
        object.__setattr__(self, "omega_bi", frozenset(self.omega_bi))
        object.__setattr__(self, "omega_bp", frozenset(self.omega_bp))
        imgs = {int(w): frozenset(s) for w, s in self.images.items()}
        pres = {int(w): frozenset(s) for w, s in self.preimages.items()}
        object.__setattr__(self, "images", imgs)
        object.__setattr__(self, "preimages", pres)
        gbi = frozenset(self.global_bi) or frozenset().union(*imgs.values())
        gbp = frozenset(self.global_bp) or frozenset().union(*pres.values())
        object.__setattr__(self, "global_bi", gbi)
        object.__setattr__(self, "global_bp", gbp)
        if not self.omega_bi or not self.omega_bp:
            raise ConfigError("certificate state sets must be nonempty")
        if set(imgs) != set(self.omega_bi) or set(pres) != set(self.omega_bp):
            raise ConfigError("certificate needs one symbol set per listed state")
        if any(not s <= self.global_bi for s in imgs.values()) or any(
            not s <= self.global_bp for s in pres.values()
        ):
            raise ConfigError("per-state certificate sets must lie in the global sets")

    @classmethod
    def uniform(cls, base: BaseSystem, I_bi: Iterable[int], I_bp: Iterable[int],
                omega_bi: Iterable[int] | None = None, omega_bp: Iterable[int] | None = None):
        obi = frozenset(base.states if omega_bi is None else omega_bi)
        obp = frozenset(base.states if omega_bp is None else omega_bp)
        I_bi, I_bp = frozenset(I_bi), frozenset(I_bp)
        return cls(obi, {w: I_bi for w in obi}, obp, {w: I_bp for w in obp}, I_bi, I_bp)


@dataclass
class BipReport:
    images_ok: bool
    preimages_ok: bool
    image_failures: list
    preimage_failures: list
    truncation: int | None
    weight_bi: float
    weight_bp: float

    @property
    def ok(self) -> bool:
        return self.images_ok and self.preimages_ok

    def as_dict(self) -> dict:
        return {
            "images_ok": self.images_ok,
            "preimages_ok": self.preimages_ok,
            "image_failures": [list(x) for x in self.image_failures],
            "preimage_failures": [list(x) for x in self.preimage_failures],
            "truncation": self.truncation,
            "weight_bi": self.weight_bi,
            "weight_bp": self.weight_bp,
        }


def image_failures(shift: RandomShift, omega: int, symbols: Iterable[int]) -> list[int]:
    """Symbols ``a`` at ``step^-1(omega)`` with no successor in ``symbols``."""
    prev = shift.base.inverse_step(omega)
    m = shift.matrices[prev]
    cols = [b for b in symbols if 0 <= b < m.shape[1]]
    hit = m[:, cols].any(axis=1) if cols else np.zeros(m.shape[0], dtype=bool)
    return [int(a) for a in np.flatnonzero(~hit)]


def preimage_failures(shift: RandomShift, omega: int, symbols: Iterable[int]) -> list[int]:
    """Symbols ``a`` at ``omega`` with no predecessor in ``symbols``."""
    prev = shift.base.inverse_step(omega)
    m = shift.matrices[prev]
    rows = [b for b in symbols if 0 <= b < m.shape[0]]
    hit = m[rows, :].any(axis=0) if rows else np.zeros(m.shape[1], dtype=bool)
    return [int(a) for a in np.flatnonzero(~hit)]


def verify_bip(shift: RandomShift, cert: BipCertificate) -> BipReport:
    """Check a big images / big preimages certificate on the truncated alphabet.

    Failures are reported as ``(state, symbol)`` witnesses.  If the finite
    check passes but the generator says symbols beyond the truncation level
    may break the property, :class:`TruncationUnsound` is raised.
    """
    img_fail = [(w, a) for w in sorted(cert.omega_bi) for a in image_failures(shift, w, cert.images[w])]
    pre_fail = [(w, a) for w in sorted(cert.omega_bp) for a in preimage_failures(shift, w, cert.preimages[w])]
    report = BipReport(
        images_ok=not img_fail,
        preimages_ok=not pre_fail,
        image_failures=img_fail,
        preimage_failures=pre_fail,
        truncation=shift.truncation,
        weight_bi=weight_of(shift.base, cert.omega_bi),
        weight_bp=weight_of(shift.base, cert.omega_bp),
    )
    if shift.truncation is not None:
        unsound = []
        if report.images_ok and not shift.tail_images_sound:
            unsound.append("images")
        if report.preimages_ok and not shift.tail_preimages_sound:
            unsound.append("preimages")
        if unsound:
            raise TruncationUnsound(
                f"{' and '.join(unsound)} certified only below truncation L={shift.truncation}; "
                f"generator {shift.generator!r} gives no tail guarantee"
            )
    return report


def search_bip(shift: RandomShift, max_size: int = 4) -> BipCertificate | None:
    """Exhaustive search for global certificate sets of size <= ``max_size``.

    Uses ``Omega_bi = Omega_bp = all states``; returns the lexicographically
    first smallest sets, or ``None``.  On a truncated shift whose generator
    gives no tail guarantee nothing is returned, since :func:`verify_bip`
    would reject any finite certificate there.
    """
    if shift.truncation is not None and not (shift.tail_images_sound and shift.tail_preimages_sound):
        return None
    alphabet = sorted(set().union(*(range(shift.alphabet_size(w)) for w in shift.base.states)))

    def first(test):
        for size in range(1, max_size + 1):
            for cand in combinations(alphabet, size):
                if all(not test(shift, w, cand) for w in shift.base.states):
                    return frozenset(cand)
        return None

    I_bi = first(image_failures)
    I_bp = first(preimage_failures)
    if I_bi is None or I_bp is None:
        return None
    return BipCertificate.uniform(shift.base, I_bi, I_bp)


def alpha_beta(shift: RandomShift, cert: BipCertificate, omega: int, a: int, horizon: int) -> tuple[int, int]:
    """Thresholds after which ``a`` reaches / is reached from every symbol.

    ``alpha = min{n >= N : step^n(omega) in Omega_bp}`` with
    ``N = max{N_ac(omega) : c in I_bp}``.  ``beta`` is the mirror image built
    from the big image sets: the first ``n >= 2`` such that
    ``step^-(n-1)(omega)`` lies in ``Omega_bi`` and every image symbol there
    reaches ``a`` at ``omega`` in ``n - 1`` steps.
    """
    base = shift.base
    if not 0 <= a < shift.alphabet_size(omega):
        raise ValueError(f"state {omega} is not in Omega_a")
    N = 1
    for c in sorted(cert.global_bp):
        N = max(N, mixing_time(shift, omega, a, c, horizon))
    alpha = None
    for n in range(N, N + base.n_states + 1):
        if advance(base, omega, n) in cert.omega_bp:
            alpha = n
            break
    if alpha is None or alpha > horizon:
        raise NotMixedWithinHorizon(f"alpha({omega}) exceeds horizon {horizon}")

    beta = None
    for n in range(2, horizon + 1):
        start = advance(base, omega, -(n - 1))
        if start not in cert.omega_bi:
            continue
        if all(
            c >= shift.alphabet_size(start)
            or reach_sequence(shift, start, c, n - 1)[-1][a]
            for c in sorted(cert.images[start])
        ):
            beta = n
            break
    if beta is None:
        raise NotMixedWithinHorizon(f"beta({omega}) exceeds horizon {horizon}")
    return alpha, beta
