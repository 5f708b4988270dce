"""Finite realizations of the ergodic base (states, invertible step, weights).

Two realizations are supported:

``cyclic``
    the states ``0..p-1`` form a single cycle ``w -> w+1 mod p`` with uniform
    weights; this is exactly ergodic.
``sampled-path``
    the states are the positions ``0..T-1`` of a realized environment
    trajectory, the step is the index shift with wrap-around, and each
    position carries the label of the environment observed there.

Both give a bijective, weight-preserving step, so every operation below is
exact arithmetic on a finite permutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, NonFinite, NoReturn

MODES = ("cyclic", "sampled-path")


@dataclass(frozen=True)
class BaseSystem:
    step: tuple[int, ...]
    weights: tuple[float, ...]
    mode: str = "cyclic"
    labels: tuple[int, ...] = ()
    _inverse: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.step)
        if n < 1:
            raise ConfigError("base needs at least one state")
        if self.mode not in MODES:
            raise ConfigError(f"unknown base mode {self.mode!r}")
        if sorted(self.step) != list(range(n)):
            raise ConfigError("step is not a bijection on the states")
        if len(self.weights) != n:
            raise ConfigError("one weight per state is required")
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("weights must be a probability vector")
        if np.any(np.abs(w[list(self.step)] - w) > 1e-12):
            raise ConfigError("step does not preserve the weights")
        if self.labels and len(self.labels) != n:
            raise ConfigError("one label per state is required")
        inv = [0] * n
        for s, t in enumerate(self.step):
            inv[t] = s
        object.__setattr__(self, "_inverse", tuple(inv))

    @classmethod
    def cyclic(cls, period: int) -> "BaseSystem":
        if period < 1:
            raise ConfigError("period must be >= 1")
        step = tuple((i + 1) % period for i in range(period))
        return cls(step, (1.0 / period,) * period, "cyclic", tuple(range(period)))

    @classmethod
    def sampled_path(cls, labels: Sequence[int]) -> "BaseSystem":
        """Positions of a realized trajectory, wrapped into one cycle."""
        T = len(labels)
        if T < 1:
            raise ConfigError("empty environment path")
        step = tuple((i + 1) % T for i in range(T))
        return cls(step, (1.0 / T,) * T, "sampled-path", tuple(int(x) for x in labels))

    @classmethod
    def sample_markov_path(cls, transition, length: int, seed: int, start: int = 0) -> "BaseSystem":
        """Draw an environment path from a finite Markov chain with a seeded RNG."""
        P = np.asarray(transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ConfigError("environment transition matrix must be square")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ConfigError("environment transition matrix must be stochastic")
        rng = np.random.default_rng(seed)
        labels = [start]
        for _ in range(length - 1):
            labels.append(int(rng.choice(P.shape[0], p=P[labels[-1]])))
        return cls.sampled_path(labels)

    @property
    def n_states(self) -> int:
        return len(self.step)

    @property
    def states(self) -> range:
        return range(len(self.step))

    def label(self, omega: int) -> int:
        return self.labels[omega] if self.labels else omega

    def inverse_step(self, omega: int) -> int:
        return self._inverse[omega]

    def inverse(self) -> "BaseSystem":
        """The same base run backwards (step replaced by its inverse)."""
        return BaseSystem(self._inverse, self.weights, self.mode, self.labels)

    def orbit_period(self, omega: int) -> int:
        """Length of the cycle through ``omega``."""
        k, w = 1, self.step[omega]
        while w != omega:
            w = self.step[w]
            k += 1
        return k

    def orbit(self, omega: int, n: int) -> list[int]:
        """The states ``omega, step(omega), ..., step^(n-1)(omega)``."""
        out = []
        for _ in range(n):
            out.append(omega)
            omega = self.step[omega]
        return out


def advance(system: BaseSystem, omega: int, k: int) -> int:
    """Apply the step ``k`` times (its inverse when ``k`` is negative)."""
    p = system.orbit_period(omega)
    k %= p
    for _ in range(k):
        omega = system.step[omega]
    return omega


def return_times(system: BaseSystem, omega: int, target: Iterable[int], n_max: int) -> list[int]:
    """All ``1 <= n <= n_max`` with ``advance(omega, n)`` in ``target``."""
    target = frozenset(target)
    if not target:
        raise ValueError("target set must be nonempty")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    out = []
    w = omega
    for n in range(1, n_max + 1):
        w = system.step[w]
        if w in target:
            out.append(n)
    return out


def induced_map(system: BaseSystem, target: Iterable[int], omega: int) -> tuple[int, int]:
    """First return ``(eta, theta_hat(omega))`` of ``omega`` to ``target``."""
    return jump_map(system, target, 1, omega)


def jump_map(system: BaseSystem, target: Iterable[int], N: int, omega: int) -> tuple[int, int]:
    """Smallest return time ``>= N`` and the state reached."""
    target = frozenset(target)
    if omega not in target:
        raise ValueError(f"state {omega} is not in the target set")
    if N < 1:
        raise ValueError("N must be >= 1")
    w = advance(system, omega, N - 1)
    for n in range(N, N + system.n_states + 1):
        w = system.step[w]
        if w in target:
            return n, w
    raise NoReturn(f"state {omega} does not return to the target within {N + system.n_states} steps")


def induced_times(system: BaseSystem, target: Iterable[int], omega: int, k: int) -> int:
    """``eta_k(omega)``: sum of the first ``k`` induced return times."""
    target = frozenset(target)
    total = 0
    for _ in range(k):
        eta, omega = induced_map(system, target, omega)
        total += eta
    return total


def base_average(system: BaseSystem, g) -> float:
    """Integral of ``g`` against the base weights.

    ``g`` is either a callable on states or a sequence indexed by state.
    """
    vals = np.array([g(w) for w in system.states] if callable(g) else g, dtype=float)
    if vals.shape != (system.n_states,):
        raise ValueError("one value per state is required")
    if not np.all(np.isfinite(vals)):
        raise NonFinite("base average of a non-finite function")
    return float(np.dot(vals, np.asarray(system.weights)))


@dataclass(frozen=True)
class ReturnStructure:
    target: frozenset
    times: dict
    first_return: dict
    induced_step: dict


def return_structure(system: BaseSystem, target: Iterable[int], n_max: int) -> ReturnStructure:
    target = frozenset(target)
    times = {w: return_times(system, w, target, n_max) for w in system.states}
    eta, hat = {}, {}
    for w in sorted(target):
        eta[w], hat[w] = induced_map(system, target, w)
    return ReturnStructure(target, times, eta, hat)


def weight_of(system: BaseSystem, subset: Iterable[int]) -> float:
    return float(sum(system.weights[w] for w in set(subset)))


StateFunction = Callable[[int], float]
