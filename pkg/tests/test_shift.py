import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import enum_words

from randtmc.base import BaseSystem
from randtmc.errors import ConfigError, EnumerationOverflow, NotMixedWithinHorizon, TruncationUnsound
from randtmc.shift import (
    BipCertificate,
    RandomShift,
    admissible_words,
    alpha_beta,
    band_shift,
    full_shift,
    golden_mean,
    greedy_extension,
    is_admissible,
    mixing_time,
    omega_set,
    renewal_shift,
    search_bip,
    verify_bip,
    word_array,
    words_between,
)

ONE = BaseSystem.cyclic(1)
P2_MATS = [np.array([[1, 1], [1, 0]]), np.array([[1, 1], [0, 1]])]


def syms(words):
    return {w.symbols for w in words}


def test_admissible_word_counts():
    assert len(admissible_words(full_shift(ONE, 2), 0, 3)) == 8
    gm = golden_mean(ONE)
    assert syms(admissible_words(gm, 0, 3)) == {(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 0, 1)}
    nob = band_shift(ONE, 1, 4)
    assert syms(admissible_words(nob, 0, 2)) == {(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3)}


def test_words_between():
    assert syms(words_between(full_shift(ONE, 2), 0, 2, 0, 1)) == {(0, 0), (0, 1)}
    gm = golden_mean(ONE)
    oracle = {w for w in enum_words(gm, 0, 3) if w[0] == 0 and gm.allowed(0, w[-1], 0)}
    assert syms(words_between(gm, 0, 3, 0, 0)) == oracle == {(0, 0, 0), (0, 0, 1), (0, 1, 0)}
    # 1 has no loop, so W_1(1, 1) is empty
    assert words_between(gm, 0, 1, 1, 1) == []


def test_omega_set():
    assert omega_set(full_shift(BaseSystem.cyclic(3), 2), (1, 0, 1)) == {0, 1, 2}
    assert omega_set(golden_mean(ONE), (1, 1)) == frozenset()
    p2 = RandomShift.from_environments(BaseSystem.cyclic(2), P2_MATS)
    assert omega_set(p2, (1, 1)) == {1}


def test_mixing_times():
    fs = full_shift(ONE, 2)
    assert all(mixing_time(fs, 0, a, b, 10) == 1 for a in (0, 1) for b in (0, 1))
    gm = golden_mean(ONE)
    assert mixing_time(gm, 0, 0, 0, 10) == 1
    assert mixing_time(gm, 0, 1, 1, 10) == 2
    with pytest.raises(NotMixedWithinHorizon):
        mixing_time(band_shift(ONE, 1, 16), 0, 2, 0, 20)


def test_verify_bip_examples():
    base = BaseSystem.cyclic(3)
    rep = verify_bip(full_shift(base, 2), BipCertificate.uniform(base, {0}, {0}))
    assert rep.images_ok and rep.preimages_ok
    rep = verify_bip(golden_mean(ONE), BipCertificate.uniform(ONE, {0}, {0}))
    assert rep.ok
    nob = band_shift(ONE, 1, 16)
    for I in ({0}, {0, 1}, {2, 5}):
        rep = verify_bip(nob, BipCertificate.uniform(ONE, I, I))
        assert not rep.images_ok
        # max(I) + 1 moves to {max I + 1, max I + 2}, missing I
        assert (0, max(I) + 1) in rep.image_failures


def test_truncation_unsound_is_raised():
    # the full alphabet below L is a certificate of the truncated band shift,
    # but that says nothing about symbols >= L
    sh = band_shift(ONE, 1, 3)
    cert = BipCertificate.uniform(ONE, {0, 1, 2}, {0, 1, 2})
    with pytest.raises(TruncationUnsound):
        verify_bip(sh, cert)


def test_renewal_preimages_are_tail_sound():
    sh = renewal_shift(ONE, 6)
    with pytest.raises(TruncationUnsound, match="^images certified"):
        verify_bip(sh, BipCertificate.uniform(ONE, range(6), {0}))
    rep = verify_bip(sh, BipCertificate.uniform(ONE, {0}, {0}))
    assert rep.preimages_ok and rep.image_failures == [(0, a) for a in range(2, 6)]


def test_alpha_beta():
    fs = full_shift(ONE, 2)
    assert alpha_beta(fs, BipCertificate.uniform(ONE, {0}, {0}), 0, 0, 10)[0] == 1
    gm = golden_mean(ONE)
    assert alpha_beta(gm, BipCertificate.uniform(ONE, {0}, {0}), 0, 0, 10)[0] == 1
    base = BaseSystem.cyclic(2)
    fs2 = full_shift(base, 2)
    cert = BipCertificate.uniform(base, {0}, {0}, omega_bp={0})
    alphas = {w: alpha_beta(fs2, cert, w, 0, 10)[0] for w in base.states}
    # step^alpha(w) must land in Omega_bp = {0}
    assert alphas == {0: 2, 1: 1}


def test_search_bip():
    cert = search_bip(golden_mean(ONE))
    assert cert.global_bi == {0} and cert.global_bp == {0}
    assert search_bip(band_shift(ONE, 1, 8)) is None
    assert search_bip(full_shift(ONE, 8, countable=True)).global_bi == {0}


def test_greedy_and_overflow():
    assert greedy_extension(golden_mean(ONE), 0, (1,), 5) == (1, 0, 0, 0, 0)
    small = RandomShift(ONE, (np.ones((3, 3)),), word_cap=10)
    with pytest.raises(EnumerationOverflow):
        word_array(small, 0, 4)


def test_bad_shift_configs():
    with pytest.raises(ConfigError):
        RandomShift(ONE, (np.array([[1, 0], [0, 0]]),))
    with pytest.raises(ConfigError):
        RandomShift(BaseSystem.cyclic(2), (np.ones((2, 3)), np.ones((2, 2))))


def test_gm_fibonacci_counts():
    gm = golden_mean(ONE)
    fib = [1, 1]
    while len(fib) < 16:
        fib.append(fib[-1] + fib[-2])
    for n in range(1, 13):
        assert word_array(gm, 0, n).shape[0] == fib[n + 1] == len(enum_words(gm, 0, n))


@st.composite
def random_shifts(draw):
    p = draw(st.integers(1, 3))
    sizes = [draw(st.integers(1, 3)) for _ in range(p)]
    mats = []
    for w in range(p):
        rows, cols = sizes[w], sizes[(w + 1) % p]
        m = np.array(draw(st.lists(st.lists(st.booleans(), min_size=cols, max_size=cols),
                                   min_size=rows, max_size=rows)))
        for i in range(rows):
            if not m[i].any():
                m[i, draw(st.integers(0, cols - 1))] = True
        mats.append(m)
    return RandomShift(BaseSystem.cyclic(p), tuple(mats))


@settings(max_examples=60, deadline=None)
@given(sh=random_shifts(), data=st.data())
def test_word_array_matches_enumeration(sh, data):
    w = data.draw(st.integers(0, sh.base.n_states - 1))
    n = data.draw(st.integers(1, 5))
    got = [tuple(r) for r in word_array(sh, w, n)]
    assert got == sorted(enum_words(sh, w, n))
    assert all(is_admissible(sh, w, x) for x in got)


@settings(max_examples=60, deadline=None)
@given(sh=random_shifts(), data=st.data())
def test_splice_bound(sh, data):
    w = data.draw(st.integers(0, sh.base.n_states - 1))
    m = data.draw(st.integers(1, 6))
    n = data.draw(st.integers(1, 6))
    wm = (w + m) % sh.base.n_states
    assert word_array(sh, w, m + n).shape[0] <= word_array(sh, w, m).shape[0] * word_array(sh, wm, n).shape[0]


@settings(max_examples=40, deadline=None)
@given(sh=random_shifts(), data=st.data())
def test_words_between_continue_admissibly(sh, data):
    w = data.draw(st.integers(0, sh.base.n_states - 1))
    n = data.draw(st.integers(1, 4))
    a = data.draw(st.integers(0, sh.alphabet_size(w) - 1))
    nxt = (w + n) % sh.base.n_states
    for b in range(sh.alphabet_size(nxt)):
        for word in words_between(sh, w, n, a, b):
            ext = greedy_extension(sh, w, word.symbols + (b,), n + 3)
            assert is_admissible(sh, w, ext)


@settings(max_examples=30, deadline=None)
@given(p=st.integers(1, 4), k=st.integers(1, 5), a=st.integers(0, 4))
def test_full_shifts_have_singleton_certificates(p, k, a):
    base = BaseSystem.cyclic(p)
    a %= k
    assert verify_bip(full_shift(base, k), BipCertificate.uniform(base, {a}, {a})).ok
