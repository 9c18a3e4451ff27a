"""Compiled inner loop of the SimpopLocal model.

Innovation sets are bitsets (one row of uint64 words per place). The matrix
``cnt[i, j] = |S_i minus S_j|`` is maintained incrementally so the diffusion
hazard of every target place is a dot product per step.

Per-step Bernoulli events with probability ``1 - exp(-h_t)`` are drawn by the
threshold method: each place carries an Exp(1) threshold and accumulates
hazard; the event fires on the step the accumulated hazard crosses the
threshold. By memorylessness this has exactly the per-step law of independent
Bernoulli draws while consuming random numbers only when events occur.
"""

import math

import numpy as np
from numba import njit

_DEBRUIJN = np.uint64(0x03F79D71B4CB0A89)
_DEBRUIJN_TABLE = np.array(
    [
        0, 1, 48, 2, 57, 49, 28, 3, 61, 58, 50, 42, 38, 29, 17, 4,
        62, 55, 59, 36, 53, 51, 43, 22, 45, 39, 33, 30, 24, 18, 12, 5,
        63, 47, 56, 27, 60, 41, 37, 16, 54, 35, 52, 21, 44, 32, 23, 11,
        46, 26, 40, 15, 34, 20, 31, 10, 25, 14, 19, 9, 13, 8, 7, 6,
    ],
    dtype=np.int64,
)

TERM_MAX_STEPS = 0
TERM_MAX_INNOVATIONS = 1


@njit(cache=True, inline="always")
def _lowbit_index(t):
    # t has exactly one bit set
    return _DEBRUIJN_TABLE[np.int64((t * _DEBRUIJN) >> np.uint64(58))]


@njit(cache=True, inline="always")
def _uniform(rs):
    # xorshift64* on a one-element state array; returns a float in [0, 1)
    x = rs[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    rs[0] = x
    return np.float64((x * np.uint64(0x2545F4914F6CDD1D)) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def _exponential(rs):
    return -math.log1p(-_uniform(rs))


@njit(cache=True)
def _seed_state(seed):
    # splitmix64 scramble so nearby seeds give unrelated streams; state must be nonzero
    z = np.uint64(seed) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    rs = np.empty(1, dtype=np.uint64)
    rs[0] = z if z != 0 else np.uint64(0x9E3779B97F4A7C15)
    return rs


@njit(cache=True)
def growth_kernel(pop, res, rate):
    out = pop + rate * pop * (1.0 - pop / res)
    return out if out > 0.0 else 0.0


@njit(cache=True)
def creation_hazard(pop, log_keep):
    # log_keep = log(1 - p_creation); hazard h with P(event) = 1 - exp(-h)
    if pop < 2.0:
        return 0.0
    return -log_keep * (pop * (pop - 1.0) * 0.5)


@njit(cache=True)
def impact_kernel(res, impact, r_max):
    out = res * (1.0 + impact * (1.0 - res / r_max))
    return out if out < r_max else r_max


@njit(cache=True)
def _apply_acquisition(has, cnt, lo, j, k):
    w = k >> 6
    bit = np.uint64(1) << np.uint64(k & 63)
    n = has.shape[0]
    for i in range(n):
        if i == j:
            continue
        if has[i, w] & bit:
            cnt[i, j] -= 1
        else:
            cnt[j, i] += 1
            if lo[j, i] > w:
                lo[j, i] = w
    has[j, w] |= bit


@njit(cache=True, inline="always")
def _popcount(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return np.int64((x * np.uint64(0x0101010101010101)) >> np.uint64(56))


@njit(cache=True, inline="always")
def _geometric_skip(rs, log_keep_one):
    # failures before the next success of a Bernoulli(q) process, log_keep_one = log(1 - q)
    if log_keep_one == -np.inf:
        return 0
    g = math.log1p(-_uniform(rs)) / log_keep_one
    return np.int64(g) if g < 4e18 else np.int64(4e18)


@njit(cache=True)
def _select_bernoulli(rs, has, pend, pmin, lo, i, j, nwords, n_avail, first, log_keep_one):
    """Mark elements of ``S_i minus S_j`` chosen by a Bernoulli process into ``pend[j]``.

    Elements are ranked word by word from the newest innovations down, so the
    scan usually stops before reaching old, almost fully diffused words.
    ``first`` is the rank of the first success; later elements are
    independent Bernoulli draws (geometric skips when the success
    probability is small).
    """
    w0 = lo[i, j]
    while w0 < nwords and (has[i, w0] & ~has[j, w0]) == 0:
        w0 += 1
    lo[i, j] = w0
    if w0 < pmin[j]:
        pmin[j] = w0
    if log_keep_one == -np.inf:
        for w in range(w0, nwords):
            pend[j, w] |= has[i, w] & ~has[j, w]
        return
    q = -math.expm1(log_keep_one)
    dense = q > 0.25
    r = first
    base = 0
    for w in range(nwords - 1, w0 - 1, -1):
        if r >= n_avail:
            return
        d = has[i, w] & ~has[j, w]
        if d == 0:
            continue
        c = _popcount(d)
        if r >= base + c:
            base += c
            continue
        chosen = np.uint64(0)
        pos = base
        while pos < r:
            d &= d - np.uint64(1)
            pos += 1
        if dense:
            # rank r is a success; every later element of the word is a Bernoulli draw
            chosen |= d & (~d + np.uint64(1))
            d &= d - np.uint64(1)
            while d != 0:
                if _uniform(rs) < q:
                    chosen |= d & (~d + np.uint64(1))
                d &= d - np.uint64(1)
            pend[j, w] |= chosen
            base += c
            # rank of the next success beyond this word, by per-element draws
            r = base
            while r < n_avail and _uniform(rs) >= q:
                r += 1
            continue
        while r < base + c:
            while pos < r:
                d &= d - np.uint64(1)
                pos += 1
            chosen |= d & (~d + np.uint64(1))
            r += 1 + _geometric_skip(rs, log_keep_one)
        pend[j, w] |= chosen
        base += c


@njit(cache=True)
def _diffuse_into(rs, j, has, cnt, lo, pend, pmin, pop, weights, log_keep, nwords, m_arr):
    """Sample the diffusion outcome for target ``j`` given at least one success.

    Trials are the (source, transferable innovation) pairs in source order.
    The first success is drawn from its conditional law; every trial after it
    is an unconditioned Bernoulli draw.
    """
    n = has.shape[0]
    total_log = 0.0
    for i in range(n):
        m_arr[i] = 0.0
        if cnt[i, j] > 0 and weights[i, j] > 0.0:
            m_arr[i] = pop[i] * pop[j] * weights[i, j]
            total_log += log_keep * m_arr[i] * cnt[i, j]
    p_any = -math.expm1(total_log)
    if p_any <= 0.0:
        return
    u = _uniform(rs) * p_any
    cum = 0.0
    prefix = 1.0
    first = -1
    last_pos = -1
    for i in range(n):
        if m_arr[i] <= 0.0:
            continue
        last_pos = i
        em1 = math.expm1(log_keep * m_arr[i] * cnt[i, j])
        p_g = prefix * -em1
        if u < cum + p_g:
            first = i
            break
        cum += p_g
        prefix *= 1.0 + em1
    if first < 0:
        first = last_pos
    for i in range(first, n):
        if m_arr[i] <= 0.0:
            continue
        n_g = cnt[i, j]
        log_keep_one = log_keep * m_arr[i]
        if i == first:
            # rank of the first success, conditioned on at least one in the group
            if log_keep_one == -np.inf:
                r = 0
            else:
                v = _uniform(rs) * -math.expm1(n_g * log_keep_one)
                r = np.int64(math.ceil(math.log1p(-v) / log_keep_one)) - 1
                if r < 0:
                    r = 0
                elif r > n_g - 1:
                    r = n_g - 1
        else:
            r = _geometric_skip(rs, log_keep_one)
        if r < n_g:
            _select_bernoulli(rs, has, pend, pmin, lo, i, j, nwords, n_g, r, log_keep_one)


@njit(cache=True)
def diffusion_phase(rs, has, cnt, lo, pend, pmin, pop, weights, keep_d, nwords, acc_d, thr_d, newacq):
    """One synchronous diffusion phase: decide on the start-of-phase sets, then apply."""
    n = has.shape[0]
    any_pending = False
    m_arr = np.empty(n)
    for j in range(n):
        h = 0.0
        for i in range(n):
            c = cnt[i, j]
            if c > 0:
                h += c * pop[i] * weights[i, j]
        if h <= 0.0:
            continue
        acc_d[j] += h * -keep_d * pop[j]
        if acc_d[j] >= thr_d[j]:
            acc_d[j] = 0.0
            thr_d[j] = _exponential(rs)
            _diffuse_into(rs, j, has, cnt, lo, pend, pmin, pop, weights, keep_d, nwords, m_arr)
            any_pending = True
    if not any_pending:
        return
    for j in range(n):
        for w in range(pmin[j], nwords):
            b = pend[j, w]
            if b == 0:
                continue
            pend[j, w] = np.uint64(0)
            while b != 0:
                t = b & (~b + np.uint64(1))
                b ^= t
                _apply_acquisition(has, cnt, lo, j, w * 64 + _lowbit_index(t))
                newacq[j] += 1
        pmin[j] = pend.shape[1]


@njit(cache=True)
def run_kernel(pop0, res0, weights, p_creation, p_diffusion, impact, r_max,
               growth_rate, max_steps, max_innovations, seed, record):
    rs = _seed_state(seed)
    n = pop0.shape[0]
    words = (max_innovations + 63) // 64
    has = np.zeros((n, words), dtype=np.uint64)
    pend = np.zeros((n, words), dtype=np.uint64)
    pmin = np.full(n, words, dtype=np.int64)
    cnt = np.zeros((n, n), dtype=np.int64)
    lo = np.full((n, n), words, dtype=np.int64)
    held = np.zeros(n, dtype=np.int64)
    newacq = np.zeros(n, dtype=np.int64)
    pop = pop0.copy()
    res = res0.copy()
    keep_c = math.log1p(-p_creation) if p_creation < 1.0 else -np.inf
    keep_d = math.log1p(-p_diffusion) if p_diffusion < 1.0 else -np.inf
    thr_c = np.empty(n)
    thr_d = np.empty(n)
    for j in range(n):
        thr_c[j] = _exponential(rs)
        thr_d[j] = _exponential(rs)
    acc_c = np.zeros(n)
    acc_d = np.zeros(n)
    if record:
        traj_pop = np.empty((max_steps, n))
        traj_res = np.empty((max_steps, n))
        traj_inn = np.empty((max_steps, n), dtype=np.int64)
    else:
        traj_pop = np.empty((0, n))
        traj_res = np.empty((0, n))
        traj_inn = np.empty((0, n), dtype=np.int64)
    n_innov = 0
    term = TERM_MAX_STEPS
    step = 0
    while step < max_steps:
        step += 1
        for j in range(n):
            pop[j] = growth_kernel(pop[j], res[j], growth_rate)
        if n_innov > 0 and p_diffusion > 0.0:
            diffusion_phase(rs, has, cnt, lo, pend, pmin, pop, weights, keep_d,
                            (n_innov + 63) // 64, acc_d, thr_d, newacq)
        if p_creation > 0.0:
            for j in range(n):
                if n_innov >= max_innovations:
                    break
                h = creation_hazard(pop[j], keep_c)
                if h <= 0.0:
                    continue
                acc_c[j] += h
                if acc_c[j] >= thr_c[j]:
                    acc_c[j] = 0.0
                    thr_c[j] = _exponential(rs)
                    _apply_acquisition(has, cnt, lo, j, n_innov)
                    n_innov += 1
                    newacq[j] += 1
        for j in range(n):
            a = newacq[j]
            if a > 0:
                held[j] += a
                newacq[j] = 0
                if impact > 0.0:
                    r = res[j]
                    for _ in range(a):
                        r = impact_kernel(r, impact, r_max)
                        if r >= r_max:
                            break
                    res[j] = r
        if record:
            traj_pop[step - 1] = pop
            traj_res[step - 1] = res
            traj_inn[step - 1] = held
        if n_innov >= max_innovations:
            term = TERM_MAX_INNOVATIONS
            break
    if record:
        traj_pop = traj_pop[:step]
        traj_res = traj_res[:step]
        traj_inn = traj_inn[:step]
    return pop, res, held, has, step, n_innov, term, traj_pop, traj_res, traj_inn
