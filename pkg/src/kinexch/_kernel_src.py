"""Hot numerical kernels, written once for both backends.

Every function here is compiled with ``@njit`` by the numba backend and
executed unchanged by the numpy fallback (see ``kinexch.backend``).  To
keep that property the code sticks to plain loops, 1-D array slicing and
``np.uint64`` scalar arithmetic.  The fallback relies on numpy's wrapping
uint64 semantics; callers silence the resulting overflow warnings with
``np.errstate(over='ignore')``.

Randomness comes from an inline splitmix64 stream so that a given seed
produces the identical event sequence on both backends.
"""

import numpy as np

# splitmix64 constants
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 2.0**-53

# abm_run / rk4_run status codes
STATUS_OK = 0
STATUS_EVENT_LIMIT = 1
STATUS_ABSORBED = 2
STATUS_MASS_LEAK = 3
STATUS_NEGATIVE = 4

# model codes
UNBIASED = 0
POOR_BIASED = 1
RICH_BIASED = 2


def rng_mix(x):
    """One splitmix64 output for the state value ``x`` (seed derivation)."""
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


def rng_next(state):
    """Advance the splitmix64 stream; returns (new_state, raw u64)."""
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return state, z ^ (z >> _S31)


def rng_uniform(state):
    """Returns (new_state, uniform float in [0, 1))."""
    state, z = rng_next(state)
    return state, float(z >> _S11) * _INV53


# ---------------------------------------------------------------------------
# Fenwick tree over float64 weights (1-indexed internal array, index 0 unused)
# ---------------------------------------------------------------------------


def fenwick_build(w, tree):
    n = w.shape[0]
    for i in range(n + 1):
        tree[i] = 0.0
    for i in range(n):
        j = i + 1
        while j <= n:
            tree[j] += w[i]
            j += j & (-j)


def fenwick_add(tree, i, dv):
    n = tree.shape[0] - 1
    j = i + 1
    while j <= n:
        tree[j] += dv
        j += j & (-j)


def fenwick_prefix(tree, i):
    """Sum of weights over leaves 0..i inclusive."""
    s = 0.0
    j = i + 1
    while j > 0:
        s += tree[j]
        j -= j & (-j)
    return s


def fenwick_total(tree):
    return fenwick_prefix(tree, tree.shape[0] - 2)


def fenwick_search(tree, target):
    """Smallest leaf i with cumulative weight > target (0-indexed).

    With target < total this never lands on a zero-weight leaf.
    """
    n = tree.shape[0] - 1
    bit = 1
    while (bit << 1) <= n:
        bit <<= 1
    idx = 0
    while bit > 0:
        nxt = idx + bit
        if nxt <= n and tree[nxt] <= target:
            target -= tree[nxt]
            idx = nxt
        bit >>= 1
    return idx  # 0-indexed leaf


# ---------------------------------------------------------------------------
# Event-driven exchange simulation
# ---------------------------------------------------------------------------


def exchange_weight(model, s):
    """Giving propensity of an agent holding ``s`` dollars (lambda factored out)."""
    if model == UNBIASED:
        return 1.0 if s >= 1 else 0.0
    elif model == POOR_BIASED:
        return float(s)
    else:
        return 1.0 / s if s >= 1 else 0.0


def weights_from_state(model, S, w):
    total = 0.0
    for i in range(S.shape[0]):
        w[i] = exchange_weight(model, S[i])
        total += w[i]
    return total


def abm_run(
    model,
    lam,
    S,
    tree,
    total,
    t,
    t_end,
    max_events,
    state,
    rebuild_every,
    events_base,
    log_giver,
    log_recv,
    log_t,
    log_base,
):
    """Run exchange events until ``t_end`` or ``max_events``.

    Mutates ``S`` and ``tree`` in place.  The giver is drawn with
    probability proportional to its weight, the receiver uniformly over
    all agents; a self-pick advances the clock but moves no money.
    Returns (t, total, rng state, events executed, status).
    """
    N = S.shape[0]
    log_cap = log_giver.shape[0]
    n_ev = 0
    while n_ev < max_events:
        if total <= 0.0:
            return t, total, state, n_ev, STATUS_ABSORBED
        state, u = rng_uniform(state)
        dt = -np.log(1.0 - u) / (lam * total)
        if t + dt > t_end:
            return t_end, total, state, n_ev, STATUS_OK
        t = t + dt
        state, u = rng_uniform(state)
        tgt = u * total
        if tgt >= total:
            tgt = np.nextafter(total, 0.0)
        i = fenwick_search(tree, tgt)
        state, u = rng_uniform(state)
        j = int(u * N)
        if j >= N:
            j = N - 1
        if i != j and S[i] >= 1:
            wi0 = exchange_weight(model, S[i])
            wj0 = exchange_weight(model, S[j])
            S[i] -= 1
            S[j] += 1
            di = exchange_weight(model, S[i]) - wi0
            dj = exchange_weight(model, S[j]) - wj0
            if di != 0.0:
                fenwick_add(tree, i, di)
            if dj != 0.0:
                fenwick_add(tree, j, dj)
            total += di + dj
        n_ev += 1
        if log_cap > 0:
            slot = log_base + n_ev - 1
            if slot < log_cap:
                log_giver[slot] = i
                log_recv[slot] = j
                log_t[slot] = t
        if rebuild_every > 0 and (events_base + n_ev) % rebuild_every == 0:
            # refresh accumulated float drift in the incremental weights
            w = np.empty(N, dtype=np.float64)
            total = weights_from_state(model, S, w)
            fenwick_build(w, tree)
    return t, total, state, n_ev, STATUS_EVENT_LIMIT


# ---------------------------------------------------------------------------
# Truncated master-equation right-hand sides and fixed-step RK4
# ---------------------------------------------------------------------------


def q_apply(model, mu, p, out, narr, inv_n):
    """out <- Q[p] for the chosen model (unit rate; caller scales by lambda).

    ``narr[n] = n`` and ``inv_n[n] = 1/n`` (``inv_n[0] = 0``) are
    precomputed.  The state beyond the truncation bound is treated as
    empty, so mass flowing past it leaks; the integrator tracks that.
    """
    M = p.shape[0] - 1
    if model == UNBIASED:
        r = 1.0 - p[0]
        out[0] = p[1] - r * p[0]
        out[1:M] = p[2:] + r * p[: M - 1] - (1.0 + r) * p[1:M]
        out[M] = r * p[M - 1] - (1.0 + r) * p[M]
    elif model == POOR_BIASED:
        out[0] = p[1] - mu * p[0]
        out[1:M] = narr[2:] * p[2:] + mu * p[: M - 1] - (narr[1:M] + mu) * p[1:M]
        out[M] = mu * p[M - 1] - (narr[M] + mu) * p[M]
    else:
        w = np.dot(p[1:], inv_n[1:])
        out[0] = p[1] - w * p[0]
        out[1:M] = inv_n[2:] * p[2:] + w * p[: M - 1] - (inv_n[1:M] + w) * p[1:M]
        out[M] = w * p[M - 1] - (inv_n[M] + w) * p[M]


def rk4_run(
    model,
    mu,
    lam,
    p,
    dt,
    n_steps,
    flush_tol,
    neg_tol,
    leak_tol,
    narr,
    inv_n,
    k1,
    k2,
    k3,
    k4,
    tmp,
):
    """Classic fixed-step RK4 on dp/dt = lambda*Q[p], in place.

    After each step entries with |p_n| < flush_tol are zeroed: the
    truncated poor-biased operator has fast modes localised where the
    solution is far below any meaningful scale, and explicit RK4 at the
    standard step size would otherwise amplify subnormal-level junk.

    Returns (steps taken, status).
    """
    mass0 = p.sum()
    h = dt * lam
    for s in range(n_steps):
        q_apply(model, mu, p, k1, narr, inv_n)
        tmp[:] = p + (0.5 * h) * k1
        q_apply(model, mu, tmp, k2, narr, inv_n)
        tmp[:] = p + (0.5 * h) * k2
        q_apply(model, mu, tmp, k3, narr, inv_n)
        tmp[:] = p + h * k3
        q_apply(model, mu, tmp, k4, narr, inv_n)
        p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if p.min() < -neg_tol:
            return s + 1, STATUS_NEGATIVE
        if flush_tol > 0.0:
            p[np.abs(p) < flush_tol] = 0.0
        if mass0 - p.sum() > leak_tol:
            return s + 1, STATUS_MASS_LEAK
    return n_steps, STATUS_OK


# ---------------------------------------------------------------------------
# Coupled run: N-agent unbiased system + k independent limit processes
# ---------------------------------------------------------------------------


def coupled_unbiased_kernel(
    S,
    Sbar,
    rich_tree,
    poor_tree,
    n_rich,
    lam,
    t,
    t_end,
    state,
    rbar_grid,
    rbar_dt,
):
    """Advance the coupled system to ``t_end``.

    One master clock of rate lam*N drives the N-agent unbiased dynamics:
    a shared uniform U selects a giver uniformly among the rich (U < r)
    or among the broke, and the same U yields the limit processes'
    receive coin Y = 1[U < rbar(t)], so a receive disagrees with
    probability |r - rbar|.  Ring (i, j) also drives tagged process i
    (give) or j (receive) when the partner lies outside the tagged set;
    rings inside the tagged set are replaced by 2k fresh clocks of rate
    lam/N per tagged process.  ``rbar_grid`` holds the limit-law rich
    fraction on a uniform grid of spacing ``rbar_dt``.
    """
    N = S.shape[0]
    k = Sbar.shape[0]
    lam_master = lam * N
    lam_fresh = 2.0 * k * k * lam / N
    lam_all = lam_master + lam_fresh
    p_master = lam_master / lam_all
    ng = rbar_grid.shape[0]
    while True:
        state, u = rng_uniform(state)
        dt = -np.log(1.0 - u) / lam_all
        if t + dt > t_end:
            return t_end, n_rich, state
        t = t + dt
        # rbar(t) by linear interpolation
        x = t / rbar_dt
        g0 = int(x)
        if g0 >= ng - 1:
            rbar = rbar_grid[ng - 1]
        else:
            f = x - g0
            rbar = rbar_grid[g0] * (1.0 - f) + rbar_grid[g0 + 1] * f
        state, u = rng_uniform(state)
        if u < p_master:
            state, U = rng_uniform(state)
            r = n_rich / N
            state, u = rng_uniform(state)
            if U < r:
                rank = int(u * n_rich)
                if rank >= n_rich:
                    rank = n_rich - 1
                i = fenwick_search(rich_tree, rank + 0.5)
                giver_rich = True
            else:
                n_poor = N - n_rich
                rank = int(u * n_poor)
                if rank >= n_poor:
                    rank = n_poor - 1
                i = fenwick_search(poor_tree, rank + 0.5)
                giver_rich = False
            state, u = rng_uniform(state)
            j = int(u * N)
            if j >= N:
                j = N - 1
            if i != j and giver_rich:
                S[i] -= 1
                S[j] += 1
                if S[i] == 0:
                    fenwick_add(rich_tree, i, -1.0)
                    fenwick_add(poor_tree, i, 1.0)
                    n_rich -= 1
                if S[j] == 1:
                    fenwick_add(rich_tree, j, 1.0)
                    fenwick_add(poor_tree, j, -1.0)
                    n_rich += 1
            if i < k and j >= k:
                if Sbar[i] >= 1:
                    Sbar[i] -= 1
            elif j < k and i >= k:
                if U < rbar:
                    Sbar[j] += 1
        else:
            state, u = rng_uniform(state)
            ell = int(u * k)
            if ell >= k:
                ell = k - 1
            state, u = rng_uniform(state)
            if u < 0.5:
                if Sbar[ell] >= 1:
                    Sbar[ell] -= 1
            else:
                state, u = rng_uniform(state)
                if u < rbar:
                    Sbar[ell] += 1
