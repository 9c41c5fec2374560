"""Compiled simulation kernels (numba).

Three entry points, all driven by the same xoshiro256** stream and the same
sampling conventions as the pure-Python reference engine, so that a given
(seed, replica) produces the same trajectory on either path:

* ``sim_kernel``          one replica, records V and a truncated size
                          histogram at checkpoints; Fenwick-tree sampling,
                          O(log horizon) per step.
* ``sim_kernel_tracked``  same walk plus online martingale decompositions
                          for the part count and for size classes k <= kmax,
                          with optional per-step bound audits.
* ``sim_small_batch``     many replicas at a short horizon with linear-scan
                          sampling (sizes stay tiny); used for the
                          exact-enumeration cross-checks at n <= 12.

Sampling convention shared by all kernels: draw one uniform u per step,
set target = u * (t + theta); the step opens a new part when
target < alpha*V + theta, otherwise the Fenwick/linear search finds the
smallest size whose cumulative join weight exceeds the remainder.

Accumulators that feed exact-identity residual checks (martingale sums,
quadratic variations, drift sums) use Kahan compensation so residuals stay
near machine precision over 1e5+ steps.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

_U64_PHI = uint64(0x9E3779B97F4A7C15)
_U64_MIX1 = uint64(0xBF58476D1CE4E5B9)
_U64_MIX2 = uint64(0x94D049BB133111EB)
_U53_INV = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> uint64(30))) * _U64_MIX1
    z = (z ^ (z >> uint64(27))) * _U64_MIX2
    return z ^ (z >> uint64(31))


@njit(cache=True)
def _expand_seed(seed, state):
    s = uint64(seed)
    for i in range(4):
        s = s + _U64_PHI
        state[i] = _mix64(s)


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@njit(cache=True, inline="always")
def _next_u64(state):
    result = _rotl(state[1] * uint64(5), 7) * uint64(9)
    t = state[1] << uint64(17)
    state[2] ^= state[0]
    state[3] ^= state[1]
    state[1] ^= state[2]
    state[0] ^= state[3]
    state[2] ^= t
    state[3] = _rotl(state[3], 45)
    return result


@njit(cache=True, inline="always")
def _next_uniform(state):
    return float(_next_u64(state) >> uint64(11)) * _U53_INV


@njit(cache=True)
def rng_stream(seed, out):
    """Fill ``out`` with the uniform stream of ``seed`` (test hook)."""
    state = np.empty(4, dtype=np.uint64)
    _expand_seed(seed, state)
    for i in range(out.shape[0]):
        out[i] = _next_uniform(state)


@njit(cache=True, inline="always")
def _fw_add(tree, cap, size, dw):
    j = size
    while j <= cap:
        tree[j] += dw
        j += j & (-j)


@njit(cache=True, inline="always")
def _fw_search(tree, cap, top_bit, rem):
    pos = 0
    bit = top_bit
    while bit != 0:
        nxt = pos + bit
        if nxt <= cap and tree[nxt] <= rem:
            rem -= tree[nxt]
            pos = nxt
        bit >>= 1
    if pos + 1 > cap:
        return cap
    return pos + 1


@njit(cache=True, inline="always")
def _repair_size(counts, sz, max_size):
    # Floating-point boundary landings can hit an empty cell; snap to the
    # nearest occupied size (downward first).  max_size is always occupied.
    if counts[sz] > 0:
        return sz
    d = sz - 1
    while d >= 1:
        if counts[d] > 0:
            return d
        d -= 1
    u = sz + 1
    while u <= max_size:
        if counts[u] > 0:
            return u
        u += 1
    return max_size


@njit(cache=True, inline="always")
def _kadd(s, c, x):
    # Kahan compensated add: returns updated (sum, carry)
    y = x - c
    t = s + y
    return t, (t - s) - y


@njit(cache=True, nogil=True)
def sim_kernel(
    alpha, theta, m_bound, horizon, seed,
    checkpoints, kmax_hist,
    counts, tree,
    cp_v, cp_hist, cp_tail,
):
    """One replica to ``horizon``; histogram snapshots at ``checkpoints``.

    counts/tree are caller-provided zeroed scratch of length horizon+2.
    Returns the largest part size reached.
    """
    cap = horizon
    top_bit = 1
    while top_bit * 2 <= cap:
        top_bit *= 2

    state = np.empty(4, dtype=np.uint64)
    _expand_seed(seed, state)

    counts[1] = 1
    v = 1
    _fw_add(tree, cap, 1, 1.0 - alpha)
    max_size = 1

    ncp = checkpoints.shape[0]
    ci = 0
    if ci < ncp and checkpoints[ci] == 1:
        cp_v[ci] = 1
        for k in range(1, kmax_hist + 1):
            cp_hist[ci, k - 1] = 1 if k == 1 else 0
        cp_tail[ci] = 0 if kmax_hist >= 1 else 1
        ci += 1

    for t in range(1, horizon):
        denom = t + theta
        wnew = alpha * v + theta
        if m_bound > 0 and v >= m_bound:
            wnew = 0.0
        target = _next_uniform(state) * denom
        if target < wnew:
            counts[1] += 1
            v += 1
            _fw_add(tree, cap, 1, 1.0 - alpha)
        else:
            sz = _fw_search(tree, cap, top_bit, target - wnew)
            sz = _repair_size(counts, sz, max_size)
            counts[sz] -= 1
            counts[sz + 1] += 1
            _fw_add(tree, cap, sz, -(sz - alpha))
            _fw_add(tree, cap, sz + 1, sz + 1 - alpha)
            if sz + 1 > max_size:
                max_size = sz + 1

        if ci < ncp and t + 1 == checkpoints[ci]:
            cp_v[ci] = v
            acc = 0
            for k in range(1, kmax_hist + 1):
                c = counts[k]
                cp_hist[ci, k - 1] = c
                acc += c
            cp_tail[ci] = v - acc
            ci += 1
    return max_size


@njit(cache=True, nogil=True)
def sim_kernel_tracked(
    alpha, theta, horizon, seed,
    checkpoints, kmax_hist, kmax_m, audit,
    inc_coef, varf_coef, recv_r, recv_var_coef,
    counts, tree,
    cp_v, cp_hist, cp_tail,
    cp_phi, cp_m, cp_w, cp_theta_v,
    cp_x, cp_mk, cp_wk, cp_zsum, cp_invpsi,
    cp_drift1, cp_theta1,
    x_base,
    viol_counts, viol_margin,
):
    """Tracked replica (Polynomial regime only).

    Online quantities, for each step t -> t+1 (write j = t+1):

    * part count:  phi_j, zeta_j = (dV - p_j)/phi_j, M_j, W_j (exact
      conditional variances p(1-p)/phi^2), theta_j.
    * size classes k <= kmax_m: 1/psi_j(k) by its positive recurrence from
      psi_k(k) = 1, zeta_j(k) from the three-point conditional law, M_j(k),
      W_j(k), the running drift sums of the k = 1 identity, the base value
      X_k(k), and Z_j(k) = sum_{i=k}^{j-1} X_i(k-1) for the k > 1 identity.

    Audits (when ``audit``): per-step increment and conditional-variance
    bounds; viol_counts/viol_margin are indexed
    [0] part-count increment, [1] part-count variance,
    [2] size-class increment, [3] size-class variance (state form),
    [4] size-class variance (part-count form).
    """
    cap = horizon
    top_bit = 1
    while top_bit * 2 <= cap:
        top_bit *= 2

    state = np.empty(4, dtype=np.uint64)
    _expand_seed(seed, state)

    counts[1] = 1
    v = 1
    _fw_add(tree, cap, 1, 1.0 - alpha)
    max_size = 1

    phi = 1.0
    m_sum, m_c = 0.0, 0.0
    w_sum, w_c = 0.0, 0.0
    tv_sum, tv_c = 1.0, 0.0  # theta_1 = 1

    km = kmax_m
    invpsi = np.zeros(km + 1)
    mk = np.zeros(km + 1)
    mk_c = np.zeros(km + 1)
    wk = np.zeros(km + 1)
    wk_c = np.zeros(km + 1)
    zs = np.zeros(km + 1)
    zs_c = np.zeros(km + 1)
    d1_sum, d1_c = 0.0, 0.0
    t1_sum, t1_c = 1.0, 0.0  # theta_1(1) = N_1(1) = 1
    if km >= 1:
        invpsi[1] = 1.0
        x_base[1] = 1.0

    ncp = checkpoints.shape[0]
    ci = 0
    if ci < ncp and checkpoints[ci] == 1:
        cp_v[ci] = 1
        for k in range(1, kmax_hist + 1):
            cp_hist[ci, k - 1] = 1 if k == 1 else 0
        cp_tail[ci] = 0 if kmax_hist >= 1 else 1
        cp_phi[ci] = 1.0
        cp_m[ci] = 0.0
        cp_w[ci] = 0.0
        cp_theta_v[ci] = 1.0
        cp_drift1[ci] = 0.0
        cp_theta1[ci] = 1.0
        for k in range(1, km + 1):
            cp_invpsi[ci, k] = invpsi[k]
            cp_x[ci, k] = 1.0 if k == 1 else 0.0
        ci += 1

    for t in range(1, horizon):
        denom = t + theta
        wnew = alpha * v + theta
        target = _next_uniform(state) * denom
        new_part = target < wnew
        sz = 0
        if not new_part:
            sz = _fw_search(tree, cap, top_bit, target - wnew)
            sz = _repair_size(counts, sz, max_size)

        # ---- part-count martingale (state still at time t) ----
        phi_new = phi * (1.0 + alpha / denom)
        p = wnew / denom
        dv = 1.0 if new_part else 0.0
        zeta = (dv - p) / phi_new
        m_sum, m_c = _kadd(m_sum, m_c, zeta)
        var_v = p * (1.0 - p) / (phi_new * phi_new)
        w_sum, w_c = _kadd(w_sum, w_c, var_v)
        tv_sum, tv_c = _kadd(tv_sum, tv_c, theta / (denom * phi_new))
        if audit:
            r = abs(zeta) / recv_r
            if r > viol_margin[0]:
                viol_margin[0] = r
            if r > 1.0:
                viol_counts[0] += 1
            bound = (
                recv_var_coef
                * (t + 1 + theta) ** (-alpha - 1.0)
                * (v + theta / alpha)
                / phi
            )
            r = var_v / bound
            if r > viol_margin[1]:
                viol_margin[1] = r
            if r > 1.0:
                viol_counts[1] += 1

        # ---- size-class martingales ----
        if km >= 1:
            lnjt = np.log(t + 1 + theta)
            lnt = np.log(t + theta)
            # Z sums consume X at time t, before psi and counts move on
            for k in range(2, km + 1):
                if t >= k:
                    zs[k], zs_c[k] = _kadd(
                        zs[k], zs_c[k], counts[k - 1] * invpsi[k - 1]
                    )
            for k in range(1, km + 1):
                if t < k:
                    continue
                invpsi[k] = invpsi[k] * ((t + theta) / (t - k + alpha + theta))
                nk = counts[k]
                if k == 1:
                    p_plus = wnew / denom
                    p_minus = (1.0 - alpha) * nk / denom
                else:
                    nk1 = counts[k - 1]
                    p_plus = (k - 1 - alpha) * nk1 / denom
                    p_minus = (k - alpha) * nk / denom
                mu = p_plus - p_minus
                if new_part:
                    dn = 1.0 if k == 1 else 0.0
                else:
                    if sz == k:
                        dn = -1.0
                    elif sz + 1 == k:
                        dn = 1.0
                    else:
                        dn = 0.0
                zk = (dn - mu) * invpsi[k]
                mk[k], mk_c[k] = _kadd(mk[k], mk_c[k], zk)
                var_k = (p_plus + p_minus - mu * mu) * invpsi[k] * invpsi[k]
                wk[k], wk_c[k] = _kadd(wk[k], wk_c[k], var_k)
                if k == 1:
                    d1_sum, d1_c = _kadd(d1_sum, d1_c, alpha * v * invpsi[1] / denom)
                    t1_sum, t1_c = _kadd(t1_sum, t1_c, theta * invpsi[1] / denom)
                if audit:
                    bi = inc_coef[k] * np.exp((k - alpha) * lnjt)
                    r = abs(zk) / bi
                    if r > viol_margin[2]:
                        viol_margin[2] = r
                    if r > 1.0:
                        viol_counts[2] += 1
                    if k == 1:
                        mid = 4.0 * (v + theta) / denom * invpsi[1] * invpsi[1]
                        scale = (v + theta) / phi
                    else:
                        mid = (
                            4.0
                            * ((k - 1 - alpha) * counts[k - 1] + (k - alpha) * nk)
                            / denom
                            * invpsi[k]
                            * invpsi[k]
                        )
                        scale = v / phi
                    if mid > 0.0:
                        r = var_k / mid
                        if r > viol_margin[3]:
                            viol_margin[3] = r
                        if r > 1.0:
                            viol_counts[3] += 1
                    bf = varf_coef[k] * np.exp((2.0 * k - alpha - 1.0) * lnt) * scale
                    r = var_k / bf
                    if r > viol_margin[4]:
                        viol_margin[4] = r
                    if r > 1.0:
                        viol_counts[4] += 1

        # ---- state update ----
        if new_part:
            counts[1] += 1
            v += 1
            _fw_add(tree, cap, 1, 1.0 - alpha)
        else:
            counts[sz] -= 1
            counts[sz + 1] += 1
            _fw_add(tree, cap, sz, -(sz - alpha))
            _fw_add(tree, cap, sz + 1, sz + 1 - alpha)
            if sz + 1 > max_size:
                max_size = sz + 1
        phi = phi_new
        if km >= t + 1:
            # time just reached k = t+1: its normalizer starts at 1
            invpsi[t + 1] = 1.0
            x_base[t + 1] = counts[t + 1]

        if ci < ncp and t + 1 == checkpoints[ci]:
            cp_v[ci] = v
            acc = 0
            for k in range(1, kmax_hist + 1):
                c = counts[k]
                cp_hist[ci, k - 1] = c
                acc += c
            cp_tail[ci] = v - acc
            cp_phi[ci] = phi
            cp_m[ci] = m_sum
            cp_w[ci] = w_sum
            cp_theta_v[ci] = tv_sum
            cp_drift1[ci] = d1_sum
            cp_theta1[ci] = t1_sum
            for k in range(1, km + 1):
                cp_invpsi[ci, k] = invpsi[k]
                cp_mk[ci, k] = mk[k]
                cp_wk[ci, k] = wk[k]
                cp_zsum[ci, k] = zs[k]
                cp_x[ci, k] = counts[k] * invpsi[k] if t + 1 >= k else 0.0
            ci += 1
    return max_size


@njit(cache=True, nogil=True)
def sim_small_batch(alpha, theta, m_bound, horizon, seeds, out_v, out_n1):
    """Many replicas to a small horizon; records V_t and N_t(1) for every t.

    Linear-scan sampling over sizes; identical stream and tie-breaking
    conventions as ``sim_kernel`` (verified bit-exact in tests).
    """
    n_rep = seeds.shape[0]
    counts = np.zeros(horizon + 2, dtype=np.int64)
    state = np.empty(4, dtype=np.uint64)
    for r in range(n_rep):
        _expand_seed(seeds[r], state)
        for i in range(horizon + 2):
            counts[i] = 0
        counts[1] = 1
        v = 1
        max_size = 1
        out_v[r, 0] = 1
        out_n1[r, 0] = 1
        for t in range(1, horizon):
            denom = t + theta
            wnew = alpha * v + theta
            if m_bound > 0 and v >= m_bound:
                wnew = 0.0
            target = _next_uniform(state) * denom
            if target < wnew:
                counts[1] += 1
                v += 1
            else:
                rem = target - wnew
                sz = 1
                while sz < max_size:
                    w = (sz - alpha) * counts[sz]
                    if rem < w:
                        break
                    rem -= w
                    sz += 1
                counts[sz] -= 1
                counts[sz + 1] += 1
                if sz + 1 > max_size:
                    max_size = sz + 1
            out_v[r, t] = v
            out_n1[r, t] = counts[1]
