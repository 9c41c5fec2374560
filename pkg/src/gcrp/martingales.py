"""Martingale decompositions along a path, and tail-bound evaluators.

All of these are exact algebraic rewrites of the chain, so their residuals
measure floating-point accumulation, not statistics:

Part count (one per path):
    zeta_j = (dV_j - (alpha V_{j-1} + theta)/(j-1+theta)) / phi_j,
    M_n = sum_{j=2..n} zeta_j,  W_n = sum p_j (1-p_j) / phi_j^2,
    and the identity  V_n/phi_n = M_n + theta_n  with
    theta_n = 1 + sum_{j<n} theta/((j+theta) phi_{j+1}).

Size classes (one per tracked k):
    dN_j(k) in {-1, 0, +1} with conditional law
        P(+1) = (alpha V + theta)/(j-1+theta)            for k = 1,
        P(+1) = (k-1-alpha) N(k-1)/(j-1+theta)           for k > 1,
        P(-1) = (k-alpha) N(k)/(j-1+theta)       [(1-alpha) N(1) for k = 1],
    zeta_j(k) = (dN_j(k) - E[dN_j(k)|F]) / psi_j(k),
    M_n(k) = sum_{j=k+1..n} zeta_j(k), W_n(k) = sum of exact conditional
    variances / psi_j(k)^2, and the identities
        X_n(1) = M_n(1) + sum_{j<n} alpha V_j /((j+theta) psi_{j+1}(1))
                 + theta_n(1),
        X_n(k) = M_n(k) + X_k(k)
                 + (k-1-alpha)/(k-1+theta) * sum_{j=k..n-1} X_j(k-1).

W is the predictable quadratic variation: exact conditional second moments
from the known transition law, never squared realized increments.

Per-step audit bounds (checked with zero tolerance by the harness):

* part count:  |zeta_j| <= R  and
  p(1-p)/phi_j^2 <= 2 Gamma(1+t+a) a / Gamma(1+t)
                    * (j+theta)^(-a-1) (V_{j-1} + theta/a)/phi_{j-1}.
* size classes:
  |zeta_j(k)| <= 2 e^(1/12) Gamma(a+t)/Gamma(k+t) * (j+theta)^(k-a)
  (|dN - mu| <= 2 times the lower bound on psi; the factor 2 is required:
  at j=2, k=1 the increment reaches 2/psi_2(1) exactly),
  Var <= 4/psi^2 * [state weight]/(j-1+theta), and
  Var <= c_k (j-1+theta)^(2k-a-1) (V+theta resp. V)/phi_{j-1} with
  c_1 = 4 e^(1/6) Gamma(a+t)^2/(Gamma(1+t+a) Gamma(1+t)),
  c_k = 4 (2k-a) Gamma(1+t) Gamma(a+t)^2/(Gamma(1+t+a) Gamma(k+t)^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .engine import SimConfig, default_checkpoints
from .errors import CapExceeded, DomainError
from .model import (
    JoinSize,
    Move,
    ModelParams,
    NewPart,
    Regime,
    SizeClassState,
    TransitionLaw,
)
from .normalizers import require_polynomial
from .rng import derive_replica_seed

# double-precision accumulation over <= 1e7 steps with log-space normalizers
RESIDUAL_RTOL = 1e-9
RESIDUAL_ATOL = 1e-12

_KMAX_TRACKABLE = 12  # 1/psi_n(k) ~ n^(k-alpha); k <= 12 keeps doubles finite


def relative_residual(lhs: float, *rhs_terms: float) -> float:
    """|lhs - sum(rhs_terms)| relative to the largest magnitude involved.

    The identities cancel almost exactly whenever the left side is near 0
    (e.g. no part of size k at time n), so the meaningful scale for a
    floating-point residual is the size of the summands, not of the result.
    """
    rhs = math.fsum(rhs_terms)
    scale = max(abs(lhs), sum(abs(x) for x in rhs_terms), RESIDUAL_ATOL)
    return abs(lhs - rhs) / scale


# ---------------------------------------------------------------------------
# bound evaluators
# ---------------------------------------------------------------------------

def freedman_bound(lam: float, sigma_sq: float, r: float, paper_form: bool = False) -> float:
    """Tail bound exp(-lam^2 / (2 sigma^2 + 2 r lam / 3)), clamped to [0,1].

    ``paper_form`` evaluates the variant with 2*sigma (not squared) in the
    denominator; the standard squared form is the default and the harness
    reports both where relevant.
    """
    if lam < 0 or sigma_sq < 0 or r <= 0:
        raise DomainError("freedman_bound requires lam >= 0, sigma_sq >= 0, r > 0")
    if lam == 0:
        return 1.0
    denom = (2.0 * math.sqrt(sigma_sq) if paper_form else 2.0 * sigma_sq) + 2.0 * r * lam / 3.0
    return min(1.0, math.exp(-lam * lam / denom))


def aux_bound(lam: float, c1: float, tail_w: float) -> float:
    """Union bound: min(1, 2 exp(-lam/(2 c1 + 2/3)) + tail_w)."""
    if lam <= 0 or c1 <= 0 or not 0.0 <= tail_w <= 1.0:
        raise DomainError("aux_bound requires lam > 0, c1 > 0, tail_w in [0,1]")
    return min(1.0, 2.0 * math.exp(-lam / (2.0 * c1 + 2.0 / 3.0)) + tail_w)


# ---------------------------------------------------------------------------
# per-step audit constants (shared by the Python trackers and the kernel)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditBounds:
    recv_r: float            # uniform |zeta_j| bound for the part count
    recv_var_coef: float     # 2 Gamma(1+t+a) a / Gamma(1+t)
    inc_coef: np.ndarray     # [k]: 2 e^(1/12) Gamma(a+t)/Gamma(k+t)
    varf_coef: np.ndarray    # [k]: variance-bound coefficient, see module doc


def audit_bounds(params: ModelParams, k_max: int) -> AuditBounds:
    require_polynomial(params)
    a, t = params.alpha, params.theta
    ks = np.arange(k_max + 1, dtype=np.float64)
    inc = np.zeros(k_max + 1)
    varf = np.zeros(k_max + 1)
    inc[1:] = 2.0 * math.exp(1.0 / 12.0) * np.exp(gammaln(a + t) - gammaln(ks[1:] + t))
    if k_max >= 1:
        varf[1] = 4.0 * math.exp(1.0 / 6.0) * math.exp(
            2.0 * gammaln(a + t) - gammaln(1 + t + a) - gammaln(1 + t)
        )
    if k_max >= 2:
        kk = ks[2:]
        varf[2:] = (
            4.0
            * (2.0 * kk - a)
            * np.exp(
                gammaln(1 + t)
                + 2.0 * gammaln(a + t)
                - gammaln(1 + t + a)
                - 2.0 * gammaln(kk + t)
            )
        )
    recv_r = 2.0 * math.exp(gammaln(1 + t + a) - gammaln(1 + t)) * (1.0 + t) ** (-a)
    recv_var = 2.0 * math.exp(gammaln(1 + t + a) - gammaln(1 + t)) * a
    return AuditBounds(recv_r=recv_r, recv_var_coef=recv_var, inc_coef=inc, varf_coef=varf)


# ---------------------------------------------------------------------------
# pure-Python trackers (reference implementation, observer protocol)
# ---------------------------------------------------------------------------

@dataclass
class VMartingalePath:
    """Per-step part-count decomposition; index i holds values at time i+1."""

    ns: np.ndarray
    zeta: np.ndarray
    m: np.ndarray
    w: np.ndarray
    phi: np.ndarray
    theta_seq: np.ndarray
    v: np.ndarray
    max_cond_mean: float  # max over steps of |sum_outcomes P * zeta|

    def identity_residuals(self) -> np.ndarray:
        lhs = self.v / self.phi
        rhs = self.m + self.theta_seq
        scale = np.maximum(
            np.maximum(np.abs(lhs), np.abs(self.m) + np.abs(self.theta_seq)),
            RESIDUAL_ATOL,
        )
        return np.abs(lhs - rhs) / scale


class VTracker:
    """Step observer accumulating the part-count martingale."""

    def __init__(self, params: ModelParams):
        require_polynomial(params)
        self.params = params
        self._zeta = [0.0]
        self._m = [0.0]
        self._w = [0.0]
        self._phi = [1.0]
        self._theta = [1.0]
        self._v = [1]
        self._max_cm = 0.0

    def on_step(self, state: SizeClassState, law: TransitionLaw, move: Move) -> None:
        a, t = self.params.alpha, self.params.theta
        denom = state.n + t
        phi_new = self._phi[-1] * (1.0 + a / denom)
        p = law.new_part_prob
        dv = 1.0 if isinstance(move, NewPart) else 0.0
        zeta = (dv - p) / phi_new
        # conditional mean over the two outcomes, must vanish identically
        cm = (p * (1.0 - p) + (1.0 - p) * (0.0 - p)) / phi_new
        self._max_cm = max(self._max_cm, abs(cm))
        self._zeta.append(zeta)
        self._m.append(self._m[-1] + zeta)
        self._w.append(self._w[-1] + p * (1.0 - p) / (phi_new * phi_new))
        self._theta.append(self._theta[-1] + t / (denom * phi_new))
        self._phi.append(phi_new)
        self._v.append(state.num_parts + (1 if isinstance(move, NewPart) else 0))

    @property
    def path(self) -> VMartingalePath:
        n = len(self._m)
        return VMartingalePath(
            ns=np.arange(1, n + 1),
            zeta=np.array(self._zeta),
            m=np.array(self._m),
            w=np.array(self._w),
            phi=np.array(self._phi),
            theta_seq=np.array(self._theta),
            v=np.array(self._v, dtype=np.int64),
            max_cond_mean=self._max_cm,
        )


@dataclass
class KMartingalePath:
    """Size-class decomposition for one k; arrays indexed by time 1..n."""

    k: int
    ns: np.ndarray
    x: np.ndarray          # N_j(k)/psi_j(k), 0 for j < k
    m: np.ndarray
    w: np.ndarray
    inv_psi: np.ndarray    # 1/psi_j(k), nan for j < k
    zsum: np.ndarray       # sum_{i=k}^{j-1} X_i(k-1)   (k >= 2)
    drift: np.ndarray      # sum_{i<j} alpha V_i/((i+theta) psi_{i+1}(1))  (k = 1)
    theta1: np.ndarray     # theta_j(1)  (k = 1)
    x_base: float          # X_k(k)
    max_cond_mean: float

    def identity_residuals(self, alpha: float, theta: float) -> np.ndarray:
        out = np.zeros_like(self.x)
        for i in range(len(out)):
            if self.ns[i] < self.k:
                continue
            if self.k == 1:
                out[i] = relative_residual(
                    self.x[i], self.m[i], self.drift[i], self.theta1[i]
                )
            else:
                ck = (self.k - 1 - alpha) / (self.k - 1 + theta)
                out[i] = relative_residual(
                    self.x[i], self.m[i], self.x_base, ck * self.zsum[i]
                )
        return out


class KTracker:
    """Step observer accumulating size-class martingales for k <= k_max."""

    def __init__(self, params: ModelParams, k_max: int):
        require_polynomial(params)
        if k_max > _KMAX_TRACKABLE:
            raise CapExceeded(f"k_max={k_max} exceeds trackable cap {_KMAX_TRACKABLE}")
        self.params = params
        self.k_max = k_max
        km = k_max
        self._invpsi = np.full(km + 2, np.nan)
        self._invpsi[1] = 1.0
        self._m = {k: [0.0] for k in range(1, km + 1)}
        self._w = {k: [0.0] for k in range(1, km + 1)}
        self._x = {k: [1.0 if k == 1 else 0.0] for k in range(1, km + 1)}
        self._ip = {k: [1.0 if k == 1 else np.nan] for k in range(1, km + 1)}
        self._zsum = {k: [0.0] for k in range(1, km + 1)}
        self._drift = [0.0]
        self._theta1 = [1.0]
        self._x_base = {1: 1.0}
        self._max_cm = 0.0

    def on_step(self, state: SizeClassState, law: TransitionLaw, move: Move) -> None:
        a, t = self.params.alpha, self.params.theta
        tn = state.n          # time before the move
        j = tn + 1
        denom = tn + t
        km = self.k_max
        new_part = isinstance(move, NewPart)
        sz = 0 if new_part else move.k
        wnew = a * state.num_parts + t

        for k in range(1, km + 1):
            z = self._zsum[k][-1]
            if k >= 2 and tn >= k:
                z += state.count(k - 1) * self._invpsi[k - 1]
            self._zsum[k].append(z)

        for k in range(1, km + 1):
            if tn < k:
                self._m[k].append(self._m[k][-1])
                self._w[k].append(self._w[k][-1])
                if j == k:
                    self._invpsi[k] = 1.0
                    nk_post = state.count(k) + self._dn(k, new_part, sz)
                    self._x_base[k] = float(nk_post)
                    self._x[k].append(float(nk_post))
                    self._ip[k].append(1.0)
                else:
                    self._x[k].append(0.0)
                    self._ip[k].append(np.nan)
                continue
            self._invpsi[k] *= (tn + t) / (tn - k + a + t)
            nk = state.count(k)
            if k == 1:
                p_plus = wnew / denom
                p_minus = (1.0 - a) * nk / denom
            else:
                p_plus = (k - 1 - a) * state.count(k - 1) / denom
                p_minus = (k - a) * nk / denom
            mu = p_plus - p_minus
            dn = self._dn(k, new_part, sz)
            zk = (dn - mu) * self._invpsi[k]
            cm = (p_plus * (1.0 - mu) + p_minus * (-1.0 - mu)
                  + (1.0 - p_plus - p_minus) * (-mu)) * self._invpsi[k]
            self._max_cm = max(self._max_cm, abs(cm) / max(1.0, abs(self._invpsi[k])))
            self._m[k].append(self._m[k][-1] + zk)
            self._w[k].append(
                self._w[k][-1]
                + (p_plus + p_minus - mu * mu) * self._invpsi[k] ** 2
            )
            self._x[k].append((nk + dn) * self._invpsi[k])
            self._ip[k].append(self._invpsi[k])
        self._drift.append(
            self._drift[-1]
            + (a * state.num_parts * self._invpsi[1] / denom if km >= 1 else 0.0)
        )
        self._theta1.append(self._theta1[-1] + t * self._invpsi[1] / denom)

    @staticmethod
    def _dn(k: int, new_part: bool, sz: int) -> int:
        if new_part:
            return 1 if k == 1 else 0
        if sz == k:
            return -1
        if sz + 1 == k:
            return 1
        return 0

    def path(self, k: int) -> KMartingalePath:
        n = len(self._m[k])
        return KMartingalePath(
            k=k,
            ns=np.arange(1, n + 1),
            x=np.array(self._x[k]),
            m=np.array(self._m[k]),
            w=np.array(self._w[k]),
            inv_psi=np.array(self._ip[k]),
            zsum=np.array(self._zsum[k]),
            drift=np.array(self._drift),
            theta1=np.array(self._theta1),
            x_base=self._x_base.get(k, 0.0),
            max_cond_mean=self._max_cm,
        )


# ---------------------------------------------------------------------------
# kernel-backed tracked runs (fast path for long horizons)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrackedRun:
    """Checkpointed martingale state of one compiled tracked replica."""

    params: ModelParams
    config: SimConfig
    k_max_m: int
    checkpoints: np.ndarray
    v: np.ndarray
    hist: np.ndarray       # [ncp, kmax_hist]
    tail: np.ndarray
    phi: np.ndarray
    m: np.ndarray
    w: np.ndarray
    theta_v: np.ndarray
    x: np.ndarray          # [ncp, kmax_m+1]
    mk: np.ndarray
    wk: np.ndarray
    zsum: np.ndarray
    inv_psi: np.ndarray
    drift1: np.ndarray
    theta1: np.ndarray
    x_base: np.ndarray
    viol_counts: np.ndarray   # [5], see AuditBounds ordering in _kernels
    viol_margin: np.ndarray

    def residual_v(self) -> np.ndarray:
        lhs = self.v / self.phi
        rhs = self.m + self.theta_v
        scale = np.maximum(
            np.maximum(np.abs(lhs), np.abs(self.m) + np.abs(self.theta_v)),
            RESIDUAL_ATOL,
        )
        return np.abs(lhs - rhs) / scale

    def residual_x(self, k: int) -> np.ndarray:
        """Identity residuals at checkpoints >= k (others reported as 0)."""
        a, t = self.params.alpha, self.params.theta
        out = np.zeros(len(self.checkpoints))
        for i, n in enumerate(self.checkpoints):
            if n < k:
                continue
            if k == 1:
                out[i] = relative_residual(
                    float(self.x[i, 1]), float(self.mk[i, 1]),
                    float(self.drift1[i]), float(self.theta1[i]),
                )
            else:
                ck = (k - 1 - a) / (k - 1 + t)
                out[i] = relative_residual(
                    float(self.x[i, k]), float(self.mk[i, k]),
                    float(self.x_base[k]), ck * float(self.zsum[i, k]),
                )
        return out

    def max_residual(self) -> float:
        worst = float(np.max(self.residual_v()))
        for k in range(1, self.k_max_m + 1):
            worst = max(worst, float(np.max(self.residual_x(k))))
        return worst

    def jsonl_records(self) -> list[dict]:
        """One record per checkpoint: (n, M_n, W_n, residuals) plus the
        per-k martingale state; serializable as a JSONL stream."""
        res_v = self.residual_v()
        res_x = {k: self.residual_x(k) for k in range(1, self.k_max_m + 1)}
        out = []
        for i, n in enumerate(self.checkpoints):
            out.append({
                "n": int(n),
                "num_parts": int(self.v[i]),
                "M": float(self.m[i]),
                "W": float(self.w[i]),
                "residual": float(res_v[i]),
                "size_classes": {
                    str(k): {
                        "M": float(self.mk[i, k]),
                        "W": float(self.wk[i, k]),
                        "X": float(self.x[i, k]),
                        "residual": float(res_x[k][i]),
                    }
                    for k in range(1, self.k_max_m + 1)
                },
            })
        return out


def run_tracked(
    params: ModelParams,
    horizon: int,
    seed: int,
    replica_id: int = 0,
    k_max_m: int = 1,
    checkpoints=None,
    audit: bool = True,
) -> TrackedRun:
    """Simulate one replica with full martingale tracking (compiled path)."""
    require_polynomial(params)
    if k_max_m > _KMAX_TRACKABLE:
        raise CapExceeded(f"k_max_m={k_max_m} exceeds trackable cap {_KMAX_TRACKABLE}")
    kmax_hist = max(k_max_m, 1)
    cfg = SimConfig.make(
        params, horizon, seed, replica_id,
        checkpoints=checkpoints if checkpoints is not None else default_checkpoints(horizon),
        k_max_tracked=kmax_hist,
    )
    cps = np.asarray(cfg.checkpoints, dtype=np.int64)
    ncp = len(cps)
    bounds = audit_bounds(params, k_max_m)

    counts = np.zeros(horizon + 2, dtype=np.int64)
    tree = np.zeros(horizon + 2, dtype=np.float64)
    cp_v = np.zeros(ncp, dtype=np.int64)
    cp_hist = np.zeros((ncp, kmax_hist), dtype=np.int64)
    cp_tail = np.zeros(ncp, dtype=np.int64)
    cp_phi = np.zeros(ncp)
    cp_m = np.zeros(ncp)
    cp_w = np.zeros(ncp)
    cp_tv = np.zeros(ncp)
    cp_x = np.zeros((ncp, k_max_m + 1))
    cp_mk = np.zeros((ncp, k_max_m + 1))
    cp_wk = np.zeros((ncp, k_max_m + 1))
    cp_zs = np.zeros((ncp, k_max_m + 1))
    cp_ip = np.zeros((ncp, k_max_m + 1))
    cp_d1 = np.zeros(ncp)
    cp_t1 = np.zeros(ncp)
    x_base = np.zeros(k_max_m + 1)
    viol_counts = np.zeros(5, dtype=np.int64)
    viol_margin = np.zeros(5)

    _kernels.sim_kernel_tracked(
        params.alpha, params.theta, horizon,
        np.uint64(derive_replica_seed(seed, replica_id)),
        cps, kmax_hist, k_max_m, audit,
        bounds.inc_coef, bounds.varf_coef, bounds.recv_r, bounds.recv_var_coef,
        counts, tree,
        cp_v, cp_hist, cp_tail,
        cp_phi, cp_m, cp_w, cp_tv,
        cp_x, cp_mk, cp_wk, cp_zs, cp_ip,
        cp_d1, cp_t1, x_base,
        viol_counts, viol_margin,
    )
    return TrackedRun(
        params=params, config=cfg, k_max_m=k_max_m, checkpoints=cps,
        v=cp_v, hist=cp_hist, tail=cp_tail,
        phi=cp_phi, m=cp_m, w=cp_w, theta_v=cp_tv,
        x=cp_x, mk=cp_mk, wk=cp_wk, zsum=cp_zs, inv_psi=cp_ip,
        drift1=cp_d1, theta1=cp_t1, x_base=x_base,
        viol_counts=viol_counts, viol_margin=viol_margin,
    )
