"""Exhaustive size-class enumeration for small n: the exactness oracle.

A dynamic program over canonical size multisets (sorted tuples of part
sizes).  There are p(n) reachable shapes at time n — 77 at n = 12 — so exact
laws are cheap up to the cap.  Per-shape probabilities are accumulated with
``math.fsum`` over the full contribution lists, keeping the law exact to a
few ulps; the laws validate both the simulator (total-variation and
chi-square comparisons) and the martingale identities by full summation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import CapExceeded, DomainError
from .model import ModelParams, Regime
from .normalizers import log_phi, theta_seq_V

DEFAULT_CAP = 12


def _shape_stats(shape: tuple[int, ...]) -> tuple[int, int]:
    return sum(shape), len(shape)


@dataclass(frozen=True)
class ExactLaw:
    """Exact distribution over size-class shapes at one time n."""

    n: int
    probs: dict[tuple[int, ...], float]  # canonical sorted-descending shapes

    def total(self) -> float:
        return math.fsum(self.probs.values())

    def marginal_v(self) -> dict[int, float]:
        out: dict[int, list[float]] = {}
        for shape, p in self.probs.items():
            out.setdefault(len(shape), []).append(p)
        return {v: math.fsum(ps) for v, ps in sorted(out.items())}

    def marginal_nk(self, k: int) -> dict[int, float]:
        """Distribution of the number of parts of size exactly k."""
        out: dict[int, list[float]] = {}
        for shape, p in self.probs.items():
            c = sum(1 for s in shape if s == k)
            out.setdefault(c, []).append(p)
        return {c: math.fsum(ps) for c, ps in sorted(out.items())}

    def mean_v(self) -> float:
        return math.fsum(len(s) * p for s, p in self.probs.items())

    def mean_nk(self, k: int) -> float:
        return math.fsum(
            sum(1 for s in shape if s == k) * p for shape, p in self.probs.items()
        )


def enumerate_laws(
    params: ModelParams, n_max: int, cap: int = DEFAULT_CAP
) -> dict[int, ExactLaw]:
    """Exact laws for every n <= n_max by pushing shapes through the chain."""
    if n_max > cap:
        raise CapExceeded(
            f"n_max={n_max} exceeds cap {cap}; raise `cap` explicitly if you "
            f"accept p(n) shapes of bookkeeping"
        )
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    a, t = params.alpha, params.theta
    laws: dict[int, ExactLaw] = {1: ExactLaw(1, {(1,): 1.0})}
    cur: dict[tuple[int, ...], float] = {(1,): 1.0}
    for n in range(1, n_max):
        denom = n + t
        contrib: dict[tuple[int, ...], list[float]] = {}
        for shape, p in cur.items():
            v = len(shape)
            w_new = a * v + t
            if params.regime is Regime.BOUNDED_PARTS and v >= params.m:
                w_new = 0.0
            if w_new > 0.0:
                nxt = tuple(sorted(shape + (1,), reverse=True))
                contrib.setdefault(nxt, []).append(p * w_new / denom)
            seen: set[int] = set()
            for i, size in enumerate(shape):
                if size in seen:
                    continue
                seen.add(size)
                c = shape.count(size)
                w = (size - a) * c
                lst = list(shape)
                lst[i] = size + 1
                nxt = tuple(sorted(lst, reverse=True))
                contrib.setdefault(nxt, []).append(p * w / denom)
        cur = {shape: math.fsum(ps) for shape, ps in contrib.items()}
        laws[n + 1] = ExactLaw(n + 1, dict(cur))
    return laws


def mean_martingale(law: ExactLaw, params: ModelParams) -> float:
    """E[M_n] by exact summation: E[V_n/phi_n] - theta_n (identically 0)."""
    phi_n = math.exp(log_phi(law.n, params))
    return law.mean_v() / phi_n - theta_seq_V(law.n, params)


# ---------------------------------------------------------------------------
# empirical-vs-exact comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleComparison:
    n: int
    n_samples: int
    tv_v: float
    tv_n1: float
    chi_square_p_v: float
    chi_square_p_n1: float


def tv_distance(exact: dict[int, float], counts: dict[int, int], n_samples: int) -> float:
    support = set(exact) | set(counts)
    return 0.5 * math.fsum(
        abs(exact.get(s, 0.0) - counts.get(s, 0) / n_samples) for s in support
    )


def _chi_square_p(exact: dict[int, float], counts: dict[int, int], n_samples: int) -> float:
    from scipy.stats import chi2

    # merge cells until every expected count is >= 5 (standard validity rule)
    items = sorted(set(exact) | set(counts))
    exp_obs: list[tuple[float, float]] = []
    acc_e = acc_o = 0.0
    for s in items:
        acc_e += exact.get(s, 0.0) * n_samples
        acc_o += counts.get(s, 0)
        if acc_e >= 5.0:
            exp_obs.append((acc_e, acc_o))
            acc_e = acc_o = 0.0
    if acc_e > 0 or acc_o > 0:
        if exp_obs:
            e, o = exp_obs[-1]
            exp_obs[-1] = (e + acc_e, o + acc_o)
        else:
            exp_obs.append((max(acc_e, 1e-300), acc_o))
    if len(exp_obs) < 2:
        return 1.0
    stat = sum((o - e) ** 2 / e for e, o in exp_obs)
    return float(chi2.sf(stat, df=len(exp_obs) - 1))


def compare_to_mc(
    law: ExactLaw,
    v_counts: dict[int, int],
    n1_counts: dict[int, int],
    n_samples: int,
) -> OracleComparison:
    """TV distance and chi-square p-values for V_n and N_n(1) marginals."""
    ev = law.marginal_v()
    e1 = law.marginal_nk(1)
    return OracleComparison(
        n=law.n,
        n_samples=n_samples,
        tv_v=tv_distance(ev, v_counts, n_samples),
        tv_n1=tv_distance(e1, n1_counts, n_samples),
        chi_square_p_v=_chi_square_p(ev, v_counts, n_samples),
        chi_square_p_n1=_chi_square_p(e1, n1_counts, n_samples),
    )
