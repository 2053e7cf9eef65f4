"""Compiled trade loop for the built-in policy kinds.

Performs the same binary64 operations in the same order as
``model.step`` so both engines yield bit-identical trajectories; the test
suite checks this.
"""
from __future__ import annotations

import numpy as np

from .model import ConstantB, ConstantP, PerAgentB, PolicySet, SaturatingPovertyP, UniformB
from .oracles import min_admissible_p_scalar

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

B_CONSTANT, B_PER_AGENT, B_UNIFORM = 0, 1, 2
P_CONSTANT, P_SATURATING = 0, 1

RAN_OUT, STOPPED, BAD_B, BAD_P = 0, 1, -1, -2


def encode_policies(ps: PolicySet):
    """Return (b_kind, b_params, p_kind, p_params), or None for custom policies."""
    b, p = ps.b_policy, ps.p_policy
    if type(b) is ConstantB:
        bk, bp = B_CONSTANT, [b.value]
    elif type(b) is PerAgentB:
        bk, bp = B_PER_AGENT, list(b.coefficients)
    elif type(b) is UniformB:
        bk, bp = B_UNIFORM, [b.low, b.high]
    else:
        return None
    if type(p) is ConstantP:
        pk, pp = P_CONSTANT, [p.value]
    elif type(p) is SaturatingPovertyP:
        pk, pp = P_SATURATING, [p.kappa, p.floor, p.delta]
    else:
        return None
    return bk, np.asarray(bp, dtype=np.float64), pk, np.asarray(pp, dtype=np.float64)


def _advance(x, ei, ej, cum, bkind, bpar, pkind, ppar, delta,
             pair_u, u_u, v_u, w_u, n, stop_gap, acc, counts):
    """Run up to ``n`` trades in place.

    acc[0] accumulates the squared stake, counts[0] admissibility
    violations.  Returns (trades_done, status).
    """
    m = ei.shape[0]
    for k in range(n):
        e = np.searchsorted(cum, pair_u[k], side="right")
        if e >= m:
            e = m - 1
        i = ei[e]
        j = ej[e]
        if x[i] <= x[j]:
            mu = i
            nu = j
        else:
            mu = j
            nu = i
        xm = x[mu]
        xn = x[nu]

        u = u_u[k]
        if bkind == B_CONSTANT:
            b = bpar[0]
        elif bkind == B_PER_AGENT:
            b = bpar[mu]
        else:
            b = bpar[0] + u * (bpar[1] - bpar[0])
        if not (delta <= b < 1.0):
            return k, BAD_B

        if pkind == P_CONSTANT:
            p = ppar[0]
        else:
            mp = _min_p(xm, xn, ppar[2])
            p = mp + (1.0 - ppar[0]) * (0.5 - mp)
            if not (p > ppar[1]):
                p = ppar[1]
        if not (0.0 < p < 1.0):
            return k, BAD_P

        if w_u[k] <= p:
            s = 1.0
        else:
            s = -1.0
        if not ((4.0 * p - 2.0) * (xn - xm) >= -delta * xm):
            counts[0] += 1
        stake = b * xm
        acc[0] += stake * stake
        transfer = s * b * xm
        x[mu] = xm - transfer
        x[nu] = xn + transfer

        lo = x[mu] if x[mu] < x[nu] else x[nu]
        if lo < stop_gap:
            gap = 0.0
            for q in range(m):
                a = x[ei[q]]
                c = x[ej[q]]
                low = a if a < c else c
                if low > gap:
                    gap = low
            if gap < stop_gap:
                return k + 1, STOPPED
    return n, RAN_OUT


if numba is not None:
    _min_p = numba.njit(cache=True)(min_admissible_p_scalar)
    advance = numba.njit(cache=True)(_advance)
else:  # pragma: no cover
    advance = None
