"""Compiled inner loops for the samplers.

Both sweeps mutate caches in place and consume pre-drawn random arrays,
so the JIT-compiled path and the plain-Python fallback (set
NUMBA_DISABLE_JIT=1) walk bit-identical trajectories.

Kernel values whose exponent argument d^2/(2 sigma^2) exceeds 60 are
floored to exactly 0 (true value < 9e-27); every cache refresh in the
engine applies the same rule, keeping incremental and full recomputation
consistent.
"""

from __future__ import annotations

import math

import numba as nb

KERNEL_LOG_CUTOFF = 60.0


@nb.njit(cache=True)
def w_sweep_marginal(order, u, K, Ksum, w, Ssum, resid_pos, pos,
                     T_lambda0, logit_phi):
    """One random-order Gibbs sweep over unmarked membership flags.

    order/u: sweep order over unmarked candidate indices and their
    uniforms.  Ssum (per-trap kernel sum over active unmarked
    candidates) and w are updated in place.  Returns the flip count.

    The log-odds of w_i = 1: logit(phi) - T*lambda0*Ksum_i plus, for
    each positive-count trap, n_r * log1p(K_ir / S_r^(-i)) where
    S_r^(-i) excludes candidate i.  A candidate that is the sole
    intensity source at a positive trap is forced on.
    """
    R = K.shape[1]
    flips = 0
    for j in range(order.shape[0]):
        i = order[j]
        wi = w[i]
        lo = logit_phi - T_lambda0 * Ksum[i]
        for a in range(pos.shape[0]):
            r = pos[a]
            kir = K[i, r]
            if kir == 0.0:
                continue
            if wi == 1:
                s_minus = Ssum[r] - kir
            else:
                s_minus = Ssum[r]
            if s_minus <= 0.0:
                lo = math.inf
                break
            lo = lo + resid_pos[a] * math.log1p(kir / s_minus)
        if lo > 35.0:
            p1 = 1.0
        elif lo < -35.0:
            p1 = 0.0
        else:
            e = math.exp(lo)
            p1 = e / (1.0 + e)
        nw = 1 if u[j] < p1 else 0
        if nw != wi:
            flips += 1
            if nw == 1:
                for r in range(R):
                    Ssum[r] += K[i, r]
            else:
                for r in range(R):
                    Ssum[r] -= K[i, r]
            w[i] = nw
    return flips


@nb.njit(cache=True)
def s_sweep(sx, sy, cls, tx, ty, D2, K, Ksum, Ssum, zdot, resid_pos, pos,
            T_lambda0, inv2s2, xmin, xmax, ymin, ymax, steps, logu,
            use_lik, d2new, knew):
    """One Metropolis sweep over all candidate activity centers.

    cls encodes the likelihood role per candidate: 0 = inactive
    (likelihood-free, accepted anywhere inside the space), 1 = active
    contributing to the aggregated unmarked intensity (marginal
    algorithm), 2 = active with its own count row in zdot (marked
    individuals, and every active candidate under the conditional
    algorithm).  Caches D2/K/Ksum/Ssum updated in place on acceptance.

    Returns (accepted_active, proposed_active, accepted_inactive,
    proposed_inactive).
    """
    M, R = K.shape
    acc_act = 0
    prop_act = 0
    acc_in = 0
    prop_in = 0
    for i in range(M):
        active = cls[i] != 0
        if active:
            prop_act += 1
        else:
            prop_in += 1
        nx = sx[i] + steps[i, 0]
        ny = sy[i] + steps[i, 1]
        if nx < xmin or nx > xmax or ny < ymin or ny > ymax:
            continue
        newsum = 0.0
        for r in range(R):
            dx = nx - tx[r]
            dy = ny - ty[r]
            d2 = dx * dx + dy * dy
            e = d2 * inv2s2
            if e <= KERNEL_LOG_CUTOFF:
                k = math.exp(-e)
            else:
                k = 0.0
            d2new[r] = d2
            knew[r] = k
            newsum += k
        if not use_lik or cls[i] == 0:
            accept = True
        elif cls[i] == 1:
            delta = -T_lambda0 * (newsum - Ksum[i])
            ok = True
            for a in range(pos.shape[0]):
                r = pos[a]
                ko = K[i, r]
                kn = knew[r]
                if ko == kn:
                    continue
                snew = Ssum[r] - ko + kn
                if snew <= 0.0:
                    ok = False
                    break
                delta += resid_pos[a] * (math.log(snew) - math.log(Ssum[r]))
            accept = ok and (delta >= 0.0 or logu[i] < delta)
        else:
            delta = -T_lambda0 * (newsum - Ksum[i])
            ok = True
            for r in range(R):
                zd = zdot[i, r]
                if zd > 0.0:
                    kn = knew[r]
                    if kn <= 0.0:
                        ok = False
                        break
                    ko = K[i, r]
                    if ko < 1e-300:
                        ko = 1e-300
                    delta += zd * (math.log(kn) - math.log(ko))
            accept = ok and (delta >= 0.0 or logu[i] < delta)
        if accept:
            if active:
                acc_act += 1
            else:
                acc_in += 1
            if cls[i] == 1:
                for r in range(R):
                    Ssum[r] += knew[r] - K[i, r]
            sx[i] = nx
            sy[i] = ny
            Ksum[i] = newsum
            for r in range(R):
                K[i, r] = knew[r]
                D2[i, r] = d2new[r]
    return acc_act, prop_act, acc_in, prop_in
