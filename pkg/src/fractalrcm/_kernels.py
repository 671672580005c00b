"""Hot loop for walk simulation, shared by two backends.

`_walk_core` is written once in scalar Python (math.* only) and either
compiled with numba or run as-is; the backend comes from the
FRACTALRCM_KERNEL environment variable (numba is the default). Both
backends consume the same pre-drawn uniform stream transaction by
transaction, so paths and jump counts agree exactly and clocks agree to
rounding, whichever backend or thread schedule runs them.

The kernel returns to the wrapper whenever it needs service: REFILL when
the uniform buffer runs low (the wrapper appends fresh draws after the
unconsumed tail, keeping results independent of chunk size) and GROW
when the skeleton arrays are full. All walk state travels through the
call, so re-entry resumes mid-walk.

Two-vertex traps (mutual strongest neighbors with return probability
r = p_u p_v >= 0.9) dominate step counts under heavy-tailed weights.
When only a hit set can stop the walk, the kernel collapses the whole
excursion in one transaction using the exact law: the number of full
return cycles M is geometric(1 - r) via inversion, the exit side is
independent of M with P(exit from u) = (1 - p_u)/(1 - r), and total
holding is Gamma(visits) per vertex (explicit exponential sums when
small, a clamped normal approximation when large). 1 - r is assembled
from the exterior weight sums, never as 1 - p_u p_v, so pairs whose
return probability rounds to 1.0 still collapse with the right law
instead of falling back to a step-by-step excursion.
"""

import math
import os

import numpy as np

HIT = 0
REFILL = 1
GROW = 2

RESERVE = 600  # >= worst-case uniforms in one transaction (513)
CHUNK = 8192
GAMMA_EXACT_MAX = 256
COLLAPSE_MIN_RETURN = 0.9


def _walk_core(indptr, indices, weights, nu, hold, target, partner,
               allow_collapse, horizon, budget, u, x, t, jumps, pos,
               skel_t, skel_v, nrec, stride):
    """Advance the walk until a stop or a service request.

    Returns (status, x, t, jumps, pos, nrec). hold[x] is the mean
    holding time per visit; horizon < 0 or budget < 0 disables that
    stop. stride > 0 records (t, x) every stride-th jump.
    """
    nmax = u.shape[0]
    while True:
        if target[x]:
            return HIT, x, t, jumps, pos, nrec
        if budget >= 0 and jumps >= budget:
            return HIT, x, t, jumps, pos, nrec
        if nmax - pos < RESERVE:
            return REFILL, x, t, jumps, pos, nrec
        if stride > 0 and nrec >= skel_t.shape[0]:
            return GROW, x, t, jumps, pos, nrec
        p = partner[x]
        if allow_collapse and p >= 0 and partner[p] == x and not target[p]:
            ext_x = 0.0
            wxp = 0.0
            for k in range(indptr[x], indptr[x + 1]):
                if indices[k] == p:
                    wxp = weights[k]
                else:
                    ext_x += weights[k]
            ext_p = 0.0
            for k in range(indptr[p], indptr[p + 1]):
                if indices[k] != x:
                    ext_p += weights[k]
            qu = ext_x / nu[x]
            qv = ext_p / nu[p]
            onemr = qu + (wxp / nu[x]) * qv
            if onemr <= 0.0:
                onemr = 1e-300
            logr = math.log1p(-onemr)
            # full return cycles before exiting the pair; the cap keeps
            # 2m + 2 inside int64 for ratios past any realizable tail
            mf = math.log1p(-u[pos]) / logr
            if mf > 4.6e18:
                mf = 4.6e18
            m = int(mf)
            pos += 1
            exit_from_u = u[pos] < qu / onemr
            pos += 1
            for side in range(2):
                if side == 0:
                    nvis = m + 1
                    node = x
                else:
                    nvis = m if exit_from_u else m + 1
                    node = p
                if nvis <= 0 or hold[node] <= 0.0:
                    continue
                if nvis < GAMMA_EXACT_MAX:
                    s = 0.0
                    for _ in range(nvis):
                        s -= math.log1p(-u[pos])
                        pos += 1
                    t += hold[node] * s
                else:
                    z = math.sqrt(-2.0 * math.log1p(-u[pos])) * math.cos(
                        2.0 * math.pi * u[pos + 1])
                    pos += 2
                    g = nvis + math.sqrt(float(nvis)) * z
                    if g < 0.0:
                        g = 0.0
                    t += hold[node] * g
            if exit_from_u:
                w = x
                other = p
                extw = ext_x
                jumps += 2 * m + 1
            else:
                w = p
                other = x
                extw = ext_p
                jumps += 2 * m + 2
            ujump = u[pos] * extw
            pos += 1
            acc = 0.0
            nxt = -1
            for k in range(indptr[w], indptr[w + 1]):
                y = indices[k]
                if y == other:
                    continue
                acc += weights[k]
                if ujump <= acc:
                    nxt = y
                    break
            if nxt < 0:
                # float accumulation fell short; take the last valid one
                for k in range(indptr[w + 1] - 1, indptr[w] - 1, -1):
                    if indices[k] != other:
                        nxt = indices[k]
                        break
            x = nxt
        else:
            if hold[x] > 0.0:
                dt = hold[x] * -math.log1p(-u[pos])
                pos += 1
                if horizon >= 0.0 and t + dt >= horizon:
                    t = horizon
                    return HIT, x, t, jumps, pos, nrec
                t += dt
            elif horizon >= 0.0 and t >= horizon:
                t = horizon
                return HIT, x, t, jumps, pos, nrec
            ujump = u[pos] * nu[x]
            pos += 1
            acc = 0.0
            nxt = -1
            for k in range(indptr[x], indptr[x + 1]):
                acc += weights[k]
                if ujump <= acc:
                    nxt = indices[k]
                    break
            if nxt < 0:
                nxt = indices[indptr[x + 1] - 1]
            x = nxt
            jumps += 1
            if stride > 0 and jumps % stride == 0:
                skel_t[nrec] = t
                skel_v[nrec] = x
                nrec += 1


_CORES = {}


def default_backend() -> str:
    name = os.environ.get("FRACTALRCM_KERNEL", "numba")
    if name not in ("numba", "python"):
        raise ValueError(
            f"FRACTALRCM_KERNEL must be 'numba' or 'python', not {name!r}")
    return name


def get_core(backend=None):
    name = default_backend() if backend is None else backend
    if name not in _CORES:
        if name == "python":
            _CORES[name] = _walk_core
        elif name == "numba":
            import numba

            _CORES[name] = numba.njit(cache=True, nogil=True)(_walk_core)
        else:
            raise ValueError(f"unknown kernel backend {name!r}")
    return _CORES[name]


def to_csr(n: int, edges, weights):
    """Symmetric CSR adjacency; parallel edges coalesce by weight sum."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    w = np.asarray(weights, dtype=float)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    ww = np.concatenate([w, w])
    order = np.lexsort((dst, src))
    src, dst, ww = src[order], dst[order], ww[order]
    if len(src):
        fresh = np.empty(len(src), dtype=bool)
        fresh[0] = True
        fresh[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        if not fresh.all():
            ww = np.bincount(np.cumsum(fresh) - 1, weights=ww)
            src, dst = src[fresh], dst[fresh]
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(np.bincount(src, minlength=n))
    return indptr, dst, np.asarray(ww, dtype=float)


def trap_tables(indptr, indices, weights, nu):
    """partner[x] = the mutual strongest neighbor when the pair's return
    probability is at least COLLAPSE_MIN_RETURN, else -1; ptrap[x] = the
    strongest-neighbor jump probability."""
    n = len(indptr) - 1
    deg = np.diff(indptr)
    strongest = np.full(n, -1, dtype=np.int64)
    ptrap = np.zeros(n)
    nonempty = np.where(deg > 0)[0]
    if len(nonempty):
        starts = indptr[:-1][nonempty]
        rowmax = np.maximum.reduceat(weights, starts)
        # first position attaining the row max
        cand = np.where(weights == np.repeat(rowmax, deg[nonempty]),
                        np.arange(len(weights)), len(weights))
        firstk = np.minimum.reduceat(cand, starts)
        strongest[nonempty] = indices[firstk]
        ptrap[nonempty] = weights[firstk] / nu[nonempty]
    safe = np.where(strongest >= 0, strongest, 0)
    mutual = (strongest >= 0) & (strongest[safe] == np.arange(n))
    r = ptrap * ptrap[safe]
    keep = mutual & (r >= COLLAPSE_MIN_RETURN)
    return np.where(keep, strongest, -1), ptrap


def run_walk(indptr, indices, weights, nu, hold, gen, start,
             target_mask=None, horizon=None, budget=None, stride=0,
             collapse=True, backend=None, chunk=CHUNK):
    """Drive `_walk_core` to completion; returns (t, jumps, x, skeleton).

    skeleton is (times, vertices) when stride > 0, else None. The
    uniform stream is drawn from `gen` in chunks with the unconsumed
    tail preserved across refills.
    """
    core = get_core(backend)
    n = len(nu)
    tmask = np.zeros(n, dtype=np.bool_) if target_mask is None else target_mask
    hval = -1.0 if horizon is None else float(horizon)
    bval = -1 if budget is None else int(budget)
    allow = bool(collapse and target_mask is not None and hval < 0.0
                 and bval < 0 and stride == 0)
    if allow:
        partner = trap_tables(indptr, indices, weights, nu)[0]
        allow = bool(np.any(partner >= 0))
    else:
        partner = np.full(n, -1, dtype=np.int64)
    if stride > 0:
        skel_t = np.empty(64)
        skel_v = np.empty(64, dtype=np.int64)
        skel_t[0] = 0.0
        skel_v[0] = start
        nrec = 1
    else:
        skel_t = np.empty(0)
        skel_v = np.empty(0, dtype=np.int64)
        nrec = 0
    chunk = max(int(chunk), RESERVE)
    u = gen.random(chunk)
    x, t, jumps, pos = int(start), 0.0, 0, 0
    while True:
        status, x, t, jumps, pos, nrec = core(
            indptr, indices, weights, nu, hold, tmask, partner,
            allow, hval, bval, u, x, t, jumps, pos, skel_t, skel_v, nrec,
            stride)
        if status == HIT:
            break
        if status == REFILL:
            u = np.concatenate([u[pos:], gen.random(chunk)])
            pos = 0
        else:  # GROW
            skel_t = np.concatenate([skel_t, np.empty(len(skel_t))])
            skel_v = np.concatenate([skel_v, np.empty(len(skel_v), dtype=np.int64)])
    if stride > 0:
        if skel_t[nrec - 1] != t or skel_v[nrec - 1] != x:
            if nrec == len(skel_t):
                skel_t = np.concatenate([skel_t, np.empty(1)])
                skel_v = np.concatenate([skel_v, np.empty(1, dtype=np.int64)])
            skel_t[nrec] = t
            skel_v[nrec] = x
            nrec += 1
        skeleton = (skel_t[:nrec].copy(), skel_v[:nrec].copy())
    else:
        skeleton = None
    return t, jumps, x, skeleton
