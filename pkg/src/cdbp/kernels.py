"""Numeric inner loops shared by the solvers.

All resource amounts are int64 fixed-point units and all times are int64
seconds; an unbounded reservation ends at :data:`END`.  Reservation windows
are half-open, so usage of a server is a step function that only rises at
reservation starts.  Feasibility is therefore checked at the start of the new
window plus every member start falling strictly inside it.

Every function here is decorated with :func:`cdbp._jit.njit` and must stay
valid plain Python (the fallback path), so only numpy scalar/array indexing
and simple loops are used.
"""

import numpy as np

from ._jit import njit

END = np.int64(2**62)

# bb_search control-array slots
CTL_DEPTH = 0
CTL_OPENED = 1
CTL_BEST = 2
CTL_NEED_GEN = 3
CTL_IMPROVED = 4
CTL_NODES = 5
CTL_SIZE = 8

BB_RUNNING = 0
BB_EXHAUSTED = 1
BB_HIT_BOUND = 2


# --------------------------------------------------------------------------
# feasibility
# --------------------------------------------------------------------------


@njit
def fits_window(r_start, r_end, r_dem, k, cap, a, e, d):
    """Can a reservation ``[a, e)`` demanding ``d`` join the first ``k`` entries?"""
    l = cap.shape[0]
    for q in range(l):
        if d[q] > cap[q]:
            return False
    for p in range(-1, k):
        if p < 0:
            t = a
        else:
            t = r_start[p]
            if t <= a or t >= e:
                continue
        for q in range(l):
            use = d[q]
            for i in range(k):
                if r_start[i] <= t and t < r_end[i]:
                    use += r_dem[i, q]
            if use > cap[q]:
                return False
    return True


@njit
def fits_members(row, k, starts, ends, dem, cap, j, peak):
    """Event-point check of VM ``j`` against the VMs ``row[:k]`` on one server.

    ``peak`` receives the per-dimension maximum usage (members plus ``j``)
    seen over the checked event points; it is only meaningful on success.
    """
    l = cap.shape[0]
    a = starts[j]
    e = ends[j]
    for q in range(l):
        if dem[j, q] > cap[q]:
            return False
        peak[q] = dem[j, q]
    for p in range(-1, k):
        if p < 0:
            t = a
        else:
            t = starts[row[p]]
            if t <= a or t >= e:
                continue
        for q in range(l):
            use = dem[j, q]
            for i in range(k):
                u = row[i]
                if starts[u] <= t and t < ends[u]:
                    use += dem[u, q]
            if use > cap[q]:
                return False
            if use > peak[q]:
                peak[q] = use
    return True


@njit
def first_fit(order, scan, caps, starts, ends, dem, members, nmem, assign):
    """Place VMs in ``order`` on the first server of ``scan`` that fits.

    ``members``/``nmem`` hold the per-server VM lists and may be pre-loaded.
    Returns -1 on success or the index of the first VM that fits nowhere.
    """
    peak = np.zeros(caps.shape[1], dtype=np.int64)
    for idx in range(order.shape[0]):
        j = order[idx]
        placed = -1
        for si in range(scan.shape[0]):
            s = scan[si]
            if fits_members(members[s], nmem[s], starts, ends, dem, caps[s], j, peak):
                placed = s
                break
        if placed < 0:
            return j
        members[placed, nmem[placed]] = j
        nmem[placed] += 1
        assign[j] = placed
    return -1


# --------------------------------------------------------------------------
# branch and bound
# --------------------------------------------------------------------------


@njit
def _bb_bound(d1, static, opened, srv_type, load, caps, suffix, sufmin,
              peak, capsum, maxcap, lb_root):
    # lower bound on the final server count once items [0, d1) are placed
    l = caps.shape[1]
    extra = 0
    n = suffix.shape[0] - 1
    if d1 < n:
        if static:
            for q in range(l):
                usable = 0
                for s in range(opened):
                    t = srv_type[s]
                    dead = False
                    for r in range(l):
                        if caps[t, r] - load[s, r] < sufmin[d1, r]:
                            dead = True
                            break
                    if not dead:
                        usable += caps[t, q] - load[s, q]
                excess = suffix[d1, q] - usable
                if excess > 0:
                    need = (excess + maxcap[q] - 1) // maxcap[q]
                    if need > extra:
                        extra = need
        else:
            for q in range(l):
                excess = peak[q] - capsum[q]
                if excess > 0:
                    need = (excess + maxcap[q] - 1) // maxcap[q]
                    if need > extra:
                        extra = need
    b = opened + extra
    if lb_root > b:
        b = lb_root
    return b


@njit
def bb_search(starts, ends, dem, caps, avail, dom, type_pref, same_prev,
              static, suffix, sufmin, peak, maxcap, lb_root,
              ctl, st_srv, st_new, st_cursor, st_ncand, st_cand, scores,
              srv_type, type_used, load, members, nmem, capsum,
              best_srv, best_type, node_limit):
    """Resumable depth-first branch and bound over VM -> server assignments.

    Items are indexed by depth (callers pre-sort them).  Servers are opened
    lazily; a fresh server is branched once per non-dominated available type.
    All search state lives in the passed arrays so that the caller can run
    the search in slices and check the wall clock in between.

    Returns BB_RUNNING when ``node_limit`` nodes were expanded, BB_EXHAUSTED
    when the tree is exhausted and BB_HIT_BOUND when the incumbent reached
    ``lb_root``.
    """
    n = starts.shape[0]
    T = caps.shape[0]
    l = caps.shape[1]
    d = ctl[CTL_DEPTH]
    opened = ctl[CTL_OPENED]
    best = ctl[CTL_BEST]
    need_gen = ctl[CTL_NEED_GEN]
    nodes = 0
    pk = np.zeros(l, dtype=np.int64)
    status = BB_RUNNING

    while True:
        if need_gen == 1:
            need_gen = 0
            if d == n:
                if opened < best:
                    best = opened
                    for i in range(n):
                        best_srv[i] = st_srv[i]
                    for s in range(opened):
                        best_type[s] = srv_type[s]
                    ctl[CTL_IMPROVED] += 1
                    if best <= lb_root:
                        status = BB_HIT_BOUND
                        break
                d -= 1
                if d < 0:
                    status = BB_EXHAUSTED
                    break
                # undo item d
                s = st_srv[d]
                for q in range(l):
                    load[s, q] -= dem[d, q]
                nmem[s] -= 1
                if st_new[d] == 1:
                    t = srv_type[s]
                    type_used[t] -= 1
                    opened -= 1
                    for q in range(l):
                        capsum[q] -= caps[t, q]
                st_srv[d] = -1
                continue
            # candidate generation for item d
            nc = 0
            lo = 0
            if d > 0 and same_prev[d]:
                lo = st_srv[d - 1]
            for s in range(lo, opened):
                t = srv_type[s]
                sc = 0.0
                if static:
                    ok = True
                    for q in range(l):
                        if load[s, q] + dem[d, q] > caps[t, q]:
                            ok = False
                            break
                    if not ok:
                        continue
                    dup = False
                    for c in range(nc):
                        s2 = st_cand[d, c]
                        if srv_type[s2] == t:
                            same = True
                            for q in range(l):
                                if load[s2, q] != load[s, q]:
                                    same = False
                                    break
                            if same:
                                dup = True
                                break
                    if dup:
                        continue
                    for q in range(l):
                        sc += (caps[t, q] - load[s, q] - dem[d, q]) / caps[t, q]
                else:
                    if not fits_members(members[s], nmem[s], starts, ends, dem,
                                        caps[t], d, pk):
                        continue
                    for q in range(l):
                        sc += (caps[t, q] - pk[q]) / caps[t, q]
                # insertion sort, best fit first
                pos = nc
                while pos > 0 and scores[pos - 1] > sc:
                    scores[pos] = scores[pos - 1]
                    st_cand[d, pos] = st_cand[d, pos - 1]
                    pos -= 1
                scores[pos] = sc
                st_cand[d, pos] = s
                nc += 1
            for r in range(T):
                t = type_pref[d, r]
                if t < 0:
                    break
                if type_used[t] >= avail[t]:
                    continue
                dominated = False
                for u in range(T):
                    if u != t and dom[u, t] and type_used[u] < avail[u]:
                        dominated = True
                        break
                if dominated:
                    continue
                st_cand[d, nc] = -(t + 1)
                nc += 1
            st_ncand[d] = nc
            st_cursor[d] = 0

        if nodes >= node_limit:
            break

        if st_cursor[d] < st_ncand[d]:
            c = st_cand[d, st_cursor[d]]
            st_cursor[d] += 1
            if c >= 0:
                s = c
                st_new[d] = 0
            else:
                if opened + 1 >= best:
                    continue
                t = -c - 1
                s = opened
                srv_type[s] = t
                type_used[t] += 1
                opened += 1
                for q in range(l):
                    capsum[q] += caps[t, q]
                st_new[d] = 1
            for q in range(l):
                load[s, q] += dem[d, q]
            members[s, nmem[s]] = d
            nmem[s] += 1
            st_srv[d] = s
            nodes += 1
            b = _bb_bound(d + 1, static, opened, srv_type, load, caps, suffix,
                          sufmin, peak, capsum, maxcap, lb_root)
            if b >= best:
                for q in range(l):
                    load[s, q] -= dem[d, q]
                nmem[s] -= 1
                if st_new[d] == 1:
                    type_used[srv_type[s]] -= 1
                    opened -= 1
                    for q in range(l):
                        capsum[q] -= caps[srv_type[s], q]
                st_srv[d] = -1
                continue
            d += 1
            need_gen = 1
        else:
            d -= 1
            if d < 0:
                status = BB_EXHAUSTED
                break
            s = st_srv[d]
            for q in range(l):
                load[s, q] -= dem[d, q]
            nmem[s] -= 1
            if st_new[d] == 1:
                t = srv_type[s]
                type_used[t] -= 1
                opened -= 1
                for q in range(l):
                    capsum[q] -= caps[t, q]
            st_srv[d] = -1

    ctl[CTL_DEPTH] = d
    ctl[CTL_OPENED] = opened
    ctl[CTL_BEST] = best
    ctl[CTL_NEED_GEN] = need_gen
    ctl[CTL_NODES] += nodes
    return status


# --------------------------------------------------------------------------
# time-averaged remaining capacity (ant colony heuristics)
# --------------------------------------------------------------------------


@njit
def mean_remaining_window(row, k, starts, ends, dem, cap, a, e, out):
    """Length-weighted mean of ``cap - usage`` over ``[a, e)`` into ``out``."""
    l = cap.shape[0]
    span = e - a
    for q in range(l):
        out[q] = 0.0
    if span <= 0:
        for q in range(l):
            out[q] = cap[q]
        return
    # breakpoints: a plus member starts/ends strictly inside (a, e)
    pts = np.empty(2 * k + 2, dtype=np.int64)
    npts = 0
    pts[npts] = a
    npts += 1
    for i in range(k):
        u = row[i]
        if starts[u] > a and starts[u] < e:
            pts[npts] = starts[u]
            npts += 1
        if ends[u] > a and ends[u] < e:
            pts[npts] = ends[u]
            npts += 1
    pts[npts] = e
    npts += 1
    srt = np.sort(pts[:npts])
    acc = np.zeros(l, dtype=np.float64)
    for p in range(npts - 1):
        t0 = srt[p]
        t1 = srt[p + 1]
        if t1 <= t0:
            continue
        for q in range(l):
            use = 0
            for i in range(k):
                u = row[i]
                if starts[u] <= t0 and t0 < ends[u]:
                    use += dem[u, q]
            acc[q] += (cap[q] - use) * float(t1 - t0)
    for q in range(l):
        out[q] = acc[q] / float(span)


@njit
def mean_remaining_active(row, k, starts, ends, dem, cap, horizon, out):
    """Mean of ``cap - usage`` over the union of the members' windows.

    Unbounded windows are clipped at ``horizon``.  An empty server reports
    its full capacity.
    """
    l = cap.shape[0]
    if k == 0:
        for q in range(l):
            out[q] = cap[q]
        return
    pts = np.empty(2 * k, dtype=np.int64)
    for i in range(k):
        u = row[i]
        pts[2 * i] = starts[u]
        e = ends[u]
        if e > horizon:
            e = horizon
        if e <= starts[u]:
            e = starts[u] + 1
        pts[2 * i + 1] = e
    srt = np.sort(pts)
    acc = np.zeros(l, dtype=np.float64)
    total = 0.0
    for p in range(2 * k - 1):
        t0 = srt[p]
        t1 = srt[p + 1]
        if t1 <= t0:
            continue
        active = False
        for i in range(k):
            u = row[i]
            if starts[u] <= t0 and t0 < ends[u]:
                active = True
                break
        if not active:
            continue
        total += float(t1 - t0)
        for q in range(l):
            use = 0
            for i in range(k):
                u = row[i]
                if starts[u] <= t0 and t0 < ends[u]:
                    use += dem[u, q]
            acc[q] += (cap[q] - use) * float(t1 - t0)
    if total <= 0.0:
        for q in range(l):
            out[q] = cap[q]
        return
    for q in range(l):
        out[q] = acc[q] / total


@njit
def eta_from_mean(mean_rem, cap, demand):
    """Heuristic desirability of a placement from the window-mean remaining."""
    l = cap.shape[0]
    pair = 0.0
    absum = 0.0
    for q in range(l):
        sq = (mean_rem[q] - demand[q]) / cap[q]
        absum += abs(sq)
        for r in range(q + 1, l):
            sr = (mean_rem[r] - demand[r]) / cap[r]
            pair += abs(sq - sr)
    npairs = l * (l - 1) // 2
    imbalance = pair / npairs if npairs > 0 else 0.0
    return (1.0 - imbalance) / (absum / l + 1.0)


@njit
def over_from_mean(mean_rem, cap, demand):
    """Summed absolute normalized slack after a placement."""
    acc = 0.0
    for q in range(cap.shape[0]):
        acc += abs((mean_rem[q] - demand[q]) / cap[q])
    return acc


@njit
def server_overload(row, k, starts, ends, dem, cap):
    """Sum over dimensions of the worst normalized excess usage."""
    l = cap.shape[0]
    total = 0.0
    for q in range(l):
        worst = 0
        for p in range(k):
            t = starts[row[p]]
            use = 0
            for i in range(k):
                u = row[i]
                if starts[u] <= t and t < ends[u]:
                    use += dem[u, q]
            if use - cap[q] > worst:
                worst = use - cap[q]
        total += worst / cap[q]
    return total


# --------------------------------------------------------------------------
# ant construction and local search
# --------------------------------------------------------------------------


@njit
def _remove_member(members, nmem, s, j):
    k = nmem[s]
    for i in range(k):
        if members[s, i] == j:
            members[s, i] = members[s, k - 1]
            nmem[s] = k - 1
            return


@njit
def ant_construct(order, caps, starts, ends, dem, tau, tau0, rho, q0, alpha,
                  beta, u_exploit, u_pick, open_as_needed, horizon,
                  members, nmem, assign):
    """Build one ant's assignment onto the servers ``caps`` (rows = slots).

    With ``open_as_needed`` the slots are opened in row order whenever no
    open slot is feasible (returns the first VM that fits no slot, else -1).
    Otherwise every slot is available from the start; a VM with no feasible
    slot goes to the slot of least overload ratio and the solution may be
    infeasible.  Applies the local pheromone update in place on ``tau``.
    """
    w = caps.shape[0]
    l = caps.shape[1]
    mr = np.zeros(l, dtype=np.float64)
    pk = np.zeros(l, dtype=np.int64)
    val = np.zeros(w, dtype=np.float64)
    dj = np.zeros(l, dtype=np.float64)
    opened = 0 if open_as_needed else w
    for idx in range(order.shape[0]):
        j = order[idx]
        a = starts[j]
        e = ends[j]
        if e > horizon:
            e = horizon if horizon > a else a + 1
        for q in range(l):
            dj[q] = dem[j, q]
        nfeas = 0
        total = 0.0
        bestv = -1.0
        bests = -1
        for s in range(opened):
            val[s] = -1.0
            if not fits_members(members[s], nmem[s], starts, ends, dem, caps[s], j, pk):
                continue
            mean_remaining_window(members[s], nmem[s], starts, ends, dem, caps[s], a, e, mr)
            eta = eta_from_mean(mr, caps[s].astype(np.float64), dj)
            if eta < 1e-12:
                eta = 1e-12
            v = (tau[j, s] ** alpha) * (eta ** beta)
            val[s] = v
            total += v
            nfeas += 1
            if v > bestv:
                bestv = v
                bests = s
        chosen = -1
        if nfeas > 0:
            if u_exploit[idx] < q0:
                chosen = bests
            else:
                target = u_pick[idx] * total
                run = 0.0
                for s in range(opened):
                    if val[s] < 0.0:
                        continue
                    run += val[s]
                    chosen = s
                    if run >= target:
                        break
        elif open_as_needed:
            while opened < w:
                s = opened
                opened += 1
                if fits_members(members[s], nmem[s], starts, ends, dem, caps[s], j, pk):
                    chosen = s
                    break
            if chosen < 0:
                return j
        else:
            bo = 1e300
            for s in range(w):
                mean_remaining_window(members[s], nmem[s], starts, ends, dem, caps[s], a, e, mr)
                ov = over_from_mean(mr, caps[s].astype(np.float64), dj)
                if ov < bo:
                    bo = ov
                    chosen = s
        members[chosen, nmem[chosen]] = j
        nmem[chosen] += 1
        assign[j] = chosen
        tau[j, chosen] = (1.0 - rho) * tau[j, chosen] + rho * tau0
    return -1


@njit
def local_search(caps, starts, ends, dem, horizon, members, nmem, assign, max_passes):
    """Migration and order exchange until no server is overloaded.

    Returns True when the final assignment is feasible.
    """
    w = caps.shape[0]
    l = caps.shape[1]
    ov = np.zeros(w, dtype=np.float64)
    pk = np.zeros(l, dtype=np.int64)
    mr = np.zeros(l, dtype=np.float64)
    dj = np.zeros(l, dtype=np.float64)
    for s in range(w):
        ov[s] = server_overload(members[s], nmem[s], starts, ends, dem, caps[s])
    for _ in range(max_passes):
        worst = -1
        wv = 0.0
        for s in range(w):
            if ov[s] > wv:
                wv = ov[s]
                worst = s
        if worst < 0:
            return True
        improved = False
        # migration: move a VM off an overloaded server onto a feasible one
        for s in range(w):
            if ov[s] <= 0.0:
                continue
            bestj = -1
            bests = -1
            bestsc = 1e300
            for i in range(nmem[s]):
                j = members[s, i]
                a = starts[j]
                e = ends[j]
                if e > horizon:
                    e = horizon if horizon > a else a + 1
                for q in range(l):
                    dj[q] = dem[j, q]
                for s2 in range(w):
                    if s2 == s:
                        continue
                    if not fits_members(members[s2], nmem[s2], starts, ends, dem, caps[s2], j, pk):
                        continue
                    mean_remaining_window(members[s2], nmem[s2], starts, ends, dem, caps[s2], a, e, mr)
                    sc = over_from_mean(mr, caps[s2].astype(np.float64), dj)
                    if sc < bestsc:
                        bestsc = sc
                        bestj = j
                        bests = s2
            if bestj >= 0:
                _remove_member(members, nmem, s, bestj)
                members[bests, nmem[bests]] = bestj
                nmem[bests] += 1
                assign[bestj] = bests
                ov[s] = server_overload(members[s], nmem[s], starts, ends, dem, caps[s])
                improved = True
        if improved:
            continue
        # order exchange: swap a VM of an overloaded server with one elsewhere
        for s in range(w):
            if ov[s] <= 0.0 or improved:
                continue
            for i in range(nmem[s]):
                if improved:
                    break
                j = members[s, i]
                for s2 in range(w):
                    if s2 == s or improved:
                        continue
                    before = ov[s] + ov[s2]
                    for i2 in range(nmem[s2]):
                        k2 = members[s2, i2]
                        members[s, i] = k2
                        members[s2, i2] = j
                        o1 = server_overload(members[s], nmem[s], starts, ends, dem, caps[s])
                        o2 = server_overload(members[s2], nmem[s2], starts, ends, dem, caps[s2])
                        if o1 + o2 < before - 1e-12:
                            assign[k2] = s
                            assign[j] = s2
                            ov[s] = o1
                            ov[s2] = o2
                            improved = True
                            break
                        members[s, i] = j
                        members[s2, i2] = k2
        if not improved:
            break
    for s in range(w):
        if ov[s] > 0.0:
            return False
    return True
