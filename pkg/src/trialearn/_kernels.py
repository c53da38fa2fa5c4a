"""Hot iteration loops, compiled with numba unless disabled.

The learner's random stream is splitmix64: the generator state advances by a
golden-ratio increment per draw and the output is an avalanche mix of the
state; uniforms take the top 53 bits.  The pure-Python reference generator in
`learner` implements the identical stream, and the per-iteration draw order
is part of the package's determinism contract:

  1. one draw for the disturbance,
  2. per agent in index order: one draw for a Content agent (two when it
     experiments), one draw for a Discontent agent,
  3. per agent in index order: one draw iff the agent re-evaluates,
  4. per locally-Content agent in index order: one draw iff the broadcast
     step applies (mixed moods).

Trace rows record the post-update state as int16 triples (baseline action,
baseline-utility index into the per-agent sorted value table, mood) per
agent; the played profile always equals the post-update baseline profile, so
full iteration records are recoverable from the trace plus the disturbance.
"""

from __future__ import annotations

import numpy as np

from .accel import maybe_jit

U64_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
U64_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
U64_MIX2 = np.uint64(0x94D049BB133111EB)
U64_S30 = np.uint64(30)
U64_S27 = np.uint64(27)
U64_S31 = np.uint64(31)
U64_S11 = np.uint64(11)
INV_2_53 = float(2.0**-53)

CONTENT = 1
DISCONTENT = 0


@maybe_jit
def _u01(state):
    """Advance splitmix64 state; return (new_state, uniform in [0,1))."""
    state = state + U64_GOLDEN
    x = state
    x = (x ^ (x >> U64_S30)) * U64_MIX1
    x = (x ^ (x >> U64_S27)) * U64_MIX2
    x = x ^ (x >> U64_S31)
    return state, float(x >> U64_S11) * INV_2_53


@maybe_jit
def run_learner(
    action_counts,  # int64[n]
    strides,  # int64[n]
    utilities,  # float64[n, P, W]
    uidx,  # int16[n, P, W] index of each payoff in the agent's value table
    uvals,  # float64[n, max_nu] per-agent sorted unique payoff values
    w_cdf,  # float64[W] cumulative disturbance probabilities
    eps0,
    decay,
    eps_floor,
    c,
    rho,
    slack,
    beta,  # < 0 disables the broadcast step
    iterations,
    seed,  # uint64
    trace_states,  # int16[iterations, 3n] out
    trace_w,  # int16[iterations] out
):
    n = action_counts.shape[0]
    n_w = w_cdf.shape[0]

    base_a = np.zeros(n, dtype=np.int64)
    base_uidx = np.zeros(n, dtype=np.int16)
    base_u = np.empty(n, dtype=np.float64)
    mood = np.zeros(n, dtype=np.int64)  # all Discontent at the start
    played = np.zeros(n, dtype=np.int64)
    for i in range(n):
        base_u[i] = uvals[i, 0]

    state = seed
    eps = eps0
    welfare_sum = 0.0
    band = rho + slack

    for k in range(iterations):
        if k > 0:
            eps = eps * decay
            if eps < eps_floor:
                eps = eps_floor
        eps_c = eps**c

        state, r = _u01(state)
        w = 0
        for j in range(n_w - 1):
            if r >= w_cdf[j]:
                w = j + 1

        joint = 0
        for i in range(n):
            count = action_counts[i]
            if mood[i] == CONTENT:
                state, r1 = _u01(state)
                a = base_a[i]
                if count > 1 and r1 < eps_c:
                    state, r2 = _u01(state)
                    other = int(r2 * (count - 1))
                    if other > count - 2:
                        other = count - 2
                    if other >= a:
                        other += 1
                    a = other
            else:
                state, r1 = _u01(state)
                a = int(r1 * count)
                if a > count - 1:
                    a = count - 1
            played[i] = a
            joint += a * strides[i]

        for i in range(n):
            u = utilities[i, joint, w]
            welfare_sum += u
            keep = (
                mood[i] == CONTENT
                and played[i] == base_a[i]
                and abs(u - base_u[i]) <= band
            )
            if not keep:
                state, rc = _u01(state)
                p_content = eps ** (1.0 - u)
                mood[i] = CONTENT if rc < p_content else DISCONTENT
                base_a[i] = played[i]
                base_u[i] = u
                base_uidx[i] = uidx[i, joint, w]

        if beta >= 0.0:
            n_content = 0
            for i in range(n):
                n_content += mood[i]
            if 0 < n_content < n:
                p_keep = eps**beta
                for i in range(n):
                    if mood[i] == CONTENT:
                        state, rb = _u01(state)
                        if rb >= p_keep:
                            mood[i] = DISCONTENT

        for i in range(n):
            trace_states[k, 3 * i] = np.int16(base_a[i])
            trace_states[k, 3 * i + 1] = base_uidx[i]
            trace_states[k, 3 * i + 2] = np.int16(mood[i])
        trace_w[k] = np.int16(w)

    return welfare_sum, eps


ACTION_FIXED_RATE = -2
ACTION_NO_METERING = -1
ACTION_LOC = 0
ACTION_COR = 1


@maybe_jit
def run_ctm(
    lengths,
    v_free,
    v_wave,
    k_jam,
    k_crit,
    capacity,
    drop_rate,
    ramp_cells,
    max_queue,
    section_of,
    step,
    horizon,
    mainline,
    arrivals,
    actions,
    k_loc,
    k_cor,
    rate_min,
    rate_max,
    densities,
    queues,
    rates,
    costs,
    out_flow,
):
    """Freeway simulation over the whole horizon, in place.

    densities/queues/rates enter as the initial state and leave as the
    final one.  Per step: metering rates update first (per the per-ramp
    action code), then admitted flows are computed with ramp priority at
    merge cells, then densities and queues advance, then per-section
    vehicle-hours accumulate into costs from the post-update state.

    The sending function is non-monotonic: it rises to the cell capacity
    at the critical density and decreases linearly past it, so queued
    cells discharge below capacity.  Receiving is min(capacity,
    wave-speed slack).  Mainline demand that does not fit into the first
    cell is dropped, not queued, and both conservation accounting and
    costs ignore it.

    Returns 0 on success, or 1 + step*n_cells + cell for a density that
    left [0, jam] (CFL-safe inputs cannot trigger it).
    """
    n_cells = lengths.shape[0]
    n_ramps = ramp_cells.shape[0]
    for t in range(horizon):
        # metering policy on the pre-step state
        for j in range(n_ramps):
            act = actions[j]
            if act == ACTION_NO_METERING:
                rates[j] = rate_max
                continue
            if act == ACTION_FIXED_RATE:
                continue
            use_loc = act == ACTION_LOC or j == n_ramps - 1
            if use_loc:
                cell = ramp_cells[j]
                delta = k_loc * (k_crit[cell] - densities[cell])
            else:
                occ_own = queues[j] / max_queue[j]
                if occ_own > 1.0:
                    occ_own = 1.0
                occ_down = queues[j + 1] / max_queue[j + 1]
                if occ_down > 1.0:
                    occ_down = 1.0
                delta = k_cor * (occ_down - occ_own)
            r = rates[j] + delta
            if r < rate_min:
                r = rate_min
            elif r > rate_max:
                r = rate_max
            rates[j] = r

        # admitted ramp flows, with merge priority over the mainline
        residual = np.empty(n_cells)
        for i in range(n_cells):
            supply = v_wave[i] * (k_jam[i] - densities[i])
            if supply > capacity[i]:
                supply = capacity[i]
            if supply < 0.0:
                supply = 0.0
            residual[i] = supply
        ramp_flow = np.empty(n_ramps)
        for j in range(n_ramps):
            cell = ramp_cells[j]
            service = queues[j] / step + arrivals[t, j]
            r = rates[j]
            if service < r:
                r = service
            if residual[cell] < r:
                r = residual[cell]
            ramp_flow[j] = r
            residual[cell] -= r

        # sending functions with the capacity drop
        sending = np.empty(n_cells)
        for i in range(n_cells):
            k = densities[i]
            if k <= k_crit[i]:
                s = v_free[i] * k
                if s > capacity[i]:
                    s = capacity[i]
            else:
                s = capacity[i] - drop_rate[i] * (k - k_crit[i])
                if s < 0.0:
                    s = 0.0
            sending[i] = s

        # mainline flows: entry, inter-cell, exit
        inflow = np.zeros(n_cells)
        outflow = np.zeros(n_cells)
        entry = mainline[t]
        if entry > residual[0]:
            entry = residual[0]
        inflow[0] = entry
        for i in range(n_cells - 1):
            f = sending[i]
            if f > residual[i + 1]:
                f = residual[i + 1]
            outflow[i] = f
            inflow[i + 1] += f
        outflow[n_cells - 1] = sending[n_cells - 1]
        for j in range(n_ramps):
            inflow[ramp_cells[j]] += ramp_flow[j]

        # advance densities and queues
        status = 0
        for i in range(n_cells):
            densities[i] += step / lengths[i] * (inflow[i] - outflow[i])
            if densities[i] < 0.0:
                if densities[i] < -1e-9:
                    status = 1 + t * n_cells + i
                densities[i] = 0.0
            elif densities[i] > k_jam[i] + 1e-9:
                status = 1 + t * n_cells + i
        if status != 0:
            return status
        for j in range(n_ramps):
            q = queues[j] + step * (arrivals[t, j] - ramp_flow[j])
            if q < 0.0:
                q = 0.0
            queues[j] = q

        out_flow[t] = outflow[n_cells - 1]

        # vehicle-hours per ramp section, post-update
        for i in range(n_cells):
            sec = section_of[i]
            if sec >= 0:
                costs[sec] += densities[i] * lengths[i] * step
        for j in range(n_ramps):
            costs[j] += queues[j] * step

    return 0
