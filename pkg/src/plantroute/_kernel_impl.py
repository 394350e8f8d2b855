"""Array kernels for the greedy step, horizon rollouts, and assignment search.

Everything here is written against flat numpy arrays so the same source runs
either numba-compiled or as plain Python (see :mod:`plantroute.kernels` for
the dispatch). Keep this module free of Python-only conveniences: no dicts,
no closures, constant-string exceptions only.

Shared conventions:
  * sequence s spans ``nodes_flat[offsets[s-1] : offsets[s]]``; position p is
    1-based, so entry (s, p) lives at ``offsets[s-1] + p - 1``.
  * a predicted position past the sequence end means "exit the plant".
  * ``trans_idx[h, j]`` is the input-vector slot of transition (h, j), or -1.
"""

import numpy as np


def resolve_predictions(s, p, t, ids, n, pred_p, nodes_flat, offsets, n_nodes, pred_node, target_count):
    """Correct predicted positions until no node is targeted twice.

    Winner priority per contested node: the part already at that node, else
    smallest remaining-step count, else longest time in the plant, else
    smallest part id. Losers are reset to their current position. Returns the
    number of sweeps performed.
    """
    sweeps = 0
    while True:
        sweeps += 1
        if sweeps > n + 1:
            raise RuntimeError("conflict resolution did not converge; controller state is corrupt")
        target_count[:] = 0
        for i in range(n):
            base = offsets[s[i] - 1]
            length = offsets[s[i]] - base
            if pred_p[i] <= length:
                node = nodes_flat[base + pred_p[i] - 1]
            else:
                node = 0
            pred_node[i] = node
            target_count[node] += 1
        target_count[0] = 0
        any_conflict = False
        for h in range(1, n_nodes + 1):
            if target_count[h] < 2:
                continue
            any_conflict = True
            winner = -1
            for i in range(n):
                if pred_node[i] == h:
                    base = offsets[s[i] - 1]
                    if nodes_flat[base + p[i] - 1] == h:
                        winner = i
                        break
            if winner < 0:
                best_r = np.int64(0)
                best_t = np.int64(0)
                best_id = np.int64(0)
                for i in range(n):
                    if pred_node[i] != h:
                        continue
                    base = offsets[s[i] - 1]
                    length = offsets[s[i]] - base
                    r = length - p[i]
                    better = False
                    if winner < 0:
                        better = True
                    elif r < best_r:
                        better = True
                    elif r == best_r and t[i] > best_t:
                        better = True
                    elif r == best_r and t[i] == best_t and ids[i] < best_id:
                        better = True
                    if better:
                        winner = i
                        best_r = r
                        best_t = t[i]
                        best_id = ids[i]
            for i in range(n):
                if i == winner or pred_node[i] != h:
                    continue
                pred_p[i] = p[i]
                base = offsets[s[i] - 1]
                node = nodes_flat[base + p[i] - 1]
                target_count[h] -= 1
                target_count[node] += 1
                pred_node[i] = node
        if not any_conflict:
            return sweeps


def fill_inputs(s, p, n, pred_p, a_flag, nodes_flat, offsets, trans_idx, h_l, h_u, u_out):
    """Write the command vector for conflict-free predictions; returns the
    number of active commands.

    Loading is commanded only when a part is available (a_flag) and no part
    will claim the loading node: a part predicted there next step, or a part
    leaving the plant from it this step (it occupies the gate until the exit
    completes), both block the load.
    """
    u_out[:] = 0
    n_cmds = 0
    load_blocked = False
    for i in range(n):
        base = offsets[s[i] - 1]
        length = offsets[s[i]] - base
        cur = nodes_flat[base + p[i] - 1]
        if pred_p[i] > length:
            slot = trans_idx[cur, 0]
            if slot < 0:
                raise ValueError("part predicted to exit from a node with no unloading transition")
            u_out[slot] = 1
            n_cmds += 1
            if cur == h_l:
                load_blocked = True
        else:
            nxt = nodes_flat[base + pred_p[i] - 1]
            if nxt == h_l:
                load_blocked = True
            if nxt != cur:
                slot = trans_idx[cur, nxt]
                if slot < 0:
                    raise ValueError("part predicted to move along a transition that does not exist")
                u_out[slot] = 1
                n_cmds += 1
    if a_flag != 0 and not load_blocked:
        u_out[trans_idx[0, h_l]] = 1
        n_cmds += 1
    return n_cmds


def apply_predictions(s, p, t, ids, n, pred_p, loaded, default_s, default_p, next_id, offsets):
    """Advance part arrays one step in place; drop exited parts, append the
    newly loaded one. Returns the new part count."""
    w = 0
    for i in range(n):
        base = offsets[s[i] - 1]
        length = offsets[s[i]] - base
        if pred_p[i] <= length:
            s[w] = s[i]
            p[w] = pred_p[i]
            t[w] = t[i] + 1
            ids[w] = ids[i]
            w += 1
    if loaded != 0:
        s[w] = default_s
        p[w] = default_p
        t[w] = 0
        ids[w] = next_id
        w += 1
    return w


def rollout_cost(
    s, p, t, ids, n,
    horizon, a_pred, beta,
    nodes_flat, offsets, trans_idx, n_nodes, h_l, h_u,
    default_s, default_p, next_id,
    pred_buf, u_buf, node_buf, count_buf,
):
    """Closed-loop cost of running the greedy follower for ``horizon`` steps.

    Mutates the part arrays (callers pass scratch copies). Cost is the sum of
    remaining steps over all parts at stages 0..horizon plus beta times the
    total number of commands over the horizon; both accumulated exactly as
    integers.
    """
    r_total = np.int64(0)
    c_total = np.int64(0)
    for o in range(horizon):
        for i in range(n):
            r_total += (offsets[s[i]] - offsets[s[i] - 1]) - p[i]
        for i in range(n):
            pred_buf[i] = p[i] + 1
        resolve_predictions(s, p, t, ids, n, pred_buf, nodes_flat, offsets, n_nodes, node_buf, count_buf)
        n_cmds = fill_inputs(s, p, n, pred_buf, a_pred[o], nodes_flat, offsets, trans_idx, h_l, h_u, u_buf)
        c_total += n_cmds
        loaded = u_buf[trans_idx[0, h_l]]
        n = apply_predictions(s, p, t, ids, n, pred_buf, loaded, default_s, default_p, next_id, offsets)
        if loaded != 0:
            next_id += 1
    for i in range(n):
        r_total += (offsets[s[i]] - offsets[s[i] - 1]) - p[i]
    return float(r_total) + beta * float(c_total)


def solve_assignments(
    cand_s, cand_p, cand_off, inc_combo,
    s0, p0, t0, ids0, n0,
    horizon, a_pred, beta, budget,
    nodes_flat, offsets, trans_idx, n_nodes, h_l, h_u,
    default_s, default_p, next_id,
    s_buf, p_buf, t_buf, id_buf, pred_buf, u_buf, node_buf, count_buf,
    best_combo_out,
):
    """Exhaustive search over the per-part candidate product.

    The incumbent assignment is scored first; remaining assignments are
    enumerated in ascending lexicographic order and replace the best only on
    a strictly lower cost, so ties keep the incumbent and otherwise the
    lexicographically smallest assignment. Stops early once ``budget``
    evaluations were scored (budget <= 0 means unlimited).

    Returns (best_cost, incumbent_cost, evaluations, budget_hit).
    """
    n_parts = n0
    combo = np.empty(n_parts, dtype=np.int64)

    for i in range(n_parts):
        combo[i] = inc_combo[i]
    inc_cost = _score_combo(
        combo, cand_s, cand_p, cand_off, s0, p0, t0, ids0, n0,
        horizon, a_pred, beta,
        nodes_flat, offsets, trans_idx, n_nodes, h_l, h_u,
        default_s, default_p, next_id,
        s_buf, p_buf, t_buf, id_buf, pred_buf, u_buf, node_buf, count_buf,
    )
    best_cost = inc_cost
    for i in range(n_parts):
        best_combo_out[i] = inc_combo[i]
    n_evals = np.int64(1)
    budget_hit = np.int64(0)

    if budget > 0 and n_evals >= budget:
        return best_cost, inc_cost, n_evals, np.int64(1)

    for i in range(n_parts):
        combo[i] = 0
    done = False
    while not done:
        is_inc = True
        for i in range(n_parts):
            if combo[i] != inc_combo[i]:
                is_inc = False
                break
        if not is_inc:
            cost = _score_combo(
                combo, cand_s, cand_p, cand_off, s0, p0, t0, ids0, n0,
                horizon, a_pred, beta,
                nodes_flat, offsets, trans_idx, n_nodes, h_l, h_u,
                default_s, default_p, next_id,
                s_buf, p_buf, t_buf, id_buf, pred_buf, u_buf, node_buf, count_buf,
            )
            n_evals += 1
            if cost < best_cost:
                best_cost = cost
                for i in range(n_parts):
                    best_combo_out[i] = combo[i]
            if budget > 0 and n_evals >= budget:
                budget_hit = np.int64(1)
                break
        d = n_parts - 1
        while d >= 0:
            combo[d] += 1
            if combo[d] < cand_off[d + 1] - cand_off[d]:
                break
            combo[d] = 0
            d -= 1
        if d < 0:
            done = True
    return best_cost, inc_cost, n_evals, budget_hit


def _score_combo(
    combo, cand_s, cand_p, cand_off,
    s0, p0, t0, ids0, n0,
    horizon, a_pred, beta,
    nodes_flat, offsets, trans_idx, n_nodes, h_l, h_u,
    default_s, default_p, next_id,
    s_buf, p_buf, t_buf, id_buf, pred_buf, u_buf, node_buf, count_buf,
):
    for i in range(n0):
        slot = cand_off[i] + combo[i]
        s_buf[i] = cand_s[slot]
        p_buf[i] = cand_p[slot]
        t_buf[i] = t0[i]
        id_buf[i] = ids0[i]
    return rollout_cost(
        s_buf, p_buf, t_buf, id_buf, n0,
        horizon, a_pred, beta,
        nodes_flat, offsets, trans_idx, n_nodes, h_l, h_u,
        default_s, default_p, next_id,
        pred_buf, u_buf, node_buf, count_buf,
    )
