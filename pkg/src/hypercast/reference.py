"""Independent scalar-loop reference implementations.

Everything here is written with explicit Python loops over float64 numpy
arrays, deliberately avoiding the vectorized formulations in the library
modules, so the two routes can cross-check each other.  Parameters arrive as
plain arrays (see ``verify.snapshot_*`` for extracting them from modules).
"""

from __future__ import annotations

import math

import numpy as np


def _sigmoid(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def ref_softmax(row):
    row = np.asarray(row, dtype=np.float64)
    top = max(float(v) for v in row)
    exps = [math.exp(float(v) - top) for v in row]
    total = sum(exps)
    return np.array([e / total for e in exps])


def ref_combine_time(e_d, e_w):
    e_d, e_w = np.asarray(e_d, np.float64), np.asarray(e_w, np.float64)
    out = np.empty_like(e_d)
    flat_d, flat_w, flat_o = e_d.ravel(), e_w.ravel(), out.ravel()
    for i in range(flat_d.size):
        flat_o[i] = flat_d[i] * flat_w[i]
    return out


def ref_blend(h_prev, spatial, time_code, w_state, w_gate, structure="mixed"):
    """Node representations for structure inference (one time step, no batch)."""
    h_prev = np.asarray(h_prev, np.float64)
    spatial = np.asarray(spatial, np.float64)
    n, state_dim = h_prev.shape
    node_dim = spatial.shape[1]
    if structure == "global":
        return spatial.copy()
    local = np.zeros((n, node_dim))
    for i in range(n):
        for k in range(node_dim):
            acc = 0.0
            for d in range(state_dim):
                acc += h_prev[i, d] * w_state[d, k]
            local[i, k] = acc
    if structure == "local":
        return local
    gate = np.zeros(node_dim)
    for k in range(node_dim):
        acc = 0.0
        for t in range(len(time_code)):
            acc += time_code[t] * w_gate[t, k]
        gate[k] = _sigmoid(acc)
    out = np.zeros((n, node_dim))
    for i in range(n):
        for k in range(node_dim):
            out[i, k] = gate[k] * local[i, k] + (1.0 - gate[k]) * spatial[i, k]
    return out


def ref_assign(node_repr, prototypes):
    """Row-softmax similarity; returns (memberships, node degrees, edge degrees)."""
    node_repr = np.asarray(node_repr, np.float64)
    prototypes = np.asarray(prototypes, np.float64)
    n, m = node_repr.shape[0], prototypes.shape[0]
    s = np.zeros((n, m))
    for i in range(n):
        logits = np.zeros(m)
        for j in range(m):
            acc = 0.0
            for k in range(node_repr.shape[1]):
                acc += node_repr[i, k] * prototypes[j, k]
            logits[j] = acc
        s[i] = ref_softmax(logits)
    node_degree = np.array([sum(s[i, j] for j in range(m)) for i in range(n)])
    edge_degree = np.array([sum(s[i, j] for i in range(n)) for j in range(m)])
    return s, node_degree, edge_degree


def ref_gather(node_feats, memberships, node_degree, edge_weight):
    """Node -> hyperedge aggregation with degree scaling and the edge map."""
    node_feats = np.asarray(node_feats, np.float64)
    n, dim = node_feats.shape
    m = memberships.shape[1]
    agg = np.zeros((m, dim))
    for j in range(m):
        for d in range(dim):
            acc = 0.0
            for i in range(n):
                acc += memberships[i, j] * node_feats[i, d] / math.sqrt(node_degree[i])
            agg[j, d] = acc
    out = np.zeros((m, edge_weight.shape[1]))
    for j in range(m):
        for o in range(edge_weight.shape[1]):
            acc = 0.0
            for d in range(dim):
                acc += agg[j, d] * edge_weight[d, o]
            out[j, o] = acc
    return out


def ref_scatter(edge_feats, memberships, node_degree, edge_degree):
    """Hyperedge -> node propagation with both degree normalizations and ReLU."""
    edge_feats = np.asarray(edge_feats, np.float64)
    m, dim = edge_feats.shape
    n = memberships.shape[0]
    out = np.zeros((n, dim))
    for i in range(n):
        for d in range(dim):
            acc = 0.0
            for j in range(m):
                acc += memberships[i, j] * edge_feats[j, d] / edge_degree[j]
            acc /= math.sqrt(node_degree[i])
            out[i, d] = acc if acc > 0.0 else 0.0
    return out


def ref_adaptive_output(hyper_feats, embed_feats, node_repr, pool):
    """Per-node output maps generated from the shared weight pool."""
    hyper_feats = np.asarray(hyper_feats, np.float64)
    embed_feats = np.asarray(embed_feats, np.float64)
    node_repr = np.asarray(node_repr, np.float64)
    pool = np.asarray(pool, np.float64)
    n = hyper_feats.shape[0]
    width, out_dim = pool.shape[1], pool.shape[2]
    out = np.zeros((n, out_dim))
    for i in range(n):
        concat = np.concatenate([hyper_feats[i], embed_feats[i]])
        w_i = np.zeros((width, out_dim))
        for k in range(pool.shape[0]):
            for a in range(width):
                for o in range(out_dim):
                    w_i[a, o] += node_repr[i, k] * pool[k, a, o]
        for o in range(out_dim):
            acc = 0.0
            for a in range(width):
                acc += concat[a] * w_i[a, o]
            out[i, o] = acc
    return out


def ref_conv(x, h_prev, spatial, time_code, params, structure="mixed",
             adaptive_output=True, pairwise=False):
    """Full convolution step on (N, C) input; mirrors the module contract.

    ``params`` keys: input_embed, state_proj, gate_proj, edge_weight,
    prototypes, and pool (or output_weight when adaptive_output is False).
    """
    x = np.asarray(x, np.float64)
    n = x.shape[0]
    node_repr = ref_blend(h_prev, spatial, time_code,
                          params["state_proj"], params["gate_proj"], structure)
    input_embed = np.asarray(params["input_embed"], np.float64)
    embedded = np.zeros((n, input_embed.shape[1]))
    for i in range(n):
        for d in range(input_embed.shape[1]):
            acc = 0.0
            for c in range(x.shape[1]):
                acc += x[i, c] * input_embed[c, d]
            embedded[i, d] = acc
    if pairwise:
        w_edge = np.asarray(params["edge_weight"], np.float64)
        adjacency = np.zeros((n, n))
        for i in range(n):
            logits = np.zeros(n)
            for j in range(n):
                acc = 0.0
                for k in range(node_repr.shape[1]):
                    acc += node_repr[i, k] * node_repr[j, k]
                logits[j] = acc if acc > 0.0 else 0.0
            adjacency[i] = ref_softmax(logits)
        mixed = np.zeros_like(embedded)
        for i in range(n):
            for d in range(embedded.shape[1]):
                acc = 0.0
                for j in range(n):
                    acc += adjacency[i, j] * embedded[j, d]
                mixed[i, d] = acc
        hyper = np.zeros_like(mixed)
        for i in range(n):
            for o in range(w_edge.shape[1]):
                acc = 0.0
                for d in range(mixed.shape[1]):
                    acc += mixed[i, d] * w_edge[d, o]
                hyper[i, o] = acc if acc > 0.0 else 0.0
    else:
        s, node_degree, edge_degree = ref_assign(node_repr, params["prototypes"])
        edges = ref_gather(embedded, s, node_degree, params["edge_weight"])
        hyper = ref_scatter(edges, s, node_degree, edge_degree)
    if adaptive_output:
        return ref_adaptive_output(hyper, embedded, node_repr, params["pool"])
    output_weight = np.asarray(params["output_weight"], np.float64)
    out = np.zeros((n, output_weight.shape[1]))
    for i in range(n):
        concat = np.concatenate([hyper[i], embedded[i]])
        for o in range(output_weight.shape[1]):
            acc = 0.0
            for a in range(output_weight.shape[0]):
                acc += concat[a] * output_weight[a, o]
            out[i, o] = acc
    return out


def ref_gru_step(x, h_prev, spatial, time_code, reset_params, update_params,
                 candidate_params, structure="mixed", adaptive_output=True,
                 pairwise=False):
    """One recurrent step: gates from convolutions, update gate on the old state."""
    x = np.asarray(x, np.float64)
    h_prev = np.asarray(h_prev, np.float64)
    gate_in = np.concatenate([x, h_prev], axis=1)
    kwargs = dict(structure=structure, adaptive_output=adaptive_output, pairwise=pairwise)
    reset = ref_conv(gate_in, h_prev, spatial, time_code, reset_params, **kwargs)
    update = ref_conv(gate_in, h_prev, spatial, time_code, update_params, **kwargs)
    n, dim = h_prev.shape
    for i in range(n):
        for d in range(dim):
            reset[i, d] = _sigmoid(reset[i, d])
            update[i, d] = _sigmoid(update[i, d])
    candidate_in = np.concatenate([x, reset * h_prev], axis=1)
    candidate = ref_conv(candidate_in, h_prev, spatial, time_code, candidate_params, **kwargs)
    out = np.zeros((n, dim))
    for i in range(n):
        for d in range(dim):
            cand = math.tanh(candidate[i, d])
            out[i, d] = update[i, d] * h_prev[i, d] + (1.0 - update[i, d]) * cand
    return out


def ref_attention(future_time, past_time, states, params, head_count):
    """Cross-attention with node-agnostic queries and per-node keys/values."""
    future_time = np.asarray(future_time, np.float64)
    past_time = np.asarray(past_time, np.float64)
    states = np.asarray(states, np.float64)
    n_future = future_time.shape[0]
    n_past, num_nodes, state_dim = states.shape
    head_dim = state_dim // head_count

    def project(vec, matrix):
        out = np.zeros(matrix.shape[1])
        for o in range(matrix.shape[1]):
            acc = 0.0
            for a in range(len(vec)):
                acc += vec[a] * matrix[a, o]
            out[o] = acc
        return out

    queries = np.stack([project(future_time[q], params["query_proj"])
                        for q in range(n_future)])
    time_mod = np.stack([project(past_time[t], params["time_proj"])
                         for t in range(n_past)])
    keys = np.zeros((n_past, num_nodes, state_dim))
    values = np.zeros((n_past, num_nodes, state_dim))
    for t in range(n_past):
        for i in range(num_nodes):
            modulated = np.array([time_mod[t, d] * states[t, i, d]
                                  for d in range(state_dim)])
            keys[t, i] = project(modulated, params["key_proj"])
            values[t, i] = project(modulated, params["value_proj"])

    out = np.zeros((n_future, num_nodes, state_dim))
    for q in range(n_future):
        for i in range(num_nodes):
            for c in range(head_count):
                lo, hi = c * head_dim, (c + 1) * head_dim
                logits = np.zeros(n_past)
                for t in range(n_past):
                    acc = 0.0
                    for d in range(lo, hi):
                        acc += queries[q, d] * keys[t, i, d]
                    logits[t] = acc / math.sqrt(head_dim)
                weights = ref_softmax(logits)
                for d in range(lo, hi):
                    acc = 0.0
                    for t in range(n_past):
                        acc += weights[t] * values[t, i, d]
                    out[q, i, d] = acc
    return out


def ref_mae(pred, target):
    pred = np.asarray(pred, np.float64).ravel()
    target = np.asarray(target, np.float64).ravel()
    acc = 0.0
    for i in range(pred.size):
        acc += abs(pred[i] - target[i])
    return acc / pred.size


def ref_metrics(pred, target, mape_threshold=1.0):
    pred = np.asarray(pred, np.float64).ravel()
    target = np.asarray(target, np.float64).ravel()
    abs_sum = 0.0
    sq_sum = 0.0
    pct_sum = 0.0
    pct_count = 0
    for i in range(pred.size):
        err = pred[i] - target[i]
        abs_sum += abs(err)
        sq_sum += err * err
        if abs(target[i]) >= mape_threshold:
            pct_sum += abs(err) / abs(target[i])
            pct_count += 1
    mae = abs_sum / pred.size
    rmse = math.sqrt(sq_sum / pred.size)
    mape = 100.0 * pct_sum / pct_count if pct_count else float("nan")
    return mae, rmse, mape
