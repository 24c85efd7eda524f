"""Self-verification suite: oracle equivalence, invariants, gradient checks.

Every check pits the vectorized library code against the loop-based
references in :mod:`hypercast.reference`, or against structural identities
that must hold exactly.  Gradient checks always run in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

from . import reference as ref
from .gradcheck import grad_check
from .hgconv import (HypergraphConv, PrototypeBank, StepContext, gather_to_edges,
                     node_adaptive_output, scatter_to_nodes, soft_assign)
from .metrics import compute_metrics
from .model import HypergraphForecaster, ModelConfig, TemporalQueryAttention
from .recurrent import HypergraphGRUCell


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def tiny_model_config(num_nodes: int = 4, **overrides) -> ModelConfig:
    """Desk-scale configuration used across verification and tests."""
    base = dict(
        num_nodes=num_nodes, input_len=3, horizon=2, in_channels=3,
        hidden_dim=4, time_dim=3, node_dim=2, num_prototypes=2,
        num_blocks=1, head_count=1, slots_per_day=8,
    )
    base.update(overrides)
    return ModelConfig(**base)


def random_batch(cfg: ModelConfig, batch: int = 1, seed: int = 0) -> dict:
    """Random model inputs consistent with a configuration."""
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, cfg.slots_per_day * 7, size=batch)
    steps = starts[:, None] + np.arange(cfg.input_len + cfg.horizon)[None, :]
    tod = steps % cfg.slots_per_day
    dow = (steps // cfg.slots_per_day) % 7
    return {
        "x": rng.standard_normal(
            (batch, cfg.input_len, cfg.num_nodes, cfg.in_channels)),
        "tod_past": tod[:, :cfg.input_len],
        "dow_past": dow[:, :cfg.input_len],
        "tod_future": tod[:, cfg.input_len:],
        "dow_future": dow[:, cfg.input_len:],
    }


def snapshot_conv(conv: HypergraphConv) -> dict:
    out = {
        "input_embed": conv.input_embed.detach().numpy().astype(np.float64),
        "state_proj": conv.state_proj.detach().numpy().astype(np.float64),
        "gate_proj": conv.gate_proj.detach().numpy().astype(np.float64),
        "edge_weight": conv.edge_weight.detach().numpy().astype(np.float64),
        "prototypes": conv.prototypes().detach().numpy().astype(np.float64),
    }
    if conv.adaptive_output:
        out["pool"] = conv.pool.detach().numpy().astype(np.float64)
    else:
        out["output_weight"] = conv.output_weight.detach().numpy().astype(np.float64)
    return out


def snapshot_attention(tqa: TemporalQueryAttention) -> dict:
    return {name: getattr(tqa, name).detach().numpy().astype(np.float64)
            for name in ("time_proj", "query_proj", "key_proj", "value_proj")}


def _random_conv(rng: np.random.Generator, **kwargs):
    """A double-precision conv plus matching random inputs, sizes <= 6."""
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, 7))
    dim = int(rng.integers(2, 7))
    node_dim = int(rng.integers(2, 5))
    time_dim = int(rng.integers(2, 5))
    in_dim = int(rng.integers(1, 5))
    torch.manual_seed(int(rng.integers(0, 2 ** 31)))
    conv = HypergraphConv(
        in_dim=in_dim, state_dim=dim, hidden_dim=dim, out_dim=dim,
        node_dim=node_dim, time_dim=time_dim,
        prototypes=PrototypeBank(m, node_dim), **kwargs,
    ).double()
    inputs = {
        "x": torch.as_tensor(rng.standard_normal((n, in_dim))),
        "h_prev": torch.as_tensor(rng.standard_normal((n, dim))),
        "spatial": torch.as_tensor(rng.standard_normal((n, node_dim))),
        "time_embed": torch.as_tensor(rng.standard_normal(time_dim)),
    }
    return conv, inputs


def _ctx(inputs: dict) -> StepContext:
    return StepContext(time_embed=inputs["time_embed"], spatial=inputs["spatial"])


def check_stage_oracles(instances: int = 120, seed: int = 0):
    """Assignment, both propagation stages, and the adaptive output map."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        conv, inputs = _random_conv(rng)
        node_repr, _ = conv.blend_node_state(inputs["h_prev"], _ctx(inputs))
        embedded = inputs["x"] @ conv.input_embed

        inc = soft_assign(node_repr, conv.prototypes())
        s_ref, node_deg_ref, edge_deg_ref = ref.ref_assign(
            node_repr.detach().numpy(), conv.prototypes().detach().numpy())
        worst = max(worst, float(np.abs(inc.weights.detach().numpy() - s_ref).max()))
        worst = max(worst, float(np.abs(inc.edge_degree.detach().numpy() - edge_deg_ref).max()))

        edges = gather_to_edges(embedded, inc, conv.edge_weight)
        edges_ref = ref.ref_gather(embedded.detach().numpy(), s_ref, node_deg_ref,
                                   conv.edge_weight.detach().numpy())
        worst = max(worst, float(np.abs(edges.detach().numpy() - edges_ref).max()))

        nodes = scatter_to_nodes(edges, inc)
        nodes_ref = ref.ref_scatter(edges_ref, s_ref, node_deg_ref, edge_deg_ref)
        worst = max(worst, float(np.abs(nodes.detach().numpy() - nodes_ref).max()))

        if conv.adaptive_output:
            out = node_adaptive_output(nodes, embedded, node_repr, conv.pool)
            out_ref = ref.ref_adaptive_output(nodes_ref, embedded.detach().numpy(),
                                              node_repr.detach().numpy(),
                                              conv.pool.detach().numpy())
            worst = max(worst, float(np.abs(out.detach().numpy() - out_ref).max()))
    return worst <= 1e-6, f"max |err| {worst:.2e} over {instances} instances"


def check_conv_oracle(instances: int = 120, seed: int = 1):
    """Full convolution pipeline against the composed scalar loops."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(instances):
        structure = ("mixed", "local", "global")[i % 3]
        conv, inputs = _random_conv(rng, structure=structure)
        with torch.no_grad():
            out = conv(inputs["x"], inputs["h_prev"], _ctx(inputs))
        out_ref = ref.ref_conv(
            inputs["x"].numpy(), inputs["h_prev"].numpy(), inputs["spatial"].numpy(),
            inputs["time_embed"].numpy(), snapshot_conv(conv), structure=structure)
        worst = max(worst, float(np.abs(out.numpy() - out_ref).max()))
    return worst <= 1e-6, f"max |err| {worst:.2e} over {instances} instances"


def check_gru_oracle(instances: int = 120, seed: int = 2):
    """One recurrent step against the loop-based gate arithmetic."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 7))
        dim = int(rng.integers(2, 7))
        in_dim = int(rng.integers(1, 4))
        node_dim, time_dim, m = 3, 3, int(rng.integers(1, 7))
        torch.manual_seed(int(rng.integers(0, 2 ** 31)))
        cell = HypergraphGRUCell(in_dim=in_dim, hidden_dim=dim, node_dim=node_dim,
                                 time_dim=time_dim, num_prototypes=m).double()
        x = torch.as_tensor(rng.standard_normal((n, in_dim)))
        h_prev = torch.as_tensor(rng.standard_normal((n, dim)))
        spatial = torch.as_tensor(rng.standard_normal((n, node_dim)))
        time_embed = torch.as_tensor(rng.standard_normal(time_dim))
        with torch.no_grad():
            out = cell(x, h_prev, StepContext(time_embed, spatial))
        out_ref = ref.ref_gru_step(
            x.numpy(), h_prev.numpy(), spatial.numpy(), time_embed.numpy(),
            snapshot_conv(cell.reset_conv), snapshot_conv(cell.update_conv),
            snapshot_conv(cell.candidate_conv))
        worst = max(worst, float(np.abs(out.numpy() - out_ref).max()))
    return worst <= 1e-6, f"max |err| {worst:.2e} over {instances} instances"


def check_attention_oracle(instances: int = 120, seed: int = 3):
    """Cross-attention against the per-head scalar loops."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n_past = int(rng.integers(1, 7))
        n_future = int(rng.integers(1, 7))
        n = int(rng.integers(1, 7))
        heads = int(rng.choice([1, 2]))
        dim = heads * int(rng.integers(1, 4))
        time_dim = int(rng.integers(2, 5))
        torch.manual_seed(int(rng.integers(0, 2 ** 31)))
        tqa = TemporalQueryAttention(dim, time_dim, head_count=heads).double()
        future_time = torch.as_tensor(rng.standard_normal((1, n_future, time_dim)))
        past_time = torch.as_tensor(rng.standard_normal((1, n_past, time_dim)))
        states = torch.as_tensor(rng.standard_normal((1, n_past, n, dim)))
        with torch.no_grad():
            out = tqa(future_time, past_time, states)
        out_ref = ref.ref_attention(future_time[0].numpy(), past_time[0].numpy(),
                                    states[0].numpy(), snapshot_attention(tqa), heads)
        worst = max(worst, float(np.abs(out[0].numpy() - out_ref).max()))
    return worst <= 1e-6, f"max |err| {worst:.2e} over {instances} instances"


def check_incidence_invariants(instances: int = 200, seed: int = 4):
    """Simplex rows, unit node degrees, and total edge mass == N."""
    rng = np.random.default_rng(seed)
    worst_row, worst_mass = 0.0, 0.0
    for _ in range(instances):
        conv, inputs = _random_conv(rng)
        inc = conv.assignment(inputs["h_prev"], _ctx(inputs))
        w = inc.weights.detach().numpy()
        if w.min() < 0:
            return False, "negative membership weight"
        worst_row = max(worst_row, float(np.abs(w.sum(axis=-1) - 1.0).max()))
        worst_row = max(worst_row, float(np.abs(inc.node_degree.detach().numpy() - 1.0).max()))
        worst_mass = max(worst_mass, float(
            abs(inc.edge_degree.detach().numpy().sum() - w.shape[0])))
    ok = worst_row <= 1e-6 and worst_mass <= 1e-5
    return ok, f"max row dev {worst_row:.2e}, max mass dev {worst_mass:.2e}"


def check_attention_rows(instances: int = 100, seed: int = 5):
    """Attention weights over the history axis sum to one."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        heads = int(rng.choice([1, 2]))
        dim = heads * int(rng.integers(1, 4))
        torch.manual_seed(int(rng.integers(0, 2 ** 31)))
        tqa = TemporalQueryAttention(dim, 3, head_count=heads).double()
        future_time = torch.as_tensor(rng.standard_normal((2, 3, 3)))
        past_time = torch.as_tensor(rng.standard_normal((2, 4, 3)))
        states = torch.as_tensor(rng.standard_normal((2, 4, 3, dim)))
        with torch.no_grad():
            _, weights = tqa(future_time, past_time, states, return_weights=True)
        worst = max(worst, float(np.abs(weights.sum(dim=3).numpy() - 1.0).max()))
    return worst <= 1e-6, f"max row deviation {worst:.2e}"


def check_residual_sum(seed: int = 6):
    """The model output equals the running sum of block forecasts exactly."""
    torch.manual_seed(seed)
    cfg = tiny_model_config(num_blocks=3)
    model = HypergraphForecaster(cfg).double()
    batch = random_batch(cfg, batch=2, seed=seed)
    with torch.no_grad():
        total, parts = model(batch["x"], batch["tod_past"], batch["dow_past"],
                             batch["tod_future"], batch["dow_future"],
                             return_parts=True)
    acc = parts[0][0]
    for forecast, _ in parts[1:]:
        acc = acc + forecast
    exact = torch.equal(total, acc)
    return exact, "sum of block forecasts " + ("matches exactly" if exact else "differs")


def check_horizon_independence(seed: int = 7):
    """Permuting horizon slots permutes decoder outputs with no other change."""
    torch.manual_seed(seed)
    cfg = tiny_model_config(horizon=4)
    model = HypergraphForecaster(cfg).double()
    block = model.blocks[0]
    rng = np.random.default_rng(seed)
    context = torch.as_tensor(rng.standard_normal((2, 4, cfg.num_nodes, cfg.hidden_dim)))
    future_time = torch.as_tensor(rng.standard_normal((2, 4, cfg.time_dim)))
    spatial = model.spatial_embedding().double()
    perm = torch.as_tensor([2, 0, 3, 1])
    with torch.no_grad():
        base = block.decode(context, future_time, spatial)
        # the learnable initial states must travel with their slots
        block_perm_init = block.decoder_init.data[perm].clone()
        original_init = block.decoder_init.data.clone()
        block.decoder_init.data = block_perm_init
        permuted = block.decode(context[:, perm], future_time[:, perm], spatial)
        block.decoder_init.data = original_init
    exact = torch.equal(base[:, perm], permuted)
    return exact, "horizon slots " + ("independent (exact)" if exact else "interact")


def check_permutation_equivariance(instances: int = 50, seed: int = 8):
    """Relabeling nodes relabels convolution outputs identically."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        conv, inputs = _random_conv(rng)
        n = inputs["x"].shape[0]
        perm = torch.as_tensor(rng.permutation(n))
        with torch.no_grad():
            base = conv(inputs["x"], inputs["h_prev"], _ctx(inputs))
            permuted = conv(inputs["x"][perm], inputs["h_prev"][perm],
                            StepContext(inputs["time_embed"], inputs["spatial"][perm]))
        worst = max(worst, float((base[perm] - permuted).abs().max()))
    return worst <= 1e-6, f"max |err| {worst:.2e} over {instances} permutations"


def check_single_prototype(instances: int = 50, seed: int = 9):
    """With one hyperedge the pipeline reduces to its closed form."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        conv, inputs = _random_conv(rng)
        torch.manual_seed(int(rng.integers(0, 2 ** 31)))
        single = HypergraphConv(
            in_dim=conv.in_dim, state_dim=inputs["h_prev"].shape[1],
            hidden_dim=conv.hidden_dim, out_dim=conv.out_dim,
            node_dim=inputs["spatial"].shape[1], time_dim=inputs["time_embed"].shape[0],
            prototypes=PrototypeBank(1, inputs["spatial"].shape[1])).double()
        with torch.no_grad():
            inc = single.assignment(inputs["h_prev"], _ctx(inputs))
            if not torch.equal(inc.weights, torch.ones_like(inc.weights)):
                return False, "single-prototype memberships are not exactly one"
            n = inputs["x"].shape[0]
            embedded = inputs["x"] @ single.input_embed
            edge = (embedded.sum(dim=0, keepdim=True) @ single.edge_weight) / n
            hyper = torch.relu(edge).expand(n, -1)
            node_repr, _ = single.blend_node_state(inputs["h_prev"], _ctx(inputs))
            closed = node_adaptive_output(hyper, embedded, node_repr, single.pool)
            out = single(inputs["x"], inputs["h_prev"], _ctx(inputs))
        worst = max(worst, float((out - closed).abs().max()))
    return worst <= 1e-6, f"max |closed-form err| {worst:.2e}"


def _double_conv_instance(seed: int):
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    conv = HypergraphConv(in_dim=2, state_dim=3, hidden_dim=3, out_dim=3,
                          node_dim=2, time_dim=2,
                          prototypes=PrototypeBank(2, 2)).double()
    inputs = {
        "x": torch.as_tensor(rng.standard_normal((4, 2))),
        "h_prev": torch.as_tensor(rng.standard_normal((4, 3))),
        "spatial": torch.nn.Parameter(torch.as_tensor(rng.standard_normal((4, 2)))),
        "time_embed": torch.nn.Parameter(torch.as_tensor(rng.standard_normal(2))),
    }
    return conv, inputs


def check_grad_linear(tol: float = 1e-8):
    """A bias-free linear map must pass at near machine precision."""
    torch.manual_seed(0)
    weight = torch.nn.Parameter(torch.randn(5, 4, dtype=torch.float64))
    x = torch.randn(7, 5, dtype=torch.float64)
    report = grad_check(lambda: x @ weight, [("weight", weight)], tol=tol)
    return report.passed, f"max rel err {report.max_rel_error:.2e} (tol {tol:.0e})"


def check_grad_conv(tol: float = 1e-4):
    conv, inputs = _double_conv_instance(seed=11)
    ctx = _ctx(inputs)
    params = list(conv.named_parameters()) + [
        ("spatial", inputs["spatial"]), ("time_embed", inputs["time_embed"])]
    report = grad_check(lambda: conv(inputs["x"], inputs["h_prev"], ctx), params, tol=tol)
    return report.passed, (f"max rel err {report.max_rel_error:.2e} "
                           f"at {report.worst_param} (tol {tol:.0e})")


def check_grad_gru(tol: float = 1e-4):
    torch.manual_seed(12)
    rng = np.random.default_rng(12)
    cell = HypergraphGRUCell(in_dim=2, hidden_dim=3, node_dim=2, time_dim=2,
                             num_prototypes=2).double()
    x = torch.as_tensor(rng.standard_normal((4, 2)))
    h_prev = torch.as_tensor(rng.standard_normal((4, 3)))
    ctx = StepContext(torch.as_tensor(rng.standard_normal(2)),
                      torch.as_tensor(rng.standard_normal((4, 2))))
    report = grad_check(lambda: cell(x, h_prev, ctx), cell.named_parameters(), tol=tol)
    return report.passed, (f"max rel err {report.max_rel_error:.2e} "
                           f"at {report.worst_param} (tol {tol:.0e})")


def check_grad_attention(tol: float = 1e-4):
    torch.manual_seed(13)
    rng = np.random.default_rng(13)
    tqa = TemporalQueryAttention(4, 3, head_count=2).double()
    future_time = torch.as_tensor(rng.standard_normal((1, 2, 3)))
    past_time = torch.as_tensor(rng.standard_normal((1, 3, 3)))
    states = torch.as_tensor(rng.standard_normal((1, 3, 2, 4)))
    report = grad_check(lambda: tqa(future_time, past_time, states),
                        tqa.named_parameters(), tol=tol)
    return report.passed, (f"max rel err {report.max_rel_error:.2e} "
                           f"at {report.worst_param} (tol {tol:.0e})")


def check_grad_model(tol: float = 1e-4):
    torch.manual_seed(14)
    cfg = tiny_model_config()
    model = HypergraphForecaster(cfg).double()
    batch = random_batch(cfg, batch=1, seed=14)
    x = torch.as_tensor(batch["x"], dtype=torch.float64)

    def fn():
        return model(x, batch["tod_past"], batch["dow_past"],
                     batch["tod_future"], batch["dow_future"])

    report = grad_check(fn, model.named_parameters(), tol=tol)
    return report.passed, (f"max rel err {report.max_rel_error:.2e} "
                           f"at {report.worst_param} (tol {tol:.0e})")


def check_metric_fixtures(random_fixtures: int = 1000, seed: int = 15):
    """Hand-computed metric values plus the RMSE >= MAE ordering."""
    report = compute_metrics([0.0, 0.0, 0.0, 0.0], [1.0, 2.0, 3.0, 4.0])
    if abs(report.mae - 2.5) > 1e-12:
        return False, f"MAE fixture: expected 2.5, got {report.mae}"
    report = compute_metrics([13.0, 24.0], [10.0, 20.0])
    if abs(report.rmse - np.sqrt(12.5)) > 1e-12:
        return False, f"RMSE fixture: expected sqrt(12.5), got {report.rmse}"
    report = compute_metrics([11.0, 18.0], [10.0, 20.0])
    if abs(report.mape - 10.0) > 1e-12:
        return False, f"MAPE fixture: expected 10.0, got {report.mape}"
    rng = np.random.default_rng(seed)
    for _ in range(random_fixtures):
        pred = rng.standard_normal(20) * 10
        target = rng.standard_normal(20) * 10 + 20
        rep = compute_metrics(pred, target)
        if rep.rmse < rep.mae - 1e-12:
            return False, f"RMSE {rep.rmse} < MAE {rep.mae}"
    return True, f"3 exact fixtures, RMSE >= MAE on {random_fixtures} random draws"


CHECKS: list[tuple[str, Callable]] = [
    ("oracle_stages", check_stage_oracles),
    ("oracle_conv", check_conv_oracle),
    ("oracle_gru_step", check_gru_oracle),
    ("oracle_attention", check_attention_oracle),
    ("invariant_incidence", check_incidence_invariants),
    ("invariant_attention_rows", check_attention_rows),
    ("invariant_residual_sum", check_residual_sum),
    ("invariant_horizon_slots", check_horizon_independence),
    ("invariant_permutation", check_permutation_equivariance),
    ("invariant_single_prototype", check_single_prototype),
    ("grad_linear", check_grad_linear),
    ("grad_conv", check_grad_conv),
    ("grad_gru_step", check_grad_gru),
    ("grad_attention", check_grad_attention),
    ("grad_full_model", check_grad_model),
    ("metric_fixtures", check_metric_fixtures),
]


def run_checks(names: list[str] | None = None) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        if names is not None and name not in names:
            continue
        passed, detail = fn()
        results.append(CheckResult(name=name, passed=passed, detail=detail))
    return results
