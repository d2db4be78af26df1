"""Training loops shared by the estimators and the CLI.

Each step derives its own RNG stream from (seed, step), so runs are
bit-reproducible and resuming from a checkpoint replays the remaining steps
exactly as the uninterrupted run would have. A non-finite loss aborts without
writing, leaving the last periodic checkpoint as the most recent good state.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .graphs import Graph, encode
from .models import GraphMarginalModel, MlpMarginalModel, ModelConfig
from .objectives import (
    PROB_FLOOR,
    LossValue,
    catflow_loss,
    fm_baseline_loss,
    gaussian_vfm_loss,
)
from .optim import AdamW, EmaState, cosine_lr
from .rng import step_generator
from .spaces import CategoricalSpace

__all__ = [
    "TrainSettings",
    "TrainOutput",
    "TrainingDiverged",
    "table_batch_loss",
    "graph_batch_loss",
    "run_training",
    "model_from_checkpoint",
]

# the velocity-regression target diverges at t = 1, so only that objective
# truncates the time distribution
FM_T_CAP = 1e-3


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainSettings:
    objective: str = "catflow"
    total_steps: int = 20_000
    batch_size: int = 128
    lr: float = 2e-4
    weight_decay: float = 1e-12
    ema_decay: float = 0.999
    seed: int = 0
    checkpoint_every: int = 0  # 0: only the final checkpoint
    log_every: int = 0  # 0: silent
    early_stop_plateau: int = 0  # steps without a new loss minimum; 0 disables


@dataclass
class TrainOutput:
    model: object
    optimizer: AdamW
    ema: EmaState
    history: list[dict] = field(repr=False)
    final_step: int = 0
    final_path: str | None = None


def _sample_t(rng: np.random.Generator, n: int, objective: str) -> np.ndarray:
    hi = 1.0 - FM_T_CAP if objective == "fm_baseline" else 1.0
    return rng.uniform(0.0, hi, size=n)


def table_batch_loss(model: MlpMarginalModel, probs_flat: np.ndarray, rng, batch_size: int):
    """One batch of the flat-space objective; x1 drawn from the joint table."""
    space = model.space
    idx = rng.choice(probs_flat.size, size=batch_size, p=probs_flat)
    labels = np.stack(np.unravel_index(idx, tuple(space.K)), axis=-1)
    x1 = space.onehot(labels)
    t = _sample_t(rng, batch_size, model.objective)
    x0 = rng.standard_normal(x1.shape)
    xt = t[:, None] * x1 + (1.0 - t)[:, None] * x0
    out = model.forward(xt, t)
    if model.objective == "catflow":
        loss = catflow_loss(out, x1)
    elif model.objective == "gaussian_vfm":
        loss = gaussian_vfm_loss(out, x1)
    else:
        loss = fm_baseline_loss(out, t, xt, x1)
    loss.t_mean = float(t.mean())
    return loss


def _pad_graph_batch(graphs: list[Graph], idx: np.ndarray):
    batch = [graphs[int(i)] for i in idx]
    n_max = max(g.n_nodes for g in batch)
    kv, ke = batch[0].k_node, batch[0].k_edge_classes
    B = len(batch)
    hn = np.zeros((B, n_max, kv))
    he = np.zeros((B, n_max, n_max, ke))
    mask = np.zeros((B, n_max))
    for b, g in enumerate(batch):
        oh = encode(g)
        n = g.n_nodes
        hn[b, :n] = oh.Hn
        he[b, :n, :n] = oh.He
        he[b, range(n), range(n)] = 0.0  # the diagonal is not a variable
        mask[b, :n] = 1.0
    return hn, he, mask


_TRIU_CACHE: dict[int, tuple] = {}


def _triu(n: int):
    if n not in _TRIU_CACHE:
        iu = np.triu_indices(n, k=1)
        upper = np.zeros((n, n))
        upper[iu] = 1.0
        _TRIU_CACHE[n] = (iu, upper)
    return _TRIU_CACHE[n]


def graph_batch_loss(model: GraphMarginalModel, graphs: list[Graph], rng, batch_size: int):
    """One batch of the graph objective over padded, masked one-hot states.

    Node variables and upper-triangle edge variables contribute; padded
    positions have zeroed targets, so they add nothing and get no gradient.
    """
    idx = rng.integers(0, len(graphs), size=batch_size)
    x1n, x1e, mask = _pad_graph_batch(graphs, idx)
    B, N = mask.shape
    t = _sample_t(rng, B, model.objective)
    x0n = rng.standard_normal(x1n.shape)
    iu, upper = _triu(N)
    z = rng.standard_normal((B, len(iu[0]), x1e.shape[-1]))
    x0e = np.zeros_like(x1e)
    x0e[:, iu[0], iu[1]] = z
    x0e[:, iu[1], iu[0]] = z
    t3 = t[:, None, None]
    t4 = t[:, None, None, None]
    xtn = t3 * x1n + (1.0 - t3) * x0n
    xte = t4 * x1e + (1.0 - t4) * x0e
    node_out, edge_out = model.forward(xtn, xte, t, mask=mask)

    node_m = mask[:, :, None]
    pair_m = (mask[:, :, None] * mask[:, None, :] * upper[None])[..., None]
    x1n_m = x1n * node_m
    x1e_m = x1e * pair_m
    if model.objective == "catflow":
        clamps = int(np.sum((node_out.data < PROB_FLOOR) & (x1n_m > 0)))
        clamps += int(np.sum((edge_out.data < PROB_FLOOR) & (x1e_m > 0)))
        ce = T.add(
            T.tsum(T.mul(T.log(T.maximum(node_out, PROB_FLOOR)), x1n_m)),
            T.tsum(T.mul(T.log(T.maximum(edge_out, PROB_FLOOR)), x1e_m)),
        )
        loss = LossValue(T.mul(ce, -1.0 / B), "catflow", clamps)
    elif model.objective == "gaussian_vfm":
        dn = T.sub(node_out, x1n)
        de = T.sub(edge_out, x1e)
        sq = T.add(
            T.tsum(T.mul(T.mul(dn, dn), node_m)),
            T.tsum(T.mul(T.mul(de, de), pair_m)),
        )
        loss = LossValue(T.mul(sq, 0.5 / B), "gaussian_vfm")
    else:
        un = (x1n - xtn) / (1.0 - t3)
        ue = (x1e - xte) / (1.0 - t4)
        dn = T.sub(node_out, un)
        de = T.sub(edge_out, ue)
        sq = T.add(
            T.tsum(T.mul(T.mul(dn, dn), node_m)),
            T.tsum(T.mul(T.mul(de, de), pair_m)),
        )
        loss = LossValue(T.mul(sq, 1.0 / B), "fm_baseline")
    loss.t_mean = float(t.mean())
    return loss


def run_training(
    model,
    loss_step,
    settings: TrainSettings,
    *,
    out_dir: str | None = None,
    config_snapshot: dict | None = None,
    extra_meta: dict | None = None,
    start_step: int = 0,
    optimizer: AdamW | None = None,
    ema: EmaState | None = None,
) -> TrainOutput:
    """Drive ``loss_step(rng) -> LossValue`` for the configured step budget."""
    params = model.parameters()
    opt = optimizer or AdamW(params, lr=settings.lr, weight_decay=settings.weight_decay)
    ema = ema or EmaState(params, decay=settings.ema_decay)
    history: list[dict] = []
    writer = None
    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_fh = open(os.path.join(out_dir, "loss.csv"), "w", newline="", encoding="utf-8")
        writer = csv.writer(log_fh)
        writer.writerow(["step", "t_mean", "loss", "lr", "clamp_count"])

    def checkpoint_arrays():
        arrays = {name: t.data for name, t in model.named_parameters().items()}
        arrays.update(opt.state_arrays())
        arrays.update(ema.state_arrays())
        return arrays

    def header(step):
        meta = model.meta()
        if extra_meta:
            meta.update(extra_meta)
        return {
            "config": config_snapshot or {},
            "seed": settings.seed,
            "step": step,
            "meta": meta,
        }

    final_path = None
    best = np.inf
    best_step = start_step
    steps_done = start_step
    # batches are tiny, so threaded BLAS only adds synchronization overhead
    limiter = threadpool_limits(limits=1, user_api="blas")
    try:
        for step in range(start_step, settings.total_steps):
            rng = step_generator(settings.seed, step)
            loss = loss_step(rng)
            value = loss.item()
            lr_now = cosine_lr(step, settings.total_steps, settings.lr)
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss at step {step}; last good checkpoint retained"
                )
            if value < best - 1e-4:
                best, best_step = value, step
            if settings.early_stop_plateau and step - best_step >= settings.early_stop_plateau:
                break
            T.backward(loss.value)
            opt.step(lr=lr_now)
            opt.zero_grad()
            ema.update()
            steps_done = step + 1
            row = {
                "step": step,
                "t_mean": getattr(loss, "t_mean", float("nan")),
                "loss": value,
                "lr": lr_now,
                "clamp_count": loss.clamp_count,
            }
            history.append(row)
            if writer is not None:
                writer.writerow(
                    [step, f"{row['t_mean']:.6f}", f"{value:.10f}", f"{lr_now:.6e}", loss.clamp_count]
                )
            if settings.log_every and step % settings.log_every == 0:
                print(f"step {step} loss {value:.5f} lr {lr_now:.2e}", flush=True)
            if (
                out_dir is not None
                and settings.checkpoint_every
                and (step + 1) % settings.checkpoint_every == 0
                and (step + 1) < settings.total_steps
            ):
                save_checkpoint(
                    os.path.join(out_dir, f"ckpt_{step + 1:08d}.ckpt"),
                    header(step + 1),
                    checkpoint_arrays(),
                )
        if out_dir is not None:
            final_path = os.path.join(out_dir, "final.ckpt")
            save_checkpoint(final_path, header(steps_done), checkpoint_arrays())
    finally:
        limiter.unregister()
        if log_fh is not None:
            log_fh.close()
    return TrainOutput(
        model=model,
        optimizer=opt,
        ema=ema,
        history=history,
        final_step=steps_done,
        final_path=final_path,
    )


def model_from_checkpoint(path):
    """Rebuild a model and its EMA shadow from a checkpoint file."""
    header, arrays = load_checkpoint(path)
    meta = header["meta"]
    if meta["kind"] == "graph":
        model = GraphMarginalModel(
            ModelConfig(**meta["model"]),
            k_node=meta["k_node"],
            k_edge_classes=meta["k_edge_classes"],
            objective=meta["objective"],
        )
    elif meta["kind"] == "table":
        model = MlpMarginalModel(
            CategoricalSpace(tuple(meta["space_K"])),
            objective=meta["objective"],
            **meta["model"],
        )
    else:
        raise ValueError(f"unknown model kind {meta['kind']!r}")
    model.load_arrays(arrays)
    ema = EmaState(model.parameters())
    ema.load_state_arrays(arrays)
    return model, ema, header, arrays
