"""Command-line entry points: generate | train | sample | eval | verify | ablate.

Every command is a pure function of (config, seed, input files): outputs are
reproduced byte-for-byte under the same inputs. Exit codes: 0 success,
1 check or validation failure, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np

from .config import ConfigError, RunConfig, config_from_dict, load_config
from .estimators import CatFlowGraphGenerator
from .graphs import (
    gen_community_small,
    gen_grid,
    load_graphs,
    save_graphs,
)
from .metrics import (
    clustering_hist,
    degree_hist,
    mmd_emd_gaussian,
    orbit_counts,
    toy_validity,
    uniqueness,
    canonical_form,
    VALIDITY_RULES,
)
from .models import GraphMarginalModel, MlpMarginalModel, ModelConfig
from .optim import AdamW
from .rng import generator
from .sampling import IntegratorConfig, batch_sample_graphs, batch_sample_table
from .spaces import CategoricalSpace
from .training import (
    TrainSettings,
    TrainingDiverged,
    graph_batch_loss,
    model_from_checkpoint,
    run_training,
    table_batch_loss,
)
from .verify import CHECK_NAMES, run_all_checks

GENERATORS = ("community_small", "grid")


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, command, config_dict, seed, inputs, outputs, metrics=None,
                    started=None):
    manifest = {
        "command": command,
        "config": config_dict,
        "seed": seed,
        "inputs": {p: _sha256(p) for p in inputs if os.path.exists(p)},
        "outputs": {p: _sha256(p) for p in outputs if os.path.exists(p)},
        "metrics": metrics or {},
        "started_at": started,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    path = os.path.join(out_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def _load_run_config(args) -> RunConfig:
    if not getattr(args, "config", None):
        return RunConfig()
    if not os.path.exists(args.config):
        raise CliError(f"config file not found: {args.config}", code=2)
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "out", None):
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    return cfg


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _generate_graphs(cfg: RunConfig, seed: int):
    ds = cfg.dataset
    rng = generator(seed)
    if ds.kind == "community_small":
        make = lambda n: gen_community_small(
            n,
            rng,
            community_size_range=tuple(ds.community_size_range),
            intra_p=ds.intra_p,
            inter_frac=ds.inter_frac,
        )
    elif ds.kind == "grid":
        make = lambda n: gen_grid(n, rng, side_range=tuple(ds.grid_side_range))
    else:
        raise CliError(
            f"unknown generator {ds.kind!r}; valid generators: {', '.join(GENERATORS)}"
        )
    train = make(ds.n_graphs)
    heldout = make(ds.n_heldout) if ds.n_heldout else []
    return train, heldout


def cmd_generate(args) -> int:
    started = _now()
    cfg = _load_run_config(args)
    out_dir = cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    train, heldout = _generate_graphs(cfg, cfg.seed)
    train_path = cfg.dataset.path or os.path.join(out_dir, "train.jsonl")
    save_graphs(train_path, train)
    outputs = [train_path]
    if heldout:
        held_path = cfg.dataset.heldout_path or os.path.join(out_dir, "heldout.jsonl")
        save_graphs(held_path, heldout)
        outputs.append(held_path)
    _write_manifest(out_dir, "generate", cfg.to_dict(), cfg.seed, [], outputs, started=started)
    print(f"wrote {len(train)} graphs to {train_path}")
    return 0


def _build_model(cfg: RunConfig, k_node=None, k_edge_classes=None):
    m = cfg.model
    if m.type == "graph":
        return GraphMarginalModel(
            ModelConfig(
                n_layers=m.n_layers,
                hidden_node=m.hidden_node,
                hidden_edge=m.hidden_edge,
                hidden_global=m.hidden_global,
                n_heads=m.n_heads,
                time_embedding_dim=m.time_embedding_dim,
            ),
            k_node=k_node,
            k_edge_classes=k_edge_classes,
            objective=cfg.objective,
            seed=cfg.seed,
        )
    space = CategoricalSpace(tuple(cfg.dataset.space_K))
    return MlpMarginalModel(
        space,
        hidden_dim=m.hidden_dim,
        n_hidden=m.n_hidden,
        time_embedding_dim=m.time_embedding_dim,
        objective=cfg.objective,
        seed=cfg.seed,
    )


def cmd_train(args) -> int:
    started = _now()
    cfg = _load_run_config(args)
    if args.steps is not None:
        cfg = dataclasses.replace(
            cfg, schedule=dataclasses.replace(cfg.schedule, total_steps=args.steps)
        )
    out_dir = cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    inputs = []

    start_step = 0
    optimizer = ema = None
    model = None
    if args.checkpoint:
        if not os.path.exists(args.checkpoint):
            raise CliError(f"checkpoint not found: {args.checkpoint}", code=2)
        model, ema, header, arrays = model_from_checkpoint(args.checkpoint)
        start_step = header["step"]
        if not args.config and header["config"]:
            cfg = config_from_dict(header["config"])
            if args.steps is not None:
                cfg = dataclasses.replace(
                    cfg, schedule=dataclasses.replace(cfg.schedule, total_steps=args.steps)
                )
            if args.out:
                cfg = dataclasses.replace(cfg, out_dir=args.out)
            out_dir = cfg.out_dir
            os.makedirs(out_dir, exist_ok=True)
        optimizer = AdamW(
            model.parameters(), lr=cfg.optimizer.lr, weight_decay=cfg.optimizer.weight_decay
        )
        optimizer.load_state_arrays(arrays, step_count=start_step)
        inputs.append(args.checkpoint)

    if cfg.model.type == "graph":
        path = cfg.dataset.path
        if not path:
            raise CliError("config.dataset.path is required to train a graph model")
        if not os.path.exists(path):
            raise CliError(f"dataset file not found: {path}", code=2)
        graphs = load_graphs(path)
        inputs.append(path)
        if model is None:
            model = _build_model(cfg, graphs[0].k_node, graphs[0].k_edge_classes)
        sizes: dict[int, int] = {}
        for g in graphs:
            sizes[g.n_nodes] = sizes.get(g.n_nodes, 0) + 1
        extra_meta = {"size_histogram": {str(k): v for k, v in sorted(sizes.items())}}
        loss_step = lambda rng: graph_batch_loss(model, graphs, rng, cfg.training.batch_size)
    else:
        if cfg.dataset.kind != "table" or cfg.dataset.probs is None:
            raise CliError("mlp training needs dataset.kind='table' with a probs table")
        if model is None:
            model = _build_model(cfg)
        probs = np.asarray(cfg.dataset.probs, dtype=np.float64)
        if probs.shape != tuple(model.space.K):
            raise CliError(
                f"probs shape {probs.shape} does not match space {tuple(model.space.K)}"
            )
        flat = probs.reshape(-1) / probs.sum()
        extra_meta = {}
        loss_step = lambda rng: table_batch_loss(model, flat, rng, cfg.training.batch_size)

    settings = TrainSettings(
        objective=cfg.objective,
        total_steps=cfg.schedule.total_steps,
        batch_size=cfg.training.batch_size,
        lr=cfg.optimizer.lr,
        weight_decay=cfg.optimizer.weight_decay,
        ema_decay=cfg.optimizer.ema_decay,
        seed=cfg.seed,
        checkpoint_every=cfg.training.checkpoint_every,
        log_every=cfg.training.log_every,
        early_stop_plateau=cfg.training.early_stop_plateau,
    )
    if model.objective != cfg.objective:
        raise CliError(
            f"checkpoint objective {model.objective!r} != config objective {cfg.objective!r}"
        )
    try:
        out = run_training(
            model,
            loss_step,
            settings,
            out_dir=out_dir,
            config_snapshot=cfg.to_dict(),
            extra_meta=extra_meta,
            start_step=start_step,
            optimizer=optimizer,
            ema=ema,
        )
    except TrainingDiverged as err:
        raise CliError(str(err))
    outputs = [out.final_path, os.path.join(out_dir, "loss.csv")]
    _write_manifest(
        out_dir,
        "train",
        cfg.to_dict(),
        cfg.seed,
        inputs,
        outputs,
        metrics={"final_loss": out.history[-1]["loss"] if out.history else None},
        started=started,
    )
    print(f"trained to step {out.final_step}; checkpoint at {out.final_path}")
    return 0


def _integrator_from(cfg: RunConfig, args) -> IntegratorConfig:
    sect = cfg.integrator
    return IntegratorConfig(
        n_steps=args.steps if getattr(args, "steps", None) else sect.n_steps,
        scheme=args.scheme if getattr(args, "scheme", None) else sect.scheme,
        eps_denom=sect.eps_denom,
        g_const=sect.g_const,
    )


def cmd_sample(args) -> int:
    started = _now()
    cfg = _load_run_config(args)
    if not os.path.exists(args.checkpoint):
        raise CliError(f"checkpoint not found: {args.checkpoint}", code=2)
    if args.n < 1:
        raise CliError("--n must be >= 1")
    model, ema, header, _ = model_from_checkpoint(args.checkpoint)
    out_dir = args.out or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    icfg = _integrator_from(cfg, args)
    seed = args.seed if args.seed is not None else cfg.seed
    ema.swap()  # sample with the EMA weights
    try:
        if header["meta"]["kind"] == "graph":
            hist = {int(k): v for k, v in header["meta"]["size_histogram"].items()}
            samples = batch_sample_graphs(model, args.n, hist, icfg, seed)
            out_path = os.path.join(out_dir, "samples.jsonl")
            save_graphs(out_path, samples)
        else:
            field_mode = "raw" if model.objective == "fm_baseline" else "marginal"
            labels = batch_sample_table(
                model.marginal_fn(), model.space, args.n, icfg, seed, field_mode=field_mode
            )
            out_path = os.path.join(out_dir, "samples_labels.jsonl")
            with open(out_path, "w", encoding="utf-8") as fh:
                for row in labels:
                    fh.write(json.dumps({"labels": [int(v) for v in row]}) + "\n")
    finally:
        ema.swap()
    _write_manifest(
        out_dir,
        "sample",
        {"run": cfg.to_dict(), "integrator": icfg.to_dict(), "n": args.n,
         "checkpoint_step": header["step"]},
        seed,
        [args.checkpoint],
        [out_path],
        started=started,
    )
    print(f"wrote {args.n} samples to {out_path}")
    return 0


def cmd_eval(args) -> int:
    started = _now()
    for path in (args.ref, args.samples):
        if not os.path.exists(path):
            raise CliError(f"input file not found: {path}", code=2)
    ref = load_graphs(args.ref)
    gen = load_graphs(args.samples)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for name, stat in (
        ("degree", degree_hist),
        ("clustering", clustering_hist),
        ("orbit", orbit_counts),
    ):
        rep = mmd_emd_gaussian([stat(g) for g in ref], [stat(g) for g in gen], sigma=args.sigma)
        rows.append(
            {
                "metric": name,
                "value": rep.value,
                "kernel_sigma": rep.kernel_sigma,
                "n_ref": rep.n_ref,
                "n_gen": rep.n_gen,
                "estimator": rep.estimator,
            }
        )
    rows.append(
        {
            "metric": "uniqueness",
            "value": uniqueness(gen),
            "kernel_sigma": None,
            "n_ref": len(ref),
            "n_gen": len(gen),
            "estimator": "exact<=12 nodes",
        }
    )
    if args.rule:
        rows.append(
            {
                "metric": f"validity[{args.rule}]",
                "value": toy_validity(gen, args.rule),
                "kernel_sigma": None,
                "n_ref": len(ref),
                "n_gen": len(gen),
                "estimator": "predicate",
            }
        )
    report_jsonl = os.path.join(out_dir, "report.jsonl")
    with open(report_jsonl, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    report_csv = os.path.join(out_dir, "report.csv")
    with open(report_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        print(f"{row['metric']}: {row['value']:.6g}")
    _write_manifest(
        out_dir,
        "eval",
        {"sigma": args.sigma, "rule": args.rule},
        None,
        [args.ref, args.samples],
        [report_jsonl, report_csv],
        metrics={r["metric"]: r["value"] for r in rows},
        started=started,
    )
    return 0


def cmd_verify(args) -> int:
    results = run_all_checks(seed=args.seed or 0, inject_fault=args.inject_fault)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name}: residual {r.residual:.3e} (threshold {r.threshold:.1e})")
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(r.name for r in failed)}")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def cmd_ablate(args) -> int:
    started = _now()
    cfg = _load_run_config(args)
    ab = cfg.ablation
    out_dir = args.out or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    if ab.validity_rule not in VALIDITY_RULES:
        raise CliError(f"unknown validity rule {ab.validity_rule!r}")
    train, _ = _generate_graphs(cfg, cfg.seed)
    rows = []
    for frac in ab.data_fractions:
        n_use = max(1, int(round(frac * len(train))))
        subset = train[:n_use]
        for layers in ab.layer_counts:
            for objective in ab.objectives:
                est = CatFlowGraphGenerator(
                    objective=objective,
                    n_layers=int(layers),
                    hidden_node=cfg.model.hidden_node,
                    hidden_edge=cfg.model.hidden_edge,
                    hidden_global=cfg.model.hidden_global,
                    n_heads=cfg.model.n_heads,
                    time_embedding_dim=cfg.model.time_embedding_dim,
                    lr=cfg.optimizer.lr,
                    weight_decay=cfg.optimizer.weight_decay,
                    ema_decay=cfg.optimizer.ema_decay,
                    batch_size=ab.batch_size,
                    n_steps=ab.steps_per_cell,
                    integrator_steps=ab.integrator_steps,
                    eps_denom=cfg.integrator.eps_denom,
                    seed=cfg.seed,
                )
                est.fit(subset)
                samples = est.sample(ab.n_eval_samples, seed=cfg.seed + 1)
                pred = VALIDITY_RULES[ab.validity_rule]
                distinct_valid = {
                    canonical_form(g) for g in samples if pred(g)
                }
                score = len(distinct_valid) / len(samples)
                rows.append(
                    {
                        "data_fraction": frac,
                        "n_layers": int(layers),
                        "objective": objective,
                        "score": score,
                    }
                )
                print(
                    f"fraction {frac} layers {layers} objective {objective}: score {score:.3f}",
                    flush=True,
                )
    out_path = os.path.join(out_dir, "ablation.csv")
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["data_fraction", "n_layers", "objective", "score"])
        writer.writeheader()
        writer.writerows(rows)
    _write_manifest(
        out_dir, "ablate", cfg.to_dict(), cfg.seed, [], [out_path], started=started
    )
    print(f"wrote {len(rows)} ablation rows to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catflow",
        description="Categorical flow matching: dataset generation, training, "
        "sampling, evaluation, verification, and ablations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory override")

    p = sub.add_parser("generate", help="write synthetic dataset files")
    common(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="train a model and write checkpoints")
    common(p)
    p.add_argument("--steps", type=int, default=None, help="override total steps")
    p.add_argument("--checkpoint", default=None, help="resume from this checkpoint")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sample", help="integrate the learned field and decode samples")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--steps", type=int, default=None, help="integration steps override")
    p.add_argument("--scheme", default=None, choices=["euler", "midpoint", "rk4"])
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("eval", help="compare samples against a reference set")
    p.add_argument("--ref", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--sigma", type=float, default=1.0, help="MMD kernel bandwidth")
    p.add_argument("--rule", default=None, choices=sorted(VALIDITY_RULES))
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("verify", help="run the oracle-backed consistency checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", default=None, choices=CHECK_NAMES, help="force one check to fail (harness test)")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("ablate", help="data-fraction x depth x objective sweep")
    common(p)
    p.set_defaults(fn=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
