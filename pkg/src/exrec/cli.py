"""Experiment driver: one subcommand per pipeline stage.

Stages communicate through files in the output directory, every stage writes
its fully resolved config next to its outputs, and all randomness descends
from a single global seed hashed with the stage name. Exit codes: 0 success,
2 configuration error, 3 data error, 4 missing stage dependency.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import data as data_mod
from .config import RunConfig, derive_seed, echo_config, load_config
from .core import Session
from .env import make_task
from .errors import ConfigError, EmptyDatasetError, StageDependencyError
from .finetune import FinetuneConfig, build_triples, finetune
from .metrics import (
    explanation_metrics,
    next_item_cases,
    random_explanations,
    rec_report,
)
from .oracle import solve_exact
from .policy import (
    ReinforceExplainer,
    load_policy,
    save_policy,
)
from .recommenders import (
    MarkovCountRecommender,
    NeuralEmbeddingRecommender,
    load_recommender,
    save_recommender,
)

SPLIT_FILES = {
    "train": "sessions_train.jsonl",
    "valid": "sessions_valid.jsonl",
    "test": "sessions_test.jsonl",
}


def _require(path: str, producer: str) -> str:
    if not os.path.exists(path):
        raise StageDependencyError(f"missing {path}; run the {producer} stage first")
    return path


def _rec_path(out: str, cfg: RunConfig) -> str:
    return os.path.join(out, f"rec_{cfg.recommender}.ckpt")


def _load_sessions(out: str, which: str) -> list[Session]:
    if which == "all":
        sessions: list[Session] = []
        for name in ("train", "valid", "test"):
            path = _require(os.path.join(out, SPLIT_FILES[name]), "prepare")
            sessions.extend(data_mod.read_session_store(path)[0])
        return sessions
    path = _require(os.path.join(out, SPLIT_FILES[which]), "prepare")
    return data_mod.read_session_store(path)[0]


def _write_csv(path: str, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def cmd_prepare(cfg: RunConfig, out: str) -> None:
    seed = derive_seed(cfg.seed, "prepare")
    if cfg.data_source == "synthetic":
        spec = data_mod.SynthSpec(
            catalog_size=cfg.synth_catalog_size,
            n_sessions=cfg.synth_sessions,
            min_len=cfg.synth_min_len,
            max_len=cfg.synth_max_len,
            p_trigger=cfg.synth_p_trigger,
            noise=cfg.synth_noise,
            seed=seed,
        )
        ds = data_mod.generate_synthetic(spec)
        if ds.trigger_positions is not None:
            with open(os.path.join(out, "trigger_positions.json"), "w", encoding="utf-8") as fh:
                json.dump(ds.trigger_positions, fh, sort_keys=True)
    else:
        if not os.path.exists(cfg.input_path):
            raise FileNotFoundError(f"input log not found: {cfg.input_path}")
        interactions = data_mod.parse_interactions_tsv(cfg.input_path)
        raw = data_mod.sessionize(interactions)
        filtered = data_mod.filter_sessions(
            raw,
            min_len=cfg.min_session_len,
            min_item_freq=cfg.min_item_freq,
            max_item_freq=cfg.max_item_freq,
        )
        ds = data_mod.split(
            filtered.sessions,
            scheme=cfg.split_scheme,
            seed=seed,
            users=filtered.users,
            catalog=filtered.catalog,
        )
    for name, sessions in (("train", ds.train), ("valid", ds.valid), ("test", ds.test)):
        data_mod.write_session_store(os.path.join(out, SPLIT_FILES[name]), sessions, ds.users)
    data_mod.write_catalog(os.path.join(out, "catalog.tsv"), ds.catalog)
    with open(os.path.join(out, "prepare_stats.json"), "w", encoding="utf-8") as fh:
        json.dump(ds.stats.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    s = ds.stats
    print(
        f"sessions: train={s.n_train} valid={s.n_valid} test={s.n_test} "
        f"items={s.item_count} mean_train_length={s.mean_train_length:.2f}"
    )


def cmd_train_rec(cfg: RunConfig, out: str) -> None:
    catalog = data_mod.read_catalog(_require(os.path.join(out, "catalog.tsv"), "prepare"))
    train = _load_sessions(out, "train")
    if cfg.recommender == "markov":
        rec = MarkovCountRecommender(catalog, alpha=cfg.markov_alpha).fit(train)
    else:
        rec = NeuralEmbeddingRecommender(
            catalog,
            embed_dim=cfg.embed_dim,
            recency_decay=cfg.recency_decay,
            learning_rate=cfg.rec_learning_rate,
            epochs=cfg.rec_epochs,
            batch_size=cfg.rec_batch_size,
            seed=derive_seed(cfg.seed, "train-rec"),
        ).fit(train)
    save_recommender(rec, _rec_path(out, cfg))
    print(f"saved {_rec_path(out, cfg)}")


def cmd_train_explainer(cfg: RunConfig, out: str) -> None:
    catalog = data_mod.read_catalog(_require(os.path.join(out, "catalog.tsv"), "prepare"))
    rec = load_recommender(_require(_rec_path(out, cfg), "train-rec"), catalog)
    train = _load_sessions(out, "train")
    explainer = ReinforceExplainer(
        rec,
        k=cfg.k,
        hidden_dim=cfg.policy_hidden_dim,
        gamma=cfg.gamma,
        learning_rate=cfg.policy_learning_rate,
        max_episodes=cfg.max_episodes,
        batch_size=cfg.policy_batch_size,
        reward_window=cfg.reward_window,
        reward_tol=cfg.reward_tol,
        param_tol=cfg.param_tol,
        baseline_enabled=cfg.baseline_enabled,
        seed=derive_seed(cfg.seed, "train-explainer"),
    ).fit(train)
    save_policy(explainer.params_, rec.embed_dim, os.path.join(out, "policy.ckpt"))
    _write_csv(
        os.path.join(out, "training_log.csv"),
        ["episode", "mean_reward", "r_fe_rate", "r_cfe_rate", "mean_complexity", "loss"],
        [
            {
                "episode": r.episode,
                "mean_reward": repr(r.mean_reward),
                "r_fe_rate": repr(r.r_fe_rate),
                "r_cfe_rate": repr(r.r_cfe_rate),
                "mean_complexity": repr(r.mean_complexity),
                "loss": repr(r.loss),
            }
            for r in explainer.log_
        ],
    )
    final = explainer.log_[-1] if explainer.log_ else None
    if final:
        print(
            f"trained {final.episode} episodes; window reward {final.mean_reward:.4f} "
            f"fe={final.r_fe_rate:.2f} cfe={final.r_cfe_rate:.2f}"
        )


def cmd_explain(cfg: RunConfig, out: str, which: str = "all") -> None:
    catalog = data_mod.read_catalog(_require(os.path.join(out, "catalog.tsv"), "prepare"))
    rec = load_recommender(_require(_rec_path(out, cfg), "train-rec"), catalog)
    params, _ = load_policy(_require(os.path.join(out, "policy.ckpt"), "train-explainer"))
    sessions = [s for s in _load_sessions(out, which) if len(s) >= 2]
    explainer = ReinforceExplainer(rec, k=cfg.k)
    explainer.params_ = params
    records = explainer.explain_all(sessions, workers=cfg.workers)
    data_mod.write_explanations(os.path.join(out, "explanations.jsonl"), records)
    met = sum(1 for r in records if not r.conditions_unmet)
    print(f"explained {len(records)} sessions; both conditions met on {met}")


def cmd_oracle(cfg: RunConfig, out: str, which: str = "all") -> None:
    catalog = data_mod.read_catalog(_require(os.path.join(out, "catalog.tsv"), "prepare"))
    rec = load_recommender(_require(_rec_path(out, cfg), "train-rec"), catalog)
    sessions = [s for s in _load_sessions(out, which) if len(s) >= 2]
    rl_records = {}
    expl_path = os.path.join(out, "explanations.jsonl")
    if os.path.exists(expl_path):
        rl_records = {r.session_id: r for r in data_mod.read_explanations(expl_path)}
    rows = []
    for session in sessions:
        task = make_task(session, rec, cfg.k)
        result = solve_exact(task, max_len=cfg.oracle_max_len, workers=cfg.workers)
        row = {
            "session_id": session.session_id,
            "feasible": int(result.feasible),
            "optimal_complexity": "" if result.optimal_complexity is None else result.optimal_complexity,
            "rl_complexity": "",
            "rl_feasible": "",
            "gap": "",
        }
        rl = rl_records.get(session.session_id)
        if rl is not None:
            row["rl_complexity"] = rl.complexity
            row["rl_feasible"] = int(not rl.conditions_unmet)
            if result.feasible and not rl.conditions_unmet:
                row["gap"] = rl.complexity - result.optimal_complexity
        rows.append(row)
    _write_csv(
        os.path.join(out, "oracle.csv"),
        ["session_id", "feasible", "optimal_complexity", "rl_complexity", "rl_feasible", "gap"],
        rows,
    )
    feasible = sum(r["feasible"] for r in rows)
    print(f"oracle: {feasible}/{len(rows)} sessions feasible")


def cmd_eval(cfg: RunConfig, out: str, which: str = "all") -> None:
    catalog = data_mod.read_catalog(_require(os.path.join(out, "catalog.tsv"), "prepare"))
    rec = load_recommender(_require(_rec_path(out, cfg), "train-rec"), catalog)
    records = data_mod.read_explanations(
        _require(os.path.join(out, "explanations.jsonl"), "explain")
    )
    sessions = [s for s in _load_sessions(out, which) if len(s) >= 2]
    baseline = random_explanations(
        sessions,
        rec,
        cfg.k,
        keep_prob=cfg.keep_prob,
        rng=np.random.default_rng(derive_seed(cfg.seed, "random-baseline")),
    )
    expl_rows = []
    for method, recs in (("policy", records), ("random", baseline)):
        report = explanation_metrics(recs)
        expl_rows.append(
            {
                "dataset": cfg.dataset_name,
                "recommender": cfg.recommender,
                "method": method,
                "pn": repr(report.pn),
                "ps": repr(report.ps),
                "f_ns": repr(report.f_ns),
                "avg_len": repr(report.avg_len),
                "n_sessions": report.n_sessions,
            }
        )
    _write_csv(
        os.path.join(out, "explanation_report.csv"),
        ["dataset", "recommender", "method", "pn", "ps", "f_ns", "avg_len", "n_sessions"],
        expl_rows,
    )
    cases, _ = next_item_cases(_load_sessions(out, "test"))
    report = rec_report(cases, rec, cfg.report_ks)
    rec_rows = [
        {
            "dataset": cfg.dataset_name,
            "recommender": cfg.recommender,
            "method": "base",
            "k": k,
            "hr": repr(report.values[k]["hr"]),
            "ndcg": repr(report.values[k]["ndcg"]),
            "n_sessions": report.n_sessions,
        }
        for k in cfg.report_ks
    ]
    _write_csv(
        os.path.join(out, "rec_report.csv"),
        ["dataset", "recommender", "method", "k", "hr", "ndcg", "n_sessions"],
        rec_rows,
    )
    print(
        "eval: policy f_ns={} random f_ns={}".format(
            expl_rows[0]["f_ns"], expl_rows[1]["f_ns"]
        )
    )


def cmd_finetune(cfg: RunConfig, out: str) -> None:
    if cfg.recommender != "neural":
        raise ConfigError("finetune requires recommender=neural (markov is not trainable)")
    catalog = data_mod.read_catalog(_require(os.path.join(out, "catalog.tsv"), "prepare"))
    rec = load_recommender(_require(_rec_path(out, cfg), "train-rec"), catalog)
    records = data_mod.read_explanations(
        _require(os.path.join(out, "explanations.jsonl"), "explain")
    )
    train = _load_sessions(out, "train")
    test_cases, _ = next_item_cases(_load_sessions(out, "test"))
    before = rec_report(test_cases, rec, cfg.report_ks)
    triples, dropped = build_triples(records, train + _load_sessions(out, "valid") + _load_sessions(out, "test"))
    ft_config = FinetuneConfig(
        lambda_weight=cfg.lambda_weight,
        temperature=cfg.temperature,
        batch_size=cfg.finetune_batch_size,
        epochs=cfg.finetune_epochs,
        learning_rate=cfg.finetune_learning_rate,
        mode=cfg.ablation_mode,
        seed=derive_seed(cfg.seed, "finetune"),
    )
    rec, curves = finetune(rec, triples, train, ft_config)
    after = rec_report(test_cases, rec, cfg.report_ks)
    save_recommender(rec, os.path.join(out, "rec_neural_finetuned.ckpt"))
    _write_csv(
        os.path.join(out, "loss_curves.csv"),
        ["epoch", "l_rec", "l_c", "total"],
        [
            {"epoch": c.epoch, "l_rec": repr(c.l_rec), "l_c": repr(c.l_c), "total": repr(c.total)}
            for c in curves
        ],
    )
    rows = []
    for method, report in (("base", before), ("finetuned", after)):
        for k in cfg.report_ks:
            rows.append(
                {
                    "dataset": cfg.dataset_name,
                    "recommender": cfg.recommender,
                    "method": method,
                    "k": k,
                    "hr": repr(report.values[k]["hr"]),
                    "ndcg": repr(report.values[k]["ndcg"]),
                    "n_sessions": report.n_sessions,
                }
            )
    _write_csv(
        os.path.join(out, "finetune_compare.csv"),
        ["dataset", "recommender", "method", "k", "hr", "ndcg", "n_sessions"],
        rows,
    )
    print(
        f"finetune: dropped {dropped} empty-positive triples; "
        f"hr@{cfg.k} {before.values.get(cfg.k, {}).get('hr')} -> {after.values.get(cfg.k, {}).get('hr')}"
    )


def cmd_report(cfg: RunConfig, out: str) -> None:
    rows: list[dict] = []

    def add(dataset, recommender, method, metric, value):
        rows.append(
            {
                "dataset": dataset,
                "recommender": recommender,
                "method": method,
                "metric": metric,
                "value": value,
            }
        )

    expl_path = os.path.join(out, "explanation_report.csv")
    if os.path.exists(expl_path):
        with open(expl_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                for metric in ("pn", "ps", "f_ns", "avg_len"):
                    add(row["dataset"], row["recommender"], row["method"], metric, row[metric])
    for name in ("rec_report.csv", "finetune_compare.csv"):
        path = os.path.join(out, name)
        if not os.path.exists(path):
            continue
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                for metric in ("hr", "ndcg"):
                    add(
                        row["dataset"],
                        row["recommender"],
                        row["method"],
                        f"{metric}@{row['k']}",
                        row[metric],
                    )
    if not rows:
        raise StageDependencyError(f"no metric files in {out}; run eval or finetune first")
    rows.sort(key=lambda r: (r["dataset"], r["recommender"], r["method"], r["metric"]))
    _write_csv(
        os.path.join(out, "report.csv"),
        ["dataset", "recommender", "method", "metric", "value"],
        rows,
    )
    print(f"report: {len(rows)} metric rows")


COMMANDS = {
    "prepare": cmd_prepare,
    "train-rec": cmd_train_rec,
    "train-explainer": cmd_train_explainer,
    "explain": cmd_explain,
    "oracle": cmd_oracle,
    "eval": cmd_eval,
    "finetune": cmd_finetune,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exrec",
        description="Explanation and fine-tuning pipeline for session recommenders",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="global seed override")
        p.add_argument("--workers", type=int, default=None, help="parallel worker bound")
        p.add_argument("--out", default="out", help="artifact directory")
        if name in ("explain", "oracle", "eval"):
            p.add_argument(
                "--split",
                default="all",
                choices=["all", "train", "valid", "test"],
                help="which session store to process",
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config, overrides={"seed": args.seed, "workers": args.workers}
        )
        os.makedirs(args.out, exist_ok=True)
        echo_config(cfg, os.path.join(args.out, f"{args.command}_config.json"))
        if args.command in ("explain", "oracle", "eval"):
            COMMANDS[args.command](cfg, args.out, args.split)
        else:
            COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, EmptyDatasetError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except StageDependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
