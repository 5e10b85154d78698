"""Command-line entry points: data generation, mining, graph construction,
training, evaluation, explanation, prototype export, and serving."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import data as D
from .training import TrainConfig, fit


def _load_config(path: str | None) -> TrainConfig:
    if path is None:
        return TrainConfig()
    with open(path, encoding="utf-8") as fh:
        return TrainConfig.from_json(json.load(fh))


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_gen_data(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        spec = D.SyntheticSpec.from_json(json.load(fh))
    vocab, samples = D.generate_synthetic(spec)
    D.write_jsonl(args.out, (D.posting_to_raw(s, vocab) for s in samples))
    print(f"wrote {len(samples)} postings to {args.out}", file=sys.stderr)
    return 0


def cmd_mine(args) -> int:
    _, samples = D.load_dataset(args.data)
    pool = D.mine_frequent_sets(samples, args.min_support)
    out = pool.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=1)
        print(f"wrote {len(pool.sets)} frequent sets to {args.out}", file=sys.stderr)
    else:
        _emit(out)
    return 0


def cmd_build_graph(args) -> int:
    vocab, samples = D.load_dataset(args.data)
    graph = D.build_cooccurrence_graph(samples, vocab.n_skills)
    out = graph.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=1)
        print(f"wrote graph with {len(graph.edges)} edges to {args.out}", file=sys.stderr)
    else:
        _emit(out)
    return 0


def cmd_train(args) -> int:
    from .checkpoint import checkpoint_save

    config = _load_config(args.config)
    vocab, samples = D.load_dataset(args.data)
    train, val, test = D.split_dataset(samples, seed=config.seed)
    graph = D.build_cooccurrence_graph(train, vocab.n_skills)
    pool = D.mine_frequent_sets(train, args.min_support)
    model, report = fit(vocab, train, val, config, graph=graph, pool=pool, test=test)
    checkpoint_save(model, config, args.out)
    report_path = os.path.join(args.out, "train_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=1)
    print(
        f"checkpoint written to {args.out}; "
        f"val rmse={report.final_val['rmse']:.4f} mae={report.final_val['mae']:.4f}",
        file=sys.stderr,
    )
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import checkpoint_load
    from .explain import evaluate, scs_report

    model, _ = checkpoint_load(args.ckpt)
    raws = D.read_jsonl(args.data)
    samples = [D.encode_posting(r, model.vocab) for r in raws]
    report = evaluate(model, samples).to_json()
    if args.with_scs:
        graph = D.build_cooccurrence_graph(samples, model.vocab.n_skills)
        report["scs"] = scs_report(model, samples, graph).to_json()
    _emit(report)
    return 0


def cmd_explain(args) -> int:
    from .checkpoint import checkpoint_load
    from .explain import explain

    model, _ = checkpoint_load(args.ckpt)
    skills = []
    for token in args.skills.split(","):
        token = token.strip()
        if not token:
            continue
        name, _, level = token.partition(":")
        skills.append((name.strip(), level.strip() or None))
    context = json.loads(args.context) if args.context else {}
    sample = D.encode_query(skills, context, model.vocab)
    _emit(explain(sample, model).to_json())
    return 0


def cmd_export_prototypes(args) -> int:
    from .checkpoint import checkpoint_load
    from .explain import export_prototypes

    model, _ = checkpoint_load(args.ckpt)
    out = export_prototypes(model)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=1)
    else:
        _emit(out)
    return 0


def cmd_weight_curves(args) -> int:
    """CSV of mean salary weight per prototype, grouped by one context field."""
    import csv

    import numpy as np
    import torch

    from .checkpoint import checkpoint_load
    from .model import collate

    model, _ = checkpoint_load(args.ckpt)
    raws = D.read_jsonl(args.data)
    samples = [D.encode_posting(r, model.vocab) for r in raws]
    schema = {f.name: i for i, f in enumerate(model.vocab.context_schema)}
    if args.field not in schema:
        print(f"error: unknown context field {args.field!r}", file=sys.stderr)
        return 1
    idx = schema[args.field]
    fdesc = model.vocab.context_schema[idx]
    groups: dict[object, list[D.EncodedSample]] = {}
    for s in samples:
        groups.setdefault(s.context[idx], []).append(s)
    writer = csv.writer(sys.stdout if not args.out else open(args.out, "w", newline=""))
    writer.writerow([args.field] + [f"prototype_{k}" for k in range(model.n_prototypes)])
    with torch.no_grad():
        for value in sorted(groups):
            chunk = groups[value]
            batch = collate(chunk, model.vocab)
            mean = model.context(batch.ctx_cat, batch.ctx_num).double().mean(dim=0).numpy()
            label = (
                fdesc.values[int(value)]
                if fdesc.kind == "categorical" and int(value) < len(fdesc.values)
                else value
            )
            writer.writerow([label] + [f"{x:.6f}" for x in np.asarray(mean)])
    return 0


def cmd_serve(args) -> int:
    from .checkpoint import checkpoint_load
    from .service import serve

    model, _ = checkpoint_load(args.ckpt)
    port = int(os.environ.get("SKILLPROTO_PORT", args.port))
    serve(model, port=port, host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skillproto",
        description="Self-explainable salary prediction over skill sets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset with planted groups")
    p.add_argument("--spec", required=True, help="synthetic spec JSON file")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("mine", help="mine frequent skill sets")
    p.add_argument("--data", required=True)
    p.add_argument("--min-support", type=float, default=0.01)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("build-graph", help="build the skill co-occurrence graph")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="TrainConfig JSON file (defaults applied otherwise)")
    p.add_argument("--min-support", type=float, default=0.01)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--with-scs", action="store_true", help="add subset cohesion scores")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="explain a prediction for an ad-hoc skill set")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--skills", required=True, help='comma list, "Name" or "Name:Level"')
    p.add_argument("--context", help="context JSON object")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("export-prototypes", help="dump the learned prototype skill sets")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_prototypes)

    p = sub.add_parser("weight-curves", help="CSV of salary weights across a context field")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_weight_curves)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (D.DataError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
