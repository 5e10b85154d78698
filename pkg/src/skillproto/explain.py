"""Metrics, per-sample reasoning traces, prototype ranking, and subset
cohesion scoring."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
import torch

from .data import CooccurrenceGraph, EncodedSample
from .model import SetRegressor, collate, prediction_weights
from .subsets import HARD


@dataclass
class MetricReport:
    rmse: float
    mae: float
    n_samples: int

    def to_json(self) -> dict:
        return asdict(self)


def rmse_mae(predictions: Sequence[float], targets: Sequence[float]) -> MetricReport:
    preds = np.asarray(predictions, dtype=np.float64)
    targs = np.asarray(targets, dtype=np.float64)
    if preds.shape != targs.shape or preds.ndim != 1 or preds.size == 0:
        raise ValueError(
            f"predictions and targets must be equal-length non-empty vectors, "
            f"got {preds.shape} and {targs.shape}"
        )
    err = preds - targs
    return MetricReport(
        rmse=float(np.sqrt(np.mean(err**2))),
        mae=float(np.mean(np.abs(err))),
        n_samples=preds.size,
    )


def evaluate(model, samples: Sequence[EncodedSample]) -> MetricReport:
    preds = model.predict_batch(samples)
    return rmse_mae(preds, [s.salary for s in samples])


@dataclass
class SubsetEntry:
    skill: str
    mask: float
    alpha: float


@dataclass
class PrototypeMatch:
    id: int
    similarity: float
    weight: float
    salary_weight: float
    contribution: float


@dataclass
class Explanation:
    """Reasoning trace: extracted subsets per view, prototype matches with
    softmax weights and salary weights, and the additive decomposition of the
    prediction (contributions sum to the predicted salary)."""

    skills: list[str]
    context: dict
    views: list[list[SubsetEntry]]
    prototypes: list[PrototypeMatch]
    salary: float

    def to_json(self) -> dict:
        return asdict(self)


def explain(sample: EncodedSample, model: SetRegressor) -> Explanation:
    """Deterministic trace for one sample; canonical skill order (by id)."""
    if not sample.skill_ids:
        raise ValueError("cannot explain an empty skill set")
    with torch.no_grad():
        batch = collate([sample], model.vocab)
        out = model(batch, tau=1.0, mode=HARD)
    w, gamma = prediction_weights(out)
    contributions = w * gamma
    y = float(contributions.sum())
    names = [model.vocab.skills[i] for i in sample.skill_ids]
    views = [
        [
            SubsetEntry(
                skill=names[c],
                mask=float(out.masks[0, h, c]),
                alpha=float(out.alpha[0, c]),
            )
            for c in range(len(names))
        ]
        for h in range(model.n_views)
    ]
    prototypes = [
        PrototypeMatch(
            id=i,
            similarity=float(out.agg_sims[0, i]),
            weight=float(w[i]),
            salary_weight=float(gamma[i]),
            contribution=float(contributions[i]),
        )
        for i in range(model.n_prototypes)
    ]
    ctx = {
        f.name: (f.values[int(v)] if f.kind == "categorical" and int(v) < len(f.values) else v)
        for f, v in zip(model.vocab.context_schema, sample.context)
    }
    return Explanation(skills=names, context=ctx, views=views, prototypes=prototypes, salary=y)


def rank_prototypes(
    model: SetRegressor, samples: Sequence[EncodedSample]
) -> list[tuple[int, float]]:
    """Prototypes sorted by mean salary weight over the samples' contexts,
    descending; ties resolved by prototype id."""
    if not samples:
        raise ValueError("need at least one sample to rank prototypes")
    total = torch.zeros(model.n_prototypes, dtype=torch.float64)
    with torch.no_grad():
        for start in range(0, len(samples), 512):
            chunk = samples[start : start + 512]
            batch = collate(chunk, model.vocab)
            total += model.context(batch.ctx_cat, batch.ctx_num).double().sum(dim=0)
    means = (total / len(samples)).numpy()
    order = sorted(range(model.n_prototypes), key=lambda i: (-means[i], i))
    return [(i, float(means[i])) for i in order]


def subset_cohesion_score(
    subset: Sequence[int], pair_frequency: Callable[[int, int], float] | CooccurrenceGraph
) -> float:
    """Mean pairwise frequency over the subset's unordered skill pairs."""
    ids = list(subset)
    if len(ids) < 2:
        raise ValueError(f"subset cohesion needs at least 2 skills, got {len(ids)}")
    f = pair_frequency.weight if isinstance(pair_frequency, CooccurrenceGraph) else pair_frequency
    pairs = list(combinations(ids, 2))
    return float(sum(f(a, b) for a, b in pairs) / len(pairs))


@dataclass
class ScsReport:
    model_mean: float
    random_mean: float
    n_subsets: int
    sizes: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "model_mean": self.model_mean,
            "random_mean": self.random_mean,
            "n_subsets": self.n_subsets,
        }


def extracted_subsets(
    model: SetRegressor, samples: Sequence[EncodedSample]
) -> list[tuple[int, ...]]:
    """Hard-mask subsets for every sample and view (possibly empty tuples)."""
    subsets: list[tuple[int, ...]] = []
    with torch.no_grad():
        for start in range(0, len(samples), 512):
            chunk = samples[start : start + 512]
            batch = collate(chunk, model.vocab)
            _, masks, _, _ = model.extract_subsets(batch, tau=1.0, mode=HARD)
            for r, s in enumerate(chunk):
                for h in range(model.n_views):
                    subsets.append(
                        tuple(
                            s.skill_ids[c]
                            for c in range(len(s.skill_ids))
                            if masks[r, h, c] > 0
                        )
                    )
    return subsets


def scs_report(
    model: SetRegressor,
    samples: Sequence[EncodedSample],
    graph: CooccurrenceGraph,
    n_resamples: int = 100,
    seed: int = 0,
) -> ScsReport:
    """Mean cohesion of extracted subsets against a size-matched uniform
    baseline drawn from the whole vocabulary."""
    sizes = [len(s) for s in extracted_subsets(model, samples) if len(s) >= 2]
    scored = [
        subset_cohesion_score(s, graph)
        for s in extracted_subsets(model, samples)
        if len(s) >= 2
    ]
    if not scored:
        return ScsReport(model_mean=float("nan"), random_mean=float("nan"), n_subsets=0)
    rng = np.random.default_rng(seed)
    random_scores = []
    for _ in range(n_resamples):
        size = int(rng.choice(sizes))
        ids = rng.choice(graph.n_nodes, size=size, replace=False)
        random_scores.append(subset_cohesion_score([int(i) for i in ids], graph))
    return ScsReport(
        model_mean=float(np.mean(scored)),
        random_mean=float(np.mean(random_scores)),
        n_subsets=len(scored),
        sizes=sizes,
    )


def export_prototypes(model: SetRegressor) -> list[dict]:
    """JSON-ready prototype descriptions: member skills with their weights and
    refinement biases, plus the dataset-mean salary weight when available."""
    bank = model.bank
    delta = bank.delta.detach()
    mean_w = getattr(model, "mean_salary_weight", None)
    out = []
    for k in range(bank.n_prototypes):
        member_rows = torch.nonzero(
            (bank.gamma_s[k] != 0) | (delta[k] != 0)
        ).flatten().tolist()
        out.append(
            {
                "id": k,
                "skills": [
                    {
                        "name": model.vocab.skills[i],
                        "gamma_lv": float(bank.gamma_lv[k, i]),
                        "delta": float(delta[k, i]),
                    }
                    for i in member_rows
                ],
                "mean_salary_weight": float(mean_w[k]) if mean_w is not None else None,
            }
        )
    return out
