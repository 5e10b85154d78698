"""Full set-regression model: multi-view subset extraction, prototype matching,
and context-weighted additive prediction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from .data import CooccurrenceGraph, EncodedSample, SkillVocabulary
from .prototypes import (
    SIM_EPSILON,
    ContextEncoder,
    PrototypeBank,
    TransformLayer,
    similarity,
)
from .subsets import (
    FULL,
    HARD,
    MultiViewSelector,
    masked_mean_pool,
    subset_embeddings,
)


@dataclass
class Batch:
    """Padded sample batch; adjacency tensors are present only when a graph
    was supplied (training with the density regularizer)."""

    ids: torch.Tensor  # (B, n) long, -1 padding
    valid: torch.Tensor  # (B, n) bool
    levels: torch.Tensor  # (B, n) long, absent index where missing
    ctx_cat: torch.Tensor  # (B, n_cat) long
    ctx_num: torch.Tensor  # (B, n_num) float
    salary: torch.Tensor  # (B,) float
    adj_w: torch.Tensor | None = None  # (B, n, n)
    adj_e: torch.Tensor | None = None

    def __len__(self) -> int:
        return self.ids.shape[0]


def sample_adjacency(
    samples: Sequence[EncodedSample], graph: CooccurrenceGraph
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Precompute per-sample dense weight/edge submatrices once per dataset."""
    return [graph.submatrix(s.skill_ids) for s in samples]


def collate(
    samples: Sequence[EncodedSample],
    vocab: SkillVocabulary,
    adjacency: Sequence[tuple[np.ndarray, np.ndarray]] | None = None,
    dtype: torch.dtype = torch.float32,
) -> Batch:
    if not samples:
        raise ValueError("cannot collate an empty batch")
    n_max = max(len(s.skill_ids) for s in samples)
    b = len(samples)
    absent = vocab.n_levels
    ids = torch.full((b, n_max), -1, dtype=torch.long)
    valid = torch.zeros((b, n_max), dtype=torch.bool)
    levels = torch.full((b, n_max), absent, dtype=torch.long)
    cat_fields = [i for i, f in enumerate(vocab.context_schema) if f.kind == "categorical"]
    num_fields = [i for i, f in enumerate(vocab.context_schema) if f.kind == "numeric"]
    ctx_cat = torch.zeros((b, len(cat_fields)), dtype=torch.long)
    ctx_num = torch.zeros((b, len(num_fields)), dtype=dtype)
    salary = torch.zeros(b, dtype=dtype)
    for r, s in enumerate(samples):
        n = len(s.skill_ids)
        ids[r, :n] = torch.tensor(s.skill_ids, dtype=torch.long)
        valid[r, :n] = True
        for c, sid in enumerate(s.skill_ids):
            if sid in s.level_ids:
                levels[r, c] = s.level_ids[sid]
        # context-free samples (e.g. frequent sets) fall back to the missing slots
        bare = len(s.context) != len(vocab.context_schema)
        for j, i in enumerate(cat_fields):
            ctx_cat[r, j] = len(vocab.context_schema[i].values) if bare else int(s.context[i])
        for j, i in enumerate(num_fields):
            ctx_num[r, j] = 0.0 if bare else float(s.context[i])
        salary[r] = s.salary
    adj_w = adj_e = None
    if adjacency is not None:
        adj_w = torch.zeros((b, n_max, n_max), dtype=dtype)
        adj_e = torch.zeros((b, n_max, n_max), dtype=dtype)
        for r, (w, e) in enumerate(adjacency):
            n = w.shape[0]
            adj_w[r, :n, :n] = torch.from_numpy(w).to(dtype)
            adj_e[r, :n, :n] = torch.from_numpy(e).to(dtype)
    return Batch(ids, valid, levels, ctx_cat, ctx_num, salary, adj_w, adj_e)


@dataclass
class ForwardOutput:
    y: torch.Tensor  # (B,)
    scores: torch.Tensor  # (B, H, n)
    masks: torch.Tensor  # (B, H, n)
    alpha: torch.Tensor  # (B, n)
    subset_emb: torch.Tensor  # (B, H, d)
    z_subsets: torch.Tensor  # (B, H, d)
    z_prototypes: torch.Tensor | None  # (M, d)
    sims: torch.Tensor | None  # (B, H, M)
    agg_sims: torch.Tensor | None  # (B, M)
    weights: torch.Tensor | None  # (B, M) softmax over prototypes
    gamma_sal: torch.Tensor | None  # (B, M)


class SetRegressor(nn.Module):
    """Predicts a salary for a skill set as a softmax-weighted combination of
    context-dependent prototype salary weights, exposing every intermediate
    needed for the reasoning trace."""

    def __init__(
        self,
        vocab: SkillVocabulary,
        dim: int = 64,
        n_views: int = 4,
        n_prototypes: int = 64,
        transform_hidden: int = 256,
        context_hidden: int = 64,
        sim_eps: float = SIM_EPSILON,
    ):
        super().__init__()
        self.vocab = vocab
        self.dim = dim
        self.n_views = n_views
        self.n_prototypes = n_prototypes
        self.sim_eps = sim_eps
        self.selector = MultiViewSelector(vocab.n_skills, dim, n_views, vocab.n_levels)
        self.transform = TransformLayer(dim, transform_hidden)
        self.bank = PrototypeBank(n_prototypes, vocab.n_skills, dim)
        self.context = ContextEncoder(
            vocab.context_schema, n_prototypes, dim=dim, hidden=context_hidden
        )

    def extract_subsets(
        self,
        batch: Batch,
        tau: float,
        mode: str,
        generator: torch.Generator | None = None,
        noise_clamp: float = 1e-10,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        """Run the selection path: per-view scores, masks, alpha, subset embeddings."""
        skill_embs = self.selector.skill_embeddings(batch.ids, batch.valid)
        alpha = self.selector.calibrator(batch.levels) * batch.valid.to(skill_embs.dtype)
        set_emb = masked_mean_pool(skill_embs, batch.valid)
        scores = self.selector.attention_scores(set_emb, skill_embs)
        masks = self.selector.masks(
            scores, batch.valid, tau, mode, generator=generator, noise_clamp=noise_clamp
        )
        subset_emb = subset_embeddings(
            masks, alpha, skill_embs, batch.valid, hard=mode in (HARD, FULL)
        )
        return scores, masks, alpha, subset_emb

    def forward(
        self,
        batch: Batch,
        tau: float = 1.0,
        mode: str = HARD,
        generator: torch.Generator | None = None,
        noise_clamp: float = 1e-10,
    ) -> ForwardOutput:
        scores, masks, alpha, subset_emb = self.extract_subsets(
            batch, tau, mode, generator, noise_clamp
        )
        z_subsets = self.transform(subset_emb)
        z_prototypes = self.transform(self.bank.embeddings(self.selector.embedding.weight))
        sims = similarity(z_subsets.unsqueeze(2), z_prototypes, self.sim_eps)
        agg = sims.sum(dim=1)
        weights = torch.softmax(agg, dim=-1)
        gamma_sal = self.context(batch.ctx_cat, batch.ctx_num)
        y = (weights * gamma_sal).sum(dim=-1)
        return ForwardOutput(
            y, scores, masks, alpha, subset_emb, z_subsets, z_prototypes, sims, agg,
            weights, gamma_sal,
        )

    @torch.no_grad()
    def predict(
        self, sample: EncodedSample, mode: str = HARD
    ) -> tuple[float, ForwardOutput]:
        """Deterministic single-sample prediction.

        The final combination is recomputed in float64 so the returned salary
        equals the sum of the per-prototype contributions exactly and stays
        inside [min gamma_sal, max gamma_sal].
        """
        if not sample.skill_ids:
            raise ValueError("cannot predict for an empty skill set")
        batch = collate([sample], self.vocab)
        out = self(batch, tau=1.0, mode=mode)
        y = float(np.dot(*prediction_weights(out)))
        return y, out

    @torch.no_grad()
    def predict_batch(self, samples: Sequence[EncodedSample], mode: str = HARD) -> np.ndarray:
        batch = collate(samples, self.vocab)
        out = self(batch, tau=1.0, mode=mode)
        agg = out.agg_sims.double().numpy()
        w = np.exp(agg - agg.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        return (w * out.gamma_sal.double().numpy()).sum(axis=1)


def prediction_weights(out: ForwardOutput, row: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Float64 (softmax weights, salary weights) for one batch row; the dot
    product of the pair is the model's reported prediction."""
    agg = out.agg_sims[row].double().numpy()
    w = np.exp(agg - agg.max())
    w /= w.sum()
    return w, out.gamma_sal[row].double().numpy()


class DirectRegressor(nn.Module):
    """Ablation head: pooled transformed subset embeddings (plus fused context
    when a schema exists) feed a plain MLP instead of the prototype match."""

    def __init__(
        self,
        vocab: SkillVocabulary,
        dim: int = 64,
        n_views: int = 4,
        transform_hidden: int = 256,
        context_hidden: int = 64,
        head_hidden: int = 64,
    ):
        super().__init__()
        self.vocab = vocab
        self.dim = dim
        self.n_views = n_views
        self.selector = MultiViewSelector(vocab.n_skills, dim, n_views, vocab.n_levels)
        self.transform = TransformLayer(dim, transform_hidden)
        self.context = ContextEncoder(vocab.context_schema, dim, dim=dim, hidden=context_hidden)
        self.head = nn.Sequential(
            nn.Linear(2 * dim, head_hidden), nn.Tanh(), nn.Linear(head_hidden, 1)
        )

    def forward(
        self,
        batch: Batch,
        tau: float = 1.0,
        mode: str = HARD,
        generator: torch.Generator | None = None,
        noise_clamp: float = 1e-10,
    ) -> ForwardOutput:
        skill_embs = self.selector.skill_embeddings(batch.ids, batch.valid)
        alpha = self.selector.calibrator(batch.levels) * batch.valid.to(skill_embs.dtype)
        set_emb = masked_mean_pool(skill_embs, batch.valid)
        scores = self.selector.attention_scores(set_emb, skill_embs)
        masks = self.selector.masks(scores, batch.valid, tau, mode, generator, noise_clamp)
        subset_emb = subset_embeddings(
            masks, alpha, skill_embs, batch.valid, hard=mode in (HARD, FULL)
        )
        z_subsets = self.transform(subset_emb)
        fields = self.context.field_embeddings(batch.ctx_cat, batch.ctx_num)
        fused = self.context.fm(fields)
        if self.context.deep is not None:
            fused = fused + self.context.deep(fields.reshape(fields.shape[0], -1))
        y = self.head(torch.cat([z_subsets.mean(dim=1), fused], dim=-1)).squeeze(-1)
        return ForwardOutput(
            y, scores, masks, alpha, subset_emb, z_subsets, None, None, None, None, None
        )

    @torch.no_grad()
    def predict_batch(self, samples: Sequence[EncodedSample], mode: str = HARD) -> np.ndarray:
        batch = collate(samples, self.vocab)
        return self(batch, tau=1.0, mode=mode).y.double().numpy()
