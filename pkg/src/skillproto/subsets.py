"""Multi-view discrete subset selection: attention scores, Gumbel-Sigmoid masks,
skill-level calibration, and the co-occurrence density regularizer."""

from __future__ import annotations

import math

import torch
import torch.nn as nn

DENSITY_FLOOR = 1e-6

# mask modes
NOISY = "noisy"  # Gumbel-Sigmoid sampling (training)
SOFT = "soft"  # logistic(score / tau), no noise
HARD = "hard"  # 1[score > 0], deterministic inference
FULL = "full"  # mask forced to all-ones (subset selection disabled)

MASK_MODES = (NOISY, SOFT, HARD, FULL)


def ordered_sum(x: torch.Tensor, dim: int) -> torch.Tensor:
    """Sum after sorting the summands, so the result is bit-identical under
    any permutation of the input along `dim` (plain float sums are not)."""
    return x.sort(dim=dim).values.sum(dim=dim)


def masked_mean_pool(rows: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
    """Mean over the row dimension (-2); bitwise invariant to row order.

    `valid` marks real rows in padded inputs. Pooling zero rows is an error.
    """
    if valid is None:
        if rows.shape[-2] == 0:
            raise ValueError("cannot pool an empty set of rows")
        return ordered_sum(rows, dim=-2) / rows.shape[-2]
    count = valid.to(rows.dtype).sum(dim=-1, keepdim=True)
    if (count == 0).any():
        raise ValueError("cannot pool an empty set of rows")
    return ordered_sum(rows * valid.unsqueeze(-1).to(rows.dtype), dim=-2) / count


def gumbel_sigmoid(
    scores: torch.Tensor,
    tau: float,
    generator: torch.Generator | None = None,
    noise_clamp: float = 1e-10,
) -> torch.Tensor:
    """Relaxed binary selection: logistic(scores / tau + g0 - g1).

    g0, g1 are i.i.d. standard Gumbel draws from uniforms clamped to
    (noise_clamp, 1 - noise_clamp); their difference is symmetric logistic
    noise. The noise amplitude is fixed while scores are sharpened by 1/tau,
    so sampling concentrates on 1[score > 0] as tau -> 0. With
    generator=None the noise is omitted entirely.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    if not (0 < noise_clamp < 0.5):
        raise ValueError(f"noise_clamp must be in (0, 0.5), got {noise_clamp}")
    logits = scores / tau
    if generator is not None:
        u = torch.rand(
            (2,) + scores.shape, generator=generator, dtype=scores.dtype, device=scores.device
        ).clamp(noise_clamp, 1.0 - noise_clamp)
        g = -torch.log(-torch.log(u))
        logits = logits + g[0] - g[1]
    return torch.sigmoid(logits)


def hard_mask(scores: torch.Tensor) -> torch.Tensor:
    """Deterministic inference mask: select skills with positive scores."""
    return (scores > 0).to(scores.dtype)


class LevelCalibrator(nn.Module):
    """Maps a skill's proficiency level to a weight in (0, 1).

    Row `n_levels` of the embedding table is the shared "absent" level.
    """

    def __init__(self, n_levels: int, dim: int = 16):
        super().__init__()
        self.n_levels = n_levels
        self.embedding = nn.Embedding(n_levels + 1, dim)
        self.head = nn.Linear(dim, 1)

    def forward(self, level_ids: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.head(self.embedding(level_ids)).squeeze(-1))


class MultiViewSelector(nn.Module):
    """Shared skill embedding table plus per-view query/key/value projections.

    Scores follow scaled dot-product attention between the pooled set
    embedding (query) and each skill embedding (keys), one score vector per
    view.
    """

    def __init__(self, n_skills: int, dim: int, n_views: int, n_levels: int = 0):
        super().__init__()
        if n_views < 1:
            raise ValueError("need at least one view")
        if dim % n_views != 0:
            raise ValueError(f"embedding dim {dim} must be divisible by n_views {n_views}")
        self.n_skills = n_skills
        self.dim = dim
        self.n_views = n_views
        self.view_dim = dim // n_views
        self.embedding = nn.Embedding(n_skills, dim)
        nn.init.normal_(self.embedding.weight, std=dim**-0.5)
        scale = dim**-0.5
        self.w_query = nn.Parameter(torch.randn(n_views, dim, self.view_dim) * scale)
        self.w_key = nn.Parameter(torch.randn(n_views, dim, self.view_dim) * scale)
        self.w_value = nn.Parameter(torch.randn(n_views, dim, self.view_dim) * scale)
        self.calibrator = LevelCalibrator(n_levels)

    def skill_embeddings(self, ids: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
        emb = self.embedding(ids.clamp(min=0))
        return emb * valid.unsqueeze(-1).to(emb.dtype)

    def attention_scores(
        self, set_emb: torch.Tensor, skill_embs: torch.Tensor
    ) -> torch.Tensor:
        """(B, d) set embedding and (B, n, d) skill embeddings -> (B, H, n) scores."""
        q = torch.einsum("bd,hdk->bhk", set_emb, self.w_query)
        k = torch.einsum("bnd,hdk->bhnk", skill_embs, self.w_key)
        return torch.einsum("bhk,bhnk->bhn", q, k) / math.sqrt(self.view_dim)

    def masks(
        self,
        scores: torch.Tensor,
        valid: torch.Tensor,
        tau: float,
        mode: str,
        generator: torch.Generator | None = None,
        noise_clamp: float = 1e-10,
    ) -> torch.Tensor:
        if mode == NOISY:
            m = gumbel_sigmoid(scores, tau, generator=generator, noise_clamp=noise_clamp)
        elif mode == SOFT:
            m = gumbel_sigmoid(scores, tau, generator=None)
        elif mode == HARD:
            m = hard_mask(scores)
        elif mode == FULL:
            m = torch.ones_like(scores)
        else:
            raise ValueError(f"unknown mask mode: {mode!r}")
        return m * valid.unsqueeze(1).to(m.dtype)


def subset_embeddings(
    masks: torch.Tensor,
    alpha: torch.Tensor,
    skill_embs: torch.Tensor,
    valid: torch.Tensor,
    hard: bool,
) -> torch.Tensor:
    """Pool mask- and calibration-weighted skill embeddings per view.

    Hard masks drop unselected rows and average over the selected count; an
    all-zero hard mask yields the zero vector. Soft masks average with the
    mask values as weights (denominator = sum of mask entries), so the soft
    relaxation converges to the hard path exactly as masks saturate to {0, 1};
    a set-size denominator instead would leave a systematic n_selected / n
    scale gap between training and deterministic inference.
    """
    del valid  # masks are already zeroed on padding
    weighted = masks.unsqueeze(-1) * alpha.unsqueeze(1).unsqueeze(-1) * skill_embs.unsqueeze(1)
    if hard:
        count = masks.sum(dim=-1, keepdim=True)
        return ordered_sum(weighted, dim=-2) / count.clamp(min=1.0)
    total = masks.sum(dim=-1, keepdim=True)
    return ordered_sum(weighted, dim=-2) / total.clamp(min=1e-6)


def view_density(
    masks: torch.Tensor, adj_w: torch.Tensor, adj_e: torch.Tensor, floor: float = DENSITY_FLOOR
) -> torch.Tensor:
    """Soft weighted-edge density of each view's selected subgraph.

    masks (B, H, n); adj_w / adj_e (B, n, n) symmetric zero-diagonal weight
    and edge-indicator matrices restricted to each sample's skills. At a
    hard mask this is exactly (sum of selected edge weights) / (number of
    selected edges), floored by `floor` in the denominator.
    """
    num = 0.5 * torch.einsum("bhi,bij,bhj->bh", masks, adj_w, masks)
    den = 0.5 * torch.einsum("bhi,bij,bhj->bh", masks, adj_e, masks)
    return num / (den + floor)


def density_loss(
    masks: torch.Tensor, adj_w: torch.Tensor, adj_e: torch.Tensor, floor: float = DENSITY_FLOOR
) -> torch.Tensor:
    """Per-sample coherence penalty: -log of the view-averaged subgraph density."""
    mean_density = view_density(masks, adj_w, adj_e, floor).mean(dim=-1)
    return -torch.log(mean_density.clamp(min=floor))
