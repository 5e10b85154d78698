"""Discrete prototype bank, shared transformation layer, log-ratio similarity,
contextual salary weights, and the prototype regularizers."""

from __future__ import annotations

import torch
import torch.nn as nn

from .data import ContextField

SIM_EPSILON = 1e-4
THETA_MIN = 1.0


def similarity(z_a: torch.Tensor, z_b: torch.Tensor, eps: float = SIM_EPSILON) -> torch.Tensor:
    """log((||za - zb||^2 + 1) / (||za - zb||^2 + eps)).

    Broadcasts over leading dims; strictly positive and strictly decreasing
    in the squared distance for eps in (0, 1).
    """
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    d2 = (z_a - z_b).pow(2).sum(dim=-1)
    return torch.log((d2 + 1.0) / (d2 + eps))


def pairwise_similarity(z: torch.Tensor, eps: float = SIM_EPSILON) -> torch.Tensor:
    """(M, d) -> (M, M) similarity matrix."""
    return similarity(z.unsqueeze(1), z.unsqueeze(0), eps)


class TransformLayer(nn.Module):
    """Two affine maps with a softplus between, mapping subset and prototype
    embeddings into the shared comparison space. Softplus is smooth everywhere
    and can realize the exact identity (softplus(x) - softplus(-x) = x)."""

    def __init__(self, dim: int, hidden: int = 256):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(nn.functional.softplus(self.fc1(x)))


class PrototypeBank(nn.Module):
    """M discrete prototypes: multi-hot membership, per-skill weights, and a
    sparse refinement bias, plus a continuous embedding used before the first
    projection snaps the discrete parts.

    Modes: while `derived` is false the bank exposes its free continuous
    embeddings (overwritten at each projection event); once true, embeddings
    are recomputed from (gamma_s * gamma_lv + delta) against the skill table.
    """

    def __init__(self, n_prototypes: int, n_skills: int, dim: int):
        super().__init__()
        self.n_prototypes = n_prototypes
        self.n_skills = n_skills
        self.dim = dim
        self.register_buffer("gamma_s", torch.zeros(n_prototypes, n_skills))
        self.register_buffer("gamma_lv", torch.zeros(n_prototypes, n_skills))
        self.delta = nn.Parameter(torch.zeros(n_prototypes, n_skills), requires_grad=False)
        self.free_emb = nn.Parameter(torch.randn(n_prototypes, dim) * (0.5 * dim**-0.5))
        self.register_buffer("derived", torch.zeros((), dtype=torch.bool))

    @property
    def is_derived(self) -> bool:
        return bool(self.derived)

    def membership_weights(self) -> torch.Tensor:
        return self.gamma_s * self.gamma_lv + self.delta

    def derived_embeddings(self, table: torch.Tensor) -> torch.Tensor:
        """Weighted skill embeddings averaged over the discrete support rows;
        prototypes with empty support and zero bias map to the zero vector.

        The denominator counts only the member rows (gamma_s * gamma_lv != 0),
        never the bias, so the embedding is continuous (affine) in delta and
        equals the frozen projected embedding exactly at delta = 0.
        """
        w = self.membership_weights()
        count = (self.gamma_s * self.gamma_lv != 0).sum(dim=-1, keepdim=True).to(w.dtype)
        return (w @ table) / count.clamp(min=1.0)

    def embeddings(self, table: torch.Tensor) -> torch.Tensor:
        if self.is_derived:
            return self.derived_embeddings(table)
        return self.free_emb

    @torch.no_grad()
    def assign(
        self, index: int, skill_ids: torch.Tensor, weights: torch.Tensor, table: torch.Tensor
    ) -> None:
        """Snap prototype `index` to a discrete skill set with per-skill weights
        and refresh its continuous embedding from the table."""
        self.gamma_s[index] = 0.0
        self.gamma_lv[index] = 0.0
        self.gamma_s[index, skill_ids] = 1.0
        self.gamma_lv[index, skill_ids] = weights.to(self.gamma_lv.dtype)
        w = self.gamma_s[index] * self.gamma_lv[index] + self.delta[index]
        count = max(int((self.gamma_s[index] * self.gamma_lv[index] != 0).sum()), 1)
        self.free_emb[index] = (w @ table) / count

    def start_refinement(self) -> None:
        self.delta.requires_grad_(True)
        self.derived.fill_(True)

    def effective_membership(self) -> torch.Tensor:
        """Final discrete representation: membership plus refinement bias."""
        return self.gamma_s + self.delta


def prototype_embedding(bank: PrototypeBank, index: int, table: torch.Tensor) -> torch.Tensor:
    """Continuous embedding of one prototype derived from its discrete parts."""
    if not (0 <= index < bank.n_prototypes):
        raise IndexError(f"prototype index {index} out of range")
    return bank.derived_embeddings(table)[index]


class ContextEncoder(nn.Module):
    """Per-prototype nonnegative salary weights from job context.

    Combines a factorization-machine path over per-field embeddings (bias +
    weighted first-order sum + elementwise pairwise products) with a deep MLP
    over the concatenated embeddings, then maps their sum to M softplus
    outputs. Categorical fields reserve an extra row for missing values;
    numeric fields scale a learned vector.
    """

    def __init__(
        self,
        schema: tuple[ContextField, ...],
        n_prototypes: int,
        dim: int = 32,
        hidden: int = 64,
    ):
        super().__init__()
        self.schema = tuple(schema)
        self.dim = dim
        self.n_fields = len(self.schema)
        self.cat_fields = [i for i, f in enumerate(self.schema) if f.kind == "categorical"]
        self.num_fields = [i for i, f in enumerate(self.schema) if f.kind == "numeric"]
        self.cat_embeddings = nn.ModuleList(
            nn.Embedding(self.schema[i].cardinality, dim) for i in self.cat_fields
        )
        for emb in self.cat_embeddings:
            nn.init.normal_(emb.weight, std=dim**-0.5)
        self.num_vectors = nn.Parameter(torch.randn(max(len(self.num_fields), 1), dim) * dim**-0.5)
        self.w0 = nn.Parameter(torch.zeros(dim))
        self.first_order = nn.Parameter(torch.ones(max(self.n_fields, 1)))
        self.deep = (
            nn.Sequential(
                nn.Linear(self.n_fields * dim, hidden), nn.Tanh(), nn.Linear(hidden, dim)
            )
            if self.n_fields
            else None
        )
        self.head = nn.Sequential(nn.Linear(dim, hidden), nn.Tanh(), nn.Linear(hidden, n_prototypes))

    def field_embeddings(self, ctx_cat: torch.Tensor, ctx_num: torch.Tensor) -> torch.Tensor:
        """(B, n_cat) long + (B, n_num) float -> (B, n_fields, dim) in schema order."""
        b = ctx_cat.shape[0] if self.cat_fields else ctx_num.shape[0]
        parts: list[torch.Tensor | None] = [None] * self.n_fields
        for j, i in enumerate(self.cat_fields):
            parts[i] = self.cat_embeddings[j](ctx_cat[:, j])
        for j, i in enumerate(self.num_fields):
            parts[i] = ctx_num[:, j : j + 1] * self.num_vectors[j].unsqueeze(0)
        if not parts:
            return torch.zeros(b, 0, self.dim, device=self.w0.device, dtype=self.w0.dtype)
        return torch.stack(parts, dim=1)

    def fm(self, fields: torch.Tensor) -> torch.Tensor:
        out = self.w0.unsqueeze(0).expand(fields.shape[0], -1).clone()
        if fields.shape[1]:
            out = out + (self.first_order[: fields.shape[1]].reshape(1, -1, 1) * fields).sum(1)
            total = fields.sum(dim=1)
            out = out + 0.5 * (total.pow(2) - fields.pow(2).sum(dim=1))
        return out

    def forward(self, ctx_cat: torch.Tensor, ctx_num: torch.Tensor) -> torch.Tensor:
        fields = self.field_embeddings(ctx_cat, ctx_num)
        fused = self.fm(fields)
        if self.deep is not None:
            fused = fused + self.deep(fields.reshape(fields.shape[0], -1))
        return nn.functional.softplus(self.head(fused))


def representation_loss(z_subsets: torch.Tensor, z_prototypes: torch.Tensor) -> torch.Tensor:
    """Bidirectional min squared distance: subsets to nearest prototype plus
    prototypes to nearest subset, each averaged over its own side."""
    zs = z_subsets.reshape(-1, z_subsets.shape[-1])
    d2 = (zs.unsqueeze(1) - z_prototypes.unsqueeze(0)).pow(2).sum(-1)
    return d2.min(dim=1).values.mean() + d2.min(dim=0).values.mean()


def diversity_loss(
    z_prototypes: torch.Tensor, theta_min: float = THETA_MIN, eps: float = SIM_EPSILON
) -> torch.Tensor:
    """Hinge on pairwise prototype similarity above theta_min, scattering the bank."""
    m = z_prototypes.shape[0]
    if m < 2:
        return z_prototypes.sum() * 0.0
    sims = pairwise_similarity(z_prototypes, eps)
    iu = torch.triu_indices(m, m, offset=1)
    return torch.clamp(sims[iu[0], iu[1]] - theta_min, min=0.0).sum() / m
