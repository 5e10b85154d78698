"""End-to-end training: warm-up, regularized gradient descent with annealed
Gumbel temperature, periodic projection of prototypes onto subsets extracted
from frequent skill sets, and L1-regularized bias refinement."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
import torch

from .data import (
    CooccurrenceGraph,
    EncodedSample,
    FrequentSetPool,
    SkillVocabulary,
)
from .model import (
    Batch,
    DirectRegressor,
    ForwardOutput,
    SetRegressor,
    collate,
    sample_adjacency,
)
from .prototypes import THETA_MIN, diversity_loss, representation_loss, similarity
from .subsets import FULL, HARD, NOISY, SOFT, density_loss

VARIANTS = ("full", "wo_prot", "wo_sub", "wo_rel")


@dataclass
class GumbelConfig:
    tau0: float = 1.0
    tau_min: float = 0.1
    anneal_rate: float | None = None  # resolved from total_epochs when None
    hard_at_inference: bool = True
    noise_clamp: float = 1e-10

    def __post_init__(self):
        if not (0 < self.tau_min <= self.tau0):
            raise ValueError(f"need 0 < tau_min <= tau0, got {self.tau_min}, {self.tau0}")
        if not (0 < self.noise_clamp < 0.5):
            raise ValueError(f"noise_clamp must be in (0, 0.5), got {self.noise_clamp}")


@dataclass
class TrainConfig:
    total_epochs: int = 100
    warmup_epochs: int | None = None  # default: 20% of total
    projection_period: int = 5
    refine_epochs: int | None = None  # default: 10% of total
    lambda_con: float = 0.1
    lambda_rep: float = 0.1
    lambda_div: float = 0.1
    lambda_p: float = 1e-3
    learning_rate: float = 1e-3
    batch_size: int = 128
    seed: int = 0
    n_prototypes: int = 64
    n_views: int = 4
    dim: int = 64
    transform_hidden: int = 256
    context_hidden: int = 64
    sim_eps: float = 1e-4
    theta_min: float = THETA_MIN
    variant: str = "full"
    gumbel: GumbelConfig = field(default_factory=GumbelConfig)

    def __post_init__(self):
        if isinstance(self.gumbel, dict):
            self.gumbel = GumbelConfig(**self.gumbel)
        if self.warmup_epochs is None:
            self.warmup_epochs = max(1, round(0.2 * self.total_epochs))
        if self.refine_epochs is None:
            self.refine_epochs = max(1, round(0.1 * self.total_epochs))
        if not self.warmup_epochs < self.total_epochs:
            raise ValueError("warmup_epochs must be < total_epochs")
        if self.projection_period < 1:
            raise ValueError("projection_period must be >= 1")
        for name in ("lambda_con", "lambda_rep", "lambda_div", "lambda_p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)

    def anneal_rate(self) -> float:
        g = self.gumbel
        if g.anneal_rate is not None:
            return g.anneal_rate
        horizon = max(1.0, 0.8 * self.total_epochs)
        return (g.tau_min / g.tau0) ** (1.0 / horizon)


def anneal_temperature(epoch: int, config: TrainConfig) -> float:
    """tau(e) = max(tau_min, tau0 * r^e); non-increasing in the epoch index."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    g = config.gumbel
    return max(g.tau_min, g.tau0 * config.anneal_rate() ** epoch)


def make_ablation(config: TrainConfig, variant: str) -> TrainConfig:
    """Derive an ablation config: wo_prot drops the prototype head, wo_sub
    forces a single all-ones view, wo_rel replaces periodic projection with a
    single end-of-training replacement."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    out = TrainConfig.from_json(config.to_json())
    out.variant = variant
    if variant == "wo_sub":
        out.n_views = 1
    return out


def build_model(vocab: SkillVocabulary, config: TrainConfig) -> SetRegressor | DirectRegressor:
    if config.variant == "wo_prot":
        return DirectRegressor(
            vocab,
            dim=config.dim,
            n_views=config.n_views,
            transform_hidden=config.transform_hidden,
            context_hidden=config.context_hidden,
        )
    return SetRegressor(
        vocab,
        dim=config.dim,
        n_views=config.n_views,
        n_prototypes=config.n_prototypes,
        transform_hidden=config.transform_hidden,
        context_hidden=config.context_hidden,
        sim_eps=config.sim_eps,
    )


def total_loss(
    out: ForwardOutput, batch: Batch, config: TrainConfig
) -> dict[str, torch.Tensor]:
    """Prediction MSE plus the weighted coherence, representation, and
    diversity terms. Components are always reported; missing inputs (no graph,
    no prototype head) contribute zero."""
    zero = out.y.sum() * 0.0
    pred = (out.y - batch.salary).pow(2).mean()
    con = (
        density_loss(out.masks, batch.adj_w, batch.adj_e).mean()
        if batch.adj_w is not None
        else zero
    )
    if out.z_prototypes is not None:
        rep = representation_loss(out.z_subsets, out.z_prototypes)
        div = diversity_loss(out.z_prototypes, config.theta_min, config.sim_eps)
    else:
        rep = zero
        div = zero
    total = pred + config.lambda_con * con + config.lambda_rep * rep + config.lambda_div * div
    if not torch.isfinite(total):
        raise FloatingPointError(
            "non-finite training loss: "
            f"pred={float(pred)}, con={float(con)}, rep={float(rep)}, div={float(div)}"
        )
    return {"pred": pred, "con": con, "rep": rep, "div": div, "total": total}


@dataclass
class Candidate:
    """One extracted subset obtained by running a frequent set through the
    deterministic selection path."""

    skill_ids: tuple[int, ...]
    weights: tuple[float, ...]  # calibrated alpha per member
    embedding: torch.Tensor  # (d,) pooled, pre-transform
    source_set: int
    view: int


def extract_candidates(
    model: SetRegressor, pool: FrequentSetPool
) -> list[Candidate]:
    """Deterministic hard-mask extraction over every frequent set, ordered by
    (pool position, view). Views that select nothing are dropped.

    Sets run one at a time: batched GEMMs are not bitwise row-position
    independent, and identical pool sets must yield identical embeddings so
    the projection tie rule operates on exact equality.
    """
    candidates: list[Candidate] = []
    if not pool.sets:
        return candidates
    with torch.no_grad():
        for s_idx, (ids, _) in enumerate(pool.sets):
            batch = collate([EncodedSample(skill_ids=ids)], model.vocab)
            _, masks, alpha, subset_emb = model.extract_subsets(batch, tau=1.0, mode=HARD)
            for h in range(model.n_views):
                sel = [c for c in range(len(ids)) if masks[0, h, c] > 0]
                if not sel:
                    continue
                candidates.append(
                    Candidate(
                        skill_ids=tuple(ids[c] for c in sel),
                        weights=tuple(float(alpha[0, c]) for c in sel),
                        embedding=subset_emb[0, h].clone(),
                        source_set=s_idx,
                        view=h,
                    )
                )
    return candidates


@torch.no_grad()
def project_prototypes(
    model: SetRegressor, pool: FrequentSetPool
) -> list[dict]:
    """Snap every prototype to the candidate subset with maximal similarity
    (first index wins ties) and refresh its embedding from the table.

    Returns per-prototype assignment records; empty list when no candidate
    could be extracted.
    """
    if not pool.sets:
        raise RuntimeError(
            "frequent pool is empty at projection time; mine with a lower min_support"
        )
    candidates = extract_candidates(model, pool)
    if not candidates:
        return []
    # per-candidate transforms keep duplicate candidates bitwise identical,
    # making the lowest-index tie rule exact
    z_cand = torch.cat([model.transform(c.embedding.unsqueeze(0)) for c in candidates])
    z_proto = model.transform(model.bank.embeddings(model.selector.embedding.weight))
    sims = similarity(z_proto.unsqueeze(1), z_cand.unsqueeze(0), model.sim_eps)
    table = model.selector.embedding.weight
    events = []
    for k in range(model.n_prototypes):
        best = int(np.argmax(sims[k].numpy()))  # np.argmax takes the first maximum
        cand = candidates[best]
        model.bank.assign(
            k,
            torch.tensor(cand.skill_ids, dtype=torch.long),
            torch.tensor(cand.weights),
            table,
        )
        events.append(
            {
                "prototype": k,
                "candidate": best,
                "source_set": cand.source_set,
                "view": cand.view,
                "skills": list(cand.skill_ids),
                "similarity": float(sims[k, best]),
            }
        )
    return events


def _soft_threshold(delta: torch.Tensor, amount: float) -> None:
    with torch.no_grad():
        delta.copy_(torch.sign(delta) * torch.clamp(delta.abs() - amount, min=0.0))


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    projections: list[dict] = field(default_factory=list)
    best_val_epoch: int | None = None
    final_val: dict | None = None
    final_test: dict | None = None
    delta_l1: list[float] | None = None
    wall_seconds: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)


def _eval_rmse_mae(model, samples: Sequence[EncodedSample], mode: str) -> dict:
    if not samples:
        return {"rmse": float("nan"), "mae": float("nan"), "n_samples": 0}
    preds = []
    for start in range(0, len(samples), 512):
        preds.append(model.predict_batch(samples[start : start + 512], mode=mode))
    preds = np.concatenate(preds)
    targets = np.array([s.salary for s in samples])
    err = preds - targets
    return {
        "rmse": float(np.sqrt(np.mean(err**2))),
        "mae": float(np.mean(np.abs(err))),
        "n_samples": len(samples),
    }


def fit(
    vocab: SkillVocabulary,
    train: Sequence[EncodedSample],
    val: Sequence[EncodedSample],
    config: TrainConfig,
    graph: CooccurrenceGraph | None = None,
    pool: FrequentSetPool | None = None,
    test: Sequence[EncodedSample] | None = None,
) -> tuple[SetRegressor | DirectRegressor, TrainReport]:
    """Run the full training procedure and return the final model and report.

    Deterministic for a fixed seed, config, and data (single-threaded torch).
    The prototype variants require a mined frequent pool; the density term
    requires a graph (skipped with a zero contribution when absent).
    """
    if not train:
        raise ValueError("training set is empty")
    uses_prototypes = config.variant in ("full", "wo_sub", "wo_rel")
    if uses_prototypes and pool is None:
        raise ValueError("prototype training requires a mined frequent pool")

    t_start = time.perf_counter()
    torch.manual_seed(config.seed)
    noise_gen = torch.Generator().manual_seed(config.seed + 1)
    shuffle_rng = np.random.default_rng(config.seed + 2)

    model = build_model(vocab, config)
    _init_salary_scale(model, train)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    adjacency = sample_adjacency(train, graph) if graph is not None else None
    train_mode = FULL if config.variant == "wo_sub" else NOISY
    if config.variant == "wo_sub":
        eval_mode = FULL
    else:
        eval_mode = HARD if config.gumbel.hard_at_inference else SOFT
    report = TrainReport()
    best_val = math.inf
    projected = False

    def run_epoch(epoch_idx: int, tau: float, refine: bool) -> dict:
        order = shuffle_rng.permutation(len(train))
        sums = {"pred": 0.0, "con": 0.0, "rep": 0.0, "div": 0.0, "total": 0.0}
        n_batches = 0
        for start in range(0, len(train), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = collate(
                [train[i] for i in idx],
                vocab,
                adjacency=[adjacency[i] for i in idx] if adjacency is not None else None,
            )
            out = model(
                batch, tau=tau, mode=train_mode,
                generator=noise_gen, noise_clamp=config.gumbel.noise_clamp,
            )
            losses = total_loss(out, batch, config)
            objective = losses["total"]
            if refine:
                objective = objective + config.lambda_p * model.bank.delta.abs().sum()
            optimizer.zero_grad()
            objective.backward()
            optimizer.step()
            if refine and config.lambda_p > 0:
                # proximal step keeps the refinement bias exactly sparse
                _soft_threshold(model.bank.delta, config.learning_rate * config.lambda_p)
            for k in sums:
                sums[k] += float(losses[k].detach())
            n_batches += 1
        row = {k: v / n_batches for k, v in sums.items()}
        row["epoch"] = epoch_idx
        row["tau"] = tau
        row["phase"] = "refine" if refine else "main"
        return row

    epoch_counter = 0
    for e in range(1, config.total_epochs + 1):
        tau = anneal_temperature(e - 1, config)
        row = run_epoch(e, tau, refine=False)
        if uses_prototypes and config.variant != "wo_rel":
            if e > config.warmup_epochs and e % config.projection_period == 0:
                events = project_prototypes(model, pool)
                if events:
                    projected = True
                    report.projections.append({"epoch": e, "assignments": events})
        val_metrics = _eval_rmse_mae(model, val, eval_mode)
        row["val_rmse"] = val_metrics["rmse"]
        row["val_mae"] = val_metrics["mae"]
        report.epochs.append(row)
        if val and val_metrics["rmse"] < best_val:
            best_val = val_metrics["rmse"]
            report.best_val_epoch = e
        epoch_counter = e

    if uses_prototypes:
        if not projected:
            # degenerate schedules (or wo_rel) still need discrete prototypes
            events = project_prototypes(model, pool)
            if events:
                projected = True
                report.projections.append({"epoch": epoch_counter, "assignments": events})
        if not projected:
            raise RuntimeError(
                "prototype projection never produced candidates; "
                "mine the pool with a lower min_support"
            )
        if config.variant != "wo_rel":
            model.bank.start_refinement()
            tau = anneal_temperature(config.total_epochs - 1, config)
            for f in range(1, config.refine_epochs + 1):
                row = run_epoch(config.total_epochs + f, tau, refine=True)
                val_metrics = _eval_rmse_mae(model, val, eval_mode)
                row["val_rmse"] = val_metrics["rmse"]
                row["val_mae"] = val_metrics["mae"]
                report.epochs.append(row)
        else:
            model.bank.start_refinement()  # serve from the discrete parts
        report.delta_l1 = [
            float(model.bank.delta[k].detach().abs().sum())
            for k in range(config.n_prototypes)
        ]
        _store_mean_salary_weight(model, train)

    report.final_val = _eval_rmse_mae(model, val, eval_mode) if val else None
    report.final_test = _eval_rmse_mae(model, test, eval_mode) if test else None
    report.wall_seconds = time.perf_counter() - t_start
    model.eval()
    return model, report


def _inv_softplus(y: float) -> float:
    return y + math.log1p(-math.exp(-y)) if y > 1e-6 else y


def _init_salary_scale(model, train: Sequence[EncodedSample]) -> None:
    """Start the salary-weight head on the training salary scale: prototype
    salary weights spread across the empirical quantiles so the softmax only
    has to find the right mixture, the direct head at the mean."""
    salaries = np.array([s.salary for s in train], dtype=np.float64)
    with torch.no_grad():
        if isinstance(model, SetRegressor):
            m = model.n_prototypes
            qs = np.quantile(salaries, np.linspace(0.05, 0.95, m))
            model.context.head[-1].bias.copy_(
                torch.tensor([_inv_softplus(float(q)) for q in qs])
            )
        else:
            model.head[-1].bias.fill_(float(salaries.mean()))


@torch.no_grad()
def _store_mean_salary_weight(model: SetRegressor, samples: Sequence[EncodedSample]) -> None:
    total = torch.zeros(model.n_prototypes, dtype=torch.float64)
    count = 0
    for start in range(0, len(samples), 512):
        chunk = samples[start : start + 512]
        batch = collate(chunk, model.vocab)
        total += model.context(batch.ctx_cat, batch.ctx_num).double().sum(dim=0)
        count += len(chunk)
    model.mean_salary_weight = (total / max(count, 1)).numpy()
