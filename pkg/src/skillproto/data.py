"""Dataset ingestion, encoding, synthetic generation, co-occurrence graphs, frequent-set mining."""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

MISSING = "(missing)"


class DataError(ValueError):
    """Malformed posting or encoding failure."""


@dataclass(frozen=True)
class ContextField:
    """One context feature: categorical with a fixed value list, or numeric."""

    name: str
    kind: str  # "categorical" | "numeric"
    values: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("categorical", "numeric"):
            raise DataError(f"unknown context field kind: {self.kind!r}")

    @property
    def cardinality(self) -> int:
        # categorical fields reserve one extra slot for a missing value
        return len(self.values) + 1 if self.kind == "categorical" else 0


@dataclass
class SkillVocabulary:
    """Bidirectional id<->name maps for the universal skill set, levels, and context schema."""

    skills: tuple[str, ...]
    levels: tuple[str, ...] = ()
    context_schema: tuple[ContextField, ...] = ()

    def __post_init__(self):
        self.skills = tuple(self.skills)
        self.levels = tuple(self.levels)
        self.context_schema = tuple(self.context_schema)
        if len(set(self.skills)) != len(self.skills):
            raise DataError("duplicate skill names in vocabulary")
        if any(not s for s in self.skills):
            raise DataError("empty skill name in vocabulary")
        self._skill_ids = {s: i for i, s in enumerate(self.skills)}
        self._level_ids = {s: i for i, s in enumerate(self.levels)}

    @property
    def n_skills(self) -> int:
        return len(self.skills)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def skill_id(self, name: str) -> int:
        try:
            return self._skill_ids[name]
        except KeyError:
            raise DataError(f"unknown skill: {name!r}") from None

    def level_id(self, name: str) -> int:
        try:
            return self._level_ids[name]
        except KeyError:
            raise DataError(f"unknown level: {name!r}") from None

    def encode_context(self, raw: dict) -> tuple:
        """Encode a raw context dict into the schema-ordered value tuple.

        Categorical values map to indices (missing field -> reserved index);
        numeric fields pass through as floats (missing -> 0.0). Unknown
        categorical values raise.
        """
        out = []
        for f in self.context_schema:
            if f.name not in raw or raw[f.name] is None:
                out.append(len(f.values) if f.kind == "categorical" else 0.0)
                continue
            v = raw[f.name]
            if f.kind == "categorical":
                key = v if isinstance(v, str) else json.dumps(v)
                try:
                    out.append(f.values.index(key))
                except ValueError:
                    raise DataError(
                        f"unknown value {key!r} for context field {f.name!r}"
                    ) from None
            else:
                try:
                    out.append(float(v))
                except (TypeError, ValueError):
                    raise DataError(
                        f"non-numeric value {v!r} for numeric context field {f.name!r}"
                    ) from None
        return tuple(out)

    def to_json(self) -> dict:
        return {
            "skills": list(self.skills),
            "levels": list(self.levels),
            "context_schema": [
                {"name": f.name, "kind": f.kind, "values": list(f.values)}
                for f in self.context_schema
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SkillVocabulary":
        return cls(
            skills=tuple(obj["skills"]),
            levels=tuple(obj.get("levels", ())),
            context_schema=tuple(
                ContextField(f["name"], f["kind"], tuple(f.get("values", ())))
                for f in obj.get("context_schema", ())
            ),
        )


@dataclass
class EncodedSample:
    """One job posting: skill-id set, per-skill level ids, encoded context, salary."""

    skill_ids: tuple[int, ...]  # sorted, duplicate-free
    level_ids: dict[int, int] = field(default_factory=dict)
    context: tuple = ()
    salary: float = 1.0

    def __post_init__(self):
        self.skill_ids = tuple(sorted({int(i) for i in self.skill_ids}))
        self.level_ids = {int(k): int(v) for k, v in self.level_ids.items()}
        self.salary = float(self.salary)
        if not self.skill_ids:
            raise DataError("sample has an empty skill set")
        for k in self.level_ids:
            if k not in self.skill_ids:
                raise DataError(f"level given for skill id {k} not in the skill set")
        if not (math.isfinite(self.salary) and self.salary > 0):
            raise DataError(f"salary must be finite and positive, got {self.salary}")


def sample_digest(sample: EncodedSample) -> str:
    """Stable content hash, independent of source file ordering."""
    payload = json.dumps(
        [
            list(sample.skill_ids),
            sorted(sample.level_ids.items()),
            list(sample.context),
            sample.salary,
        ],
        separators=(",", ":"),
    )
    return hashlib.blake2b(payload.encode(), digest_size=16).hexdigest()


# ---------------------------------------------------------------------------
# JSONL ingestion
# ---------------------------------------------------------------------------

def read_jsonl(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON record: {exc}") from None
    return records


def write_jsonl(path: str, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def _parse_salary(value) -> float:
    # salary ranges collapse to their midpoint
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (float(value[0]) + float(value[1])) / 2.0
    if isinstance(value, dict) and {"min", "max"} <= set(value):
        return (float(value["min"]) + float(value["max"])) / 2.0
    raise DataError(f"unparseable salary value: {value!r}")


def _iter_skill_entries(raw: dict):
    skills = raw.get("skills")
    if not isinstance(skills, list) or not skills:
        raise DataError("posting has no skills")
    for entry in skills:
        if isinstance(entry, str):
            yield entry, None
        elif isinstance(entry, dict) and "name" in entry:
            yield entry["name"], entry.get("level")
        else:
            raise DataError(f"unparseable skill entry: {entry!r}")


def build_vocabulary(raw_postings: Sequence[dict]) -> SkillVocabulary:
    """Scan raw postings and build the lexicographically ordered vocabulary."""
    skills: set[str] = set()
    levels: set[str] = set()
    ctx_values: dict[str, set[str]] = {}
    ctx_numeric: dict[str, bool] = {}
    for i, raw in enumerate(raw_postings):
        try:
            for name, level in _iter_skill_entries(raw):
                if not isinstance(name, str) or not name:
                    raise DataError(f"invalid skill name: {name!r}")
                skills.add(name)
                if level is not None:
                    levels.add(level)
            ctx = raw.get("context", {}) or {}
            for key, value in ctx.items():
                if value is None:
                    continue
                is_num = isinstance(value, (int, float)) and not isinstance(value, bool)
                if key not in ctx_numeric:
                    ctx_numeric[key] = is_num
                    ctx_values[key] = set()
                if not is_num:
                    ctx_numeric[key] = False
                    ctx_values[key].add(value if isinstance(value, str) else json.dumps(value))
        except DataError as exc:
            raise DataError(f"posting {i + 1}: {exc}") from None
    schema = []
    for name in sorted(ctx_numeric):
        if ctx_numeric[name]:
            schema.append(ContextField(name, "numeric"))
        else:
            schema.append(ContextField(name, "categorical", tuple(sorted(ctx_values[name]))))
    return SkillVocabulary(
        skills=tuple(sorted(skills)),
        levels=tuple(sorted(levels)),
        context_schema=tuple(schema),
    )


def encode_posting(raw: dict, vocab: SkillVocabulary) -> EncodedSample:
    """Encode one raw posting; skill order never matters."""
    ids: set[int] = set()
    level_ids: dict[int, int] = {}
    for name, level in _iter_skill_entries(raw):
        sid = vocab.skill_id(name)
        ids.add(sid)
        if level is not None and sid not in level_ids:
            level_ids[sid] = vocab.level_id(level)
    context = vocab.encode_context(raw.get("context", {}) or {})
    if "salary" not in raw:
        raise DataError("posting has no salary")
    return EncodedSample(
        skill_ids=tuple(sorted(ids)),
        level_ids=level_ids,
        context=context,
        salary=_parse_salary(raw["salary"]),
    )


def encode_query(
    skills: Sequence[tuple[str, str | None]], context: dict, vocab: SkillVocabulary
) -> EncodedSample:
    """Encode an inference-time query (no salary attached)."""
    if not skills:
        raise DataError("query has an empty skill set")
    raw = {
        "skills": [
            {"name": n} if lv is None else {"name": n, "level": lv} for n, lv in skills
        ],
        "context": context,
        "salary": 1.0,  # placeholder; never used for inference
    }
    return encode_posting(raw, vocab)


def load_dataset(path: str) -> tuple[SkillVocabulary, list[EncodedSample]]:
    raws = read_jsonl(path)
    vocab = build_vocabulary(raws)
    samples = []
    for i, raw in enumerate(raws):
        try:
            samples.append(encode_posting(raw, vocab))
        except DataError as exc:
            raise DataError(f"{path}: posting {i + 1}: {exc}") from None
    return vocab, samples


def posting_to_raw(sample: EncodedSample, vocab: SkillVocabulary) -> dict:
    """Inverse of encode_posting, for writing datasets back out as JSONL."""
    skills = []
    for sid in sample.skill_ids:
        entry: dict = {"name": vocab.skills[sid]}
        if sid in sample.level_ids:
            entry["level"] = vocab.levels[sample.level_ids[sid]]
        skills.append(entry)
    ctx = {}
    for f, v in zip(vocab.context_schema, sample.context):
        if f.kind == "categorical":
            if int(v) < len(f.values):
                ctx[f.name] = f.values[int(v)]
        else:
            ctx[f.name] = v
    return {"skills": skills, "context": ctx, "salary": sample.salary}


# ---------------------------------------------------------------------------
# Co-occurrence graph
# ---------------------------------------------------------------------------

@dataclass
class CooccurrenceGraph:
    """Undirected skill graph; edge weight = co-occurrence count / number of postings."""

    n_nodes: int
    edges: dict[tuple[int, int], float]

    def weight(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        key = (i, j) if i < j else (j, i)
        return self.edges.get(key, 0.0)

    def submatrix(self, ids: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Dense (weights, edge-indicator) matrices over the given skill ids."""
        n = len(ids)
        w = np.zeros((n, n), dtype=np.float32)
        e = np.zeros((n, n), dtype=np.float32)
        for a, b in combinations(range(n), 2):
            wt = self.weight(ids[a], ids[b])
            if wt > 0.0:
                w[a, b] = w[b, a] = wt
                e[a, b] = e[b, a] = 1.0
        return w, e

    def to_json(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "edges": [[i, j, w] for (i, j), w in sorted(self.edges.items())],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CooccurrenceGraph":
        return cls(
            n_nodes=obj["n_nodes"],
            edges={(int(i), int(j)): float(w) for i, j, w in obj["edges"]},
        )


def build_cooccurrence_graph(
    samples: Sequence[EncodedSample], n_skills: int
) -> CooccurrenceGraph:
    if not samples:
        raise DataError("cannot build a co-occurrence graph from an empty dataset")
    counts: dict[tuple[int, int], int] = {}
    for s in samples:
        for pair in combinations(s.skill_ids, 2):  # skill_ids already sorted
            counts[pair] = counts.get(pair, 0) + 1
    n = len(samples)
    return CooccurrenceGraph(
        n_nodes=n_skills, edges={k: c / n for k, c in counts.items()}
    )


# ---------------------------------------------------------------------------
# Frequent-set mining (Apriori, level-wise over transaction-id sets)
# ---------------------------------------------------------------------------

@dataclass
class FrequentSetPool:
    """All itemsets of size >= 2 whose support meets min_support, canonically ordered."""

    sets: list[tuple[tuple[int, ...], float]]
    min_support: float

    def to_json(self) -> dict:
        return {
            "min_support": self.min_support,
            "sets": [{"skills": list(ids), "support": sup} for ids, sup in self.sets],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FrequentSetPool":
        return cls(
            sets=[(tuple(e["skills"]), float(e["support"])) for e in obj["sets"]],
            min_support=float(obj["min_support"]),
        )


def mine_frequent_sets(
    samples: Sequence[EncodedSample], min_support: float = 0.01
) -> FrequentSetPool:
    if not (0.0 < min_support <= 1.0):
        raise DataError(f"min_support must be in (0, 1], got {min_support}")
    if not samples:
        warnings.warn("mining frequent sets from an empty dataset", stacklevel=2)
        return FrequentSetPool(sets=[], min_support=min_support)
    n = len(samples)
    min_count = min_support * n

    tidsets: dict[int, set[int]] = {}
    for t, s in enumerate(samples):
        for item in s.skill_ids:
            tidsets.setdefault(item, set()).add(t)

    frequent_items = sorted(i for i, tids in tidsets.items() if len(tids) >= min_count)
    # level k: map sorted item tuple -> transaction-id set
    level = {(i,): tidsets[i] for i in frequent_items}
    pool: list[tuple[tuple[int, ...], float]] = []
    while level:
        keys = sorted(level)
        next_level: dict[tuple[int, ...], set[int]] = {}
        prev_keys = set(keys)
        for a_idx in range(len(keys)):
            a = keys[a_idx]
            for b_idx in range(a_idx + 1, len(keys)):
                b = keys[b_idx]
                if a[:-1] != b[:-1]:
                    break  # keys sorted: no further join partners for a
                cand = a + (b[-1],)
                # Apriori prune: every (k-1)-subset must itself be frequent
                if len(cand) > 2 and any(
                    cand[:i] + cand[i + 1 :] not in prev_keys for i in range(len(cand) - 1)
                ):
                    continue
                tids = level[a] & level[b]
                if len(tids) >= min_count:
                    next_level[cand] = tids
        for ids, tids in next_level.items():
            pool.append((ids, len(tids) / n))
        level = next_level
    pool.sort(key=lambda e: (len(e[0]), e[0]))
    return FrequentSetPool(sets=pool, min_support=min_support)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def split_dataset(
    samples: Sequence[EncodedSample],
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> tuple[list[EncodedSample], list[EncodedSample], list[EncodedSample]]:
    """Deterministic train/val/test partition, independent of input file order."""
    if len(samples) < 3:
        raise DataError(f"need at least 3 samples to split, got {len(samples)}")
    if any(r <= 0 for r in ratios):
        raise DataError(f"split ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1, got {ratios}")
    # canonical pre-sort by content hash so membership ignores file order
    order = sorted(range(len(samples)), key=lambda i: sample_digest(samples[i]))
    canon = [samples[i] for i in order]
    perm = np.random.default_rng(seed).permutation(len(canon))

    n = len(canon)
    exact = [r * n for r in ratios]
    counts = [int(math.floor(x)) for x in exact]
    remainders = sorted(
        range(3), key=lambda i: (-(exact[i] - counts[i]), i)
    )
    for i in range(n - sum(counts)):
        counts[remainders[i % 3]] += 1
    out = []
    start = 0
    for c in counts:
        out.append([canon[i] for i in perm[start : start + c]])
        start += c
    return out[0], out[1], out[2]


# ---------------------------------------------------------------------------
# Synthetic data with planted group effects
# ---------------------------------------------------------------------------

@dataclass
class SyntheticSpec:
    """Ground truth for recovery experiments: disjoint skill groups with additive salary effects."""

    n_skills: int
    groups: list[list[int]]
    betas: list[float]
    base_salary: float
    noise_sigma: float
    n_samples: int
    seed: int = 0
    max_distractors: int = 3

    def __post_init__(self):
        if self.n_skills < 1:
            raise DataError("n_skills must be >= 1")
        seen: set[int] = set()
        for g in self.groups:
            gs = set(g)
            if not gs or len(gs) != len(g):
                raise DataError(f"group {g} must be a non-empty duplicate-free id list")
            if any(not (0 <= i < self.n_skills) for i in gs):
                raise DataError(f"group {g} has ids outside [0, {self.n_skills})")
            if gs & seen:
                raise DataError("groups must be disjoint")
            seen |= gs
        if len(self.betas) != len(self.groups):
            raise DataError("betas must align with groups")
        if any(b < 0 for b in self.betas):
            raise DataError("betas must be >= 0")
        if self.noise_sigma < 0:
            raise DataError("noise_sigma must be >= 0")
        if self.base_salary <= 0:
            raise DataError("base_salary must be > 0")
        if self.n_samples < 1:
            raise DataError("n_samples must be >= 1")

    def to_json(self) -> dict:
        return {
            "n_skills": self.n_skills,
            "groups": [list(g) for g in self.groups],
            "betas": list(self.betas),
            "base_salary": self.base_salary,
            "noise_sigma": self.noise_sigma,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "max_distractors": self.max_distractors,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticSpec":
        return cls(**obj)


def synthetic_vocabulary(n_skills: int) -> SkillVocabulary:
    width = max(3, len(str(max(n_skills - 1, 0))))
    return SkillVocabulary(skills=tuple(f"skill_{i:0{width}d}" for i in range(n_skills)))


def generate_synthetic(spec: SyntheticSpec) -> tuple[SkillVocabulary, list[EncodedSample]]:
    """Samples are unions of 1-3 planted groups plus uniform distractor skills.

    salary = base + sum_k beta_k * [group_k fully contained] + N(0, sigma),
    with the containment indicator evaluated on the final skill set.
    """
    rng = np.random.default_rng(spec.seed)
    groups = [frozenset(g) for g in spec.groups]
    k = len(groups)
    all_ids = np.arange(spec.n_skills)
    samples = []
    for _ in range(spec.n_samples):
        n_groups = int(rng.integers(1, min(3, k) + 1)) if k else 0
        chosen = rng.choice(k, size=n_groups, replace=False) if n_groups else []
        ids: set[int] = set()
        for gi in chosen:
            ids |= groups[gi]
        if spec.max_distractors > 0:
            n_d = int(rng.integers(0, spec.max_distractors + 1))
            remaining = np.array([i for i in all_ids if i not in ids])
            if n_d > 0 and remaining.size:
                ids |= set(
                    int(x) for x in rng.choice(remaining, size=min(n_d, remaining.size), replace=False)
                )
        if not ids:  # k == 0 degenerate spec: fall back to one random skill
            ids = {int(rng.integers(0, spec.n_skills))}
        salary = spec.base_salary + sum(
            b for g, b in zip(groups, spec.betas) if g <= ids
        )
        if spec.noise_sigma > 0:
            salary += float(rng.normal(0.0, spec.noise_sigma))
        samples.append(
            EncodedSample(skill_ids=tuple(sorted(ids)), salary=max(salary, 1e-3))
        )
    return synthetic_vocabulary(spec.n_skills), samples
