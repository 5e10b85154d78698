import json
import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skillproto.data import (
    DataError,
    EncodedSample,
    SyntheticSpec,
    build_cooccurrence_graph,
    build_vocabulary,
    encode_posting,
    generate_synthetic,
    mine_frequent_sets,
    read_jsonl,
    sample_digest,
    split_dataset,
)


def raw(skills, salary=10.0, context=None):
    return {
        "skills": [{"name": s} if isinstance(s, str) else s for s in skills],
        "context": context or {},
        "salary": salary,
    }


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------

class TestVocabulary:
    def test_union_of_skills(self):
        vocab = build_vocabulary([raw(["a", "b"]), raw(["b", "c"])])
        assert vocab.skills == ("a", "b", "c")
        assert vocab.n_skills == 3

    def test_empty_input(self):
        vocab = build_vocabulary([])
        assert vocab.n_skills == 0

    def test_lexicographic_order(self):
        vocab = build_vocabulary([raw(["zeta", "Alpha", "beta"])])
        assert vocab.skills == tuple(sorted(("zeta", "Alpha", "beta")))

    def test_levels_and_context_collected(self):
        postings = [
            raw([{"name": "Algorithms", "level": "Specialist"}], context={"city": "X"}),
            raw([{"name": "Python", "level": "Understand"}], context={"years": 3}),
        ]
        vocab = build_vocabulary(postings)
        assert vocab.levels == ("Specialist", "Understand")
        kinds = {f.name: f.kind for f in vocab.context_schema}
        assert kinds == {"city": "categorical", "years": "numeric"}

    def test_malformed_jsonl_reports_line(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"skills": [{"name": "a"}], "salary": 1}\n{oops\n')
        with pytest.raises(DataError, match=":2:"):
            read_jsonl(str(p))


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------

class TestEncoding:
    def test_order_does_not_matter(self):
        vocab = build_vocabulary([raw(["a", "b"])])
        s1 = encode_posting(raw(["b", "a"]), vocab)
        s2 = encode_posting(raw(["a", "b"]), vocab)
        assert s1.skill_ids == s2.skill_ids == (0, 1)

    def test_duplicates_deduplicated(self):
        vocab = build_vocabulary([raw(["a"])])
        s = encode_posting(raw(["a", "a"]), vocab)
        assert s.skill_ids == (0,)

    def test_level_round_trip(self):
        p = raw([{"name": "Algorithms", "level": "Specialist"}, {"name": "Python"}])
        vocab = build_vocabulary([p])
        s = encode_posting(p, vocab)
        sid = vocab.skill_id("Algorithms")
        assert vocab.levels[s.level_ids[sid]] == "Specialist"
        assert vocab.skill_id("Python") not in s.level_ids

    def test_unknown_skill_named_in_error(self):
        vocab = build_vocabulary([raw(["a"])])
        with pytest.raises(DataError, match="Rust"):
            encode_posting(raw(["Rust"]), vocab)

    def test_empty_skill_list_rejected(self):
        vocab = build_vocabulary([raw(["a"])])
        with pytest.raises(DataError):
            encode_posting({"skills": [], "salary": 1.0}, vocab)

    def test_salary_range_midpoint(self):
        vocab = build_vocabulary([raw(["a"])])
        s = encode_posting({"skills": [{"name": "a"}], "salary": [10, 20]}, vocab)
        assert s.salary == 15.0
        s = encode_posting({"skills": [{"name": "a"}], "salary": {"min": 8, "max": 12}}, vocab)
        assert s.salary == 10.0

    def test_nonpositive_salary_rejected(self):
        vocab = build_vocabulary([raw(["a"])])
        with pytest.raises(DataError):
            encode_posting(raw(["a"], salary=0.0), vocab)

    @given(st.permutations(["a", "b", "c", "d"]))
    def test_any_permutation_encodes_identically(self, order):
        vocab = build_vocabulary([raw(["a", "b", "c", "d"])])
        base = encode_posting(raw(["a", "b", "c", "d"]), vocab)
        other = encode_posting(raw(list(order)), vocab)
        assert other.skill_ids == base.skill_ids
        assert sample_digest(other) == sample_digest(base)


# ---------------------------------------------------------------------------
# co-occurrence graph
# ---------------------------------------------------------------------------

class TestGraph:
    def test_always_together(self):
        samples = [EncodedSample((0, 1)), EncodedSample((0, 1))]
        g = build_cooccurrence_graph(samples, 2)
        assert g.weight(0, 1) == 1.0

    def test_quarter_weight(self):
        samples = [
            EncodedSample((0, 1)),
            EncodedSample((0,)),
            EncodedSample((1,)),
            EncodedSample((2,)),
        ]
        g = build_cooccurrence_graph(samples, 3)
        assert g.weight(0, 1) == 0.25

    def test_never_cooccur_absent(self):
        g = build_cooccurrence_graph([EncodedSample((0,)), EncodedSample((1,))], 2)
        assert (0, 1) not in g.edges
        assert g.weight(0, 1) == 0.0

    def test_symmetric_no_self_loops_bounded(self):
        rng = np.random.default_rng(3)
        samples = [
            EncodedSample(tuple(rng.choice(10, size=rng.integers(1, 6), replace=False)))
            for _ in range(40)
        ]
        g = build_cooccurrence_graph(samples, 10)
        for (i, j), w in g.edges.items():
            assert i < j and 0.0 <= w <= 1.0
            assert g.weight(i, j) == g.weight(j, i)
            assert g.weight(i, i) == 0.0

    def test_round_trip_json(self):
        g = build_cooccurrence_graph([EncodedSample((0, 1, 2))], 3)
        g2 = type(g).from_json(json.loads(json.dumps(g.to_json())))
        assert g2.edges == g.edges and g2.n_nodes == g.n_nodes


# ---------------------------------------------------------------------------
# frequent-set mining
# ---------------------------------------------------------------------------

def brute_force_frequent(samples, min_support):
    """Oracle: exhaustive enumeration over every subset of observed items."""
    items = sorted({i for s in samples for i in s.skill_ids})
    n = len(samples)
    out = []
    for k in range(2, len(items) + 1):
        for combo in combinations(items, k):
            need = set(combo)
            count = sum(1 for s in samples if need <= set(s.skill_ids))
            if count >= min_support * n:
                out.append((combo, count / n))
    return sorted(out, key=lambda e: (len(e[0]), e[0]))


class TestMining:
    def test_hand_case(self):
        samples = [
            EncodedSample((0, 1)),
            EncodedSample((0, 1)),
            EncodedSample((0, 2)),
            EncodedSample((1, 2)),
        ]
        pool = mine_frequent_sets(samples, 0.5)
        assert pool.sets == [((0, 1), 0.5)]

    def test_default_min_support(self):
        import inspect

        sig = inspect.signature(mine_frequent_sets)
        assert sig.parameters["min_support"].default == 0.01

    def test_empty_dataset_warns(self):
        with pytest.warns(UserWarning):
            pool = mine_frequent_sets([], 0.5)
        assert pool.sets == []

    def test_invalid_support(self):
        with pytest.raises(DataError):
            mine_frequent_sets([EncodedSample((0, 1))], 0.0)

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(7)
        for trial in range(8):
            n_items = int(rng.integers(3, 9))
            samples = [
                EncodedSample(
                    tuple(rng.choice(n_items, size=rng.integers(1, n_items + 1), replace=False))
                )
                for _ in range(int(rng.integers(4, 30)))
            ]
            ms = float(rng.uniform(0.05, 0.9))
            pool = mine_frequent_sets(samples, ms)
            assert pool.sets == brute_force_frequent(samples, ms), f"trial {trial}"


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def _synthetic_samples(n, seed=0):
    rng = np.random.default_rng(seed)
    return [
        EncodedSample(
            tuple(rng.choice(20, size=rng.integers(1, 6), replace=False)),
            salary=float(rng.uniform(1, 30)),
        )
        for _ in range(n)
    ]


class TestSplit:
    def test_default_ratios(self):
        train, val, test = split_dataset(_synthetic_samples(100), seed=1)
        assert (len(train), len(val), len(test)) == (60, 20, 20)

    def test_deterministic(self):
        samples = _synthetic_samples(10)
        a = split_dataset(samples, seed=5)
        b = split_dataset(samples, seed=5)
        assert a == b

    def test_input_order_invariant(self):
        samples = _synthetic_samples(30)
        shuffled = [samples[i] for i in np.random.default_rng(9).permutation(30)]
        a = split_dataset(samples, seed=2)
        b = split_dataset(shuffled, seed=2)
        for part_a, part_b in zip(a, b):
            assert sorted(map(sample_digest, part_a)) == sorted(map(sample_digest, part_b))

    def test_too_small(self):
        with pytest.raises(DataError):
            split_dataset(_synthetic_samples(2))

    def test_bad_ratios(self):
        with pytest.raises(DataError):
            split_dataset(_synthetic_samples(10), ratios=(0.5, 0.2, 0.2))

    @given(st.integers(min_value=3, max_value=60), st.integers(min_value=0, max_value=50))
    @settings(max_examples=40, deadline=None)
    def test_partition_disjoint_exhaustive(self, n, seed):
        samples = _synthetic_samples(n, seed=n)
        train, val, test = split_dataset(samples, seed=seed)
        assert len(train) + len(val) + len(test) == n
        for part, ratio in zip((train, val, test), (0.6, 0.2, 0.2)):
            assert abs(len(part) - ratio * n) <= 1
        all_digests = sorted(sample_digest(s) for s in samples)
        got = sorted(sample_digest(s) for part in (train, val, test) for s in part)
        assert got == all_digests


# ---------------------------------------------------------------------------
# synthetic generation
# ---------------------------------------------------------------------------

class TestSynthetic:
    def test_noise_free_group_effect(self):
        spec = SyntheticSpec(
            n_skills=10, groups=[[0, 1, 2]], betas=[5.0], base_salary=3.0,
            noise_sigma=0.0, n_samples=200, seed=4,
        )
        _, samples = generate_synthetic(spec)
        for s in samples:
            expected = 8.0 if {0, 1, 2} <= set(s.skill_ids) else 3.0
            assert s.salary == pytest.approx(expected)

    def test_overlapping_groups_rejected(self):
        with pytest.raises(DataError, match="disjoint"):
            SyntheticSpec(
                n_skills=10, groups=[[0, 1], [1, 2]], betas=[1.0, 1.0],
                base_salary=1.0, noise_sigma=0.0, n_samples=1,
            )

    def test_monte_carlo_mean(self):
        # empirical mean must sit near base + sum_k beta_k * P(group_k present)
        spec = SyntheticSpec(
            n_skills=30, groups=[[0, 1, 2], [3, 4], [5, 6, 7]], betas=[4.0, 2.0, 6.0],
            base_salary=5.0, noise_sigma=0.5, n_samples=4000, seed=11,
        )
        _, samples = generate_synthetic(spec)
        present = np.zeros(3)
        for s in samples:
            ids = set(s.skill_ids)
            for k, g in enumerate(spec.groups):
                present[k] += set(g) <= ids
        expected = spec.base_salary + float(np.dot(spec.betas, present / len(samples)))
        observed = float(np.mean([s.salary for s in samples]))
        spread = float(np.std([s.salary for s in samples]))
        assert abs(observed - expected) <= 3 * spread / math.sqrt(len(samples))

    def test_deterministic_per_seed(self):
        spec = SyntheticSpec(
            n_skills=12, groups=[[0, 1]], betas=[2.0], base_salary=3.0,
            noise_sigma=0.3, n_samples=50, seed=7,
        )
        _, a = generate_synthetic(spec)
        _, b = generate_synthetic(spec)
        assert [s.skill_ids for s in a] == [s.skill_ids for s in b]
        assert [s.salary for s in a] == [s.salary for s in b]
