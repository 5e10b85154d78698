import numpy as np
import pytest
import torch

from skillproto.data import ContextField, SkillVocabulary
from skillproto.model import SetRegressor


@pytest.fixture(autouse=True)
def _deterministic():
    torch.manual_seed(0)
    np.random.seed(0)


def make_vocab(n_skills=12, levels=("Proficient", "Specialist", "Understand"), schema=()):
    return SkillVocabulary(
        skills=tuple(f"skill_{i:03d}" for i in range(n_skills)),
        levels=tuple(levels),
        context_schema=tuple(schema),
    )


def make_model(
    n_skills=12, dim=8, n_views=2, n_prototypes=4, levels=(), schema=(), hidden=32, seed=0
):
    torch.manual_seed(seed)
    return SetRegressor(
        make_vocab(n_skills, levels, schema),
        dim=dim,
        n_views=n_views,
        n_prototypes=n_prototypes,
        transform_hidden=hidden,
        context_hidden=hidden,
    )


@pytest.fixture
def city_schema():
    return (ContextField("city", "categorical", ("Beijing", "Shanghai", "Shenzhen")),)
