import numpy as np
import pytest

from facetgrader.corpus import Document


def make_doc(i, grade=None, body=None, title=None):
    return Document(
        id=f"doc-{i}",
        title=title if title is not None else f"Title {i}",
        body=body if body is not None else f"Sentence one about item {i}. Sentence two with detail {i}.",
        grade=grade,
    )


@pytest.fixture
def labeled_docs():
    return [make_doc(i, grade=i % 5) for i in range(10)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
