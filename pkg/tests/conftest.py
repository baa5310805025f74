import pytest

from detdistill.annotations import parse_dataset
from detdistill.synthetic import SyntheticSpec, generate_corpus


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory):
    """Full synthetic corpus: 500 images, 3000 objects, 10 categories."""
    root = tmp_path_factory.mktemp("corpus")
    generate_corpus(root)
    return root


@pytest.fixture(scope="session")
def corpus(corpus_root):
    return parse_dataset(corpus_root / "annotations.json", corpus_root / "images")


@pytest.fixture(scope="session")
def small_corpus_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("small_corpus")
    generate_corpus(root, SyntheticSpec(num_images=24, num_objects=144,
                                        num_categories=6, seed=11))
    return root


@pytest.fixture(scope="session")
def small_corpus(small_corpus_root):
    return parse_dataset(small_corpus_root / "annotations.json",
                         small_corpus_root / "images")
