import numpy as np
import pytest
from hypothesis import settings

from thingraph.graph_model import corpus_graph, parse_graph
from thingraph.thin_mesh import build_mesh

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=40)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def single_edge():
    return corpus_graph("single_edge")


@pytest.fixture(scope="session")
def star3():
    return corpus_graph("star3")


@pytest.fixture(scope="session")
def triangle_pendant():
    return corpus_graph("triangle_pendant")


@pytest.fixture(scope="session")
def pi_edge():
    """Single edge of length pi between unit squares."""
    return parse_graph({"vertices": [{"id": "a"}, {"id": "b"}],
                        "edges": [{"id": "e0", "tail": "a", "head": "b", "length": float(np.pi)}]})


@pytest.fixture(scope="session")
def small_mesh(single_edge):
    return build_mesh(single_edge, 0.25, 4)


@pytest.fixture(scope="session")
def star_mesh(star3):
    return build_mesh(star3, 1 / 16, 4)
