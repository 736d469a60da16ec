import random

import pytest

from hybridmap.graph import MODELS, Graph, Layer, LayerKind, build_transformer

DIMS = (16, 32, 48, 64, 96, 128, 192, 256)


def random_mm_graph(rng: random.Random, n_layers: int, dims=DIMS) -> Graph:
    """Random DAG of MatMuls; a layer's K matches its first producer's N."""
    m = rng.choice(dims)
    layers = []
    for i in range(n_layers):
        deps = ()
        if i:
            deps = tuple(sorted({rng.randrange(i)} | {j for j in range(i) if rng.random() < 0.3}))
        k = layers[deps[0]].n if deps else rng.choice(dims)
        layers.append(Layer(i, LayerKind.MatMul, m, k, rng.choice(dims), deps=deps))
    return Graph(tuple(layers), name=f"rand{n_layers}")


@pytest.fixture(scope="session")
def deit_t():
    return build_transformer(MODELS["deit_t"])


# one line per acceptance criterion, shown at the end of every run
ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
