from pathlib import Path

import numpy as np
import pytest

from l0cert import Ball0Spec, BoxDomain, InputDocument, LabeledInput, Network, load_input, load_model

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def toy_net() -> Network:
    return load_model((FIXTURES / "toy_network.json").read_bytes())


@pytest.fixture
def toy_input() -> InputDocument:
    return load_input((FIXTURES / "toy_input.json").read_bytes())


@pytest.fixture
def toy_domain(toy_input: InputDocument) -> BoxDomain:
    return toy_input.domain()


@pytest.fixture
def toy_ball(toy_input: InputDocument) -> Ball0Spec:
    return Ball0Spec(center=toy_input.center_array(), radius=2)


@pytest.fixture
def toy_labeled(toy_input: InputDocument) -> LabeledInput:
    return LabeledInput(center=toy_input.center_array(), label=0)


@pytest.fixture
def planted_net() -> Network:
    return load_model((FIXTURES / "planted_network.json").read_bytes())


@pytest.fixture
def planted_labeled() -> LabeledInput:
    return LabeledInput(center=np.full(6, 0.5), label=0)


@pytest.fixture
def unit_domain_6() -> BoxDomain:
    return BoxDomain.uniform(entries=6, lower=0.0, upper=1.0)


@pytest.fixture(scope="session")
def rate_fixture() -> tuple[Network, LabeledInput, BoxDomain]:
    """36 pixels, 3 classes with label 0 at the center. Six hidden neurons never change phase on [0, 1]^36, two
    cross zero near the center and only lower the margins of label 0."""
    document = load_input((FIXTURES / "rate_input.json").read_bytes())
    net = load_model((FIXTURES / "rate_network.json").read_bytes())
    return net, LabeledInput(center=document.center_array(), label=0), document.domain()
