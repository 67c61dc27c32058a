import pytest

from blmkit.data import LexType, Task
from blmkit.lexicon import demo_lexicon


@pytest.fixture(scope="session")
def lexicon():
    return demo_lexicon()


@pytest.fixture(scope="session")
def agr_instances(lexicon):
    from blmkit.generator import generate
    return generate(Task.AGREEMENT, LexType.TYPE_I, lexicon, 24, seed=11)


@pytest.fixture(scope="session")
def od_instances(lexicon):
    from blmkit.generator import generate
    return generate(Task.OD, LexType.TYPE_II, lexicon, 24, seed=11)
