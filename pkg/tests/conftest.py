import numpy as np
import pandas as pd
import pytest
from hypothesis import settings

from spendnet.model import ledger_frame
from spendnet.synthgen import SynthConfig, generate, write_population
from spendnet.taxonomy import load_taxonomy

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def taxonomy():
    return load_taxonomy()


@pytest.fixture(scope="session")
def population(taxonomy):
    """A small generated population shared by the slower module tests."""
    return generate(SynthConfig(n_egos=1000, mean_degree=8, seed=3), taxonomy)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, population):
    out = tmp_path_factory.mktemp("corpus")
    write_population(population, out)
    return out


def ledger(rows):
    """Ledger from (ego, month, cents, mcc) tuples."""
    if not rows:
        return ledger_frame([], [], [], [])
    ego, month, cents, mcc = zip(*rows)
    return ledger_frame(ego, month, cents, mcc)


def profiles(rows):
    """Profile frame from (ego, age, gender) tuples; gender 0/1/None."""
    df = pd.DataFrame({
        "ego_id": [r[0] for r in rows],
        "age": np.array([r[1] for r in rows], dtype=np.int64),
        "gender": np.array([np.nan if r[2] is None else float(r[2]) for r in rows]),
        "zip": ["" for _ in rows],
    })
    return df.set_index("ego_id").sort_index()


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
