from importlib import resources

import pytest

from catmt import corpus
from catmt.model import ModelConfig
from catmt.tokenizer import build_vocab
from catmt.trainer import TrainConfig, make_examples, train

SMALL = dict(d_model=64, h=4, d_k=16, d_v=16, d_ff=128, n_enc_layers=1, n_dec_layers=1, dropout_rate=0.0)


@pytest.fixture(scope="session")
def toy_path():
    return resources.files("catmt.data").joinpath("toy_corpus.jsonl")


@pytest.fixture(scope="session")
def toy(toy_path):
    return corpus.load(toy_path)


@pytest.fixture(scope="session")
def overfit(toy):
    """The small model trained 200 epochs on the 64 toy pairs."""
    src_vocab = build_vocab(toy.sources())
    tgt_vocab = build_vocab([p.encoded_target for p in toy])
    examples = make_examples(toy.sources(), [p.encoded_target for p in toy], src_vocab, tgt_vocab)
    cfg = ModelConfig(len(src_vocab), len(tgt_vocab), **SMALL)
    return train(examples, [], cfg, TrainConfig(epochs=200, batch_size=4), src_vocab, tgt_vocab)


# -- acceptance reporting -------------------------------------------------------------

_ACCEPTANCE: list[tuple[str, str, str]] = []


class _Criterion:
    def __init__(self, name):
        self.name = name
        self.notes = []

    def note(self, text):
        self.notes.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.notes) if exc_type is None else f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        _ACCEPTANCE.append((status, self.name, detail))
        return False


@pytest.fixture
def criterion():
    """``with criterion("name") as c: ...`` records one PASS/FAIL line for the summary."""
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {name}" + (f"  ({detail})" if detail else ""))
