import numpy as np
import pytest

from psytext.instrument import (
    Construct,
    Instrument,
    PromptTemplate,
    ResponseScale,
    ScaleItem,
)
from psytext.ratings import RatingMatrix


@pytest.fixture
def likert4_scale() -> ResponseScale:
    return ResponseScale(
        labels=("strongly disagree", "disagree", "agree", "strongly agree"),
        aliases=(("strong agree", "strongly agree"), ("strong disagree", "strongly disagree")),
    )


def make_instrument(
    n_constructs: int = 2,
    items_per_construct: int = 4,
    reverse: tuple[str, ...] = (),
    scale: ResponseScale | None = None,
) -> Instrument:
    constructs = []
    items = []
    for c in range(n_constructs):
        cid = f"f{c + 1}"
        constructs.append(
            Construct(
                id=cid,
                name=f"Factor {c + 1}",
                definition=f"test construct {c + 1}",
                expected_correlates=(("crit", "+"),),
            )
        )
        for i in range(items_per_construct):
            iid = f"{cid}_i{i + 1}"
            items.append(
                ScaleItem(
                    id=iid,
                    construct_id=cid,
                    statement=f"The author shows trait {c + 1} aspect {i + 1}",
                    reverse_keyed=iid in reverse,
                )
            )
    return Instrument(
        constructs=tuple(constructs),
        items=tuple(items),
        scale=scale
        or ResponseScale(labels=("strongly disagree", "disagree", "agree", "strongly agree")),
        template=PromptTemplate(),
    )


@pytest.fixture
def instrument_2x4() -> Instrument:
    return make_instrument(2, 4)


@pytest.fixture
def instrument_1x3() -> Instrument:
    return make_instrument(1, 3)


def continuous_matrix(X: np.ndarray, prefix: str = "t") -> RatingMatrix:
    """Wrap a continuous data array as a RatingMatrix for analysis tests.

    Values are shifted to be >= 1 (correlation-based analyses are
    location invariant) and scale_max is set loosely.
    """
    X = np.asarray(X, dtype=float)
    Xs = X - X.min() + 1.0
    n, k = Xs.shape
    return RatingMatrix(
        text_ids=tuple(f"{prefix}{i:05d}" for i in range(n)),
        item_ids=tuple(f"i{j + 1}" for j in range(k)),
        values=Xs,
        missing=np.zeros((n, k), dtype=bool),
        scale_max=int(np.ceil(Xs.max())) + 1,
    )


def data_with_exact_cov(S: np.ndarray, n: int, seed: int = 0) -> np.ndarray:
    """Draw an n x k sample whose *sample* covariance equals S exactly.

    Whiten a random draw empirically, then color it with chol(S); any
    statistic of the sample covariance then sits exactly at its
    population value, which turns population identities into exact
    test assertions.
    """
    k = S.shape[0]
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, k))
    Z = Z - Z.mean(axis=0)
    C = np.cov(Z, rowvar=False, ddof=1)
    Z = Z @ np.linalg.inv(np.linalg.cholesky(C)).T
    return Z @ np.linalg.cholesky(S).T


def compound_symmetry(k: int, rho: float, variance: float = 1.0) -> np.ndarray:
    S = np.full((k, k), rho * variance)
    np.fill_diagonal(S, variance)
    return S


class StubProvider:
    """Scripted provider for gateway tests."""

    def __init__(self, responses, model_id="stub-model"):
        # responses: list of strings or exceptions, consumed in order;
        # the last entry repeats once exhausted.
        self.responses = list(responses)
        self.model_id = model_id
        self.call_count = 0
        self.calls = []

    def complete(self, prompt, *, text_id, item_id, attempt):
        self.calls.append((text_id, item_id, attempt))
        self.call_count += 1
        idx = min(self.call_count - 1, len(self.responses) - 1)
        resp = self.responses[idx]
        if isinstance(resp, Exception):
            raise resp
        return resp


class ConstantProvider:
    """Always answers with the same label."""

    def __init__(self, label, model_id="constant-model"):
        self.label = label
        self.model_id = model_id
        self.call_count = 0

    def complete(self, prompt, *, text_id, item_id, attempt):
        self.call_count += 1
        return self.label
