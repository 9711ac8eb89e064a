import random

import pytest
import torch

from masktriage.encoder import EncoderConfig, pretrain_encoder
from masktriage.labels import NON_SECURITY, SECURITY
from masktriage.preprocess import PreprocessedIssue
from masktriage.surrogates import LexiconEntry, SurrogateLexicon

torch.set_num_threads(2)

TOY_SEC_KEYWORDS = ["exploit", "overflow", "breach"]
TOY_NON_KEYWORDS = ["button", "layout", "theme"]
TOY_SEC_CONTEXT = ["attacker", "payload", "memory", "credential", "kernel", "socket"]
TOY_NON_CONTEXT = ["color", "font", "margin", "resize", "banner", "widget"]


def make_toy_issues(n=120, seed=0):
    """Tiny separable corpus: every issue carries class keywords and
    class-correlated context."""
    rng = random.Random(seed)
    issues = []
    for i in range(n):
        label = SECURITY if i % 2 == 0 else NON_SECURITY
        keywords = TOY_SEC_KEYWORDS if label == SECURITY else TOY_NON_KEYWORDS
        context = TOY_SEC_CONTEXT if label == SECURITY else TOY_NON_CONTEXT
        tokens = [rng.choice(keywords)] + rng.choices(context, k=6) + [rng.choice(keywords)]
        rng.shuffle(tokens)
        issues.append(PreprocessedIssue(issue_id=f"toy/repo#{i}", tokens=tokens, label=label))
    return issues


def make_toy_lexicon(k=3):
    return SurrogateLexicon(
        entries={
            SECURITY: [LexiconEntry(w, float(k - i), i + 1) for i, w in enumerate(TOY_SEC_KEYWORDS)],
            NON_SECURITY: [LexiconEntry(w, float(k - i), i + 1) for i, w in enumerate(TOY_NON_KEYWORDS)],
        },
        k=k,
    )


@pytest.fixture(scope="session")
def toy_issues():
    return make_toy_issues()


@pytest.fixture(scope="session")
def toy_lexicon():
    return make_toy_lexicon()


@pytest.fixture(scope="session")
def toy_encoder_dir(tmp_path_factory, toy_issues):
    out = tmp_path_factory.mktemp("encoder") / "ckpt"
    config = EncoderConfig(hidden_size=32, num_layers=1, num_heads=2, ffn_size=64,
                           max_positions=32, seed=3, pretrain_epochs=1)
    pretrain_encoder([p.tokens for p in toy_issues], config, out)
    return out
