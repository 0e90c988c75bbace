import numpy as np
import pytest

from sigdrawdown.approximator import fit_drawdown_approximator
from sigdrawdown.generator import TrainConfig, split_train_validation, train
from sigdrawdown.ingest import PortfolioSpec, bundled_prices, portfolio_series
from sigdrawdown.paths import make_blocks

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {key}: {detail}")


@pytest.fixture(scope="session")
def prices():
    return bundled_prices()


@pytest.fixture(scope="session")
def equal_weight_blocks(prices):
    """Rebased 20-day blocks of the equal-weight portfolio."""
    series = portfolio_series(prices, PortfolioSpec(np.full(len(prices.assets), 0.25)))
    return make_blocks(series, 20, rebase=True)


@pytest.fixture(scope="session")
def vae_pair(equal_weight_blocks):
    """Default-config VAE and xi-VAE trained on the first 2000 blocks.

    The approximator is fitted once on the training part of those blocks
    and shared by both runs.
    """
    blocks = equal_weight_blocks[:2000]
    fit_part, _ = split_train_validation(blocks, TrainConfig().val_fraction)
    dd = fit_drawdown_approximator(fit_part, 4)
    xi = train(blocks, dd, TrainConfig())
    plain = train(blocks, dd, TrainConfig(alpha=0.0))
    return dict(blocks=blocks, heldout=equal_weight_blocks[2000:], dd=dd, xi=xi, plain=plain)
