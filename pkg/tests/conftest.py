import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def tiny_cfg():
    from burnnet.model import BurnNetConfig
    return BurnNetConfig(input_shape=(1, 16, 18), encoder_channels=(3, 4, 4, 6),
                         bottleneck_channels=4, decoder_channels=(6, 4, 4, 3),
                         epochs=5, source_epochs=5, batch=8, seed=2)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        ok, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
