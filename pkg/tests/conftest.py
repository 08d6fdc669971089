import os
import tempfile

# Route log sinks away from the repository before any lab module is imported.
os.environ.setdefault("TREELAB_LOG_DIR", tempfile.mkdtemp(prefix="treelab-logs-"))

import pytest  # noqa: E402

from lab.core.clocks import ClockStream  # noqa: E402
from lab.core.tree import TreeWindow  # noqa: E402


@pytest.fixture
def binary_window() -> TreeWindow:
    return TreeWindow(2, 3, 0)


@pytest.fixture
def ternary_window() -> TreeWindow:
    return TreeWindow(3, 2, 0)


@pytest.fixture
def clock() -> ClockStream:
    return ClockStream(12345)
