import heapq

import pytest

from eigrpsim import runner


class FakeClock:
    """Hand-cranked stand-in for the engine scheduler in protocol tests."""

    def __init__(self):
        self.now = 0
        self._heap = []
        self._counter = 0

    def call_at(self, time_ps, action):
        self._counter += 1
        handle = [time_ps, self._counter, action, False]
        heapq.heappush(self._heap, handle)
        return handle

    def cancel(self, handle):
        handle[3] = True

    def advance_to(self, time_ps):
        while self._heap and self._heap[0][0] <= time_ps:
            time, _, action, cancelled = heapq.heappop(self._heap)
            if cancelled:
                continue
            self.now = time
            action()
        self.now = max(self.now, time_ps)


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture(scope="session")
def scenario1_run():
    return runner.run_scenario(runner.BUILTIN_SCENARIOS["scenario1"])


@pytest.fixture(scope="session")
def scenario2_run():
    return runner.run_scenario(runner.BUILTIN_SCENARIOS["scenario2"])
