import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", deadline=None, max_examples=60)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dijkstra8(trav, sources, res):
    """Reference 8-connected Dijkstra: axial cost res, diagonal res*sqrt(2)."""
    import heapq

    rows, cols = trav.shape
    dist = np.full(trav.shape, np.inf)
    heap = []
    for r, c in sources:
        dist[r, c] = 0.0
        heap.append((0.0, int(r), int(c)))
    heapq.heapify(heap)
    steps = [(dr, dc, res * (2**0.5 if dr and dc else 1.0)) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]
    while heap:
        d, r, c = heapq.heappop(heap)
        if d > dist[r, c]:
            continue
        for dr, dc, w in steps:
            nr, nc = r + dr, c + dc
            if 0 <= nr < rows and 0 <= nc < cols and trav[nr, nc] and d + w < dist[nr, nc]:
                dist[nr, nc] = d + w
                heapq.heappush(heap, (d + w, nr, nc))
    return dist


def euclid_lb(shape, sources, res):
    rr, cc = np.indices(shape)
    src = np.asarray(sources)
    d = np.full(shape, np.inf)
    for r, c in src:
        d = np.minimum(d, np.hypot(rr - r, cc - c) * res)
    return d


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion."""

    def record(num: int, ok: bool, detail: str) -> bool:
        _CRITERIA[num] = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_CRITERIA[num])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for num in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[num])
