"""Collects one pass/fail line per acceptance criterion for the terminal summary."""
import time
from contextlib import contextmanager

LINES = []


@contextmanager
def criterion(number: int, title: str, budget_s: float):
    """Time a criterion body; record PASS only if it finished cleanly within budget.

    The body yields a dict it may fill with a ``detail`` string.
    """
    info = {"detail": ""}
    t0 = time.perf_counter()
    try:
        yield info
    except BaseException as exc:
        dt = time.perf_counter() - t0
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        _emit(f"FAIL  #{number:>2} {title} ({dt:.1f}s / {budget_s:g}s): {msg[:160]}")
        raise
    dt = time.perf_counter() - t0
    detail = f" {info['detail']}" if info["detail"] else ""
    if dt >= budget_s:
        _emit(f"FAIL  #{number:>2} {title} ({dt:.1f}s / {budget_s:g}s): over time budget{detail}")
        raise AssertionError(f"criterion {number} took {dt:.1f}s, budget {budget_s}s")
    _emit(f"PASS  #{number:>2} {title} ({dt:.1f}s / {budget_s:g}s){detail}")


def _emit(line: str):
    LINES.append(line)
    print(line, flush=True)
