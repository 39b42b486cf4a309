import json
import time
from contextlib import contextmanager

import numpy as np


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def log_event(action=None, status=None, market=None, duration_ms=None, warning=None, **fields):
    event = {
        "timestamp": time.time(),
        "action": action,
        "status": status,
        "market": market,
        **fields,
        "duration_ms": duration_ms,
        "warning": warning,
    }
    print(json.dumps({k: v for k, v in event.items() if v is not None}, default=_plain), flush=True)


@contextmanager
def timed(action, **fields):
    start = time.perf_counter()
    try:
        yield
    except Exception as exc:
        log_event(action=action, status="error", duration_ms=_elapsed(start), warning=str(exc), **fields)
        raise
    log_event(action=action, status="ok", duration_ms=_elapsed(start), **fields)


def _elapsed(start):
    return round((time.perf_counter() - start) * 1000.0, 3)
