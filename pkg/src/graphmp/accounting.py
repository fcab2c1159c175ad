"""Instrumentation: allocation accounting and the kernel dispatch log.

Both facilities are opt-in context managers. When no meter / no capture is
active the hooks cost a couple of attribute lookups and nothing else, so the
kernels always call them unconditionally.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass


class MemoryCapExceeded(RuntimeError):
    """Raised when tracked allocations would exceed the configured cap."""


class AllocationMeter:
    """Tracks bytes of engine-allocated matrices: current, peak, optional cap.

    The meter counts feature-sized work (kernel outputs, chunk temporaries,
    per-thread buffers, dense intermediates), not graph topology caches.
    Thread safe; worker threads report into the same meter.
    """

    def __init__(self, cap_bytes=None):
        self.current_bytes = 0
        self.peak_bytes = 0
        self.largest_single_bytes = 0
        self.cap_bytes = cap_bytes
        self.n_allocations = 0
        self._lock = threading.Lock()

    def allocate(self, nbytes):
        nbytes = int(nbytes)
        with self._lock:
            if self.cap_bytes is not None and self.current_bytes + nbytes > self.cap_bytes:
                raise MemoryCapExceeded(
                    "allocation of %d bytes would push tracked usage to %d, over the cap of %d"
                    % (nbytes, self.current_bytes + nbytes, self.cap_bytes)
                )
            self.current_bytes += nbytes
            self.n_allocations += 1
            if nbytes > self.largest_single_bytes:
                self.largest_single_bytes = nbytes
            if self.current_bytes > self.peak_bytes:
                self.peak_bytes = self.current_bytes

    def free(self, nbytes):
        with self._lock:
            self.current_bytes -= int(nbytes)


_active_meters = []
_active_logs = []
_state_lock = threading.Lock()


@contextmanager
def track_allocations(cap_bytes=None):
    """Context manager yielding an AllocationMeter that observes engine allocations."""
    meter = AllocationMeter(cap_bytes)
    with _state_lock:
        _active_meters.append(meter)
    try:
        yield meter
    finally:
        with _state_lock:
            _active_meters.remove(meter)


def register_bytes(nbytes):
    """Report an allocation of nbytes to every active meter."""
    if _active_meters:
        for m in list(_active_meters):
            m.allocate(nbytes)


def release_bytes(nbytes):
    if _active_meters:
        for m in list(_active_meters):
            m.free(nbytes)


def register(arr):
    """Report a freshly allocated array; returns it for call-site convenience."""
    if _active_meters:
        register_bytes(arr.nbytes)
    return arr


@contextmanager
def transient(nbytes):
    """Account for a temporary of nbytes alive only inside the with-block."""
    register_bytes(nbytes)
    try:
        yield
    finally:
        release_bytes(nbytes)


@dataclass(frozen=True)
class DispatchRecord:
    """One kernel dispatch: what ran, on which graph, how."""
    kernel: str      # 'gspmm' | 'gsddmm'
    graph_id: int
    phi: str
    rho: str         # '-' for gsddmm
    strategy: str
    rows: int
    cols: int

    def line(self):
        return "%s,%d,%s,%s,%s,%d,%d" % (
            self.kernel, self.graph_id, self.phi, self.rho,
            self.strategy, self.rows, self.cols)


@contextmanager
def capture_dispatch():
    """Context manager yielding a list that collects DispatchRecords in order."""
    sink = []
    with _state_lock:
        _active_logs.append(sink)
    try:
        yield sink
    finally:
        with _state_lock:
            _active_logs.remove(sink)


def log_dispatch(kernel, graph_id, phi, rho, strategy, rows, cols):
    if _active_logs:
        rec = DispatchRecord(kernel, graph_id, phi, rho, strategy, rows, cols)
        for sink in list(_active_logs):
            sink.append(rec)


def write_dispatch_log(path, records):
    """Write records in the one-line-per-dispatch text format."""
    with open(path, "w") as f:
        for r in records:
            f.write(r.line() + "\n")
