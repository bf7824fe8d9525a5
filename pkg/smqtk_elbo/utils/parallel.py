import heapq
import logging
import multiprocessing
import queue
import threading
import traceback
from typing import Any, Callable, Iterable, Iterator, List, Optional, Sequence, Tuple, TypeVar


LOG = logging.getLogger(__name__)
T_co = TypeVar("T_co", covariant=True)


def parallel_map(
    work_func: Callable[..., T_co],
    *sequences: Iterable,
    cores: Optional[int] = None,
    ordered: bool = True,
    buffer_factor: float = 2.0,
    heart_beat: float = 0.001,
    name: Optional[str] = None,
) -> "ParallelResultsIterator[T_co]":
    """
    Thread-parallel mapping of a work function over zipped input sequences.

    Results are yielded in input order by default. Work is pulled from the
    inputs lazily, so at most ``int(cores * buffer_factor) + cores`` inputs
    are in flight at any one time.

    When ``cores`` is 1, work is performed serially in the iterating thread,
    which makes the result sequence independent of thread scheduling in the
    strictest sense (no worker threads are created at all).

    Exceptions raised by the work function are transported back and
    re-raised from the results iterator, stopping remaining work.

    :param work_func: Function that performs some work on input data.
    :param sequences: Input sequences zipped together into the positional
        arguments of ``work_func``.
    :param cores: Number of worker threads. ``None`` or a value <= 0 uses
        all available cores.
    :param ordered: Yield results in the order of the input sequences.
    :param buffer_factor: Multiplier against ``cores`` bounding the work and
        result queue sizes.
    :param heart_beat: Polling interval in seconds while waiting on queues.
        Must be positive.
    :param name: Optional name used in worker names and log messages.

    :raises ValueError: ``heart_beat`` is not positive.

    :return: Iterator over work results.

    Example
    -------
    >>> list(parallel_map(pow, [1, 2, 3], [2, 2, 2], cores=2))
    [1, 4, 9]
    """
    if heart_beat <= 0:
        raise ValueError("heart_beat must be >0.")
    if cores is None or cores <= 0:
        cores = multiprocessing.cpu_count()
        LOG.debug("Using all cores (%d)", cores)
    return ParallelResultsIterator(
        work_func, zip(*sequences), cores, ordered,
        max(1, int(cores * buffer_factor)), heart_beat, name
    )


class _TerminalPacket (object):
    """
    Signals that no more work packets follow.
    """


class ParallelResultsIterator (Iterator[T_co]):
    """
    Iterator returned from ``parallel_map``, managing the feeder and worker
    threads and consumption of the results queue.

    :param work_func: Function applied to each argument tuple.
    :param arg_iter: Iterator of argument tuples.
    :param cores: Number of worker threads.
    :param ordered: Yield results in input order.
    :param queue_size: Maximum size of the work and result queues.
    :param heart_beat: Polling interval in seconds.
    :param name: Optional name for logging.
    """

    def __init__(
        self,
        work_func: Callable[..., T_co],
        arg_iter: Iterator[Tuple],
        cores: int,
        ordered: bool,
        queue_size: int,
        heart_beat: float,
        name: Optional[str],
    ):
        self.name = name
        self._l_prefix = f"[PRI{(name and f'::{name}') or ''}]"
        self.work_func = work_func
        self.arg_iter = arg_iter
        self.cores = cores
        self.ordered = ordered
        self.heart_beat = heart_beat

        self.work_queue: "queue.Queue[Any]" = queue.Queue(maxsize=queue_size)
        self.results_queue: "queue.Queue[Any]" = queue.Queue(maxsize=queue_size)
        self.stop_event = threading.Event()
        self.threads: List[threading.Thread] = []
        self.has_started = False

        self.found_terminals = 0
        self.result_heap: List[Tuple[int, Any]] = []
        self.next_index = 0

    def __next__(self) -> T_co:
        if self.cores == 1:
            # Serial path: no threads, input order by construction.
            args = next(self.arg_iter)
            return self.work_func(*args)
        try:
            if not self.has_started:
                self._start()
            while self.found_terminals < len(self.threads) - 1:
                if self.ordered and self.result_heap \
                        and self.result_heap[0][0] == self.next_index:
                    break
                packet = self._results_get()
                if isinstance(packet, _TerminalPacket):
                    self.found_terminals += 1
                elif isinstance(packet[0], BaseException):
                    ex, formatted = packet
                    LOG.warning(f"{self._l_prefix} Received exception: {ex}\n{formatted}")
                    raise ex
                elif self.ordered:
                    heapq.heappush(self.result_heap, packet)
                else:
                    return packet[1]
            if self.result_heap:
                _, result = heapq.heappop(self.result_heap)
                self.next_index += 1
                return result
            raise StopIteration()
        except BaseException:
            self.stop()
            raise

    def _start(self) -> None:
        LOG.log(1, f"{self._l_prefix} Starting {self.cores} workers")
        for i in range(self.cores):
            t = threading.Thread(
                target=self._work, name=f"{self.name or 'parallel_map'}-{i}",
                daemon=True
            )
            self.threads.append(t)
        self.threads.append(threading.Thread(
            target=self._feed, name=f"{self.name or 'parallel_map'}-feeder",
            daemon=True
        ))
        for t in self.threads:
            t.start()
        self.has_started = True

    def _feed(self) -> None:
        try:
            for i, args in enumerate(self.arg_iter):
                if not self._put(self.work_queue, (i, args)):
                    return
        except Exception as ex:
            self._put(self.results_queue, (ex, traceback.format_exc()))
        for _ in range(self.cores):
            self._put(self.work_queue, _TerminalPacket())

    def _work(self) -> None:
        while not self.stopped():
            try:
                packet = self.work_queue.get(timeout=self.heart_beat)
            except queue.Empty:
                continue
            if isinstance(packet, _TerminalPacket):
                self._put(self.results_queue, packet)
                return
            i, args = packet
            try:
                result = self.work_func(*args)
            except Exception as ex:
                self._put(self.results_queue, (ex, traceback.format_exc()))
                return
            self._put(self.results_queue, (i, result))

    def _put(self, q: "queue.Queue[Any]", value: Any) -> bool:
        while not self.stopped():
            try:
                q.put(value, timeout=self.heart_beat)
                return True
            except queue.Full:
                pass
        return False

    def _results_get(self) -> Any:
        while not self.stopped():
            try:
                return self.results_queue.get(timeout=self.heart_beat)
            except queue.Empty:
                pass
        raise StopIteration()

    def stop(self) -> None:
        """
        Stop workers and join all threads.
        """
        self.stop_event.set()
        for t in self.threads:
            if t is not threading.current_thread():
                t.join()

    def stopped(self) -> bool:
        """
        :return: If this iterator has been stopped.
        """
        return self.stop_event.is_set()


def chunk_bounds(n: int, chunks: int) -> Sequence[Tuple[int, int]]:
    """
    Split ``range(n)`` into at most ``chunks`` contiguous, near-equal
    ``(start, stop)`` pairs.

    >>> chunk_bounds(5, 2)
    [(0, 3), (3, 5)]

    :param n: Number of items.
    :param chunks: Desired number of chunks (clamped to ``[1, n]``).

    :return: List of ``(start, stop)`` pairs covering ``range(n)`` in order.
    """
    chunks = max(1, min(int(chunks), n))
    base, extra = divmod(n, chunks)
    bounds = []
    start = 0
    for c in range(chunks):
        stop = start + base + (1 if c < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds
