"""Run an external segmentation method under a replay clock.

The method is one long-lived subprocess. For every frame the harness writes a
request to its stdin and waits for the matching response on its stdout before
sending the next frame, so there is never more than one frame in flight::

    request   u32 LE frame index, then one raster (input channel)
    response  u32 LE frame index, then one SCOR raster of the same size

A frame's latency runs from the moment the last request byte has been handed
to the pipe until the last response byte has been read, on the monotonic
clock. Encoding the request happens before the clock starts. When the
response is complete before the writer thread gets to read the clock after
the write, the time is measured from just before the write instead.

Before the first timed frame the harness sends one untimed warm-up request
carrying frame index 0 and the first frame's raster, so model loading and
interpreter start-up are not charged to frame 1.
"""

import queue
import shlex
import struct
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .dataset_io import (
    DatasetSequence,
    ScoreSequence,
    encode_raster,
    read_exact,
    read_raster_from,
    read_timing,
    write_raster,
    write_timing,
)
from .errors import MethodError, MissingFrameError, ProtocolError, RasterFormatError
from .raster import ScoreMap
from .streaming import LatencyProfile

INDEX = struct.Struct("<I")
DEFAULT_TIMEOUT_MS = 10_000


@dataclass
class MethodRun:
    method_id: str
    scores: object
    latency: LatencyProfile
    exit_status: object = None
    log_path: object = None
    failed_frames: tuple = field(default=())

    @property
    def complete(self):
        return not self.failed_frames and len(self.scores) == len(self.latency.per_frame_ms)


def _reader(stream, out):
    try:
        while True:
            head = read_exact(stream, INDEX.size)
            if not head:
                out.put(None)
                return
            if len(head) < INDEX.size:
                out.put(ProtocolError("truncated frame index"))
                return
            (index,) = INDEX.unpack(head)
            raster = read_raster_from(stream)
            if raster is None:
                out.put(ProtocolError("stream ended after frame index", index))
                return
            out.put((index, raster, time.perf_counter()))
    except (RasterFormatError, OSError, ValueError) as exc:
        out.put(ProtocolError(f"protocol desync: {exc}"))


def _command(method_cmd):
    return shlex.split(method_cmd) if isinstance(method_cmd, str) else list(method_cmd)


def run_batch(method_cmd, sequence_dir, out_dir, method_id="method", timeout_ms=DEFAULT_TIMEOUT_MS,
              input_channel="mask", warmup=True, startup_timeout_ms=60_000):
    """Stream every frame of ``sequence_dir`` through the method.

    Scores go to ``out_dir/scores/<method_id>/``, timings to
    ``out_dir/timing/<method_id>.csv`` and the method's stderr to
    ``out_dir/logs/<method_id>.log``. Raises :class:`MethodError` (carrying the
    partial run) on crash or timeout, :class:`ProtocolError` on a malformed
    response.
    """
    seq = DatasetSequence(sequence_dir)
    out_dir = Path(out_dir)
    score_dir = out_dir / "scores" / method_id
    score_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "logs" / f"{method_id}.log"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    fps = seq.manifest.fps
    width, height = seq.manifest.dims

    latencies = []
    failed = []

    def partial(status=None):
        return MethodRun(method_id, ScoreSequence(score_dir, len(latencies)),
                         LatencyProfile.measured(latencies, fps), status, log_path, tuple(failed))

    with open(log_path, "wb") as log:
        proc = subprocess.Popen(_command(method_cmd), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                stderr=log, bufsize=0)
        responses = queue.Queue()
        reader = threading.Thread(target=_reader, args=(proc.stdout, responses), daemon=True)
        reader.start()
        def exchange(index, raster, timeout):
            request = INDEX.pack(index) + encode_raster(raster, input_channel)
            before = time.perf_counter()
            try:
                proc.stdin.write(request)
                proc.stdin.flush()
            except (BrokenPipeError, OSError):
                failed.append(index)
                raise MethodError(f"method exited before frame {index} "
                                  f"(status {proc.wait()})", partial(proc.returncode)) from None
            start = time.perf_counter()
            try:
                item = responses.get(timeout=timeout / 1000.0)
            except queue.Empty:
                failed.append(index)
                proc.kill()
                raise MethodError(f"frame {index}: no response within {timeout:g} ms",
                                  partial(proc.wait())) from None
            if item is None:
                failed.append(index)
                raise MethodError(f"method exited during frame {index} (status {proc.wait()})",
                                  partial(proc.returncode))
            if isinstance(item, Exception):
                raise ProtocolError(str(item), index)
            got, scores, done = item
            if got != index:
                raise ProtocolError(f"response carries frame index {got}", index)
            if not isinstance(scores, ScoreMap):
                raise ProtocolError("response is not a score raster", index)
            if (scores.width, scores.height) != (width, height):
                raise ProtocolError(
                    f"response is {scores.width}x{scores.height}, expected {width}x{height}", index)
            # a fast reply can be stamped before this thread gets to read the clock
            # after the write; fall back to the clock read just before writing
            elapsed = done - start if done >= start else done - before
            return scores, elapsed * 1000.0

        def input_raster(frame):
            raster = getattr(frame, input_channel)
            if raster is None:
                raise ProtocolError(f"sequence has no {input_channel} channel", frame.index)
            return raster

        try:
            if warmup:
                exchange(0, input_raster(seq[0]), max(timeout_ms, startup_timeout_ms))
            for t in range(len(seq)):
                frame = seq[t]
                scores, ms = exchange(frame.index, input_raster(frame), timeout_ms)
                latencies.append(ms)
                write_raster(score_dir / f"{frame.index:06d}.scor", scores, "score")
            proc.stdin.close()
            try:
                status = proc.wait(timeout=timeout_ms / 1000.0)
            except subprocess.TimeoutExpired:
                proc.kill()
                status = proc.wait()
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait()

    write_timing(out_dir / "timing" / f"{method_id}.csv", latencies)
    return partial(status)


def load_precomputed(scores_dir, timing_csv, fps, frame_count, method_id="precomputed"):
    """A run from score files on disk and a ``frame_index,inference_ms`` CSV."""
    scores = ScoreSequence(scores_dir, frame_count)
    missing = scores.missing()
    if missing:
        raise MissingFrameError(missing[0], "score", scores.path(missing[0] - 1))
    per_frame = read_timing(timing_csv, frame_count)
    return MethodRun(method_id, scores, LatencyProfile.measured(per_frame, fps), 0, None)


def bundled_method_cmd(name, *args):
    """Command line for one of the reference methods shipped in :mod:`vasbench.methods`."""
    return [sys.executable, "-m", "vasbench.methods", name, *map(str, args)]
