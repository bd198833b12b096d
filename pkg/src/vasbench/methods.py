"""Reference methods speaking the harness wire protocol.

Usage::

    python -m vasbench.methods echo              # returns the input raster as scores
    python -m vasbench.methods sleep 100         # echo after sleeping 100 ms per frame
    python -m vasbench.methods wrongdims         # replies with a raster one column short
    python -m vasbench.methods crash 3           # exits with status 3 on the third frame

``serve`` is the loop a Python method needs: it handles framing and calls the
given function once per frame.
"""

import argparse
import struct
import sys
import time

import numpy as np

from .dataset_io import encode_raster, read_exact, read_raster_from
from .raster import ScoreMap

INDEX = struct.Struct("<I")


def serve(fn, stdin=None, stdout=None):
    """Answer requests until stdin closes. ``fn(index, raster) -> ScoreMap``."""
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    while True:
        head = read_exact(stdin, INDEX.size)
        if len(head) < INDEX.size:
            return
        (index,) = INDEX.unpack(head)
        raster = read_raster_from(stdin)
        if raster is None:
            return
        out = fn(index, raster)
        stdout.write(INDEX.pack(index) + encode_raster(out, "score"))
        stdout.flush()


def _echo(index, raster):
    return ScoreMap(np.asarray(raster, dtype=np.float32))


def main(argv=None):
    p = argparse.ArgumentParser(prog="python -m vasbench.methods")
    sub = p.add_subparsers(dest="name", required=True)
    sub.add_parser("echo")
    s = sub.add_parser("sleep")
    s.add_argument("ms", type=float)
    sub.add_parser("wrongdims")
    c = sub.add_parser("crash")
    c.add_argument("at", type=int)
    args = p.parse_args(argv)

    if args.name == "echo":
        fn = _echo
    elif args.name == "sleep":
        def fn(index, raster):
            time.sleep(args.ms / 1000.0)
            return _echo(index, raster)
    elif args.name == "wrongdims":
        def fn(index, raster):
            return ScoreMap(np.asarray(raster, dtype=np.float32)[:, :-1])
    else:
        def fn(index, raster):
            if index >= args.at:
                sys.stdout.flush()
                sys.exit(args.at)
            return _echo(index, raster)
    serve(fn)


if __name__ == "__main__":
    main()
