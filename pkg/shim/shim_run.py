#!/usr/bin/env python3
"""Run one snippet against a workspace copy of the code under test.

Usage: python shim_run.py SNIPPET WORKSPACE [--nonce HEX]

Exit status convention:
    0   snippet ran to completion (pass)
    1   assertion failure, uncaught exception, or nonzero SystemExit
    2   the shim itself failed (bad arguments, unreadable snippet, ...)

The snippet's stdout is bracketed by sentinel lines so the caller can
separate it from anything else on the stream:

    ##SHIM-BEGIN##            (or ##SHIM-BEGIN:<nonce>## when --nonce given)
    ... snippet output ...
    ##SHIM-END##

A snippet that prints sentinel-looking text cannot forge the nonce-suffixed
form, which is why callers should always pass a fresh nonce.
"""

import argparse
import os
import sys
import traceback


class _NewlineTracker:
    """Pass-through stdout wrapper that remembers whether a newline closed it."""

    def __init__(self, stream):
        self._stream = stream
        self.ends_with_newline = True

    def write(self, text):
        if text:
            self.ends_with_newline = str(text).endswith("\n")
        return self._stream.write(text)

    def flush(self):
        self._stream.flush()

    def __getattr__(self, name):
        return getattr(self._stream, name)


def _emit(line):
    """Write a sentinel line even if the snippet sabotaged sys.stdout."""
    try:
        sys.stdout.write(line + "\n")
        sys.stdout.flush()
    except Exception:
        os.write(1, (line + "\n").encode("utf-8", "replace"))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("snippet")
    parser.add_argument("workspace")
    parser.add_argument("--nonce", default="")
    args = parser.parse_args(argv)

    suffix = f":{args.nonce}" if args.nonce else ""
    begin = f"##SHIM-BEGIN{suffix}##"
    end = f"##SHIM-END{suffix}##"

    workspace = os.path.abspath(args.workspace)
    if not os.path.isdir(workspace):
        print(f"shim: workspace is not a directory: {workspace}", file=sys.stderr)
        return 2
    try:
        with open(args.snippet, encoding="utf-8", errors="replace") as fh:
            source = fh.read()
    except OSError as exc:
        print(f"shim: cannot read snippet: {exc}", file=sys.stderr)
        return 2

    sys.dont_write_bytecode = True
    sys.path.insert(0, workspace)
    os.chdir(workspace)

    real_stdout = sys.stdout
    tracker = _NewlineTracker(real_stdout)
    status = 0
    _emit(begin)
    sys.stdout = tracker
    try:
        code = compile(source, os.path.abspath(args.snippet), "exec")
        exec(code, {"__name__": "__main__", "__file__": os.path.abspath(args.snippet)})
    except SystemExit as exc:
        if exc.code not in (None, 0):
            print(f"shim: snippet exited with {exc.code!r}", file=sys.stderr)
            status = 1
    except BaseException:
        traceback.print_exc()
        status = 1
    finally:
        sys.stdout = real_stdout
        try:
            if not tracker.ends_with_newline:
                _emit("")
        except Exception:
            pass
        _emit(end)
    return status


if __name__ == "__main__":
    sys.exit(main())
