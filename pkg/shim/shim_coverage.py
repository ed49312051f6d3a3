#!/usr/bin/env python3
"""Run a suite of test snippets under branch coverage and write a JSON report.

Usage: python shim_coverage.py SUITE_DIR WORKSPACE --report PATH

Every ``*.py`` file in SUITE_DIR is executed (sorted order, one shared
process, fresh globals each) with WORKSPACE first on the module search path.
The report is written whether or not tests fail.

Exit status convention:
    0   every test passed
    1   at least one test failed
    2   the coverage tracer is unavailable or the shim itself failed
"""

import argparse
import os
import sys
import traceback


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("suite_dir")
    parser.add_argument("workspace")
    parser.add_argument("--report", required=True)
    args = parser.parse_args(argv)

    sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
    try:
        import covtrace
    except ImportError as exc:
        print(f"shim: coverage tracer unavailable: {exc}", file=sys.stderr)
        return 2

    suite_dir = os.path.abspath(args.suite_dir)
    workspace = os.path.abspath(args.workspace)
    if not os.path.isdir(suite_dir) or not os.path.isdir(workspace):
        print("shim: suite dir and workspace must be directories", file=sys.stderr)
        return 2

    tests = sorted(
        os.path.join(suite_dir, name)
        for name in os.listdir(suite_dir)
        if name.endswith(".py")
    )

    sys.dont_write_bytecode = True
    sys.path.insert(0, workspace)
    os.chdir(workspace)

    tracer = covtrace.Tracer(workspace, omit=[suite_dir])
    failures = 0
    tracer.start()
    try:
        for path in tests:
            try:
                with open(path, encoding="utf-8", errors="replace") as fh:
                    source = fh.read()
                code = compile(source, path, "exec")
                exec(code, {"__name__": "__main__", "__file__": path})
            except SystemExit as exc:
                if exc.code not in (None, 0):
                    failures += 1
                    print(f"shim: FAIL {os.path.basename(path)} (exit {exc.code!r})", file=sys.stderr)
                else:
                    print(f"shim: ok   {os.path.basename(path)}", file=sys.stderr)
            except BaseException:
                failures += 1
                print(f"shim: FAIL {os.path.basename(path)}", file=sys.stderr)
                traceback.print_exc()
            else:
                print(f"shim: ok   {os.path.basename(path)}", file=sys.stderr)
    finally:
        tracer.stop()
        try:
            report = covtrace.build_report(workspace, tracer, omit=[suite_dir])
            covtrace.write_report(report, args.report)
        except Exception as exc:
            print(f"shim: cannot write report: {exc}", file=sys.stderr)
            return 2

    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
