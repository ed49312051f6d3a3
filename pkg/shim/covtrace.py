"""Line and branch coverage tracing for workspace code, stdlib only.

A ``sys.settrace`` hook records, per file, every executed line and every
(from_line -> to_line) arc inside a frame; a static pass over the AST lists
the executable lines and the decision points (``if`` / ``while`` / ``for``).
A decision outcome counts as covered when the matching arc was observed:
the "true" outcome when an arc from the decision line reaches the first body
line, the "false" outcome when an arc from the decision line reaches
anything else (including falling off the end of the frame).

Limitations, by design: one-line decisions (``if x: y()``) produce no
observable arc and are not counted as branches; generator frames report
arcs only up to their first suspension with full fidelity.
"""

from __future__ import annotations

import ast
import json
import os
import sys

FORMAT_VERSION = 1
FRAME_EXIT = -1


class FileAnalysis:
    """Static facts about one source file."""

    def __init__(self, executable_lines, decisions):
        self.executable_lines = executable_lines  # set[int]
        self.decisions = decisions  # list[(decision_line, true_target_line)]


def analyze_source(source, filename="<source>"):
    tree = ast.parse(source, filename=filename)
    executable = set()
    decisions = []
    for node in ast.walk(tree):
        if isinstance(node, ast.stmt):
            executable.add(node.lineno)
        if isinstance(node, (ast.If, ast.While, ast.For, ast.AsyncFor)) and node.body:
            true_target = node.body[0].lineno
            if true_target != node.lineno:  # one-liners are unobservable
                decisions.append((node.lineno, true_target))
    return FileAnalysis(executable, sorted(set(decisions)))


class Tracer:
    """Records executed lines and arcs for files under *root*."""

    def __init__(self, root, omit=()):
        self.root = os.path.realpath(root) + os.sep
        self.omit = tuple(os.path.realpath(p) + os.sep for p in omit)
        self.lines = {}  # abspath -> set[int]
        self.arcs = {}  # abspath -> set[(int, int)]

    def _included(self, filename):
        if not filename or filename.startswith("<"):
            return False
        path = os.path.realpath(filename)
        if not path.startswith(self.root) or not path.endswith(".py"):
            return False
        return not any(path.startswith(prefix) for prefix in self.omit)

    def start(self):
        sys.settrace(self._global_trace)

    def stop(self):
        sys.settrace(None)

    def _global_trace(self, frame, event, arg):
        if event != "call":
            return None
        filename = frame.f_code.co_filename
        if not self._included(filename):
            return None
        path = os.path.realpath(filename)
        lines = self.lines.setdefault(path, set())
        arcs = self.arcs.setdefault(path, set())
        prev = [frame.f_lineno]

        def local(frame, event, arg):
            if event == "line":
                lineno = frame.f_lineno
                lines.add(lineno)
                arcs.add((prev[0], lineno))
                prev[0] = lineno
            elif event == "return":
                arcs.add((prev[0], FRAME_EXIT))
            return local

        return local


def _branch_outcomes(analysis, arcs):
    """(covered, total, detail) branch tallies for one file."""
    covered = 0
    detail = []
    outgoing = {}
    for frm, to in arcs:
        outgoing.setdefault(frm, set()).add(to)
    for line, true_target in analysis.decisions:
        exits = outgoing.get(line, set())
        true_taken = true_target in exits
        false_taken = any(to != true_target for to in exits)
        covered += int(true_taken) + int(false_taken)
        detail.append({"line": line, "true": true_taken, "false": false_taken})
    return covered, 2 * len(analysis.decisions), detail


def _percent(covered, total):
    return 100.0 if total == 0 else 100.0 * covered / total


def build_report(workspace, tracer, omit=()):
    """Coverage JSON document for every parseable .py file under *workspace*."""
    root = os.path.realpath(workspace)
    omit_real = tuple(os.path.realpath(p) + os.sep for p in omit)
    files = {}
    tot_stmt = tot_cov = tot_br = tot_br_cov = 0
    unparsed = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if d != "__pycache__" and not d.startswith("."))
        for name in sorted(filenames):
            if not name.endswith(".py"):
                continue
            path = os.path.realpath(os.path.join(dirpath, name))
            if any(path.startswith(prefix) for prefix in omit_real):
                continue
            rel = os.path.relpath(path, root)
            try:
                with open(path, encoding="utf-8", errors="replace") as fh:
                    analysis = analyze_source(fh.read(), filename=path)
            except SyntaxError:
                unparsed.append(rel)
                continue
            executed = tracer.lines.get(path, set()) & analysis.executable_lines
            arcs = tracer.arcs.get(path, set())
            br_cov, br_total, br_detail = _branch_outcomes(analysis, arcs)
            n_stmt = len(analysis.executable_lines)
            n_cov = len(executed)
            files[rel.replace(os.sep, "/")] = {
                "executable_lines": sorted(analysis.executable_lines),
                "executed_lines": sorted(executed),
                "missing_lines": sorted(analysis.executable_lines - executed),
                "branches": br_detail,
                "summary": {
                    "num_statements": n_stmt,
                    "covered_lines": n_cov,
                    "num_branches": br_total,
                    "covered_branches": br_cov,
                    "percent_line": round(_percent(n_cov, n_stmt), 4),
                    "percent_branch": round(_percent(br_cov, br_total), 4),
                },
            }
            tot_stmt += n_stmt
            tot_cov += n_cov
            tot_br += br_total
            tot_br_cov += br_cov
    return {
        "format": FORMAT_VERSION,
        "files": files,
        "unparsed": unparsed,
        "totals": {
            "num_statements": tot_stmt,
            "covered_lines": tot_cov,
            "num_branches": tot_br,
            "covered_branches": tot_br_cov,
            "percent_line": round(_percent(tot_cov, tot_stmt), 4),
            "percent_branch": round(_percent(tot_br_cov, tot_br), 4),
        },
    }


def write_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
