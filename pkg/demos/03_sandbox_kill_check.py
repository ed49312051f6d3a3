"""Run a snippet against baseline and mutant workspaces and decide a kill.

Run:  python demos/03_sandbox_kill_check.py
"""

from mutagent.fixtures import demo_project_path
from mutagent.mutation import SubjectModule, generate_mutants
from mutagent.sandbox import SandboxExecutor, is_kill

module = SubjectModule.load(demo_project_path(), "tinyutils.py")
mutants = {m.id: m for m in generate_mutants(module)}
mutant = mutants["tinyutils.py::NumberReplacement::L14::0"]  # the total starts at 1
print("target mutant:")
print(mutant.diff)

executor = SandboxExecutor(demo_project_path())

probe = "from tinyutils import running_total\nprint(running_total([5]))\n"
pair = executor.run_pair(mutant, probe)
print(f"experiment -> baseline printed {pair.baseline.stdout.strip()!r}, "
      f"mutant printed {pair.mutant.stdout.strip()!r} ({pair.discrepancy.value})")

test = "from tinyutils import running_total\nassert running_total([5]) == [5]\n"
kill, verdict = executor.is_killing_test(mutant, test)
print(f"test -> kill={kill} "
      f"(baseline exit {verdict.baseline.exit_status}, mutant exit {verdict.mutant.exit_status})")
assert kill and is_kill(verdict)

suite = [("t_running.py", test)]
coverage = executor.measure_coverage(suite)
print(f"suite coverage: {coverage.line_percent:.1f}% lines, {coverage.branch_percent:.1f}% branches")
