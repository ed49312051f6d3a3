"""Generate mutants of the bundled demo project and look at a few diffs.

Run:  python demos/01_generate_mutants.py
"""

from mutagent.fixtures import demo_project_path
from mutagent.mutation import SubjectModule, generate_mutants, sample_mutants

module = SubjectModule.load(demo_project_path(), "tinyutils.py")
print(f"subject: {module.path} ({module.line_count} lines)")

mutants = generate_mutants(module)
print(f"\n{len(mutants)} mutants found:")
for mutant in mutants:
    point = mutant.point
    print(f"  {mutant.id:<48} {point.original_lexeme!r} -> {point.replacement_lexeme!r}")

print("\nfirst mutant's diff:")
print(mutants[0].diff)

sampled = sample_mutants(mutants, limit=4, seed=7)
print(f"seeded sample of 4 (stable across runs): {[m.id for m in sampled]}")
