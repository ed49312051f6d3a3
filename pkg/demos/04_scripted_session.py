"""Drive one full conversation session with a scripted stand-in model.

The "model" here is a canned two-reply script (experiment, then killing
test), which is exactly the shape a live backend produces; swap in a
ChatBackend in live mode and nothing else changes.

Run:  python demos/04_scripted_session.py
"""

from decimal import Decimal

from mutagent.campaign import run_mutant_session
from mutagent.conversation import Approach
from mutagent.fixtures import demo_project_path
from mutagent.llm import ChatBackend, Live, PriceTable, TokenUsage
from mutagent.mutation import SubjectModule, generate_mutants
from mutagent.sandbox import SandboxExecutor

REPLIES = [
    """## Hypothesis

If the running total starts at 1 instead of 0, every prefix sum shifts by one.

## Experiment

```python
from tinyutils import running_total

print(running_total([5]))
```
""",
    """## Conclusion

- The baseline printed [5], the mutant printed [6]: the seed value leaked.

## Test

```python
from tinyutils import running_total

def test_total_starts_from_zero():
    \"\"\"A one-element list's total must equal that element.\"\"\"
    assert running_total([5]) == [5]

test_total_starts_from_zero()
```
""",
]


def scripted(turns, model, params):
    stage = sum(1 for t in turns if t["role"] == "assistant")
    return REPLIES[stage], TokenUsage(cached_prompt=900, uncached_prompt=300, completion=120)


module = SubjectModule.load(demo_project_path(), "tinyutils.py")
mutant = next(m for m in generate_mutants(module) if m.id == "tinyutils.py::NumberReplacement::L14::0")

backend = ChatBackend(Live("http://unused", "scripted-demo"), transport=scripted)
executor = SandboxExecutor(demo_project_path())
prices = PriceTable(Decimal("0.075"), Decimal("0.15"), Decimal("0.60"))

result = run_mutant_session(mutant, Approach.SCIENTIFIC_0SHOT, backend, executor, prices=prices)

print(f"outcome:         {result.outcome.value}")
print(f"iterations used: {result.iterations_used}")
print(f"tokens:          {result.usage.total} (cached {result.usage.cached_prompt})")
print(f"cost:            ${result.cost}")
print("killing test:\n")
print(result.killing_test)
