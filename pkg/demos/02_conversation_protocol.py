"""Inspect the prompt a session opens with and parse a model-style reply.

Run:  python demos/02_conversation_protocol.py
"""

from mutagent.conversation import (
    Approach,
    ConversationState,
    build_initial_prompt,
    next_action,
)
from mutagent.fixtures import demo_project_path
from mutagent.mutation import SubjectModule, generate_mutants
from mutagent.parsing import parse_response

module = SubjectModule.load(demo_project_path(), "tinyutils.py")
mutant = generate_mutants(module)[0]

turns = build_initial_prompt(Approach.SCIENTIFIC_0SHOT, module, mutant)
print("=== system turn (first 15 lines) ===")
print("\n".join(turns[0][1].splitlines()[:15]))
print("\n=== user turn (first 12 lines) ===")
print("\n".join(turns[1][1].splitlines()[:12]))

reply = """## Hypothesis

The changed comparison should alter the result when value equals low
and the bounds are inverted.

## Experiment

```python
from tinyutils import clamp

print(repr(clamp(2, 2, 1)))
```
"""

message = parse_response(reply)
print("\n=== parsed reply ===")
print("sections:", [kind.value for kind, _ in message.sections])
print("claims equivalence:", message.claims_equivalent)
print("chosen code block:\n" + message.chosen_code.code)

state = ConversationState(approach=Approach.SCIENTIFIC_0SHOT)
action = next_action(state, msg=message)
print("\nnext action:", type(action).__name__)
