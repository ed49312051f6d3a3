"""Record a whole demo campaign, then replay it twice, offline and bit-stable.

The stand-in model brute-forces a small input grid against the real and
mutated sources: if some input behaves differently it plays experiment ->
test; otherwise it claims the mutant equivalent.  Every completion is
recorded into a JSONL store; the two replay runs never touch the transport
and must produce byte-identical reports.

Run:  python demos/05_campaign_record_replay.py
"""

import tempfile
from pathlib import Path

from mutagent.campaign import CampaignConfig, run_campaign
from mutagent.conversation import Approach
from mutagent.fixtures import demo_project_path
from mutagent.llm import ChatBackend, Record, TokenUsage
from mutagent.mutation import SubjectModule, generate_mutants

GRIDS = {
    "clamp": [(v, lo, hi) for v in (-1, 0, 1, 2, 3) for lo in (-1, 0, 1, 2, 3) for hi in (-1, 0, 1, 2, 3)],
    "first_line": [("",), ("ab",), ("a\nb",), ("x\ny\nz",)],
    "running_total": [([],), ([1],), ([1, 2],), ([3, -1, 2],)],
}


def call(source, func, args):
    ns = {}
    exec(compile(source, "<demo>", "exec"), ns)
    try:
        return ("value", ns[func](*args))
    except Exception as exc:
        return ("raise", type(exc).__name__)


def witness(mutant):
    for func in sorted(GRIDS):
        for args in GRIDS[func]:
            base = call(mutant.module.source, func, args)
            if base[0] == "value" and call(mutant.mutated_source, func, args) != base:
                return func, args, base[1]
    return None


class GridOracle:
    def __init__(self, mutants):
        self.mutants = mutants

    def __call__(self, turns, model, params):
        prompt = "\n".join(t["content"] for t in turns if t["role"] == "user")
        mutant = next(m for m in self.mutants if m.diff.rstrip() in prompt)
        stage = sum(1 for t in turns if t["role"] == "assistant")
        found = witness(mutant)
        usage = TokenUsage(cached_prompt=800, uncached_prompt=250, completion=90)
        if found is None:
            body = (
                "## Equivalent Mutant\n\nThe whole input grid behaves identically.\n"
                if stage == 0
                else "## Experiment\n\n```python\nfrom tinyutils import clamp\nprint(clamp(0, 0, 1))\n```\n"
            )
            return body, usage
        func, args, expected = found
        args_src = ", ".join(repr(a) for a in args)
        if stage == 0:
            return (
                f"## Hypothesis\n\n`{func}({args_src})` should differ.\n\n"
                f"## Experiment\n\n```python\nfrom tinyutils import {func}\nprint(repr({func}({args_src})))\n```\n",
                usage,
            )
        return (
            f"## Test\n\n```python\nfrom tinyutils import {func}\n"
            f"assert {func}({args_src}) == {expected!r}\n```\n",
            usage,
        )


work = Path(tempfile.mkdtemp(prefix="mutagent-demo-"))
store = work / "replay.jsonl"


def config(out, mode):
    return CampaignConfig(
        project=demo_project_path(),
        out_dir=work / out,
        approach=Approach.SCIENTIFIC_0SHOT,
        mutant_limit=10,
        sampling_seed=7,
        max_iterations=4,
        flaky_runs=3,
        backend_mode=mode,
        model="grid-oracle",
        store_path=store,
        project_name="demo",
    )


module = SubjectModule.load(demo_project_path(), "tinyutils.py")
mutants = generate_mutants(module)

print("recording the campaign (the only run that queries the oracle)...")
backend = ChatBackend(Record("http://unused", "grid-oracle", store), transport=GridOracle(mutants))
recorded = run_campaign(config("rec", "record"), backend=backend)
print(recorded.to_text())

print("replaying twice from the store...")
run_campaign(config("a", "replay"))
run_campaign(config("b", "replay"))
report_a = (work / "a" / "report.json").read_bytes()
report_b = (work / "b" / "report.json").read_bytes()
print(f"replay reports byte-identical: {report_a == report_b}")
print(f"artifacts under {work}")
