"""
Rationales from a language model
================================

Every training instance gets a short explanation of why its relation holds.
This walk-through builds the prompts, answers them with the offline oracle
provider, and shows how unfaithful answers are retried and how the cache
short-circuits repeated requests.
"""

import tempfile
from pathlib import Path

from rationale_cre.rationale import (
    SENTINEL,
    OracleProvider,
    RationaleCache,
    ScriptedProvider,
    build_contrastive_prompt,
    build_plain_prompt,
    generate_rationale,
)
from rationale_cre.types import PLAIN, Entity, RelationInstance

# %%
# An instance is a sentence with a head and a tail entity, given as
# character spans.
text = "Halo 2 was followed by Halo 3 in the series ."
inst = RelationInstance("demo:0", text, Entity("Halo 2", 0, 6), Entity("Halo 3", 23, 29), "P156")

# %%
# The plain prompt states the gold relation and asks why it holds. The
# model must finish with a fixed closing sentence, which is how the answer
# is parsed back out.
print(build_plain_prompt(inst, "followed by"))
print()

# %%
# When the relation has look-alikes, a contrastive prompt names them too.
print(build_contrastive_prompt(inst, "followed by", ["follows"]))
print()

# %%
# The oracle provider needs no network and always concludes correctly.
cache = RationaleCache(Path(tempfile.mkdtemp()) / "rationales.jsonl")
oracle = OracleProvider()
record = generate_rationale(inst, PLAIN, oracle, cache, verbalization="followed by")
print("rationale:", record.rationale_text)
print("answer:   ", record.answer_text, f"(attempts={record.attempts})")

# %%
# Asking again hits the cache; the provider is not called a second time.
generate_rationale(inst, PLAIN, oracle, cache, verbalization="followed by")
print("oracle calls:", oracle.calls)

# %%
# A response that concludes with the wrong relation, or never concludes, is
# thrown away and regenerated (up to five attempts by default).
script = [
    f"Sequels come later. {SENTINEL} follows.",
    "I am not sure.",
    f"Halo 3 came after Halo 2. {SENTINEL} followed by.",
]
record = generate_rationale(inst, PLAIN, ScriptedProvider(script), RationaleCache(), verbalization="followed by")
print("accepted on attempt", record.attempts, "->", record.rationale_text)
