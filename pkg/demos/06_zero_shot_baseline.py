"""
Asking the language model directly
==================================

The zero-shot baseline shows the model a question and the list of relation
types and asks for one of them. Answers outside the list are discarded and
asked again, up to a retry cap.
"""

import tempfile

from rationale_cre.data import FEWREL, load_corpus, load_names, split_train_val_test
from rationale_cre.rationale import (
    OracleProvider,
    RetryCapExceeded,
    ScriptedProvider,
    build_zero_shot_prompt,
    llm_baseline,
    zero_shot_classify,
)
from rationale_cre.synthetic import write_corpus

corpus, names = write_corpus(tempfile.mkdtemp(), n_relations=6, per_relation=10, seed=1)
instances, labels = load_corpus(corpus, FEWREL, load_names(names))
test = split_train_val_test(instances, seed=0).test
menu = [labels.verbalize(r) for r in sorted(labels.labels)]

# %%
print(build_zero_shot_prompt(test[0], menu))
print()

# %%
# A model that rambles first and then picks a listed relation.
chatty = ScriptedProvider(["It is hard to say.", "maybe a sibling", labels.verbalize(test[0].relation)])
print("picked:", zero_shot_classify(test[0], menu, chatty), f"after {chatty.calls} calls")

# %%
# One that never picks from the list gives up after five tries.
try:
    zero_shot_classify(test[0], menu, ScriptedProvider(["no idea"] * 10))
except RetryCapExceeded as e:
    print("gave up:", e)

# %%
# With the oracle every answer is right, which checks the plumbing end to end.
acc, _ = llm_baseline(test, labels, OracleProvider.for_instances(test, labels))
print(f"oracle zero-shot accuracy: {acc:.2f} on {len(test)} test instances")
