"""Retrying fsync after EIO: the second call says ok, the data is gone.

The first writeback fails, the page is marked clean and the error is reported
once. The retry finds nothing dirty and succeeds. A profile that keeps the
page dirty on failure makes the same schedule durable.
"""

from persistcheck import load
from persistcheck.reports import run_check

sc = load("retry-nonsound")
report = run_check(sc, "retry-soundness")
ce = report.counterexamples[0]
print("trace:", ce["trace"], "durable:", ce["durable"])
print("control profile durable:", report.details["control"]["durable"])

# %% pages can be clean without being durable
clean = run_check(load("lemma-ext4"), "clean-not-durable")
print("clean implies durable?", clean.verdict, "e.g.", clean.counterexamples[0]["trace"])
