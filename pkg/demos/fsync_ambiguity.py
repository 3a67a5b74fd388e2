"""Two runs, one observable trace, two different answers to "is my data safe?"

A single page is overwritten and fsync'd on ext4 (data=ordered) over a disk
with a volatile write cache. We let the checker inject up to two failures and
print the pair of runs it finds.
"""

from persistcheck import load
from persistcheck.reports import run_check, witness_records

scenario = load("lemma-ext4")
report = run_check(scenario, "commit-boundary")
print(f"verdict: {report.verdict} after {report.explored} schedules")

w = report.witnesses[0]
print("shared trace:", w.trace)
print(f"run A injects at {w.schedule_a.injected_at()} -> durable={w.verdict_a}")
print(f"run B injects at {w.schedule_b.injected_at()} -> durable={w.verdict_b}")

# %% where the two runs part ways
for row in witness_records(w):
    if row["kind"] == "step" and not row["same"]:
        a, b = row["a"], row["b"]
        print(f"step {row['step']}:")
        print("   A:", a["transition"] if a else "-")
        print("   B:", b["transition"] if b else "-")
        break

# %% so no single step after which durability is guaranteed
nct = run_check(scenario, "no-commit-time")
print("commit time exists:", nct.commit_time_exists)
print("FUA-only control:", run_check(load("fua-control"), "no-commit-time").details["candidates"])
