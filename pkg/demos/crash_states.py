"""What survives a power cut, and how file replacement protocols fare.

Prints the crash-state counts for a few device setups, then runs the
write-sync-rename protocol with and without its fsyncs.
"""

import numpy as np

from persistcheck import BlockWrite, DeviceConfig, initial_state, issue_flush, load, submit_write
from persistcheck.faults import crash_states
from persistcheck.reports import run_check


def states_after(device, flush_after=None, n=3):
    s = initial_state(device=device)
    for i in range(n):
        s = submit_write(s, BlockWrite(("data", 9, i), 1))
        if flush_after == i:
            s, _ = issue_flush(s)
    return len(crash_states(s))


rows = {
    "volatile": [states_after(DeviceConfig(), n=k) for k in range(5)],
    "volatile, flush after 1st": [states_after(DeviceConfig(), 0, n=k) for k in range(5)],
    "plp": [states_after(DeviceConfig(plp=True), n=k) for k in range(5)],
}
for name, counts in rows.items():
    print(f"{name:>28}: {counts}")
print("volatile grows as 2^k:", np.array_equal(rows["volatile"], 2 ** np.arange(5)))

# %% durable replacement
for name in ("wsr-full", "wsr-drop2", "wsr-drop4"):
    r = run_check(load(name), "write-sync-rename")
    print(f"{name}: {r.verdict} {r.details['classes']}")

# %% prefix consistency depends on the journaling mode
for name in ("prefix-violation", "prefix-journal"):
    print(name, run_check(load(name), "prefix-consistency").verdict)
