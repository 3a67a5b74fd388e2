"""Crash-consistency model checker for layered persistence protocols.

The storage stack is an immutable six-layer state machine (application, page
cache, filesystem journal, block layer, controller cache, media). Syscalls are
pure transitions; every source of nondeterminism (injected failures, crash
placement, which in-flight writes landed) lives in a :class:`FaultSchedule`.
"""

from .checker import (
    HOLDS,
    INCOMPLETE,
    VIOLATED,
    WITNESS_FOUND,
    CheckReport,
    Step,
    Witness,
    check_clean_not_durable,
    check_commit_boundary,
    check_completeness,
    check_flush_noop,
    check_no_commit_time,
    check_plp_equivalence,
    check_prefix_consistency,
    check_retry_soundness,
    check_write_sync_rename,
    explore,
    q4_well_defined,
    validate_witness,
)
from .device import BlockWrite, DeviceConfig, Query, issue_flush, power_loss, submit_write, verify_q
from .errors import BoundsExceeded, ConfigError
from .faults import Bounds, CrashChoice, FaultContext, FaultPoint, FaultSchedule, crash_choices, crash_states, recover
from .retry import RetryPolicy, RseqModel, ServiceModel, simulate_retry_storm, simulate_rseq
from .scenario import Scenario, load, parse, serialize
from .state import (
    DataWrite,
    JournalMode,
    LayerId,
    NamespaceWrite,
    SystemState,
    durable,
    layer_committed,
    logical_view,
    observable_trace,
    reachable_durable,
)
from .syscalls import (
    Errno,
    FsProfile,
    get_profile,
    initial_state,
    sys_create,
    sys_fsync,
    sys_fsync_dir,
    sys_fsync_retry,
    sys_read,
    sys_rename,
    sys_unlink,
    sys_write,
)
from .workload import Op, Workload, enumerate_schedules, execute, replay

__version__ = "0.1.0"
