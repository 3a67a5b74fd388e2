import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from persistcheck.device import BlockWrite, DeviceConfig, Query, issue_flush, power_loss, submit_write, verify_q
from persistcheck.errors import BoundsExceeded, ConfigError
from persistcheck.faults import Bounds, FaultPoint, FaultSchedule, crash_states, recover
from persistcheck.state import Health, layer_states, logical_view, memory_read
from persistcheck.syscalls import initial_state
from persistcheck.workload import Op, Workload, enumerate_schedules, execute, replay

VOLATILE = DeviceConfig()
PLP = DeviceConfig(plp=True)
NO_CACHE = DeviceConfig(volatile_cache_present=False, volatile_cache_enabled=False)


def block(i, v=1, fua=False):
    return BlockWrite(("data", 9, i), v, fua)


def device_state(device):
    return initial_state(device=device)


# -- device --------------------------------------------------------------------


def test_fua_durable_at_completion():
    s = submit_write(device_state(VOLATILE), block(0, fua=True))
    assert s.media.blocks[("data", 9, 0)] == 1 and not s.cache


def test_plain_write_lost_on_power_loss():
    s = submit_write(device_state(VOLATILE), block(0))
    assert ("data", 9, 0) not in power_loss(s).blocks


def test_plain_write_no_cache_durable_at_completion():
    s = submit_write(device_state(NO_CACHE), block(0))
    assert s.media.blocks[("data", 9, 0)] == 1


def test_fua_without_support_is_config_error():
    with pytest.raises(ConfigError):
        submit_write(device_state(DeviceConfig(fua_supported=False)), block(0, fua=True))


def test_flush_without_cache_zero_delta():
    s = device_state(NO_CACHE)
    after, ok = issue_flush(s)
    assert ok and layer_states(after) == layer_states(s)
    assert oracles.flush_delta(s, after) == []


def test_flush_drains_three_versions():
    s = device_state(VOLATILE)
    for i in range(3):
        s = submit_write(s, block(i, v=i + 1))
    s, ok = issue_flush(s)
    assert ok and not s.cache
    assert [s.media.blocks[("data", 9, i)] for i in range(3)] == [1, 2, 3]


def test_failed_flush_keeps_cache_volatile():
    s = submit_write(device_state(VOLATILE), block(0))
    after, ok = issue_flush(s, fail=True)
    assert not ok and after.cache == s.cache and after.media == s.media


def test_power_loss_plp_keeps_cache():
    s = submit_write(device_state(PLP), block(0))
    assert power_loss(s).blocks[("data", 9, 0)] == 1


def test_power_loss_empty_cache_is_media():
    s = device_state(VOLATILE)
    assert power_loss(s) == s.media


def test_config_queries():
    assert verify_q(device_state(NO_CACHE), Query.Q1) is False
    assert verify_q(device_state(VOLATILE), "Q3") is True


def test_q4_not_well_defined_on_volatile_ext4():
    s = initial_state("ext4-ordered", VOLATILE, files={"/f": {0: 0}})
    assert verify_q(s, Query.Q4, Bounds(max_faults=1)) is False


def test_enabled_requires_present():
    with pytest.raises(ConfigError):
        DeviceConfig(volatile_cache_present=False, volatile_cache_enabled=True)


# -- crash states ----------------------------------------------------------------


def test_no_in_flight_writes_single_crash_state():
    s = device_state(VOLATILE)
    assert crash_states(s) == {s.media}


def test_two_in_flight_writes_four_states():
    s = device_state(VOLATILE)
    writes = [block(0), block(1)]
    for w in writes:
        s = submit_write(s, w)
    got = crash_states(s)
    assert len(got) == 4
    assert got == oracles.subset_crash_media(s.media, writes)


def test_flush_between_writes_two_states():
    base = device_state(VOLATILE)
    w1, w2 = block(0), block(1)
    s = submit_write(base, w1)
    s, _ = issue_flush(s)
    s = submit_write(s, w2)
    got = crash_states(s)
    assert len(got) == 2
    assert got == oracles.barrier_linearizations(base.media, [[w1], [w2]])


# device-level op sequences: ("w", block index, fua) or ("f", fail)
dev_ops = st.lists(
    st.one_of(
        st.tuples(st.just("w"), st.integers(0, 2), st.booleans()),
        st.tuples(st.just("f"), st.booleans()),
    ),
    max_size=7,
)


def _device_run(device, seq):
    s = device_state(device)
    epochs, version = [[]], 0
    for op in seq:
        if op[0] == "w":
            version += 1
            w = block(op[1], v=version, fua=op[2])
            s = submit_write(s, w)
            if not op[2] and device.volatile:
                epochs[-1].append(w)
        else:
            s, ok = issue_flush(s, fail=op[1])
            if ok and epochs[-1]:
                epochs.append([])
    return s, epochs


@settings(max_examples=80, deadline=None)
@given(dev_ops)
def test_crash_states_match_linearizations(seq):
    s, _ = _device_run(VOLATILE, seq)
    assert crash_states(s) == oracles.linearized_media(s)


@settings(max_examples=80, deadline=None)
@given(dev_ops)
def test_barrier_ordering(seq):
    # every crash state includes every write completed before the last successful flush
    s, epochs = _device_run(VOLATILE, seq)
    flushed = [w for batch in epochs[:-1] for w in batch]
    for media in crash_states(s):
        for w in flushed:
            assert w.addr in media.blocks


@settings(max_examples=80, deadline=None)
@given(dev_ops)
def test_fua_writes_survive_every_crash(seq):
    s = device_state(VOLATILE)
    last_fua = {}
    for op in seq:
        if op[0] == "w":
            w = block(op[1], v=len(last_fua) + 100 * (op[1] + 1), fua=op[2])
            s = submit_write(s, w)
            last_fua[w.addr] = w if op[2] else None
        else:
            s, _ = issue_flush(s, fail=op[1])
    for media in crash_states(s):
        for addr, w in last_fua.items():
            if w is not None:
                assert media.blocks[addr] == w.payload


@settings(max_examples=80, deadline=None)
@given(dev_ops)
def test_plp_equivalent_to_no_cache(seq):
    a, _ = _device_run(PLP, seq)
    b, _ = _device_run(NO_CACHE, seq)
    assert crash_states(a) == crash_states(b) == {b.media}


# system-level: random short workloads with random fault decisions
sys_ops = st.lists(
    st.sampled_from([
        Op("write", "/a"), Op("write", "/b"), Op("fsync", "/a"), Op("fsync", "/b"),
        Op("rename", "/a", dest="/c"), Op("create", "/d"), Op("fsync_dir", "/"),
    ]),
    min_size=1,
    max_size=4,
)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(sys_ops, st.lists(st.booleans(), max_size=6), st.sampled_from(["ext4-ordered", "ext4-writeback", "ext4-journal"]))
def test_system_crash_states_sound_and_complete(ops, decisions, profile):
    init = initial_state(profile, VOLATILE, files={"/a": {0: 0}, "/b": {}})
    try:
        ex = execute(Workload(tuple(ops)), init, decisions)
    except ConfigError:
        return
    for s in ex.states:
        if len(oracles._units(s)) > 6:
            continue
        assert crash_states(s) == oracles.linearized_media(s)


@settings(max_examples=40, deadline=None)
@given(sys_ops, st.lists(st.booleans(), max_size=6))
def test_journal_failure_means_read_only(ops, decisions):
    init = initial_state("ext4-ordered", VOLATILE, files={"/a": {0: 0}, "/b": {}})
    try:
        ex = execute(Workload(tuple(ops)), init, decisions)
    except ConfigError:
        return
    f2 = [i for i, (p, _) in enumerate(ex.opportunities) if p is FaultPoint.F2 and ex.schedule.decisions[i]]
    if f2:
        assert ex.final.health is Health.ABORTED
        # every later mutating call fails without touching the stack
        step = next(k for k in range(1, len(ex.states)) if ex.opp_after[k] > f2[0])
        for k in range(step + 1, len(ex.states)):
            assert ex.states[k].media == ex.states[step].media


@settings(max_examples=40, deadline=None)
@given(sys_ops, st.lists(st.booleans(), max_size=6))
def test_replay_is_deterministic(ops, decisions):
    init = initial_state("ext4-ordered", VOLATILE, files={"/a": {0: 0}, "/b": {}})
    wl = Workload(tuple(ops))
    try:
        a = execute(wl, init, decisions)
    except ConfigError:
        return
    b = replay(wl, init, a.schedule)
    assert a.states == b.states and a.codes == b.codes


# -- recovery --------------------------------------------------------------------


def test_recover_empty_journal_is_media_verbatim():
    s = initial_state(files={"/f": {0: 2}})
    assert logical_view(recover(s.media, s)) == logical_view(s)


def test_writeback_metadata_without_data_exposes_stale_content():
    init = initial_state("ext4-writeback", VOLATILE)
    wl = Workload.of([Op("create", "/n"), Op("write", "/n"), Op("fsync_dir", "/")])
    ex = execute(wl, init)
    pre = ex.states[2]
    ino = pre.namespace["/n"]
    recovered = [recover(m, pre) for m in crash_states(pre)]
    # block allocated and bound by committed metadata, yet reads the old contents
    assert any("/n" in r.namespace and (ino, 0) in r.mem_alloc and memory_read(r, ino, 0) == 0
               for r in recovered)


# -- schedules -------------------------------------------------------------------


def test_one_op_no_faults_one_schedule():
    wl = Workload.of([Op("write", "/f")])
    init = initial_state(files={"/f": {0: 0}})
    assert enumerate_schedules(wl, init, Bounds(max_faults=0)) == [FaultSchedule()]


def test_zero_bounds_singleton_happy_path():
    wl = Workload.of([Op("write", "/f"), Op("fsync", "/f")])
    init = initial_state(files={"/f": {0: 0}})
    (only,) = enumerate_schedules(wl, init, Bounds(max_faults=0, allow_crash=False))
    assert only.faults == 0 and only.crash_after is None


@pytest.mark.parametrize("profile", ["ext4-ordered", "ext4-writeback", "xfs", "btrfs"])
def test_write_fsync_schedule_count_matches_walker(profile):
    wl = Workload.of([Op("write", "/f"), Op("fsync", "/f")])
    init = initial_state(profile, VOLATILE, files={"/f": {0: 0}})
    bounds = Bounds(max_faults=1, allow_crash=True)
    assert len(enumerate_schedules(wl, init, bounds)) == oracles.schedule_count(wl, init, bounds)


def test_bounds_exceeded_reports_estimate():
    wl = Workload.of([Op("write", "/f"), Op("fsync", "/f")] * 3)
    init = initial_state(files={"/f": {0: 0}})
    with pytest.raises(BoundsExceeded) as e:
        enumerate_schedules(wl, init, Bounds(max_faults=3, allow_crash=True, max_schedules=5))
    assert e.value.estimate > 5


def test_enumeration_is_canonical():
    wl = Workload.of([Op("write", "/f"), Op("fsync", "/f")])
    init = initial_state(files={"/f": {0: 0}})
    bounds = Bounds(max_faults=1, allow_crash=True)
    a = enumerate_schedules(wl, init, bounds)
    assert a == enumerate_schedules(wl, init, bounds)
    assert a == sorted(a, key=FaultSchedule.sort_key)
