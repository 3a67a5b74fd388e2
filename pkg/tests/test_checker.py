import sys
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from persistcheck.checker import (
    HOLDS,
    INCOMPLETE,
    VIOLATED,
    WITNESS_FOUND,
    Step,
    check_clean_not_durable,
    check_commit_boundary,
    check_completeness,
    check_no_commit_time,
    check_prefix_consistency,
    check_retry_soundness,
    check_write_sync_rename,
    explore,
    validate_witness,
    write_sync_rename_workload,
    wsr_initial,
)
from persistcheck.device import DeviceConfig
from persistcheck.errors import ConfigError
from persistcheck.faults import Bounds, FaultPoint
from persistcheck.state import DataWrite
from persistcheck.syscalls import get_profile, initial_state
from persistcheck.workload import Op, Workload

WF = Workload.of([Op("write", "/f"), Op("fsync", "/f")])


def lemma_init(profile="ext4-ordered", device=None):
    return initial_state(profile, device or DeviceConfig(), files={"/f": {0: 0}})


def writes_of(init):
    return [DataWrite(init.namespace["/f"], 0, 1)]


# -- explore -------------------------------------------------------------------


def test_empty_workload_one_outcome():
    exp = explore(Workload(), initial_state(), Bounds(max_faults=1))
    assert exp.explored == 1


@pytest.mark.parametrize("crash", [False, True])
def test_outcome_count_matches_oracle(crash):
    init = lemma_init()
    bounds = Bounds(max_faults=1, allow_crash=crash)
    assert explore(WF, init, bounds).explored == oracles.schedule_count(WF, init, bounds)


def test_explore_is_deterministic():
    init = lemma_init()
    bounds = Bounds(max_faults=1, allow_crash=True)
    a = [(o.schedule, o.trace) for o in explore(WF, init, bounds).outcomes]
    assert a == [(o.schedule, o.trace) for o in explore(WF, init, bounds).outcomes]


# -- commit boundary -------------------------------------------------------------


def test_commit_boundary_witness_with_one_fault():
    init = lemma_init()
    r = check_commit_boundary(WF, init, writes_of(init), Bounds(max_faults=1))
    assert r.verdict == WITNESS_FOUND
    w = r.witnesses[0]
    assert w.trace == (("write", "ok"), ("fsync", "EIO"))
    assert {w.verdict_a, w.verdict_b} == {False, True}
    assert validate_witness(w)


def test_commit_boundary_holds_without_faults():
    init = lemma_init()
    r = check_commit_boundary(WF, init, writes_of(init), Bounds(max_faults=0))
    assert r.verdict == HOLDS


def test_commit_boundary_plp_matches_oracle():
    init = lemma_init(device=DeviceConfig(plp=True))
    bounds = Bounds(max_faults=1, fault_points=[FaultPoint.F3])
    r = check_commit_boundary(WF, init, writes_of(init), bounds)
    mixed = oracles.commit_boundary_mixed(WF, init, writes_of(init), bounds)
    assert (r.verdict == WITNESS_FOUND) == mixed


def test_write_set_must_be_issued():
    init = lemma_init()
    with pytest.raises(ConfigError):
        check_commit_boundary(WF, init, [DataWrite(init.namespace["/f"], 0, 7)], Bounds())


def test_witness_is_minimal():
    init = lemma_init()
    r = check_commit_boundary(WF, init, writes_of(init), Bounds(max_faults=2))
    assert r.witnesses[0].faults == min(w.faults for w in r.witnesses)
    assert r.witnesses[0].faults <= 2


# -- retry -----------------------------------------------------------------------

RETRY = Workload.of([Op("write", "/f"), Op("fsync", "/f"), Op("fsync_retry", "/f")])


def test_retry_ext4_violated():
    init = initial_state(files={"/f": {}})
    wl = Workload.of([Op("create", "/g"), *RETRY.ops])
    w = [DataWrite(init.namespace["/f"], 0, 1)]
    b = Bounds(max_faults=1, fault_points=[FaultPoint.F1])
    r = check_retry_soundness(RETRY, init, w, b)
    assert r.verdict == VIOLATED == (VIOLATED if oracles.retry_unsound(RETRY, init, w, b) else HOLDS)
    assert check_retry_soundness(wl, init, w, b).verdict == VIOLATED


def test_retry_no_fault_holds():
    init = lemma_init()
    assert check_retry_soundness(RETRY, init, writes_of(init), Bounds(max_faults=0)).verdict == HOLDS


def test_retry_xfs_data_still_violated():
    init = lemma_init("xfs")
    b = Bounds(max_faults=1, fault_points=[FaultPoint.F1])
    assert check_retry_soundness(RETRY, init, writes_of(init), b).verdict == VIOLATED


def test_retry_control_gives_cross_profile_witness():
    init = lemma_init()
    control = lemma_init(get_profile("ext4-ordered", restores_dirty_on_failure=True))
    b = Bounds(max_faults=1, fault_points=[FaultPoint.F1])
    r = check_retry_soundness(RETRY, init, writes_of(init), b, control=control)
    assert r.details["control"]["durable"] is True
    assert r.witnesses and validate_witness(r.witnesses[0])


# -- clean / prefix / wsr ----------------------------------------------------------


def test_clean_not_durable_reachable():
    init = lemma_init()
    b = Bounds(max_faults=1)
    r = check_clean_not_durable(WF, init, writes_of(init), b)
    assert r.verdict == VIOLATED
    assert oracles.clean_not_durable_reachable(WF, init, writes_of(init), b)


def test_prefix_single_op_holds():
    init = initial_state("ext4-writeback", files={"/a": {0: 0}})
    wl = Workload.of([Op("write", "/a")])
    assert check_prefix_consistency(wl, init, Bounds(max_faults=0, allow_crash=True)).verdict == HOLDS


def test_prefix_rejects_sync_ops():
    with pytest.raises(ConfigError):
        check_prefix_consistency(WF, lemma_init(), Bounds(allow_crash=True))


def test_prefix_writeback_rename_violation():
    init = initial_state("ext4-writeback", files={"/a": {}})
    b = Bounds(max_faults=0, allow_crash=True)
    wl = Workload.of([Op("write", "/a"), Op("rename", "/a", dest="/b"), Op("create", "/c")])
    r = check_prefix_consistency(wl, init, b)
    assert r.verdict == VIOLATED
    assert oracles.prefix_violated(wl, init, b)


@pytest.mark.parametrize("steps,expect", [
    ((True, True, True, True), HOLDS),
    ((True, False, True, True), VIOLATED),
    ((True, True, True, False), VIOLATED),
])
def test_wsr_matches_oracle(steps, expect):
    init = wsr_initial()
    b = Bounds(max_faults=1, allow_crash=True)
    r = check_write_sync_rename(steps, init, b)
    assert r.verdict == expect
    assert oracles.wsr_violated(write_sync_rename_workload(steps), init, b) == (expect == VIOLATED)
    for w in r.witnesses:
        assert validate_witness(w)


def test_wsr_drop4_reports_new_not_durable():
    r = check_write_sync_rename((True, True, True, False), wsr_initial(), Bounds(max_faults=0, allow_crash=True))
    # the completed run returns ok everywhere yet the rename is not on media
    assert r.verdict == VIOLATED
    assert r.details["classes"]["new-not-durable"] >= 1
    assert r.details["classes"]["old"] >= 1


# -- completeness ------------------------------------------------------------------


def _step(name, adds=(), removes=(), reverse=None, fallible=True):
    return Step(name, frozenset(adds), frozenset(removes), reverse, fallible)


def test_two_steps_total_reverses_hold():
    s1 = _step("a", adds={"x"}, reverse=_step("undo a", removes={"x"}, fallible=False))
    s2 = _step("b", adds={"y"}, reverse=_step("undo b", removes={"y"}, fallible=False))
    r = check_completeness([s1, s2], frozenset(), 1)
    assert r.verdict == HOLDS and not oracles.completeness_stranded([s1, s2], frozenset(), 1)


def test_copy_delete_structurally_incomplete():
    copy = _step("copy", adds={"dst"})
    delete = _step("delete", removes={"src"})
    r = check_completeness([copy, delete], frozenset({"src"}), 1)
    assert r.verdict == INCOMPLETE
    assert any(set(ce["facts"]) == {"src", "dst"} for ce in r.counterexamples)
    assert "missing" in oracles.completeness_stranded([copy, delete], frozenset({"src"}), 1)


def test_empty_protocol_holds():
    assert check_completeness([], frozenset(), 1).verdict == HOLDS


def test_fallible_reverse_violates_with_two_faults():
    s1 = _step("a", adds={"x"}, reverse=_step("undo a", removes={"x"}))
    s2 = _step("b", adds={"y"}, reverse=_step("undo b", removes={"y"}))
    assert check_completeness([s1, s2], frozenset(), 1).verdict == HOLDS
    assert check_completeness([s1, s2], frozenset(), 2).verdict == VIOLATED
    assert oracles.completeness_stranded([s1, s2], frozenset(), 2) == {"failed"}


facts = st.frozensets(st.sampled_from("pqrs"), max_size=2)
steps_st = st.lists(
    st.builds(
        lambda n, a, r, rev, ra, rr, f, rf: _step(
            f"s{n}", a, r, _step(f"undo s{n}", ra, rr, fallible=rf) if rev else None, f),
        st.integers(0, 9), facts, facts, st.booleans(), facts, facts, st.booleans(), st.booleans()),
    max_size=3,
)


@settings(max_examples=150, deadline=None)
@given(steps_st, facts, st.integers(0, 2))
def test_completeness_matches_oracle(steps, initial, k):
    r = check_completeness(steps, initial, k)
    why = oracles.completeness_stranded(steps, initial, k)
    if "missing" in why:
        assert r.verdict == INCOMPLETE
    elif why:
        assert r.verdict == VIOLATED
    else:
        assert r.verdict == HOLDS


# -- no commit time -----------------------------------------------------------------


def test_no_commit_time_fault_free_exists():
    init = lemma_init()
    r = check_no_commit_time(WF, init, writes_of(init), Bounds(max_faults=0))
    assert r.commit_time_exists is True


def test_no_commit_time_with_one_fault():
    init = lemma_init()
    b = Bounds(max_faults=1)
    r = check_no_commit_time(WF, init, writes_of(init), b)
    assert r.commit_time_exists is False
    assert oracles.commit_time_candidates(WF, init, writes_of(init), b) == []


def test_fua_everything_has_candidate_at_last_write():
    init = initial_state(files={"/f": {0: 0, 1: 0}})
    wl = Workload.of([Op("write", "/f", 0, sync=True), Op("write", "/f", 1, sync=True)])
    ino = init.namespace["/f"]
    w = [DataWrite(ino, 0, 1), DataWrite(ino, 1, 1)]
    b = Bounds(max_faults=1, allow_crash=True, fault_points=[FaultPoint.F3, FaultPoint.F4])
    r = check_no_commit_time(wl, init, w, b)
    assert r.commit_time_exists and r.details["earliest"] == 2
    assert r.details["candidates"] == oracles.commit_time_candidates(wl, init, w, b)


# -- properties ------------------------------------------------------------------

small_ops = st.lists(
    st.sampled_from([Op("write", "/f"), Op("fsync", "/f"), Op("fsync_retry", "/f")]), min_size=1, max_size=3)


@settings(max_examples=25, deadline=None)
@given(small_ops, st.sampled_from(["ext4-ordered", "btrfs", "xfs"]))
def test_monotone_bounds(ops, profile):
    wl = Workload(tuple(ops))
    init = lemma_init(profile)
    if not any(op.kind == "write" for op in ops):
        return
    w = writes_of(init)
    previous = None
    for k in range(3):
        found = check_commit_boundary(wl, init, w, Bounds(max_faults=k)).verdict == WITNESS_FOUND
        assert not (previous and not found)
        previous = found


@settings(max_examples=25, deadline=None)
@given(small_ops, st.sampled_from(["ext4-ordered", "btrfs", "xfs"]), st.booleans())
def test_commit_boundary_matches_oracle_and_witnesses_validate(ops, profile, plp):
    wl = Workload(tuple(ops))
    init = lemma_init(profile, DeviceConfig(plp=plp))
    if not any(op.kind == "write" for op in ops):
        return
    w = writes_of(init)
    b = Bounds(max_faults=1)
    r = check_commit_boundary(wl, init, w, b)
    assert (r.verdict == WITNESS_FOUND) == oracles.commit_boundary_mixed(wl, init, w, b)
    for wit in r.witnesses:
        assert validate_witness(wit)
