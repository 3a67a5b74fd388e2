import pytest

from persistcheck.device import DeviceConfig
from persistcheck.faults import FaultContext, FaultPoint, crash_states, recover
from persistcheck.state import DataWrite, Health, NamespaceWrite, durable, logical_view, pages_clean
from persistcheck.syscalls import (
    Errno,
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
from persistcheck.errors import ConfigError


def at_first(call, state, point: FaultPoint):
    """Run ``call`` with one fault at the first opportunity of kind ``point``."""
    probe = FaultContext()
    call(state, probe)
    idx = next(i for i, (p, _) in enumerate(probe.opportunities) if p is point)
    return call(state, FaultContext([i == idx for i in range(idx + 1)]))


def written(profile="ext4-ordered", device=None, files=None):
    s = initial_state(profile, device, files if files is not None else {"/f": {0: 0}})
    if "/f" not in s.namespace:
        s, _ = sys_create(s, "/f")
    s, code = sys_write(s, "/f", 0)
    assert code is Errno.OK
    return s


def dw(s, version=1, path="/f"):
    return DataWrite(s.namespace[path], 0, version)


# -- write ---------------------------------------------------------------------


def test_write_dirties_page_not_durable():
    s = written(files={})
    assert s.trace[-1] == ("write", "ok")
    assert s.pages[(s.namespace["/f"], 0)].dirty
    assert not durable(s, [dw(s)])


def test_write_after_abort_is_erofs_and_unchanged():
    s = written()
    s, code = at_first(lambda st, c: sys_fsync(st, "/f", c), s, FaultPoint.F2)
    assert code is Errno.EIO and s.health is Health.ABORTED
    after, code = sys_write(s, "/f", 0)
    assert code is Errno.EROFS
    assert after.app == s.app and after.pages == s.pages and after.media == s.media


def test_last_writer_wins_in_cache():
    s = written()
    s, _ = sys_write(s, "/f", 0)
    assert sys_read(s, "/f") == 2
    assert len([k for k in s.pages.keys() if k[0] == s.namespace["/f"]]) == 1


def test_read_unbound_is_none():
    assert sys_read(initial_state(), "/nope") is None


# -- fsync ---------------------------------------------------------------------


def test_fsync_plp_durable():
    s = written(device=DeviceConfig(plp=True))
    s, code = sys_fsync(s, "/f")
    assert code is Errno.OK and durable(s, [dw(s)])


def test_fsync_f1_ext4_leaves_pages_clean_not_durable():
    s = written()
    s, code = at_first(lambda st, c: sys_fsync(st, "/f", c), s, FaultPoint.F1)
    assert code is Errno.EIO
    assert pages_clean(s, [dw(s)])
    assert not durable(s, [dw(s)])


def test_fsync_f1_btrfs_reverts_content():
    s = written("btrfs", files={"/f": {0: 0}})
    s, code = at_first(lambda st, c: sys_fsync(st, "/f", c), s, FaultPoint.F1)
    assert code is Errno.EIO
    assert sys_read(s, "/f") == 0  # prior on-disk version


def test_fsync_retry_ext4_ok_but_not_durable():
    s = written()
    s, _ = at_first(lambda st, c: sys_fsync(st, "/f", c), s, FaultPoint.F1)
    s, code = sys_fsync_retry(s, "/f")
    assert code is Errno.OK
    assert not durable(s, [dw(s)])


def test_fsync_retry_btrfs_memory_matches_media():
    s = written("btrfs")
    s, _ = at_first(lambda st, c: sys_fsync(st, "/f", c), s, FaultPoint.F1)
    s, code = sys_fsync_retry(s, "/f")
    assert code is Errno.OK
    assert sys_read(s, "/f") == 0
    assert s.media.blocks.get(("data", s.namespace["/f"], 0), 0) == 0


def test_fsync_retry_after_success_is_idempotent():
    s = written()
    s, _ = sys_fsync(s, "/f")
    before = durable(s, [dw(s)])
    s2, code = sys_fsync_retry(s, "/f")
    assert code is Errno.OK and durable(s2, [dw(s)]) == before is True
    assert s2.media == s.media


def test_restore_dirty_control_makes_retry_durable():
    s = written(get_profile("ext4-ordered", restores_dirty_on_failure=True))
    s, _ = at_first(lambda st, c: sys_fsync(st, "/f", c), s, FaultPoint.F1)
    s, code = sys_fsync_retry(s, "/f")
    assert code is Errno.OK and durable(s, [dw(s)])


def test_xfs_metadata_retry_recovers_one_journal_failure():
    s = initial_state("xfs")
    s, _ = sys_create(s, "/m")
    s, code = at_first(lambda st, c: sys_fsync_dir(st, "/", c), s, FaultPoint.F2)
    assert code is Errno.OK and s.health is Health.NORMAL
    assert durable(s, [NamespaceWrite("/m", s.namespace["/m"])])


def test_xfs_data_workload_still_not_durable_after_retry():
    s = written("xfs")
    s, _ = at_first(lambda st, c: sys_fsync(st, "/f", c), s, FaultPoint.F1)
    s, code = sys_fsync_retry(s, "/f")
    assert code is Errno.OK and not durable(s, [dw(s)])


# -- namespace -----------------------------------------------------------------


def test_rename_lost_without_dir_fsync():
    s = initial_state(files={"/a": {0: 1}})
    s, code = sys_rename(s, "/a", "/b")
    assert code is Errno.OK
    for media in crash_states(s, writeback=False):
        assert "/a" in logical_view(recover(media, s))


def test_rename_then_dir_fsync_durable():
    s = initial_state(files={"/a": {0: 1}})
    s, _ = sys_rename(s, "/a", "/b")
    s, code = sys_fsync_dir(s, "/")
    assert code is Errno.OK
    ino = s.namespace["/b"]
    assert durable(s, [NamespaceWrite("/b", ino), NamespaceWrite("/a", None)])
    for media in crash_states(s):
        view = logical_view(recover(media, s))
        assert "/b" in view and "/a" not in view


def test_rename_nonexistent_enoent_unchanged():
    s = initial_state()
    after, code = sys_rename(s, "/x", "/y")
    assert code is Errno.ENOENT
    assert after.namespace == s.namespace and after.running == s.running


def test_fsync_dir_f2_aborts_read_only():
    s = initial_state(files={"/a": {0: 1}})
    s, _ = sys_rename(s, "/a", "/b")
    s, code = at_first(lambda st, c: sys_fsync_dir(st, "/", c), s, FaultPoint.F2)
    assert code is Errno.EIO and s.health is Health.ABORTED


def test_fsync_dir_no_pending_is_noop():
    s = initial_state(files={"/a": {0: 1}})
    after, code = sys_fsync_dir(s, "/")
    assert code is Errno.OK and after.media == s.media


def test_create_exclusive_on_bound_path():
    s = initial_state(files={"/a": {}})
    _, code = sys_create(s, "/a")
    assert code is Errno.EEXIST


def test_unlink_before_commit_reappears_after_crash():
    s = initial_state(files={"/a": {0: 1}})
    s, code = sys_unlink(s, "/a")
    assert code is Errno.OK and "/a" not in s.namespace
    views = [logical_view(recover(m, s)) for m in crash_states(s, writeback=False)]
    assert views and all("/a" in v for v in views)


def test_create_commit_in_ordered_mode_persists_data_first():
    s = initial_state()
    s, _ = sys_create(s, "/c")
    s, _ = sys_write(s, "/c", 0)
    s, code = sys_fsync(s, "/c")
    assert code is Errno.OK
    rec = recover(s.media, s)
    assert logical_view(rec)["/c"][1] == ((0, 1),)


def test_read_after_crash_with_unsubmitted_write_is_old():
    s = written(files={"/f": {0: 4}})
    assert sys_read(s, "/f") == 5
    rec = recover(s.media, s)
    assert sys_read(rec, "/f") == 4


def test_unknown_profile_rejected():
    with pytest.raises(ConfigError):
        get_profile("zfs")
