import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from leoedge.agent import (
    ACTIONS,
    CREATED,
    KILLED,
    STATES,
    HostAgent,
    MachineRecord,
    TraceBackend,
    cmd_link_set,
    compensate_host_latency,
    expected_shaping,
    parse_command,
    quantize_tenths,
    render_delay,
    replay_shaping,
    transition,
)
from leoedge.bbox import ACTIVE, SUSPENDED
from leoedge.constellation import NodeId
from leoedge.coordinator import EpochUpdate
from leoedge.errors import LifecycleError, ProtocolError, UnknownNodeError
from leoedge.netgraph import LinkDiff, TopologySnapshot, dijkstra, make_link
from leoedge.runtime import Testbed

from conftest import host, make_config, shell


# -- rendering and compensation ----------------------------------------------


def test_quantize_examples():
    assert render_delay(quantize_tenths(13_350)) == "13.4ms"
    assert render_delay(quantize_tenths(13_349)) == "13.3ms"
    assert render_delay(quantize_tenths(0)) == "0.0ms"
    assert render_delay(quantize_tenths(49)) == "0.0ms"
    assert render_delay(quantize_tenths(50)) == "0.1ms"
    assert render_delay(quantize_tenths(120_000)) == "120.0ms"


@given(st.integers(0, 10_000_000))
def test_quantize_error_at_most_half_step(us):
    assert -50 < quantize_tenths(us) * 100 - us <= 50


def test_link_set_syntax():
    s, g = NodeId.sat(0, 878), NodeId.gst(0, "accra")
    assert cmd_link_set(s, g, 134, 10_000_000) == "link set 878.0 gst.accra delay 13.4ms rate 10000000kbit"


def test_compensation():
    assert compensate_host_latency(5000, 200) == (4800, False)
    assert compensate_host_latency(5000, 0) == (5000, False)
    assert compensate_host_latency(200, 200) == (0, False)
    assert compensate_host_latency(150, 200) == (0, True)
    with pytest.raises(ValueError):
        compensate_host_latency(-1, 0)


# -- lifecycle -----------------------------------------------------------------

LEGAL = {
    ("created", "boot"): "active",
    ("active", "suspend"): "suspended",
    ("suspended", "resume"): "active",
    ("active", "kill"): "killed",
    ("suspended", "kill"): "killed",
    ("killed", "reboot"): "active",
}


@pytest.mark.parametrize("state,action", list(itertools.product(STATES, ACTIONS)))
def test_lifecycle_table(state, action):
    m = MachineRecord(NodeId.sat(0, 0), 1, 512, state=state)
    if (state, action) in LEGAL:
        assert transition(m, action) == LEGAL[(state, action)] == m.state
    else:
        with pytest.raises(LifecycleError):
            transition(m, action)
        assert m.state == state


def test_lifecycle_pairs_count():
    assert len(list(itertools.product(STATES, ACTIONS))) == 20


# -- a tiny hand-built agent -------------------------------------------------

A, B, C = NodeId.sat(0, 0), NodeId.sat(0, 1), NodeId.sat(0, 2)


def tiny_agent():
    machines = [MachineRecord(A, 2, 512), MachineRecord(B, 2, 512)]
    host_of = {A: 0, B: 0, C: 1}
    return HostAgent(0, machines, host_of, lambda h1, h2: 0 if h1 == h2 else 300)


def full(epoch, links, activity=()):
    return EpochUpdate(epoch=epoch, full=True, links=tuple(links), activity=tuple(activity))


def test_full_update_boots_then_shapes():
    ag = tiny_agent()
    cmds = ag.apply_update(full(0, [make_link(A, B, 1000, 100), make_link(B, C, 2000, 50)],
                                [(A, ACTIVE), (B, SUSPENDED), (C, ACTIVE)]))
    assert cmds == [
        "machine 0.0 boot",
        "machine 1.0 boot",
        "link set 0.0 1.0 delay 1.0ms rate 100kbit",
        "link set 1.0 0.0 delay 1.0ms rate 100kbit",
        "link set 1.0 2.0 delay 1.7ms rate 50kbit",  # 2000 - 300 host base
        "machine 1.0 suspend",
    ]
    assert ag.backend.lines[0] == "0.000 machine 0.0 boot"


def test_first_update_must_be_full():
    ag = tiny_agent()
    with pytest.raises(ProtocolError):
        ag.apply_update(EpochUpdate(epoch=0))


def test_epoch_must_not_go_back():
    ag = tiny_agent()
    ag.apply_update(full(5, []))
    with pytest.raises(ProtocolError):
        ag.apply_update(EpochUpdate(epoch=4))


def test_diff_update_minimal_commands():
    ag = tiny_agent()
    ag.apply_update(full(0, [make_link(A, B, 1000, 100)]))
    cmds = ag.apply_update(EpochUpdate(epoch=1, diffs=(LinkDiff(A, B, "latency-changed", latency_us=1020),)))
    assert cmds == []  # still 1.0 ms after quantization
    cmds = ag.apply_update(EpochUpdate(epoch=2, diffs=(LinkDiff(A, B, "latency-changed", latency_us=1060),)))
    assert cmds == ["link set 0.0 1.0 delay 1.1ms rate 100kbit", "link set 1.0 0.0 delay 1.1ms rate 100kbit"]
    cmds = ag.apply_update(EpochUpdate(epoch=3, diffs=(LinkDiff(A, B, "removed"),)))
    assert cmds == ["link block 0.0 1.0", "link block 1.0 0.0"]
    cmds = ag.apply_update(EpochUpdate(epoch=4, diffs=(LinkDiff(A, B, "added", 1060, 100, False),)))
    assert cmds == ["link unblock 0.0 1.0", "link unblock 1.0 0.0"]


def test_reapply_is_idempotent():
    ag = tiny_agent()
    ag.apply_update(full(0, [make_link(A, B, 1000, 100)], [(A, ACTIVE), (B, ACTIVE)]))
    u = EpochUpdate(epoch=1, diffs=(LinkDiff(A, B, "removed"), LinkDiff(B, C, "added", 900, 10, False)),
                    activity=((A, SUSPENDED),))
    first = ag.apply_update(u)
    assert first
    state = ag.shaping_state()
    assert ag.apply_update(u) == []
    assert ag.shaping_state() == state
    f = full(1, [make_link(B, C, 900, 10)], [(A, SUSPENDED), (B, ACTIVE), (C, ACTIVE)])
    assert ag.apply_update(f) == []


def test_blocked_link_rule():
    ag = tiny_agent()
    cmds = ag.apply_update(full(0, [make_link(A, B, 1000, 100, blocked=True)]))
    assert "link block 0.0 1.0" in cmds
    assert ag.shaping_state() == {}


def test_host_latency_warning():
    ag = tiny_agent()
    cmds = ag.apply_update(full(0, [make_link(B, C, 100, 50)]))
    assert "link set 1.0 2.0 delay 0.0ms rate 50kbit" in cmds
    assert len(ag.warnings) == 1


def test_degrade_and_restore():
    ag = tiny_agent()
    ag.apply_update(full(0, []))
    eff = ag.inject_fault(A, "degrade", 0.5)
    assert eff.vcpus == 1.0 and eff.commands == []
    assert ag.inject_fault(A, "degrade", 1.0).vcpus == 2.0
    assert ag.backend.events == ["0.000 resource 0.0 vcpus 1", "0.000 resource 0.0 vcpus 2"]
    with pytest.raises(ValueError):
        ag.inject_fault(A, "degrade", 0)
    with pytest.raises(ValueError):
        ag.inject_fault(A, "explode")
    with pytest.raises(UnknownNodeError):
        ag.inject_fault(C, "kill")


def test_kill_and_reboot_local_rules():
    ag = tiny_agent()
    ag.apply_update(full(0, [make_link(A, B, 1000, 100), make_link(B, C, 2000, 50)],
                         [(A, ACTIVE), (B, SUSPENDED), (C, ACTIVE)]))
    eff = ag.inject_fault(B, "kill")
    assert eff.state == KILLED
    assert eff.commands == [
        "machine 1.0 kill", "link block 0.0 1.0", "link block 1.0 0.0", "link block 1.0 2.0",
    ]
    with pytest.raises(LifecycleError):
        ag.inject_fault(B, "kill")
    eff = ag.inject_fault(B, "reboot")
    assert eff.commands == [
        "machine 1.0 boot", "link unblock 0.0 1.0", "link unblock 1.0 0.0", "link unblock 1.0 2.0",
        "machine 1.0 suspend",
    ]
    assert eff.state == SUSPENDED


def test_parse_and_replay():
    lines = [
        "0.000 link set 0.0 1.0 delay 1.0ms rate 100kbit",
        "0.000 machine 0.0 boot",
        "2.000 link set 0.0 1.0 delay 13.4ms rate 100kbit",
        "2.000 link set 1.0 2.0 delay 0.5ms rate 7kbit",
        "4.000 link block 1.0 2.0",
    ]
    assert parse_command(lines[1]) == ["machine", "0.0", "boot"]
    assert replay_shaping(lines) == {("0.0", "1.0"): (134, 100)}
    assert replay_shaping(lines + ["6.000 link unblock 1.0 2.0"])[("1.0", "2.0")] == (5, 7)


# -- trace consistency over a real run -----------------------------------------


def independent_shaping(snap, host_idx, host_of, bases):
    out = {}
    for l in snap.links.values():
        if l.blocked:
            continue
        for s, d in ((l.a, l.b), (l.b, l.a)):
            if host_of[s] != host_idx:
                continue
            hs, hd = host_of[s], host_of[d]
            base = 0 if hs == hd else max(bases[hs], bases[hd])
            emit = max(0, l.latency_us - base)
            out[(s.render(), d.render())] = ((emit + 50) // 100, l.bandwidth_kbps)
    return out


def test_replay_matches_snapshots_iridium(iridium):
    bed = Testbed(iridium)
    bases = [h.base_latency_us for h in iridium.hosts]
    seen = [0] * len(bed.agents)
    for _ in range(60):
        _, snap = bed.step()
        for h, ag in enumerate(bed.agents):
            lines = ag.backend.lines
            replayed = replay_shaping(lines)
            assert replayed == independent_shaping(snap, h, bed.assignment.host_of, bases)
            assert replayed == expected_shaping(snap, h, bed.assignment.host_of, ag.base_latency)
            assert {(s.render(), d.render()): v for (s, d), v in ag.shaping_state().items()} == replayed
            seen[h] = len(lines)
    assert all(seen)


def test_no_redundant_commands(iridium):
    bed = Testbed(iridium)
    for _ in range(40):
        bed.step()
    for ag in bed.agents:
        last = {}
        for line in ag.backend.lines:
            p = parse_command(line)
            if p[0] == "link":
                key = (p[2], p[3])
                state = (p[1],) + tuple(p[4:]) if p[1] == "set" else (p[1],)
                assert last.get((key, p[1] == "set")) != state, line
                last[(key, p[1] == "set")] = state


def remove_node(snap, node):
    links = [l for l in snap.links.values() if node not in l.key]
    return TopologySnapshot.from_links(snap.epoch, snap.nodes, links, snap.positions)


def test_kill_paths_match_removed_node_oracle(iridium):
    bed = Testbed(iridium)
    bed.step()
    con = iridium.constellation
    victim = NodeId.sat(0, 27)
    eff = bed.inject_fault(victim, "kill")
    assert eff.state == KILLED
    _, snap = bed.step()
    oracle = remove_node(snap, victim)
    nodes = [n for n in con.nodes if n != victim]
    for s in nodes[::5]:
        for d in nodes[::3]:
            got = dijkstra(snap, s, d)
            want = dijkstra(oracle, s, d)
            assert got == want
            assert victim not in got.hops
    # every host stops shaping towards or from the dead machine
    for ag in bed.agents:
        assert not any(victim in k for k in ag.shaping_state())
    bed.inject_fault(victim, "reboot")
    _, snap = bed.step()
    assert any(not l.blocked for l in snap.incident(victim))


def test_created_state_before_first_update():
    ag = tiny_agent()
    assert ag.machines[A].state == CREATED
    ag.apply_update(full(0, []))
    assert ag.machines[A].state == ACTIVE


def test_trace_backend_files(tmp_path):
    be = TraceBackend(tmp_path / "h" / "x.log")
    be.apply(1.5, "machine 0.0 boot")
    be.resource_change(1.5, A, 0.5)
    be.close()
    assert (tmp_path / "h" / "x.log").read_text() == "1.500 machine 0.0 boot\n"
    assert (tmp_path / "h" / "x.events").read_text() == "1.500 resource 0.0 vcpus 0.5\n"


def test_cross_host_link_shaped_on_both_sides():
    cfg = make_config(shells=[shell(planes=1, sats_per_plane=20)], hosts=[host("a", base_latency_us=200),
                                                                         host("b", base_latency_us=200)])
    bed = Testbed(cfg)
    _, snap = bed.step()
    l = snap.links[(NodeId.sat(0, 0), NodeId.sat(0, 1))]
    a_rules = bed.agents[0].shaping_state()
    b_rules = bed.agents[1].shaping_state()
    want = quantize_tenths(l.latency_us - 200)
    assert a_rules[(l.a, l.b)] == (want, l.bandwidth_kbps)
    assert b_rules[(l.b, l.a)] == (want, l.bandwidth_kbps)
    assert (l.b, l.a) not in a_rules
