"""Projection: linearity, merging, thread projection, EPP, pruning."""

import pytest

from chorfixtures import chained_starts, sensors, sensors_partial, linearity_race, typed_example
from gcq.epq import (
    AcceptOnce,
    AcceptRepl,
    Branch,
    Component,
    INACT,
    InP,
    Network,
    OutP,
    QIn,
    QOut,
    QSel,
    Queue,
    Request,
    net_canon,
    net_congruent,
)
from gcq.netsem import net_run
from gcq.projection import (
    NotMergeable,
    ProjectionUndefined,
    PruningInconclusive,
    check_linearity,
    epp,
    merge,
    mergeable,
    project_thread,
    prunes,
    service_merge,
)
from gcq.semantics import swap_closure
from gcq.syntax import (
    Bcast,
    END,
    If,
    Init,
    Lit,
    Q_ALL,
    Q_ANY,
    Select,
    Seq,
    athr,
    q_ratio,
    seq,
)


class TestLinearity:
    def test_unrelated_double_start_not_linear(self):
        report = check_linearity(linearity_race())
        assert not report.ok
        assert report.failures[0].code == "NotLinear"

    def test_single_start_linear(self):
        assert check_linearity(sensors()).ok

    def test_chained_second_start_linear(self):
        assert check_linearity(chained_starts()).ok

    def test_different_services_unconstrained(self):
        i1 = Init(actives=(athr("p", "A"),), services=(athr("q", "B"),), svc="a", key="k")
        i2 = Init(actives=(athr("r", "D"),), services=(athr("s", "E"),), svc="b", key="k2")
        assert check_linearity(seq(i1, i2)).ok

    def test_linearity_invariant_under_swaps(self):
        for c in (chained_starts(), linearity_race()):
            verdict = check_linearity(c).ok
            for v in swap_closure(c):
                assert check_linearity(v).ok == verdict


class TestMerge:
    def test_branch_union(self):
        b1 = Branch("k", "B", "A", (("l1", INACT),))
        b2 = Branch("k", "B", "A", (("l2", InP("k", "B", "A", "x", INACT)),))
        merged = merge(b1, b2)
        assert set(merged.label_map()) == {"l1", "l2"}

    def test_idempotent(self):
        p = QOut("k", "A", ("B",), Q_ALL, Lit(1), INACT)
        assert merge(p, p) == p

    def test_shared_label_merges_recursively(self):
        b1 = Branch("k", "B", "A", (("l", Branch("k", "B", "A", (("x", INACT),))),))
        b2 = Branch("k", "B", "A", (("l", Branch("k", "B", "A", (("y", INACT),))),))
        merged = merge(b1, b2)
        assert set(merged.label_map()["l"].label_map()) == {"x", "y"}

    def test_prefix_mismatch_not_mergeable(self):
        p = QOut("k", "A", ("B",), Q_ALL, Lit(1), INACT)
        q = QOut("k", "A", ("B",), Q_ALL, Lit(2), INACT)
        with pytest.raises(NotMergeable):
            merge(p, q)

    def test_commutative_on_branchings(self):
        b1 = Branch("k", "B", "A", (("l1", INACT), ("l3", INACT)))
        b2 = Branch("k", "B", "A", (("l2", INACT),))
        assert merge(b1, b2) == merge(b2, b1)

    def test_associative_on_branchings(self):
        bs = [Branch("k", "B", "A", ((l, INACT),)) for l in ("a", "b", "c")]
        assert merge(merge(bs[0], bs[1]), bs[2]) == merge(bs[0], merge(bs[1], bs[2]))

    def test_alpha_aligned_accept_keys(self):
        p = AcceptRepl("a", "B", "k", InP("k", "B", "A", "x", INACT))
        q = AcceptRepl("a", "B", "j", InP("j", "B", "A", "y", INACT))
        assert mergeable(p, q)


class TestThreadProjection:
    def test_sensors_requester(self):
        p = project_thread(sensors(), "t1")
        assert isinstance(p, Request)
        assert p.svc == "temperature" and p.roles == ("S1", "S2", "S3", "M")
        assert isinstance(p.cont, Branch)           # the collective selection
        assert isinstance(p.cont.label_map()["measure"], OutP)  # then the contribution

    def test_sensors_other_active(self):
        p = project_thread(sensors(), "t2")
        assert isinstance(p, AcceptOnce) and p.role == "S2"

    def test_sensors_service_thread(self):
        p = project_thread(sensors(), "t0")
        assert isinstance(p, AcceptRepl) and p.role == "M"
        assert isinstance(p.cont, QSel)
        assert isinstance(p.cont.cont, QIn)
        assert p.cont.cont.op == "avg"

    def test_uninvolved_thread_projects_continuation(self):
        assert project_thread(sensors(), "zz") == INACT

    def test_if_projection_merges_for_others(self):
        sel1 = Select(athr("a", "A"), (athr("b", "B"),), Q_ALL, "k", "l1")
        sel2 = Select(athr("a", "A"), (athr("b", "B"),), Q_ALL, "k", "l2")
        c = If(Lit(True), "a", seq(sel1), seq(sel2))
        pa = project_thread(c, "a")
        pb = project_thread(c, "b")
        assert pa.then.label == "l1" and pa.orelse.label == "l2"
        assert isinstance(pb, Branch) and set(pb.label_map()) == {"l1", "l2"}

    def test_receiver_merges_over_differing_payloads(self):
        # the payload lives at the sender; receivers behave identically
        b1 = Bcast(athr("a", "A"), Lit(1), ((athr("b", "B"), "x"),), Q_ALL, "k")
        b2 = Bcast(athr("a", "A"), Lit(2), ((athr("b", "B"), "x"),), Q_ALL, "k")
        c = If(Lit(True), "a", seq(b1), seq(b2))
        assert isinstance(project_thread(c, "b"), InP)

    def test_unprojectable_conditional(self):
        # b only hears something in one branch: no selection tells it which
        b1 = Bcast(athr("a", "A"), Lit(1), ((athr("b", "B"), "x"),), Q_ALL, "k")
        c = If(Lit(True), "a", seq(b1), END)
        with pytest.raises(ProjectionUndefined):
            project_thread(c, "b")


class TestEPP:
    def test_end_projects_to_inert(self):
        assert net_congruent(epp(END), Network())

    def test_sensors_epp_shape(self):
        net = epp(sensors())
        owners = sorted(c.owner for c in net.components if c.owner)
        assert owners == ["t1", "t2", "t3"]
        groups = [c.service for c in net.components if c.service]
        assert groups == [("temperature", "M")]
        assert net.queues == ()  # the session is bound by the start

    def test_service_merge_collects_roles(self):
        assert service_merge(sensors(), "temperature", "M") == frozenset({"t0"})
        assert service_merge(sensors(), "temperature", "S1") == frozenset()

    def test_epp_runs_to_completion(self):
        for c in (sensors(), sensors(q2=q_ratio(2, 3)), typed_example()):
            trace = net_run(epp(c), policy="first")
            assert trace.verdict == "Completed", trace.final

    def test_swap_invariance(self):
        for c in (sensors(), typed_example(), chained_starts()):
            base = epp(c)
            for v in swap_closure(c):
                assert epp(v) == base

    def test_projection_localization(self):
        """A thread's projection only depends on interactions mentioning it."""
        c1 = seq(Bcast(athr("a", "A"), Lit(1), ((athr("b", "B"), "x"),), Q_ALL, "k"),
                 Bcast(athr("c", "C"), Lit(2), ((athr("d", "D"), "y"),), Q_ALL, "k2"))
        c2 = seq(Bcast(athr("c", "C"), Lit(2), ((athr("d", "D"), "y"),), Q_ALL, "k2"))
        assert project_thread(c1, "c") == project_thread(c2, "c")
        assert project_thread(c1, "d") == project_thread(c2, "d")


class TestPruning:
    def test_reflexive(self):
        net = epp(sensors())
        assert prunes(net, net)

    def test_unused_replicated_service_pruned(self):
        net = epp(sensors())
        extra = Component(AcceptRepl("other", "Z", "k9", INACT), service=("other", "Z"))
        bigger = Network(net.components + (extra,), net.queues, net.restricted)
        assert prunes(net, bigger)
        assert not prunes(bigger, net)

    def test_used_service_not_pruned(self):
        net = epp(sensors())
        # drop the replicated temperature service: the requester still uses it
        smaller = Network(tuple(c for c in net.components if not c.service),
                          net.queues, net.restricted)
        assert not prunes(smaller, net)

    def test_transitive_on_replicated_extensions(self):
        net = epp(typed_example())
        e1 = Component(AcceptRepl("svc1", "Z", "k9", INACT), service=("svc1", "Z"))
        e2 = Component(AcceptRepl("svc2", "W", "k8", INACT), service=("svc2", "W"))
        mid = Network(net.components + (e1,), net.queues, net.restricted)
        big = Network(net.components + (e1, e2), net.queues, net.restricted)
        assert prunes(net, mid) and prunes(mid, big) and prunes(net, big)

    def test_inconclusive_depth_is_reported(self):
        net = epp(sensors())
        extra = Component(AcceptRepl("other", "Z", "k9", INACT), service=("other", "Z"))
        bigger = Network(net.components + (extra,), net.queues, net.restricted)
        with pytest.raises(PruningInconclusive):
            prunes(net, bigger, depth=0)

    def test_merged_branch_absorbs_projection(self):
        sel1 = Select(athr("a", "A"), (athr("b", "B"),), Q_ALL, "k", "l1")
        sel2 = Select(athr("a", "A"), (athr("b", "B"),), Q_ALL, "k", "l2")
        c = If(Lit(True), "a", seq(sel1), seq(sel2))
        taken = seq(sel1)  # the then-branch was chosen
        p = epp(taken)
        q = Network((Component(project_thread(c, "a").then, owner="a"),
                     Component(project_thread(c, "b"), owner="b")),
                    (Queue("k"),))
        assert prunes(p, q)
