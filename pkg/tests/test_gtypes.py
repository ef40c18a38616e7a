"""Session types: transitions, swap closure, the judgment, label typing."""

import pytest

from chorfixtures import sensors, typed_example
from gcq.gtypes import (
    BcastT,
    BranchT,
    END_T,
    EndT,
    GammaEnv,
    NoMatch,
    RedT,
    ServiceBinding,
    TLabel,
    Untypable,
    branch_t,
    check_session,
    check_session_only,
    delta_step,
    gtype_roles,
    gtype_step,
    infer_gamma,
    infer_protocol,
    tswap_closure,
    type_label,
)
from gcq.captypes import check_capabilities
from gcq.semantics import Configuration, run, step
from gcq.syntax import (
    GInitL,
    GTau,
    Lit,
    Q_ALL,
    athr,
    Bcast,
    Init,
    Reduce,
    seq,
)

SENSOR_G = BcastT("M", ("S1", "S2", "S3"), "date",
                  RedT(("S1", "S2", "S3"), "M", "float", END_T))

SENSORS_BRANCH_G = branch_t("M", ("S1", "S2", "S3"),
                  {"measure": RedT(("S1", "S2", "S3"), "M", "int", END_T)})


def sensor_gamma():
    return GammaEnv({"temperature": ServiceBinding(SENSOR_G, ("S1", "S2", "S3"), ("M",))})


def sensors_branch_gamma():
    return GammaEnv({"temperature": ServiceBinding(SENSORS_BRANCH_G, ("S1", "S2", "S3"), ("M",))})


class TestTypeTransitions:
    def test_bcast_head_consumed(self):
        g = BcastT("M", ("S1", "S2"), "date", END_T)
        alpha = TLabel("bcast", ("M",), ("S1", "S2"), "date")
        assert gtype_step(g, alpha) == END_T

    def test_end_has_no_transition(self):
        with pytest.raises(NoMatch):
            gtype_step(END_T, TLabel("bcast", ("M",), ("S1",), "int"))

    def test_branch_steps_to_selected_label(self):
        g = branch_t("A", ("B",), {"l1": BcastT("A", ("B",), "int", END_T), "l2": END_T})
        assert gtype_step(g, TLabel("sel", ("A",), ("B",), None, "l2")) == END_T

    def test_branch_rejects_unknown_label(self):
        g = branch_t("A", ("B",), {"l1": END_T})
        with pytest.raises(NoMatch):
            gtype_step(g, TLabel("sel", ("A",), ("B",), None, "nope"))

    def test_disjoint_prefixes_commute(self):
        g = BcastT("A", ("B",), "int", RedT(("C",), "D", "int", END_T))
        stepped = gtype_step(g, TLabel("red", ("C",), ("D",), "int"))
        assert stepped == BcastT("A", ("B",), "int", END_T)
        swapped = RedT(("C",), "D", "int", BcastT("A", ("B",), "int", END_T))
        assert swapped in tswap_closure(g)

    def test_overlapping_prefixes_do_not_commute(self):
        g = BcastT("A", ("B",), "int", RedT(("B",), "A", "int", END_T))
        with pytest.raises(NoMatch):
            gtype_step(g, TLabel("red", ("B",), ("A",), "int"))

    def test_wildcard_sort_matches(self):
        g = BcastT("A", ("B",), "date", END_T)
        assert gtype_step(g, TLabel("bcast", ("A",), ("B",), None)) == END_T

    def test_step_residual_roles_shrink(self):
        g = SENSOR_G
        stepped = gtype_step(g, TLabel("bcast", ("M",), ("S1", "S2", "S3"), "date"))
        assert gtype_roles(stepped) <= gtype_roles(g)


class TestSessionJudgment:
    def test_typed_example_accepted(self):
        report = check_session(sensor_gamma(), [], typed_example())
        assert report.ok, report.failures

    def test_sensors_accepted_under_branch_protocol(self):
        report = check_session(sensors_branch_gamma(), [], sensors())
        assert report.ok, report.failures

    def test_end_with_end_delta(self):
        report = check_session_only(GammaEnv(), __import__("gcq.syntax", fromlist=["END"]).END,
                                    {"k": END_T})
        assert report.ok

    def test_protocol_residue_rejected(self):
        report = check_session_only(GammaEnv(), __import__("gcq.syntax", fromlist=["END"]).END,
                                    {"k": SENSOR_G})
        assert not report.ok
        assert report.failures[0].code == "ProtocolResidue"

    def test_sort_mismatch_rejected(self):
        bad = typed_example()
        # replace the date payload with an int literal
        from dataclasses import replace as dreplace
        inter = bad.cont.inter
        bad2 = seq(bad.inter, dreplace(inter, expr=Lit(3)), bad.cont.cont.inter)
        report = check_session(sensor_gamma(), [], bad2)
        assert not report.ok
        assert any(f.code == "SortMismatch" for f in report.failures)

    def test_undeclared_service_rejected(self):
        report = check_session(GammaEnv(), [], typed_example())
        assert any(f.code == "ServiceNotDeclared" for f in report.failures)

    def test_label_not_offered(self):
        gamma = GammaEnv({"temperature": ServiceBinding(
            branch_t("M", ("S1", "S2", "S3"),
                     {"other": RedT(("S1", "S2", "S3"), "M", "int", END_T)}))})
        report = check_session(gamma, [], sensors())
        assert any(f.code == "LabelNotOffered" for f in report.failures)

    def test_separation_of_analyses(self):
        """The full judgment is exactly the conjunction of its two halves."""
        for c, gamma in [(sensors(), sensors_branch_gamma()), (typed_example(), sensor_gamma())]:
            full = check_session(gamma, [], c)
            caps = check_capabilities([], c)
            sess = check_session_only(gamma, c, {})
            assert full.ok == (caps.ok and sess.ok)


class TestLabelTyping:
    def test_bcast_label(self):
        c = typed_example()
        conf = Configuration.initial(c)
        _, c1 = step(conf)
        (label, _), = [(l, s) for l, s in
                       __import__("gcq.semantics", fromlist=["enabled"]).enabled(c1)]
        gamma = sensor_gamma().with_ownerships(
            {("tm", "k"): "M", ("t1", "k"): "S1", ("t2", "k"): "S2", ("t3", "k"): "S3"})
        key, alpha = type_label(gamma, label)
        assert key == "k"
        assert alpha == TLabel("bcast", ("M",), ("S1", "S2", "S3"), "date")
        assert delta_step({"k": SENSOR_G}, key, alpha)["k"] == RedT(("S1", "S2", "S3"), "M",
                                                                    "float", END_T)

    def test_init_and_tau_not_in_domain(self):
        with pytest.raises(Untypable):
            type_label(GammaEnv(), GTau())
        with pytest.raises(Untypable):
            type_label(GammaEnv(), GInitL((("t", "A"),), (("s", "B"),), "a", "k"))


class TestInference:
    def test_sensors_protocol_inferred(self):
        g = infer_protocol(sensors(), "k")
        assert g == SENSORS_BRANCH_G

    def test_typed_example_protocol_inferred(self):
        assert infer_protocol(typed_example(), "k") == SENSOR_G

    def test_inferred_gamma_typechecks(self):
        for c in (sensors(), typed_example()):
            gamma = infer_gamma(c)
            assert check_session(gamma, [], c).ok
