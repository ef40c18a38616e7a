"""Global session types: protocol syntax, transitions and the type checker.

A global type scripts the collective interactions of one session: broadcast
and reduce types carry the payload sort, branch types map each label a
selector may pick to its continuation protocol.  The session judgment
``Gamma; Psi |- C |> Delta`` is split into two independent analyses: the
capability analysis of :mod:`gcq.captypes` and a protocol-conformance
analysis that never looks at capabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Union

from .captypes import Failure, Report, check_capabilities, describe_interaction
from .linlog import Formula
from .syntax import (
    Bcast,
    Binop,
    Choreography,
    Date,
    End,
    Expr,
    GBcastL,
    GLabel,
    GReduceL,
    GSelectL,
    If,
    Init,
    Lit,
    New,
    NoneE,
    NoneV,
    OptValue,
    Reduce,
    Role,
    Select,
    Seq,
    SessionKey,
    SomeE,
    Thread,
    Unop,
    Value,
    Var,
    VarName,
)

SORTS = ("bool", "int", "string", "date", "float")
Sort = str


class NoMatch(ValueError):
    """The type label is not enabled, even through type-level swaps."""


class Untypable(ValueError):
    """The semantic label has no session-type counterpart."""


class NotInferable(ValueError):
    """No global type reproduces the session behaviour of the term."""


# ---------------------------------------------------------------------------
# Global type syntax


@dataclass(frozen=True)
class EndT:
    def __str__(self) -> str:
        return "end"


@dataclass(frozen=True)
class BcastT:
    sender: Role
    receivers: tuple[Role, ...]
    sort: Sort
    cont: "GlobalType"

    def __str__(self) -> str:
        return f"bcast {self.sender}->({','.join(self.receivers)})<{self.sort}>.{self.cont}"


@dataclass(frozen=True)
class RedT:
    senders: tuple[Role, ...]
    receiver: Role
    sort: Sort
    cont: "GlobalType"

    def __str__(self) -> str:
        return f"reduce ({','.join(self.senders)})->{self.receiver}<{self.sort}>.{self.cont}"


@dataclass(frozen=True)
class BranchT:
    sender: Role
    receivers: tuple[Role, ...]
    branches: tuple[tuple[str, "GlobalType"], ...]  # label-sorted, labels distinct

    def __post_init__(self):
        labels = [l for l, _ in self.branches]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate branch labels: {labels}")
        if list(labels) != sorted(labels):
            object.__setattr__(self, "branches", tuple(sorted(self.branches)))

    def label_map(self) -> dict[str, "GlobalType"]:
        return dict(self.branches)

    def __str__(self) -> str:
        body = ", ".join(f"{l}: {g}" for l, g in self.branches)
        return f"branch {self.sender}->({','.join(self.receivers)}){{{body}}}"


GlobalType = Union[EndT, BcastT, RedT, BranchT]
END_T = EndT()


def branch_t(sender: Role, receivers: Iterable[Role], branches: Mapping[str, GlobalType]) -> BranchT:
    return BranchT(sender, tuple(receivers), tuple(sorted(branches.items())))


def gtype_roles(g: GlobalType) -> frozenset[Role]:
    match g:
        case EndT():
            return frozenset()
        case BcastT(sender, receivers, _, cont):
            return frozenset({sender}) | frozenset(receivers) | gtype_roles(cont)
        case RedT(senders, receiver, _, cont):
            return frozenset(senders) | {receiver} | gtype_roles(cont)
        case BranchT(sender, receivers, branches):
            out = frozenset({sender}) | frozenset(receivers)
            for _, cont in branches:
                out |= gtype_roles(cont)
            return out
    raise TypeError(f"not a global type: {g!r}")


def _head_roles(g: GlobalType) -> frozenset[Role]:
    match g:
        case BcastT(sender, receivers, _, _) | BranchT(sender, receivers, _):
            return frozenset({sender}) | frozenset(receivers)
        case RedT(senders, receiver, _, _):
            return frozenset(senders) | {receiver}
    return frozenset()


# ---------------------------------------------------------------------------
# Type-level swap relation and transitions


def _tswap_here(g: GlobalType) -> list[GlobalType]:
    out = []
    # prefix-prefix swaps: bcast/reduce heads over a disjoint next constructor
    if isinstance(g, (BcastT, RedT)):
        head_roles = _head_roles(g)
        inner = g.cont
        if isinstance(inner, (BcastT, RedT)) and head_roles.isdisjoint(_head_roles(inner)):
            out.append(_replace_cont(inner, _replace_cont(g, inner.cont)))
        if isinstance(inner, BranchT) and head_roles.isdisjoint(_head_roles(inner)):
            out.append(BranchT(inner.sender, inner.receivers,
                               tuple((l, _replace_cont(g, gi)) for l, gi in inner.branches)))
    match g:
        case BranchT(a, bs, branches):
            head_roles = frozenset({a}) | frozenset(bs)
            # branch-over-branch: every branch continues with the same inner branch head
            inners = [gi for _, gi in branches]
            if inners and all(isinstance(gi, BranchT) for gi in inners):
                first: BranchT = inners[0]
                same = all(gi.sender == first.sender and gi.receivers == first.receivers
                           and tuple(l for l, _ in gi.branches) == tuple(l for l, _ in first.branches)
                           for gi in inners)
                if same and head_roles.isdisjoint(frozenset({first.sender}) | frozenset(first.receivers)):
                    new_branches = []
                    for j, (l2, _) in enumerate(first.branches):
                        inner_map = {l1: inners[i].branches[j][1] for i, (l1, _) in enumerate(branches)}
                        new_branches.append((l2, branch_t(a, bs, inner_map)))
                    out.append(BranchT(first.sender, first.receivers, tuple(new_branches)))
            # branch over a uniform bcast/reduce: hoist the prefix out
            if inners and all(isinstance(gi, (BcastT, RedT)) for gi in inners):
                first = inners[0]
                same = all(_strip_cont(gi) == _strip_cont(first) for gi in inners)
                if same and head_roles.isdisjoint(_head_roles(first)):
                    hoisted_branches = {l: gi.cont for (l, _), gi in zip(branches, inners)}
                    out.append(_replace_cont(first, branch_t(a, bs, hoisted_branches)))
        case _:
            pass
    return out


def _replace_cont(g: GlobalType, cont: GlobalType) -> GlobalType:
    match g:
        case BcastT():
            return replace(g, cont=cont)
        case RedT():
            return replace(g, cont=cont)
    raise TypeError(f"no continuation to replace in {g!r}")


def _strip_cont(g: GlobalType):
    match g:
        case BcastT(a, bs, s, _):
            return ("bcast", a, bs, s)
        case RedT(as_, b, s, _):
            return ("red", tuple(as_), b, s)
    return None


def _tswap_variants(g: GlobalType) -> list[GlobalType]:
    out = list(_tswap_here(g))
    match g:
        case BcastT() | RedT():
            out += [_replace_cont(g, v) for v in _tswap_variants(g.cont)]
        case BranchT(a, bs, branches):
            for i, (l, gi) in enumerate(branches):
                for v in _tswap_variants(gi):
                    new = list(branches)
                    new[i] = (l, v)
                    out.append(BranchT(a, bs, tuple(new)))
        case _:
            pass
    return out


def tswap_closure(g: GlobalType, bound: int = 4096) -> list[GlobalType]:
    seen = {g}
    frontier = [g]
    while frontier and len(seen) < bound:
        nxt = []
        for t in frontier:
            for v in _tswap_variants(t):
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return list(seen)


@dataclass(frozen=True)
class TLabel:
    """Abstract interaction consumed by a type transition."""

    kind: str  # "bcast" | "red" | "sel"
    a_roles: tuple[Role, ...]
    b_roles: tuple[Role, ...]
    sort: Optional[Sort] = None  # None matches any sort (optional-data payload)
    label: Optional[str] = None

    def __str__(self) -> str:
        if self.kind == "bcast":
            return f"bcast {self.a_roles[0]}->({','.join(self.b_roles)})<{self.sort or '_'}>"
        if self.kind == "red":
            return f"reduce ({','.join(self.a_roles)})->{self.b_roles[0]}<{self.sort or '_'}>"
        return f"select {self.a_roles[0]}->({','.join(self.b_roles)}):{self.label}"


def _head_step(g: GlobalType, alpha: TLabel) -> Optional[GlobalType]:
    match g, alpha.kind:
        case BcastT(sender, receivers, sort, cont), "bcast":
            if (sender,) == alpha.a_roles and frozenset(receivers) == frozenset(alpha.b_roles) \
                    and (alpha.sort is None or alpha.sort == sort):
                return cont
        case RedT(senders, receiver, sort, cont), "red":
            if frozenset(senders) == frozenset(alpha.a_roles) and (receiver,) == alpha.b_roles \
                    and (alpha.sort is None or alpha.sort == sort):
                return cont
        case BranchT(sender, receivers, branches), "sel":
            if (sender,) == alpha.a_roles and frozenset(receivers) == frozenset(alpha.b_roles):
                for l, cont in branches:
                    if l == alpha.label:
                        return cont
    return None


def gtype_step(g: GlobalType, alpha: TLabel) -> GlobalType:
    """Consume the interaction ``alpha``, possibly after type-level swaps."""
    for variant in tswap_closure(g):
        nxt = _head_step(variant, alpha)
        if nxt is not None:
            return nxt
    raise NoMatch(f"type {g} cannot take {alpha}")


# ---------------------------------------------------------------------------
# Environments


@dataclass(frozen=True)
class ServiceBinding:
    gtype: GlobalType
    actives: Optional[tuple[Role, ...]] = None   # None: take the split from the start
    services: Optional[tuple[Role, ...]] = None


@dataclass(frozen=True)
class GammaEnv:
    services: Mapping[str, ServiceBinding] = field(default_factory=dict)
    var_sorts: Mapping[tuple[VarName, Thread], Sort] = field(default_factory=dict)
    ownerships: Mapping[tuple[Thread, SessionKey], Role] = field(default_factory=dict)

    def with_ownerships(self, new: Mapping[tuple[Thread, SessionKey], Role]) -> "GammaEnv":
        return GammaEnv(self.services, self.var_sorts, {**self.ownerships, **new})

    def with_var_sorts(self, new: Mapping[tuple[VarName, Thread], Sort]) -> "GammaEnv":
        return GammaEnv(self.services, {**self.var_sorts, **new}, self.ownerships)

    def threads(self) -> frozenset[Thread]:
        return (frozenset(t for t, _ in self.ownerships)
                | frozenset(t for _, t in self.var_sorts))

    def drop_name(self, name: str) -> "GammaEnv":
        return GammaEnv(self.services,
                        {k: v for k, v in self.var_sorts.items() if k[1] != name},
                        {k: v for k, v in self.ownerships.items()
                         if k[0] != name and k[1] != name})


DeltaEnv = Mapping[SessionKey, GlobalType]


# ---------------------------------------------------------------------------
# Sorts of values and expressions


def value_sort(v: Value) -> Sort:
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, int):
        return "int"
    if isinstance(v, float):
        return "float"
    if isinstance(v, Date):
        return "date"
    if isinstance(v, str):
        return "string"
    raise TypeError(f"no sort for value {v!r}")


class SortError(ValueError):
    pass


def sort_of(e: Expr, at: Thread, gamma: GammaEnv) -> Optional[Sort]:
    """Sort of an optional-data expression; ``None`` stands for any sort."""
    match e:
        case Lit(value):
            return value_sort(value)
        case NoneE():
            return None
        case SomeE(inner):
            return sort_of(inner, at, gamma)
        case Var(name):
            s = gamma.var_sorts.get((name, at))
            if s is None:
                raise SortError(f"variable {name}@{at} has no declared sort")
            return s
        case Unop(op, operand):
            s = sort_of(operand, at, gamma)
            if op == "not":
                if s not in (None, "bool"):
                    raise SortError(f"'not' applied to {s}")
                return "bool"
            if s not in (None, "int", "float"):
                raise SortError(f"negation applied to {s}")
            return s
        case Binop(op, left, right):
            sl = sort_of(left, at, gamma)
            sr = sort_of(right, at, gamma)
            if op in ("+", "-", "*"):
                merged = _merge_sorts(sl, sr)
                if merged not in (None, "int", "float"):
                    raise SortError(f"arithmetic on {merged}")
                return merged
            if op in ("=", "<"):
                merged = _merge_sorts(sl, sr)
                if op == "<" and merged == "bool":
                    raise SortError("'<' on booleans")
                return "bool"
            if op in ("and", "or"):
                for s in (sl, sr):
                    if s not in (None, "bool"):
                        raise SortError(f"boolean operator on {s}")
                return "bool"
    raise TypeError(f"not an expression: {e!r}")


def _merge_sorts(a: Optional[Sort], b: Optional[Sort]) -> Optional[Sort]:
    if a is None:
        return b
    if b is None or a == b:
        return a
    raise SortError(f"sort mismatch: {a} vs {b}")


def sorts_match(actual: Optional[Sort], declared: Sort) -> bool:
    return actual is None or actual == declared


# ---------------------------------------------------------------------------
# The session judgment


class SessionChecker:
    def __init__(self):
        self.failures: list[Failure] = []

    def _fail(self, code: str, where: str, reason: str) -> None:
        self.failures.append(Failure(code, where, reason))

    def check(self, gamma: GammaEnv, c: Choreography, delta: DeltaEnv) -> bool:
        match c:
            case End():
                residue = {k: g for k, g in delta.items() if g != END_T}
                if residue:
                    self._fail("ProtocolResidue", "end",
                               "unfinished sessions: "
                               + ", ".join(f"{k}: {g}" for k, g in sorted(residue.items())))
                    return False
                return True
            case New(_, name, body):
                return self.check(gamma.drop_name(name),
                                  body, {k: g for k, g in delta.items() if k != name})
            case If(guard, at, then, orelse):
                ok = True
                try:
                    s = sort_of(guard, at, gamma)
                    if s not in (None, "bool"):
                        self._fail("SortMismatch", f"if @{at}", f"guard has sort {s}, wanted bool")
                        ok = False
                except SortError as exc:
                    self._fail("SortMismatch", f"if @{at}", str(exc))
                    ok = False
                ok1 = self.check(gamma, then, delta)
                ok2 = self.check(gamma, orelse, delta)
                return ok and ok1 and ok2
            case Seq(inter, cont):
                return self._check_inter(gamma, inter, cont, delta)
        raise TypeError(f"not a choreography: {c!r}")

    def _check_inter(self, gamma, inter, cont, delta) -> bool:
        where = describe_interaction(inter)
        match inter:
            case Init(actives, services, svc, key):
                binding = gamma.services.get(svc)
                if binding is None:
                    self._fail("ServiceNotDeclared", where, f"service {svc!r} not in the environment")
                    return False
                active_roles = tuple(p.role for p in actives)
                service_roles = tuple(p.role for p in services)
                if binding.actives is not None and frozenset(binding.actives) != frozenset(active_roles):
                    self._fail("RoleMismatch", where,
                               f"declared active roles {binding.actives} vs {active_roles}")
                    return False
                if binding.services is not None and frozenset(binding.services) != frozenset(service_roles):
                    self._fail("RoleMismatch", where,
                               f"declared service roles {binding.services} vs {service_roles}")
                    return False
                declared = gtype_roles(binding.gtype)
                announced = frozenset(active_roles) | frozenset(service_roles)
                if not declared <= announced:
                    self._fail("RoleMismatch", where,
                               f"protocol roles {sorted(declared)} not covered by {sorted(announced)}")
                    return False
                if len(set(active_roles + service_roles)) != len(active_roles + service_roles):
                    self._fail("RoleMismatch", where, "participant roles must be pairwise distinct")
                    return False
                clash = {p.thread for p in services} & gamma.threads()
                if clash:
                    self._fail("FreshnessViolation", where,
                               f"service threads already known: {sorted(clash)}")
                    return False
                if key in delta:
                    self._fail("FreshnessViolation", where, f"session {key!r} already tracked")
                    return False
                own = {(p.thread, key): p.role for p in actives + services}
                return self.check(gamma.with_ownerships(own), cont, {**delta, key: binding.gtype})

            case Bcast(sender, expr, receivers, _, key):
                ok, g = self._session_head(where, delta, key)
                if not ok:
                    return False
                if not self._owned(where, gamma, sender.thread, key, sender.role):
                    return False
                for p, _ in receivers:
                    if not self._owned(where, gamma, p.thread, key, p.role):
                        return False
                try:
                    s_actual = sort_of(expr, sender.thread, gamma)
                except SortError as exc:
                    self._fail("SortMismatch", where, str(exc))
                    return False
                alpha_sort = None
                target = self._step(where, g, TLabel(
                    "bcast", (sender.role,), tuple(p.role for p, _ in receivers), alpha_sort))
                if target is None:
                    return False
                declared_sort = self._declared_sort(g, "bcast",
                                                    (sender.role,), tuple(p.role for p, _ in receivers))
                if declared_sort is not None and not sorts_match(s_actual, declared_sort):
                    self._fail("SortMismatch", where,
                               f"payload sort {s_actual} does not match protocol sort {declared_sort}")
                    return False
                new_vars = {(x, p.thread): declared_sort or (s_actual or "int")
                            for p, x in receivers}
                return self.check(gamma.with_var_sorts(new_vars), cont, {**delta, key: target})

            case Reduce(senders, receiver, bind_var, _, _, key):
                ok, g = self._session_head(where, delta, key)
                if not ok:
                    return False
                if not self._owned(where, gamma, receiver.thread, key, receiver.role):
                    return False
                for p, _ in senders:
                    if not self._owned(where, gamma, p.thread, key, p.role):
                        return False
                sorts = []
                for p, e in senders:
                    try:
                        sorts.append(sort_of(e, p.thread, gamma))
                    except SortError as exc:
                        self._fail("SortMismatch", where, str(exc))
                        return False
                target = self._step(where, g, TLabel(
                    "red", tuple(p.role for p, _ in senders), (receiver.role,), None))
                if target is None:
                    return False
                declared_sort = self._declared_sort(g, "red",
                                                    tuple(p.role for p, _ in senders), (receiver.role,))
                if declared_sort is not None:
                    for s_actual in sorts:
                        if not sorts_match(s_actual, declared_sort):
                            self._fail("SortMismatch", where,
                                       f"contribution sort {s_actual} vs protocol sort {declared_sort}")
                            return False
                new_vars = {(bind_var, receiver.thread): declared_sort or "int"}
                return self.check(gamma.with_var_sorts(new_vars), cont, {**delta, key: target})

            case Select(sender, receivers, _, key, label):
                ok, g = self._session_head(where, delta, key)
                if not ok:
                    return False
                if not self._owned(where, gamma, sender.thread, key, sender.role):
                    return False
                for p in receivers:
                    if not self._owned(where, gamma, p.thread, key, p.role):
                        return False
                target = self._step(where, g, TLabel(
                    "sel", (sender.role,), tuple(p.role for p in receivers), None, label),
                    missing_code="LabelNotOffered")
                if target is None:
                    return False
                return self.check(gamma, cont, {**delta, key: target})
        raise TypeError(f"not an interaction: {inter!r}")

    def _session_head(self, where, delta, key):
        g = delta.get(key)
        if g is None:
            self._fail("SessionUntracked", where, f"session {key!r} has no protocol")
            return False, None
        return True, g

    def _owned(self, where, gamma, thread, key, role) -> bool:
        actual = gamma.ownerships.get((thread, key))
        if actual != role:
            self._fail("RoleNotOwned", where,
                       f"{thread} does not own role {role} in session {key} (has {actual})")
            return False
        return True

    def _step(self, where, g, alpha, missing_code="ProtocolMismatch"):
        try:
            return gtype_step(g, alpha)
        except NoMatch:
            self._fail(missing_code, where, f"protocol {g} does not offer {alpha}")
            return None

    def _declared_sort(self, g: GlobalType, kind: str, a_roles, b_roles) -> Optional[Sort]:
        for variant in tswap_closure(g):
            match variant, kind:
                case BcastT(sender, receivers, sort, _), "bcast":
                    if (sender,) == a_roles and frozenset(receivers) == frozenset(b_roles):
                        return sort
                case RedT(senders, receiver, sort, _), "red":
                    if frozenset(senders) == frozenset(a_roles) and (receiver,) == b_roles:
                        return sort
        return None


def check_session_only(gamma: GammaEnv, c: Choreography, delta: DeltaEnv | None = None) -> Report:
    """The protocol-conformance half of the judgment, without capabilities."""
    checker = SessionChecker()
    ok = checker.check(gamma, c, dict(delta or {}))
    return Report(ok, checker.failures)


def check_session(gamma: GammaEnv, psi: Iterable[Formula], c: Choreography,
                  delta: DeltaEnv | None = None) -> Report:
    """Full judgment: capability analysis and protocol conformance, independently."""
    return check_capabilities(psi, c).merge(check_session_only(gamma, c, delta))


# ---------------------------------------------------------------------------
# Label typing


def _opt_sort(w: OptValue) -> Optional[Sort]:
    if isinstance(w, NoneV):
        return None
    return value_sort(w.value)


def type_label(gamma: GammaEnv, glabel: GLabel) -> tuple[SessionKey, TLabel]:
    """Session-type counterpart of a semantic label.

    Defined for communication labels only; initiation leaves the session
    environment unchanged and internal steps have no protocol footprint.
    """
    match glabel:
        case GBcastL(sender, receivers, _, key, _, value):
            _check_label_ownership(gamma, key, [sender] + list(receivers))
            return key, TLabel("bcast", (sender[1],), tuple(r for _, r in receivers),
                               _opt_sort(value))
        case GReduceL(senders, receiver, _, key, _, contributions, _, _):
            _check_label_ownership(gamma, key, list(senders) + [receiver])
            sort: Optional[Sort] = None
            for _, w in contributions:
                s = _opt_sort(w)
                if s is not None:
                    if sort is not None and sort != s:
                        raise Untypable(f"mixed contribution sorts {sort} and {s}")
                    sort = s
            return key, TLabel("red", tuple(r for _, r in senders), (receiver[1],), sort)
        case GSelectL(sender, receivers, _, key, _, label):
            _check_label_ownership(gamma, key, [sender] + list(receivers))
            return key, TLabel("sel", (sender[1],), tuple(r for _, r in receivers), None, label)
    raise Untypable(f"label {glabel!r} has no session-type counterpart")


def _check_label_ownership(gamma: GammaEnv, key, parts):
    for thread, role in parts:
        if gamma.ownerships and gamma.ownerships.get((thread, key)) not in (None, role):
            raise Untypable(f"{thread} plays {gamma.ownerships[(thread, key)]} in {key}, not {role}")


def delta_step(delta: DeltaEnv, key: SessionKey, alpha: TLabel) -> DeltaEnv:
    if key not in delta:
        raise NoMatch(f"session {key!r} not tracked")
    return {**delta, key: gtype_step(delta[key], alpha)}


# ---------------------------------------------------------------------------
# Protocol inference (used to build typed corpora and service declarations)


def merge_gtypes(g1: GlobalType, g2: GlobalType) -> GlobalType:
    if g1 == g2:
        return g1
    if isinstance(g1, BranchT) and isinstance(g2, BranchT) \
            and g1.sender == g2.sender and frozenset(g1.receivers) == frozenset(g2.receivers):
        m1, m2 = g1.label_map(), g2.label_map()
        merged = dict(m1)
        for l, g in m2.items():
            merged[l] = merge_gtypes(m1[l], g) if l in m1 else g
        return branch_t(g1.sender, g1.receivers, merged)
    raise NotInferable(f"cannot merge protocols {g1} and {g2}")


def infer_protocol(c: Choreography, key: SessionKey, gamma: GammaEnv | None = None) -> GlobalType:
    """Global type of one session, as scripted by the term itself."""
    gamma = gamma or GammaEnv()

    def walk(ch: Choreography, var_sorts: dict) -> GlobalType:
        match ch:
            case End():
                return END_T
            case New(_, _, body):
                return walk(body, var_sorts)
            case If(_, _, then, orelse):
                return merge_gtypes(walk(then, var_sorts), walk(orelse, dict(var_sorts)))
            case Seq(inter, cont):
                if inter.key != key:
                    return walk(cont, var_sorts)
                g2 = GammaEnv(gamma.services, var_sorts, gamma.ownerships)
                match inter:
                    case Init():
                        return walk(cont, var_sorts)
                    case Bcast(sender, expr, receivers, _, _):
                        try:
                            s = sort_of(expr, sender.thread, g2) or "int"
                        except SortError as exc:
                            raise NotInferable(str(exc))
                        vs = dict(var_sorts)
                        for p, x in receivers:
                            vs[(x, p.thread)] = s
                        return BcastT(sender.role, tuple(p.role for p, _ in receivers), s,
                                      walk(cont, vs))
                    case Reduce(senders, receiver, bind_var, _, _, _):
                        s: Optional[Sort] = None
                        for p, e in senders:
                            try:
                                s = _merge_sorts(s, sort_of(e, p.thread, g2))
                            except SortError as exc:
                                raise NotInferable(str(exc))
                        s = s or "int"
                        vs = dict(var_sorts)
                        vs[(bind_var, receiver.thread)] = s
                        return RedT(tuple(p.role for p, _ in senders), receiver.role, s,
                                    walk(cont, vs))
                    case Select(sender, receivers, _, _, label):
                        return branch_t(sender.role, tuple(p.role for p in receivers),
                                        {label: walk(cont, var_sorts)})
        raise TypeError(f"not a choreography: {ch!r}")

    return walk(c, dict(gamma.var_sorts))


def infer_gamma(c: Choreography) -> GammaEnv:
    """Service environment inferred from every session start of the term."""
    services: dict[str, ServiceBinding] = {}

    def walk(ch: Choreography):
        match ch:
            case Seq(Init(actives, srv, svc, key), cont):
                g = infer_protocol(Seq(Init(actives, srv, svc, key), cont), key)
                binding = ServiceBinding(g, tuple(p.role for p in actives),
                                         tuple(p.role for p in srv))
                if svc in services:
                    prior = services[svc]
                    merged = merge_gtypes(prior.gtype, binding.gtype)
                    if (frozenset(prior.actives or ()) != frozenset(binding.actives or ())
                            or frozenset(prior.services or ()) != frozenset(binding.services or ())):
                        raise NotInferable(f"service {svc!r} started with differing role splits")
                    services[svc] = ServiceBinding(merged, prior.actives, prior.services)
                else:
                    services[svc] = binding
                walk(cont)
            case Seq(_, cont):
                walk(cont)
            case If(_, _, then, orelse):
                walk(then)
                walk(orelse)
            case New(_, _, body):
                walk(body)
            case End():
                pass

    walk(c)
    return GammaEnv(services, {}, {})
