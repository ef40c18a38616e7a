"""Shared machinery for preservation, progress and metatheory suites.

Walks seeded traces of a configuration while maintaining the
rule-prescribed typing artefacts: the capability context mirroring the
store, the service environment, the session environment, and the role map
accumulated from initiation labels.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from gcq.captypes import check_capabilities, state_satisfies
from gcq.gtypes import (
    GammaEnv,
    check_session_only,
    delta_step,
    infer_gamma,
    type_label,
)
from gcq.linlog import Own
from gcq.semantics import Configuration, enabled, split_prenex
from gcq.syntax import (
    CapState,
    Choreography,
    GBcastL,
    GInitL,
    GReduceL,
    GSelectL,
    GTau,
)


@dataclass
class TraceState:
    conf: Configuration
    roles: dict  # (thread, session) -> role
    gamma: GammaEnv
    delta: dict  # session -> GlobalType


def initial_state(c: Choreography) -> TraceState:
    return TraceState(Configuration.initial(c), {}, infer_gamma(c), {})


def context_of(sigma: CapState, roles: dict):
    """Capability context mirroring the store, one ownership atom per entry."""
    out = []
    for (t, k), caps in sigma.items():
        out.append(Own(t, k, roles.get((t, k), "?"), caps))
    return tuple(out)


def advance(state: TraceState, label, conf2: Configuration) -> TraceState:
    roles = dict(state.roles)
    gamma, delta = state.gamma, dict(state.delta)
    match label:
        case GInitL(actives, services, svc, key):
            own = {}
            for t, r in actives + services:
                roles[(t, key)] = r
                own[(t, key)] = r
            gamma = gamma.with_ownerships(own)
            binding = gamma.services.get(svc)
            if binding is not None:
                delta[key] = binding.gtype
        case GBcastL() | GReduceL() | GSelectL():
            key, alpha = type_label(gamma, label)
            delta = dict(delta_step(delta, key, alpha))
        case GTau():
            pass
    return TraceState(conf2, roles, gamma, delta)


def assert_preserved(state: TraceState) -> None:
    """Residual re-typechecks: capability side and session side."""
    conf = state.conf
    psi = context_of(conf.sigma, state.roles)
    _, core = split_prenex(conf.chor)
    cap = check_capabilities(psi, core)
    assert cap.ok, f"capability typing lost: {[f.to_json() for f in cap.failures]}"
    assert state_satisfies(conf.sigma, psi)
    sess = check_session_only(state.gamma, core, state.delta)
    assert sess.ok, f"session typing lost: {[f.to_json() for f in sess.failures]}"


def random_traces(c: Choreography, seeds, max_steps: int = 24):
    """Yield (state, label, next_state) along seeded maximal runs."""
    for seed in seeds:
        rng = random.Random(seed)
        state = initial_state(c)
        for _ in range(max_steps):
            options = enabled(state.conf)
            if not options:
                break
            label, conf2 = options[rng.randrange(len(options))]
            nxt = advance(state, label, conf2)
            yield state, label, nxt
            state = nxt


class SubsetOracle:
    """Admits exactly one chosen subset per (session, candidate-set) point."""

    def __init__(self, choices: dict):
        self.choices = choices  # (session, frozenset candidates) -> frozenset available

    def available(self, step, session, candidates):
        return self.choices.get((session, frozenset(candidates)), frozenset(candidates))


def adversarial_oracles(conf: Configuration, rng: random.Random, samples: int = 3):
    """Oracles that admit one quality-satisfying subset per head interaction."""
    from gcq.syntax import quality_subsets

    points = {}
    for label, _ in enabled(conf):
        match label:
            case GBcastL(_, receivers, quality, key, _, _) | GSelectL(_, receivers, quality, key, _, _):
                cands = tuple(t for t, _ in receivers)
            case GReduceL(senders, _, quality, key, _, _, _, _):
                cands = tuple(t for t, _ in senders)
            case _:
                continue
        points.setdefault((key, frozenset(cands)), quality_subsets(quality, cands))
    out = []
    for _ in range(samples):
        choice = {}
        for point, subsets in points.items():
            choice[point] = rng.choice(subsets)
        out.append(SubsetOracle(choice))
    return out
