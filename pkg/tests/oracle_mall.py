"""Naive exhaustive proof search used as an independent oracle for the prover.

Tries every rule at every position, with no rule ordering, no invertibility
shortcuts and no certificates.  Termination follows from the strictly
decreasing total formula size of premises; a per-call memo only avoids
recomputing identical sequents.
"""

from __future__ import annotations

import itertools

from gcq.linlog import Formula, Lolli, Own, Plus, Tensor, TrueF


def _key(ctx, goal):
    return (tuple(sorted(map(str, ctx))), str(goal))


def brute_provable(ctx, goal, _memo=None) -> bool:
    ctx = tuple(ctx)
    if _memo is None:
        _memo = {}
    k = _key(ctx, goal)
    if k in _memo:
        return _memo[k]
    _memo[k] = False
    result = _try_everything(ctx, goal, _memo)
    _memo[k] = result
    return result


def _try_everything(ctx, goal, memo) -> bool:
    n = len(ctx)
    # axioms
    if isinstance(goal, Own) and ctx == (goal,):
        return True
    if isinstance(goal, TrueF) and n == 0:
        return True
    # right rules
    if isinstance(goal, Tensor):
        for split in _subsets(n):
            left = tuple(ctx[i] for i in split)
            right = tuple(ctx[i] for i in range(n) if i not in split)
            if brute_provable(left, goal.left, memo) and brute_provable(right, goal.right, memo):
                return True
    if isinstance(goal, Plus):
        if brute_provable(ctx, goal.left, memo) or brute_provable(ctx, goal.right, memo):
            return True
    if isinstance(goal, Lolli):
        if brute_provable(ctx + (goal.left,), goal.right, memo):
            return True
    # left rules, at every position
    for i in range(n):
        f = ctx[i]
        rest = ctx[:i] + ctx[i + 1:]
        if isinstance(f, TrueF) and brute_provable(rest, goal, memo):
            return True
        if isinstance(f, Tensor) and brute_provable(rest + (f.left, f.right), goal, memo):
            return True
        if isinstance(f, Plus):
            if (brute_provable(rest + (f.left,), goal, memo)
                    and brute_provable(rest + (f.right,), goal, memo)):
                return True
        if isinstance(f, Lolli):
            m = len(rest)
            for split in _subsets(m):
                left = tuple(rest[j] for j in split)
                right = tuple(rest[j] for j in range(m) if j not in split)
                if (brute_provable(left, f.left, memo)
                        and brute_provable(right + (f.right,), goal, memo)):
                    return True
    return False


def _subsets(n):
    for r in range(n + 1):
        yield from (frozenset(c) for c in itertools.combinations(range(n), r))
