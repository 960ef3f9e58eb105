"""Abstract syntax for MAGpi protocol networks and types.

Processes, networks, session types and the reliability relation, plus
canonical (congruence-normal) forms and well-formedness checking.  All
nodes are immutable; collections that are semantically multisets are
stored as tuples sorted by a stable structural key so that equal
configurations compare (and hash) equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

BASE_TYPES = ("Int", "Real", "String", "Bool")

# Declared total builtins usable in send payloads: name -> (param types,
# result type, evaluator).  Payloads must stay closed and typeable, so
# builtins are the only function-like expression allowed.
BUILTINS = {
    "f": (("Int",), "Real", lambda n: float(n)),
}


# ---------------------------------------------------------------------------
# Payload expressions


@dataclass(frozen=True)
class Lit:
    value: object

    def base_type(self) -> str:
        v = self.value
        if isinstance(v, bool):
            return "Bool"
        if isinstance(v, int):
            return "Int"
        if isinstance(v, float):
            return "Real"
        if isinstance(v, str):
            return "String"
        raise ValueError(f"unsupported literal {v!r}")


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


# ---------------------------------------------------------------------------
# Processes


@dataclass(frozen=True)
class Inact:
    pass


@dataclass(frozen=True)
class Arm:
    """One receive alternative: from `peer`, labelled `label`, binding
    `binders` in `cont`."""

    peer: str
    label: str
    binders: tuple
    cont: object


@dataclass(frozen=True)
class Send:
    peer: str
    label: str
    payload: tuple
    cont: object


@dataclass(frozen=True)
class Branch:
    arms: tuple
    timeout: object = None


@dataclass(frozen=True)
class Choice:
    """Internal choice between linear continuations.  Stand-in for the
    conditional constructs assumed (but not given) by the grammar; every
    arm must follow the same session type."""

    arms: tuple


@dataclass(frozen=True)
class Server:
    """Replicated receive: consuming a matching message spawns a fresh
    linear copy of the arm's continuation."""

    arms: tuple


@dataclass(frozen=True)
class Par:
    """Runtime-only parallel composition of a role's process terms,
    kept flattened and sorted."""

    parts: tuple


# ---------------------------------------------------------------------------
# Messages, buffers, networks


@dataclass(frozen=True)
class Message:
    src: str
    dst: str
    label: str
    payload: tuple  # closed Lit values


@dataclass(frozen=True)
class Network:
    """Role map plus bag buffer.  `procs` is sorted by role name and the
    buffer is a multiset stored as a sorted tuple."""

    procs: tuple  # tuple of (role, term)
    buffer: tuple  # tuple of Message

    @property
    def proc_map(self):
        return dict(self.procs)

    @property
    def roles(self):
        return tuple(r for r, _ in self.procs)


@dataclass(frozen=True)
class Reliability:
    pairs: frozenset  # frozenset of 2-element frozensets

    @staticmethod
    def of(*pairs) -> "Reliability":
        out = set()
        for p, q in pairs:
            if p == q:
                raise ValueError(f"reliability pair {{{p},{p}}} is reflexive")
            out.add(frozenset((p, q)))
        return Reliability(frozenset(out))

    @staticmethod
    def none() -> "Reliability":
        return Reliability(frozenset())

    @staticmethod
    def all_of(roles) -> "Reliability":
        roles = list(roles)
        return Reliability.of(
            *[(p, q) for i, p in enumerate(roles) for q in roles[i + 1 :]]
        )

    def reliable(self, p: str, q: str) -> bool:
        return frozenset((p, q)) in self.pairs


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class End:
    pass


@dataclass(frozen=True)
class TArm:
    peer: str
    label: str
    payloads: tuple  # base type names
    cont: object


@dataclass(frozen=True)
class Select:
    arms: tuple


@dataclass(frozen=True)
class BranchT:
    arms: tuple
    timeout: object = None


@dataclass(frozen=True)
class ParT:
    """Runtime-only parallel composition of session types, flattened."""

    parts: tuple


@dataclass(frozen=True)
class Bang:
    """Replicated (server) type; lives in the unrestricted context."""

    arms: tuple


@dataclass(frozen=True)
class MsgT:
    src: str
    dst: str
    label: str
    payloads: tuple


END = End()
INACT = Inact()


# ---------------------------------------------------------------------------
# Canonical serialization

def canon(node) -> str:
    """Stable structural key; total order for all multiset sorting."""
    match node:
        case Inact():
            return "0"
        case Lit(v):
            return f"lit:{type(v).__name__}:{v!r}"
        case Var(x):
            return f"var:{x}"
        case Call(f, args):
            return f"call:{f}({','.join(canon(a) for a in args)})"
        case Send(q, m, pay, cont):
            return f"snd:{q}:{m}<{','.join(canon(c) for c in pay)}>.{canon(cont)}"
        case Arm(q, m, ys, cont):
            return f"{q}:{m}({','.join(ys)}).{canon(cont)}"
        case Branch(arms, to):
            body = ",".join(canon(a) for a in arms)
            tail = f",t.{canon(to)}" if to is not None else ""
            return f"rcv{{{body}{tail}}}"
        case Choice(arms):
            return f"ch{{{ '|'.join(canon(a) for a in arms) }}}"
        case Server(arms):
            return f"srv{{{','.join(canon(a) for a in arms)}}}"
        case Par(parts):
            return f"par({'|'.join(canon(p) for p in parts)})"
        case Message(s, d, m, pay):
            return f"msg:{s}>{d}:{m}<{','.join(canon(v) for v in pay)}>"
        case Network(procs, buf):
            ps = ",".join(f"{r}<|{canon(t)}" for r, t in procs)
            bs = ",".join(canon(m) for m in buf)
            return f"net[{ps}][{bs}]"
        case End():
            return "end"
        case TArm(q, m, bs, cont):
            return f"{q}:{m}({','.join(bs)}).{canon(cont)}"
        case Select(arms):
            return f"+{{{','.join(canon(a) for a in arms)}}}"
        case BranchT(arms, to):
            tail = f",t.{canon(to)}" if to is not None else ""
            return f"&{{{','.join(canon(a) for a in arms)}{tail}}}"
        case ParT(parts):
            return f"tpar({'|'.join(canon(p) for p in parts)})"
        case Bang(arms):
            return f"!{{{','.join(canon(a) for a in arms)}}}"
        case MsgT(s, d, m, bs):
            return f"mty:{s}>{d}:{m}({','.join(bs)})"
    raise TypeError(f"not a syntax node: {node!r}")


# ---------------------------------------------------------------------------
# Normalization (congruence-normal forms)

def normalize_term(term):
    """Flatten process-level parallel, drop inactive operands, sort."""
    match term:
        case Par(parts):
            flat = []
            for p in parts:
                p = normalize_term(p)
                if isinstance(p, Par):
                    flat.extend(p.parts)
                elif not isinstance(p, Inact):
                    flat.append(p)
            flat.sort(key=canon)
            if not flat:
                return INACT
            if len(flat) == 1:
                return flat[0]
            return Par(tuple(flat))
        case _:
            return term


def normalize_network(net: Network) -> Network:
    """Unique canonical form; idempotent.  Roles whose whole term is
    inactive stay in the role map (removing them is a network-level rule
    applied only by the explorer's stuck-state classifier)."""
    procs = tuple(sorted(((r, normalize_term(t)) for r, t in net.procs)))
    buffer = tuple(sorted(net.buffer, key=canon))
    return Network(procs, buffer)


def normalize_type(t):
    """Flatten type-level parallel into a sorted multiset (components are
    never themselves parallel)."""
    match t:
        case ParT(parts):
            flat = []
            for p in parts:
                p = normalize_type(p)
                if isinstance(p, ParT):
                    flat.extend(p.parts)
                else:
                    flat.append(p)
            flat.sort(key=canon)
            if len(flat) == 1:
                return flat[0]
            return ParT(tuple(flat))
        case _:
            return t


def type_components(t) -> tuple:
    t = normalize_type(t)
    if isinstance(t, ParT):
        return t.parts
    return (t,)


def from_components(comps) -> object:
    comps = tuple(sorted(comps, key=canon))
    if not comps:
        raise ValueError("empty component multiset")
    if len(comps) == 1:
        return comps[0]
    return ParT(comps)


# ---------------------------------------------------------------------------
# Well-formedness


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    location: tuple  # (line, column)
    message: str
    rule: str

    def __str__(self):
        line, col = self.location
        return f"{line}:{col}: {self.severity}: {self.message} [{self.rule}]"


def _couples(arms):
    return [(a.peer, a.label) for a in arms]


def _iter_linear(p, out):
    """Collect linear subterms of a process, top-down."""
    out.append(p)
    match p:
        case Send(_, _, _, cont):
            _iter_linear(cont, out)
        case Branch(arms, to):
            for a in arms:
                _iter_linear(a.cont, out)
            if to is not None:
                _iter_linear(to, out)
        case Choice(arms):
            for a in arms:
                _iter_linear(a, out)
    return out


def _iter_types(t, out):
    out.append(t)
    match t:
        case Select(arms) | BranchT(arms, _):
            for a in arms:
                _iter_types(a.cont, out)
            if isinstance(t, BranchT) and t.timeout is not None:
                _iter_types(t.timeout, out)
        case ParT(parts):
            for p in parts:
                _iter_types(p, out)
    return out


def free_vars(p, bound=frozenset()):
    """Free payload variables of a linear process."""
    out = set()
    match p:
        case Send(_, _, payload, cont):
            for c in payload:
                out |= _expr_vars(c) - bound
            out |= free_vars(cont, bound)
        case Branch(arms, to):
            for a in arms:
                out |= free_vars(a.cont, bound | set(a.binders))
            if to is not None:
                out |= free_vars(to, bound)
        case Choice(arms):
            for a in arms:
                out |= free_vars(a, bound)
    return out


def _expr_vars(c):
    match c:
        case Var(x):
            return {x}
        case Call(_, args):
            out = set()
            for a in args:
                out |= _expr_vars(a)
            return out
        case _:
            return set()


def check_well_formed(net: Network, gamma_assign: dict, delta_assign: dict,
                      rel: Reliability, locs=None) -> list:
    """Aggregate side-condition checks over a parsed file.  Empty result
    means every invariant holds; each violation is a Diagnostic carrying
    the defining role's source location where one is known."""
    locs = locs or {}
    diags = []

    def err(role, message, rule):
        diags.append(Diagnostic("error", locs.get(role, (1, 1)), message, rule))

    seen = set()
    for role, _ in net.procs:
        if role in seen:
            err(role, f"role {role} defined more than once", "unique-roles")
        seen.add(role)

    for pair in rel.pairs:
        if len(pair) != 2:
            p = next(iter(pair))
            err(p, f"reliability pair {{{p},{p}}} is reflexive", "irreflexive-R")

    overlap = set(gamma_assign) & set(delta_assign)
    for role in sorted(overlap):
        err(role, f"role {role} assigned both replicated and linear types",
            "disjoint-contexts")

    for role, term in net.procs:
        linear_parts = []
        match term:
            case Par(_):
                err(role, f"role {role} uses runtime-only parallel composition",
                    "no-parse-time-par")
            case Server(arms):
                if not arms:
                    err(role, "empty replicated receive", "nonempty-branch")
                cs = _couples(arms)
                if len(set(cs)) != len(cs):
                    err(role, f"role {role}: duplicate (peer,label) couples "
                        "in replicated receive", "pairwise-distinct-couples")
                linear_parts = [a.cont for a in arms]
            case _:
                linear_parts = [term]
        for part in linear_parts:
            for sub in _iter_linear(part, []):
                match sub:
                    case Branch(arms, _):
                        if not arms:
                            err(role, "empty branch", "nonempty-branch")
                        cs = _couples(arms)
                        if len(set(cs)) != len(cs):
                            err(role, f"role {role}: duplicate (peer,label) "
                                "couples in branch", "pairwise-distinct-couples")
                    case Choice(arms):
                        if not arms:
                            err(role, "empty choice", "nonempty-branch")
        if not isinstance(term, Server):
            fv = free_vars(term) if not isinstance(term, (Par,)) else set()
            for x in sorted(fv):
                err(role, f"role {role}: free payload variable {x}", "closed-process")

    for role, rt in gamma_assign.items():
        if not isinstance(rt, Bang):
            err(role, f"role {role}: expected a replicated type", "context-class")
            continue
        cs = [(a.peer, a.label) for a in rt.arms]
        if len(set(cs)) != len(cs):
            err(role, f"role {role}: duplicate couples in replicated type",
                "pairwise-distinct-couples")
        # Label-pool freshness: a message aimed at this role must never be
        # ambiguous between the replicated receive and a linear branch
        # spawned from it, so no arm label may recur on a branch arm inside
        # the continuations.
        pool = {a.label for a in rt.arms}
        for arm in rt.arms:
            for sub in _iter_types(arm.cont, []):
                if isinstance(sub, BranchT):
                    for ta in sub.arms:
                        if ta.label in pool:
                            err(role, f"role {role}: replicated label "
                                f"{ta.label} reused by a branch in its "
                                "continuation", "label-pool-freshness")

    for role, st in delta_assign.items():
        for sub in _iter_types(st, []):
            match sub:
                case ParT(_):
                    err(role, f"role {role}: runtime-only parallel type in "
                        "declaration", "no-parse-time-par")
                case Select(arms) | BranchT(arms, _):
                    if not arms:
                        err(role, "empty branching type", "nonempty-branch")
                    cs = [(a.peer, a.label) for a in arms]
                    if len(set(cs)) != len(cs):
                        err(role, f"role {role}: duplicate couples in type",
                            "pairwise-distinct-couples")

    for msg in net.buffer:
        for v in msg.payload:
            if not isinstance(v, Lit):
                diags.append(Diagnostic("error", (1, 1),
                                        "buffer message payload must be a literal",
                                        "closed-message"))
    return diags


# ---------------------------------------------------------------------------
# Substitution and evaluation

def subst_expr(c, env: dict):
    match c:
        case Var(x):
            return env.get(x, c)
        case Call(f, args):
            return Call(f, tuple(subst_expr(a, env) for a in args))
        case _:
            return c


def subst(p, env: dict):
    """Capture-avoiding substitution of values for variables in a linear
    process; arm binders shadow."""
    if not env:
        return p
    match p:
        case Inact():
            return p
        case Send(q, m, payload, cont):
            return Send(q, m, tuple(subst_expr(c, env) for c in payload),
                        subst(cont, env))
        case Branch(arms, to):
            new_arms = tuple(
                Arm(a.peer, a.label, a.binders,
                    subst(a.cont, {k: v for k, v in env.items()
                                   if k not in a.binders}))
                for a in arms)
            return Branch(new_arms, subst(to, env) if to is not None else None)
        case Choice(arms):
            return Choice(tuple(subst(a, env) for a in arms))
    raise TypeError(f"cannot substitute in {p!r}")


def eval_payload(c) -> Lit:
    """Evaluate a closed payload expression to a literal."""
    match c:
        case Lit(_):
            return c
        case Call(f, args):
            if f not in BUILTINS:
                raise ValueError(f"unknown builtin {f}")
            params, _, impl = BUILTINS[f]
            vals = [eval_payload(a) for a in args]
            if len(vals) != len(params):
                raise ValueError(f"builtin {f} arity mismatch")
            return Lit(impl(*[v.value for v in vals]))
        case Var(x):
            raise ValueError(f"payload not closed: free variable {x}")
    raise TypeError(f"bad payload {c!r}")


def count_type_nodes(t) -> int:
    """Size of a type term; used to compare protocol formulations."""
    match t:
        case End():
            return 1
        case TArm(_, _, _, cont):
            return 1 + count_type_nodes(cont)
        case Select(arms) | Bang(arms):
            return 1 + sum(count_type_nodes(a) for a in arms)
        case BranchT(arms, to):
            n = 1 + sum(count_type_nodes(a) for a in arms)
            if to is not None:
                n += count_type_nodes(to)
            return n
        case ParT(parts):
            return 1 + sum(count_type_nodes(p) for p in parts)
    raise TypeError(f"not a type: {t!r}")
