"""Line-oriented scenario scripts for the simulator.

One step per line, ``#`` starts a comment, arguments are shell-style words
with optional ``key=value`` options. See ``docs/scenario-grammar.md``.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass
from typing import Callable

from . import crypto
from .encoding import canonical_encode
from .errors import DiplomaError, ScriptError
from .model import Action, DiplomaStatus
from .provenance import AssociationNotice
from .sim import FailureKind, NetworkSim, spawn


@dataclass(frozen=True)
class Step:
    line: int
    text: str
    command: str
    args: tuple[str, ...]
    options: dict[str, str]
    flags: frozenset[str]


@dataclass(frozen=True)
class StepResult:
    line: int
    text: str
    ok: bool
    is_assertion: bool
    detail: str = ""


@dataclass(frozen=True)
class NodeFees:
    node_id: str
    registrations: int
    proofs_served: int
    metadata_bytes_shared: int


@dataclass(frozen=True)
class ScenarioReport:
    seed: int
    steps: tuple[StepResult, ...]
    fees: tuple[NodeFees, ...]
    association_notices: tuple[AssociationNotice, ...]
    state_hash: bytes

    @property
    def assertions(self) -> list[StepResult]:
        return [s for s in self.steps if s.is_assertion]

    @property
    def passed(self) -> bool:
        return all(s.ok for s in self.assertions)

    def to_bytes(self) -> bytes:
        return canonical_encode(self)

    def summary(self) -> str:
        lines = [f"scenario seed={self.seed}"]
        for s in self.steps:
            if s.is_assertion or not s.ok:
                mark = "PASS" if s.ok else "FAIL"
                tail = f"  -- {s.detail}" if s.detail else ""
                lines.append(f"  [{mark}] line {s.line}: {s.text}{tail}")
        held = sum(s.ok for s in self.assertions)
        lines.append(f"assertions: {held}/{len(self.assertions)} passed")
        for f in self.fees:
            lines.append(
                f"remittance {f.node_id}: registrations={f.registrations} "
                f"proofs_served={f.proofs_served} metadata_bytes_shared={f.metadata_bytes_shared}"
            )
        for n in self.association_notices:
            lines.append(f"association notice: {n.reporter} cannot serve {n.provider_id} ({n.reason})")
        lines.append(f"state hash {self.state_hash.hex()}")
        return "\n".join(lines)


# command -> (min positional args, max positional args or None)
_ARITY = {
    "network": (0, 0),
    "issuer": (1, 1),
    "issue": (1, 1),
    "update": (1, 1),
    "rotate": (1, 1),
    "revoke": (1, 1),
    "reinstate": (1, 1),
    "reissue": (2, 2),
    "aggregate": (1, 1),
    "seal": (0, None),
    "commit": (0, None),
    "block": (0, 0),
    "cycle": (0, 0),
    "sync": (0, 0),
    "tick": (1, 1),
    "fail": (2, 2),
    "notice": (2, 2),
    "prove": (1, 1),
    "validate": (1, 1),
    "assert": (1, None),
}

_UPDATE_OPTIONS = frozenset({"note", "provider"})
_OPTIONS = {
    "network": frozenset({"nodes", "threshold", "freshness"}),
    "issue": frozenset({"issuer", "provider", "holder", "qualification", "awarder", "controller", "expires"}),
    "update": _UPDATE_OPTIONS | {"action"},
    "rotate": _UPDATE_OPTIONS,
    "revoke": _UPDATE_OPTIONS,
    "reinstate": _UPDATE_OPTIONS,
    "reissue": frozenset({"provider"}),
    "aggregate": frozenset({"count"}),
    "fail": frozenset({"at"}),
    "notice": frozenset({"effective"}),
    "prove": frozenset({"node", "freshness"}),
    "validate": frozenset({"freshness"}),
}
_FLAGS = {"update": {"hide"}, "rotate": {"hide"}, "revoke": {"hide"}, "reinstate": {"hide"}}


def parse_script(text: str) -> list[Step]:
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            words = shlex.split(line)
        except ValueError as exc:
            raise ScriptError(str(exc), lineno) from None
        cmd, rest = words[0], words[1:]
        if cmd not in _ARITY:
            raise ScriptError(f"unknown command {cmd!r}", lineno)
        args, opts, flags = [], {}, set()
        for w in rest:
            if "=" in w:
                k, v = w.split("=", 1)
                if cmd != "assert" and k not in _OPTIONS.get(cmd, ()):
                    raise ScriptError(f"{cmd} has no option {k!r}", lineno)
                opts[k] = v
            elif w in _FLAGS.get(cmd, ()):
                flags.add(w)
            else:
                args.append(w)
        lo, hi = _ARITY[cmd]
        if cmd != "assert" and (len(args) < lo or (hi is not None and len(args) > hi)):
            raise ScriptError(f"{cmd} takes {lo}..{hi if hi is not None else 'n'} arguments", lineno)
        if cmd == "network" and steps:
            raise ScriptError("network must be the first step", lineno)
        steps.append(Step(lineno, line, cmd, tuple(args), opts, frozenset(flags)))
    return steps


def _int(step: Step, key: str, default=None):
    if key not in step.options:
        return default
    try:
        return int(step.options[key])
    except ValueError:
        raise ScriptError(f"{key} must be an integer", step.line) from None


class _Runner:
    def __init__(self, sim: NetworkSim):
        self.sim = sim
        self.handlers: dict[str, Callable[[Step], str]] = {
            name[4:]: getattr(self, name) for name in dir(self) if name.startswith("cmd_")
        }

    def run(self, step: Step) -> str:
        return self.handlers[step.command](step) or ""

    def cmd_network(self, step):
        return ""

    def cmd_issuer(self, step):
        self.sim.add_issuer(step.args[0])

    def cmd_issue(self, step):
        fields = {}
        for opt, name in (("holder", "holder_id"), ("qualification", "qualification"),
                          ("awarder", "awarder_id"), ("controller", "controller_id")):
            if opt in step.options:
                fields[name] = step.options[opt]
        d = self.sim.issue(step.args[0], step.options["issuer"], step.options["provider"],
                           expires_in=_int(step, "expires"), **fields)
        return f"registered with {d.provider}"

    def _update(self, step, action):
        self.sim.update(step.args[0], action, step.options.get("note", ""),
                        provider=step.options.get("provider"), hide="hide" in step.flags)

    def cmd_update(self, step):
        self._update(step, Action(step.options.get("action", "Routine")))

    def cmd_rotate(self, step):
        self._update(step, Action.ROUTINE)

    def cmd_revoke(self, step):
        self._update(step, Action.REVOKE)

    def cmd_reinstate(self, step):
        self._update(step, Action.REINSTATE)

    def cmd_reissue(self, step):
        self.sim.reissue(step.args[0], step.args[1], step.options.get("provider"))

    def cmd_aggregate(self, step):
        self.sim.aggregate(step.args[0], _int(step, "count", 1))

    def cmd_seal(self, step):
        self.sim.seal(step.args or None)

    def cmd_commit(self, step):
        self.sim.commit(step.args or None)

    def cmd_block(self, step):
        return f"height {self.sim.block().height}"

    def cmd_cycle(self, step):
        self.sim.cycle()

    def cmd_sync(self, step):
        self.sim.sync()
        return f"round {self.sim.round}"

    def cmd_tick(self, step):
        self.sim.tick(int(step.args[0]))

    def cmd_fail(self, step):
        kinds = {"crash": FailureKind.CRASH, "withhold": FailureKind.WITHHOLD,
                 "equivocate": FailureKind.EQUIVOCATE}
        if step.args[0] not in kinds:
            raise ScriptError(f"unknown failure {step.args[0]!r}", step.line)
        self.sim.fail(kinds[step.args[0]], step.args[1], _int(step, "at"))

    def cmd_notice(self, step):
        kind, who = step.args
        eff = _int(step, "effective")
        if kind == "issuer":
            self.sim.notice_issuer(who, eff)
        elif kind == "provider":
            self.sim.notice_provider(who, eff)
        else:
            raise ScriptError(f"unknown notice subject {kind!r}", step.line)

    def cmd_prove(self, step):
        self.sim.prove(step.args[0], step.options["node"], _int(step, "freshness"))
        return f"checkpoint {self.sim.diplomas[step.args[0]].proof.checkpoint}"

    def cmd_validate(self, step):
        rep = self.sim.validate(step.args[0], _int(step, "freshness"))
        return "valid" if rep.valid else "invalid: " + ",".join(rep.failed_criteria)

    def check(self, step: Step) -> tuple[bool, str]:
        subject = step.args[0]
        if subject == "fees":
            node = self.sim.node(step.args[1])
            for key, want in step.options.items():
                got = getattr(node.fees, key)
                if got != int(want):
                    return False, f"{key}={got}"
            return True, ""
        if subject == "association":
            got = len(self.sim.association_log)
            want = _int(step, "count")
            return (got >= 1 if want is None else got == want), f"count={got}"
        d = self.sim.diplomas.get(subject)
        if d is None:
            raise ScriptError(f"unknown diploma {subject!r}", step.line)
        rep = d.report
        ok, parts = True, []
        for word in step.args[1:]:
            if word in ("valid", "invalid", "fresh", "stale", "compromised", "uncompromised"):
                if rep is None:
                    return False, f"no validation report ({d.proof_error or 'not validated'})"
                got = {"valid": rep.valid, "invalid": not rep.valid, "fresh": rep.fresh,
                       "stale": not rep.fresh, "compromised": rep.compromised,
                       "uncompromised": not rep.compromised}[word]
                ok &= got
                if not got:
                    parts.append(f"failed={rep.failed_criteria}")
            else:
                raise ScriptError(f"unknown assertion {word!r}", step.line)
        for key, want in step.options.items():
            if key == "error":
                got = d.proof_error or "none"
            elif key == "status":
                if rep is None:
                    return False, "no validation report"
                got = rep.status.value
                DiplomaStatus(want)
            elif key in ("authenticity", "integrity", "uniqueness"):
                if rep is None:
                    return False, "no validation report"
                got = "pass" if getattr(rep, key).passed else "fail"
            else:
                raise ScriptError(f"unknown assertion {key!r}", step.line)
            if got != want:
                ok = False
                parts.append(f"{key}={got}")
        return ok, "; ".join(parts)


def run_scenario(script: str, seed: int, concurrent: bool = False) -> ScenarioReport:
    """Parse and execute a script; step errors are reported, not raised."""
    steps = parse_script(script)
    nodes, threshold = 3, 2
    if steps and steps[0].command == "network":
        nodes = _int(steps[0], "nodes", nodes)
        threshold = _int(steps[0], "threshold", threshold)
    sim = spawn(nodes, threshold, seed, concurrent=concurrent)
    if steps and steps[0].command == "network":
        sim.freshness = _int(steps[0], "freshness", sim.freshness)
    runner = _Runner(sim)
    results = []
    for step in steps:
        if step.command == "assert":
            ok, detail = runner.check(step)
            results.append(StepResult(step.line, step.text, ok, True, detail))
            continue
        try:
            detail = runner.run(step)
            results.append(StepResult(step.line, step.text, True, False, detail))
        except KeyError as exc:
            raise ScriptError(f"missing option or unknown name {exc}", step.line) from None
        except DiplomaError as exc:
            if isinstance(exc, ScriptError):
                raise
            results.append(StepResult(step.line, step.text, False, False, f"{type(exc).__name__}: {exc}"))
    fees = tuple(
        NodeFees(n.node_id, n.fees.registrations, n.fees.proofs_served, n.fees.metadata_bytes_shared)
        for n in sorted(sim.nodes.values(), key=lambda n: n.node_id)
    )
    return ScenarioReport(seed, tuple(results), fees, tuple(sim.association_log),
                          crypto.hash(sim.state_bytes()))
