"""Command-line front end: ``diploma <command> ...``.

Exit codes (stable; see README):

  0  valid, status Active (or: command succeeded)
  1  unexpected internal error
  2  usage, configuration or scenario script error
  3  input file not found
  4  malformed file or message (decode error)
  5  transport failure reaching a node
  6  protocol rejection (bad key, bad signature, corrupt batch, ...)
  7  validation failed (some criterion did not pass) / scenario assertion failed
  8  valid, but the diploma is Revoked or Expired
  9  no proof of provenance obtainable (unknown key, missing metadata, stale ledger)
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import crypto
from .crypto import KeyPair, keygen
from .encoding import canonical_decode, canonical_encode
from .errors import DiplomaError, EncodingError, MissingField, NotAuthorizedKey
from .ledger import LedgerSnapshot, LedgerView
from .model import (
    OPTIONAL_FIELDS,
    Action,
    DiplomaBundle,
    DiplomaStatus,
    append_update,
    issue_certificate,
    submission_for,
)
from .node import NodeClient, NodeConfig, serve
from .provenance import ProofOfProvenance, ProvenanceRequest
from .scenario import run_scenario
from .validation import NoticeBoard, NoticeSubject, TrustStore, make_notice, validate

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_NO_FILE = 3
EXIT_DECODE = 4
EXIT_TRANSPORT = 5
EXIT_REJECTED = 6
EXIT_INVALID = 7
EXIT_INACTIVE = 8
EXIT_NO_PROOF = 9

ENV_KEYSTORE = "DIPLOMA_KEYSTORE"
ENV_NODE = "DIPLOMA_NODE"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


@dataclass
class Keystore:
    """Secret keys by KeyRef, kept in a file separate from every bundle."""

    path: Path
    entries: dict[bytes, bytes] = field(default_factory=dict)

    @classmethod
    def open(cls, path: str | Path) -> Keystore:
        p = Path(path)
        if not p.exists():
            return cls(p)
        try:
            raw = json.loads(p.read_text())
            entries = {bytes.fromhex(k): bytes.fromhex(v) for k, v in raw["keys"].items()}
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise EncodingError(f"keystore {p} is malformed: {exc}") from None
        return cls(p, entries)

    def add(self, kp: KeyPair) -> bytes:
        self.entries[kp.ref] = kp.secret
        return kp.ref

    def get(self, ref: bytes) -> KeyPair:
        try:
            return keygen(self.entries[ref])
        except KeyError:
            raise NotAuthorizedKey(f"keystore has no key {ref.hex()}") from None

    def fresh(self) -> KeyPair:
        kp = keygen(os.urandom(crypto.SEED_SIZE))
        self.add(kp)
        return kp

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        text = json.dumps({"keys": {k.hex(): v.hex() for k, v in sorted(self.entries.items())}},
                          sort_keys=True, indent=1)
        fd = os.open(self.path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.chmod(self.path, 0o600)


# -- file helpers -----------------------------------------------------------

def _read(path: str) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(path)
    return p.read_bytes()


def _load(path: str, tp):
    return canonical_decode(_read(path), tp)


def _write(path: str, value) -> None:
    Path(path).write_bytes(canonical_encode(value))


def _hex(text: str, what: str) -> bytes:
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise _UsageError(f"{what} must be hex") from None


def _keystore(args) -> Keystore:
    path = args.keystore or os.environ.get(ENV_KEYSTORE)
    if not path:
        raise _UsageError(f"--keystore or ${ENV_KEYSTORE} is required")
    return Keystore.open(path)


def _node(address: str | None) -> NodeClient:
    address = address or os.environ.get(ENV_NODE)
    if not address:
        raise _UsageError(f"--node/--provider or ${ENV_NODE} is required")
    return NodeClient(address)


def _fields(path: str) -> dict:
    try:
        raw = json.loads(_read(path))
    except ValueError as exc:
        raise EncodingError(f"fields file is not JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise EncodingError("fields file must hold an object")
    out = {}
    for k, v in raw.items():
        if k not in OPTIONAL_FIELDS:
            raise MissingField(f"unknown datagram field {k!r}")
        out[k] = bytes.fromhex(v) if k.endswith("_cert_chain") else v
    return out


# -- commands ---------------------------------------------------------------

def cmd_keygen(args) -> int:
    ks = _keystore(args)
    kp = keygen(_hex(args.seed, "--seed"))
    ks.add(kp)
    ks.save()
    print(f"ref     {kp.ref.hex()}")
    print(f"public  {kp.public.hex()}")
    return EXIT_OK


def _issue(fields: dict, issuer: KeyPair, ks: Keystore, client: NodeClient) -> DiplomaBundle:
    creation, first_update = ks.fresh(), ks.fresh()
    fields.setdefault("issued_at", int(time.time()))
    cert = issue_certificate(fields, creation.ref, first_update.ref, client.tethering_point(), issuer)
    client.register(submission_for(cert, creation))
    ks.save()
    return DiplomaBundle(cert)


def cmd_issue(args) -> int:
    ks = _keystore(args)
    issuer = ks.get(_hex(args.issuer_key, "--issuer-key"))
    bundle = _issue(_fields(args.fields), issuer, ks, _node(args.provider))
    _write(args.out, bundle)
    print(f"issued {args.out} at {bundle.certificate.datagram.tethering_point.provider_id}")
    return EXIT_OK


def cmd_reissue(args) -> int:
    ks = _keystore(args)
    issuer = ks.get(_hex(args.issuer_key, "--issuer-key"))
    old = _load(args.bundle, DiplomaBundle).certificate.datagram
    keep = ("holder_id", "issuer_id", "issuer_cert_chain", "awarder_id", "awarder_cert_chain",
            "qualification", "controller_id", "expires_at")
    fields = {k: getattr(old, k) for k in keep if getattr(old, k) is not None}
    bundle = _issue(fields, issuer, ks, _node(args.provider))
    _write(args.out, bundle)
    print(f"reissued {args.out} at {bundle.certificate.datagram.tethering_point.provider_id}")
    return EXIT_OK


def _update(args, action: Action) -> int:
    ks = _keystore(args)
    bundle = _load(args.bundle, DiplomaBundle)
    signer = ks.get(bundle.watch_key)
    client = _node(args.provider)
    new_tether = _node(args.new_provider).tethering_point() if args.new_provider else None
    nxt = ks.fresh()
    rec = append_update(bundle, action, args.note, nxt.ref, new_tether, signer)
    client.register(submission_for(rec, signer))
    ks.save()
    _write(args.out, bundle.with_update(rec))
    print(f"{action.value} update {len(bundle.updates)} registered")
    return EXIT_OK


def cmd_update(args) -> int:
    return _update(args, Action(args.action))


def cmd_prove(args) -> int:
    bundle = _load(args.bundle, DiplomaBundle)
    proof = _node(args.node).prove(ProvenanceRequest.from_bundle(bundle, args.freshness))
    _write(args.out, proof)
    cp = proof.checkpoint
    print(f"proof written to {args.out}: checkpoint epoch {cp.epoch_index} in block {cp.block_height}")
    return EXIT_OK


def verdict_exit_code(report) -> int:
    if not report.valid:
        return EXIT_INVALID
    return EXIT_OK if report.status is DiplomaStatus.ACTIVE else EXIT_INACTIVE


def cmd_verify(args) -> int:
    bundle = _load(args.bundle, DiplomaBundle)
    proof = _load(args.pop, ProofOfProvenance)
    trust = _load(args.trust, TrustStore)
    notices = NoticeBoard.load(args.notices).list_notices() if args.notices else []
    snap = _load(args.ledger, LedgerSnapshot)
    view = LedgerView(snap.blocks, snap.validator_set)
    now = args.now if args.now is not None else int(time.time())
    report = validate(bundle, proof, trust, notices, snap.validator_set, snap.blocks, now,
                      args.freshness, view=view)
    if args.format == "canonical":
        sys.stdout.buffer.write(canonical_encode(report) + b"\n")
    else:
        print(report.summary())
    return verdict_exit_code(report)


def cmd_node_run(args) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    serve(NodeConfig.load(args.config))
    return EXIT_OK


def cmd_node_tick(args) -> int:
    b = _node(args.node).tick()
    print(f"sealed, committed and produced block {b.height}")
    return EXIT_OK


def cmd_node_sync(args) -> int:
    for r in _node(args.node).sync():
        print(f"imported {r.imported} epochs of {r.provider_id} ({r.already_held} already held)")
    return EXIT_OK


def _block_line(b) -> str:
    return (f"block {b.height} {b.block_hash().hex()[:16]} commitments={len(b.commitments)} "
            f"provider_keys={len(b.provider_keys)} signers={len(b.quorum_signatures)}")


def cmd_ledger(args) -> int:
    if args.action == "fetch":
        _write(args.out, _node(args.node).ledger_snapshot())
        print(f"ledger written to {args.out}")
        return EXIT_OK
    if not args.ledger:
        raise _UsageError("--ledger is required")
    snap = _load(args.ledger, LedgerSnapshot)
    view = LedgerView(snap.blocks, snap.validator_set)
    if args.action == "head":
        if not view.valid_length:
            print("no valid blocks")
            return EXIT_INVALID
        print(_block_line(view.blocks[view.head_height]))
    else:
        for b in snap.blocks:
            print(_block_line(b))
            for c in b.commitments:
                print(f"  commit {c.provider_id} epoch {c.epoch_index} {c.chain_hash.hex()[:16]}")
    if not view.all_valid:
        print(f"invalid from block {view.valid_length}")
        return EXIT_INVALID
    return EXIT_OK


def cmd_sim_run(args) -> int:
    report = run_scenario(_read(args.script).decode("utf-8"), args.seed, concurrent=args.concurrent)
    if args.out:
        _write(args.out, report)
    if args.format == "canonical":
        sys.stdout.buffer.write(report.to_bytes() + b"\n")
    else:
        print(report.summary())
    return EXIT_OK if report.passed else EXIT_INVALID


def cmd_trust_add(args) -> int:
    p = Path(args.trust)
    store = _load(args.trust, TrustStore) if p.exists() else TrustStore()
    if args.public:
        pk = _hex(args.public, "--public")
    else:
        pk = _keystore(args).get(_hex(args.key, "--key")).public
    store.with_issuer(args.issuer, pk).save(p)
    print(f"trusted {args.issuer} key {crypto.key_ref(pk).hex()[:16]}")
    return EXIT_OK


def cmd_notice_publish(args) -> int:
    announcer = _keystore(args).get(_hex(args.key, "--key"))
    key_ref = _hex(args.key_ref, "--key-ref") if args.key_ref else None
    effective = args.effective_from if args.effective_from is not None else int(time.time())
    n = make_notice(NoticeSubject(args.subject), args.subject_id, effective, args.note, announcer, key_ref)
    board = NoticeBoard.load(args.notices)
    added = board.publish(n)
    board.save(args.notices)
    print(("published" if added else "already published") + f" notice {n.digest().hex()[:16]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="diploma", description="Issue, update, prove and verify digital diplomas.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def keystore_opt(sp):
        sp.add_argument("--keystore", help=f"keystore file (default ${ENV_KEYSTORE})")

    sp = sub.add_parser("keygen", help="derive a key from a 32-byte seed into a keystore")
    sp.add_argument("--seed", required=True)
    sp.add_argument("--out", dest="keystore")
    sp.set_defaults(func=cmd_keygen)

    sp = sub.add_parser("issue", help="issue and register a new certificate")
    sp.add_argument("--issuer-key", required=True)
    sp.add_argument("--fields", required=True)
    sp.add_argument("--provider")
    sp.add_argument("--out", required=True)
    keystore_opt(sp)
    sp.set_defaults(func=cmd_issue)

    sp = sub.add_parser("reissue", help="mint a fresh certificate with the same content")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--issuer-key", required=True)
    sp.add_argument("--provider")
    sp.add_argument("--out", required=True)
    keystore_opt(sp)
    sp.set_defaults(func=cmd_reissue)

    for name, action in (("update", None), ("rotate", Action.ROUTINE),
                         ("revoke", Action.REVOKE), ("reinstate", Action.REINSTATE)):
        sp = sub.add_parser(name, help=f"append and register a{'n' if name[0] in 'aeiou' else ''} {name}")
        sp.add_argument("--bundle", required=True)
        sp.add_argument("--provider")
        sp.add_argument("--new-provider")
        sp.add_argument("--note", default="")
        sp.add_argument("--out", required=True)
        keystore_opt(sp)
        if action is None:
            sp.add_argument("--action", choices=[a.value for a in Action], default=Action.ROUTINE.value)
        else:
            sp.set_defaults(action=action.value)
        sp.set_defaults(func=cmd_update)

    sp = sub.add_parser("prove", help="request a proof of provenance from a node")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--node")
    sp.add_argument("--freshness", type=int, default=4)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_prove)

    sp = sub.add_parser("verify", help="validate a bundle and proof offline")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--pop", required=True)
    sp.add_argument("--trust", required=True)
    sp.add_argument("--notices")
    sp.add_argument("--ledger", required=True)
    sp.add_argument("--freshness", type=int, default=4)
    sp.add_argument("--now", type=int, help="validation time, seconds since the epoch")
    sp.add_argument("--format", choices=["text", "canonical"], default="text")
    sp.set_defaults(func=cmd_verify)

    node = sub.add_parser("node", help="run or drive a validator node")
    nsub = node.add_subparsers(dest="node_command", required=True, parser_class=_Parser)
    sp = nsub.add_parser("run")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_node_run)
    sp = nsub.add_parser("tick", help="seal an epoch, commit it and produce a block")
    sp.add_argument("--node")
    sp.set_defaults(func=cmd_node_tick)
    sp = nsub.add_parser("sync", help="pull new epochs from the node's peers")
    sp.add_argument("--node")
    sp.set_defaults(func=cmd_node_sync)

    sp = sub.add_parser("ledger", help="inspect or fetch a ledger snapshot")
    sp.add_argument("action", choices=["blocks", "head", "fetch"])
    sp.add_argument("--ledger")
    sp.add_argument("--node")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_ledger)

    sim = sub.add_parser("sim", help="run simulator scenarios")
    ssub = sim.add_subparsers(dest="sim_command", required=True, parser_class=_Parser)
    sp = ssub.add_parser("run")
    sp.add_argument("--script", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--concurrent", action="store_true")
    sp.add_argument("--format", choices=["text", "canonical"], default="text")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sim_run)

    trust = sub.add_parser("trust", help="maintain a trust store")
    tsub = trust.add_subparsers(dest="trust_command", required=True, parser_class=_Parser)
    sp = tsub.add_parser("add")
    sp.add_argument("--trust", required=True)
    sp.add_argument("--issuer", required=True)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--public")
    g.add_argument("--key")
    keystore_opt(sp)
    sp.set_defaults(func=cmd_trust_add)

    notice = sub.add_parser("notice", help="publish compromise notices")
    nosub = notice.add_subparsers(dest="notice_command", required=True, parser_class=_Parser)
    sp = nosub.add_parser("publish")
    sp.add_argument("--notices", required=True)
    sp.add_argument("--subject", choices=[s.value for s in NoticeSubject], required=True)
    sp.add_argument("--subject-id", required=True)
    sp.add_argument("--effective-from", type=int)
    sp.add_argument("--note", default="")
    sp.add_argument("--key", required=True, help="announcer key ref in the keystore")
    sp.add_argument("--key-ref", help="narrow the notice to one key")
    keystore_opt(sp)
    sp.set_defaults(func=cmd_notice_publish)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"diploma: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"diploma: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_NO_FILE
    except DiplomaError as exc:
        print(f"diploma: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"diploma: malformed input: {exc}", file=sys.stderr)
        return EXIT_DECODE


if __name__ == "__main__":
    sys.exit(main())
