"""A live validator node over HTTP, and the client the CLI uses to reach it.

Every request and response body is canonical encoding. Errors come back as
``{"error": <class name>, "message": ...}`` with a 4xx/5xx status and are
re-raised client-side as the matching ``DiplomaError`` subclass.

A node either hosts the ledger (its config lists the validator seeds) or
points at a node that does (``ledger_node``).
"""

from __future__ import annotations

import json
import logging
import threading
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable, Optional

from . import errors
from .crypto import keygen
from .encoding import canonical_decode, canonical_encode
from .epochs import EpochHeader, TetheringPoint
from .errors import ConfigError, DiplomaError, TransportError
from .ledger import (
    Commitment,
    Ledger,
    LedgerBlock,
    LedgerSnapshot,
    LedgerView,
    ProviderKeyRecord,
    ValidatorMember,
    ValidatorSet,
)
from .model import TransactionSubmission
from .provenance import ProofOfProvenance, ProvenanceRequest, build_proof
from .provider import ImportReport, IntegrityProvider, MetadataBatch, RegistrationReceipt

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValidatorSeed:
    validator_id: str
    seed: bytes


@dataclass(frozen=True)
class NodeConfig:
    node_id: str
    listen: str
    data_dir: str
    provider_seed: bytes
    validators: tuple[ValidatorSeed, ...] = ()
    threshold: int = 1
    ledger_node: Optional[str] = None
    peers: tuple[str, ...] = ()

    def __post_init__(self):
        if bool(self.validators) == bool(self.ledger_node):
            raise ConfigError("a node needs either validators (to host the ledger) or ledger_node")
        split_address(self.listen)

    @classmethod
    def load(cls, path: str | Path) -> NodeConfig:
        # config files are written by hand, so key order and whitespace are free
        return canonical_decode(Path(path).read_bytes(), cls, strict=False)


@dataclass(frozen=True)
class KeyAnswer:
    public_key: Optional[bytes] = None


def split_address(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ConfigError(f"node address must be host:port, got {addr!r}")
    return host, int(port)


class NodeClient:
    """Blocking client for one node address."""

    def __init__(self, address: str, timeout: float = 10.0):
        split_address(address)
        self.address = address
        self.timeout = timeout

    def _call(self, method: str, path: str, body: Any = None, query: dict | None = None) -> bytes:
        url = f"http://{self.address}{path}"
        if query:
            url += "?" + urllib.parse.urlencode(query)
        data = canonical_encode(body) if body is not None else None
        req = urllib.request.Request(url, data=data, method=method)
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            raise _remote_error(exc.read()) from None
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(f"cannot reach {self.address}: {exc}") from None

    def get(self, path: str, tp, **query):
        return canonical_decode(self._call("GET", path, query=query or None), tp)

    def post(self, path: str, body, tp):
        return canonical_decode(self._call("POST", path, body if body is not None else {}), tp)

    def tethering_point(self) -> TetheringPoint:
        return self.get("/tether", TetheringPoint)

    def register(self, sub: TransactionSubmission) -> RegistrationReceipt:
        return self.post("/register", sub, RegistrationReceipt)

    def prove(self, req: ProvenanceRequest) -> ProofOfProvenance:
        return self.post("/prove", req, ProofOfProvenance)

    def export_metadata(self, start: int = 0) -> MetadataBatch:
        return self.get("/export", MetadataBatch, start=start)

    def import_metadata(self, batch: MetadataBatch) -> ImportReport:
        return self.post("/import", batch, ImportReport)

    def seal(self) -> EpochHeader:
        return self.post("/seal", None, EpochHeader)

    def commit(self) -> bool:
        return self.post("/commit", None, bool)

    def block(self) -> LedgerBlock:
        return self.post("/block", None, LedgerBlock)

    def tick(self) -> LedgerBlock:
        return self.post("/tick", None, LedgerBlock)

    def sync(self) -> list[ImportReport]:
        return self.post("/sync", None, list[ImportReport])

    def ledger_snapshot(self) -> LedgerSnapshot:
        return self.get("/ledger", LedgerSnapshot)

    def ledger_head(self) -> LedgerBlock:
        return self.get("/ledger/head", LedgerBlock)

    def ledger_blocks(self, start: int = 0, stop: int | None = None) -> list[LedgerBlock]:
        q = {"start": start} if stop is None else {"start": start, "stop": stop}
        return self.get("/ledger/blocks", list[LedgerBlock], **q)

    def submit_commitment(self, c: Commitment) -> bool:
        return self.post("/ledger/submit", c, bool)

    def announce_provider_key(self, rec: ProviderKeyRecord) -> bool:
        return self.post("/ledger/announce", rec, bool)

    def provider_key(self, provider_id: str, epoch_index: int) -> bytes | None:
        ans = self.get("/ledger/key", KeyAnswer, provider=provider_id, epoch=epoch_index)
        return ans.public_key


def _remote_error(payload: bytes) -> DiplomaError:
    try:
        obj = json.loads(payload)
        name, message = obj["error"], obj["message"]
    except (ValueError, KeyError, TypeError):
        return TransportError("malformed error response")
    cls = getattr(errors, name, None)
    if not (isinstance(cls, type) and issubclass(cls, DiplomaError)):
        cls = errors.Rejected
    try:
        return cls(message)
    except TypeError:
        return errors.Rejected(message)


class RemoteLedger:
    """The ledger operations a non-hosting node needs, forwarded to the host."""

    def __init__(self, client: NodeClient):
        self.client = client

    def view(self) -> LedgerView:
        snap = self.client.ledger_snapshot()
        return LedgerView(snap.blocks, snap.validator_set)

    def provider_key(self, provider_id: str, epoch_index: int) -> bytes | None:
        return self.client.provider_key(provider_id, epoch_index)

    def submit_commitment(self, c: Commitment) -> bool:
        return self.client.submit_commitment(c)

    def announce_provider_key(self, rec: ProviderKeyRecord) -> bool:
        return self.client.announce_provider_key(rec)


class NodeService:
    """Provider, optional ledger host, and on-disk persistence for one node."""

    def __init__(self, config: NodeConfig):
        self.config = config
        self.data = Path(config.data_dir)
        self.data.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self.validator_keys = [keygen(v.seed) for v in config.validators]
        if config.validators:
            ledger_file = self.data / "chain.ledger"
            if ledger_file.exists():
                self.ledger = Ledger.load(ledger_file)
            else:
                vs = ValidatorSet(
                    tuple(ValidatorMember(v.validator_id, k.public)
                          for v, k in zip(config.validators, self.validator_keys)),
                    config.threshold,
                )
                self.ledger = Ledger(vs)
        else:
            self.ledger = RemoteLedger(NodeClient(config.ledger_node))
        kp = keygen(config.provider_seed)
        pdir = self.data / "provider"
        if (pdir / "epochs.log").exists():
            self.provider = IntegrityProvider.load(pdir, config.node_id, kp, self.ledger.provider_key)
        else:
            self.provider = IntegrityProvider(config.node_id, kp, self.ledger.provider_key)
            self.ledger.announce_provider_key(self.provider.key_history[0])
            self.commit()
            if self.hosts_ledger:
                self.block()
        self.persist()

    @property
    def hosts_ledger(self) -> bool:
        return isinstance(self.ledger, Ledger)

    def persist(self) -> None:
        with self._lock:
            self.provider.save(self.data / "provider")
            if self.hosts_ledger:
                self.ledger.save(self.data / "chain.ledger")

    def view(self) -> LedgerView:
        return self.ledger.view()

    def commit(self) -> bool:
        """Commit the latest sealed epoch unless the ledger already has it."""
        with self._lock:
            tp = self.provider.tethering_point()
            if any(c.chain_hash == tp.chain_hash for _, c in self.view().lookup(tp.provider_id, tp.epoch_index)):
                return False
            return self.ledger.submit_commitment(self.provider.commitment(tp.epoch_index))

    def block(self) -> LedgerBlock:
        """Produce a block here, or ask the ledger host to produce one."""
        if not self.hosts_ledger:
            return NodeClient(self.config.ledger_node).block()
        return self.ledger.produce_block(self.validator_keys)

    def sync(self) -> list[ImportReport]:
        out = []
        for peer in self.config.peers:
            client = NodeClient(peer)
            try:
                pid = client.tethering_point().provider_id
                batch = client.export_metadata(len(self.provider.epochs(pid)))
            except TransportError as exc:
                log.warning("sync with %s failed: %s", peer, exc)
                continue
            if batch.epochs:
                out.append(self.provider.import_metadata(batch))
        return out

    # request dispatch: (method, path) -> handler(query, body bytes) -> encodable
    def routes(self) -> dict[tuple[str, str], Callable[[dict, bytes], Any]]:
        p, led = self.provider, self.ledger

        def body(tp):
            return lambda raw: canonical_decode(raw, tp)

        sub, req, batch = body(TransactionSubmission), body(ProvenanceRequest), body(MetadataBatch)
        return {
            ("GET", "/tether"): lambda q, b: p.tethering_point(),
            ("POST", "/register"): lambda q, b: p.register(sub(b)),
            ("POST", "/prove"): lambda q, b: build_proof(req(b), p, self.view()),
            ("GET", "/export"): lambda q, b: p.export_metadata(int(q.get("start", 0))),
            ("POST", "/import"): lambda q, b: p.import_metadata(batch(b)),
            ("POST", "/seal"): lambda q, b: p.seal_epoch().header,
            ("POST", "/commit"): lambda q, b: self.commit(),
            ("POST", "/block"): lambda q, b: self.block(),
            ("POST", "/tick"): lambda q, b: self._tick(),
            ("POST", "/sync"): lambda q, b: self.sync(),
            ("GET", "/ledger"): lambda q, b: self._host().snapshot(),
            ("GET", "/ledger/head"): lambda q, b: self._host().head(),
            ("GET", "/ledger/blocks"): lambda q, b: list(
                self._host().blocks[int(q.get("start", 0)) : int(q["stop"]) if "stop" in q else None]
            ),
            ("POST", "/ledger/submit"): lambda q, b: led.submit_commitment(canonical_decode(b, Commitment)),
            ("POST", "/ledger/announce"): lambda q, b: self._announce(canonical_decode(b, ProviderKeyRecord)),
            ("GET", "/ledger/key"): lambda q, b: KeyAnswer(led.provider_key(q["provider"], int(q["epoch"]))),
        }

    def _host(self) -> Ledger:
        if not self.hosts_ledger:
            raise ConfigError("this node does not host the ledger")
        return self.ledger

    def _announce(self, rec: ProviderKeyRecord) -> bool:
        self._host().announce_provider_key(rec)
        return True

    def _tick(self) -> LedgerBlock:
        with self._lock:
            self.provider.seal_epoch()
            self.commit()
            return self.block()


def _handler_for(service: NodeService):
    routes = service.routes()

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _dispatch(self, method: str) -> None:
            url = urllib.parse.urlsplit(self.path)
            query = dict(urllib.parse.parse_qsl(url.query))
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            fn = routes.get((method, url.path))
            if fn is None:
                return self._reply(404, {"error": "NotFound", "message": f"no route {method} {url.path}"})
            try:
                result = fn(query, raw)
                if method == "POST":
                    service.persist()
            except DiplomaError as exc:
                status = 503 if isinstance(exc, TransportError) else 400
                return self._reply(status, {"error": type(exc).__name__, "message": str(exc)})
            except (KeyError, ValueError) as exc:
                return self._reply(400, {"error": "EncodingError", "message": f"bad request: {exc}"})
            self._reply(200, result)

        def _reply(self, status: int, obj: Any) -> None:
            payload = canonical_encode(obj)
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def log_message(self, fmt, *args):
            log.info("%s %s", self.address_string(), fmt % args)

    return Handler


def make_server(service: NodeService) -> ThreadingHTTPServer:
    host, port = split_address(service.config.listen)
    return ThreadingHTTPServer((host, port), _handler_for(service))


def serve(config: NodeConfig) -> None:
    server = make_server(NodeService(config))
    log.info("node %s listening on %s", config.node_id, config.listen)
    try:
        server.serve_forever()
    finally:
        server.server_close()
