"""Two-party execution engine with exact online-round and bandwidth metering.

Protocols are written as party-local generator functions. Every call to
``yield from ctx.exchange(name, payload)`` is one synchronised bidirectional
exchange: this party's payload goes out, the peer's payload comes back, and
both meters count one online round. Either side may send an empty payload.

The same generator can be driven three ways:

* ``lockstep``: both parties advanced alternately in the calling thread;
* ``inproc``: one thread per party over an in-memory frame channel;
* ``tcp``: one thread (or process) per party over a TCP socket.

All three produce bit-identical outputs and meters for the same seeds.
"""
from __future__ import annotations

import contextlib
import queue
import socket
import struct
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Generator

import numpy as np

from .dealer import TriplePool
from .fixed_ring import DEFAULT_CFG, RING_DTYPE, FixedCfg

DEFAULT_TIMEOUT = 30.0

# u16 tags carried in every frame
PROTOCOL_TAGS = {
    "raw": 0,
    "beaver_open": 1,
    "reshare": 2,
    "input": 3,
    "reveal": 4,
}
TAG_FIN = 0xFFFF
TAG_ABORT = 0xFFFE
_TAG_NAMES = {v: k for k, v in PROTOCOL_TAGS.items()}

FRAME_HEADER = struct.Struct("<IHI")


class TransportError(RuntimeError):
    """The channel to the peer failed (closed connection, timeout, ...)."""


class ProtocolDesyncError(RuntimeError):
    """The parties disagree about which exchange they are in."""


class ProtocolAbort(RuntimeError):
    """The peer aborted the protocol."""


@dataclass(frozen=True)
class Frame:
    round_index: int
    tag: int
    payload: bytes = b""

    def encode(self) -> bytes:
        return FRAME_HEADER.pack(self.round_index, self.tag, len(self.payload)) + self.payload

    @classmethod
    def decode(cls, raw: bytes) -> "Frame":
        if len(raw) < FRAME_HEADER.size:
            raise TransportError(f"short frame ({len(raw)} bytes)")
        rnd, tag, n = FRAME_HEADER.unpack_from(raw)
        body = raw[FRAME_HEADER.size:]
        if len(body) != n:
            raise TransportError(f"frame declares {n} payload bytes, carries {len(body)}")
        return cls(rnd, tag, body)


# metering ------------------------------------------------------------------


@dataclass
class CostMeter:
    """One party's view of the online cost of a run."""

    online_rounds: int = 0
    bytes_sent: int = 0
    secure_mults: int = 0
    by_protocol: dict = field(default_factory=lambda: defaultdict(lambda: [0, 0]))
    by_section: dict = field(default_factory=dict)

    def _section(self, label):
        return self.by_section.setdefault(label, {"rounds": 0, "bytes": 0, "mults": 0})

    def record_exchange(self, protocol: str, nbytes: int, sections=()):
        self.online_rounds += 1
        self.bytes_sent += nbytes
        entry = self.by_protocol[protocol]
        entry[0] += 1
        entry[1] += nbytes
        for label in sections:
            sec = self._section(label)
            sec["rounds"] += 1
            sec["bytes"] += nbytes

    def record_mults(self, n: int, sections=()):
        self.secure_mults += n
        for label in sections:
            self._section(label)["mults"] += n

    def summary(self) -> dict:
        return {
            "online_rounds": self.online_rounds,
            "bytes_sent": self.bytes_sent,
            "secure_mults": self.secure_mults,
            "by_protocol": {k: tuple(v) for k, v in self.by_protocol.items()},
            "by_section": {k: dict(v) for k, v in self.by_section.items()},
        }

    def __eq__(self, other):
        if not isinstance(other, CostMeter):
            return NotImplemented
        return self.summary() == other.summary()


@dataclass(frozen=True)
class Outbound:
    """What a protocol generator yields: its half of one exchange."""

    round_index: int
    protocol: str
    payload: np.ndarray

    @property
    def tag(self) -> int:
        return PROTOCOL_TAGS[self.protocol]


class PartyContext:
    """Per-party state handed to protocol generators."""

    def __init__(self, party: int, pool: TriplePool | None = None, cfg: FixedCfg = DEFAULT_CFG,
                 rng: np.random.Generator | None = None, meter: CostMeter | None = None,
                 debug: bool = False):
        if party not in (0, 1):
            raise ValueError(f"party must be 0 or 1, got {party}")
        if pool is not None and pool.party != party:
            raise ValueError(f"party {party} was handed the triple pool of party {pool.party}")
        self.party = party
        self.pool = pool
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng()
        self.meter = meter if meter is not None else CostMeter()
        self.debug = debug  # protocols may reveal intermediates for range checks
        self.round_index = 0
        self._sections: list[str] = []

    def exchange(self, protocol: str, payload) -> Generator[Outbound, np.ndarray, np.ndarray]:
        """Send ``payload`` (uint64 values) and receive the peer's payload."""
        out = np.ascontiguousarray(np.asarray(payload, dtype=RING_DTYPE).ravel())
        reply = yield Outbound(self.round_index, protocol, out)
        self.round_index += 1
        self.meter.record_exchange(protocol, out.nbytes, self._sections)
        return reply

    def take_triples(self, n: int):
        if self.pool is None:
            raise RuntimeError(f"party {self.party} has no triple pool")
        triple = self.pool.take(n)
        self.meter.record_mults(n, self._sections)
        return triple

    @contextlib.contextmanager
    def section(self, label: str):
        """Attribute the enclosed exchanges and multiplications to ``label``."""
        self._sections.append(label)
        try:
            yield
        finally:
            self._sections.pop()


Protocol = Callable[[PartyContext, Any], Generator[Outbound, np.ndarray, Any]]


# transports ---------------------------------------------------------------


class QueueEndpoint:
    """One end of an in-process duplex channel carrying encoded frames."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: float = DEFAULT_TIMEOUT):
        self._in, self._out = inbox, outbox
        self.timeout = timeout

    def send_frame(self, frame: Frame):
        self._out.put(frame.encode())

    def recv_frame(self) -> Frame:
        try:
            raw = self._in.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError(f"no frame from peer within {self.timeout}s") from None
        return Frame.decode(raw)

    def close(self):
        pass


def inproc_pair(timeout: float = DEFAULT_TIMEOUT) -> tuple[QueueEndpoint, QueueEndpoint]:
    q01, q10 = queue.Queue(), queue.Queue()
    return QueueEndpoint(q10, q01, timeout), QueueEndpoint(q01, q10, timeout)


class TcpEndpoint:
    """Frames over a connected TCP socket.

    Outgoing frames are written by a background thread so that both parties
    can push a large payload in the same round without each blocking in
    ``sendall`` while the other's receive buffer is full.
    """

    def __init__(self, sock: socket.socket, timeout: float = DEFAULT_TIMEOUT):
        self.sock = sock
        self.timeout = timeout
        sock.settimeout(timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._outbox: queue.Queue = queue.Queue()
        self._send_error: TransportError | None = None
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._writer.start()

    def _write_loop(self):
        while True:
            raw = self._outbox.get()
            if raw is None:
                return
            if self._send_error is not None:
                continue
            try:
                self.sock.sendall(raw)
            except OSError as exc:
                self._send_error = TransportError(f"send failed: {exc}")

    @classmethod
    def listen(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT, on_bound=None) -> "TcpEndpoint":
        srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            srv.bind((host, port))
            srv.listen(1)
            srv.settimeout(timeout)
            if on_bound is not None:
                on_bound(srv.getsockname())
            try:
                conn, _ = srv.accept()
            except socket.timeout:
                raise TransportError(f"no peer connected to {host}:{port} within {timeout}s") from None
        finally:
            srv.close()
        return cls(conn, timeout)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> "TcpEndpoint":
        deadline = time.monotonic() + timeout
        while True:
            try:
                sock = socket.create_connection((host, port), timeout=timeout)
                return cls(sock, timeout)
            except OSError as exc:
                if time.monotonic() > deadline:
                    raise TransportError(f"could not reach peer at {host}:{port}: {exc}") from exc
                time.sleep(0.05)

    def _recv_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(min(n - len(buf), 1 << 20))
            except socket.timeout:
                raise TransportError(f"peer silent for {self.timeout}s") from None
            except OSError as exc:
                raise TransportError(f"connection failed: {exc}") from exc
            if not chunk:
                raise TransportError("connection closed by peer")
            buf += chunk
        return bytes(buf)

    def send_frame(self, frame: Frame):
        if self._send_error is not None:
            raise self._send_error
        self._outbox.put(frame.encode())

    def recv_frame(self) -> Frame:
        if self._send_error is not None:
            raise self._send_error
        head = self._recv_exact(FRAME_HEADER.size)
        _, _, n = FRAME_HEADER.unpack(head)
        return Frame.decode(head + self._recv_exact(n))

    def close(self):
        """Flush queued frames (bounded by the timeout), then close the socket."""
        self._outbox.put(None)
        self._writer.join(self.timeout)
        with contextlib.suppress(OSError):
            self.sock.close()


def parse_address(addr: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return (host or default_host), int(port)


# drivers ------------------------------------------------------------------


@dataclass
class TranscriptEntry:
    party: int
    round_index: int
    protocol: str
    payload: np.ndarray


def drive(gen, endpoint, party: int, transcript: list | None = None):
    """Run one party's protocol generator over a frame transport."""
    try:
        msg = gen.send(None)
        while True:
            if transcript is not None:
                transcript.append(TranscriptEntry(party, msg.round_index, msg.protocol, msg.payload.copy()))
            endpoint.send_frame(Frame(msg.round_index, msg.tag, msg.payload.astype("<u8").tobytes()))
            frame = endpoint.recv_frame()
            if frame.tag == TAG_ABORT:
                raise ProtocolAbort(f"party {1 - party} aborted: {frame.payload.decode(errors='replace')}")
            if frame.tag == TAG_FIN:
                raise ProtocolDesyncError(
                    f"party {party} expected round {msg.round_index} ({msg.protocol}) but the peer already finished"
                )
            if (frame.round_index, frame.tag) != (msg.round_index, msg.tag):
                raise ProtocolDesyncError(
                    f"party {party} at round {msg.round_index} tag {msg.protocol!r}, "
                    f"peer sent round {frame.round_index} tag {_TAG_NAMES.get(frame.tag, frame.tag)!r}"
                )
            reply = np.frombuffer(frame.payload, dtype="<u8").astype(RING_DTYPE)
            msg = gen.send(reply)
    except StopIteration as stop:
        result = stop.value
    except (ProtocolAbort, TransportError):
        raise
    except BaseException as exc:
        with contextlib.suppress(Exception):
            endpoint.send_frame(Frame(0, TAG_ABORT, repr(exc).encode()))
        raise
    # teardown handshake: not an online round, only detects a peer that still wants to talk
    endpoint.send_frame(Frame(0, TAG_FIN))
    frame = endpoint.recv_frame()
    if frame.tag == TAG_ABORT:
        raise ProtocolAbort(f"party {1 - party} aborted: {frame.payload.decode(errors='replace')}")
    if frame.tag != TAG_FIN:
        raise ProtocolDesyncError(f"party {party} finished but the peer sent round {frame.round_index}")
    return result


def run_lockstep(gen0, gen1, transcript: list | None = None):
    """Advance both parties alternately in the current thread."""
    gens = (gen0, gen1)
    done: list = [None, None]
    msgs: list = [None, None]
    replies: list = [None, None]
    while True:
        for p in (0, 1):
            if done[p] is None:
                try:
                    msgs[p] = gens[p].send(replies[p])
                except StopIteration as stop:
                    done[p] = (stop.value,)
                    msgs[p] = None
        if done[0] is not None and done[1] is not None:
            return done[0][0], done[1][0]
        if done[0] is not None or done[1] is not None:
            waiting = 0 if done[1] is not None else 1
            raise ProtocolDesyncError(
                f"party {waiting} expected round {msgs[waiting].round_index} ({msgs[waiting].protocol}) "
                f"but the peer already finished"
            )
        m0, m1 = msgs
        if (m0.round_index, m0.tag) != (m1.round_index, m1.tag):
            raise ProtocolDesyncError(
                f"party 0 at round {m0.round_index} {m0.protocol!r}, party 1 at round {m1.round_index} {m1.protocol!r}"
            )
        if transcript is not None:
            transcript.append(TranscriptEntry(0, m0.round_index, m0.protocol, m0.payload.copy()))
            transcript.append(TranscriptEntry(1, m1.round_index, m1.protocol, m1.payload.copy()))
        # frames round-trip through the wire encoding so every transport sees the same bytes
        replies = [np.frombuffer(m1.payload.astype("<u8").tobytes(), dtype="<u8").astype(RING_DTYPE),
                   np.frombuffer(m0.payload.astype("<u8").tobytes(), dtype="<u8").astype(RING_DTYPE)]


@dataclass
class TwoPartyResult:
    outputs: tuple
    meters: tuple
    transcript: list | None = None


def party_rng(seed, party: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), party])


def make_contexts(pools, cfg: FixedCfg, seed, debug: bool = False) -> tuple[PartyContext, PartyContext]:
    pools = pools if pools is not None else (None, None)
    return tuple(PartyContext(p, pools[p], cfg, party_rng(seed, p), debug=debug) for p in (0, 1))


def run_two_party(protocol: Protocol, inputs=(None, None), pools=None, transport: str = "inproc",
                  cfg: FixedCfg = DEFAULT_CFG, seed: int = 0, timeout: float = DEFAULT_TIMEOUT,
                  record: bool = False, debug: bool = False) -> TwoPartyResult:
    """Run ``protocol`` for both parties and return their outputs and meters.

    ``transport`` is ``"lockstep"``, ``"inproc"`` or ``"tcp"`` (loopback).
    ``debug`` lets protocols reveal intermediates for range checks; the
    extra exchanges show up on the meters under the ``reveal`` tag.
    """
    ctxs = make_contexts(pools, cfg, seed, debug)
    gens = [protocol(ctxs[p], inputs[p]) for p in (0, 1)]
    transcript = [] if record else None

    if transport == "lockstep":
        outs = run_lockstep(gens[0], gens[1], transcript)
        return TwoPartyResult(outs, (ctxs[0].meter, ctxs[1].meter), transcript)

    if transport == "inproc":
        ends = inproc_pair(timeout)
        openers = [lambda ep=ends[0]: ep, lambda ep=ends[1]: ep]
    elif transport == "tcp":
        bound = queue.Queue()

        def open0():
            return TcpEndpoint.listen("127.0.0.1", 0, timeout, on_bound=bound.put)

        def open1():
            try:
                host, port = bound.get(timeout=timeout)
            except queue.Empty:
                raise TransportError("party 0 never bound a listening socket") from None
            return TcpEndpoint.connect(host, port, timeout)

        openers = [open0, open1]
    else:
        raise ValueError(f"unknown transport {transport!r}")

    results: list = [None, None]
    errors: list = [None, None]
    logs = ([], []) if record else (None, None)

    def worker(p):
        ep = None
        try:
            ep = openers[p]()
            results[p] = drive(gens[p], ep, p, logs[p])
        except BaseException as exc:  # noqa: BLE001 - re-raised in the caller
            errors[p] = exc
        finally:
            if ep is not None:
                ep.close()

    threads = [threading.Thread(target=worker, args=(p,), name=f"party{p}") for p in (0, 1)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    root = next((e for e in errors if e is not None and not isinstance(e, ProtocolAbort)), None)
    root = root or next((e for e in errors if e is not None), None)
    if root is not None:
        raise root
    if record:
        transcript = sorted(logs[0] + logs[1], key=lambda e: (e.round_index, e.party))
    return TwoPartyResult(tuple(results), (ctxs[0].meter, ctxs[1].meter), transcript)


def run_party(protocol: Protocol, party: int, inp, pool: TriplePool | None, endpoint,
              cfg: FixedCfg = DEFAULT_CFG, seed: int = 0, record: bool = False, debug: bool = False):
    """Run one party against a remote peer; returns ``(output, meter, transcript)``."""
    ctx = PartyContext(party, pool, cfg, party_rng(seed, party), debug=debug)
    log = [] if record else None
    try:
        out = drive(protocol(ctx, inp), endpoint, party, log)
    finally:
        endpoint.close()
    return out, ctx.meter, log


def round_barrier(ctx: PartyContext, payload, protocol: str = "raw"):
    """Protocol step that performs exactly one exchange and returns the peer's payload."""
    return (yield from ctx.exchange(protocol, payload))
