"""Wire protocol for black-box agent participation.

Agents join coordination runs as servers answering price/proposal queries
with best responses, so a counterparty never has to reveal its utility data:
only plans, prices, fees, and accept/decline decisions cross the wire.

Messages are single lines of JSON with a fixed key order over a reliable
byte stream (the reference harness uses local TCP sockets).  Every vector
payload carries its dimension explicitly.  Floats are serialized with
round-trip-exact precision so a coordination run driven over the protocol
reproduces the in-process trajectory bit for bit.

Canonical examples:

    {"kind":"hello","session":"s1","dim":2,"rho":1.0}
    {"kind":"query","session":"s1","iteration":3,"dim":2,"prices":[0.5,-0.25],"z":[40.0,60.0]}
    {"kind":"response","session":"s1","iteration":3,"dim":2,"plan":[39.5,60.25]}
    {"kind":"offer","session":"s1","dim":2,"plan":[10.0,90.0],"fee":80.0}
    {"kind":"accept","session":"s1"}
    {"kind":"decline","session":"s1"}
    {"kind":"error","session":"s1","reason":"dimension-mismatch"}
    {"kind":"bye","session":"s1"}
"""

import json
import os
import socket
import threading
from dataclasses import dataclass, field

import numpy as np

from .consensus import best_response
from .errors import AgentTimeoutError, ParseError, ProtocolError

DEFAULT_TIMEOUT = 30.0
LISTEN_ENV_VAR = "COPLAN_LISTEN"

KINDS = ("hello", "query", "response", "offer", "accept", "decline", "error", "bye")

# canonical field order per kind, after "kind" and "session"
_FIELDS = {
    "hello": ("dim", "rho"),
    "query": ("iteration", "dim", "prices", "z"),
    "response": ("iteration", "dim", "plan"),
    "offer": ("dim", "plan", "fee"),
    "accept": (),
    "decline": (),
    "error": ("reason",),
    "bye": (),
}
_VECTOR_FIELDS = ("prices", "z", "plan")


@dataclass(frozen=True)
class Message:
    kind: str
    session: str
    iteration: int | None = None
    payload: dict = field(default_factory=dict)


def encode(msg):
    """One line of canonical JSON (byte-stable for equal messages)."""
    if msg.kind not in KINDS:
        raise ProtocolError(f"unknown message kind {msg.kind!r}")
    doc = {"kind": msg.kind, "session": msg.session}
    for name in _FIELDS[msg.kind]:
        if name == "iteration":
            doc["iteration"] = int(msg.iteration)
            continue
        if name not in msg.payload:
            raise ProtocolError(f"{msg.kind} message is missing field {name!r}")
        value = msg.payload[name]
        if name in _VECTOR_FIELDS:
            value = [float(v) for v in np.asarray(value, dtype=float)]
        doc[name] = value
    line = json.dumps(doc, separators=(",", ":"), allow_nan=False)
    if "\n" in line:  # pragma: no cover - json never emits raw newlines
        raise ProtocolError("encoded message contains a newline")
    return line.encode("ascii") + b"\n"


def _reject_constant(token):
    raise ParseError(f"non-finite number {token!r}")


def decode(line):
    """Parse one wire line into a :class:`Message`; malformed input raises
    :class:`ParseError` with a reason and byte offset."""
    if isinstance(line, str):
        line = line.encode("utf-8", errors="surrogateescape")
    text = line.rstrip(b"\r\n")
    if not text:
        raise ParseError("empty line")
    try:
        doc = json.loads(text.decode("utf-8"), parse_constant=_reject_constant)
    except UnicodeDecodeError as exc:
        raise ParseError("invalid utf-8", offset=exc.start) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid json: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, dict):
        raise ParseError("message must be a json object")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ParseError(f"unknown kind {kind!r}")
    session = doc.get("session")
    if not isinstance(session, str) or not session:
        raise ParseError("missing or invalid session id")
    expected = {"kind", "session", *_FIELDS[kind]}
    extra = set(doc) - expected
    if extra:
        raise ParseError(f"unexpected fields {sorted(extra)}")
    missing = expected - set(doc)
    if missing:
        raise ParseError(f"missing fields {sorted(missing)}")

    iteration = None
    payload = {}
    for name in _FIELDS[kind]:
        value = doc[name]
        if name == "iteration":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ParseError("iteration must be an integer")
            iteration = value
            continue
        if name == "dim":
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ParseError("dim must be a nonnegative integer")
        elif name in _VECTOR_FIELDS:
            if not isinstance(value, list) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                raise ParseError(f"{name} must be a list of numbers")
            if not all(np.isfinite(v) for v in value):
                raise ParseError(f"{name} contains non-finite entries")
            value = np.asarray(value, dtype=float)
        elif name in ("rho", "fee"):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ParseError(f"{name} must be a number")
            if not np.isfinite(value):
                raise ParseError(f"{name} is not finite")
            value = float(value)
        elif name == "reason" and not isinstance(value, str):
            raise ParseError("reason must be a string")
        payload[name] = value
    dim = payload.get("dim")
    if dim is not None:
        for name in _VECTOR_FIELDS:
            if name in payload and payload[name].size != dim:
                raise ParseError(
                    f"dimension-mismatch: {name} has {payload[name].size} entries, dim={dim}")
    return Message(kind=kind, session=session, iteration=iteration, payload=payload)


class _LineChannel:
    """Newline-delimited messages over a connected socket."""

    def __init__(self, sock):
        self.sock = sock
        # one small message per iteration: latency matters, batching does not
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._buffer = b""

    def send(self, msg):
        self.sock.sendall(encode(msg))

    def recv(self, timeout=None):
        self.sock.settimeout(timeout)
        while b"\n" not in self._buffer:
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ConnectionError("peer closed the stream")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return decode(line)

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def default_listen_address():
    """Host/port from the environment (``COPLAN_LISTEN``), else an ephemeral
    localhost port."""
    raw = os.environ.get(LISTEN_ENV_VAR, "127.0.0.1:0")
    host, _, port = raw.rpartition(":")
    return host or "127.0.0.1", int(port)


class AgentServer:
    """Serves one plan agent to coordinator sessions.

    Each connection is one session: a ``hello`` fixes the plan dimension and
    penalty, queries are answered with proximal best responses (warm-started
    per session exactly like the in-process endpoint), and a plan/fee offer
    is accepted when it beats the agent's reservation utility.  Sessions end
    on ``bye`` or disconnect; malformed input gets an ``error`` reply and the
    session closes.  No private data of the agent ever leaves this process.
    """

    def __init__(self, agent, reservation=-np.inf, host=None, port=None,
                 gap_tol=1e-12, max_evals=120):
        env_host, env_port = default_listen_address()
        self.agent = agent
        self.reservation = reservation
        self.gap_tol = gap_tol
        self.max_evals = max_evals
        self._listener = socket.create_server((host or env_host, env_port if port is None else port))
        self._stop = threading.Event()
        self._thread = None

    @property
    def address(self):
        return self._listener.getsockname()

    def start(self):
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._stop.set()
        try:
            self._listener.shutdown(socket.SHUT_RDWR)  # unblocks accept()
        except OSError:
            pass
        self._listener.close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def serve_forever(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            worker = threading.Thread(target=self._run_session, args=(conn,), daemon=True)
            worker.start()

    def _run_session(self, conn):
        try:
            self._serve_session(_LineChannel(conn))
        except (ConnectionError, OSError):
            pass
        finally:
            conn.close()

    def _serve_session(self, channel):
        try:
            hello = channel.recv(timeout=DEFAULT_TIMEOUT)
        except ParseError as exc:
            channel.send(Message("error", "unknown", payload={"reason": str(exc.reason)}))
            return
        if hello.kind != "hello":
            channel.send(Message("error", hello.session, payload={"reason": "expected hello"}))
            return
        session = hello.session
        dim = hello.payload["dim"]
        rho = hello.payload["rho"]
        if dim != self.agent.dim or rho <= 0:
            channel.send(Message("error", session,
                                 payload={"reason": "dimension-mismatch or bad rho"}))
            return
        warm_start = None
        while True:
            try:
                msg = channel.recv(timeout=None)
            except ParseError as exc:
                channel.send(Message("error", session, payload={"reason": str(exc.reason)}))
                return
            except ConnectionError:
                return
            if msg.session != session:
                channel.send(Message("error", session, payload={"reason": "unknown session"}))
                return
            if msg.kind == "bye":
                return
            if msg.kind == "query":
                if msg.payload["dim"] != dim:
                    channel.send(Message("error", session,
                                         payload={"reason": "dimension-mismatch"}))
                    return
                br = best_response(self.agent, msg.payload["prices"], msg.payload["z"], rho,
                                   gap_tol=self.gap_tol, max_evals=self.max_evals,
                                   start=warm_start)
                warm_start = br.plan
                channel.send(Message("response", session, iteration=msg.iteration,
                                     payload={"dim": dim, "plan": br.plan}))
            elif msg.kind == "offer":
                value = float(self.agent.evaluate(msg.payload["plan"])[0])
                taking = value - msg.payload["fee"] >= self.reservation
                channel.send(Message("accept" if taking else "decline", session))
            else:
                channel.send(Message("error", session,
                                     payload={"reason": f"unexpected {msg.kind}"}))
                return


def serve_agent(agent, reservation=-np.inf, host=None, port=None):
    """Blocking convenience wrapper: serve ``agent`` until interrupted."""
    server = AgentServer(agent, reservation=reservation, host=host, port=port)
    try:
        server.serve_forever()
    finally:
        server.stop()


class RemoteAgent:
    """Client session against one agent server, usable as a consensus
    endpoint (``respond``) and for take-it-or-leave-it offers."""

    _counter = 0

    def __init__(self, address, dim, rho, session=None, timeout=DEFAULT_TIMEOUT,
                 agent_id=None):
        RemoteAgent._counter += 1
        self.dim = dim
        self.rho = rho
        self.timeout = timeout
        self.agent_id = agent_id if agent_id is not None else f"agent-{RemoteAgent._counter}"
        self.session = session or f"session-{RemoteAgent._counter}"
        self._channel = _LineChannel(socket.create_connection(tuple(address), timeout=timeout))
        self._channel.send(Message("hello", self.session,
                                   payload={"dim": dim, "rho": float(rho)}))

    def respond(self, prices, z, rho, iteration):
        if rho != self.rho:
            raise ProtocolError("penalty changed mid-session; open a new session")
        return query_agents([self], [prices], z, iteration, timeout=self.timeout)[0]

    def offer(self, plan, fee):
        self._channel.send(Message("offer", self.session,
                                   payload={"dim": self.dim, "plan": plan,
                                            "fee": float(fee)}))
        reply = self._read(self.timeout)
        if reply.kind not in ("accept", "decline"):
            raise ProtocolError(f"expected accept/decline, got {reply.kind}")
        return reply.kind == "accept"

    def close(self):
        try:
            self._channel.send(Message("bye", self.session))
        except OSError:
            pass
        self._channel.close()

    def _read(self, timeout):
        reply = self._channel.recv(timeout=timeout)
        if reply.kind == "error":
            raise ProtocolError(f"agent {self.agent_id}: {reply.payload['reason']}")
        return reply


def query_agents(agents, prices_per_agent, z, iteration, timeout=DEFAULT_TIMEOUT):
    """Send one iteration's queries to every remote agent, then collect the
    responses in agent order.  A silent agent raises
    :class:`AgentTimeoutError`; a response echoing the wrong iteration raises
    :class:`ProtocolError`."""
    if len(agents) != len(prices_per_agent):
        raise ProtocolError("one price vector per agent is required")
    for agent, prices in zip(agents, prices_per_agent):
        agent._channel.send(Message("query", agent.session, iteration=int(iteration),
                                    payload={"dim": agent.dim, "prices": prices, "z": z}))
    plans = []
    for agent in agents:
        try:
            reply = agent._read(timeout)
        except (TimeoutError, socket.timeout) as exc:
            raise AgentTimeoutError(agent.agent_id, timeout) from exc
        if reply.kind != "response":
            raise ProtocolError(f"expected response, got {reply.kind}")
        if reply.iteration != iteration:
            raise ProtocolError(
                f"agent {agent.agent_id} echoed iteration {reply.iteration}, expected {iteration}")
        if reply.payload["dim"] != agent.dim:
            raise ProtocolError("response dimension does not match the session")
        plans.append(reply.payload["plan"])
    return plans
