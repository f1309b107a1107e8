import socket
import threading
import time

import numpy as np
import pytest

from coplan.consensus import (
    ConsensusConfig,
    RetailerAgent,
    SupplierAgent,
    best_response,
    run_consensus,
)
from coplan.errors import AgentTimeoutError, ParseError, ProtocolError
from coplan.protocol import (
    AgentServer,
    Message,
    RemoteAgent,
    decode,
    encode,
    query_agents,
)
from coplan.transport import supplier_utility


def random_message(rng):
    kind = str(rng.choice(["hello", "query", "response", "offer", "accept",
                           "decline", "error", "bye"]))
    session = f"s{int(rng.integers(0, 1000))}"
    dim = int(rng.integers(1, 6))
    vec = lambda: rng.normal(scale=100.0, size=dim)
    if kind == "hello":
        payload = {"dim": dim, "rho": float(rng.uniform(0.1, 10))}
    elif kind == "query":
        payload = {"dim": dim, "prices": vec(), "z": vec()}
    elif kind == "response":
        payload = {"dim": dim, "plan": vec()}
    elif kind == "offer":
        payload = {"dim": dim, "plan": vec(), "fee": float(rng.normal(scale=50))}
    elif kind == "error":
        payload = {"reason": "test-reason"}
    else:
        payload = {}
    iteration = int(rng.integers(0, 10_000)) if kind in ("query", "response") else None
    return Message(kind=kind, session=session, iteration=iteration, payload=payload)


def assert_messages_equal(a, b):
    assert a.kind == b.kind and a.session == b.session and a.iteration == b.iteration
    assert set(a.payload) == set(b.payload)
    for key, val in a.payload.items():
        other = b.payload[key]
        if isinstance(val, np.ndarray) or isinstance(other, np.ndarray):
            assert np.array_equal(np.asarray(val, dtype=float), np.asarray(other, dtype=float))
        else:
            assert val == other


def test_roundtrip_identity_on_random_messages():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        msg = random_message(rng)
        assert_messages_equal(decode(encode(msg)), msg)


def test_encoding_is_byte_stable():
    rng = np.random.default_rng(3)
    for _ in range(50):
        msg = random_message(rng)
        assert encode(msg) == encode(decode(encode(msg)))


def test_parse_errors():
    with pytest.raises(ParseError):
        decode(b"")
    with pytest.raises(ParseError):
        decode(b"not json at all")
    with pytest.raises(ParseError):
        decode(b'{"kind":"warp","session":"s1"}')
    with pytest.raises(ParseError, match="dimension-mismatch"):
        decode(b'{"kind":"response","session":"s1","iteration":1,"dim":3,"plan":[1.0,2.0]}')
    with pytest.raises(ParseError):
        decode(b'{"kind":"hello","session":"s1","dim":2,"rho":NaN}')
    with pytest.raises(ParseError):
        decode(b'{"kind":"bye","session":"s1","stray":1}')
    with pytest.raises(ParseError):
        decode(b'{"kind":"bye"}')


def test_decoder_survives_fuzzed_lines():
    rng = np.random.default_rng(11)
    okay = 0
    for _ in range(20_000):
        n = int(rng.integers(0, 60))
        line = bytes(rng.integers(0, 256, size=n, dtype=np.uint8))
        try:
            decode(line)
            okay += 1
        except ParseError:
            pass
    assert okay <= 5  # random bytes essentially never form a valid message


@pytest.fixture()
def toy_supplier_server(toy_supplier):
    reservation = supplier_utility(toy_supplier, [40.0, 60.0]).value
    server = AgentServer(SupplierAgent(toy_supplier), reservation=reservation).start()
    yield server
    server.stop()


def test_served_response_matches_in_process(toy_supplier, toy_supplier_server):
    agent = SupplierAgent(toy_supplier)
    remote = RemoteAgent(toy_supplier_server.address, dim=2, rho=1.0)
    rng = np.random.default_rng(7)
    warm = None
    for it in range(1, 5):
        prices = rng.uniform(-5, 5, size=2)
        z = rng.uniform(0, 80, size=2)
        got = remote.respond(prices, z, 1.0, it)
        want = best_response(agent, prices, z, 1.0, start=warm).plan
        warm = want
        assert np.array_equal(got, want)
    remote.close()


def test_offer_accept_and_decline(toy_supplier, toy_supplier_server):
    remote = RemoteAgent(toy_supplier_server.address, dim=2, rho=1.0)
    # net 1540 - 80 = 1460 >= standalone 1390
    assert remote.offer([10.0, 90.0], 80.0) is True
    remote.close()
    remote = RemoteAgent(toy_supplier_server.address, dim=2, rho=1.0)
    # fee exceeds the supplier's gain at this plan
    assert remote.offer([10.0, 90.0], 151.0) is False
    remote.close()


def test_consensus_over_wire_matches_in_process(toy_retailer, toy_supplier):
    cfg = ConsensusConfig(eps_abs=1e-6, eps_rel=1e-6, initial_plan=np.array([40.0, 60.0]))
    local = run_consensus([RetailerAgent(toy_retailer), SupplierAgent(toy_supplier)], cfg)

    servers = [AgentServer(RetailerAgent(toy_retailer)).start(),
               AgentServer(SupplierAgent(toy_supplier)).start()]
    remotes = [RemoteAgent(s.address, dim=2, rho=cfg.rho) for s in servers]
    try:
        wire = run_consensus(remotes, cfg)
    finally:
        for r in remotes:
            r.close()
        for s in servers:
            s.stop()

    assert np.array_equal(wire.plan, local.plan)
    assert wire.iterations == local.iterations
    assert np.array_equal(wire.residual_history, local.residual_history)


def test_query_agents_batches_and_checks_iteration(toy_supplier, toy_supplier_server):
    remotes = [RemoteAgent(toy_supplier_server.address, dim=2, rho=1.0),
               RemoteAgent(toy_supplier_server.address, dim=2, rho=1.0)]
    plans = query_agents(remotes, [np.zeros(2), np.ones(2)], np.array([40.0, 60.0]), 1)
    assert len(plans) == 2
    for r in remotes:
        r.close()


def test_silent_agent_times_out():
    listener = socket.create_server(("127.0.0.1", 0))

    def mute():
        conn, _ = listener.accept()
        time.sleep(3.0)
        conn.close()

    thread = threading.Thread(target=mute, daemon=True)
    thread.start()
    remote = RemoteAgent(listener.getsockname(), dim=2, rho=1.0, timeout=0.3)
    with pytest.raises(AgentTimeoutError):
        query_agents([remote], [np.zeros(2)], np.zeros(2), 1, timeout=0.3)
    listener.close()


def test_wrong_iteration_echo_is_protocol_error():
    listener = socket.create_server(("127.0.0.1", 0))

    def bad_echo():
        conn, _ = listener.accept()
        buf = b""
        while b"\n" not in buf:
            buf += conn.recv(65536)
        _, buf = buf.split(b"\n", 1)  # hello
        while b"\n" not in buf:
            buf += conn.recv(65536)
        line, _ = buf.split(b"\n", 1)
        query = decode(line)
        reply = Message("response", query.session, iteration=query.iteration + 1,
                        payload={"dim": 2, "plan": [0.0, 0.0]})
        conn.sendall(encode(reply))
        conn.close()

    thread = threading.Thread(target=bad_echo, daemon=True)
    thread.start()
    remote = RemoteAgent(listener.getsockname(), dim=2, rho=1.0)
    with pytest.raises(ProtocolError, match="echoed iteration"):
        query_agents([remote], [np.zeros(2)], np.zeros(2), 1)
    listener.close()


def test_dimension_mismatch_session_is_rejected(toy_supplier, toy_supplier_server):
    remote = RemoteAgent(toy_supplier_server.address, dim=3, rho=1.0)
    with pytest.raises(ProtocolError):
        remote.respond(np.zeros(3), np.zeros(3), 1.0, 1)


def test_messages_never_carry_private_fields():
    rng = np.random.default_rng(13)
    allowed = {"kind", "session", "iteration", "dim", "rho", "prices", "z", "plan",
               "fee", "reason"}
    import json
    for _ in range(200):
        doc = json.loads(encode(random_message(rng)).decode())
        assert set(doc) <= allowed
        blob = json.dumps(doc)
        for word in ("capacit", "cost", "demand", "profit", "margin"):
            assert word not in blob
