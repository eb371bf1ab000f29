import asyncio
import io
import os

import numpy as np
import pytest

from wfpad.config import BridgeConfig, DefenseSpec
from wfpad.kernel import DefenseState, SignalKind
from wfpad.tamaraw import TamarawConfig
from wfpad.trace import Direction, Packet, Trace
from wfpad.tunnel import socks
from wfpad.tunnel.capture import parse_captures
from wfpad.tunnel.cell import (
    BODY_SIZE, CELL_SIZE, BadLength, BadType, Cell, CellError, CellType, NonZeroPadding,
    decode_cell, encode_cell,
)
from wfpad.tunnel.handshake import (
    HELLO_SIZE, REPLY_SIZE, AuthFailure, ClientHello, HandshakeError, ParamMismatch,
    accept_hello, derive_keys, finish_hello, make_hello,
)
from wfpad.tunnel.proxy import BridgeProxy, ClientProxy
from wfpad.tunnel.replay import replay
from wfpad.tunnel.seal import AeadSealer, AuthenticationFailure

SECRET = bytes(range(32))


def random_cell(rng) -> Cell:
    kind = int(rng.integers(0, 3))
    if kind == 0:
        return Cell.data(rng.bytes(int(rng.integers(0, BODY_SIZE + 1))))
    if kind == 1:
        return Cell.dummy()
    return Cell.signal(SignalKind(int(rng.integers(1, 4))))


class TestCell:
    def test_dummy_layout(self):
        assert encode_cell(Cell.dummy()) == b"\x01\x00\x00" + bytes(BODY_SIZE)

    def test_full_payload(self):
        payload = bytes(range(256)) * 2 + b"xy"
        raw = encode_cell(Cell.data(payload))
        assert raw[:3] == b"\x00\x02\x02" and raw[3:] == payload

    def test_signal_kind_in_first_body_byte(self):
        raw = encode_cell(Cell.signal(SignalKind.END_BURST))
        assert raw[0] == 2 and raw[3] == 3
        assert decode_cell(raw).signal_kind is SignalKind.END_BURST

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            cell = random_cell(rng)
            raw = encode_cell(cell)
            assert len(raw) == CELL_SIZE
            assert decode_cell(raw) == cell

    def test_errors(self):
        with pytest.raises(BadLength):
            Cell.data(bytes(BODY_SIZE + 1))
        with pytest.raises(BadLength):
            decode_cell(bytes(CELL_SIZE - 1))
        with pytest.raises(BadType):
            decode_cell(b"\x07" + bytes(CELL_SIZE - 1))
        raw = bytearray(encode_cell(Cell.data(b"abc")))
        raw[10] = 1
        with pytest.raises(NonZeroPadding):
            decode_cell(bytes(raw))
        with pytest.raises(BadLength):
            decode_cell(b"\x00\x03\x00" + bytes(BODY_SIZE))
        with pytest.raises(CellError):
            Cell(CellType.DUMMY, b"x")


class TestSeal:
    def test_round_trip_and_length(self):
        rng = np.random.default_rng(1)
        a, b = AeadSealer(SECRET), AeadSealer(SECRET)
        for _ in range(10_000):
            raw = encode_cell(random_cell(rng))
            record = a.seal(raw)
            assert len(record) == CELL_SIZE + 16
            assert b.open(record) == raw

    def test_every_byte_flip_detected(self):
        record = AeadSealer(SECRET).seal(encode_cell(Cell.data(b"hello")))
        for i in range(len(record)):
            bad = bytearray(record)
            bad[i] ^= 0x40
            with pytest.raises(AuthenticationFailure):
                AeadSealer(SECRET).open(bytes(bad))

    def test_reorder_and_replay_detected(self):
        sender = AeadSealer(SECRET)
        r0 = sender.seal(encode_cell(Cell.dummy()))
        r1 = sender.seal(encode_cell(Cell.dummy()))
        with pytest.raises(AuthenticationFailure):
            AeadSealer(SECRET).open(r1)
        receiver = AeadSealer(SECRET)
        receiver.open(r0)
        with pytest.raises(AuthenticationFailure):
            receiver.open(r0)

    def test_wrong_key(self):
        record = AeadSealer(SECRET).seal(encode_cell(Cell.dummy()))
        with pytest.raises(AuthenticationFailure):
            AeadSealer(bytes(32)).open(record)


class TestHandshake:
    def config(self, spec=None, secret=SECRET):
        return BridgeConfig(spec or DefenseSpec("tamaraw"), secret)

    def test_sizes(self):
        hello = make_hello(DefenseSpec("front"))
        assert len(hello.encode()) == HELLO_SIZE == 70
        assert ClientHello.decode(hello.encode()) == hello
        reply, _ = accept_hello(hello.encode(), self.config(DefenseSpec("front")))
        assert len(reply.encode()) == REPLY_SIZE == 65

    def test_happy_path(self):
        cfg = self.config()
        hello = make_hello(cfg.defense)
        reply, bridge_keys = accept_hello(hello.encode(), cfg)
        client_keys = finish_hello(hello, reply.encode(), SECRET)
        assert client_keys == bridge_keys
        assert client_keys.client_to_bridge != client_keys.bridge_to_client

    def test_wrong_secret(self):
        cfg = self.config()
        hello = make_hello(cfg.defense)
        reply, _ = accept_hello(hello.encode(), cfg)
        with pytest.raises(AuthFailure):
            finish_hello(hello, reply.encode(), bytes(32))

    def test_wrong_secret_fails_first_record_at_bridge(self):
        nonces = os.urandom(32), os.urandom(32)
        client_keys = derive_keys(bytes(32), *nonces)
        bridge_keys = derive_keys(SECRET, *nonces)
        record = client_keys.sealers(True)[0].seal(encode_cell(Cell.dummy()))
        with pytest.raises(AuthenticationFailure):
            bridge_keys.sealers(False)[1].open(record)

    def test_param_mismatch_on_L(self):
        cfg = self.config()
        other = DefenseSpec("tamaraw", TamarawConfig(L=100))
        with pytest.raises(ParamMismatch):
            accept_hello(make_hello(other).encode(), cfg)

    def test_defense_mismatch(self):
        with pytest.raises(ParamMismatch):
            accept_hello(make_hello(DefenseSpec("front")).encode(), self.config())

    def test_bad_magic(self):
        raw = b"XXXX" + make_hello(DefenseSpec("tamaraw")).encode()[4:]
        with pytest.raises(HandshakeError):
            accept_hello(raw, self.config())


# -- live loopback ------------------------------------------------------------

async def echo_server():
    async def handle(reader, writer):
        while data := await reader.read(65536):
            writer.write(data)
            await writer.drain()
        writer.close()
    server = await asyncio.start_server(handle, "127.0.0.1", 0)
    return server, server.sockets[0].getsockname()[1]


async def start_pair(spec, multiplex=False, client_secret=SECRET, bridge_spec=None):
    bridge = await BridgeProxy(BridgeConfig(bridge_spec or spec, SECRET, multiplex=multiplex),
                               seed=1).start("127.0.0.1", 0)
    client = await ClientProxy(BridgeConfig(spec, client_secret, multiplex=multiplex),
                               ("127.0.0.1", bridge.port), seed=2).start("127.0.0.1", 0)
    return client, bridge


async def socks_open(client, port):
    reader, writer = await asyncio.open_connection("127.0.0.1", client.port)
    await socks.connect(reader, writer, "127.0.0.1", port)
    return reader, writer


async def echo_round_trip(spec, payload, multiplex=False, streams=1):
    server, port = await echo_server()
    client, bridge = await start_pair(spec, multiplex)
    try:
        async def one(data):
            reader, writer = await socks_open(client, port)
            writer.write(data)
            writer.write_eof()
            got = await asyncio.wait_for(reader.read(-1), 60)
            writer.close()
            return got
        results = await asyncio.gather(*(one(payload[i::streams]) for i in range(streams)))
        await asyncio.sleep(0.05)
        return results, [payload[i::streams] for i in range(streams)], client, bridge
    finally:
        await client.close()
        await bridge.close()
        server.close()


@pytest.mark.parametrize("name", ["none", "tamaraw", "front", "randomwt"])
def test_echo_integrity(name):
    payload = np.random.default_rng(3).bytes(20_000)
    got, want, client, bridge = asyncio.run(echo_round_trip(DefenseSpec(name), payload))
    assert got == want
    lengths = set().union(*(c.lengths() for c in client.captures + bridge.captures))
    assert lengths == {CELL_SIZE + 16}


def test_multiplexed_streams():
    payload = np.random.default_rng(4).bytes(30_000)
    got, want, client, bridge = asyncio.run(
        echo_round_trip(DefenseSpec("none"), payload, multiplex=True, streams=3))
    assert got == want
    assert len(client.sessions) == 1


def test_destination_refused_maps_to_socks_code():
    async def run():
        probe = await asyncio.start_server(lambda r, w: None, "127.0.0.1", 0)
        port = probe.sockets[0].getsockname()[1]
        probe.close()
        await probe.wait_closed()
        client, bridge = await start_pair(DefenseSpec("none"))
        try:
            with pytest.raises(socks.SocksError) as info:
                await socks_open(client, port)
            return info.value.reply
        finally:
            await client.close()
            await bridge.close()
    assert asyncio.run(run()) == socks.CONNECTION_REFUSED


def test_bridge_unreachable():
    async def run():
        probe = await asyncio.start_server(lambda r, w: None, "127.0.0.1", 0)
        port = probe.sockets[0].getsockname()[1]
        probe.close()
        await probe.wait_closed()
        client = await ClientProxy(BridgeConfig(DefenseSpec("none"), SECRET),
                                   ("127.0.0.1", port)).start("127.0.0.1", 0)
        try:
            with pytest.raises(socks.SocksError) as info:
                await socks_open(client, 9)
            return info.value.reply
        finally:
            await client.close()
    assert asyncio.run(run()) == socks.GENERAL_FAILURE


async def raw_hello(spec, read):
    bridge = await BridgeProxy(BridgeConfig(DefenseSpec("tamaraw"), SECRET)).start("127.0.0.1", 0)
    try:
        reader, writer = await asyncio.open_connection("127.0.0.1", bridge.port)
        hello = make_hello(spec)
        writer.write(hello.encode())
        data = await asyncio.wait_for(read(reader), 5)
        writer.close()
        return hello, data
    finally:
        await bridge.close()


def test_param_mismatch_closes_silently():
    _, data = asyncio.run(raw_hello(DefenseSpec("tamaraw", TamarawConfig(L=100)),
                                    lambda r: r.read(-1)))
    assert data == b""


def test_wrong_client_secret_fails_on_proof():
    hello, data = asyncio.run(raw_hello(DefenseSpec("tamaraw"),
                                        lambda r: r.readexactly(REPLY_SIZE)))
    with pytest.raises(AuthFailure):
        finish_hello(hello, data, bytes(32))
    assert finish_hello(hello, data, SECRET)


def test_corrupted_wire_byte_tears_down_session():
    async def run():
        server, port = await echo_server()
        bridge = await BridgeProxy(BridgeConfig(DefenseSpec("none"), SECRET)).start("127.0.0.1", 0)
        flip_at = HELLO_SIZE + 3 * (CELL_SIZE + 16) + 100

        async def middlebox(reader, writer):
            up_r, up_w = await asyncio.open_connection("127.0.0.1", bridge.port)
            seen = 0

            async def upstream():
                nonlocal seen
                while data := await reader.read(65536):
                    buf = bytearray(data)
                    if seen <= flip_at < seen + len(buf):
                        buf[flip_at - seen] ^= 1
                    seen += len(buf)
                    up_w.write(bytes(buf))
                up_w.close()

            async def downstream():
                while data := await up_r.read(65536):
                    writer.write(data)
                writer.close()
            await asyncio.gather(upstream(), downstream(), return_exceptions=True)

        box = await asyncio.start_server(middlebox, "127.0.0.1", 0)
        client = await ClientProxy(BridgeConfig(DefenseSpec("none"), SECRET),
                                   ("127.0.0.1", box.sockets[0].getsockname()[1])).start("127.0.0.1", 0)
        try:
            reader, writer = await socks_open(client, port)
            for _ in range(6):
                writer.write(b"x" * 514)
                await asyncio.sleep(0.02)
            await asyncio.wait_for(bridge.sessions[0].closed.wait(), 5)
            return bridge.sessions[0].error
        finally:
            await client.close()
            await bridge.close()
            box.close()
            server.close()
    assert isinstance(asyncio.run(run()), AuthenticationFailure)


# -- replay ---------------------------------------------------------------------

def ping_pong(n_each, gap=0.05):
    return Trace(Packet(gap * i, Direction.OUT if i % 2 == 0 else Direction.IN, 514)
                 for i in range(2 * n_each))


def test_replay_empty_script():
    result = replay(Trace(), DefenseSpec("none"))
    assert result.client.records == [] and result.bridge.records == []


def test_replay_transparent():
    result = replay(ping_pong(10), DefenseSpec("none"))
    trace = result.defended_trace()
    assert sum(p.is_real for p in trace) == 20
    assert result.app_received == result.destination_received == 10 * 514


def test_replay_tamaraw_mod_L():
    result = replay(ping_pong(10), DefenseSpec("tamaraw"), seed=3)
    for capture, begin in ((result.client, DefenseState.READY), (result.bridge, DefenseState.START)):
        episodes = capture.episodes(begin)
        assert episodes
        for records in episodes:
            assert sum(1 for r in records if r.sent and r.kind != "S") % 200 == 0


def test_capture_dump_round_trip():
    result = replay(ping_pong(3), DefenseSpec("front"), seed=5)
    buf = io.StringIO()
    result.client.dump(buf, session=0)
    result.bridge.dump(buf, session=1)
    client, bridge = parse_captures(buf.getvalue())
    assert client.records == result.client.records
    assert [(m.state, m.index) for m in bridge.markers] == \
        [(m.state, m.index) for m in result.bridge.markers]
