import threading

import numpy as np
import pytest

from hdcos.runtime import (FRAME_HEADER, PROTOCOL_TAGS, TAG_FIN, CostMeter, Frame, PartyContext, ProtocolAbort,
                           ProtocolDesyncError, TcpEndpoint, TransportError, drive, inproc_pair, parse_address,
                           run_party, run_two_party)

TRANSPORTS = ["lockstep", "inproc", "tcp"]


def ping(ctx, inp):
    """Two exchanges: send own value, then send the sum of both."""
    peer = yield from ctx.exchange("raw", [inp])
    total = int(peer[0]) + inp
    peer2 = yield from ctx.exchange("reveal", [total, ctx.party])
    return total, peer2.tolist()


class TestFrames:
    def test_header_is_round_tag_length(self):
        raw = Frame(7, PROTOCOL_TAGS["beaver_open"], b"abcdefgh").encode()
        assert FRAME_HEADER.size == 10
        assert raw[:10] == (7).to_bytes(4, "little") + (1).to_bytes(2, "little") + (8).to_bytes(4, "little")
        assert Frame.decode(raw) == Frame(7, 1, b"abcdefgh")

    def test_declared_length_checked(self):
        with pytest.raises(TransportError):
            Frame.decode(Frame(0, 0, b"12345678").encode()[:-1])

    def test_parse_address(self):
        assert parse_address("10.0.0.1:9000") == ("10.0.0.1", 9000)
        assert parse_address(":9000") == ("127.0.0.1", 9000)


class TestMeter:
    @pytest.mark.parametrize("transport", TRANSPORTS)
    def test_round_and_byte_counts(self, transport):
        res = run_two_party(ping, (3, 4), transport=transport)
        assert res.outputs[0] == (7, [7, 1]) and res.outputs[1] == (7, [7, 0])
        for m in res.meters:
            assert m.online_rounds == 2
            assert m.bytes_sent == 8 + 16
            assert m.by_protocol == {"raw": [1, 8], "reveal": [1, 16]}

    def test_sections(self):
        def proto(ctx, _):
            with ctx.section("outer"):
                yield from ctx.exchange("raw", [1, 2])
                with ctx.section("inner"):
                    yield from ctx.exchange("raw", [3])
            return None

        m = run_two_party(proto, transport="lockstep").meters[0]
        assert m.by_section == {"outer": {"rounds": 2, "bytes": 24, "mults": 0},
                                "inner": {"rounds": 1, "bytes": 8, "mults": 0}}

    def test_meter_equality_uses_summary(self):
        a, b = CostMeter(), CostMeter()
        a.record_exchange("raw", 8)
        assert a != b
        b.record_exchange("raw", 8)
        assert a == b

    def test_empty_payload_still_counts_a_round(self):
        def proto(ctx, _):
            yield from ctx.exchange("raw", [])
            return None

        m = run_two_party(proto, transport="inproc").meters[1]
        assert (m.online_rounds, m.bytes_sent) == (1, 0)


class TestTransportsAgree:
    def test_identical_outputs_and_transcripts(self):
        def proto(ctx, x):
            mask = ctx.rng.integers(0, 2**63, size=3, dtype=np.uint64)
            peer = yield from ctx.exchange("reshare", mask + np.uint64(x))
            return (peer * np.uint64(3)).tolist()

        runs = [run_two_party(proto, (5, 9), transport=t, seed=11, record=True) for t in TRANSPORTS]
        for r in runs[1:]:
            assert r.outputs == runs[0].outputs
            assert r.meters == runs[0].meters
            assert [(e.party, e.round_index, e.protocol, e.payload.tolist()) for e in r.transcript] == \
                   [(e.party, e.round_index, e.protocol, e.payload.tolist()) for e in runs[0].transcript]


class TestFailures:
    @pytest.mark.parametrize("transport", TRANSPORTS)
    def test_different_round_counts_desync(self, transport):
        def proto(ctx, _):
            yield from ctx.exchange("raw", [1])
            if ctx.party == 0:
                yield from ctx.exchange("raw", [2])
            return None

        with pytest.raises(ProtocolDesyncError):
            run_two_party(proto, transport=transport, timeout=5)

    @pytest.mark.parametrize("transport", TRANSPORTS)
    def test_tag_mismatch_desync(self, transport):
        def proto(ctx, _):
            yield from ctx.exchange("raw" if ctx.party == 0 else "reveal", [1])
            return None

        with pytest.raises(ProtocolDesyncError):
            run_two_party(proto, transport=transport, timeout=5)

    def test_local_error_aborts_peer(self):
        def proto(ctx, _):
            yield from ctx.exchange("raw", [1])
            if ctx.party == 1:
                raise ValueError("boom")
            yield from ctx.exchange("raw", [2])
            return None

        with pytest.raises(ValueError, match="boom"):
            run_two_party(proto, transport="inproc", timeout=5)

    def test_abort_surfaces_on_the_peer(self):
        e0, e1 = inproc_pair(timeout=5)
        errors = {}

        def party(p, ep):
            def proto(ctx, _):
                yield from ctx.exchange("raw", [p])
                if p == 1:
                    raise RuntimeError("party 1 gives up")
                yield from ctx.exchange("raw", [p])
            try:
                run_party(proto, p, None, None, ep)
            except Exception as exc:  # noqa: BLE001
                errors[p] = exc

        ts = [threading.Thread(target=party, args=(p, ep)) for p, ep in ((0, e0), (1, e1))]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
        assert isinstance(errors[0], ProtocolAbort)
        assert isinstance(errors[1], RuntimeError)

    def test_silent_peer_times_out(self):
        e0, _ = inproc_pair(timeout=0.2)

        def proto(ctx, _):
            yield from ctx.exchange("raw", [1])
            return None

        with pytest.raises(TransportError, match="no frame"):
            drive(proto(PartyContext(0), None), e0, 0)

    def test_connect_to_nothing_fails(self):
        with pytest.raises(TransportError):
            TcpEndpoint.connect("127.0.0.1", 1, timeout=0.3)

    def test_fin_is_not_a_round(self):
        e0, e1 = inproc_pair(timeout=5)
        results = {}

        def proto(ctx, _):
            yield from ctx.exchange("raw", [ctx.party])
            return ctx.round_index

        def party(p, ep):
            results[p] = run_party(proto, p, None, None, ep)

        ts = [threading.Thread(target=party, args=(p, ep)) for p, ep in ((0, e0), (1, e1))]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
        out, meter, _ = results[0]
        assert out == 1 and meter.online_rounds == 1
        assert TAG_FIN == 0xFFFF


def test_large_simultaneous_exchange_over_tcp():
    # both parties push 16 MB in the same round; blocking sends would deadlock here
    n = 2_000_000

    def proto(ctx, _):
        peer = yield from ctx.exchange("raw", np.full(n, ctx.party + 1, dtype=np.uint64))
        return int(peer[0]), peer.size

    res = run_two_party(proto, transport="tcp", timeout=30)
    assert res.outputs == ((2, n), (1, n))
    assert res.meters[0].bytes_sent == 8 * n
