import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from hint.engine import full_trajectory, replay_transcript
from hint.service import create_app
from hint.textcond import ToyTextEncoder


@pytest.fixture(scope="module")
def client(fast_ckpts):
    app = create_app(checkpoint=fast_ckpts["diffusion"])
    with TestClient(app) as c:
        yield c


def start_msg(**kw):
    msg = {"type": "start", "agents": 2, "text": "walk together", "seed": 0}
    msg.update(kw)
    return msg


class TestHealth:
    def test_reports_model_identity(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"
        assert body["layout"] == "interhuman-style:8"
        assert body["h"] == 4 and body["k"] == 16
        assert set(body["checksums"]) == {"params", "vae_freeze"}
        assert body["active_sessions"] == 0


class TestLegalSession:
    def test_scripted_flow(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(start_msg())
            opened = ws.receive_json()
            assert opened["type"] == "session"
            assert opened["agents"] == ["agent-0", "agent-1"]
            assert opened["h"] == 4 and opened["k"] == 16
            assert opened["total_frames"] is None

            ws.send_json({"type": "text", "text": "now circle each other"})
            ack = ws.receive_json()
            assert ack == {"type": "ack", "of": "text", "window_index": 0, "scope": "global"}

            seen = []
            for _ in range(3):
                ws.send_json({"type": "step"})
                frames = ws.receive_json()
                assert frames["type"] == "frames"
                seen.append(frames["window_index"])
                for agent in frames["agents"]:
                    joints = np.asarray(agent["joints"])
                    assert joints.shape == (16, 8, 3)
                    assert "features" not in agent
                ack = ws.receive_json()
                assert ack == {"type": "ack", "of": "step", "windows": 1}

            ws.send_json({"type": "add_agent", "text": "join them"})
            ack = ws.receive_json()
            assert ack["type"] == "ack" and ack["of"] == "add_agent"
            assert ack["id"] == "agent-2" and ack["window_index"] == 3

            ws.send_json({"type": "step"})
            frames = ws.receive_json()
            assert [a["id"] for a in frames["agents"]] == ["agent-0", "agent-1", "agent-2"]
            seen.append(frames["window_index"])
            ws.receive_json()

            assert seen == [0, 1, 2, 3]  # gap-free, strictly increasing

            ws.send_json({"type": "stop"})
            ack = ws.receive_json()
            assert ack["type"] == "ack" and ack["of"] == "stop"
            events = ack["transcript"]
            assert events[0]["event"] == "init"
            assert sum(1 for e in events if e["event"] == "step") == 4

    def test_multi_window_step(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(start_msg(seed=3))
            ws.receive_json()
            ws.send_json({"type": "step", "windows": 2})
            first = ws.receive_json()
            second = ws.receive_json()
            ack = ws.receive_json()
            assert (first["window_index"], second["window_index"]) == (0, 1)
            assert ack == {"type": "ack", "of": "step", "windows": 2}

    def test_layout_alias_accepted(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(start_msg(layout="synthetic-8"))
            assert ws.receive_json()["type"] == "session"
        with client.websocket_connect("/ws") as ws:
            ws.send_json(start_msg(layout="interhuman-style:8"))
            assert ws.receive_json()["type"] == "session"

    def test_full_features_round_trip(self, client, fast_models):
        # streamed features replay bitwise through the transcript
        with client.websocket_connect("/ws") as ws:
            ws.send_json(start_msg(seed=11, full_features=True))
            ws.receive_json()
            streamed = {}
            for _ in range(2):
                ws.send_json({"type": "step"})
                frames = ws.receive_json()
                for agent in frames["agents"]:
                    feats = np.asarray(agent["features"], dtype=np.float32)
                    assert feats.shape == (16, fast_models.layout.d)
                    joints = np.asarray(agent["joints"])
                    assert np.allclose(fast_models.layout.positions(feats), joints, atol=1e-6)
                    streamed.setdefault(agent["id"], []).append(feats)
                ws.receive_json()
            ws.send_json({"type": "stop"})
            events = ws.receive_json()["transcript"]

        replayed = replay_transcript(
            events, fast_models.vae, fast_models.denoiser, fast_models.schedule,
            fast_models.normalizer, fast_models.layout, ToyTextEncoder(),
        )
        for aid, blocks in streamed.items():
            assert np.array_equal(full_trajectory(replayed, aid), np.concatenate(blocks))


class TestExhaustion:
    def test_partial_step_then_error(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(start_msg(total_frames=40))  # 3 windows of 16
            opened = ws.receive_json()
            assert opened["total_frames"] == 40
            ws.send_json({"type": "step", "windows": 5})
            got = [ws.receive_json() for _ in range(4)]
            assert [m["type"] for m in got[:3]] == ["frames"] * 3
            assert got[3]["type"] == "error" and got[3]["code"] == "exhausted"
            assert "3 of 5" in got[3]["message"]
            # the session survives; further steps error but do not kill it
            ws.send_json({"type": "step"})
            err = ws.receive_json()
            assert err["type"] == "error" and err["code"] == "exhausted"
            ws.send_json({"type": "stop"})
            assert ws.receive_json()["of"] == "stop"


class TestErrors:
    @pytest.mark.parametrize(
        "payload,code",
        [
            ("{not json", "bad_json"),
            ("[1, 2, 3]", "bad_json"),
            (json.dumps({"no": "type"}), "bad_json"),
            (json.dumps({"type": 7}), "bad_json"),
            (json.dumps({"type": "teleport"}), "unknown_type"),
            (json.dumps({"type": "step"}), "protocol"),
            (json.dumps({"type": "text", "text": "hi"}), "protocol"),
            (json.dumps({"type": "stop"}), "protocol"),
            (json.dumps({"type": "add_agent"}), "protocol"),
        ],
    )
    def test_pre_start_errors(self, client, payload, code):
        with client.websocket_connect("/ws") as ws:
            ws.send_text(payload)
            reply = ws.receive_json()
            assert reply["type"] == "error" and reply["code"] == code

    @pytest.mark.parametrize(
        "overrides,field",
        [
            ({"agents": 0}, "agents"),
            ({"agents": 99}, "agents"),
            ({"agents": "two"}, "agents"),
            ({"agents": True}, "agents"),
            ({"seed": -1}, "seed"),
            ({"total_frames": 0}, "total_frames"),
            ({"layout": "interx-style:8"}, "layout"),
            ({"layout": "alien-skeleton"}, "layout"),
            ({"text": "x" * 2001}, "text"),
        ],
    )
    def test_bad_start(self, client, overrides, field):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(start_msg(**overrides))
            reply = ws.receive_json()
            assert reply["type"] == "error" and reply["code"] == "bad_request"

    def test_in_session_errors_leave_session_usable(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(start_msg())
            ws.receive_json()
            bad = [
                start_msg(),  # double start
                {"type": "step", "windows": 0},
                {"type": "step", "windows": 65},
                {"type": "text", "text": "x", "scope": "nobody"},
                {"type": "text", "text": "x", "scope": "agent"},  # missing agent field
                {"type": "text", "text": "x", "scope": "agent", "agent": "ghost"},
                {"type": "add_agent", "id": "agent-0"},  # collision
                {"type": "add_agent", "pose": [["a", "b"]]},
                {"type": "text"},  # missing text
            ]
            for msg in bad:
                ws.send_json(msg)
                reply = ws.receive_json()
                assert reply["type"] == "error", msg
            ws.send_json({"type": "step"})
            assert ws.receive_json()["type"] == "frames"
            ws.receive_json()

    def test_agent_scoped_text_ack(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(start_msg())
            ws.receive_json()
            ws.send_json({"type": "text", "text": "turn left", "scope": "agent", "agent": "agent-1"})
            ack = ws.receive_json()
            assert ack["of"] == "text" and ack["scope"] == "agent-1"

    def test_messages_after_stop(self, client):
        with client.websocket_connect("/ws") as ws:
            ws.send_json(start_msg())
            ws.receive_json()
            ws.send_json({"type": "stop"})
            ws.receive_json()
            for msg in ({"type": "step"}, {"type": "text", "text": "x"}, {"type": "stop"}):
                ws.send_json(msg)
                reply = ws.receive_json()
                assert reply["type"] == "error" and reply["code"] == "session_closed"

    def test_fuzz_sample_never_crashes(self, client):
        rng = np.random.default_rng(0)
        junk = [
            "", "null", "true", "42", '"step"', "{}", '{"type": null}',
            '{"type": ""}', '{"type": "start"}', '{"type": "start", "agents": null}',
            '{"type": "step", "windows": -1}', '{"type": "frames"}', '{"type": "ack"}',
        ]
        with client.websocket_connect("/ws") as ws:
            for _ in range(100):
                pick = rng.integers(0, len(junk) + 1)
                if pick == len(junk):
                    payload = "".join(chr(rng.integers(32, 127)) for _ in range(20))
                else:
                    payload = junk[pick]
                ws.send_text(payload)
                reply = ws.receive_json()
                assert reply["type"] == "error"
            ws.send_json(start_msg())
            assert ws.receive_json()["type"] == "session"


class TestSessionLimit:
    def test_capacity_enforced(self, fast_ckpts):
        app = create_app(checkpoint=fast_ckpts["diffusion"], max_sessions=1)
        with TestClient(app) as client:
            with client.websocket_connect("/ws") as first:
                first.send_json(start_msg())
                assert first.receive_json()["type"] == "session"
                assert client.get("/health").json()["active_sessions"] == 1
                with client.websocket_connect("/ws") as second:
                    second.send_json(start_msg())
                    reply = second.receive_json()
                    assert reply["type"] == "error" and reply["code"] == "bad_request"
                    assert "limit" in reply["message"]
            assert client.get("/health").json()["active_sessions"] == 0

    def test_session_models_passthrough(self, fast_models):
        app = create_app(checkpoint=fast_models)
        with TestClient(app) as client:
            assert client.get("/health").json()["status"] == "ok"
