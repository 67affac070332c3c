"""HTTP rating service: session protocol, posterior pages, persistence."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from banditfm.catalog import Catalog, SongFeatures
from banditfm.policies import PolicyConfig
from banditfm.service import ServiceConfig, SessionManager, create_app


class FakeClock:
    """Minute counter the tests advance by hand."""

    def __init__(self, start=1000.0):
        self.now = start

    def __call__(self):
        return self.now

    def tick(self, minutes=1.0):
        self.now += minutes


def _catalog(n=6, p=2, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    songs = tuple(
        SongFeatures(f"s{i:02d}", f"Track {i}", f"Artist {i % 3}", X[i], X[i])
        for i in range(n)
    )
    return Catalog(songs=songs, p=p)


def _client(catalog=None, clock=None, policy_config=None, data_dir=None, page_size=100):
    cfg = ServiceConfig(
        policy_config=policy_config or PolicyConfig(seed=1),
        clock=clock or FakeClock(),
        data_dir=data_dir,
        page_size=page_size,
    )
    app = create_app(catalog or _catalog(), cfg)
    return TestClient(app)


class TestBasics:
    def test_healthz(self):
        client = _client()
        res = client.get("/healthz")
        assert res.status_code == 200
        body = res.json()
        assert body["status"] == "ok"
        assert body["songs"] == 6
        assert body["sessions"] == 0

    def test_create_session(self):
        client = _client()
        res = client.post("/sessions", json={"policy": "greedy_cn", "seed": 5})
        assert res.status_code == 201
        body = res.json()
        assert body["policy"] == "greedy_cn"
        assert len(body["session_id"]) == 32

    def test_unknown_policy(self):
        client = _client()
        res = client.post("/sessions", json={"policy": "thompson"})
        assert res.status_code == 400
        assert res.json()["code"] == "unknown_policy"

    def test_missing_body_field(self):
        client = _client()
        res = client.post("/sessions", json={})
        assert res.status_code == 400
        assert res.json()["code"] == "validation_error"

    def test_unknown_session_is_404(self):
        client = _client()
        for url in ("/sessions/deadbeef/next", "/sessions/deadbeef/posterior"):
            res = client.get(url)
            assert res.status_code == 404
            assert res.json()["code"] == "unknown_session"
        res = client.post("/sessions/deadbeef/rating", json={"rating": 3.0})
        assert res.status_code == 404


class TestProtocol:
    def _session(self, client, policy="greedy_cn"):
        return client.post("/sessions", json={"policy": policy}).json()["session_id"]

    def test_next_payload(self):
        client = _client()
        sid = self._session(client)
        res = client.get(f"/sessions/{sid}/next")
        assert res.status_code == 200
        body = res.json()
        assert body["step"] == 1
        assert body["song_id"].startswith("s")
        assert body["title"].startswith("Track")
        assert body["artist"].startswith("Artist")

    def test_rating_before_next_conflicts(self):
        client = _client()
        sid = self._session(client)
        res = client.post(f"/sessions/{sid}/rating", json={"rating": 3.0})
        assert res.status_code == 409
        assert res.json()["code"] == "no_pending_recommendation"

    def test_double_next_conflicts(self):
        client = _client()
        sid = self._session(client)
        assert client.get(f"/sessions/{sid}/next").status_code == 200
        res = client.get(f"/sessions/{sid}/next")
        assert res.status_code == 409
        assert res.json()["code"] == "rating_pending"

    def test_rating_bounds(self):
        client = _client()
        sid = self._session(client)
        client.get(f"/sessions/{sid}/next")
        for bad in (0.5, 5.5, -1.0):
            res = client.post(f"/sessions/{sid}/rating", json={"rating": bad})
            assert res.status_code == 400
            assert res.json()["code"] == "invalid_rating"
        # boundary values are accepted
        res = client.post(f"/sessions/{sid}/rating", json={"rating": 1.0})
        assert res.status_code == 200

    def test_strict_alternation(self):
        """Thirty next/rate cycles: steps count up, the out-of-order calls in
        between keep conflicting, and history grows one rating at a time."""
        clock = FakeClock()
        client = _client(clock=clock)
        sid = self._session(client)
        for k in range(1, 31):
            body = client.get(f"/sessions/{sid}/next").json()
            assert body["step"] == k
            assert client.get(f"/sessions/{sid}/next").status_code == 409
            rated = client.post(
                f"/sessions/{sid}/rating", json={"rating": 1.0 + (k % 5)}
            ).json()
            assert rated["n_ratings"] == k
            assert (
                client.post(f"/sessions/{sid}/rating", json={"rating": 3.0}).status_code
                == 409
            )
            clock.tick()

    def test_rating_credits_elapsed_time(self):
        """A replayed song's stored elapsed time is the fake-clock gap."""
        clock = FakeClock(start=500.0)
        cat = _catalog(n=1, p=1)
        client = _client(catalog=cat, clock=clock)
        sid = self._session(client)
        manager = client.app.state.manager

        client.get(f"/sessions/{sid}/next")
        client.post(f"/sessions/{sid}/rating", json={"rating": 4.0})
        clock.tick(7.5)
        client.get(f"/sessions/{sid}/next")
        client.post(f"/sessions/{sid}/rating", json={"rating": 4.0})

        hist = manager.sessions[sid].state.history
        assert hist[0].t_raw == 43200.0  # first spin: never played before
        assert hist[1].t_raw == 7.5


class TestPosterior:
    def test_non_bayes_policy_has_no_posterior(self):
        client = _client()
        sid = client.post("/sessions", json={"policy": "random"}).json()["session_id"]
        res = client.get(f"/sessions/{sid}/posterior")
        assert res.status_code == 409
        assert res.json()["code"] == "no_posterior"

    def test_fresh_variational_posterior(self):
        """Before any ratings the posterior page shows near-zero means and
        non-negative sds for every song."""
        client = _client()
        sid = client.post("/sessions", json={"policy": "bayes_ucb_cn_v"}).json()[
            "session_id"
        ]
        res = client.get(f"/sessions/{sid}/posterior")
        assert res.status_code == 200
        body = res.json()
        assert body["total"] == 6
        assert len(body["items"]) == 6
        assert body["alpha"] == 0.5
        for item in body["items"]:
            assert abs(item["mean"]) < 1e-6
            assert item["sd"] >= 0.0
        assert body["mean_sd"] >= 0.0

    def test_pages_partition_catalog(self):
        client = _client(page_size=4)
        sid = client.post("/sessions", json={"policy": "bayes_ucb_cn_v"}).json()[
            "session_id"
        ]
        p0 = client.get(f"/sessions/{sid}/posterior", params={"page": 0}).json()
        p1 = client.get(f"/sessions/{sid}/posterior", params={"page": 1}).json()
        p2 = client.get(f"/sessions/{sid}/posterior", params={"page": 2}).json()
        ids = [it["song_id"] for it in p0["items"] + p1["items"] + p2["items"]]
        assert ids == [f"s{i:02d}" for i in range(6)]
        assert len(p0["items"]) == 4 and len(p1["items"]) == 2 and len(p2["items"]) == 0

    def test_invalid_page(self):
        client = _client()
        sid = client.post("/sessions", json={"policy": "bayes_ucb_cn_v"}).json()[
            "session_id"
        ]
        res = client.get(f"/sessions/{sid}/posterior", params={"page": -1})
        assert res.status_code == 400
        assert res.json()["code"] == "invalid_page"

    def test_posterior_tracks_ratings(self):
        """Repeated five-star ratings of the only song, spaced a month apart,
        pull its posterior mean well above the fresh-session zero when the
        page is requested after a comparable gap."""
        clock = FakeClock()
        client = _client(catalog=_catalog(n=1, p=1), clock=clock)
        sid = client.post("/sessions", json={"policy": "bayes_ucb_cn_v"}).json()[
            "session_id"
        ]
        for _ in range(4):
            client.get(f"/sessions/{sid}/next")
            client.post(f"/sessions/{sid}/rating", json={"rating": 5.0})
            clock.tick(43200.0)
        post = client.get(f"/sessions/{sid}/posterior").json()
        assert post["items"][0]["mean"] > 1.0

    def test_mcmc_posterior_page(self):
        cfg = PolicyConfig(seed=2, mcmc_n_samples=100, mcmc_burn_in=50, n_samples=100)
        client = _client(policy_config=cfg)
        sid = client.post("/sessions", json={"policy": "bayes_ucb_cn"}).json()[
            "session_id"
        ]
        res = client.get(f"/sessions/{sid}/posterior")
        assert res.status_code == 200
        for item in res.json()["items"]:
            assert item["sd"] >= 0.0
            assert np.isfinite(item["quantile"])


class TestCatalogEndpoint:
    def test_paging(self):
        client = _client(page_size=4)
        p0 = client.get("/catalog").json()
        assert p0["total"] == 6
        assert [it["song_id"] for it in p0["items"]] == [f"s{i:02d}" for i in range(4)]
        p1 = client.get("/catalog", params={"page": 1}).json()
        assert [it["song_id"] for it in p1["items"]] == ["s04", "s05"]
        assert p1["items"][0]["title"] == "Track 4"

    def test_page_size_override(self):
        client = _client()
        res = client.get("/catalog", params={"page_size": 2}).json()
        assert len(res["items"]) == 2

    def test_invalid_page(self):
        client = _client()
        assert client.get("/catalog", params={"page": -3}).status_code == 400


class TestPersistence:
    def test_snapshot_round_trip(self, tmp_path):
        """Kill the service after some ratings; a new manager on the same data
        directory replays the snapshot and picks the same next song."""
        clock = FakeClock()
        cat = _catalog()
        policy_cfg = PolicyConfig(seed=7)
        cfg = ServiceConfig(policy_config=policy_cfg, clock=clock, data_dir=tmp_path)
        client = TestClient(create_app(cat, cfg))
        sid = client.post("/sessions", json={"policy": "greedy_cn"}).json()["session_id"]
        for k in range(4):
            client.get(f"/sessions/{sid}/next")
            client.post(f"/sessions/{sid}/rating", json={"rating": 2.0 + 0.5 * k})
            clock.tick()

        survivor = client.get(f"/sessions/{sid}/next").json()

        # fresh process: same data dir, same clock value
        manager2 = SessionManager(
            cat, ServiceConfig(policy_config=policy_cfg, clock=clock, data_dir=tmp_path)
        )
        assert sid in manager2.sessions
        sess = manager2.sessions[sid]
        assert len(sess.state.history) == 4
        # the pre-restart pending pick was snapshotted too
        assert sess.pending == survivor["song_id"]
        # clearing it and reselecting yields the same deterministic choice
        sess.pending = None
        redo = manager2.next_recommendation(sid)
        assert redo["song_id"] == survivor["song_id"]

    def test_random_policy_rng_survives_restart(self, tmp_path):
        """The random policy's generator state is snapshotted, so a restarted
        service continues the same pick sequence instead of repeating it."""
        clock = FakeClock()
        cat = _catalog()
        cfg = ServiceConfig(policy_config=PolicyConfig(seed=3), clock=clock, data_dir=tmp_path)
        client = TestClient(create_app(cat, cfg))
        sid = client.post("/sessions", json={"policy": "random"}).json()["session_id"]
        seen = []
        for _ in range(3):
            seen.append(client.get(f"/sessions/{sid}/next").json()["song_id"])
            client.post(f"/sessions/{sid}/rating", json={"rating": 3.0})
            clock.tick()

        manager2 = SessionManager(
            cat, ServiceConfig(policy_config=PolicyConfig(seed=3), clock=clock, data_dir=tmp_path)
        )
        continued = [manager2.next_recommendation(sid)["song_id"]]
        manager2.submit_rating(sid, 3.0)
        continued.append(manager2.next_recommendation(sid)["song_id"])

        # replaying from scratch with the same seed gives the full sequence;
        # the restart must continue it, not restart it
        cfg3 = ServiceConfig(policy_config=PolicyConfig(seed=3), clock=clock)
        manager3 = SessionManager(cat, cfg3)
        sid3 = manager3.create_session("random", seed=0).session_id
        replay = []
        for _ in range(5):
            replay.append(manager3.next_recommendation(sid3)["song_id"])
            manager3.submit_rating(sid3, 3.0)
        assert seen + continued == replay


class TestStaticUi:
    def test_static_mount_serves_files_and_keeps_api_routes(self, tmp_path):
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<!doctype html><title>player</title>")
        (ui / "app.js").write_text("export {};")
        client = TestClient(create_app(_catalog(), ServiceConfig(), static_dir=ui))

        assert client.get("/healthz").json()["status"] == "ok"
        page = client.get("/")
        assert page.status_code == 200
        assert "player" in page.text
        assert client.get("/app.js").status_code == 200

    def test_no_static_dir_means_no_root_route(self):
        client = TestClient(create_app(_catalog(), ServiceConfig()))
        assert client.get("/").status_code == 404
