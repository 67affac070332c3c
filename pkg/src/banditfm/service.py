"""HTTP rating service: sessions, recommendations, ratings, posteriors.

Each session wraps one policy.  The protocol is strictly alternating:
every GET next must be followed by exactly one POST rating before the
next recommendation is served.  Sessions are snapshotted to JSON after
every state change and rebuilt deterministically on restart (models are
refit from the stored history with the same derived seeds).
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .catalog import Catalog
from .novelty import NoveltyKnots, time_basis, time_basis_matrix
from .policies import (
    POLICY_KINDS,
    LinUcbModel,
    PolicyConfig,
    PolicyState,
    _crn_quantiles,
    _fit_backend,
    _linucb_features,
    elapsed_minutes,
    greedy_fit,
    make_policy,
    ucb_alpha,
)
from .variational import predict_u_batch

MIN_RATING, MAX_RATING = 1.0, 5.0


def wall_clock_minutes() -> float:
    return time.time() / 60.0


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class Session:
    session_id: str
    state: PolicyState
    seed: int
    created_at: float
    pending: str | None = None  # song_id awaiting a rating
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass(frozen=True)
class ServiceConfig:
    policy_config: PolicyConfig = field(default_factory=PolicyConfig)
    data_dir: Path | None = None
    clock: Callable[[], float] = wall_clock_minutes
    page_size: int = 100


class SessionManager:
    """Session lifecycle, selection/rating protocol, and persistence."""

    def __init__(self, catalog: Catalog, config: ServiceConfig = ServiceConfig()) -> None:
        self.catalog = catalog
        self.config = config
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        if config.data_dir is not None:
            config.data_dir.mkdir(parents=True, exist_ok=True)
            for snap in sorted(config.data_dir.glob("session-*.json")):
                sess = self._load_snapshot(snap)
                self.sessions[sess.session_id] = sess

    # -- persistence --------------------------------------------------------

    def _snapshot_path(self, session_id: str) -> Path | None:
        if self.config.data_dir is None:
            return None
        return self.config.data_dir / f"session-{session_id}.json"

    def _save_snapshot(self, sess: Session) -> None:
        path = self._snapshot_path(sess.session_id)
        if path is None:
            return
        st = sess.state
        payload = {
            "session_id": sess.session_id,
            "policy": st.kind,
            "seed": sess.seed,
            "created_at": sess.created_at,
            "pending": sess.pending,
            "history": [
                {
                    "song_id": rec.song_id,
                    "t_raw": rec.t_raw,
                    "rating": rec.rating,
                    "at": rec.at,
                }
                for rec in st.history
            ],
            "last_played": dict(st.last_played),
            "rng_state": _jsonable(st.rng.bit_generator.state),
        }
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload))
        tmp.replace(path)

    def _load_snapshot(self, path: Path) -> Session:
        payload = json.loads(path.read_text())
        kind = payload["policy"]
        seed = int(payload["seed"])
        state = make_policy(kind, self.catalog, self._policy_config(seed))
        knots = state.config.knots
        for row in payload["history"]:
            song = self.catalog.by_id(row["song_id"])
            from .history import HistoryRecord

            state.history.append(
                HistoryRecord(
                    x=song.reduced,
                    t_raw=float(row["t_raw"]),
                    basis=time_basis(float(row["t_raw"]), knots),
                    rating=float(row["rating"]),
                    at=float(row["at"]),
                    song_id=row["song_id"],
                )
            )
        state.last_played = {k: float(v) for k, v in payload["last_played"].items()}
        if payload.get("rng_state") is not None:
            state.rng.bit_generator.state = _un_jsonable(payload["rng_state"])
        self._refit_from_history(state)
        return Session(
            session_id=payload["session_id"],
            state=state,
            seed=seed,
            created_at=float(payload["created_at"]),
            pending=payload.get("pending"),
        )

    def _refit_from_history(self, state: PolicyState) -> None:
        if not state.history:
            return
        if state.kind == "greedy_cn":
            state.model = greedy_fit(state.history)
        elif state.kind in ("linucb_c", "linucb_cn"):
            X = np.stack([rec.x for rec in state.history])
            t = np.asarray([rec.t_raw for rec in state.history])
            Z = _linucb_features(X, t, state.kind)
            d = Z.shape[1]
            A = state.config.linucb_lambda * np.eye(d) + Z.T @ Z
            b = Z.T @ np.asarray([rec.rating for rec in state.history])
            state.model = LinUcbModel(A=A, b=b)
        elif state.kind in ("bayes_ucb_cn", "bayes_ucb_cn_v"):
            _fit_backend(state)

    # -- protocol -----------------------------------------------------------

    def _policy_config(self, seed: int) -> PolicyConfig:
        from dataclasses import replace

        return replace(self.config.policy_config, seed=seed)

    def create_session(self, policy: str, seed: int = 0) -> Session:
        if policy not in POLICY_KINDS:
            raise ApiError(400, "unknown_policy", f"policy must be one of {list(POLICY_KINDS)}")
        state = make_policy(policy, self.catalog, self._policy_config(seed))
        sess = Session(
            session_id=uuid.uuid4().hex,
            state=state,
            seed=seed,
            created_at=self.config.clock(),
        )
        with self._registry_lock:
            self.sessions[sess.session_id] = sess
        self._save_snapshot(sess)
        return sess

    def get_session(self, session_id: str) -> Session:
        sess = self.sessions.get(session_id)
        if sess is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return sess

    def next_recommendation(self, session_id: str) -> dict:
        sess = self.get_session(session_id)
        with sess.lock:
            if sess.pending is not None:
                raise ApiError(
                    409,
                    "rating_pending",
                    "previous recommendation has not been rated yet",
                )
            now = self.config.clock()
            report = sess.state.select(now)
            sess.pending = report.song_id
            self._save_snapshot(sess)
            song = self.catalog.by_id(report.song_id)
            return {
                "session_id": sess.session_id,
                "step": len(sess.state.history) + 1,
                "song_id": song.song_id,
                "title": song.title,
                "artist": song.artist,
                "alpha": report.alpha,
            }

    def submit_rating(self, session_id: str, rating: float) -> dict:
        sess = self.get_session(session_id)
        if not np.isfinite(rating) or not MIN_RATING <= rating <= MAX_RATING:
            raise ApiError(
                400,
                "invalid_rating",
                f"rating must lie in [{MIN_RATING:g}, {MAX_RATING:g}]",
            )
        with sess.lock:
            if sess.pending is None:
                raise ApiError(
                    409,
                    "no_pending_recommendation",
                    "request a recommendation before submitting a rating",
                )
            now = self.config.clock()
            sess.state.record(sess.pending, float(rating), now)
            song_id = sess.pending
            sess.pending = None
            self._save_snapshot(sess)
            return {
                "session_id": sess.session_id,
                "song_id": song_id,
                "n_ratings": len(sess.state.history),
            }

    def get_posterior(self, session_id: str, page: int, page_size: int | None = None) -> dict:
        sess = self.get_session(session_id)
        if sess.state.kind not in ("bayes_ucb_cn", "bayes_ucb_cn_v"):
            raise ApiError(
                409, "no_posterior", f"policy {sess.state.kind!r} does not expose a posterior"
            )
        page_size = page_size or self.config.page_size
        if page < 0 or page_size < 1:
            raise ApiError(400, "invalid_page", "page must be >= 0 and page_size >= 1")
        with sess.lock:
            state = sess.state
            if state.model is None:
                _fit_backend(state)
            now = self.config.clock()
            cfg = state.config
            step = len(state.history) + 1
            alpha = ucb_alpha(step)
            t_vec = elapsed_minutes(state.last_played, self.catalog, now, cfg.never_played_minutes)
            X = self.catalog.feature_matrix
            if state.kind == "bayes_ucb_cn":
                from .exact import posterior_u_matrix

                U = posterior_u_matrix(state.model, X, t_vec)  # type: ignore[arg-type]
                means = U.mean(axis=0)
                sds = U.std(axis=0, ddof=1)
                quants = np.quantile(U, alpha, axis=0, method="linear")
            else:
                B = time_basis_matrix(t_vec, cfg.knots)
                m1, v1, m2, v2 = predict_u_batch(state.model, X, B)  # type: ignore[arg-type]
                means = m1 * m2
                sds = np.sqrt(m1**2 * v2 + m2**2 * v1 + v1 * v2)
                quants = _crn_quantiles(
                    m1, v1, m2, v2, alpha, cfg.n_samples, (cfg.seed, 2, step)
                )
            lo = page * page_size
            hi = min(lo + page_size, len(self.catalog))
            items = [
                {
                    "song_id": self.catalog.songs[i].song_id,
                    "mean": float(means[i]),
                    "sd": float(sds[i]),
                    "quantile": float(quants[i]),
                }
                for i in range(lo, hi)
            ]
            return {
                "session_id": sess.session_id,
                "page": page,
                "page_size": page_size,
                "total": len(self.catalog),
                "alpha": alpha,
                "mean_sd": float(np.mean(sds)),
                "items": items,
            }

    def catalog_page(self, page: int, page_size: int | None = None) -> dict:
        page_size = page_size or self.config.page_size
        if page < 0 or page_size < 1:
            raise ApiError(400, "invalid_page", "page must be >= 0 and page_size >= 1")
        lo = page * page_size
        hi = min(lo + page_size, len(self.catalog))
        items = [
            {"song_id": s.song_id, "title": s.title, "artist": s.artist}
            for s in self.catalog.songs[lo:hi]
        ]
        return {"page": page, "page_size": page_size, "total": len(self.catalog), "items": items}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    return obj


def _un_jsonable(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.asarray(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _un_jsonable(v) for k, v in obj.items()}
    return obj


class CreateSessionBody(BaseModel):
    policy: str
    seed: int = 0


class RatingBody(BaseModel):
    rating: float


def create_app(
    catalog: Catalog,
    config: ServiceConfig = ServiceConfig(),
    static_dir: str | Path | None = None,
) -> FastAPI:
    """Wire a SessionManager into a FastAPI app with {code, message} errors.

    ``static_dir`` mounts a directory of web UI files at ``/`` (API routes
    keep precedence), so the browser client can be served same-origin.
    """
    manager = SessionManager(catalog, config)
    app = FastAPI(title="banditfm rating service")
    app.state.manager = manager

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400, content={"code": "validation_error", "message": str(exc.errors())}
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "songs": len(manager.catalog), "sessions": len(manager.sessions)}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        sess = manager.create_session(body.policy, body.seed)
        return {
            "session_id": sess.session_id,
            "policy": sess.state.kind,
            "created_at": sess.created_at,
        }

    @app.get("/sessions/{session_id}/next")
    def next_recommendation(session_id: str):
        return manager.next_recommendation(session_id)

    @app.post("/sessions/{session_id}/rating")
    def submit_rating(session_id: str, body: RatingBody):
        return manager.submit_rating(session_id, body.rating)

    @app.get("/sessions/{session_id}/posterior")
    def get_posterior(session_id: str, page: int = 0, page_size: int | None = None):
        return manager.get_posterior(session_id, page, page_size)

    @app.get("/catalog")
    def catalog_page(page: int = 0, page_size: int | None = None):
        return manager.catalog_page(page, page_size)

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
