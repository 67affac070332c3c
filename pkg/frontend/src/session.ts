import { ApiError, RatingAck, Recommendation } from "./api.js";

/**
 * Where the session stands in the next/rate protocol.
 *
 * idle          -> nothing pending, a new recommendation may be requested
 * recommending  -> next() is in flight
 * pending       -> a track is waiting for its rating
 * rating        -> rate() is in flight
 */
export type Phase = "idle" | "recommending" | "pending" | "rating";

export interface HistoryEntry {
  step: number;
  songId: string;
  title: string;
  artist: string;
  rating: number;
}

/** The slice of the HTTP client the controller needs (swappable in tests). */
export interface RatingApi {
  next(sessionId: string): Promise<Recommendation>;
  rate(sessionId: string, rating: number): Promise<RatingAck>;
}

/** Thrown on calls that would break the strict next/rate alternation. */
export class ProtocolError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ProtocolError";
  }
}

export const MIN_RATING = 1;
export const MAX_RATING = 5;

/**
 * Client-side half of the rating protocol.
 *
 * The server already rejects out-of-order calls with 409s; this mirrors the
 * same state machine locally so the UI can disable the wrong button instead
 * of surfacing an error, and so a double click during an in-flight request
 * never produces a second request.  Failed calls roll the phase back and
 * leave the history untouched.
 */
export class SessionController {
  private phase: Phase = "idle";
  private current: Recommendation | null = null;
  readonly history: HistoryEntry[] = [];
  private listeners = new Set<() => void>();

  constructor(
    private api: RatingApi,
    readonly sessionId: string,
  ) {}

  state(): Phase {
    return this.phase;
  }

  /** The track awaiting a rating, if any. */
  nowPlaying(): Recommendation | null {
    return this.current;
  }

  canRequestNext(): boolean {
    return this.phase === "idle";
  }

  canRate(): boolean {
    return this.phase === "pending";
  }

  onChange(fn: () => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  async requestNext(): Promise<Recommendation> {
    if (this.phase !== "idle") {
      throw new ProtocolError(`cannot request the next track while ${this.phase}`);
    }
    this.phase = "recommending";
    this.notify();
    try {
      const rec = await this.api.next(this.sessionId);
      this.current = rec;
      this.phase = "pending";
      return rec;
    } catch (err) {
      this.phase = this.recover(err, "idle");
      throw err;
    } finally {
      this.notify();
    }
  }

  async submitRating(rating: number): Promise<RatingAck> {
    if (this.phase !== "pending" || this.current === null) {
      throw new ProtocolError(`cannot rate while ${this.phase}`);
    }
    if (!Number.isFinite(rating) || rating < MIN_RATING || rating > MAX_RATING) {
      throw new ProtocolError(`rating must lie in [${MIN_RATING}, ${MAX_RATING}]`);
    }
    const rec = this.current;
    this.phase = "rating";
    this.notify();
    try {
      const ack = await this.api.rate(this.sessionId, rating);
      this.history.push({
        step: rec.step,
        songId: rec.song_id,
        title: rec.title,
        artist: rec.artist,
        rating,
      });
      this.current = null;
      this.phase = "idle";
      return ack;
    } catch (err) {
      this.phase = this.recover(err, "pending");
      throw err;
    } finally {
      this.notify();
    }
  }

  // A 409 means the server's view of the alternation disagrees with ours
  // (e.g. the page raced another tab on the same session).  Trust the server:
  // rating_pending means a track is owed a rating, no_pending_recommendation
  // means the next step is a fresh request.
  private recover(err: unknown, fallback: Phase): Phase {
    if (err instanceof ApiError && err.status === 409) {
      if (err.code === "rating_pending") return this.current ? "pending" : "idle";
      if (err.code === "no_pending_recommendation") {
        this.current = null;
        return "idle";
      }
    }
    return fallback;
  }
}
