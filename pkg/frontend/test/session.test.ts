import { describe, expect, it } from "vitest";

import { ApiError, RatingAck, Recommendation } from "../src/api.js";
import { ProtocolError, RatingApi, SessionController } from "../src/session.js";

function rec(step: number): Recommendation {
  return {
    session_id: "s",
    step,
    song_id: `song${step}`,
    title: `Track ${step}`,
    artist: "Artist",
    alpha: 1 - 1 / (step + 1),
  };
}

/** Scriptable fake server that counts calls and can hold requests open. */
class FakeApi implements RatingApi {
  nextCalls = 0;
  rateCalls = 0;
  failNextWith: unknown = null;
  failRateWith: unknown = null;
  private step = 1;
  private release: (() => void) | null = null;

  hold(): void {
    // the next rate() call stays in flight until releaseHeld()
    this.release = () => {};
  }

  releaseHeld(): void {
    const r = this.pendingResolve;
    this.pendingResolve = null;
    this.release = null;
    if (r) r();
  }

  private pendingResolve: (() => void) | null = null;

  async next(_sessionId: string): Promise<Recommendation> {
    this.nextCalls++;
    if (this.failNextWith) {
      const err = this.failNextWith;
      this.failNextWith = null;
      throw err;
    }
    return rec(this.step);
  }

  async rate(_sessionId: string, _rating: number): Promise<RatingAck> {
    this.rateCalls++;
    if (this.failRateWith) {
      const err = this.failRateWith;
      this.failRateWith = null;
      throw err;
    }
    if (this.release) {
      await new Promise<void>((resolve) => {
        this.pendingResolve = resolve;
      });
    }
    const ack = { session_id: "s", song_id: `song${this.step}`, n_ratings: this.step };
    this.step++;
    return ack;
  }
}

describe("alternation", () => {
  it("runs next/rate cycles and records history in order", async () => {
    const api = new FakeApi();
    const c = new SessionController(api, "s");
    for (let k = 1; k <= 5; k++) {
      expect(c.canRequestNext()).toBe(true);
      const r = await c.requestNext();
      expect(r.step).toBe(k);
      expect(c.state()).toBe("pending");
      await c.submitRating(3);
      expect(c.state()).toBe("idle");
    }
    expect(c.history.map((h) => h.step)).toEqual([1, 2, 3, 4, 5]);
    expect(api.nextCalls).toBe(5);
    expect(api.rateCalls).toBe(5);
  });

  it("refuses next while a rating is owed, without calling the server", async () => {
    const api = new FakeApi();
    const c = new SessionController(api, "s");
    await c.requestNext();
    await expect(c.requestNext()).rejects.toBeInstanceOf(ProtocolError);
    expect(api.nextCalls).toBe(1);
  });

  it("refuses a rating before any recommendation", async () => {
    const api = new FakeApi();
    const c = new SessionController(api, "s");
    await expect(c.submitRating(4)).rejects.toBeInstanceOf(ProtocolError);
    expect(api.rateCalls).toBe(0);
  });

  it("rejects out-of-range ratings locally", async () => {
    const api = new FakeApi();
    const c = new SessionController(api, "s");
    await c.requestNext();
    await expect(c.submitRating(0.5)).rejects.toBeInstanceOf(ProtocolError);
    await expect(c.submitRating(5.5)).rejects.toBeInstanceOf(ProtocolError);
    await expect(c.submitRating(NaN)).rejects.toBeInstanceOf(ProtocolError);
    expect(api.rateCalls).toBe(0);
    expect(c.canRate()).toBe(true);
  });
});

describe("double-submit suppression", () => {
  it("a second rating during an in-flight one never reaches the server", async () => {
    const api = new FakeApi();
    const c = new SessionController(api, "s");
    await c.requestNext();
    api.hold();
    const first = c.submitRating(4);
    expect(c.state()).toBe("rating");
    await expect(c.submitRating(4)).rejects.toBeInstanceOf(ProtocolError);
    api.releaseHeld();
    await first;
    expect(api.rateCalls).toBe(1);
    expect(c.history).toHaveLength(1);
  });
});

describe("failure handling", () => {
  it("a failed rating leaves history untouched and the track still rateable", async () => {
    const api = new FakeApi();
    const c = new SessionController(api, "s");
    await c.requestNext();
    api.failRateWith = new ApiError(500, "boom", "server fell over");
    await expect(c.submitRating(2)).rejects.toBeInstanceOf(ApiError);
    expect(c.history).toHaveLength(0);
    expect(c.state()).toBe("pending");
    expect(c.nowPlaying()?.step).toBe(1);
    // retry succeeds and only then mutates
    await c.submitRating(2);
    expect(c.history).toHaveLength(1);
  });

  it("a failed next returns to idle", async () => {
    const api = new FakeApi();
    const c = new SessionController(api, "s");
    api.failNextWith = new ApiError(500, "boom", "nope");
    await expect(c.requestNext()).rejects.toBeInstanceOf(ApiError);
    expect(c.state()).toBe("idle");
    expect(c.nowPlaying()).toBeNull();
  });

  it("trusts a 409 from the server over the local phase", async () => {
    const api = new FakeApi();
    const c = new SessionController(api, "s");
    await c.requestNext();
    // another tab already rated this track: server says nothing is pending
    api.failRateWith = new ApiError(409, "no_pending_recommendation", "already rated");
    await expect(c.submitRating(3)).rejects.toBeInstanceOf(ApiError);
    expect(c.state()).toBe("idle");
    expect(c.nowPlaying()).toBeNull();
    expect(c.history).toHaveLength(0);
  });
});

describe("change notification", () => {
  it("fires on every phase transition and supports unsubscribe", async () => {
    const api = new FakeApi();
    const c = new SessionController(api, "s");
    let count = 0;
    const off = c.onChange(() => count++);
    await c.requestNext(); // recommending + pending
    await c.submitRating(5); // rating + idle
    expect(count).toBe(4);
    off();
    await c.requestNext();
    expect(count).toBe(4);
  });
});
