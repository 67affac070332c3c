export interface HealthResponse {
  status: string;
  songs: number;
  sessions: number;
}

export interface SessionCreated {
  session_id: string;
  policy: string;
  created_at: number;
}

export interface Recommendation {
  session_id: string;
  step: number;
  song_id: string;
  title: string;
  artist: string;
  alpha: number;
}

export interface RatingAck {
  session_id: string;
  song_id: string;
  n_ratings: number;
}

export interface PosteriorItem {
  song_id: string;
  mean: number;
  sd: number;
  quantile: number;
}

export interface PosteriorPage {
  session_id: string;
  page: number;
  page_size: number;
  total: number;
  alpha: number;
  mean_sd: number;
  items: PosteriorItem[];
}

export interface CatalogItem {
  song_id: string;
  title: string;
  artist: string;
}

export interface CatalogPage {
  page: number;
  page_size: number;
  total: number;
  items: CatalogItem[];
}

/** Error payload the service sends with every non-2xx status. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class Client {
  constructor(private base: string = "") {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const res = await fetch(this.base + path, init);
    if (!res.ok) {
      let code = "http_error";
      let message = `${res.status} ${res.statusText}`;
      try {
        const payload = await res.json();
        if (payload && typeof payload.code === "string") code = payload.code;
        if (payload && typeof payload.message === "string") message = payload.message;
      } catch {
        // non-JSON error body, keep the status line
      }
      throw new ApiError(res.status, code, message);
    }
    return (await res.json()) as T;
  }

  health(): Promise<HealthResponse> {
    return this.call("GET", "/healthz");
  }

  createSession(policy: string, seed: number): Promise<SessionCreated> {
    return this.call("POST", "/sessions", { policy, seed });
  }

  next(sessionId: string): Promise<Recommendation> {
    return this.call("GET", `/sessions/${sessionId}/next`);
  }

  rate(sessionId: string, rating: number): Promise<RatingAck> {
    return this.call("POST", `/sessions/${sessionId}/rating`, { rating });
  }

  posterior(sessionId: string, page = 0, pageSize?: number): Promise<PosteriorPage> {
    const qs = pageSize === undefined ? `page=${page}` : `page=${page}&page_size=${pageSize}`;
    return this.call("GET", `/sessions/${sessionId}/posterior?${qs}`);
  }

  catalog(page = 0, pageSize?: number): Promise<CatalogPage> {
    const qs = pageSize === undefined ? `page=${page}` : `page=${page}&page_size=${pageSize}`;
    return this.call("GET", `/catalog?${qs}`);
  }
}
