import { ApiError, Client, PosteriorPage } from "./api.js";
import { posteriorIntervalChart, ratingHistoryChart, uncertaintyTrendChart } from "./charts.js";
import { SessionController } from "./session.js";

const POLICY = "bayes_ucb_cn_v";
const TOP_SONGS = 12;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

class App {
  private client: Client;
  private controller: SessionController | null = null;
  private uncertainty: number[] = [];
  private lastPosterior: PosteriorPage | null = null;

  private root: HTMLElement;
  private statusLine: HTMLElement;
  private trackTitle: HTMLElement;
  private trackArtist: HTMLElement;
  private trackMeta: HTMLElement;
  private nextButton: HTMLButtonElement;
  private starRow: HTMLElement;
  private starButtons: HTMLButtonElement[] = [];
  private historyChart: HTMLElement;
  private historyList: HTMLElement;
  private posteriorChart: HTMLElement;
  private uncertaintyBadge: HTMLElement;
  private uncertaintySpark: HTMLElement;

  constructor(root: HTMLElement) {
    this.root = root;
    this.client = new Client("");

    const header = el("header", "top");
    header.appendChild(el("h1", "", "banditfm"));
    this.uncertaintyBadge = el("span", "badge", "uncertainty —");
    this.uncertaintySpark = el("span", "spark");
    header.appendChild(this.uncertaintyBadge);
    header.appendChild(this.uncertaintySpark);
    root.appendChild(header);

    const card = el("section", "card now-playing");
    this.trackTitle = el("div", "title", "Press play to start");
    this.trackArtist = el("div", "artist", "");
    this.trackMeta = el("div", "meta", "");
    card.appendChild(this.trackTitle);
    card.appendChild(this.trackArtist);
    card.appendChild(this.trackMeta);

    this.starRow = el("div", "stars");
    for (let v = 1; v <= 5; v++) {
      const b = el("button", "star", "★");
      b.dataset.value = String(v);
      b.title = `${v} star${v > 1 ? "s" : ""}`;
      b.addEventListener("click", () => this.rate(v));
      b.addEventListener("mouseenter", () => this.paintStars(v));
      this.starButtons.push(b);
      this.starRow.appendChild(b);
    }
    this.starRow.addEventListener("mouseleave", () => this.paintStars(0));
    card.appendChild(this.starRow);

    this.nextButton = el("button", "next", "Next track");
    this.nextButton.addEventListener("click", () => this.next());
    card.appendChild(this.nextButton);
    root.appendChild(card);

    const grid = el("div", "grid");
    const histPane = el("section", "card");
    histPane.appendChild(el("h2", "", "Session ratings"));
    this.historyChart = el("div", "chart");
    this.historyList = el("ol", "history");
    histPane.appendChild(this.historyChart);
    histPane.appendChild(this.historyList);
    grid.appendChild(histPane);

    const postPane = el("section", "card");
    postPane.appendChild(el("h2", "", "What the model believes"));
    postPane.appendChild(
      el("p", "hint", "Top tracks by exploration score; bars are mean ± sd, the notch is the quantile being ranked."),
    );
    this.posteriorChart = el("div", "chart");
    postPane.appendChild(this.posteriorChart);
    grid.appendChild(postPane);
    root.appendChild(grid);

    this.statusLine = el("div", "status", "connecting…");
    root.appendChild(this.statusLine);

    void this.boot();
  }

  private async boot(): Promise<void> {
    try {
      const health = await this.client.health();
      const seed = new URLSearchParams(location.search).get("seed");
      const created = await this.client.createSession(
        POLICY,
        seed !== null ? Number(seed) : Math.floor(Math.random() * 1e6),
      );
      this.controller = new SessionController(this.client, created.session_id);
      this.controller.onChange(() => this.render());
      this.setStatus(`session ${created.session_id.slice(0, 8)} · ${health.songs} songs`);
      this.render();
    } catch (err) {
      this.setStatus(this.describe(err), true);
    }
  }

  private async next(): Promise<void> {
    if (!this.controller || !this.controller.canRequestNext()) return;
    try {
      await this.controller.requestNext();
    } catch (err) {
      this.setStatus(this.describe(err), true);
    }
  }

  private async rate(value: number): Promise<void> {
    if (!this.controller || !this.controller.canRate()) return;
    try {
      await this.controller.submitRating(value);
      this.renderHistory();
      await this.refreshPosterior();
    } catch (err) {
      this.setStatus(this.describe(err), true);
    }
  }

  private async refreshPosterior(): Promise<void> {
    if (!this.controller) return;
    try {
      const page = await this.client.posterior(this.controller.sessionId, 0, 100000);
      this.lastPosterior = page;
      this.uncertainty.push(page.mean_sd);
      this.renderPosterior();
    } catch (err) {
      if (err instanceof ApiError && err.code === "no_posterior") return;
      this.setStatus(this.describe(err), true);
    }
  }

  private render(): void {
    const c = this.controller;
    if (!c) return;
    const rec = c.nowPlaying();
    if (rec) {
      this.trackTitle.textContent = rec.title;
      this.trackArtist.textContent = rec.artist;
      this.trackMeta.textContent = `step ${rec.step} · exploring the ${Math.round(rec.alpha * 100)}th percentile`;
    } else if (c.history.length > 0) {
      this.trackTitle.textContent = "Rated — ask for the next track";
      this.trackArtist.textContent = "";
      this.trackMeta.textContent = `${c.history.length} rating${c.history.length > 1 ? "s" : ""} so far`;
    }
    this.nextButton.disabled = !c.canRequestNext();
    const canRate = c.canRate();
    for (const b of this.starButtons) b.disabled = !canRate;
    this.starRow.classList.toggle("armed", canRate);
  }

  private paintStars(upTo: number): void {
    this.starButtons.forEach((b, i) => b.classList.toggle("lit", i < upTo));
  }

  private renderHistory(): void {
    const entries = this.controller ? this.controller.history : [];
    this.historyChart.innerHTML = ratingHistoryChart(
      entries.map((e) => ({ step: e.step, rating: e.rating })),
    );
    this.historyList.innerHTML = "";
    for (const e of entries.slice(-8).reverse()) {
      const li = el("li", "", `${e.title} — ${e.artist}`);
      li.appendChild(el("span", "score", e.rating.toFixed(0)));
      this.historyList.appendChild(li);
    }
  }

  private renderPosterior(): void {
    const page = this.lastPosterior;
    if (!page) return;
    const top = [...page.items]
      .sort((a, b) => b.quantile - a.quantile)
      .slice(0, TOP_SONGS)
      .map((it) => ({ label: it.song_id, mean: it.mean, sd: it.sd, quantile: it.quantile }));
    this.posteriorChart.innerHTML = posteriorIntervalChart(top);
    this.uncertaintyBadge.textContent = `uncertainty ${page.mean_sd.toFixed(3)}`;
    this.uncertaintySpark.innerHTML = uncertaintyTrendChart(this.uncertainty);
  }

  private describe(err: unknown): string {
    if (err instanceof ApiError) return `${err.code}: ${err.message}`;
    return err instanceof Error ? err.message : String(err);
  }

  private setStatus(text: string, isError = false): void {
    this.statusLine.textContent = text;
    this.statusLine.classList.toggle("error", isError);
  }
}

const mount = document.getElementById("app");
if (mount) new App(mount);
