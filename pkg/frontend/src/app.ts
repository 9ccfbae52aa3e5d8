/** Browser shell around the session controller: camera browser, click to
 * place points, session controls, and before/after interval previews. */

import { ApiError } from "./api.js";
import { SessionController } from "./controller.js";
import { drawOverlay, installArrowheadDefs } from "./overlay.js";

export class DragStudioApp {
  private view!: HTMLImageElement;
  private overlay!: SVGSVGElement;
  private cameraSelect!: HTMLSelectElement;
  private status!: HTMLElement;
  private toast!: HTMLElement;
  private compare!: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    readonly controller: SessionController,
  ) {}

  async start(): Promise<void> {
    this.buildDom();
    await this.controller.init();
    for (const id of this.controller.cameras.keys()) {
      const opt = document.createElement("option");
      opt.value = id;
      opt.textContent = id;
      this.cameraSelect.appendChild(opt);
    }
    this.showCamera(this.controller.store.selectedCamera!);
    this.renderStatus();
  }

  private buildDom(): void {
    this.root.innerHTML = `
      <div class="panel">
        <label>Camera <select id="camera"></select></label>
        <label>Radius <input id="radius" type="range" min="0.05" max="2" step="0.05" value="0.5">
          <span id="radius-value">0.50</span></label>
        <label>Intervals <input id="intervals" type="number" min="1" max="50" value="5"></label>
        <button id="undo">Undo point</button>
        <button id="create">Create session</button>
        <button id="step">Step</button>
        <button id="stop">Stop</button>
        <button id="commit">Commit</button>
        <span id="status"></span>
      </div>
      <div class="viewport">
        <img id="view" alt="render">
        <svg id="overlay"></svg>
      </div>
      <div id="compare" class="compare"></div>
      <div id="toast" class="toast" hidden></div>
    `;
    this.view = this.root.querySelector("#view")!;
    this.overlay = this.root.querySelector("#overlay")!;
    this.cameraSelect = this.root.querySelector("#camera")!;
    this.status = this.root.querySelector("#status")!;
    this.toast = this.root.querySelector("#toast")!;
    this.compare = this.root.querySelector("#compare")!;
    installArrowheadDefs(this.overlay);

    this.cameraSelect.addEventListener("change", () => this.showCamera(this.cameraSelect.value));
    this.overlay.addEventListener("click", (ev) => void this.onViewClick(ev));
    this.bindRadius();
    this.bindButton("#undo", async () => {
      this.controller.store.undoPoint();
      this.redrawOverlay();
    });
    this.bindButton("#create", () => this.createSession());
    this.bindButton("#step", () => this.stepOnce());
    this.bindButton("#stop", async () => {
      await this.controller.stopSession();
      this.renderStatus();
    });
    this.bindButton("#commit", async () => {
      await this.controller.commit();
      this.renderStatus();
    });
  }

  private bindRadius(): void {
    const slider = this.root.querySelector<HTMLInputElement>("#radius")!;
    const label = this.root.querySelector("#radius-value")!;
    slider.addEventListener("input", () => {
      const r = Number(slider.value);
      label.textContent = r.toFixed(2);
      this.controller.store.setRadius(r);
      this.redrawOverlay();
    });
  }

  private bindButton(selector: string, fn: () => Promise<unknown>): void {
    const button = this.root.querySelector<HTMLButtonElement>(selector)!;
    button.addEventListener("click", () => {
      button.disabled = true;
      void fn()
        .catch((e) => this.showError(e))
        .finally(() => {
          button.disabled = false;
        });
    });
  }

  private showCamera(id: string): void {
    this.controller.selectCamera(id);
    this.cameraSelect.value = id;
    this.view.src = this.controller.client.renderUrl(id);
    this.redrawOverlay();
  }

  private redrawOverlay(): void {
    const camId = this.controller.store.selectedCamera;
    const cam = camId ? this.controller.cameras.get(camId) : undefined;
    if (cam) drawOverlay(this.overlay, cam, this.controller.store.pairs);
  }

  private async onViewClick(ev: MouseEvent): Promise<void> {
    const camId = this.controller.store.selectedCamera;
    const cam = camId ? this.controller.cameras.get(camId) : undefined;
    if (!cam) return;
    const rect = this.overlay.getBoundingClientRect();
    const px = ((ev.clientX - rect.left) / rect.width) * cam.width;
    const py = ((ev.clientY - rect.top) / rect.height) * cam.height;
    try {
      const outcome = await this.controller.pickAt(px, py);
      if (outcome.point === null) {
        this.showToast("nothing there: pick a point on the scene");
        return;
      }
      this.redrawOverlay();
    } catch (e) {
      this.showError(e);
    }
  }

  private async createSession(): Promise<void> {
    const intervals = Number(this.root.querySelector<HTMLInputElement>("#intervals")!.value);
    await this.controller.createSession({ T: intervals, corrector: { kind: "mock" } });
    this.renderStatus();
  }

  private async stepOnce(): Promise<void> {
    const result = await this.controller.step();
    this.renderStatus();
    const camId = this.controller.store.selectedCamera;
    if (camId) this.showComparison(result.u, camId);
  }

  /** Before/after slider for the selected camera at interval u. */
  private showComparison(u: number, camId: string): void {
    const before = this.controller.client.previewUrl(u - 1, camId);
    const after = this.controller.client.previewUrl(u, camId);
    this.compare.innerHTML = `
      <div class="compare-stage">
        <img src="${before}" alt="before">
        <img src="${after}" alt="after" id="compare-after">
        <input id="compare-slider" type="range" min="0" max="100" value="50">
      </div>
    `;
    const afterImg = this.compare.querySelector<HTMLImageElement>("#compare-after")!;
    const slider = this.compare.querySelector<HTMLInputElement>("#compare-slider")!;
    const apply = () => {
      afterImg.style.clipPath = `inset(0 0 0 ${slider.value}%)`;
    };
    slider.addEventListener("input", apply);
    apply();
  }

  private renderStatus(): void {
    const s = this.controller.store.server;
    this.status.textContent = s
      ? `session ${s.status}, interval ${s.current}/${s.intervals}`
      : "no session";
    if (s?.last_error) this.showToast(`interval aborted: ${s.last_error} (step retries)`);
  }

  private showError(e: unknown): void {
    const msg = e instanceof ApiError ? `${e.code}: ${e.message}` : String(e);
    this.showToast(msg);
  }

  private showToast(message: string): void {
    this.toast.textContent = message;
    this.toast.hidden = false;
    setTimeout(() => {
      this.toast.hidden = true;
    }, 4000);
  }
}
