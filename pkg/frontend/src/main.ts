import { GsDragClient } from "./api.js";
import { DragStudioApp } from "./app.js";
import { SessionController } from "./controller.js";

const params = new URLSearchParams(window.location.search);
const baseUrl =
  params.get("service") ?? localStorage.getItem("gsdrag-service") ?? "http://127.0.0.1:8000";
localStorage.setItem("gsdrag-service", baseUrl);

const app = new DragStudioApp(
  document.getElementById("app")!,
  new SessionController(new GsDragClient(baseUrl)),
);
app.start().catch((e) => {
  document.getElementById("app")!.textContent =
    `cannot reach gsdrag service at ${baseUrl}: ${e}`;
});
