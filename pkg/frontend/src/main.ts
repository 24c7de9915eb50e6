import { AnnotationApi } from "./api.js";
import { AnnotationApp } from "./app.js";

function raterIdFromLocation(): string | null {
  const params = new URLSearchParams(window.location.search);
  return params.get("rater");
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  const raterId = raterIdFromLocation() ?? window.prompt("Rater id:");
  if (!raterId) {
    root.textContent = "A rater id is required (add ?rater=<id> to the URL).";
    return;
  }
  const app = new AnnotationApp(root, new AnnotationApi(""), document, {
    confirm: (message) => window.confirm(message),
  });
  try {
    await app.start(raterId);
  } catch (error) {
    root.textContent = `Could not start session: ${String(error)}`;
  }
}

void boot();
