import { ApiClient } from "./api.js";
import { AnnotationApp } from "./app.js";

function evaluatorId(): string {
  const stored = window.localStorage.getItem("duetwoz.evaluator");
  if (stored) return stored;
  const entered = window.prompt("Evaluator id:")?.trim() || "anonymous";
  window.localStorage.setItem("duetwoz.evaluator", entered);
  return entered;
}

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app mount point");
}
const app = new AnnotationApp(root, new ApiClient(""), evaluatorId());
document.addEventListener("keydown", (event) => app.handleKey(event));
void app.start();
