import { App } from "./app.js";

const root = document.getElementById("app");
if (root) {
  const app = new App(root, { baseUrl: "" });
  const match = /^#\/s\/(.+)$/.exec(location.hash);
  void app.start(match ? match[1] : undefined);
}
