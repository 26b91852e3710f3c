import { createApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
    createApp(root).catch((err) => {
        root.textContent = `failed to start demo: ${String(err)}`;
    });
}
