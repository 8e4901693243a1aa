import { ApiClient } from "./api.js";
import { App } from "./app.js";

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app mount point");
}

const app = new App({ root, api: new ApiClient("") });
app.start();
