import { ChatController } from "./chat";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
new ChatController(root);
