import { App } from "./app";
import "./style.css";

const canvas = document.getElementById("canvas");
if (!(canvas instanceof HTMLCanvasElement)) throw new Error("missing #canvas");

const app = new App(document, canvas);
void app.start();
