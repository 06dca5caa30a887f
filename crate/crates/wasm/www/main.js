import init, { Demo } from "./pkg/limescope_wasm.js";

const SIZE = 64;
const $ = (id) => document.getElementById(id);
const view = $("view");
const ctx = view.getContext("2d", { willReadFrequently: true });
const num = (id) => Number($(id).value);

let source = null;
let demo = null;

function status(text) {
  $("status").textContent = text;
}

function show(rgba) {
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), SIZE, SIZE), 0, 0);
}

// Synthetic sign: red ring, white disc, dark bar, textured background.
function sampleImage() {
  const c = document.createElement("canvas");
  c.width = c.height = SIZE;
  const g = c.getContext("2d");
  const grad = g.createLinearGradient(0, 0, SIZE, SIZE);
  grad.addColorStop(0, "#5a7d4f");
  grad.addColorStop(1, "#9bb7d4");
  g.fillStyle = grad;
  g.fillRect(0, 0, SIZE, SIZE);
  g.fillStyle = "#c81e1e";
  g.beginPath();
  g.arc(32, 32, 24, 0, 2 * Math.PI);
  g.fill();
  g.fillStyle = "#f2f2f2";
  g.beginPath();
  g.arc(32, 32, 17, 0, 2 * Math.PI);
  g.fill();
  g.fillStyle = "#202020";
  g.fillRect(20, 29, 24, 6);
  return g.getImageData(0, 0, SIZE, SIZE).data;
}

async function loadFile(file) {
  const bitmap = await createImageBitmap(file);
  const c = document.createElement("canvas");
  c.width = c.height = SIZE;
  const g = c.getContext("2d");
  g.drawImage(bitmap, 0, 0, SIZE, SIZE);
  return g.getImageData(0, 0, SIZE, SIZE).data;
}

function timed(label, fn) {
  const start = performance.now();
  try {
    const result = fn();
    status(`${label} in ${(performance.now() - start).toFixed(0)} ms`);
    return result;
  } catch (e) {
    status(`${label} failed: ${e.message ?? e}`);
    return null;
  }
}

function segment() {
  if (demo) demo.free();
  demo = timed("segmented", () =>
    new Demo(source, SIZE, SIZE, num("segments"), num("compactness")));
  if (!demo) return;
  $("planted").max = demo.numSegments() - 1;
  show(demo.outlined());
  $("output").textContent = `${demo.numSegments()} superpixels; click one to plant it.`;
}

function planted() {
  return [num("planted"), $("negative").checked, num("samples"), num("k"), num("seed"), $("gray").checked];
}

function explain() {
  if (!demo) return;
  const out = timed("explained", () => demo.explain(...planted()));
  if (!out) return;
  show(out.overlay);
  $("output").textContent = out.json;
  out.free();
}

function stability() {
  if (!demo) return;
  const json = timed("measured", () => demo.stability(...planted(), num("runs"), num("topk")));
  if (!json) return;
  const report = JSON.parse(json);
  const lines = report.runs.map((r, i) => `seed ${report.seeds[i]}: [${r.join(", ")}]`);
  $("output").textContent =
    `mean pairwise Jaccard of top-${report.top_k}: ${report.mean_jaccard.toFixed(4)}\n\n` + lines.join("\n");
}

view.addEventListener("click", (ev) => {
  if (!demo) return;
  const rect = view.getBoundingClientRect();
  const x = Math.floor(((ev.clientX - rect.left) / rect.width) * SIZE);
  const y = Math.floor(((ev.clientY - rect.top) / rect.height) * SIZE);
  const s = demo.segmentAt(x, y);
  if (s >= 0) {
    $("planted").value = s;
    explain();
  }
});

$("file").addEventListener("change", async (ev) => {
  if (!ev.target.files.length) return;
  source = await loadFile(ev.target.files[0]);
  segment();
});
$("segment").addEventListener("click", segment);
$("explain").addEventListener("click", explain);
$("stability").addEventListener("click", stability);

await init();
source = sampleImage();
segment();
