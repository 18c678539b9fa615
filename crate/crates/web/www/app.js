import init, { modelCurves, tilingPlan, Simulation, componentNames } from "./pkg/thiim_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function axes(ctx, w, h, pad) {
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
}

function line(ctx, pts, color, dash = []) {
  ctx.strokeStyle = color;
  ctx.setLineDash(dash);
  ctx.beginPath();
  pts.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
  ctx.stroke();
  ctx.setLineDash([]);
}

function drawModels() {
  let c;
  try {
    c = JSON.parse(modelCurves(num("m-nx"), num("m-bw"), num("m-cache"), num("m-frac")));
  } catch (e) {
    $("m-text").textContent = String(e);
    return;
  }
  const cv = $("m-canvas");
  const ctx = cv.getContext("2d");
  ctx.clearRect(0, 0, cv.width, cv.height);
  const half = cv.width / 2, pad = 36, h = cv.height;
  const dws = c.points.map((p) => p.dw);
  const sx = (dw, x0) => x0 + pad + ((dw - 4) / 28) * (half - 2 * pad);

  // left: bytes per update, log scale
  const ly = (b) => h - pad - (Math.log(b / 40) / Math.log(1600 / 40)) * (h - 2 * pad);
  axes(ctx, half, h, pad);
  line(ctx, c.points.map((p) => [sx(p.dw, 0), ly(p.balance)]), "#1f5fa8");
  line(ctx, [[sx(4, 0), ly(c.spatial)], [sx(32, 0), ly(c.spatial)]], "#b55", [4, 4]);
  ctx.fillStyle = "#222";
  ctx.fillText("bytes/LUP (log)  blue: diamond, red: spatial", pad + 4, pad - 10);

  // right: cache block per tile against the usable budget
  const maxMib = Math.max(c.usable_mib * 1.5, ...c.points.map((p) => p.block_mib[c.bz_values.length - 1]));
  const ry = (m) => h - pad - (m / maxMib) * (h - 2 * pad);
  ctx.save();
  ctx.translate(half, 0);
  axes(ctx, half, h, pad);
  ["#2a7", "#c80", "#a3a"].forEach((col, k) =>
    line(ctx, c.points.map((p) => [sx(p.dw, 0), ry(p.block_mib[k])]), col)
  );
  line(ctx, [[sx(4, 0), ry(c.usable_mib)], [sx(32, 0), ry(c.usable_mib)]], "#b00", [4, 4]);
  ctx.fillText(`MiB per tile, bz = ${c.bz_values.join(" / ")}; red: usable ${c.usable_mib.toFixed(1)} MiB`, pad + 4, pad - 10);
  dws.forEach((dw) => ctx.fillText(dw, sx(dw, 0) - 4, h - pad + 14));
  ctx.restore();
  dws.forEach((dw) => ctx.fillText(dw, sx(dw, 0) - 4, h - pad + 14));

  const rows = c.points
    .map((p) => `dw ${String(p.dw).padStart(2)}: ${p.balance.toFixed(1).padStart(6)} B/LUP, ` +
      `${p.predicted_mlups.toFixed(0).padStart(4)} MLUP/s, tiles that fit (bz ${c.bz_values.join("/")}): ${p.max_groups.join("/")}`)
    .join("\n");
  $("m-text").innerText =
    `naive ${c.naive} B/LUP (${c.naive_mlups.toFixed(1)} MLUP/s), spatial ${c.spatial} B/LUP (${c.spatial_mlups.toFixed(1)} MLUP/s)\n` + rows;
}

let plan = null;

function loadPlan() {
  try {
    plan = JSON.parse(tilingPlan(num("p-ny"), num("p-steps"), num("p-dw"), num("p-bz")));
  } catch (e) {
    plan = null;
    $("p-text").textContent = String(e);
    return;
  }
  $("p-upto").max = plan.tiles.length;
  $("p-upto").value = plan.tiles.length;
  drawPlan();
}

function drawPlan() {
  if (!plan) return;
  const cv = $("p-canvas");
  const ctx = cv.getContext("2d");
  ctx.clearRect(0, 0, cv.width, cv.height);
  const upto = num("p-upto");
  const cw = (cv.width - 20) / plan.ny, ch = (cv.height - 20) / plan.levels;
  const hue = (slab) => (slab * 67) % 360;
  for (const t of plan.tiles) {
    const done = t.order < upto;
    for (const [level, y0, y1] of t.levels) {
      // H levels sit half a cell to the right of E levels
      const shift = level % 2 ? 0.5 : 0;
      const x = 10 + (y0 + shift) * cw, y = cv.height - 10 - level * ch;
      ctx.fillStyle = done ? `hsl(${hue(t.slab)} 60% ${level % 2 ? 55 : 70}%)` : "#eee";
      ctx.fillRect(x, y, (y1 - y0) * cw - 1, ch - 1);
    }
  }
  const next = plan.tiles.find((t) => t.order === upto);
  $("p-text").textContent =
    `${plan.tiles.length} tiles over ${plan.steps} steps (padded to a multiple of dw/2). ` +
    (next ? `next tile ${next.id} waits on [${next.deps.join(", ")}]` : "all tiles scheduled");
}

let sim = null;
let running = false;

function resetSim() {
  try {
    sim = new Simulation(num("s-n"), num("s-dw"), num("s-bz"));
  } catch (e) {
    sim = null;
    $("s-text").textContent = String(e);
    return;
  }
  drawSim();
}

function drawSim() {
  if (!sim) return;
  const n = sim.n;
  const data = sim.sliceYz(num("s-comp"));
  let max = 0;
  for (const v of data) max = Math.max(max, v);
  const img = new ImageData(n, n);
  for (let z = 0; z < n; z++) {
    for (let y = 0; y < n; y++) {
      const v = max > 0 ? Math.sqrt(data[z * n + y] / max) : 0;
      // flip so z grows upwards
      const o = 4 * ((n - 1 - z) * n + y);
      img.data[o] = 255 * v;
      img.data[o + 1] = 120 * v;
      img.data[o + 2] = 255 * (1 - v) * 0.4;
      img.data[o + 3] = 255;
    }
  }
  const off = new OffscreenCanvas(n, n);
  off.getContext("2d").putImageData(img, 0, 0);
  const ctx = $("s-canvas").getContext("2d");
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, 384, 384);
  const ok = sim.bitwiseEqual;
  $("s-text").innerHTML =
    `step ${sim.steps}, source plane z = ${sim.sourcePlane}, peak |F| = ${max.toExponential(3)}; ` +
    `diamond engine vs naive: <span class="${ok ? "" : "bad"}">${ok ? "bitwise equal" : "max |diff| " + sim.maxAbsDiff}</span>`;
}

function advance() {
  if (!sim) return;
  sim.advance(1);
  drawSim();
}

function loop() {
  if (!running) return;
  advance();
  requestAnimationFrame(loop);
}

await init();
componentNames().split(",").forEach((name, i) => $("s-comp").add(new Option(name, i)));
["m-nx", "m-bw", "m-cache", "m-frac"].forEach((id) => $(id).addEventListener("input", drawModels));
["p-ny", "p-steps", "p-dw", "p-bz"].forEach((id) => $(id).addEventListener("change", loadPlan));
$("p-upto").addEventListener("input", drawPlan);
["s-n", "s-dw", "s-bz"].forEach((id) => $(id).addEventListener("change", resetSim));
$("s-comp").addEventListener("change", drawSim);
$("s-reset").addEventListener("click", resetSim);
$("s-step").addEventListener("click", advance);
$("s-run").addEventListener("click", () => {
  running = !running;
  $("s-run").textContent = running ? "pause" : "run";
  loop();
});
drawModels();
loadPlan();
resetSim();
