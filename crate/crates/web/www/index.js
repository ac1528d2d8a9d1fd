import init, { DemoSession } from "./pkg/sisd_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#d62728", "#2ca02c", "#1f77b4"];

let demo = null;
let points = null;
let highlight = new Set();
let spreadLine = null;

function status(text) {
  $("status").textContent = text;
}

function drawScatter() {
  const ctx = $("scatter").getContext("2d");
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  const scale = width / 8;
  const px = (x) => width / 2 + x * scale;
  const py = (y) => height / 2 - y * scale;
  points.x.forEach((x, i) => {
    const c = points.cluster[i];
    ctx.fillStyle = c < 0 ? "#bbb" : COLORS[c];
    ctx.globalAlpha = highlight.size && !highlight.has(i) ? 0.25 : 1;
    ctx.fillRect(px(x) - 2, py(points.y[i]) - 2, 4, 4);
  });
  ctx.globalAlpha = 1;
  if (spreadLine) {
    const [cx, cy, wx, wy] = spreadLine;
    ctx.strokeStyle = "#000";
    ctx.beginPath();
    ctx.moveTo(px(cx - 3 * wx), py(cy - 3 * wy));
    ctx.lineTo(px(cx + 3 * wx), py(cy + 3 * wy));
    ctx.stroke();
  }
}

function drawCurve(curve) {
  const ctx = $("curve").getContext("2d");
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  const vals = curve.si.filter((v) => v !== null);
  if (!vals.length) return;
  const lo = Math.min(...vals), hi = Math.max(...vals);
  const px = (t) => 30 + (t / Math.PI) * (width - 40);
  const py = (v) => height - 20 - ((v - lo) / (hi - lo || 1)) * (height - 40);
  ctx.fillStyle = "#000";
  ctx.fillText(`spread SI of ${curve.description} by direction angle`, 30, 12);
  ctx.fillText("0", 26, height - 6);
  ctx.fillText("π", width - 14, height - 6);
  ctx.strokeStyle = "#1f77b4";
  ctx.beginPath();
  let pen = false;
  curve.theta.forEach((t, k) => {
    const v = curve.si[k];
    if (v === null) { pen = false; return; }
    if (pen) ctx.lineTo(px(t), py(v)); else ctx.moveTo(px(t), py(v));
    pen = true;
  });
  ctx.stroke();
}

function showCandidates(list) {
  const table = $("candidates");
  table.innerHTML = "<tr><th>pattern</th><th>coverage</th><th>IC</th><th>DL</th><th>SI</th><th></th></tr>";
  for (const c of list) {
    const tr = document.createElement("tr");
    const kind = c.pattern.kind === "spread" ? " (spread)" : "";
    tr.innerHTML = `<td>${c.description}${kind}</td><td>${c.coverage}</td>` +
      `<td>${c.score.ic.toFixed(2)}</td><td>${c.score.dl.toFixed(2)}</td><td>${c.score.si.toFixed(2)}</td>`;
    const td = document.createElement("td");
    const btn = document.createElement("button");
    btn.textContent = "Accept";
    btn.onclick = () => accept(c);
    td.appendChild(btn);
    tr.appendChild(td);
    table.appendChild(tr);
  }
}

function generate() {
  const seed = Number($("seed").value) >>> 0;
  const noise = Number($("noise").value);
  demo = new DemoSession(seed, noise);
  points = JSON.parse(demo.points());
  highlight = new Set();
  spreadLine = null;
  $("mine-spread").disabled = true;
  showCandidates([]);
  $("curve").getContext("2d").clearRect(0, 0, 420, 260);
  drawScatter();
  status(`${points.x.length} rows generated`);
}

function mine(spread) {
  const t0 = performance.now();
  try {
    showCandidates(JSON.parse(demo.mine(spread)));
    status(`mined in ${(performance.now() - t0).toFixed(0)} ms`);
  } catch (e) {
    status(e.message);
  }
}

function accept(c) {
  const res = JSON.parse(demo.accept(c.id));
  highlight = new Set(res.members);
  if (c.pattern.kind === "spread") {
    const [wx, wy] = c.pattern.direction;
    spreadLine = [c.pattern.center[0], c.pattern.center[1], wx, wy];
  } else {
    spreadLine = null;
    drawCurve(JSON.parse(demo.directionCurve(180)));
  }
  $("mine-spread").disabled = !res.spread_available;
  showCandidates([]);
  drawScatter();
  status(`iteration ${res.iteration}: accepted ${c.description}, model update ${(res.seconds * 1000).toFixed(1)} ms`);
}

await init();
$("noise").oninput = () => { $("noise-label").textContent = Number($("noise").value).toFixed(2); };
$("generate").onclick = generate;
$("mine").onclick = () => mine(false);
$("mine-spread").onclick = () => mine(true);
generate();
