// Build with `wasm-pack build --target web --out-dir www/pkg` from crates/demo.
import init, { Demo } from "./pkg/mathrec_demo.js";

const $ = (id) => document.getElementById(id);
const canvas = $("plot");
const ctx = canvas.getContext("2d");
const palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

let demo = null;
let points = [];
let som = null;
let gmm = null;
let recs = null;
let view = { x0: 0, y0: 0, scale: 1 };

const num = (id) => Number($(id).value);

function fit() {
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const [x0, x1, y0, y1] = [Math.min(...xs), Math.max(...xs), Math.min(...ys), Math.max(...ys)];
  const span = Math.max(x1 - x0, y1 - y0) * 1.15 || 1;
  view = { x0: (x0 + x1) / 2 - span / 2, y0: (y0 + y1) / 2 - span / 2, scale: canvas.width / span };
}

const toScreen = (x, y) => [(x - view.x0) * view.scale, canvas.height - (y - view.y0) * view.scale];
const toData = (sx, sy) => [sx / view.scale + view.x0, (canvas.height - sy) / view.scale + view.y0];

function ellipse(mean, cov, color) {
  // 2-sigma contour from the covariance eigen-decomposition.
  const [a, b, c] = [cov[0][0], cov[0][1], cov[1][1]];
  const tr = (a + c) / 2;
  const det = Math.sqrt(((a - c) / 2) ** 2 + b * b);
  const [l1, l2] = [tr + det, Math.max(tr - det, 0)];
  const angle = Math.atan2(l1 - a, b || 1e-12);
  const [cx, cy] = toScreen(mean[0], mean[1]);
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.ellipse(cx, cy, 2 * Math.sqrt(l1) * view.scale, 2 * Math.sqrt(l2) * view.scale, -angle, 0, 2 * Math.PI);
  ctx.stroke();
}

function draw() {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const highlighted = new Map();
  if (recs) {
    const chosen = recs.by_strategy.find(([s]) => s === $("strategy").value);
    (chosen ? chosen[1] : []).forEach((r) => highlighted.set(r.question_id, r.rank));
  }
  for (const p of points) {
    const [sx, sy] = toScreen(p.x, p.y);
    const label = gmm ? gmm.labels[points.indexOf(p)] : p.blob;
    ctx.fillStyle = palette[label % palette.length];
    ctx.globalAlpha = recs && !highlighted.has(p.id) && p.id !== recs.query ? 0.35 : 1;
    ctx.beginPath();
    ctx.arc(sx, sy, highlighted.has(p.id) ? 5 : 3, 0, 2 * Math.PI);
    ctx.fill();
    if (highlighted.has(p.id)) {
      ctx.fillStyle = "#000";
      ctx.fillText(String(highlighted.get(p.id)), sx + 6, sy - 6);
    }
    if (recs && p.id === recs.query) {
      ctx.strokeStyle = "#000";
      ctx.lineWidth = 2;
      ctx.strokeRect(sx - 7, sy - 7, 14, 14);
    }
  }
  ctx.globalAlpha = 1;
  if (som) {
    ctx.strokeStyle = "#444";
    ctx.lineWidth = 1;
    const at = (r, c) => toScreen(...som.weights[r * som.cols + c]);
    for (let r = 0; r < som.rows; r++) {
      for (let c = 0; c < som.cols; c++) {
        const [x, y] = at(r, c);
        for (const [nr, nc] of [[r + 1, c], [r, c + 1]]) {
          if (nr < som.rows && nc < som.cols) {
            const [x2, y2] = at(nr, nc);
            ctx.beginPath();
            ctx.moveTo(x, y);
            ctx.lineTo(x2, y2);
            ctx.stroke();
          }
        }
        ctx.fillStyle = "#444";
        ctx.fillRect(x - 2, y - 2, 4, 4);
      }
    }
  }
  if (gmm) {
    gmm.means.forEach((m, i) => ellipse(m, gmm.covariances[i], palette[i % palette.length]));
  }
}

function status(text) {
  $("status").textContent = text;
}

function guarded(fn) {
  return () => {
    try {
      fn();
    } catch (e) {
      status(`error: ${e.message ?? e}`);
    }
    draw();
  };
}

function refreshStrategies() {
  const names = recs ? recs.by_strategy.map(([s]) => s) : ["cosineSimilarityAlg"];
  const current = $("strategy").value;
  $("strategy").innerHTML = names.map((s) => `<option>${s}</option>`).join("");
  if (names.includes(current)) $("strategy").value = current;
}

function showRecs() {
  const chosen = recs && recs.by_strategy.find(([s]) => s === $("strategy").value);
  $("recs").textContent = chosen
    ? `query ${recs.query}\n` + chosen[1].map((r) => `${r.rank}. ${r.question_id}  ${r.score.toFixed(4)}`).join("\n")
    : "";
}

const generate = guarded(() => {
  demo = new Demo(num("seed"), num("blobs"), num("per"), num("spread"));
  points = JSON.parse(demo.points());
  som = gmm = recs = null;
  fit();
  refreshStrategies();
  showRecs();
  status(`${points.length} points`);
});

$("generate").onclick = generate;
$("som").onclick = guarded(() => {
  som = JSON.parse(demo.trainSom(num("rows"), num("cols"), num("epochs")));
  status(`SOM quantization error ${som.quantization_error.toFixed(4)}`);
});
$("gmm").onclick = guarded(() => {
  gmm = JSON.parse(demo.fitGmm(num("k")));
  status(`GMM ${gmm.converged ? "converged" : "stopped"} after ${gmm.iterations} iterations, log-likelihood ${gmm.log_likelihood.toFixed(2)}`);
});
$("strategy").onchange = () => {
  showRecs();
  draw();
};
canvas.addEventListener("click", (ev) => {
  if (!demo) return;
  const rect = canvas.getBoundingClientRect();
  const [x, y] = toData(ev.clientX - rect.left, ev.clientY - rect.top);
  guarded(() => {
    recs = JSON.parse(demo.recommend(x, y, num("n")));
    refreshStrategies();
    showRecs();
  })();
});

await init();
generate();
