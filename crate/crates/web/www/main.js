import init, { warpGrid, deformPair, registerFrames } from "./pkg/taylor_icp_web.js";

const $ = (id) => document.getElementById(id);

function bounds(arrays) {
  let lo = [Infinity, Infinity], hi = [-Infinity, -Infinity];
  for (const a of arrays) {
    for (let i = 0; i < a.length; i += 2) {
      for (let k = 0; k < 2; k++) {
        lo[k] = Math.min(lo[k], a[i + k]);
        hi[k] = Math.max(hi[k], a[i + k]);
      }
    }
  }
  const span = Math.max(hi[0] - lo[0], hi[1] - lo[1]) * 1.1 || 1;
  return { cx: (lo[0] + hi[0]) / 2, cy: (lo[1] + hi[1]) / 2, span };
}

function projector(canvas, b) {
  const s = Math.min(canvas.width, canvas.height) / b.span;
  return (x, y) => [canvas.width / 2 + (x - b.cx) * s, canvas.height / 2 - (y - b.cy) * s];
}

function drawGrid() {
  const lines = 11, samples = 40;
  const a = ["a1", "a2", "a3"].map((id) => {
    $(id + "v").textContent = Number($(id).value).toFixed(2);
    return Number($(id).value);
  });
  const g = warpGrid(a[0], a[1], a[2], lines, samples);
  const canvas = $("grid"), ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const p = projector(canvas, { cx: 0, cy: 0, span: 3.2 });
  ctx.strokeStyle = "#ddd";
  ctx.strokeRect(...p(-1, 1), 2 * canvas.width / 3.2, 2 * canvas.height / 3.2);
  ctx.strokeStyle = "#1f6fd0";
  for (let l = 0; l < 2 * lines; l++) {
    ctx.beginPath();
    for (let s = 0; s < samples; s++) {
      const i = 2 * (l * samples + s);
      const [x, y] = p(g[i], g[i + 1]);
      s ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
    }
    ctx.stroke();
  }
}

let pair = null, frames = null;

function dots(ctx, p, pts, color) {
  ctx.fillStyle = color;
  for (let i = 0; i < pts.length; i += 2) {
    const [x, y] = p(pts[i], pts[i + 1]);
    ctx.beginPath();
    ctx.arc(x, y, 2.2, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawPair() {
  const canvas = $("pair"), ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!pair) return;
  const moving = frames ? frames.points(Number($("frame").value)) : pair.moving;
  const p = projector(canvas, bounds([pair.fixed, pair.moving]));
  dots(ctx, p, pair.fixed, "#d0401f");
  dots(ctx, p, moving, "#1f6fd0");
}

function makePair() {
  $("rmsdv").textContent = Number($("rmsd").value).toFixed(3);
  frames = null;
  $("frame").disabled = true;
  $("framev").textContent = "";
  try {
    pair = deformPair($("shape").value, Number($("count").value), Number($("seed").value), Number($("rmsd").value));
    $("status").textContent = "";
  } catch (e) {
    pair = null;
    $("status").textContent = String(e);
  }
  drawPair();
}

function showFrame() {
  const i = Number($("frame").value);
  const r = frames.rmse(i);
  $("framev").textContent = `${frames.label(i)}${Number.isNaN(r) ? "" : `, RMSE ${r.toExponential(2)}`}`;
  drawPair();
}

function register() {
  if (!pair) return;
  const t0 = performance.now();
  try {
    frames = registerFrames(pair.fixed, pair.moving, Number($("cap").value));
  } catch (e) {
    $("status").textContent = String(e);
    return;
  }
  const ms = performance.now() - t0;
  $("frame").max = frames.count - 1;
  $("frame").value = frames.count - 1;
  $("frame").disabled = false;
  $("status").textContent = `${frames.count - 1} stages in ${ms.toFixed(0)} ms, degree bound ${frames.degreeBound}`;
  showFrame();
}

await init();
for (const id of ["a1", "a2", "a3"]) $(id).addEventListener("input", drawGrid);
for (const id of ["shape", "count", "seed", "rmsd"]) $(id).addEventListener("change", makePair);
$("rmsd").addEventListener("input", () => ($("rmsdv").textContent = Number($("rmsd").value).toFixed(3)));
$("run").addEventListener("click", register);
$("frame").addEventListener("input", showFrame);
drawGrid();
makePair();
