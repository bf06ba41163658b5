// Build the bindings first: wasm-pack build crates/web --target web --out-dir www/pkg
import init, { rotationView, cosineSchedule, runBenchmark } from "./pkg/efcil_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = { finetune: "#c0392b", featstar: "#2c7fb8", rad: "#27ae60" };

function drawImage(canvas, pixels, side) {
  const ctx = canvas.getContext("2d");
  const lo = Math.min(...pixels), hi = Math.max(...pixels);
  const cell = canvas.width / side;
  for (let i = 0; i < side; i++) {
    for (let j = 0; j < side; j++) {
      const v = Math.round(255 * (pixels[i * side + j] - lo) / (hi - lo || 1));
      ctx.fillStyle = `rgb(${v},${v},${v})`;
      ctx.fillRect(j * cell, i * cell, cell, cell);
    }
  }
}

function drawLines(canvas, series, yMax) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 30;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, 5); ctx.lineTo(pad, h - pad); ctx.lineTo(w - 5, h - pad);
  ctx.stroke();
  ctx.fillStyle = "#666";
  ctx.fillText(yMax.toString(), 2, 12);
  ctx.fillText("0", 18, h - pad);
  for (const { values, color, label } of series) {
    const n = values.length;
    const x = (i) => pad + (n > 1 ? i / (n - 1) : 0.5) * (w - pad - 10);
    const y = (v) => h - pad - (v / yMax) * (h - pad - 10);
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    values.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
    ctx.stroke();
    if (label) {
      ctx.fillStyle = color;
      ctx.fillText(label, x(n - 1) - 50, y(values[n - 1]) - 6);
    }
  }
}

function updateRotation() {
  try {
    const v = JSON.parse(rotationView(BigInt($("rot-seed").value), 8,
      Number($("rot-class").value), Number($("rot-deg").value), Number($("rot-n").value)));
    drawImage($("rot-a"), v.template, v.side);
    drawImage($("rot-b"), v.rotated, v.side);
    $("rot-label").textContent = `extended label ${v.extended_label}`;
  } catch (e) {
    $("rot-label").textContent = String(e);
  }
}

function updateSchedule() {
  try {
    const lr0 = Number($("lr0").value);
    const values = Array.from(cosineSchedule(lr0, Number($("epochs").value)));
    drawLines($("lr"), [{ values, color: "#333" }], lr0);
  } catch (e) {
    console.error(e);
  }
}

function fmt(v) {
  return v === null || v === undefined ? "-" : v.toFixed(3);
}

function runBench() {
  $("status").textContent = "running...";
  // let the status repaint before the synchronous run
  setTimeout(() => {
    try {
      const cfg = {
        protocol: $("bench-protocol").value,
        seed: Number($("bench-seed").value),
        train: { alpha: Number($("bench-alpha").value), beta: Number($("bench-beta").value) },
      };
      const t0 = performance.now();
      const result = JSON.parse(runBenchmark(JSON.stringify(cfg)));
      drawLines($("curve"), result.strategies.map((s) => ({
        values: s.step_acc, color: COLORS[s.strategy], label: s.strategy,
      })), 1);
      $("bench-table").innerHTML =
        "<tr><th>strategy</th><th>avg acc ↑</th><th>F ↓</th><th>I ↓</th></tr>" +
        result.strategies.map((s) =>
          `<tr><td style="color:${COLORS[s.strategy]}">${s.strategy}</td><td>${fmt(s.avg_acc)}</td>` +
          `<td>${fmt(s.final_forgetting)}</td><td>${fmt(s.final_intransigence)}</td></tr>`).join("");
      $("status").textContent = `done in ${((performance.now() - t0) / 1000).toFixed(1)} s`;
    } catch (e) {
      $("status").textContent = String(e);
    }
  }, 20);
}

await init();
for (const id of ["rot-seed", "rot-class", "rot-n", "rot-deg"]) $(id).addEventListener("input", updateRotation);
for (const id of ["lr0", "epochs"]) $(id).addEventListener("input", updateSchedule);
$("bench-run").addEventListener("click", runBench);
updateRotation();
updateSchedule();
