import init, { access_curve, rank_sweep, ablation } from "./pkg/screc_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guard(out, f) {
  out.classList.remove("err");
  try {
    f();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

// Polyline of ys over xs on a canvas; each series is [xs, ys, colour].
function plot(canvas, series, { xMax = 1, yMax = 1, logY = false } = {}) {
  const g = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 30;
  g.clearRect(0, 0, w, h);
  g.strokeStyle = "#999";
  g.strokeRect(pad, 4, w - pad - 4, h - pad - 4);
  const lo = logY ? Math.log10(Math.min(...series.flatMap((s) => s[1]).filter((v) => v > 0), 1)) : 0;
  const hi = logY ? Math.log10(yMax) : yMax;
  const sy = (v) => (logY ? Math.log10(Math.max(v, 1e-12)) : v);
  for (const [xs, ys, colour] of series) {
    g.strokeStyle = colour;
    g.beginPath();
    xs.forEach((x, i) => {
      const px = pad + (x / xMax) * (w - pad - 4);
      const py = h - pad - ((sy(ys[i]) - lo) / (hi - lo || 1)) * (h - pad - 8);
      i ? g.lineTo(px, py) : g.moveTo(px, py);
    });
    g.stroke();
  }
}

function runCurve() {
  $("ac-alpha-v").textContent = $("ac-alpha").value;
  guard($("ac-out"), () => {
    const r = JSON.parse(access_curve(num("ac-alpha"), num("ac-rows"), 4000, 1));
    const xs = r.icdf.map((_, i) => i / r.step);
    plot($("ac-plot"), [[xs, r.icdf, "#1f77b4"], [[0, 1], [0, 1], "#ddd"]]);
    $("ac-out").textContent =
      `80% of lookups: ${(100 * r.rows_for_80).toFixed(3)}% of rows\n` +
      `99% of lookups: ${(100 * r.rows_for_99).toFixed(3)}% of rows`;
  });
}

function runSweep() {
  guard($("tt-out"), () => {
    const pts = JSON.parse(rank_sweep(num("tt-rows"), num("tt-dim"), num("tt-cores"), num("tt-rank")));
    const ranks = pts.map((p) => p.rank);
    plot($("tt-plot"), [[ranks, pts.map((p) => p.error), "#d62728"]], { xMax: ranks.at(-1), yMax: 1, logY: true });
    $("tt-out").textContent = pts
      .map((p) => `rank ${p.rank}: error ${p.error.toExponential(2)}, ${p.params} params, ${p.compression.toFixed(1)}x`)
      .join("\n");
  });
}

function runAblation() {
  guard($("ab-out"), () => {
    const levels = JSON.parse(ablation(num("ab-dram"), num("ab-dev"), num("ab-alpha")));
    const g = $("ab-plot").getContext("2d");
    const { width: w, height: h } = $("ab-plot");
    g.clearRect(0, 0, w, h);
    const top = Math.log10(levels[0].mean_latency_ns);
    levels.forEach((l, i) => {
      const bar = (Math.log10(l.mean_latency_ns) / top) * (w - 160);
      g.fillStyle = ["#7f7f7f", "#1f77b4", "#2ca02c"][i];
      g.fillRect(120, 20 + i * 60, bar, 36);
      g.fillStyle = "#222";
      g.fillText(["SSD", "DRAM+SSD", "DRAM+TT+SSD"][i], 8, 42 + i * 60);
    });
    $("ab-out").textContent = levels
      .map((l) => `level ${l.level}: ${l.mean_latency_ns.toExponential(3)} ns, ${l.speedup.toFixed(1)}x, lookups dram/tt/ssd ${l.tier_lookups.join("/")}`)
      .join("\n");
  });
}

await init();
$("ac-alpha").addEventListener("input", runCurve);
$("ac-run").addEventListener("click", runCurve);
$("tt-run").addEventListener("click", runSweep);
$("ab-run").addEventListener("click", runAblation);
runCurve();
runSweep();
runAblation();
