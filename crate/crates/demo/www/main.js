import init, { tdcCurve, linearConvergence, echoPath } from "./pkg/echoforge_demo.js";

const BETAS = [[0.2, "#1f6fb4"], [1.0, "#d9822b"], [2.0, "#2a9d4b"]];
const $ = (id) => document.getElementById(id);

function plot(canvas, series, { yMin, yMax, stem = false, marker = null } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => Array.from(s.data));
  const lo = yMin ?? Math.min(...all);
  const hi = yMax ?? Math.max(...all);
  const n = Math.max(...series.map((s) => s.data.length));
  const x = (i) => 30 + (i / Math.max(n - 1, 1)) * (w - 40);
  const y = (v) => h - 20 - ((v - lo) / (hi - lo || 1)) * (h - 30);

  ctx.strokeStyle = "#bbb";
  ctx.beginPath();
  ctx.moveTo(30, y(Math.max(lo, Math.min(hi, 0))));
  ctx.lineTo(w - 10, y(Math.max(lo, Math.min(hi, 0))));
  ctx.stroke();
  ctx.fillStyle = "#666";
  ctx.fillText(hi.toFixed(2), 2, 12);
  ctx.fillText(lo.toFixed(2), 2, h - 22);

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.data.forEach((v, i) => {
      if (stem) {
        ctx.moveTo(x(i), y(0));
        ctx.lineTo(x(i), y(v));
      } else if (i === 0) {
        ctx.moveTo(x(i), y(v));
      } else {
        ctx.lineTo(x(i), y(v));
      }
    });
    ctx.stroke();
  }
  if (marker !== null) {
    ctx.strokeStyle = "#c00";
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(x(marker), 10);
    ctx.lineTo(x(marker), h - 20);
    ctx.stroke();
    ctx.setLineDash([]);
  }
}

function drawTdc() {
  const delay = +$("delay").value;
  const enr = +$("enr").value;
  $("delay-v").textContent = `${delay} samples`;
  $("enr-v").textContent = enr;
  const out = tdcCurve(delay, enr, 7);
  const [tau, conf] = out;
  const curve = out.subarray(2);
  $("tdc-result").textContent = `${tau} samples (${(tau / 16).toFixed(2)} ms), confidence ${conf.toFixed(2)}`;
  plot($("tdc"), [{ data: curve, color: "#333" }], { marker: tau });
}

function drawConv() {
  const secs = +$("secs").value;
  const dt = $("dt").checked;
  $("secs-v").textContent = secs;
  const series = BETAS.map(([beta, color]) => ({ data: linearConvergence(beta, secs, dt, 3), color }));
  $("legend").innerHTML = BETAS.map(([b, c]) => `<span style="color:${c}">&#9632; beta ${b}</span>`).join("");
  plot($("conv"), series, { yMin: 0, yMax: 50, marker: dt ? (series[0].data.length - 1) / 2 : null });
}

function drawRir() {
  const rt60 = +$("rt60").value;
  $("rt60-v").textContent = rt60;
  const h = echoPath(rt60, 1600, +$("seed").value);
  plot($("rir"), [{ data: h, color: "#333" }], { stem: true });
}

await init();
for (const id of ["delay", "enr"]) $(id).addEventListener("input", drawTdc);
for (const id of ["secs", "dt"]) $(id).addEventListener("input", drawConv);
for (const id of ["rt60", "seed"]) $(id).addEventListener("input", drawRir);
drawTdc();
drawConv();
drawRir();
