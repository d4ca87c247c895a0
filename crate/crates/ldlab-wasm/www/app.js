// Vanilla glue for the three demo panels. The wasm module is produced by
// build-demo.sh into ./pkg; every export returns a JSON string.

let wasm = null;

async function boot() {
  try {
    wasm = await import("./pkg/ldlab_wasm.js");
    await wasm.default();
  } catch (err) {
    const box = document.getElementById("boot-error");
    box.style.display = "block";
    box.innerHTML =
      "Could not load the wasm module (<code>" + String(err) + "</code>). " +
      "Build it first: run <code>./build-demo.sh</code> in " +
      "<code>crates/ldlab-wasm/</code>, then serve this directory, e.g. " +
      "<code>python3 -m http.server -d www</code>.";
    return;
  }
  wireLln();
  wireSteer();
  wireCheck();
  runLln();
  runSteer();
  runCheck();
}

// ---- shared drawing helpers ----

function ctx2d(id) {
  const canvas = document.getElementById(id);
  const g = canvas.getContext("2d");
  g.clearRect(0, 0, canvas.width, canvas.height);
  return [g, canvas.width, canvas.height];
}

function scale(domain, range) {
  const [d0, d1] = domain, [r0, r1] = range;
  const k = (r1 - r0) / (d1 - d0);
  return (v) => r0 + (v - d0) * k;
}

function drawAxes(g, W, H, pad, yLo, yHi) {
  g.strokeStyle = "#2a3342";
  g.lineWidth = 1;
  g.beginPath();
  g.moveTo(pad, 8); g.lineTo(pad, H - pad); g.lineTo(W - 8, H - pad);
  g.stroke();
  g.fillStyle = "#8a94a3";
  g.font = "11px system-ui";
  g.fillText(yHi.toFixed(1), 4, 16);
  g.fillText(yLo.toFixed(1), 4, H - pad + 4);
  g.fillText("t = 0", pad, H - 6);
  g.fillText("t = 1", W - 36, H - 6);
}

function drawPath(g, W, H, pad, t, y, yLo, yHi, color) {
  const sx = scale([0, 1], [pad, W - 8]);
  const sy = scale([yLo, yHi], [H - pad, 8]);
  g.strokeStyle = color;
  g.lineWidth = 1.2;
  g.beginPath();
  for (let i = 0; i < t.length; i++) {
    const X = sx(t[i]), Y = sy(Math.max(yLo, Math.min(yHi, y[i])));
    if (i === 0) g.moveTo(X, Y); else g.lineTo(X, Y);
  }
  g.stroke();
}

// Occupation bars grow leftward from the right edge: weight on the
// horizontal, state on the vertical, sharing the path's y-axis.
function drawMeasureBars(g, W, H, pad, atoms, yLo, yHi, color) {
  const sy = scale([yLo, yHi], [H - pad, 8]);
  const wMax = Math.max(...atoms.map((a) => a[1]), 1e-12);
  const span = 110;
  g.fillStyle = color;
  for (const [loc, w] of atoms) {
    if (loc < yLo || loc > yHi) continue;
    const len = (w / wMax) * span;
    g.fillRect(W - 8 - len, sy(loc) - 1.5, len, 3);
  }
  g.fillStyle = "#8a94a3";
  g.font = "11px system-ui";
  g.fillText("occupation", W - 86, 16);
}

function fail(statsId, data) {
  document.getElementById(statsId).innerHTML =
    '<span style="color:#ff7a76">' + data.error + "</span>";
}

// ---- LLN panel ----

function wireLln() {
  const seed = document.getElementById("lln-seed");
  seed.oninput = () => (document.getElementById("lln-seed-val").textContent = seed.value);
  document.getElementById("lln-go").onclick = runLln;
  document.getElementById("lln-eps").onchange = runLln;
  seed.onchange = runLln;
}

function runLln() {
  const eps = parseFloat(document.getElementById("lln-eps").value);
  const seed = parseInt(document.getElementById("lln-seed").value, 10);
  const data = JSON.parse(wasm.lln_run(eps, seed));
  if (data.error) return fail("lln-stats", data);
  const [g, W, H] = ctx2d("lln-canvas");
  const pad = 34;
  const lo = -1.6, hi = 1.6;
  drawAxes(g, W, H, pad, lo, hi);
  drawPath(g, W, H, pad, data.path.t, data.path.y, lo, hi, "#5fb4ff");
  drawMeasureBars(g, W, H, pad, data.occupation, lo, hi, "#69d58c");
  document.getElementById("lln-stats").innerHTML =
    `<span>noise s(ε) = <b>${data.s.toFixed(3)}</b></span>` +
    `<span>steps = <b>${data.steps}</b></span>` +
    `<span>d_bl(μ, δ₀) = <b>${data.dbl_to_origin.toFixed(4)}</b></span>`;
}

// ---- steering panel ----

function wireSteer() {
  for (const [id, out, fmt] of [
    ["steer-x1", "steer-x1-val", (v) => (+v).toFixed(1)],
    ["steer-x2", "steer-x2-val", (v) => (+v).toFixed(1)],
    ["steer-w", "steer-w-val", (v) => (+v).toFixed(2)],
    ["steer-seed", "steer-seed-val", (v) => v],
  ]) {
    const el = document.getElementById(id);
    el.oninput = () => (document.getElementById(out).textContent = fmt(el.value));
    el.onchange = runSteer;
  }
  document.getElementById("steer-go").onclick = runSteer;
  document.getElementById("steer-eps").onchange = runSteer;
}

function runSteer() {
  const eps = parseFloat(document.getElementById("steer-eps").value);
  const seed = parseInt(document.getElementById("steer-seed").value, 10);
  const x1 = parseFloat(document.getElementById("steer-x1").value);
  const x2 = parseFloat(document.getElementById("steer-x2").value);
  const w = parseFloat(document.getElementById("steer-w").value);
  const data = JSON.parse(wasm.steer_demo(eps, seed, x1, w, x2));
  if (data.error) return fail("steer-stats", data);
  const [g, W, H] = ctx2d("steer-canvas");
  const pad = 34;
  const lo = Math.min(x1, -0.2) - 0.6, hi = Math.max(x2, 0.2) + 0.6;
  drawAxes(g, W, H, pad, lo, hi);
  // Shade hold windows and mark the scheduled atom levels.
  const sx = scale([0, 1], [pad, W - 8]);
  const sy = scale([lo, hi], [H - pad, 8]);
  for (const seg of data.segments) {
    if (seg.kind !== "Hold") continue;
    g.fillStyle = "rgba(255,180,95,0.08)";
    g.fillRect(sx(seg.start), 8, sx(seg.end) - sx(seg.start), H - pad - 8);
    g.strokeStyle = "rgba(255,180,95,0.6)";
    g.setLineDash([4, 4]);
    g.beginPath();
    g.moveTo(sx(seg.start), sy(seg.atom));
    g.lineTo(sx(seg.end), sy(seg.atom));
    g.stroke();
    g.setLineDash([]);
  }
  drawPath(g, W, H, pad, data.path.t, data.path.y, lo, hi, "#5fb4ff");
  drawMeasureBars(g, W, H, pad, data.measure, lo, hi, "#69d58c");
  document.getElementById("steer-stats").innerHTML =
    `<span>cost ½∫‖v‖² = <b>${data.cost.toFixed(4)}</b></span>` +
    `<span>travel part = <b>${data.travel_cost.toFixed(4)}</b></span>` +
    `<span>d_bl(μ, target) = <b>${data.dbl_to_target.toFixed(4)}</b></span>` +
    `<span>steps = <b>${data.steps}</b></span>`;
}

// ---- checker panel ----

function wireCheck() {
  document.getElementById("check-go").onclick = runCheck;
  document.getElementById("check-model").onchange = runCheck;
}

function runCheck() {
  const model = document.getElementById("check-model").value;
  const data = JSON.parse(wasm.check_demo(model));
  const box = document.getElementById("check-result");
  if (data.error) {
    box.innerHTML = '<p style="color:#ff7a76">' + data.error + "</p>";
    return;
  }
  const rows = data.clauses
    .map(
      (c) =>
        `<tr><td>${c.name}</td>` +
        `<td class="${c.status === "Fail" ? "fail" : "pass"}">${c.status}</td>` +
        `<td style="color:#8a94a3">${c.detail}</td></tr>`
    )
    .join("");
  box.innerHTML =
    `<p>overall: <b class="${data.passed ? "pass" : "fail"}" style="color:${
      data.passed ? "#69d58c" : "#ff7a76"
    }">${data.passed ? "all clauses pass" : "some clauses fail"}</b></p>` +
    `<table><tr><th>clause</th><th>status</th><th>detail</th></tr>${rows}</table>`;
}

boot();
