import init, { kernel_field, ParticleDemo, VortexDemo } from "./pkg/nexdiff_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const VIEW = 3; // half width of the particle and kernel views

function toCanvas(c, x, y) {
  return [(x / VIEW + 1) * c.width / 2, (1 - y / VIEW) * c.height / 2];
}

function drawKernel() {
  const c = $("kf"), ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  let f;
  try {
    f = kernel_field($("kf-family").value, num("kf-delta"), VIEW, 21);
  } catch (e) {
    ctx.fillText(String(e), 10, 20);
    return;
  }
  let big = 0;
  for (let i = 0; i < f.length; i += 4) big = Math.max(big, Math.hypot(f[i + 2], f[i + 3]));
  const scale = 14 / (big || 1);
  ctx.strokeStyle = "#246";
  for (let i = 0; i < f.length; i += 4) {
    const [px, py] = toCanvas(c, f[i], f[i + 1]);
    // log-compress so the singular core does not swamp the picture
    const mag = Math.hypot(f[i + 2], f[i + 3]);
    const s = mag > 0 ? scale * Math.log1p(mag / big * 50) / Math.log1p(50) * big / mag : 0;
    ctx.beginPath();
    ctx.moveTo(px, py);
    ctx.lineTo(px + s * f[i + 2], py - s * f[i + 3]);
    ctx.stroke();
  }
}

let particles = null, pTimer = null;

function resetParticles() {
  stop("p");
  try {
    particles = new ParticleDemo(num("p-n"), BigInt(num("p-seed")), "biot_savart", 0.1, num("p-a1"), num("p-a2"));
  } catch (e) {
    $("p-info").textContent = String(e);
    particles = null;
    return;
  }
  drawParticles();
}

function drawParticles() {
  const c = $("p"), ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const x = particles.positions(), w = particles.weights();
  for (let i = 0; i < w.length; i++) {
    const [px, py] = toCanvas(c, x[2 * i], x[2 * i + 1]);
    ctx.fillStyle = w[i] >= 0 ? "#c33" : "#33c";
    ctx.fillRect(px - 1.5, py - 1.5, 3, 3);
  }
  $("p-info").textContent = `t = ${particles.time().toFixed(2)}  weighted <|x|^2> = ${particles.weighted_second_moment().toFixed(4)}`;
}

let vortex = null, vTimer = null;

function resetVortex() {
  stop("v");
  try {
    vortex = new VortexDemo(64, 6, num("v-gamma"), 0.25);
  } catch (e) {
    $("v-info").textContent = String(e);
    vortex = null;
    return;
  }
  drawVortex();
}

function drawVortex() {
  const c = $("v"), ctx = c.getContext("2d");
  const m = 64, g = vortex.tracer(), v = vortex.vorticity();
  let gmax = 0, vmax = 0;
  for (let i = 0; i < g.length; i++) { gmax = Math.max(gmax, g[i]); vmax = Math.max(vmax, Math.abs(v[i])); }
  const img = ctx.createImageData(m, m);
  for (let b = 0; b < m; b++) {
    for (let a = 0; a < m; a++) {
      const src = b * m + a, dst = 4 * ((m - 1 - b) * m + a);
      img.data[dst] = 255 * Math.max(0, g[src]) / (gmax || 1);
      img.data[dst + 1] = 40;
      img.data[dst + 2] = 255 * Math.abs(v[src]) / (vmax || 1);
      img.data[dst + 3] = 255;
    }
  }
  const tmp = new OffscreenCanvas(m, m);
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, c.width, c.height);
  $("v-info").textContent = `t = ${vortex.time().toFixed(2)}  tracer mass = ${vortex.tracer_mass().toFixed(6)}  Oseen error = ${vortex.oseen_error().toExponential(2)}`;
}

function stop(which) {
  if (which === "p" && pTimer) { clearInterval(pTimer); pTimer = null; $("p-run").textContent = "run"; }
  if (which === "v" && vTimer) { clearInterval(vTimer); vTimer = null; $("v-run").textContent = "run"; }
}

function toggle(which) {
  if (which === "p") {
    if (pTimer) return stop("p");
    if (!particles) return;
    $("p-run").textContent = "pause";
    pTimer = setInterval(() => {
      try { particles.advance(0.005, 2); drawParticles(); } catch (e) { $("p-info").textContent = String(e); stop("p"); }
    }, 30);
  } else {
    if (vTimer) return stop("v");
    if (!vortex) return;
    $("v-run").textContent = "pause";
    vTimer = setInterval(() => {
      try { vortex.advance(0.005, 2); drawVortex(); } catch (e) { $("v-info").textContent = String(e); stop("v"); }
    }, 30);
  }
}

await init();
$("kf-family").onchange = drawKernel;
$("kf-delta").oninput = drawKernel;
$("p-reset").onclick = resetParticles;
$("p-run").onclick = () => toggle("p");
$("v-reset").onclick = resetVortex;
$("v-run").onclick = () => toggle("v");
drawKernel();
resetParticles();
resetVortex();
