import init, { simulate, project, masks } from "./pkg/danl_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

function guard(errId, f) {
  $(errId).textContent = "";
  try {
    f();
  } catch (e) {
    $(errId).textContent = String(e);
  }
}

// Gap curves on a log axis; each run is kept until cleared.
const curves = [];

function drawCurves() {
  const c = $("s-canvas");
  const g = c.getContext("2d");
  const pad = { l: 56, r: 12, t: 10, b: 28 };
  const w = c.width - pad.l - pad.r;
  const h = c.height - pad.t - pad.b;
  g.clearRect(0, 0, c.width, c.height);
  if (curves.length === 0) return;
  const floor = 1e-16;
  const maxT = Math.max(...curves.map((k) => k.gaps.length - 1), 1);
  const logs = curves.flatMap((k) => k.gaps.map((v) => Math.log10(Math.max(v, floor))));
  const hi = Math.ceil(Math.max(...logs));
  const lo = Math.floor(Math.min(...logs));
  const x = (t) => pad.l + (t / maxT) * w;
  const y = (v) => pad.t + ((hi - Math.log10(Math.max(v, floor))) / Math.max(hi - lo, 1)) * h;

  g.strokeStyle = "#eee";
  g.fillStyle = "#555";
  g.font = "11px system-ui";
  for (let e = lo; e <= hi; e++) {
    const yy = pad.t + ((hi - e) / Math.max(hi - lo, 1)) * h;
    g.beginPath();
    g.moveTo(pad.l, yy);
    g.lineTo(pad.l + w, yy);
    g.stroke();
    g.fillText(`1e${e}`, 4, yy + 4);
  }
  g.fillText("0", pad.l, c.height - 8);
  g.fillText(String(maxT), pad.l + w - 20, c.height - 8);
  g.fillText("round", pad.l + w / 2, c.height - 8);

  curves.forEach((k, n) => {
    g.strokeStyle = COLORS[n % COLORS.length];
    g.lineWidth = 1.5;
    g.beginPath();
    k.gaps.forEach((v, t) => (t === 0 ? g.moveTo(x(t), y(v)) : g.lineTo(x(t), y(v))));
    g.stroke();
    g.fillStyle = g.strokeStyle;
    g.fillText(k.label, pad.l + w - 180, pad.t + 14 + 14 * n);
  });
}

function runSimulation() {
  const req = {
    dim: num("s-dim"),
    samples: num("s-samples"),
    workers: num("s-workers"),
    regions: num("s-regions"),
    rounds: num("s-rounds"),
    psi_min: num("s-psi"),
    s_min: num("s-s"),
    gamma_max: num("s-gamma"),
    seed: num("s-seed"),
    covering: $("s-covering").checked,
  };
  const t0 = performance.now();
  const out = JSON.parse(simulate(JSON.stringify(req)));
  const ms = performance.now() - t0;
  const g = req.gamma_max > 0 ? req.gamma_max : "inf";
  curves.push({ gaps: out.gaps, label: `psi ${req.psi_min} s ${req.s_min} g ${g}${req.covering ? " cov" : ""}` });
  drawCurves();
  const last = out.gaps[out.gaps.length - 1];
  $("s-info").textContent =
    `f* = ${out.f_star.toExponential(6)}  mu = ${out.mu.toExponential(3)}  ` +
    `final gap = ${last.toExponential(3)}  max gamma = ${Math.max(0, ...out.gamma)}  (${ms.toFixed(0)} ms)`;
}

// Unit circle mapped through a 2x2 symmetric matrix, drawn as an ellipse.
function drawEllipse(g, m, scale, cx, cy, color) {
  g.strokeStyle = color;
  g.lineWidth = 2;
  g.beginPath();
  for (let k = 0; k <= 128; k++) {
    const a = (2 * Math.PI * k) / 128;
    const u = Math.cos(a);
    const v = Math.sin(a);
    const px = cx + scale * (m[0] * u + m[1] * v);
    const py = cy - scale * (m[2] * u + m[3] * v);
    k === 0 ? g.moveTo(px, py) : g.lineTo(px, py);
  }
  g.stroke();
}

function runProjection() {
  const out = JSON.parse(project(num("p-a11"), num("p-a12"), num("p-a22"), num("p-mu")));
  const c = $("p-canvas");
  const g = c.getContext("2d");
  const cx = c.width / 2;
  const cy = c.height / 2;
  const reach = Math.max(1, ...out.eigenvalues.map(Math.abs), ...out.projected_eigenvalues);
  const scale = (0.45 * c.width) / reach;
  g.clearRect(0, 0, c.width, c.height);
  g.strokeStyle = "#ddd";
  g.beginPath();
  g.moveTo(0, cy);
  g.lineTo(c.width, cy);
  g.moveTo(cx, 0);
  g.lineTo(cx, c.height);
  g.stroke();
  g.setLineDash([4, 4]);
  drawEllipse(g, [num("p-mu"), 0, 0, num("p-mu")], scale, cx, cy, "#999");
  g.setLineDash([]);
  drawEllipse(g, out.input, scale, cx, cy, "#d62728");
  drawEllipse(g, out.projected, scale, cx, cy, "#1f77b4");
  out.eigenvectors.forEach((v) => {
    g.strokeStyle = "#bbb";
    g.beginPath();
    g.moveTo(cx - scale * reach * v[0], cy + scale * reach * v[1]);
    g.lineTo(cx + scale * reach * v[0], cy - scale * reach * v[1]);
    g.stroke();
  });
  const f = (a) => a.map((v) => v.toFixed(3)).join(", ");
  $("p-info").textContent =
    `input     [${f(out.input)}]  eigenvalues ${f(out.eigenvalues)}  (red)\n` +
    `projected [${f(out.projected)}]  eigenvalues ${f(out.projected_eigenvalues)}  (blue)\n` +
    `dashed circle: radius mu`;
}

// Rows are (worker, region) pairs, columns are rounds.
function runMasks() {
  const workers = num("m-workers");
  const regions = num("m-regions");
  const out = JSON.parse(
    masks(workers, regions, num("m-psi"), num("m-s"), num("m-gamma"), num("m-rounds"), BigInt(num("m-seed"))),
  );
  const c = $("m-canvas");
  const g = c.getContext("2d");
  const rows = workers * regions;
  const cols = out.trained.length;
  const cw = c.width / cols;
  const rh = c.height / rows;
  g.clearRect(0, 0, c.width, c.height);
  out.trained.forEach((round, t) => {
    round.forEach((rs, i) => {
      rs.forEach((on, q) => {
        g.fillStyle = on ? COLORS[q % COLORS.length] : "#f4f4f4";
        g.fillRect(t * cw, (i * regions + q) * rh, Math.max(cw - 0.5, 0.5), Math.max(rh - 0.5, 0.5));
      });
    });
  });
  g.strokeStyle = "#888";
  for (let i = 1; i < workers; i++) {
    g.beginPath();
    g.moveTo(0, i * regions * rh);
    g.lineTo(c.width, i * regions * rh);
    g.stroke();
  }
  $("m-info").textContent =
    `rows: worker-major, one row per region; columns: rounds 1..${cols}\n` +
    `psi* = ${out.psi_star}  s* = ${out.s_star}  max gamma = ${Math.max(0, ...out.gamma)}`;
}

await init();
$("s-run").onclick = () => guard("s-err", runSimulation);
$("s-clear").onclick = () => {
  curves.length = 0;
  drawCurves();
};
for (const id of ["p-a11", "p-a12", "p-a22", "p-mu"]) $(id).oninput = () => guard("p-err", runProjection);
$("m-run").onclick = () => guard("m-err", runMasks);
guard("p-err", runProjection);
guard("m-err", runMasks);
