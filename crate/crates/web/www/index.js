import init, { transfer_profile, adiabaticity, layer_scan, field_image } from "./pkg/slicer_web.js";

const $ = (id) => document.getElementById(id);

function plot(canvas, xs, ys, ymax = 1) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 30;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, 5, w - pad - 5, h - pad - 5);
  const x0 = xs[0], x1 = xs[xs.length - 1];
  const px = (x) => pad + ((x - x0) / (x1 - x0)) * (w - pad - 5);
  const py = (y) => h - pad - (y / ymax) * (h - pad - 5);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(x0.toFixed(1), pad, h - 12);
  ctx.fillText(x1.toFixed(1) + " kHz", w - 50, h - 12);
  ctx.fillText(ymax.toFixed(2), 2, 14);
  ctx.strokeStyle = "#1f77b4";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(ys[i])) : ctx.moveTo(px(x), py(ys[i]))));
  ctx.stroke();
}

function drawProfile() {
  const t = parseFloat($("dur").value);
  $("dur-val").textContent = `${t.toFixed(2)} ms`;
  const n = 241, span = 12;
  const p = transfer_profile(t, span, n);
  const xs = Array.from({ length: n }, (_, i) => -span + (2 * span * i) / (n - 1));
  plot($("profile"), xs, p);
  const neighbour = transfer_profile(t, 9.68, 2)[1];
  $("profile-out").textContent =
    `peak ${Math.max(...p).toFixed(4)}  p(next layer) ${neighbour.toExponential(2)}  adiabaticity ${adiabaticity(t).toFixed(3)}`;
}

function drawScan() {
  const s = layer_scan($("mode").value, 1.0, parseFloat($("frac").value), 61);
  const xs = [], ys = [];
  for (let i = 0; i < s.length; i += 2) { xs.push(s[i]); ys.push(s[i + 1]); }
  plot($("scan"), xs, ys, Math.max(1, ...ys));
}

function drawImage() {
  const im = field_image(parseFloat($("sx").value), 0, parseFloat($("shx").value), 0, 96);
  const n = im.pixels, f = im.fraction;
  const canvas = $("image"), ctx = canvas.getContext("2d");
  const data = ctx.createImageData(n, n);
  for (let iy = 0; iy < n; iy++) {
    for (let ix = 0; ix < n; ix++) {
      // Row 0 is the bottom of the field of view.
      const v = Math.round(255 * f[iy * n + ix]);
      const k = 4 * ((n - 1 - iy) * n + ix);
      data.data.set([v, v, v, 255], k);
    }
  }
  const tmp = new OffscreenCanvas(n, n);
  tmp.getContext("2d").putImageData(data, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
  const spacing = Number.isFinite(im.spacing) ? `${im.spacing.toFixed(1)} µm` : "n/a";
  $("image-out").textContent =
    `stray ${$("sx").value} µm, shim ${$("shx").value} G: ${im.stripes} stripe(s), spacing ${spacing}, orientation ${im.orientation.toFixed(0)}°`;
}

await init();
$("dur").addEventListener("input", drawProfile);
$("scan-run").addEventListener("click", drawScan);
$("sx").addEventListener("input", drawImage);
$("shx").addEventListener("input", drawImage);
drawProfile();
drawScan();
drawImage();
