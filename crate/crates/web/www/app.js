import init, { bimodalProfile, compareRetrieval, estimateCost, multiviewVote } from "./pkg/framesift_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function showError(el, err) {
  el.classList.add("error");
  el.textContent = String(err.message ?? err);
}

function drawRetrieval() {
  const n = num("n"), m = num("m"), g = num("g"), low = num("low");
  $("lowv").textContent = low.toFixed(2);
  const summary = $("summary");
  summary.classList.remove("error");
  let res;
  try {
    res = JSON.parse(compareRetrieval(bimodalProfile(n, low), m, g));
  } catch (e) {
    return showError(summary, e);
  }
  const cv = $("plot"), ctx = cv.getContext("2d");
  const W = cv.width, H = cv.height, pad = 24;
  const top = pad, base = H - 90;
  const x = (i) => pad + (i + 0.5) * (W - 2 * pad) / n;
  const y = (s) => base - s * (base - top);
  ctx.clearRect(0, 0, W, H);

  ctx.strokeStyle = "#ccc";
  ctx.lineWidth = 2;
  for (const b of res.boundaries) {
    const bx = (x(b - 1) + x(b)) / 2;
    ctx.beginPath(); ctx.moveTo(bx, top); ctx.lineTo(bx, base); ctx.stroke();
  }

  ctx.strokeStyle = "#999";
  ctx.lineWidth = 3;
  ctx.beginPath();
  res.scores.forEach((s, i) => (i ? ctx.lineTo(x(i), y(s)) : ctx.moveTo(x(i), y(s))));
  ctx.stroke();

  const ticks = (idx, row, color) => {
    ctx.fillStyle = color;
    for (const i of idx) ctx.fillRect(x(i) - 3, base + 14 + row * 34, 6, 26);
  };
  ticks(res.selected, 0, "#1f6fd1");
  ticks(res.top_k, 1, "#e07b00");

  const half = (idx) => idx.filter((i) => i >= n / 2).length;
  summary.textContent =
    `${res.boundaries.length + 1} groups. Frames taken from the second half of the video: ` +
    `grouped ${half(res.selected)} of ${res.selected.length}, Top-K ${half(res.top_k)} of ${res.top_k.length}.`;
}

function showCost() {
  const out = $("cost");
  out.classList.remove("error");
  const cfg = {
    n_candidates: num("c_n"),
    m_prefilter: num("c_pre"),
    m_retrieve: num("c_m"),
    g_prefilter: Math.min(52, num("c_pre")),
    g_retrieve: Math.min(26, num("c_m")),
    n_views: num("c_views"),
  };
  try {
    out.textContent = JSON.parse(estimateCost(JSON.stringify(cfg))).table;
  } catch (e) {
    showError(out, e);
  }
}

function showVote() {
  const answers = $("answers").value.split(",").map((s) => s.trim()).filter(Boolean);
  const r = JSON.parse(multiviewVote(answers, num("rounds")));
  $("vote").textContent =
    `rounds run: ${r.k} (${r.rounds.join(", ")})${r.early_stop ? ", stopped early" : ""}\n` +
    `final answer: ${r.final ?? "none"}`;
}

await init();
for (const id of ["n", "m", "g", "low"]) $(id).addEventListener("input", drawRetrieval);
for (const id of ["c_n", "c_pre", "c_m", "c_views"]) $(id).addEventListener("input", showCost);
for (const id of ["answers", "rounds"]) $(id).addEventListener("input", showVote);
drawRetrieval();
showCost();
showVote();
