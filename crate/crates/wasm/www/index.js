import init, { attention_scores, ranking_score, label_words } from "./pkg/mtpath_wasm.js";

const $ = (id) => document.getElementById(id);

function numbers(text) {
  return text.split(",").map((s) => s.trim()).filter((s) => s.length > 0).map(Number);
}

function show(out, result) {
  out.classList.toggle("error", "error" in result);
  out.textContent = JSON.stringify(result, null, 2);
}

function runAttention() {
  const request = {
    query: numbers($("attn-query").value),
    references: $("attn-refs").value.split("\n").map(numbers).filter((r) => r.length > 0),
    k: Number($("attn-k").value),
  };
  const result = JSON.parse(attention_scores(JSON.stringify(request)));
  show($("attn-out"), result);
  const bars = $("attn-bars");
  bars.replaceChildren();
  for (const m of result.normalized ?? []) {
    const bar = document.createElement("div");
    bar.style.height = `${Math.max(2, m * 80)}px`;
    bar.title = m.toFixed(3);
    bars.append(bar);
  }
}

function runRanking() {
  const request = { scores: numbers($("rank-scores").value), labels: numbers($("rank-labels").value) };
  show($("rank-out"), JSON.parse(ranking_score(JSON.stringify(request))));
}

function runSegmentation() {
  const result = JSON.parse(label_words($("seg-text").value, $("seg-han").checked));
  const words = $("seg-words");
  words.replaceChildren();
  for (const w of result.words ?? []) {
    const chip = document.createElement("span");
    chip.textContent = w.text;
    chip.title = `word ${w.index}, chars ${w.start}..${w.end}`;
    if (w.label) chip.classList.add("bad");
    words.append(chip);
  }
  show($("seg-out"), result);
}

await init();
$("status").textContent = "Ready.";
$("attn-run").addEventListener("click", runAttention);
$("rank-run").addEventListener("click", runRanking);
$("seg-run").addEventListener("click", runSegmentation);
runAttention();
runRanking();
runSegmentation();
