#include "dstreamon/controller/http_api.hpp"

namespace dstreamon::controller {

std::string_view builtin_dashboard_html() {
  static constexpr std::string_view kPage = R"HTML(<!doctype html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>D-StreaMon</title>
<style>
  body { font-family: system-ui, sans-serif; margin: 1.5rem; color: #222; }
  h1 { font-size: 1.3rem; } h2 { font-size: 1.05rem; margin-top: 1.5rem; }
  table { border-collapse: collapse; } td, th { padding: .25rem .6rem; border-bottom: 1px solid #ddd; text-align: left; }
  .badge { padding: .1rem .4rem; border-radius: .3rem; background: #eee; }
  .running { background: #cdeccd; } .failed { background: #f6c9c9; } .stopped { background: #e4e4f4; }
  #console { height: 22rem; overflow-y: auto; background: #111; color: #ddd; font: 12px monospace; padding: .4rem; }
  .alert { color: #ff6b6b; } .warning { color: #ffd166; } .info { color: #8ecae6; } .log { color: #aaa; }
  #msg { color: #b00; }
</style>
</head>
<body>
<h1>D-StreaMon controller</h1>
<div id="msg"></div>
<h2>Probes</h2>
<table id="probes"><thead><tr><th>id</th><th>host</th><th>state</th><th>program</th><th>packets</th><th>events</th><th>actions</th></tr></thead><tbody></tbody></table>
<p>
  <input id="newid" placeholder="probe id"> <button onclick="addProbe()">add probe</button>
  &nbsp; install: <select id="cfg"></select> <input id="src" placeholder="pcap path or tcp://host:port" size="32">
</p>
<h2>Configs</h2>
<p><input type="file" id="dsl"> <button onclick="upload()">upload</button></p>
<table id="configs"><thead><tr><th>program</th><th>version</th><th>checksum</th></tr></thead><tbody></tbody></table>
<h2>Events</h2>
<p>prefix <input id="prefix" value="" onchange="connect()"> <button id="pause" onclick="togglePause()">pause</button></p>
<div id="console"></div>
<script>
const EDGES = { install: ["registered"], start: ["installed", "stopped"], stop: ["running"],
                remove: ["installed", "running", "stopped", "failed"] };
const RING = 1000;
let paused = false, held = [], rows = [], ctrl = null;

function esc(s) { return String(s).replace(/[&<>"]/g, c => ({"&":"&amp;","<":"&lt;",">":"&gt;",'"':"&quot;"})[c]); }
function show(m) { document.getElementById("msg").textContent = m || ""; }

async function api(method, path, body) {
  const opt = { method };
  if (body !== undefined) opt.body = typeof body === "string" ? body : JSON.stringify(body);
  const r = await fetch(path, opt);
  const j = await r.json().catch(() => ({}));
  if (!r.ok) throw new Error(j.error || (j.errors || []).map(e => e.path + ": " + e.message).join("; ") || r.status);
  return j;
}

async function act(id, cmd) {
  try {
    if (cmd === "install") {
      const [program_id, version] = document.getElementById("cfg").value.split("@");
      const source = document.getElementById("src").value;
      const mode = source.startsWith("tcp://") ? "mirrored" : "direct";
      await api("POST", `/api/probes/${id}/install`, { program_id, version: +version, attach: { mode, source } });
    } else if (cmd === "remove") {
      await api("DELETE", `/api/probes/${id}`);
    } else {
      await api("POST", `/api/probes/${id}/${cmd}`);
    }
    show("");
  } catch (e) { show(e.message); }
  refresh();
}

async function addProbe() {
  try { await api("POST", "/api/probes", { probe_id: document.getElementById("newid").value }); show(""); }
  catch (e) { show(e.message); }
  refresh();
}

async function upload() {
  const f = document.getElementById("dsl").files[0];
  if (!f) return;
  try { await api("POST", "/api/configs", await f.text()); show(""); } catch (e) { show(e.message); }
  refresh();
}

async function refresh() {
  try {
    const probes = await api("GET", "/api/probes");
    document.querySelector("#probes tbody").innerHTML = probes.map(p => {
      const st = p.last_status || {};
      const buttons = Object.keys(EDGES).map(c =>
        `<button ${EDGES[c].includes(p.lifecycle) ? "" : "disabled"} onclick="act('${esc(p.probe_id)}','${c}')">${c}</button>`).join(" ");
      return `<tr><td>${esc(p.probe_id)}</td><td>${esc(p.host_label)}</td>
        <td><span class="badge ${p.lifecycle}" title="${esc(p.reason)}">${p.lifecycle}</span></td>
        <td>${p.artifact ? esc(p.artifact.program_id + " v" + p.artifact.version) : ""}</td>
        <td>${st.packets_processed ?? ""}</td><td>${st.events_published ?? ""}</td><td>${buttons}</td></tr>`;
    }).join("");
    const configs = await api("GET", "/api/configs");
    document.querySelector("#configs tbody").innerHTML = configs.map(c =>
      `<tr><td>${esc(c.program_id)}</td><td>${c.version}</td><td>${c.checksum.toString(16).padStart(8, "0")}</td></tr>`).join("");
    const sel = document.getElementById("cfg"), keep = sel.value;
    sel.innerHTML = configs.map(c => `<option>${esc(c.program_id)}@${c.version}</option>`).join("");
    if (keep) sel.value = keep;
  } catch (e) { show(e.message); }
}

function render() {
  const el = document.getElementById("console");
  el.innerHTML = rows.map(r => {
    const sev = (r.topic.split("/")[2] || "");
    return `<div class="${esc(sev)}">${r.offset} ${esc(r.topic)} ${esc(r.payload)}</div>`;
  }).join("");
  el.scrollTop = el.scrollHeight;
}

function accept(rec) {
  if (paused) { held.push(rec); if (held.length > RING) held.shift(); return; }
  rows.push(rec); if (rows.length > RING) rows.shift();
  render();
}

function togglePause() {
  paused = !paused;
  document.getElementById("pause").textContent = paused ? "resume" : "pause";
  if (!paused) { const h = held; held = []; h.forEach(accept); }
}

async function connect() {
  if (ctrl) ctrl.abort();
  ctrl = new AbortController();
  rows = []; held = []; render();
  const prefix = encodeURIComponent(document.getElementById("prefix").value);
  try {
    const r = await fetch(`/api/events/stream?prefix=${prefix}`, { signal: ctrl.signal });
    const reader = r.body.getReader(), dec = new TextDecoder();
    let buf = "";
    for (;;) {
      const { value, done } = await reader.read();
      if (done) break;
      buf += dec.decode(value, { stream: true });
      let nl;
      while ((nl = buf.indexOf("\n")) >= 0) {
        const line = buf.slice(0, nl); buf = buf.slice(nl + 1);
        if (line.trim()) accept(JSON.parse(line));
      }
    }
  } catch (e) { if (e.name !== "AbortError") show("event stream: " + e.message); }
}

refresh(); setInterval(refresh, 2000); connect();
</script>
</body>
</html>
)HTML";
  return kPage;
}

}  // namespace dstreamon::controller
